#!/usr/bin/env python3
"""Convert the UCI agaricus-lepiota table into a LIBSVM-format file.

Every categorical attribute is one-hot encoded over the values that occur in
the data (value order as listed in the UCI attribute description), giving 22
nonzeros per row. Edible mushrooms are labelled +1, poisonous ones -1.

usage: make_mushrooms.py agaricus-lepiota.data > data/mushrooms
"""
import sys

# Attribute value codes in UCI documentation order.
ATTRIBUTES = [
    "bcxfks", "fgys", "nbcgrpuewy", "tf", "alcyfmnps", "adfn", "cwd", "bn",
    "knbhgropuewy", "et", "bcuezr?", "fyks", "fyks", "nbcgopewy", "nbcgopewy",
    "pu", "nowy", "not", "ceflnpsz", "knbhrouwy", "acnsvy", "glmpuwd",
]


def main(path):
    rows = [line.strip().split(",") for line in open(path) if line.strip()]
    observed = [set(r[j + 1] for r in rows) for j in range(len(ATTRIBUTES))]
    index = {}
    for j, codes in enumerate(ATTRIBUTES):
        for c in codes:
            if c in observed[j]:
                index[(j, c)] = len(index) + 1
    out = sys.stdout
    for r in rows:
        label = "+1" if r[0] == "e" else "-1"
        feats = sorted(index[(j, c)] for j, c in enumerate(r[1:]))
        out.write(label + "".join(" %d:1" % f for f in feats) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
