//! Sparse rows, datasets, LIBSVM text I/O and the seeded random source.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A sparse feature vector with 0-based, strictly increasing column ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseRow {
    /// Builds a row, dropping explicit zeros. Indices must be strictly
    /// increasing and below `dim`.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dimension {
                expected: indices.len(),
                got: values.len(),
            });
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid(format!(
                    "row indices not strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= dim {
                return Err(Error::invalid(format!("index {last} >= dimension {dim}")));
            }
        }
        let (indices, values) = indices
            .into_iter()
            .zip(values)
            .filter(|&(_, v)| v != 0.0)
            .unzip();
        Ok(SparseRow {
            indices,
            values,
            dim,
        })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0)
            .map(|(j, &v)| (j, v))
            .unzip();
        SparseRow {
            indices,
            values,
            dim: dense.len(),
        }
    }

    pub fn empty(dim: usize) -> Self {
        SparseRow {
            indices: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    /// `a·x` without a length check; callers on hot paths have already
    /// validated `x`.
    #[inline]
    pub(crate) fn dot_unchecked(&self, x: &[f64]) -> f64 {
        self.iter().map(|(j, v)| v * x[j]).sum()
    }

    #[inline]
    pub(crate) fn axpy_unchecked(&self, c: f64, x: &mut [f64]) {
        for (j, v) in self.iter() {
            x[j] += c * v;
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (j, v) in self.iter() {
            out[j] = v;
        }
        out
    }

    fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }
}

/// Margin `Σ values[j]·x[indices[j]]`.
pub fn dot(row: &SparseRow, x: &[f64]) -> Result<f64> {
    check_len(row.dim, x.len())?;
    Ok(row.dot_unchecked(x))
}

/// `x ← x + c·row`, touching only the row's support.
pub fn axpy_sparse(c: f64, row: &SparseRow, x: &mut [f64]) -> Result<()> {
    check_len(row.dim, x.len())?;
    row.axpy_unchecked(c, x);
    Ok(())
}

pub fn row_norm_sq(row: &SparseRow) -> f64 {
    row.values.iter().map(|v| v * v).sum()
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::Dimension { expected, got })
    } else {
        Ok(())
    }
}

/// Immutable design matrix (row-major sparse) plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        check_len(rows.len(), labels.len())?;
        let dim = rows[0].dim;
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        for r in &rows {
            check_len(dim, r.dim)?;
        }
        if let Some(b) = labels.iter().find(|b| !b.is_finite()) {
            return Err(Error::invalid(format!("non-finite label {b}")));
        }
        Ok(Dataset { rows, labels, dim })
    }

    /// Convenience constructor from dense rows.
    pub fn from_dense(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        Dataset::new(rows.iter().map(|r| SparseRow::from_dense(r)).collect(), labels)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseRow::nnz).sum()
    }

    /// Keeps the listed examples, in order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut rows = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.n() {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.n(),
                });
            }
            rows.push(self.rows[i].clone());
            labels.push(self.labels[i]);
        }
        Dataset::new(rows, labels)
    }

    /// Hex SHA-256 over dimensions, labels and entries; used to key cached
    /// reference solutions.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for (row, b) in self.rows.iter().zip(&self.labels) {
            h.update(b.to_bits().to_le_bytes());
            h.update((row.nnz() as u64).to_le_bytes());
            for (j, v) in row.iter() {
                h.update((j as u64).to_le_bytes());
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Reads LIBSVM text: `label idx:val ...` with 1-based strictly increasing
/// indices. Blank lines and `#` comments are skipped. The dimension is the
/// largest index seen unless `dim_override` is given.
pub fn parse_libsvm<R: BufRead>(reader: R, dim_override: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = match line.find('#') {
            Some(p) => &line[..p],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let perr = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(format!("bad label '{label_tok}'")))?;
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("malformed token '{tok}'")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| perr(format!("bad index in '{tok}'")))?;
            let val: f64 = val
                .parse()
                .map_err(|_| perr(format!("bad value in '{tok}'")))?;
            if idx < 1 {
                return Err(perr(format!("index {idx} < 1")));
            }
            if idx <= prev {
                return Err(perr(format!("indices not increasing ({prev} then {idx})")));
            }
            if !val.is_finite() {
                return Err(perr(format!("non-finite value in '{tok}'")));
            }
            prev = idx;
            indices.push(idx - 1);
            values.push(val);
        }
        max_index = max_index.max(prev);
        // Dimension is fixed after the scan; use a placeholder for now.
        let row = SparseRow::new(indices, values, usize::MAX).map_err(|e| perr(e.to_string()))?;
        rows.push(row);
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = match dim_override {
        Some(d) if d < max_index => {
            return Err(Error::invalid(format!(
                "feature index {max_index} exceeds the requested dimension {d}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let rows = rows.into_iter().map(|r| r.with_dim(dim)).collect();
    Dataset::new(rows, labels)
}

pub fn read_libsvm_file(path: &std::path::Path, dim_override: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_libsvm(std::io::BufReader::new(file), dim_override)
}

/// Writes LIBSVM text with 17 significant digits so that re-parsing is exact.
pub fn write_libsvm<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    for (row, b) in data.rows.iter().zip(&data.labels) {
        write!(out, "{}", fmt_f64(*b))?;
        for (j, v) in row.iter() {
            write!(out, " {}:{}", j + 1, fmt_f64(v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Shortest text that round-trips; integers print without an exponent.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:.16e}")
    }
}

/// Seeded random source: ChaCha8 keyed by a 64-bit seed.
///
/// Runs derive independent streams from the same seed through ChaCha's
/// stream id. Stream 0 drives example sampling, stream 1 the SVRG inner-loop
/// length draw, stream 2 synthetic data generation.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

pub const STREAM_SAMPLING: u64 = 0;
pub const STREAM_INNER_LENGTH: u64 = 1;
pub const STREAM_SYNTHETIC: u64 = 2;

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, STREAM_SAMPLING)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw from `0..n`.
    pub fn draw_index(&mut self, n: usize) -> Result<usize> {
        if n == 0 {
            return Err(Error::invalid("cannot draw an index from an empty range"));
        }
        Ok(self.rng.gen_range(0..n))
    }

    /// Uniform draw from [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> Result<Dataset> {
        parse_libsvm(s.as_bytes(), None)
    }

    #[test]
    fn parses_single_row() {
        let ds = parse("+1 1:0.5 3:-2").unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.d(), 3);
        assert_eq!(ds.row(0).indices(), &[0, 2]);
        assert_eq!(ds.row(0).values(), &[0.5, -2.0]);
        assert_eq!(ds.labels(), &[1.0]);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(parse(""), Err(Error::EmptyDataset)));
        assert!(matches!(parse("\n# only a comment\n\n"), Err(Error::EmptyDataset)));
    }

    #[test]
    fn comments_and_blank_lines() {
        let ds = parse("# header\n\n1 2:1 # trailing\n-1 1:3\n").unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.d(), 2);
    }

    #[test]
    fn errors_name_the_line() {
        for (text, line) in [
            ("1 1:1\n1 2:1 2:3\n", 2),
            ("1 0:1\n", 1),
            ("1 1:1\n\n1 x:2\n", 3),
            ("1 1:1 2\n", 1),
            ("abc 1:1\n", 1),
            ("1 3:1 1:1\n", 1),
        ] {
            match parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn dimension_override() {
        let ds = parse_libsvm("1 2:1\n".as_bytes(), Some(10)).unwrap();
        assert_eq!(ds.d(), 10);
        assert!(parse_libsvm("1 12:1\n".as_bytes(), Some(10)).is_err());
    }

    #[test]
    fn explicit_zeros_are_dropped() {
        let ds = parse("1 1:0 2:4").unwrap();
        assert_eq!(ds.row(0).indices(), &[1]);
    }

    #[test]
    fn dot_examples() {
        let row = SparseRow::new(vec![0, 2], vec![1.0, 2.0], 3).unwrap();
        assert_eq!(dot(&row, &[3.0, 9.0, 4.0]).unwrap(), 11.0);
        assert_eq!(dot(&SparseRow::empty(3), &[3.0, 9.0, 4.0]).unwrap(), 0.0);
        let e1 = SparseRow::from_dense(&[1.0, 0.0]);
        assert_eq!(dot(&e1, &[1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(dot(&row, &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn axpy_examples() {
        let row = SparseRow::new(vec![1], vec![3.0], 2).unwrap();
        let mut x = vec![5.0, 5.0];
        axpy_sparse(2.0, &row, &mut x).unwrap();
        assert_eq!(x, vec![5.0, 11.0]);
        axpy_sparse(0.0, &row, &mut x).unwrap();
        assert_eq!(x, vec![5.0, 11.0]);

        let dense = vec![1.5, -2.0, 0.25];
        let row = SparseRow::from_dense(&dense);
        let mut x = dense.clone();
        axpy_sparse(-1.0, &row, &mut x).unwrap();
        assert_eq!(x, vec![0.0; 3]);
        assert!(axpy_sparse(1.0, &row, &mut [0.0; 2]).is_err());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(row_norm_sq(&SparseRow::from_dense(&[3.0, 4.0])), 25.0);
        assert_eq!(row_norm_sq(&SparseRow::empty(4)), 0.0);
        assert_eq!(row_norm_sq(&SparseRow::from_dense(&[0.0, 1.0])), 1.0);
    }

    #[test]
    fn draw_index_contract() {
        let mut r = RandomSource::new(7);
        for _ in 0..100 {
            assert_eq!(r.draw_index(1).unwrap(), 0);
        }
        assert!(r.draw_index(0).is_err());

        let mut a = RandomSource::new(42);
        let mut b = RandomSource::new(42);
        let sa: Vec<_> = (0..100).map(|_| a.draw_index(17).unwrap()).collect();
        let sb: Vec<_> = (0..100).map(|_| b.draw_index(17).unwrap()).collect();
        assert_eq!(sa, sb);

        let mut c = RandomSource::with_stream(42, 1);
        let sc: Vec<_> = (0..100).map(|_| c.draw_index(17).unwrap()).collect();
        assert_ne!(sa, sc);
    }

    #[test]
    fn draw_index_frequencies() {
        let mut r = RandomSource::new(2024);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            counts[r.draw_index(4).unwrap()] += 1;
        }
        for c in counts {
            let p = c as f64 / draws as f64;
            assert!((0.23..=0.27).contains(&p), "{counts:?}");
        }
        for n in [3usize, 10, 37, 100] {
            let mut counts = vec![0usize; n];
            for _ in 0..draws {
                counts[r.draw_index(n).unwrap()] += 1;
            }
            for c in counts {
                let p = c as f64 / draws as f64;
                assert!((p - 1.0 / n as f64).abs() <= 0.02);
            }
        }
    }

    fn sparse_row_strategy(dim: usize) -> impl Strategy<Value = SparseRow> {
        proptest::collection::btree_map(0..dim, -1e3f64..1e3, 0..dim.min(12)).prop_map(
            move |m| {
                let (i, v): (Vec<_>, Vec<_>) = m.into_iter().unzip();
                SparseRow::new(i, v, dim).unwrap()
            },
        )
    }

    proptest! {
        #[test]
        fn libsvm_round_trip(
            rows in proptest::collection::vec(sparse_row_strategy(20), 1..12),
            labels in proptest::collection::vec(-5.0f64..5.0, 12),
        ) {
            let n = rows.len();
            let ds = Dataset::new(rows, labels[..n].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_libsvm(&ds, &mut buf).unwrap();
            let back = parse_libsvm(&buf[..], Some(ds.d())).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn sparse_ops_match_dense(
            row in sparse_row_strategy(30),
            x in proptest::collection::vec(-10.0f64..10.0, 30),
            c in -3.0f64..3.0,
        ) {
            let dense = row.to_dense();
            let reference: f64 = dense.iter().zip(&x).map(|(a, b)| a * b).sum();
            let got = dot(&row, &x).unwrap();
            let scale: f64 = dense.iter().zip(&x).map(|(a, b)| (a * b).abs()).sum::<f64>().max(1e-300);
            prop_assert!((got - reference).abs() <= 1e-14 * scale);

            let mut y = x.clone();
            axpy_sparse(c, &row, &mut y).unwrap();
            for j in 0..30 {
                let want = x[j] + c * dense[j];
                prop_assert!((y[j] - want).abs() <= 1e-14 * want.abs().max(1.0));
            }
        }
    }
}
