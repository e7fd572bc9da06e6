//! The datasets under `data/` are what the code says they are.
//!
//! Set `VROPT_REGENERATE=1` to rewrite the generated files.

use std::path::PathBuf;

use vropt_core::{read_libsvm_file, synth, write_libsvm};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn blobs2d_matches_its_generator() {
    let ds = synth::blobs_2d(200, 5).unwrap();
    let mut expected = Vec::new();
    write_libsvm(&ds, &mut expected).unwrap();
    let path = data_dir().join("blobs2d");
    if std::env::var_os("VROPT_REGENERATE").is_some() {
        std::fs::write(&path, &expected).unwrap();
    }
    let on_disk = std::fs::read(&path).expect("data/blobs2d is missing; rerun with VROPT_REGENERATE=1");
    assert!(on_disk == expected, "data/blobs2d differs from synth::blobs_2d(200, 5)");
}

#[test]
fn mushrooms_has_the_expected_shape() {
    let ds = read_libsvm_file(&data_dir().join("mushrooms"), None).unwrap();
    assert_eq!((ds.n(), ds.d()), (8124, 117));
    assert!(ds.labels().iter().all(|&b| b == 1.0 || b == -1.0));
}
