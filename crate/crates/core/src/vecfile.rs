//! Binary vector/matrix files and atomic file writes.
//!
//! Layout: the 8 bytes `VROPTv01`, then `rows` and `cols` as little-endian
//! `u32`, then `rows·cols` little-endian `f64` values in row-major order.
//! A solution vector is stored with `rows = 1`; a table of per-example
//! gradients with `rows = n`, `cols = d`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"VROPTv01";
pub const HEADER_LEN: usize = 16;

pub fn write_matrix<W: Write>(mut w: W, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    if rows * cols != values.len() {
        return Err(Error::invalid(format!(
            "{rows}x{cols} matrix needs {} values, got {}",
            rows * cols,
            values.len()
        )));
    }
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| Error::invalid(format!("dimension {v} does not fit the header")))
    };
    w.write_all(MAGIC)?;
    w.write_all(&to_u32(rows)?.to_le_bytes())?;
    w.write_all(&to_u32(cols)?.to_le_bytes())?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Returns `(rows, cols, values)`.
pub fn read_matrix<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("file shorter than the 16-byte header".into()))?;
    if &header[..8] != MAGIC {
        return Err(Error::Format("bad magic; not a vector file".into()));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "header announces {rows}x{cols} values but the body has {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((rows, cols, values))
}

pub fn write_vector<W: Write>(w: W, values: &[f64]) -> Result<()> {
    write_matrix(w, 1, values.len(), values)
}

pub fn read_vector<R: Read>(r: R) -> Result<Vec<f64>> {
    let (rows, _, values) = read_matrix(r)?;
    if rows != 1 {
        return Err(Error::Format(format!("expected a single vector, found {rows} rows")));
    }
    Ok(values)
}

pub fn read_vector_file(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| annotate(e, path))?;
    read_vector(std::io::BufReader::new(file))
}

pub fn write_vector_file(path: &Path, values: &[f64]) -> Result<()> {
    let mut buf = Vec::new();
    write_vector(&mut buf, values)?;
    atomic_write(path, &buf)
}

pub(crate) fn annotate(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(annotate(e, path));
    }
    Ok(())
}
