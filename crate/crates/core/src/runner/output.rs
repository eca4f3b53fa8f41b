//! Atomic result files and CSV formatting.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text with a header row; every cell is a float.
pub fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&x| format_float(x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes `contents` to `dir/name` through a temporary file in `dir` and a
/// rename, so the target path never holds a partial file.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    let io = |what: &str, e: std::io::Error| Error::InvalidArgument(format!("{what} {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(|e| io("cannot create output directory", e))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".realm-")
        .tempfile_in(dir)
        .map_err(|e| io("cannot create temporary file in", e))?;
    tmp.write_all(contents)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| io("cannot write to", e))?;
    let target = dir.join(name);
    tmp.persist(&target)
        .map_err(|e| Error::InvalidArgument(format!("cannot rename onto {}: {}", target.display(), e.error)))?;
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-300, -2.5e17, 0.0] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn table_layout() {
        let t = csv_table(&["t", "x"], &[vec![0.0, 1.5]]);
        assert_eq!(t, "t,x\n0.0000000000000000e0,1.5000000000000000e0\n");
    }

    #[test]
    fn atomic_write_leaves_only_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_atomic(dir.path(), "a.json", b"{}").unwrap();
        write_atomic(dir.path(), "a.json", b"[1]").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "[1]");
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("a.json")]);
    }
}
