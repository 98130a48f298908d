//! File formats: mesh CSV, dataset CSV, JSON bundles, trace and map CSVs.
//! All writes go through a temp file in the target directory plus an atomic
//! rename.

pub mod bundle;
pub mod dataset;
pub mod mesh;

use std::io::Write;
use std::path::Path;

use crate::{CliError, CliResult};

/// Full-precision decimal for CSV output: 17 significant digits round-trip
/// any f64 exactly.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `content` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, content: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| {
            CliError::Numerical(format!("cannot create directory {}: {e}", dir.display()))
        })?;
    }
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| CliError::Numerical(format!("cannot create temp file: {e}")))?;
    tmp.write_all(content)
        .map_err(|e| CliError::Numerical(format!("cannot write {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Numerical(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 72.0, 1.5576015656546443, f64::MIN_POSITIVE] {
            let s = fmt_full(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn atomic_write_creates_parents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/deep/file.txt");
        write_atomic(&path, b"hello").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "hello");
    }
}
