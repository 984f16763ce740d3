//! Plot-ready file output: CSV tables with `#`-prefixed metadata headers.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::runner::RunResult;

/// Writes a CSV file: metadata lines first (each prefixed `#`), then the
/// header row, then the records.
pub fn write_csv(
    path: &Path,
    metadata: &[(&str, String)],
    header: &[&str],
    rows: &[Vec<String>],
) -> RunResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    for (key, value) in metadata {
        writeln!(f, "# {key}: {value}")?;
    }
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}
