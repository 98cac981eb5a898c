//! Deterministic emission: CSV for grids (17 significant digits, header row,
//! grid order) and JSON for scalar reports (sorted keys).

use std::io::Write;
use std::path::PathBuf;

use crate::CliError;

/// One CSV cell at full double precision; parsing the text back recovers the
/// exact bits.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_text(columns: &[String], rows: &[Vec<f64>]) -> String {
    let mut text = String::new();
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| format_value(v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}

/// Writes to the file when `out` is given, otherwise to stdout.
pub fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(text.as_bytes()) {
                Ok(()) => Ok(()),
                // A closed pipe (e.g. piping into `head`) is not an error.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                Err(e) => Err(CliError::Io(format!("stdout: {e}"))),
            }
        }
    }
}

pub fn emit_json(value: &serde_json::Value, out: Option<&PathBuf>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("json: {e}")))?;
    text.push('\n');
    emit(&text, out)
}
