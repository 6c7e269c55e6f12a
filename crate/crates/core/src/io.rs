//! CSV helpers shared by trajectory, monitor and sweep output.

use std::io::Write;

use crate::error::{Error, Result};

/// RFC-4180 writer: CRLF line endings, quoting only when needed.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(w)
}

/// Formats a float with 17 significant digits.
pub fn format_float(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            what: "CSV field".into(),
            index: None,
        });
    }
    Ok(format!("{x:.16e}"))
}

pub fn format_row(row: impl IntoIterator<Item = f64>) -> Result<Vec<String>> {
    row.into_iter().map(format_float).collect()
}
