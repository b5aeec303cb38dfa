//! Minimal CSV emission and ingestion.
//!
//! Every file starts with a header row. Values never contain commas,
//! quotes, or newlines (numbers and short identifiers only), so no quoting
//! layer is needed. Floats are written in Rust's shortest round-trip form,
//! which is deterministic for identical bit patterns — the basis of the
//! byte-identical-output guarantee.

use std::fs;
use std::io;
use std::path::Path;

/// An in-memory CSV under construction.
pub struct Csv {
    columns: usize,
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Csv {
        Csv { columns: header.len(), text: format!("{}\n", header.join(",")) }
    }

    /// Appends one row; the cell count must match the header.
    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width differs from header");
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, &self.text)
    }
}

/// Shortest round-trip decimal text for a float.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Reads a CSV produced by [`Csv`]: returns the header and the data rows.
pub fn read_csv(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h.split(',').map(str::to_string).collect(),
        None => {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "empty CSV file"));
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        rows.push(line.split(',').map(str::to_string).collect());
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_rows_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut csv = Csv::new(&["k", "v"]);
        csv.row(&["0".into(), num(0.1)]);
        csv.row(&["1".into(), num(-2.5e-3)]);
        csv.write(&path).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header, vec!["k", "v"]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][1].parse::<f64>().unwrap(), -2.5e-3);
    }

    #[test]
    fn float_text_round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, 2.565784513950348, f64::MIN_POSITIVE, -0.0] {
            let back: f64 = num(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }
}
