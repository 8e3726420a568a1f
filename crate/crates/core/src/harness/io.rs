//! CSV sample files and JSON/CSV report pairs.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::design::Sample;
use crate::error::{Error, Result};

/// Reads a `y,x,w` CSV file. The header must be exactly `y,x,w`; values are
/// decimal floats and `x`, `w` must lie in `[0, 1]`. Rows are numbered from 1
/// after the header.
pub fn load_csv(path: &Path) -> Result<Sample> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let owned = || path.to_path_buf();
    let header = match lines.next() {
        None => return Err(Error::EmptyFile { path: owned() }),
        Some(line) => line?,
    };
    let header = header.trim_start_matches('\u{feff}').trim_end();
    if header.is_empty() {
        return Err(Error::EmptyFile { path: owned() });
    }
    if header.split(',').map(str::trim).ne(["y", "x", "w"]) {
        return Err(Error::MissingHeader { path: owned() });
    }

    let (mut y, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new());
    let mut out_of_range = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::MalformedRow {
                path: owned(),
                row,
                reason: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let mut vals = [0.0; 3];
        for (k, field) in fields.iter().enumerate() {
            vals[k] = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::MalformedRow {
                    path: owned(),
                    row,
                    reason: format!("`{field}` is not a finite decimal number"),
                })?;
        }
        if !(0.0..=1.0).contains(&vals[1]) || !(0.0..=1.0).contains(&vals[2]) {
            out_of_range.push(row);
        }
        y.push(vals[0]);
        x.push(vals[1]);
        w.push(vals[2]);
    }
    if !out_of_range.is_empty() {
        return Err(Error::OutOfRange {
            path: owned(),
            rows: out_of_range,
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyFile { path: owned() });
    }
    Sample::new(y, x, w)
}

/// Writes a sample as `y,x,w` with shortest round-trip float formatting.
pub fn write_sample_csv(sample: &Sample, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["y", "x", "w"])?;
    for (y, x, w) in sample.rows() {
        writer.write_record([y.to_string(), x.to_string(), w.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

/// A report with a tabular view for the CSV half of its output pair.
pub trait Tabular {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;
}

/// Writes `<stem>.json` and `<stem>.csv` into `dir`, creating it if needed,
/// and returns both paths.
pub fn save_report<T: Serialize + Tabular>(
    report: &T,
    dir: &Path,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let json_path = dir.join(format!("{stem}.json"));
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    fs::write(&json_path, json)?;
    let mut writer = csv::Writer::from_path(&csv_path)?;
    writer.write_record(report.header())?;
    for row in report.rows() {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok((json_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::DesignSpec;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("data.csv");
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let s = load_csv(&write(dir.path(), "y,x,w\n1.0,0.5,0.5\n")).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.x(), &[0.5]);
    }

    #[test]
    fn rejects_bad_files_with_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let err =
            load_csv(&write(dir.path(), "y,x,w\n1.0,1.5,0.5\n0,0,0\n2,0.1,-1\n")).unwrap_err();
        assert!(
            matches!(err, Error::OutOfRange { ref rows, .. } if rows == &[1, 3]),
            "{err}"
        );
        let err = load_csv(&write(dir.path(), "")).unwrap_err();
        assert!(matches!(err, Error::EmptyFile { .. }), "{err}");
        let err = load_csv(&write(dir.path(), "y,x,w\n")).unwrap_err();
        assert!(matches!(err, Error::EmptyFile { .. }), "{err}");
        let err = load_csv(&write(dir.path(), "x,y,w\n1,0.5,0.5\n")).unwrap_err();
        assert!(matches!(err, Error::MissingHeader { .. }), "{err}");
        let err = load_csv(&write(dir.path(), "1,0.5,0.5\n")).unwrap_err();
        assert!(matches!(err, Error::MissingHeader { .. }), "{err}");
        let err = load_csv(&write(dir.path(), "y,x,w\n1,0.5\n")).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }), "{err}");
        let err = load_csv(&write(dir.path(), "y,x,w\n1,0.5,0.5\n1,0,5e\n")).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }), "{err}");
        let err = load_csv(&write(dir.path(), "y,x,w\nnan,0.5,0.5\n")).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 1, .. }), "{err}");
    }

    #[test]
    fn sample_round_trip_is_bit_identical() {
        let design = DesignSpec::mild(1.0, 2.0, 20, 0.1)
            .with_errors(0.1, 0.3)
            .build()
            .unwrap();
        let sample = design.sample_seeded(10_000, 11);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_sample_csv(&sample, &p).unwrap();
        let back = load_csv(&p).unwrap();
        assert_eq!(back, sample);
        for (a, b) in back.y().iter().zip(sample.y()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
