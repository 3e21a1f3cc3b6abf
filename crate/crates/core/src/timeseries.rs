//! Recorded trajectories, full-precision CSV round-tripping and
//! trajectory comparison.
//!
//! CSV layout: a `time_s` column followed by one column per signal,
//! every value printed with 17 significant digits so that files
//! round-trip bit-for-bit.

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

/// A uniformly sampled set of named signals.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(names: Vec<String>) -> TimeSeries {
        let columns = names.iter().map(|_| Vec::new()).collect();
        TimeSeries {
            times: Vec::new(),
            names,
            columns,
        }
    }

    /// Append one sample. `values` must match the signal count and the
    /// time must be strictly greater than the previous sample's.
    pub fn push_sample(&mut self, time: f64, values: &[f64]) {
        assert_eq!(values.len(), self.names.len(), "sample width mismatch");
        if let Some(&last) = self.times.last() {
            assert!(time > last, "sample times must be strictly increasing");
        }
        self.times.push(time);
        for (col, &v) in self.columns.iter_mut().zip(values) {
            col.push(v);
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_signal(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        let idx = self.names.iter().position(|n| n == name)?;
        Some(&self.columns[idx])
    }

    /// Value of `name` at sample `idx`.
    pub fn value(&self, name: &str, idx: usize) -> Option<f64> {
        self.column(name).and_then(|c| c.get(idx)).copied()
    }

    /// Last recorded value of `name`.
    pub fn last_value(&self, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| c.last()).copied()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TsError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = Vec::with_capacity(1 + self.names.len());
        header.push("time_s".to_string());
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (idx, &t) in self.times.iter().enumerate() {
            record.clear();
            record.push(format_full(t));
            for col in &self.columns {
                record.push(format_full(col[idx]));
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<(), TsError> {
        let file = File::create(path)?;
        self.write_csv(BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<TimeSeries, TsError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.is_empty() || &headers[0] != "time_s" {
            return Err(TsError::MalformedCsv {
                line: 1,
                detail: "first column must be time_s".to_string(),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();
        let mut ts = TimeSeries::new(names);
        for (row_idx, record) in r.records().enumerate() {
            let line = row_idx + 2;
            let record = record?;
            if record.len() != ts.names.len() + 1 {
                return Err(TsError::MalformedCsv {
                    line,
                    detail: format!(
                        "expected {} columns, got {}",
                        ts.names.len() + 1,
                        record.len()
                    ),
                });
            }
            let mut values = Vec::with_capacity(ts.names.len() + 1);
            for field in record.iter() {
                let v: f64 = field.parse().map_err(|_| TsError::MalformedCsv {
                    line,
                    detail: format!("not a number: {field:?}"),
                })?;
                values.push(v);
            }
            let t = values[0];
            if let Some(&last) = ts.times.last() {
                if t <= last {
                    return Err(TsError::MalformedCsv {
                        line,
                        detail: format!("time not strictly increasing: {last} -> {t}"),
                    });
                }
            }
            ts.push_sample(t, &values[1..]);
        }
        Ok(ts)
    }

    pub fn read_csv_path(path: &Path) -> Result<TimeSeries, TsError> {
        let file = File::open(path)?;
        TimeSeries::read_csv(BufReader::new(file))
    }
}

/// 17 significant digits: enough to reproduce any f64 exactly.
fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Per-signal deviation between two trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDeviation {
    pub name: String,
    pub max_abs: f64,
    pub rms: f64,
    /// Sample time where the maximum deviation occurs.
    pub time_of_max: f64,
}

/// Deviation summary over a set of signals.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub signals: Vec<SignalDeviation>,
}

impl ComparisonReport {
    pub fn max_abs_overall(&self) -> f64 {
        self.signals.iter().map(|s| s.max_abs).fold(0.0, f64::max)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.signals.iter().all(|s| s.max_abs <= tol)
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>13} {:>13} {:>12}", "signal", "max_abs", "rms", "t_at_max")?;
        for s in &self.signals {
            writeln!(
                f,
                "{:<24} {:>13.6e} {:>13.6e} {:>12.6}",
                s.name, s.max_abs, s.rms, s.time_of_max
            )?;
        }
        write!(f, "overall max_abs = {:.6e}", self.max_abs_overall())
    }
}

/// Compare two trajectories signal-by-signal on an identical sample
/// grid. With `signals = None` the comparison runs over the signals
/// common to both series, in `a`'s order.
pub fn compare(
    a: &TimeSeries,
    b: &TimeSeries,
    signals: Option<&[String]>,
) -> Result<ComparisonReport, TsError> {
    if a.len() != b.len() {
        return Err(TsError::GridMismatch {
            detail: format!("sample counts differ: {} vs {}", a.len(), b.len()),
        });
    }
    if let Some(idx) = a.times.iter().zip(&b.times).position(|(x, y)| x != y) {
        return Err(TsError::GridMismatch {
            detail: format!(
                "sample times differ at index {idx}: {} vs {}",
                a.times[idx], b.times[idx]
            ),
        });
    }

    let selected: Vec<String> = match signals {
        Some(list) => {
            for name in list {
                if !a.has_signal(name) || !b.has_signal(name) {
                    return Err(TsError::UnknownSignal { name: name.clone() });
                }
            }
            list.to_vec()
        }
        None => a
            .names
            .iter()
            .filter(|n| b.has_signal(n))
            .cloned()
            .collect(),
    };
    if selected.is_empty() {
        return Err(TsError::EmptySelection);
    }

    let mut report = ComparisonReport {
        signals: Vec::with_capacity(selected.len()),
    };
    for name in &selected {
        let ca = a.column(name).expect("validated above");
        let cb = b.column(name).expect("validated above");
        let mut max_abs = 0.0f64;
        let mut max_idx = 0usize;
        let mut sum_sq = 0.0f64;
        for (idx, (&x, &y)) in ca.iter().zip(cb).enumerate() {
            let d = (x - y).abs();
            sum_sq += d * d;
            if d > max_abs {
                max_abs = d;
                max_idx = idx;
            }
        }
        let rms = if ca.is_empty() {
            0.0
        } else {
            (sum_sq / ca.len() as f64).sqrt()
        };
        report.signals.push(SignalDeviation {
            name: name.clone(),
            max_abs,
            rms,
            time_of_max: a.times.get(max_idx).copied().unwrap_or(0.0),
        });
    }
    Ok(report)
}

#[derive(Debug, Error)]
pub enum TsError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed CSV at line {line}: {detail}")]
    MalformedCsv { line: usize, detail: String },
    #[error("sample grids do not match: {detail}")]
    GridMismatch { detail: String },
    #[error("signal {name:?} not present in both series")]
    UnknownSignal { name: String },
    #[error("no signals selected")]
    EmptySelection,
}

impl From<csv::Error> for TsError {
    fn from(e: csv::Error) -> TsError {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => TsError::Io(io),
                _ => unreachable!("is_io_error guarantees Io kind"),
            }
        } else {
            let line = e
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(0);
            TsError::MalformedCsv {
                line,
                detail: e.to_string(),
            }
        }
    }
}

impl TsError {
    pub fn kind(&self) -> &'static str {
        match self {
            TsError::Io(_) => "IoError",
            TsError::MalformedCsv { .. } => "MalformedCsv",
            TsError::GridMismatch { .. } => "GridMismatch",
            TsError::UnknownSignal { .. } => "UnknownSignal",
            TsError::EmptySelection => "EmptySelection",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_series() -> TimeSeries {
        let mut ts = TimeSeries::new(vec!["a".to_string(), "b".to_string()]);
        ts.push_sample(0.0, &[1.0, -2.0]);
        ts.push_sample(0.1, &[0.12345678901234568, 3.0e-17]);
        ts.push_sample(0.2, &[f64::MIN_POSITIVE, 1.0 / 3.0]);
        ts
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let ts = sample_series();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let back = TimeSeries::read_csv(buf.as_slice()).unwrap();
        assert_eq!(ts, back);
        // and the re-written bytes are identical too
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn read_rejects_missing_time_column() {
        let text = "a,b\n1.0,2.0\n";
        let err = TimeSeries::read_csv(text.as_bytes()).unwrap_err();
        assert_eq!(err.kind(), "MalformedCsv");
    }

    #[test]
    fn read_rejects_ragged_rows() {
        let text = "time_s,a,b\n0.0,1.0,2.0\n0.1,1.0\n";
        let err = TimeSeries::read_csv(text.as_bytes()).unwrap_err();
        assert_eq!(err.kind(), "MalformedCsv");
    }

    #[test]
    fn read_rejects_non_monotonic_time() {
        let text = "time_s,a\n0.0,1.0\n0.0,2.0\n";
        let err = TimeSeries::read_csv(text.as_bytes()).unwrap_err();
        assert_eq!(err.kind(), "MalformedCsv");
    }

    #[test]
    fn compare_with_itself_is_zero() {
        let ts = sample_series();
        let report = compare(&ts, &ts, None).unwrap();
        assert_eq!(report.max_abs_overall(), 0.0);
        assert!(report.within(0.0));
    }

    #[test]
    fn compare_detects_constant_offset() {
        let ts = sample_series();
        let mut shifted = TimeSeries::new(ts.names().to_vec());
        for idx in 0..ts.len() {
            let a = ts.value("a", idx).unwrap() + 1e-3;
            let b = ts.value("b", idx).unwrap();
            shifted.push_sample(ts.times()[idx], &[a, b]);
        }
        let report = compare(&ts, &shifted, None).unwrap();
        let dev_a = &report.signals[0];
        let dev_b = &report.signals[1];
        assert!((dev_a.max_abs - 1e-3).abs() < 1e-15);
        assert!((dev_a.rms - 1e-3).abs() < 1e-15);
        assert_eq!(dev_b.max_abs, 0.0);
        assert!(!report.within(0.99e-3));
        assert!(report.within(1.01e-3));
    }

    #[test]
    fn compare_rejects_different_grids() {
        let ts = sample_series();
        let mut other = TimeSeries::new(ts.names().to_vec());
        other.push_sample(0.0, &[0.0, 0.0]);
        let err = compare(&ts, &other, None).unwrap_err();
        assert_eq!(err.kind(), "GridMismatch");
    }

    #[test]
    fn compare_rejects_unknown_signal() {
        let ts = sample_series();
        let err = compare(&ts, &ts, Some(&["nope".to_string()])).unwrap_err();
        assert_eq!(err.kind(), "UnknownSignal");
    }
}
