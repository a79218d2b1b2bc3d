//! Trace and sweep persistence.
//!
//! Plain comma-separated text with a fixed header. Floats are rendered at
//! 17 significant digits so values round-trip bit-exactly; NaN and the
//! infinities are spelled `nan`, `inf`, `-inf`. The accuracy column is
//! empty for objectives that have no notion of accuracy, and `diverged` is
//! 0 or 1.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{HarnessError, SweepResult, SweepStatus};

pub const TRACE_HEADER: &str = "t,loss,accuracy,max_abs_delta,metric_mk,diverged";
pub const SWEEP_HEADER: &str = "order,final_loss,final_accuracy,status";

/// One recorded step of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    /// Full-batch training loss after the step.
    pub loss: f64,
    /// Full-batch accuracy; None for non-classification objectives.
    pub accuracy: Option<f64>,
    pub max_abs_delta: f64,
    /// M_k of the pooled recent-gradient window; NaN when undefined.
    pub metric_mk: f64,
    pub diverged: bool,
}

/// 17 significant digits: enough to reconstruct the exact f64.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_float(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn malformed(path: &Path, msg: impl Into<String>) -> HarnessError {
    HarnessError::MalformedTrace {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = |line: String| writeln!(w, "{line}").map_err(|e| io_err(path, e));
    emit(TRACE_HEADER.to_string())?;
    for row in rows {
        let accuracy = row.accuracy.map(format_float).unwrap_or_default();
        emit(format!(
            "{},{},{},{},{},{}",
            row.t,
            format_float(row.loss),
            accuracy,
            format_float(row.max_abs_delta),
            format_float(row.metric_mk),
            u8::from(row.diverged),
        ))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(header)) if header == TRACE_HEADER => {}
        Some(Ok(other)) => return Err(malformed(path, format!("unexpected header `{other}`"))),
        Some(Err(e)) => return Err(io_err(path, e)),
        None => return Err(malformed(path, "empty file")),
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(malformed(
                path,
                format!("row {}: expected 6 fields, got {}", line_no + 2, fields.len()),
            ));
        }
        let bad = |what: &str| malformed(path, format!("row {}: bad {what}", line_no + 2));
        let t = fields[0].parse().map_err(|_| bad("step index"))?;
        let loss = parse_float(fields[1]).ok_or_else(|| bad("loss"))?;
        let accuracy = if fields[2].is_empty() {
            None
        } else {
            Some(parse_float(fields[2]).ok_or_else(|| bad("accuracy"))?)
        };
        let max_abs_delta = parse_float(fields[3]).ok_or_else(|| bad("max_abs_delta"))?;
        let metric_mk = parse_float(fields[4]).ok_or_else(|| bad("metric_mk"))?;
        let diverged = match fields[5] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("diverged flag")),
        };
        rows.push(TraceRow {
            t,
            loss,
            accuracy,
            max_abs_delta,
            metric_mk,
            diverged,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(result: &SweepResult, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{SWEEP_HEADER}").map_err(|e| io_err(path, e))?;
    for cell in &result.cells {
        let accuracy = cell.final_accuracy.map(format_float).unwrap_or_default();
        let status = match cell.status {
            SweepStatus::Completed => "completed",
            SweepStatus::Diverged { .. } => "diverged",
        };
        writeln!(
            w,
            "{},{},{},{}",
            cell.order,
            format_float(cell.final_loss),
            accuracy,
            status
        )
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn float_eq(a: f64, b: f64) -> bool {
        (a.is_nan() && b.is_nan()) || a == b
    }

    fn rows_eq(a: &[TraceRow], b: &[TraceRow]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.t == y.t
                    && float_eq(x.loss, y.loss)
                    && match (x.accuracy, y.accuracy) {
                        (None, None) => true,
                        (Some(p), Some(q)) => float_eq(p, q),
                        _ => false,
                    }
                    && float_eq(x.max_abs_delta, y.max_abs_delta)
                    && float_eq(x.metric_mk, y.metric_mk)
                    && x.diverged == y.diverged
            })
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(format_float(0.001), "1.0000000000000000e-3");
        assert_eq!(format_float(f64::NAN), "nan");
        assert_eq!(format_float(f64::INFINITY), "inf");
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
        assert_eq!(parse_float("nan").map(|v| v.is_nan()), Some(true));
    }

    #[test]
    fn float_format_round_trips_exactly() {
        let mut rng = crate::rng::prng(3);
        for _ in 0..10_000 {
            let x = f64::from_bits(rng.gen::<u64>());
            if !x.is_finite() {
                continue;
            }
            let back = parse_float(&format_float(x)).unwrap();
            assert_eq!(x.to_bits(), back.to_bits(), "{x} reparsed as {back}");
        }
    }

    #[test]
    fn trace_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let mut rng = crate::rng::prng(8);
        let mut rows: Vec<TraceRow> = (1..200u64)
            .map(|t| TraceRow {
                t,
                loss: rng.gen_range(-10.0..10.0),
                accuracy: if t % 3 == 0 {
                    None
                } else {
                    Some(rng.gen_range(0.0..1.0))
                },
                max_abs_delta: rng.gen_range(0.0..1.0),
                metric_mk: rng.gen_range(0.0..2.0),
                diverged: false,
            })
            .collect();
        rows.push(TraceRow {
            t: 200,
            loss: f64::NAN,
            accuracy: Some(f64::NAN),
            max_abs_delta: f64::INFINITY,
            metric_mk: f64::NAN,
            diverged: true,
        });
        write_trace_csv(&rows, &path).unwrap();
        let back = read_trace_csv(&path).unwrap();
        assert!(rows_eq(&rows, &back));
        // The NaN row is spelled out, not formatted away.
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().last().unwrap().starts_with("200,nan,nan,inf,nan,1"));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{TRACE_HEADER}\n"));
        assert_eq!(read_trace_csv(&path).unwrap(), vec![]);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(matches!(
            read_trace_csv(&path),
            Err(HarnessError::MalformedTrace { .. })
        ));
        std::fs::write(&path, format!("{TRACE_HEADER}\n1,2,3\n")).unwrap();
        assert!(read_trace_csv(&path).is_err());
        std::fs::write(&path, format!("{TRACE_HEADER}\n1,x,,0.0,0.0,0\n")).unwrap();
        assert!(read_trace_csv(&path).is_err());
        std::fs::write(&path, format!("{TRACE_HEADER}\n1,0.0,,0.0,0.0,2\n")).unwrap();
        assert!(read_trace_csv(&path).is_err());
        assert!(matches!(
            read_trace_csv(&dir.path().join("missing.csv")),
            Err(HarnessError::Io { .. })
        ));
    }
}
