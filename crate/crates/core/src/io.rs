//! Text formats for detection records and broadcast schedules.
//!
//! Records are one per line, either CSV with a mandatory header or JSON
//! lines. Floats are written in plain decimal with at least 12 significant
//! digits and always re-parse to the identical `f64`.

use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

use crate::detection::{DetectionRecord, Outcome};
use crate::interferometer::{InterferometerError, PhaseMode, PhaseSchedule};

pub const RECORD_CSV_HEADER: &str = "index,t_j,window_center,outcome,phi1,phi2";
pub const SCHEDULE_CSV_HEADER: &str = "index,phi1,phi2";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Schedule(#[from] InterferometerError),
}

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordFormat {
    Csv,
    JsonLines,
}

/// Shortest round-trip decimal, zero-padded to at least 12 significant digits.
pub fn format_decimal(x: f64) -> String {
    const MIN_SIGNIFICANT: usize = 12;
    let mut s = format!("{x}");
    if !x.is_finite() {
        return s;
    }
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    let significant = match digits.trim_start_matches('0').len() {
        0 => 1,
        n => n,
    };
    if significant < MIN_SIGNIFICANT {
        if !s.contains('.') {
            s.push('.');
        }
        let pad = if x == 0.0 {
            MIN_SIGNIFICANT - 1
        } else {
            MIN_SIGNIFICANT - significant
        };
        s.extend(std::iter::repeat_n('0', pad));
    }
    s
}

fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64, FormatError> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| parse_err(line, format!("{field}: {e} ({s:?})")))
}

fn parse_usize(line: usize, field: &str, s: &str) -> Result<usize, FormatError> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| parse_err(line, format!("{field}: {e} ({s:?})")))
}

pub fn write_records<W: Write>(
    mut out: W,
    records: &[DetectionRecord],
    format: RecordFormat,
) -> Result<(), FormatError> {
    match format {
        RecordFormat::Csv => {
            writeln!(out, "{RECORD_CSV_HEADER}")?;
            for r in records {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.index,
                    format_decimal(r.t_j),
                    format_decimal(r.window_center),
                    r.outcome.as_str(),
                    format_decimal(r.phi1),
                    format_decimal(r.phi2)
                )?;
            }
        }
        RecordFormat::JsonLines => {
            for r in records {
                serde_json::to_writer(&mut out, r).map_err(io::Error::from)?;
                writeln!(out)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads records in either format; CSV is recognised by its header.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<DetectionRecord>, FormatError> {
    let mut records = Vec::new();
    let mut csv = None;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let is_csv = *csv.get_or_insert_with(|| !line.starts_with('{'));
        if is_csv {
            if lineno == 1 {
                if line != RECORD_CSV_HEADER {
                    return Err(parse_err(
                        lineno,
                        format!("expected header {RECORD_CSV_HEADER:?}, found {line:?}"),
                    ));
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(parse_err(
                    lineno,
                    format!("expected 6 fields, found {}", fields.len()),
                ));
            }
            records.push(DetectionRecord {
                index: parse_usize(lineno, "index", fields[0])?,
                t_j: parse_f64(lineno, "t_j", fields[1])?,
                window_center: parse_f64(lineno, "window_center", fields[2])?,
                outcome: Outcome::parse(fields[3].trim())
                    .ok_or_else(|| parse_err(lineno, format!("unknown outcome {:?}", fields[3])))?,
                phi1: parse_f64(lineno, "phi1", fields[4])?,
                phi2: parse_f64(lineno, "phi2", fields[5])?,
            });
        } else {
            let r: DetectionRecord =
                serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
            records.push(r);
        }
    }
    Ok(records)
}

pub fn write_schedule<W: Write>(mut out: W, schedule: &PhaseSchedule) -> Result<(), FormatError> {
    writeln!(out, "{SCHEDULE_CSV_HEADER}")?;
    for (i, (a, b)) in schedule.phases.iter().enumerate() {
        writeln!(out, "{i},{},{}", format_decimal(*a), format_decimal(*b))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a broadcast schedule; indices must run 0, 1, 2, … without gaps.
pub fn read_schedule<R: BufRead>(
    input: R,
    mode: PhaseMode,
    broadcast_delay: f64,
) -> Result<PhaseSchedule, FormatError> {
    let mut pairs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let line = line.trim();
        if lineno == 1 {
            if line != SCHEDULE_CSV_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header {SCHEDULE_CSV_HEADER:?}, found {line:?}"),
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let index = parse_usize(lineno, "index", fields[0])?;
        if index != pairs.len() {
            return Err(parse_err(
                lineno,
                format!("expected index {}, found {index}", pairs.len()),
            ));
        }
        pairs.push((
            parse_f64(lineno, "phi1", fields[1])?,
            parse_f64(lineno, "phi2", fields[2])?,
        ));
    }
    Ok(PhaseSchedule::from_pairs(mode, pairs, broadcast_delay)?)
}
