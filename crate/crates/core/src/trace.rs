//! CSV ingestion and emission: parameter traces, mass streams, decisions,
//! plot data and JSON-lines event logs.
//!
//! All CSV files use a header row, `,` separators and `.` decimals. Floats
//! are written in shortest round-trip form, so re-reading an emitted file
//! gives bit-identical values.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::belief::{BeliefError, MassDistribution};
use crate::filter::FilterEvent;

/// Column prefix marking a reliability column.
pub const ALPHA_PREFIX: &str = "alpha_";

/// Header of mass-stream CSV files.
pub const MASS_HEADER: [&str; 5] = ["frame", "m_empty", "m_R", "m_F", "m_omega"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRows {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("bad header: {0}")]
    Header(String),
    #[error("line {line}: {source}")]
    Mass { line: u64, source: BeliefError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl TraceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TraceError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Per-frame parameter values and reliabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTrace {
    schema: Vec<String>,
    values: Vec<Vec<f64>>,
    reliabilities: Vec<Vec<f64>>,
}

impl ParameterTrace {
    /// `values[f][p]` and `reliabilities[f][p]` follow `schema[p]`.
    pub fn new(
        schema: Vec<String>,
        values: Vec<Vec<f64>>,
        reliabilities: Vec<Vec<f64>>,
    ) -> Result<Self, TraceError> {
        if values.len() != reliabilities.len()
            || values
                .iter()
                .chain(&reliabilities)
                .any(|row| row.len() != schema.len())
        {
            return Err(TraceError::Header("trace is not rectangular".into()));
        }
        Ok(Self {
            schema,
            values,
            reliabilities,
        })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn column(&self, param: &str) -> Option<usize> {
        self.schema.iter().position(|p| p == param)
    }

    pub fn value(&self, frame: usize, param: usize) -> f64 {
        self.values[frame][param]
    }

    pub fn reliability(&self, frame: usize, param: usize) -> f64 {
        self.reliabilities[frame][param]
    }
}

pub fn load_trace(path: &Path) -> Result<ParameterTrace, TraceError> {
    let file = std::fs::File::open(path).map_err(|e| TraceError::io(path, e))?;
    read_trace(file)
}

/// Parses a parameter trace. An optional `frame` column must count up from
/// 0; `alpha_<param>` columns hold reliabilities, which default to 1.
pub fn read_trace<R: Read>(reader: R) -> Result<ParameterTrace, TraceError> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();

    let mut frame_col = None;
    let mut schema = Vec::new();
    let mut value_cols = Vec::new();
    let mut alpha_cols = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if name == "frame" {
            frame_col = Some(i);
        } else if let Some(param) = name.strip_prefix(ALPHA_PREFIX) {
            alpha_cols.push((param.to_owned(), i));
        } else if name.is_empty() {
            return Err(TraceError::Header(format!("column {} has no name", i + 1)));
        } else {
            if schema.contains(name) {
                return Err(TraceError::Header(format!("duplicate column `{name}`")));
            }
            schema.push(name.clone());
            value_cols.push(i);
        }
    }
    let mut alpha_for: Vec<Option<usize>> = vec![None; schema.len()];
    for (param, col) in alpha_cols {
        let p = schema.iter().position(|s| *s == param).ok_or_else(|| {
            TraceError::Header(format!("`{ALPHA_PREFIX}{param}` has no matching parameter column"))
        })?;
        alpha_for[p] = Some(col);
    }

    let mut values = Vec::new();
    let mut reliabilities = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(TraceError::RaggedRows {
                line,
                expected: header.len(),
                found: record.len(),
            });
        }
        let cell = |col: usize| -> Result<f64, TraceError> {
            parse_number(&record[col], line, &header[col])
        };
        if let Some(col) = frame_col {
            let expected = values.len();
            let frame: usize = record[col].parse().map_err(|_| TraceError::Parse {
                line,
                column: "frame".into(),
                message: format!("`{}` is not a frame index", &record[col]),
            })?;
            if frame != expected {
                return Err(TraceError::Parse {
                    line,
                    column: "frame".into(),
                    message: format!("expected frame {expected}, found {frame}"),
                });
            }
        }
        let row = value_cols.iter().map(|&c| cell(c)).collect::<Result<Vec<_>, _>>()?;
        let alphas = alpha_for
            .iter()
            .map(|col| match col {
                None => Ok(1.0),
                Some(c) => {
                    let a = cell(*c)?;
                    if (0.0..=1.0).contains(&a) {
                        Ok(a)
                    } else {
                        Err(TraceError::Parse {
                            line,
                            column: header[*c].clone(),
                            message: format!("reliability {a} is outside [0, 1]"),
                        })
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        values.push(row);
        reliabilities.push(alphas);
    }
    ParameterTrace::new(schema, values, reliabilities)
}

fn parse_number(text: &str, line: u64, column: &str) -> Result<f64, TraceError> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| TraceError::Parse {
            line,
            column: column.to_owned(),
            message: format!("`{text}` is not a finite number"),
        })
}

pub fn write_mass_csv<W: Write>(writer: W, masses: &[MassDistribution]) -> Result<(), TraceError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(MASS_HEADER)?;
    for (frame, m) in masses.iter().enumerate() {
        let v = m.binary_vector().ok_or_else(|| TraceError::Mass {
            line: frame as u64 + 2,
            source: BeliefError::FrameMismatch,
        })?;
        csv.write_record([
            frame.to_string(),
            v[0].to_string(),
            v[1].to_string(),
            v[2].to_string(),
            v[3].to_string(),
        ])?;
    }
    csv.flush().map_err(|e| TraceError::io(Path::new("<mass csv>"), e))?;
    Ok(())
}

/// Reads a binary mass stream written by [`write_mass_csv`].
pub fn read_mass_csv<R: Read>(reader: R) -> Result<Vec<MassDistribution>, TraceError> {
    let mut csv = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
    if header != MASS_HEADER {
        return Err(TraceError::Header(format!(
            "expected `{}`, found `{}`",
            MASS_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != MASS_HEADER.len() {
            return Err(TraceError::RaggedRows {
                line,
                expected: MASS_HEADER.len(),
                found: record.len(),
            });
        }
        let frame: usize = record[0].parse().map_err(|_| TraceError::Parse {
            line,
            column: "frame".into(),
            message: format!("`{}` is not a frame index", &record[0]),
        })?;
        if frame != out.len() {
            return Err(TraceError::Parse {
                line,
                column: "frame".into(),
                message: format!("expected frame {}, found {frame}", out.len()),
            });
        }
        let mut v = [0.0; 4];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = parse_number(&record[k + 1], line, MASS_HEADER[k + 1])?;
        }
        let m = MassDistribution::binary(v[0], v[1], v[2], v[3])
            .map_err(|source| TraceError::Mass { line, source })?;
        out.push(m);
    }
    Ok(out)
}

pub fn load_mass_csv(path: &Path) -> Result<Vec<MassDistribution>, TraceError> {
    let file = std::fs::File::open(path).map_err(|e| TraceError::io(path, e))?;
    read_mass_csv(file)
}

/// `frame,m_empty,m_R,m_F,m_omega[,cusum]`.
pub fn write_plot_csv<W: Write>(
    writer: W,
    masses: &[MassDistribution],
    cusum: Option<&[f64]>,
) -> Result<(), TraceError> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = MASS_HEADER.to_vec();
    if cusum.is_some() {
        header.push("cusum");
    }
    csv.write_record(&header)?;
    for (frame, m) in masses.iter().enumerate() {
        let v = m.binary_vector().unwrap_or([f64::NAN; 4]);
        let mut row = vec![frame.to_string()];
        row.extend(v.iter().map(f64::to_string));
        if let Some(cs) = cusum {
            row.push(cs[frame].to_string());
        }
        csv.write_record(&row)?;
    }
    csv.flush().map_err(|e| TraceError::io(Path::new("<plot csv>"), e))?;
    Ok(())
}

/// Per-frame decisions as `frame,before[,after]` with `0`/`1` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionTable {
    pub before: Vec<bool>,
    pub after: Option<Vec<bool>>,
}

pub fn write_decisions_csv<W: Write>(writer: W, table: &DecisionTable) -> Result<(), TraceError> {
    let mut csv = csv::Writer::from_writer(writer);
    let bit = |b: bool| if b { "1" } else { "0" };
    match &table.after {
        Some(after) => {
            csv.write_record(["frame", "before", "after"])?;
            for (f, (b, a)) in table.before.iter().zip(after).enumerate() {
                csv.write_record([f.to_string().as_str(), bit(*b), bit(*a)])?;
            }
        }
        None => {
            csv.write_record(["frame", "before"])?;
            for (f, b) in table.before.iter().enumerate() {
                csv.write_record([f.to_string().as_str(), bit(*b)])?;
            }
        }
    }
    csv.flush().map_err(|e| TraceError::io(Path::new("<decisions csv>"), e))?;
    Ok(())
}

pub fn read_decisions_csv<R: Read>(reader: R) -> Result<DecisionTable, TraceError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_owned).collect();
    let has_after = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["frame", "before"] => false,
        ["frame", "before", "after"] => true,
        _ => {
            return Err(TraceError::Header(format!(
                "expected `frame,before[,after]`, found `{}`",
                header.join(",")
            )))
        }
    };
    let mut before = Vec::new();
    let mut after = Vec::new();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bit = |col: usize| match &record[col] {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(TraceError::Parse {
                line,
                column: header[col].clone(),
                message: format!("`{other}` is not 0 or 1"),
            }),
        };
        before.push(bit(1)?);
        if has_after {
            after.push(bit(2)?);
        }
    }
    Ok(DecisionTable {
        before,
        after: has_after.then_some(after),
    })
}

/// One JSON object per line.
pub fn write_events_jsonl<W: Write>(mut writer: W, events: &[FilterEvent]) -> Result<(), TraceError> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer
            .write_all(b"\n")
            .map_err(|e| TraceError::io(Path::new("<events>"), e))?;
    }
    Ok(())
}
