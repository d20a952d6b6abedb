//! Pignistic decisions and frame-wise recall/precision against annotated
//! segments, with before/after-filtering gain reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, MassDistribution};

/// Default decision threshold on `BetP(R)`.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("segment [{start}, {end}] of `{action}` is reversed, unsorted or overlapping")]
    BadSegment {
        action: String,
        start: usize,
        end: usize,
    },
    #[error("`{action}`: {before} decisions before filtering but {after} after")]
    LengthMismatch {
        action: String,
        before: usize,
        after: usize,
    },
}

/// Ground-truth frames where an action is true, as inclusive intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawAnnotation")]
pub struct SegmentAnnotation {
    pub action: String,
    pub segments: Vec<(usize, usize)>,
}

#[derive(Deserialize)]
struct RawAnnotation {
    action: String,
    segments: Vec<(usize, usize)>,
}

impl TryFrom<RawAnnotation> for SegmentAnnotation {
    type Error = EvalError;

    fn try_from(raw: RawAnnotation) -> Result<Self, Self::Error> {
        Self::new(raw.action, raw.segments)
    }
}

impl SegmentAnnotation {
    pub fn new(action: impl Into<String>, segments: Vec<(usize, usize)>) -> Result<Self, EvalError> {
        let action = action.into();
        let mut last_end: Option<usize> = None;
        for &(start, end) in &segments {
            if start > end || last_end.is_some_and(|e| start <= e) {
                return Err(EvalError::BadSegment {
                    action,
                    start,
                    end,
                });
            }
            last_end = Some(end);
        }
        Ok(Self { action, segments })
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.segments
            .iter()
            .any(|&(start, end)| (start..=end).contains(&frame))
    }

    /// Per-frame truth over `0..len`.
    pub fn frame_mask(&self, len: usize) -> Vec<bool> {
        let mut mask = vec![false; len];
        for &(start, end) in &self.segments {
            for slot in mask.iter_mut().take(end.saturating_add(1)).skip(start) {
                *slot = true;
            }
        }
        mask
    }

    /// Frames where the truth changes value, i.e. segment starts and the
    /// frame after each segment end.
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments
            .iter()
            .flat_map(|&(start, end)| [start, end + 1])
            .collect()
    }
}

/// `BetP(R) > threshold`.
pub fn decide(mass: &MassDistribution, threshold: f64) -> Result<bool, BeliefError> {
    Ok(mass.pignistic_of("R")? > threshold)
}

pub fn decide_all(masses: &[MassDistribution], threshold: f64) -> Result<Vec<bool>, BeliefError> {
    masses.iter().map(|m| decide(m, threshold)).collect()
}

/// Frame-wise recall and precision with the counts they came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub recall: f64,
    pub precision: f64,
    /// `|C|`: annotated frames.
    pub correct: usize,
    /// `|R|`: frames decided true.
    pub retrieved: usize,
    /// `|C ∩ R|`.
    pub hits: usize,
}

impl SegmentMetrics {
    /// Empty `C` gives recall 1 and empty `R` gives precision 1.
    pub fn from_counts(correct: usize, retrieved: usize, hits: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        Self {
            recall: ratio(hits, correct),
            precision: ratio(hits, retrieved),
            correct,
            retrieved,
            hits,
        }
    }
}

/// Scores decisions over frames `0..decisions.len()`; annotated frames
/// past the end are not counted.
pub fn segment_metrics(decisions: &[bool], truth: &SegmentAnnotation) -> SegmentMetrics {
    let mask = truth.frame_mask(decisions.len());
    let correct = mask.iter().filter(|&&t| t).count();
    let retrieved = decisions.iter().filter(|&&d| d).count();
    let hits = mask
        .iter()
        .zip(decisions)
        .filter(|(&t, &d)| t && d)
        .count();
    SegmentMetrics::from_counts(correct, retrieved, hits)
}

/// After minus before.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub action: String,
    pub before: SegmentMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after: Option<SegmentMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain: Option<Gain>,
}

impl ReportRow {
    pub fn new(action: impl Into<String>, before: SegmentMetrics, after: Option<SegmentMetrics>) -> Self {
        let gain = after.map(|a| Gain {
            recall: a.recall - before.recall,
            precision: a.precision - before.precision,
        });
        Self {
            action: action.into(),
            before,
            after,
            gain,
        }
    }

    /// `saut: avant 40.2/94.7, après 78.4/95.3, gain +38.2/+0.6`
    pub fn summary_line(&self) -> String {
        let b = self.before;
        let mut line = format!(
            "{}: avant {}/{}",
            self.action,
            percent(b.recall),
            percent(b.precision)
        );
        if let Some(a) = self.after {
            let _ = write!(
                line,
                ", après {}/{}, gain {}/{}",
                percent(a.recall),
                percent(a.precision),
                signed_gain(b.recall, a.recall),
                signed_gain(b.precision, a.precision)
            );
        }
        line
    }
}

/// Per-action rows plus a pooled mean row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub rows: Vec<ReportRow>,
    pub mean: ReportRow,
}

/// Decisions of one action before (and optionally after) filtering.
#[derive(Debug, Clone, Copy)]
pub struct ActionDecisions<'a> {
    pub truth: &'a SegmentAnnotation,
    pub before: &'a [bool],
    pub after: Option<&'a [bool]>,
}

/// Builds the report. The mean row pools frame counts over all actions.
pub fn gain_report(actions: &[ActionDecisions<'_>], threshold: f64) -> Result<EvalReport, EvalError> {
    let with_after = actions.iter().all(|a| a.after.is_some()) && !actions.is_empty();
    let mut rows = Vec::with_capacity(actions.len());
    for a in actions {
        if let Some(after) = a.after {
            if after.len() != a.before.len() {
                return Err(EvalError::LengthMismatch {
                    action: a.truth.action.clone(),
                    before: a.before.len(),
                    after: after.len(),
                });
            }
        }
        let before = segment_metrics(a.before, a.truth);
        let after = a
            .after
            .filter(|_| with_after)
            .map(|d| segment_metrics(d, a.truth));
        rows.push(ReportRow::new(a.truth.action.clone(), before, after));
    }
    let pooled = |pick: fn(&ReportRow) -> Option<SegmentMetrics>| {
        let (c, r, h) = rows
            .iter()
            .filter_map(pick)
            .fold((0, 0, 0), |(c, r, h), m| {
                (c + m.correct, r + m.retrieved, h + m.hits)
            });
        SegmentMetrics::from_counts(c, r, h)
    };
    let mean_before = pooled(|r| Some(r.before));
    let mean_after = with_after.then(|| pooled(|r| r.after));
    let mean = ReportRow::new("mean", mean_before, mean_after);
    Ok(EvalReport {
        threshold,
        rows,
        mean,
    })
}

impl EvalReport {
    pub fn has_after(&self) -> bool {
        self.mean.after.is_some()
    }

    /// Fixed-width table: action | avant R P | après R P | gain R P.
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.action.chars().count())
            .chain([self.mean.action.len(), "action".len()])
            .max()
            .unwrap_or(6);
        let mut out = String::new();
        let _ = write!(out, "{:<width$}  {:^13}", "action", "avant");
        if self.has_after() {
            let _ = write!(out, "  {:^13}  {:^15}", "après", "gain");
        }
        out.push('\n');
        let _ = write!(out, "{:<width$}  {:>6} {:>6}", "", "R", "P");
        if self.has_after() {
            let _ = write!(out, "  {:>6} {:>6}  {:>7} {:>7}", "R", "P", "R", "P");
        }
        out.push('\n');
        let rule_len = out.lines().next().map_or(0, |l| l.chars().count());
        let rule = "-".repeat(rule_len);
        out.push_str(&rule);
        out.push('\n');
        for row in &self.rows {
            render_row(&mut out, row, width);
        }
        out.push_str(&rule);
        out.push('\n');
        render_row(&mut out, &self.mean, width);
        out
    }
}

fn render_row(out: &mut String, row: &ReportRow, width: usize) {
    let b = row.before;
    let _ = write!(
        out,
        "{:<width$}  {:>6} {:>6}",
        row.action,
        percent(b.recall),
        percent(b.precision)
    );
    if let Some(a) = row.after {
        let _ = write!(
            out,
            "  {:>6} {:>6}  {:>7} {:>7}",
            percent(a.recall),
            percent(a.precision),
            signed_gain(b.recall, a.recall),
            signed_gain(b.precision, a.precision)
        );
    }
    out.push('\n');
}

fn tenths(fraction: f64) -> i64 {
    (fraction * 1000.0).round() as i64
}

fn percent(fraction: f64) -> String {
    let t = tenths(fraction);
    format!("{}.{}", t / 10, t % 10)
}

/// Difference of the displayed percentages, so the gain column always
/// agrees with the two columns next to it.
fn signed_gain(before: f64, after: f64) -> String {
    let g = tenths(after) - tenths(before);
    let sign = if g < 0 { '-' } else { '+' };
    format!("{sign}{}.{}", g.abs() / 10, g.abs() % 10)
}
