//! Numeric-to-symbolic conversion: a parameter value becomes a mass
//! distribution on an action's binary frame through two trapezoidal
//! membership functions, one for "true" and one for "false". Whatever
//! membership is left over goes to doubt, `m(Ω) = 1 - μ_true - μ_false`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Frame, MassDistribution};

/// Grid step used when scanning a partition for overlap.
pub const SCAN_STEP: f64 = 1e-3;

const OVERLAP_TOLERANCE: f64 = 1e-9;
const MAX_SCAN_POINTS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuzzyError {
    #[error("non-finite input value {0}")]
    NonFiniteInput(f64),
    #[error("invalid trapezoid knots {0:?}: need a <= b <= c <= d, with a/b and c/d null together")]
    BadKnots([Option<f64>; 4]),
    #[error("invalid input range [{0}, {1}]")]
    BadRange(f64, f64),
    #[error("membership functions overlap: μ_true + μ_false = {sum} at x = {x}")]
    PartitionOverlap { x: f64, sum: f64 },
}

/// Trapezoidal membership function.
///
/// `a..b` is the rising ramp, `b..c` the plateau at 1, `c..d` the falling
/// ramp. A missing `a`/`b` pair extends the plateau to `-∞`, a missing
/// `c`/`d` pair extends it to `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Option<f64>; 4]", into = "[Option<f64>; 4]")]
pub struct Trapezoid {
    rise: Option<(f64, f64)>,
    fall: Option<(f64, f64)>,
}

impl Trapezoid {
    pub fn new(
        a: Option<f64>,
        b: Option<f64>,
        c: Option<f64>,
        d: Option<f64>,
    ) -> Result<Self, FuzzyError> {
        let knots = [a, b, c, d];
        let bad = || FuzzyError::BadKnots(knots);
        let pair = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (None, None) => Ok(None),
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() && x <= y => Ok(Some((x, y))),
            _ => Err(bad()),
        };
        let rise = pair(a, b)?;
        let fall = pair(c, d)?;
        if let (Some((_, b)), Some((c, _))) = (rise, fall) {
            if b > c {
                return Err(bad());
            }
        }
        Ok(Self { rise, fall })
    }

    /// Closed trapezoid with all four knots finite.
    pub fn closed(a: f64, b: f64, c: f64, d: f64) -> Result<Self, FuzzyError> {
        Self::new(Some(a), Some(b), Some(c), Some(d))
    }

    /// Ramp from 0 at `a` to 1 at `b`, then 1 forever.
    pub fn rising(a: f64, b: f64) -> Result<Self, FuzzyError> {
        Self::new(Some(a), Some(b), None, None)
    }

    /// 1 up to `c`, ramp down to 0 at `d`.
    pub fn falling(c: f64, d: f64) -> Result<Self, FuzzyError> {
        Self::new(None, None, Some(c), Some(d))
    }

    pub fn knots(&self) -> [Option<f64>; 4] {
        [
            self.rise.map(|r| r.0),
            self.rise.map(|r| r.1),
            self.fall.map(|f| f.0),
            self.fall.map(|f| f.1),
        ]
    }

    pub fn membership(&self, x: f64) -> f64 {
        if let Some((a, b)) = self.rise {
            if x < b {
                return if x <= a { 0.0 } else { (x - a) / (b - a) };
            }
        }
        if let Some((c, d)) = self.fall {
            if x > c {
                return if x >= d { 0.0 } else { (d - x) / (d - c) };
            }
        }
        1.0
    }

    fn finite_knots(&self) -> impl Iterator<Item = f64> {
        self.knots().into_iter().flatten()
    }
}

impl TryFrom<[Option<f64>; 4]> for Trapezoid {
    type Error = FuzzyError;

    fn try_from(k: [Option<f64>; 4]) -> Result<Self, Self::Error> {
        Self::new(k[0], k[1], k[2], k[3])
    }
}

impl From<Trapezoid> for [Option<f64>; 4] {
    fn from(t: Trapezoid) -> Self {
        t.knots()
    }
}

/// Point where `1 - μ_true - μ_false` is most negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionViolation {
    pub x: f64,
    pub sum: f64,
}

/// Checks `μ_true + μ_false <= 1` on `[lo, hi]`.
///
/// Both functions are piecewise linear, so the sum peaks at a knot or an
/// end of the range; a grid scan at [`SCAN_STEP`] is run on top of the
/// knot check.
pub fn validate_partition(
    mu_true: &Trapezoid,
    mu_false: &Trapezoid,
    range: (f64, f64),
) -> Result<(), PartitionViolation> {
    let (lo, hi) = range;
    let sum = |x: f64| mu_true.membership(x) + mu_false.membership(x);
    let knots = mu_true
        .finite_knots()
        .chain(mu_false.finite_knots())
        .filter(|k| (lo..=hi).contains(k));
    let steps = (((hi - lo) / SCAN_STEP).ceil() as usize).min(MAX_SCAN_POINTS);
    let grid = (0..=steps).map(|i| (lo + i as f64 * SCAN_STEP).min(hi));

    let worst = [lo, hi]
        .into_iter()
        .chain(knots)
        .chain(grid)
        .map(|x| (x, sum(x)))
        .fold(None, |best: Option<(f64, f64)>, cur| match best {
            Some(b) if b.1 >= cur.1 => Some(b),
            _ => Some(cur),
        });
    match worst {
        Some((x, s)) if 1.0 - s < -OVERLAP_TOLERANCE => Err(PartitionViolation { x, sum: s }),
        _ => Ok(()),
    }
}

/// Pair of membership functions for one parameter, validated on an input
/// range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionSpec", into = "PartitionSpec")]
pub struct FuzzyPartition {
    mu_true: Trapezoid,
    mu_false: Trapezoid,
    range: (f64, f64),
}

impl FuzzyPartition {
    pub fn new(
        mu_true: Trapezoid,
        mu_false: Trapezoid,
        range: (f64, f64),
    ) -> Result<Self, FuzzyError> {
        let (lo, hi) = range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(FuzzyError::BadRange(lo, hi));
        }
        validate_partition(&mu_true, &mu_false, range)
            .map_err(|v| FuzzyError::PartitionOverlap { x: v.x, sum: v.sum })?;
        Ok(Self {
            mu_true,
            mu_false,
            range,
        })
    }

    /// Like [`FuzzyPartition::new`], scanning the knot span padded by one
    /// unit on each side.
    pub fn with_default_range(mu_true: Trapezoid, mu_false: Trapezoid) -> Result<Self, FuzzyError> {
        let range = default_range(&mu_true, &mu_false);
        Self::new(mu_true, mu_false, range)
    }

    pub fn mu_true(&self) -> &Trapezoid {
        &self.mu_true
    }

    pub fn mu_false(&self) -> &Trapezoid {
        &self.mu_false
    }

    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    /// Mass distribution `[0, μ_true(x), μ_false(x), 1 - μ_true(x) - μ_false(x)]`.
    pub fn fuzzify(&self, x: f64) -> Result<MassDistribution, FuzzyError> {
        if !x.is_finite() {
            return Err(FuzzyError::NonFiniteInput(x));
        }
        let r = self.mu_true.membership(x);
        let f = self.mu_false.membership(x);
        let doubt = 1.0 - r - f;
        if doubt < -OVERLAP_TOLERANCE {
            return Err(FuzzyError::PartitionOverlap { x, sum: r + f });
        }
        let (r, f, doubt) = if doubt < 0.0 {
            // renormalize a sub-tolerance overshoot
            let s = r + f;
            (r / s, f / s, 0.0)
        } else {
            (r, f, doubt)
        };
        Ok(MassDistribution::from_raw(
            Frame::binary(),
            vec![0.0, r, f, doubt],
        ))
    }
}

/// Free-function form of [`FuzzyPartition::fuzzify`].
pub fn fuzzify_value(x: f64, partition: &FuzzyPartition) -> Result<MassDistribution, FuzzyError> {
    partition.fuzzify(x)
}

fn default_range(mu_true: &Trapezoid, mu_false: &Trapezoid) -> (f64, f64) {
    let knots: Vec<f64> = mu_true
        .finite_knots()
        .chain(mu_false.finite_knots())
        .collect();
    let lo = knots.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = knots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if knots.is_empty() {
        (-1.0, 1.0)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

#[derive(Serialize, Deserialize)]
struct PartitionSpec {
    #[serde(rename = "true")]
    mu_true: Trapezoid,
    #[serde(rename = "false")]
    mu_false: Trapezoid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<[f64; 2]>,
}

impl TryFrom<PartitionSpec> for FuzzyPartition {
    type Error = FuzzyError;

    fn try_from(spec: PartitionSpec) -> Result<Self, Self::Error> {
        match spec.range {
            Some([lo, hi]) => Self::new(spec.mu_true, spec.mu_false, (lo, hi)),
            None => Self::with_default_range(spec.mu_true, spec.mu_false),
        }
    }
}

impl From<FuzzyPartition> for PartitionSpec {
    fn from(p: FuzzyPartition) -> Self {
        PartitionSpec {
            mu_true: p.mu_true,
            mu_false: p.mu_false,
            range: Some([p.range.0, p.range.1]),
        }
    }
}
