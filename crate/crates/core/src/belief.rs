//! Unnormalized belief functions on small finite frames of discernment.
//!
//! Subsets of a frame are addressed by bit masks: bit `i` stands for label
//! `i`, mask `0` is the empty set and `2^n - 1` is the whole frame. A
//! [`MassDistribution`] stores one mass per subset in a dense vector indexed
//! by that mask, so the binary layout is `[m(∅), m(R), m(F), m(Ω)]`.
//!
//! Mass on the empty set is allowed: conjunctive combination of disagreeing
//! sources produces it and it is read back as the conflict between them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported frame size.
pub const MAX_LABELS: usize = 16;

/// Tolerance on `Σ m = 1` when a distribution is built from user values.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// `m(∅)` at or above `1 - TOTAL_CONFLICT_TOLERANCE` counts as total conflict.
pub const TOTAL_CONFLICT_TOLERANCE: f64 = 1e-12;

/// Bit mask addressing a subset of a frame.
pub type Subset = u32;

/// The empty set.
pub const EMPTY: Subset = 0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("a frame of discernment needs between 1 and {MAX_LABELS} labels, got {0}")]
    FrameSize(usize),
    #[error("duplicate label `{0}` in frame of discernment")]
    DuplicateLabel(String),
    #[error("invalid label `{0}`: labels must be nonempty and free of `{{`, `}}` and `,`")]
    InvalidLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("masses sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("mass {value} on subset {subset:#b} is negative or not finite")]
    NegativeMass { subset: Subset, value: f64 },
    #[error("subset {0:#b} does not belong to the frame")]
    BadSubset(Subset),
    #[error("mass vector has {got} entries, the frame needs {expected}")]
    BadLength { expected: usize, got: usize },
    #[error("mass distributions are defined on different frames")]
    FrameMismatch,
    #[error("reliability {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("total conflict (m(∅) = {0})")]
    TotalConflict(f64),
}

/// Ordered set of mutually exclusive hypotheses.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    labels: Vec<String>,
}

impl Frame {
    pub fn new<I, S>(labels: I) -> Result<Arc<Self>, BeliefError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() || labels.len() > MAX_LABELS {
            return Err(BeliefError::FrameSize(labels.len()));
        }
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() || label.contains(['{', '}', ',']) {
                return Err(BeliefError::InvalidLabel(label.clone()));
            }
            if labels[..i].contains(label) {
                return Err(BeliefError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Arc::new(Self { labels }))
    }

    /// The shared `{R, F}` frame used for every action ("true" / "false").
    pub fn binary() -> Arc<Self> {
        static BINARY: OnceLock<Arc<Frame>> = OnceLock::new();
        BINARY
            .get_or_init(|| {
                Arc::new(Frame {
                    labels: vec!["R".to_owned(), "F".to_owned()],
                })
            })
            .clone()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.labels.len() == 2
    }

    /// Number of subsets, `2^n`.
    pub fn subset_count(&self) -> usize {
        1 << self.labels.len()
    }

    /// Mask of the whole frame.
    pub fn omega(&self) -> Subset {
        (self.subset_count() - 1) as Subset
    }

    pub fn contains_subset(&self, subset: Subset) -> bool {
        subset <= self.omega()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn singleton(&self, label: &str) -> Result<Subset, BeliefError> {
        self.index_of(label)
            .map(|i| 1 << i)
            .ok_or_else(|| BeliefError::UnknownLabel(label.to_owned()))
    }

    pub fn subset_of<S: AsRef<str>>(&self, members: &[S]) -> Result<Subset, BeliefError> {
        members
            .iter()
            .try_fold(EMPTY, |acc, m| Ok(acc | self.singleton(m.as_ref())?))
    }

    /// Renders a subset as `{}` / `{R}` / `{R,F}`.
    pub fn subset_label(&self, subset: Subset) -> String {
        let members: Vec<&str> = self
            .labels
            .iter()
            .enumerate()
            .filter(|(i, _)| subset & (1 << i) != 0)
            .map(|(_, l)| l.as_str())
            .collect();
        format!("{{{}}}", members.join(","))
    }

    /// Inverse of [`Frame::subset_label`]; surrounding braces are optional.
    pub fn parse_subset_label(&self, text: &str) -> Result<Subset, BeliefError> {
        let inner = text.trim();
        let inner = inner
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .unwrap_or(inner)
            .trim();
        if inner.is_empty() {
            return Ok(EMPTY);
        }
        inner
            .split(',')
            .try_fold(EMPTY, |acc, m| Ok(acc | self.singleton(m.trim())?))
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.subset_label(self.omega()))
    }
}

/// One of the two hypotheses of a binary action frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// `R`: the action is happening.
    #[serde(rename = "R")]
    True,
    /// `F`: the action is not happening.
    #[serde(rename = "F")]
    False,
}

impl Hypothesis {
    pub fn mask(self) -> Subset {
        match self {
            Hypothesis::True => 0b01,
            Hypothesis::False => 0b10,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Hypothesis::True => Hypothesis::False,
            Hypothesis::False => Hypothesis::True,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::True => "R",
            Hypothesis::False => "F",
        }
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Basic belief assignment over the powerset of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MassDistribution {
    frame: Arc<Frame>,
    masses: Vec<f64>,
}

impl MassDistribution {
    /// Builds a distribution from `(subset, mass)` pairs. Subsets that are
    /// not listed get zero; a subset listed twice accumulates.
    pub fn new<I>(frame: Arc<Frame>, assignments: I) -> Result<Self, BeliefError>
    where
        I: IntoIterator<Item = (Subset, f64)>,
    {
        let mut masses = vec![0.0; frame.subset_count()];
        for (subset, value) in assignments {
            if !frame.contains_subset(subset) {
                return Err(BeliefError::BadSubset(subset));
            }
            masses[subset as usize] += value;
        }
        Self::from_vec(frame, masses)
    }

    /// Builds a distribution from a dense vector indexed by subset mask.
    pub fn from_vec(frame: Arc<Frame>, masses: Vec<f64>) -> Result<Self, BeliefError> {
        if masses.len() != frame.subset_count() {
            return Err(BeliefError::BadLength {
                expected: frame.subset_count(),
                got: masses.len(),
            });
        }
        for (subset, &value) in masses.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(BeliefError::NegativeMass {
                    subset: subset as Subset,
                    value,
                });
            }
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(BeliefError::NotNormalized { sum });
        }
        Ok(Self { frame, masses })
    }

    /// `[m(∅), m(R), m(F), m(Ω)]` on the shared binary frame.
    pub fn binary(empty: f64, r: f64, f: f64, omega: f64) -> Result<Self, BeliefError> {
        Self::from_vec(Frame::binary(), vec![empty, r, f, omega])
    }

    /// Total ignorance: all mass on the whole frame.
    pub fn vacuous(frame: Arc<Frame>) -> Self {
        Self::certain(frame.clone(), frame.omega())
    }

    /// Mass 1 on a single subset. Panics if the subset is not in the frame.
    pub fn certain(frame: Arc<Frame>, subset: Subset) -> Self {
        assert!(frame.contains_subset(subset), "subset outside frame");
        let mut masses = vec![0.0; frame.subset_count()];
        masses[subset as usize] = 1.0;
        Self { frame, masses }
    }

    pub(crate) fn from_raw(frame: Arc<Frame>, masses: Vec<f64>) -> Self {
        debug_assert_eq!(masses.len(), frame.subset_count());
        Self { frame, masses }
    }

    pub fn frame(&self) -> &Arc<Frame> {
        &self.frame
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, subset: Subset) -> f64 {
        self.masses.get(subset as usize).copied().unwrap_or(0.0)
    }

    pub fn same_frame(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.frame, &other.frame) || self.frame == other.frame
    }

    /// `[m(∅), m(R), m(F), m(Ω)]` for binary frames.
    pub fn binary_vector(&self) -> Option<[f64; 4]> {
        self.frame
            .is_binary()
            .then(|| [self.masses[0], self.masses[1], self.masses[2], self.masses[3]])
    }

    /// Subsets with nonzero mass, in mask order.
    pub fn focal_elements(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(s, &m)| (s as Subset, m))
    }

    /// Mass on the empty set.
    pub fn conflict_mass(&self) -> f64 {
        self.masses[EMPTY as usize]
    }

    /// `true` when no mass sits on the empty set.
    pub fn is_normalized(&self) -> bool {
        self.conflict_mass() == 0.0
    }

    pub fn is_vacuous(&self) -> bool {
        self.focal_elements()
            .all(|(subset, _)| subset == self.frame.omega())
    }

    /// Binary frame, no conflict, and at most one singleton carries mass.
    pub fn is_consonant_binary(&self) -> bool {
        match self.binary_vector() {
            Some([empty, r, f, _]) => empty == 0.0 && (r == 0.0 || f == 0.0),
            None => false,
        }
    }

    pub fn combine_conjunctive(&self, other: &Self) -> Result<Self, BeliefError> {
        self.combine(other, Rule::Conjunctive)
    }

    pub fn combine_disjunctive(&self, other: &Self) -> Result<Self, BeliefError> {
        self.combine(other, Rule::Disjunctive)
    }

    fn combine(&self, other: &Self, rule: Rule) -> Result<Self, BeliefError> {
        if !self.same_frame(other) {
            return Err(BeliefError::FrameMismatch);
        }
        let focal_a: Vec<(Subset, f64)> = self.focal_elements().collect();
        let focal_b: Vec<(Subset, f64)> = other.focal_elements().collect();
        let size = self.frame.subset_count();
        // Transform route costs about three passes of n * 2^n.
        let transform_cost = 3 * size * self.frame.len();
        let masses = if focal_a.len() * focal_b.len() <= transform_cost {
            combine_focal(&focal_a, &focal_b, size, rule)
        } else {
            combine_transform(&self.masses, &other.masses, self.frame.len(), rule)
        };
        Ok(Self::from_raw(self.frame.clone(), masses))
    }

    /// Classical discounting by reliability `alpha`: every subset other than
    /// the frame keeps `alpha` of its mass and the rest moves to the frame.
    pub fn discount(&self, alpha: f64) -> Result<Self, BeliefError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(BeliefError::AlphaOutOfRange(alpha));
        }
        let omega = self.frame.omega() as usize;
        let masses = self
            .masses
            .iter()
            .enumerate()
            .map(|(s, &m)| {
                if s == omega {
                    (1.0 - alpha) + alpha * m
                } else {
                    alpha * m
                }
            })
            .collect();
        Ok(Self::from_raw(self.frame.clone(), masses))
    }

    /// Pignistic probability of each label, in frame order.
    pub fn pignistic(&self) -> Result<Vec<f64>, BeliefError> {
        let conflict = self.conflict_mass();
        if conflict >= 1.0 - TOTAL_CONFLICT_TOLERANCE {
            return Err(BeliefError::TotalConflict(conflict));
        }
        let n = self.frame.len();
        let mut probs = vec![0.0; n];
        for (subset, m) in self.focal_elements().filter(|&(s, _)| s != EMPTY) {
            let share = m / f64::from(subset.count_ones());
            for (i, p) in probs.iter_mut().enumerate() {
                if subset & (1 << i) != 0 {
                    *p += share;
                }
            }
        }
        let scale = 1.0 - conflict;
        probs.iter_mut().for_each(|p| *p /= scale);
        Ok(probs)
    }

    /// Pignistic probability of one label.
    pub fn pignistic_of(&self, label: &str) -> Result<f64, BeliefError> {
        let idx = self
            .frame
            .index_of(label)
            .ok_or_else(|| BeliefError::UnknownLabel(label.to_owned()))?;
        Ok(self.pignistic()?[idx])
    }

    /// Dempster's normalization: drop the conflict and rescale the rest.
    pub fn dempster_normalize(&self) -> Result<Self, BeliefError> {
        let conflict = self.conflict_mass();
        if conflict >= 1.0 - TOTAL_CONFLICT_TOLERANCE {
            return Err(BeliefError::TotalConflict(conflict));
        }
        if conflict == 0.0 {
            return Ok(self.clone());
        }
        let scale = 1.0 / (1.0 - conflict);
        let mut masses: Vec<f64> = self.masses.iter().map(|m| m * scale).collect();
        masses[EMPTY as usize] = 0.0;
        Ok(Self::from_raw(self.frame.clone(), masses))
    }

    /// Focal elements keyed by their `{a,b}` label.
    pub fn to_label_map(&self) -> BTreeMap<String, f64> {
        self.focal_elements()
            .map(|(s, m)| (self.frame.subset_label(s), m))
            .collect()
    }

    pub fn from_label_map(
        frame: Arc<Frame>,
        map: &BTreeMap<String, f64>,
    ) -> Result<Self, BeliefError> {
        let assignments = map
            .iter()
            .map(|(k, &v)| Ok((frame.parse_subset_label(k)?, v)))
            .collect::<Result<Vec<_>, BeliefError>>()?;
        Self::new(frame, assignments)
    }
}

impl fmt::Display for MassDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, m) in self.masses.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "]")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Rule {
    Conjunctive,
    Disjunctive,
}

impl Rule {
    fn apply(self, a: Subset, b: Subset) -> Subset {
        match self {
            Rule::Conjunctive => a & b,
            Rule::Disjunctive => a | b,
        }
    }
}

/// Direct sum over pairs of focal elements. Exact zeros stay exact.
pub(crate) fn combine_focal(
    a: &[(Subset, f64)],
    b: &[(Subset, f64)],
    size: usize,
    rule: Rule,
) -> Vec<f64> {
    let mut out = vec![0.0; size];
    for &(sa, ma) in a {
        for &(sb, mb) in b {
            out[rule.apply(sa, sb) as usize] += ma * mb;
        }
    }
    out
}

/// Combination through the commonality (conjunctive) or implicability
/// (disjunctive) transform, where both rules become pointwise products.
pub(crate) fn combine_transform(a: &[f64], b: &[f64], n: usize, rule: Rule) -> Vec<f64> {
    let mut qa = a.to_vec();
    let mut qb = b.to_vec();
    forward(&mut qa, n, rule);
    forward(&mut qb, n, rule);
    qa.iter_mut().zip(&qb).for_each(|(x, y)| *x *= y);
    inverse(&mut qa, n, rule);
    for m in &mut qa {
        // rounding residue of the inverse transform
        if *m < 0.0 && *m > -1e-12 {
            *m = 0.0;
        }
    }
    qa
}

fn forward(v: &mut [f64], n: usize, rule: Rule) {
    for bit in (0..n).map(|i| 1usize << i) {
        for s in 0..v.len() {
            if s & bit == 0 {
                match rule {
                    Rule::Conjunctive => v[s] += v[s | bit],
                    Rule::Disjunctive => v[s | bit] += v[s],
                }
            }
        }
    }
}

fn inverse(v: &mut [f64], n: usize, rule: Rule) {
    for bit in (0..n).map(|i| 1usize << i) {
        for s in 0..v.len() {
            if s & bit == 0 {
                match rule {
                    Rule::Conjunctive => v[s] -= v[s | bit],
                    Rule::Disjunctive => v[s | bit] -= v[s],
                }
            }
        }
    }
}
