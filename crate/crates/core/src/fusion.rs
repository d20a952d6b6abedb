//! Per-frame fusion of parameter evidence into one measurement per action.
//!
//! An action is described by a logic rule over parameter states. `AND`
//! becomes conjunctive combination and `OR` disjunctive combination; every
//! leaf is discounted by its parameter's reliability before it is combined.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, MassDistribution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("no evidence for parameter `{0}`")]
    MissingParameter(String),
    #[error("`{0}` node needs at least two children")]
    TooFewChildren(&'static str),
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Logic rule over parameter states.
///
/// JSON form: `{"param": "stride"}`, `{"and": [..]}`, `{"or": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleExpr {
    #[serde(rename = "param")]
    Leaf(String),
    And(Vec<RuleExpr>),
    Or(Vec<RuleExpr>),
}

impl RuleExpr {
    pub fn leaf(param: impl Into<String>) -> Self {
        RuleExpr::Leaf(param.into())
    }

    /// Checks that every `and`/`or` node has at least two children.
    pub fn validate(&self) -> Result<(), FusionError> {
        match self {
            RuleExpr::Leaf(_) => Ok(()),
            RuleExpr::And(children) | RuleExpr::Or(children) => {
                if children.len() < 2 {
                    let kind = if matches!(self, RuleExpr::And(_)) {
                        "and"
                    } else {
                        "or"
                    };
                    return Err(FusionError::TooFewChildren(kind));
                }
                children.iter().try_for_each(RuleExpr::validate)
            }
        }
    }

    /// Parameter ids referenced by the rule.
    pub fn parameters(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_parameters(&mut out);
        out
    }

    fn collect_parameters<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            RuleExpr::Leaf(p) => {
                out.insert(p.as_str());
            }
            RuleExpr::And(children) | RuleExpr::Or(children) => {
                children.iter().for_each(|c| c.collect_parameters(out));
            }
        }
    }

    /// Measurement mass for the action this rule describes.
    pub fn evaluate(&self, evidence: &FrameEvidence) -> Result<MassDistribution, FusionError> {
        match self {
            RuleExpr::Leaf(param) => {
                let source = evidence
                    .get(param)
                    .ok_or_else(|| FusionError::MissingParameter(param.clone()))?;
                Ok(source.mass.discount(source.reliability)?)
            }
            RuleExpr::And(children) => fold(children, evidence, MassDistribution::combine_conjunctive),
            RuleExpr::Or(children) => fold(children, evidence, MassDistribution::combine_disjunctive),
        }
    }
}

fn fold(
    children: &[RuleExpr],
    evidence: &FrameEvidence,
    combine: fn(&MassDistribution, &MassDistribution) -> Result<MassDistribution, BeliefError>,
) -> Result<MassDistribution, FusionError> {
    let (first, rest) = children
        .split_first()
        .ok_or(FusionError::TooFewChildren("and/or"))?;
    rest.iter().try_fold(first.evaluate(evidence)?, |acc, child| {
        Ok(combine(&acc, &child.evaluate(evidence)?)?)
    })
}

/// One parameter's evidence at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceEvidence {
    pub mass: MassDistribution,
    pub reliability: f64,
}

/// Evidence of every parameter at one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameEvidence {
    sources: BTreeMap<String, SourceEvidence>,
}

impl FrameEvidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        param: impl Into<String>,
        mass: MassDistribution,
        reliability: f64,
    ) -> Result<(), FusionError> {
        if !(0.0..=1.0).contains(&reliability) {
            return Err(BeliefError::AlphaOutOfRange(reliability).into());
        }
        if let Some(existing) = self.sources.values().next() {
            if !existing.mass.same_frame(&mass) {
                return Err(BeliefError::FrameMismatch.into());
            }
        }
        self.sources
            .insert(param.into(), SourceEvidence { mass, reliability });
        Ok(())
    }

    pub fn with(
        mut self,
        param: impl Into<String>,
        mass: MassDistribution,
        reliability: f64,
    ) -> Result<Self, FusionError> {
        self.insert(param, mass, reliability)?;
        Ok(self)
    }

    pub fn get(&self, param: &str) -> Option<&SourceEvidence> {
        self.sources.get(param)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Free-function form of [`RuleExpr::evaluate`].
pub fn evaluate_rule(
    rule: &RuleExpr,
    evidence: &FrameEvidence,
) -> Result<MassDistribution, FusionError> {
    rule.evaluate(evidence)
}

/// Evaluates every action's rule on the same frame evidence. Actions are
/// independent of each other.
pub fn fuse_frame(
    rules: &BTreeMap<String, RuleExpr>,
    evidence: &FrameEvidence,
) -> Result<BTreeMap<String, MassDistribution>, FusionError> {
    rules
        .iter()
        .map(|(action, rule)| Ok((action.clone(), rule.evaluate(evidence)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Frame;

    fn bin(v: [f64; 4]) -> MassDistribution {
        MassDistribution::binary(v[0], v[1], v[2], v[3]).unwrap()
    }

    fn close(a: &MassDistribution, b: &[f64]) -> bool {
        a.masses().iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn and_matches_conjunctive() {
        let ev = FrameEvidence::new()
            .with("l1", bin([0.0, 0.6, 0.0, 0.4]), 1.0)
            .unwrap()
            .with("l2", bin([0.0, 0.0, 0.5, 0.5]), 1.0)
            .unwrap();
        let rule = RuleExpr::And(vec![RuleExpr::leaf("l1"), RuleExpr::leaf("l2")]);
        assert!(close(&rule.evaluate(&ev).unwrap(), &[0.3, 0.3, 0.2, 0.2]));
    }

    #[test]
    fn or_idempotent_on_certainty() {
        let ev = FrameEvidence::new()
            .with("l1", bin([0.0, 1.0, 0.0, 0.0]), 1.0)
            .unwrap();
        let rule = RuleExpr::Or(vec![RuleExpr::leaf("l1"), RuleExpr::leaf("l1")]);
        assert_eq!(rule.evaluate(&ev).unwrap().masses(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_reliability_leaf_is_vacuous() {
        let ev = FrameEvidence::new()
            .with("l1", bin([0.0, 0.9, 0.0, 0.1]), 0.0)
            .unwrap();
        let out = RuleExpr::leaf("l1").evaluate(&ev).unwrap();
        assert!(out.is_vacuous());
    }

    #[test]
    fn missing_parameter() {
        let rule = RuleExpr::leaf("nope");
        assert_eq!(
            rule.evaluate(&FrameEvidence::new()).unwrap_err(),
            FusionError::MissingParameter("nope".into())
        );
    }

    #[test]
    fn rejects_bad_reliability_and_frames() {
        let mut ev = FrameEvidence::new();
        assert!(ev.insert("a", bin([0.0, 0.0, 0.0, 1.0]), 1.2).is_err());
        ev.insert("a", bin([0.0, 0.0, 0.0, 1.0]), 1.0).unwrap();
        let other = MassDistribution::vacuous(Frame::new(["x", "y", "z"]).unwrap());
        assert_eq!(
            ev.insert("b", other, 1.0).unwrap_err(),
            FusionError::Belief(BeliefError::FrameMismatch)
        );
    }

    #[test]
    fn fuse_frame_is_per_action() {
        let ev = FrameEvidence::new()
            .with("stride", bin([0.0, 0.7, 0.0, 0.3]), 0.9)
            .unwrap()
            .with("cam_tx", bin([0.0, 0.5, 0.0, 0.5]), 1.0)
            .unwrap();
        let mut rules = BTreeMap::new();
        rules.insert("run".to_owned(), RuleExpr::leaf("stride"));
        rules.insert(
            "jump".to_owned(),
            RuleExpr::And(vec![RuleExpr::leaf("stride"), RuleExpr::leaf("cam_tx")]),
        );
        let out = fuse_frame(&rules, &ev).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out["run"], rules["run"].evaluate(&ev).unwrap());
        assert_eq!(out["jump"], rules["jump"].evaluate(&ev).unwrap());
        assert!(fuse_frame(&BTreeMap::new(), &ev).unwrap().is_empty());
    }

    #[test]
    fn rule_json_shape() {
        let rule: RuleExpr = serde_json::from_str(
            r#"{"and": [{"param": "stride"}, {"or": [{"param": "cam_tx"}, {"param": "height"}]}]}"#,
        )
        .unwrap();
        assert_eq!(
            rule,
            RuleExpr::And(vec![
                RuleExpr::leaf("stride"),
                RuleExpr::Or(vec![RuleExpr::leaf("cam_tx"), RuleExpr::leaf("height")]),
            ])
        );
        assert_eq!(
            rule.parameters().into_iter().collect::<Vec<_>>(),
            vec!["cam_tx", "height", "stride"]
        );
        assert!(rule.validate().is_ok());
        assert!(RuleExpr::And(vec![RuleExpr::leaf("a")]).validate().is_err());
    }
}
