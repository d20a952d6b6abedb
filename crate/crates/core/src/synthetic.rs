//! Seeded synthetic measurement streams with labelled truth, standing in for
//! a real feature-extraction front end.
//!
//! Inside a truth segment a frame's measurement leans on `R`, outside it
//! leans on `F`; the remainder is doubt. False-alarm bursts replace the
//! measurement with evidence for the opposite state.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Frame, Hypothesis, MassDistribution};
use crate::eval::{EvalError, SegmentAnnotation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("{field} = {value} is outside [0, 1]")]
    OutOfRange { field: String, value: f64 },
    #[error("`{action}`: {what} runs past the last frame ({frames} frames)")]
    OutOfBounds {
        action: String,
        what: String,
        frames: usize,
    },
    #[error("`{action}`: false alarm at frame {frame} has zero duration")]
    EmptyBurst { action: String, frame: usize },
    #[error(transparent)]
    Segments(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FalseAlarm {
    pub frame: usize,
    pub duration: usize,
    /// Mass put on the opposite state during the burst.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticAction {
    /// Inclusive frame intervals where the action is true.
    pub segments: Vec<(usize, usize)>,
    #[serde(default)]
    pub false_alarms: Vec<FalseAlarm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub frames: usize,
    /// Jitter amplitude: each frame loses up to this much belief to doubt.
    #[serde(default)]
    pub noise: f64,
    /// Doubt present in every non-burst frame.
    #[serde(default)]
    pub doubt_floor: f64,
    pub actions: BTreeMap<String, SyntheticAction>,
}

impl Default for SyntheticSpec {
    /// Three-action demo scene of 300 frames.
    fn default() -> Self {
        let burst = |frame, duration, intensity| FalseAlarm {
            frame,
            duration,
            intensity,
        };
        let mut actions = BTreeMap::new();
        actions.insert(
            "run".to_owned(),
            SyntheticAction {
                segments: vec![(20, 150)],
                false_alarms: vec![burst(60, 3, 0.8), burst(100, 2, 0.7), burst(200, 2, 0.6)],
            },
        );
        actions.insert(
            "jump".to_owned(),
            SyntheticAction {
                segments: vec![(150, 210)],
                false_alarms: vec![burst(80, 2, 0.7), burst(175, 3, 0.8)],
            },
        );
        actions.insert(
            "fall".to_owned(),
            SyntheticAction {
                segments: vec![(210, 280)],
                false_alarms: vec![burst(40, 3, 0.6), burst(240, 2, 0.8)],
            },
        );
        Self {
            seed: 42,
            frames: 300,
            noise: 0.1,
            doubt_floor: 0.0,
            actions,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let unit = |field: &str, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(SyntheticError::OutOfRange {
                    field: field.to_owned(),
                    value,
                })
            }
        };
        unit("noise", self.noise)?;
        unit("doubt_floor", self.doubt_floor)?;
        for (name, action) in &self.actions {
            let truth = SegmentAnnotation::new(name.clone(), action.segments.clone())?;
            if let Some(&(_, end)) = truth.segments.last() {
                if end >= self.frames {
                    return Err(SyntheticError::OutOfBounds {
                        action: name.clone(),
                        what: format!("segment ending at {end}"),
                        frames: self.frames,
                    });
                }
            }
            for fa in &action.false_alarms {
                unit(&format!("{name}.false_alarms.intensity"), fa.intensity)?;
                if fa.duration == 0 {
                    return Err(SyntheticError::EmptyBurst {
                        action: name.clone(),
                        frame: fa.frame,
                    });
                }
                if fa.frame + fa.duration > self.frames {
                    return Err(SyntheticError::OutOfBounds {
                        action: name.clone(),
                        what: format!("false alarm at {}", fa.frame),
                        frames: self.frames,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Measurements and truth per action.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTrace {
    pub masses: BTreeMap<String, Vec<MassDistribution>>,
    pub truth: Vec<SegmentAnnotation>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticTrace, SyntheticError> {
    spec.validate()?;
    let frame = Frame::binary();
    let mut masses = BTreeMap::new();
    let mut truth = Vec::new();
    for (index, (name, action)) in spec.actions.iter().enumerate() {
        let annotation = SegmentAnnotation::new(name.clone(), action.segments.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, index));
        let stream = (0..spec.frames)
            .map(|f| {
                let home = if annotation.contains(f) {
                    Hypothesis::True
                } else {
                    Hypothesis::False
                };
                let u: f64 = rng.gen();
                let burst = action
                    .false_alarms
                    .iter()
                    .find(|fa| (fa.frame..fa.frame + fa.duration).contains(&f));
                let (state, belief) = match burst {
                    Some(fa) => (home.opposite(), (fa.intensity - spec.noise * u).max(0.0)),
                    None => (home, (1.0 - spec.noise * u - spec.doubt_floor).max(0.0)),
                };
                let mut v = vec![0.0; 4];
                v[state.mask() as usize] = belief;
                v[3] = 1.0 - belief;
                MassDistribution::from_raw(frame.clone(), v)
            })
            .collect();
        masses.insert(name.clone(), stream);
        truth.push(annotation);
    }
    Ok(SyntheticTrace { masses, truth })
}

fn stream_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
