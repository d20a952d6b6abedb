//! Temporal belief filter for one action stream.
//!
//! Each frame runs three stages:
//!
//! 1. **Prediction.** The previous output is combined disjunctively with the
//!    current evolution model ("if the state was `X` at `f-1` it is still
//!    `X` at `f` with belief `γ`").
//! 2. **Fusion.** The prediction is combined conjunctively with the
//!    measurement. The mass landing on `∅` is the conflict `ε` between model
//!    and data. Without conflict the fused mass is the output; with conflict
//!    the measurement is ignored and the prediction is the output.
//! 3. **Change detection.** `ε` feeds a CUSUM with forgetting,
//!    `CS(f) = λ·CS(f-1) + ε`. Crossing the warning threshold remembers the
//!    frame `f_w`; crossing the stop threshold at `f_s` switches to the other
//!    model, resets the CUSUM and rewrites the transition interval
//!    `[f_w, min(f_s, f_w + W)]` to total ignorance.
//!
//! Outputs produced while a warning is pending can still be rewritten, so
//! they are held back until the warning clears, a switch happens, or the
//! stream ends. [`StepOutput::finalized`] reports outputs as they become
//! final.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{BeliefError, Frame, Hypothesis, MassDistribution};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("invalid filter configuration: {0}")]
    InvalidConfig(String),
    #[error("model confidence {0} is outside [0, 1]")]
    GammaOutOfRange(f64),
    #[error("the filter works on the binary {{R,F}} frame")]
    NotBinary,
    #[error("previous output carries mass outside {{{target}, Ω}}")]
    InconsistentPrior { target: Hypothesis },
    #[error("measurement has conflict mass {0}; normalize it before filtering")]
    NonNormalizedMeasurement(f64),
    #[error("no measurements to initialize from")]
    EmptyInput,
    #[error(transparent)]
    Belief(#[from] BeliefError),
}

/// Tuning of the filter. Defaults are `λ = 0.9`, `γ_R = γ_F = 0.9`,
/// `T_s = 3`, `T_w = 0.5`, `W = 5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Confidence of the "stays true" model.
    pub gamma_true: f64,
    /// Confidence of the "stays false" model.
    pub gamma_false: f64,
    /// CUSUM forgetting factor.
    pub lambda: f64,
    /// Stop threshold: the model switches when the CUSUM reaches it.
    pub t_stop: f64,
    /// Warning threshold: marks the candidate start of a transition.
    pub t_warn: f64,
    /// Longest transition interval, in frames past the warning frame.
    pub w_max: usize,
    /// Frames used to pick the initial model.
    pub init_window: usize,
    /// Conflict at or below this value counts as no conflict.
    pub eps_zero: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            gamma_true: 0.9,
            gamma_false: 0.9,
            lambda: 0.9,
            t_stop: 3.0,
            t_warn: 0.5,
            w_max: 5,
            init_window: 5,
            eps_zero: 1e-12,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(FilterError::InvalidConfig(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("gamma_true", self.gamma_true)?;
        unit("gamma_false", self.gamma_false)?;
        unit("lambda", self.lambda)?;
        if !(self.t_warn > 0.0 && self.t_warn < self.t_stop) {
            return Err(FilterError::InvalidConfig(format!(
                "thresholds need 0 < t_warn < t_stop, got t_warn = {}, t_stop = {}",
                self.t_warn, self.t_stop
            )));
        }
        if self.w_max == 0 {
            return Err(FilterError::InvalidConfig("w_max must be at least 1".into()));
        }
        if self.init_window == 0 {
            return Err(FilterError::InvalidConfig("init_window must be at least 1".into()));
        }
        if !(self.eps_zero >= 0.0 && self.eps_zero < 1.0) {
            return Err(FilterError::InvalidConfig(format!(
                "eps_zero = {} is outside [0, 1)",
                self.eps_zero
            )));
        }
        Ok(())
    }

    pub fn gamma(&self, target: Hypothesis) -> f64 {
        match target {
            Hypothesis::True => self.gamma_true,
            Hypothesis::False => self.gamma_false,
        }
    }

    pub fn model(&self, target: Hypothesis) -> EvolutionModel {
        EvolutionModel {
            target,
            gamma: self.gamma(target),
        }
    }
}

/// "The state persists with belief `gamma`" for one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionModel {
    target: Hypothesis,
    gamma: f64,
}

impl EvolutionModel {
    pub fn new(target: Hypothesis, gamma: f64) -> Result<Self, FilterError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(FilterError::GammaOutOfRange(gamma));
        }
        Ok(Self { target, gamma })
    }

    pub fn target(&self) -> Hypothesis {
        self.target
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The model as a mass distribution: `γ` on the target, `1 - γ` on `Ω`.
    pub fn mass(&self) -> MassDistribution {
        let mut masses = vec![0.0; 4];
        masses[self.target.mask() as usize] = self.gamma;
        masses[3] = 1.0 - self.gamma;
        MassDistribution::from_raw(Frame::binary(), masses)
    }

    /// One-step prediction: disjunctive combination of the model with the
    /// previous output, which must only carry mass on the target and `Ω`.
    pub fn predict(&self, prev: &MassDistribution) -> Result<MassDistribution, FilterError> {
        let [empty, _, _, _] = prev.binary_vector().ok_or(FilterError::NotBinary)?;
        if empty != 0.0 || prev.mass(self.target.opposite().mask()) != 0.0 {
            return Err(FilterError::InconsistentPrior {
                target: self.target,
            });
        }
        Ok(self.mass().combine_disjunctive(prev)?)
    }
}

/// What the filter reports besides its outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    /// The CUSUM reached the warning threshold at `f_w`.
    Warning { f_w: usize },
    /// The CUSUM fell back under the warning threshold; the warning raised
    /// at `f_w` is dropped.
    WarningCleared { f_w: usize },
    /// The CUSUM reached the stop threshold at `f_s`.
    ModelSwitch {
        f_w: usize,
        f_s: usize,
        new_target: Hypothesis,
    },
    /// Frames `start..=end` were rewritten to total ignorance.
    TransitionInterval { start: usize, end: usize },
}

/// An event stamped with the frame being processed when it fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterEvent {
    pub frame: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// A frame's output that will not change any more.
#[derive(Debug, Clone, PartialEq)]
pub struct Finalized {
    pub frame: usize,
    pub output: MassDistribution,
}

/// Conflict and CUSUM computed for a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTrace {
    pub frame: usize,
    pub conflict: f64,
    pub cusum: f64,
}

/// Result of feeding one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub frame: usize,
    /// Output computed for this frame before any later rewrite.
    pub provisional: MassDistribution,
    pub conflict: f64,
    pub cusum: f64,
    pub events: Vec<FilterEvent>,
    /// Outputs that became final during this step, in frame order.
    pub finalized: Vec<Finalized>,
    /// Conflict/CUSUM for this frame and for any frames recomputed under a
    /// new model during this step.
    pub trace: Vec<FrameTrace>,
}

#[derive(Debug, Clone)]
struct Pending {
    frame: usize,
    output: MassDistribution,
    measurement: MassDistribution,
}

/// Running state of the filter for one action.
#[derive(Debug, Clone)]
pub struct FilterState {
    config: FilterConfig,
    model: EvolutionModel,
    cusum: f64,
    warn_frame: Option<usize>,
    prev_out: MassDistribution,
    next_frame: usize,
    pending: Vec<Pending>,
}

impl FilterState {
    /// Fresh state at frame 0 under `target`, starting from ignorance.
    pub fn new(config: FilterConfig, target: Hypothesis) -> Result<Self, FilterError> {
        Self::with_prior(config, target, MassDistribution::vacuous(Frame::binary()), 0)
    }

    /// State whose previous output is `prior`; the next measurement gets
    /// frame number `start_frame`.
    pub fn with_prior(
        config: FilterConfig,
        target: Hypothesis,
        prior: MassDistribution,
        start_frame: usize,
    ) -> Result<Self, FilterError> {
        config.validate()?;
        let model = config.model(target);
        // rejects priors the model cannot predict from
        model.predict(&prior)?;
        Ok(Self {
            config,
            model,
            cusum: 0.0,
            warn_frame: None,
            prev_out: prior,
            next_frame: start_frame,
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn model(&self) -> EvolutionModel {
        self.model
    }

    pub fn cusum(&self) -> f64 {
        self.cusum
    }

    pub fn warn_frame(&self) -> Option<usize> {
        self.warn_frame
    }

    pub fn prev_output(&self) -> &MassDistribution {
        &self.prev_out
    }

    /// Frame number the next measurement will get.
    pub fn next_frame(&self) -> usize {
        self.next_frame
    }

    /// Number of outputs held back by a pending warning.
    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn step(&mut self, measurement: &MassDistribution) -> Result<StepOutput, FilterError> {
        check_measurement(measurement)?;
        let frame = self.next_frame;
        let mut out = StepOutput {
            frame,
            provisional: measurement.clone(),
            conflict: 0.0,
            cusum: 0.0,
            events: Vec::new(),
            finalized: Vec::new(),
            trace: Vec::new(),
        };
        let (provisional, conflict, cusum) = self.process(frame, measurement, &mut out)?;
        out.provisional = provisional;
        out.conflict = conflict;
        out.cusum = cusum;
        self.next_frame += 1;
        Ok(out)
    }

    /// Ends the stream: every held-back output becomes final unchanged.
    pub fn finish(&mut self) -> Vec<Finalized> {
        self.warn_frame = None;
        self.pending
            .drain(..)
            .map(|p| Finalized {
                frame: p.frame,
                output: p.output,
            })
            .collect()
    }

    fn process(
        &mut self,
        frame: usize,
        measurement: &MassDistribution,
        out: &mut StepOutput,
    ) -> Result<(MassDistribution, f64, f64), FilterError> {
        let (output, conflict) = filter_update(&self.model, &self.prev_out, measurement, self.config.eps_zero)?;
        self.cusum = self.cusum * self.config.lambda + conflict;
        let cusum = self.cusum;
        self.prev_out = output.clone();
        out.trace.push(FrameTrace {
            frame,
            conflict,
            cusum,
        });

        let warning = cusum >= self.config.t_warn;
        match (self.warn_frame, warning) {
            (None, true) => {
                self.warn_frame = Some(frame);
                out.events.push(FilterEvent {
                    frame: out.frame,
                    kind: EventKind::Warning { f_w: frame },
                });
                self.hold(frame, &output, measurement);
            }
            (Some(_), true) => self.hold(frame, &output, measurement),
            (Some(f_w), false) => {
                self.warn_frame = None;
                out.events.push(FilterEvent {
                    frame: out.frame,
                    kind: EventKind::WarningCleared { f_w },
                });
                out.finalized.extend(self.pending.drain(..).map(|p| Finalized {
                    frame: p.frame,
                    output: p.output,
                }));
                out.finalized.push(Finalized {
                    frame,
                    output: output.clone(),
                });
            }
            (None, false) => out.finalized.push(Finalized {
                frame,
                output: output.clone(),
            }),
        }

        if cusum >= self.config.t_stop {
            self.switch_model(frame, out)?;
        }
        Ok((output, conflict, cusum))
    }

    fn hold(&mut self, frame: usize, output: &MassDistribution, measurement: &MassDistribution) {
        self.pending.push(Pending {
            frame,
            output: output.clone(),
            measurement: measurement.clone(),
        });
    }

    fn switch_model(&mut self, f_s: usize, out: &mut StepOutput) -> Result<(), FilterError> {
        // stop implies warning, so the warning frame is set here
        let f_w = self.warn_frame.unwrap_or(f_s);
        let end = f_s.min(f_w + self.config.w_max);
        let new_target = self.model.target().opposite();
        out.events.push(FilterEvent {
            frame: out.frame,
            kind: EventKind::ModelSwitch { f_w, f_s, new_target },
        });
        out.events.push(FilterEvent {
            frame: out.frame,
            kind: EventKind::TransitionInterval { start: f_w, end },
        });

        let held = std::mem::take(&mut self.pending);
        let vacuous = MassDistribution::vacuous(Frame::binary());
        let (interval, beyond): (Vec<Pending>, Vec<Pending>) =
            held.into_iter().partition(|p| p.frame <= end);
        out.finalized.extend(interval.into_iter().map(|p| Finalized {
            frame: p.frame,
            output: vacuous.clone(),
        }));

        self.model = self.config.model(new_target);
        self.cusum = 0.0;
        self.warn_frame = None;
        self.prev_out = vacuous;
        // frames between the capped interval and f_s rerun under the new model
        for p in beyond {
            self.process(p.frame, &p.measurement, out)?;
        }
        Ok(())
    }
}

fn check_measurement(m: &MassDistribution) -> Result<(), FilterError> {
    if !m.frame().is_binary() {
        return Err(FilterError::NotBinary);
    }
    if !m.is_normalized() {
        return Err(FilterError::NonNormalizedMeasurement(m.conflict_mass()));
    }
    Ok(())
}

/// Prediction, fusion and the output choice for one frame. Returns the
/// output and the conflict between prediction and measurement.
fn filter_update(
    model: &EvolutionModel,
    prev: &MassDistribution,
    measurement: &MassDistribution,
    eps_zero: f64,
) -> Result<(MassDistribution, f64), FilterError> {
    let prediction = model.predict(prev)?;
    let fused = prediction.combine_conjunctive(measurement)?;
    let conflict = fused.conflict_mass();
    let output = if conflict <= eps_zero {
        restrict_to_model(&fused.dempster_normalize()?, model.target())
    } else {
        prediction
    };
    Ok((output, conflict))
}

/// Moves mass on the model's opposite singleton to `Ω`. Only a prediction
/// with no mass on the target lets such mass through the fusion step.
fn restrict_to_model(m: &MassDistribution, target: Hypothesis) -> MassDistribution {
    let opposite = target.opposite().mask() as usize;
    let mut masses = m.masses().to_vec();
    if masses[opposite] != 0.0 {
        masses[3] += masses[opposite];
        masses[opposite] = 0.0;
    }
    MassDistribution::from_raw(m.frame().clone(), masses)
}

/// Terminal CUSUMs of both models over the initialization window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialSelection {
    pub cusum_true: f64,
    pub cusum_false: f64,
    pub chosen: Hypothesis,
}

/// Runs the CUSUM recurrence of both models over the first
/// `config.init_window` measurements (fewer if the stream is shorter) and
/// picks the model with the smaller CUSUM; ties go to "false". Each model
/// starts from its own mass as the previous output.
pub fn select_initial_model(
    measurements: &[MassDistribution],
    config: &FilterConfig,
) -> Result<InitialSelection, FilterError> {
    config.validate()?;
    if measurements.is_empty() {
        return Err(FilterError::EmptyInput);
    }
    let window = &measurements[..measurements.len().min(config.init_window)];
    let run = |target: Hypothesis| -> Result<f64, FilterError> {
        let model = config.model(target);
        let mut prev = model.mass();
        let mut cusum = 0.0;
        for m in window {
            check_measurement(m)?;
            let (output, conflict) = filter_update(&model, &prev, m, config.eps_zero)?;
            cusum = cusum * config.lambda + conflict;
            prev = output;
        }
        Ok(cusum)
    };
    let cusum_true = run(Hypothesis::True)?;
    let cusum_false = run(Hypothesis::False)?;
    let chosen = if cusum_true < cusum_false {
        Hypothesis::True
    } else {
        Hypothesis::False
    };
    Ok(InitialSelection {
        cusum_true,
        cusum_false,
        chosen,
    })
}

/// Filter state at frame 0 under the model that best fits the first frames.
pub fn initialize(
    measurements: &[MassDistribution],
    config: &FilterConfig,
) -> Result<FilterState, FilterError> {
    let selection = select_initial_model(measurements, config)?;
    FilterState::new(config.clone(), selection.chosen)
}

/// Whole-stream filtering result.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub initial_model: Hypothesis,
    /// Final output per frame.
    pub outputs: Vec<MassDistribution>,
    /// Output as first computed per frame.
    pub provisional: Vec<MassDistribution>,
    pub conflict: Vec<f64>,
    pub cusum: Vec<f64>,
    pub events: Vec<FilterEvent>,
}

/// Initializes, filters every measurement and flushes held-back outputs.
pub fn run_batch(
    measurements: &[MassDistribution],
    config: &FilterConfig,
) -> Result<BatchOutput, FilterError> {
    let mut state = initialize(measurements, config)?;
    let initial_model = state.model().target();
    let n = measurements.len();
    let mut outputs: Vec<Option<MassDistribution>> = vec![None; n];
    let mut provisional = Vec::with_capacity(n);
    let mut conflict = vec![0.0; n];
    let mut cusum = vec![0.0; n];
    let mut events = Vec::new();

    for m in measurements {
        let step = state.step(m)?;
        provisional.push(step.provisional);
        for t in step.trace {
            conflict[t.frame] = t.conflict;
            cusum[t.frame] = t.cusum;
        }
        for f in step.finalized {
            outputs[f.frame] = Some(f.output);
        }
        events.extend(step.events);
    }
    for f in state.finish() {
        outputs[f.frame] = Some(f.output);
    }
    let outputs = outputs
        .into_iter()
        .map(|o| o.expect("every frame is finalized by the end of the stream"))
        .collect();
    Ok(BatchOutput {
        initial_model,
        outputs,
        provisional,
        conflict,
        cusum,
        events,
    })
}
