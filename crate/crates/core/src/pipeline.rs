//! End-to-end orchestration: fuzzify → fuse → filter → decide → evaluate,
//! plus artifact emission.
//!
//! Per action, [`run_pipeline`] writes into `<out_dir>/<action>/`:
//!
//! | file            | content                                              |
//! |-----------------|------------------------------------------------------|
//! | `fused.csv`     | measurement masses before filtering                  |
//! | `filtered.csv`  | final filter outputs                                 |
//! | `events.jsonl`  | warnings, clearances, model switches, intervals      |
//! | `decisions.csv` | `frame,before,after` pignistic decisions             |
//! | `plot.csv`      | filtered masses and CUSUM per frame                  |
//! | `report.json`   | recall/precision row of the action (needs truth)     |
//!
//! With truth available, `<out_dir>/report.json` and `<out_dir>/report.txt`
//! hold the full report with its pooled mean row. Without filtering,
//! `filtered.csv` and `events.jsonl` are skipped, and `plot.csv` shows the
//! unfiltered masses with no CUSUM column.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{Frame, MassDistribution};
use crate::eval::{self, ActionDecisions, EvalReport, SegmentAnnotation, DEFAULT_THRESHOLD};
use crate::filter::{self, BatchOutput, FilterConfig};
use crate::fusion::{self, FrameEvidence, RuleExpr};
use crate::fuzzify::FuzzyPartition;
use crate::synthetic::{self, SyntheticSpec};
use crate::trace::{self, DecisionTable, ParameterTrace, TraceError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("frame {frame}: {message}")]
    Data { frame: usize, message: String },
}

impl PipelineError {
    /// 1 for configuration problems, 2 for IO and input data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            _ => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Parameter trace CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    /// Directory of pre-fused `<action>.csv` mass streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masses_dir: Option<PathBuf>,
    /// Ground-truth annotations (JSON list).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Paths {
    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve(&mut self, base: &Path) {
        for p in [&mut self.trace, &mut self.masses_dir, &mut self.truth, &mut self.out_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// JSON configuration of a pipeline run. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub partitions: BTreeMap<String, FuzzyPartition>,
    #[serde(default)]
    pub rules: BTreeMap<String, RuleExpr>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            partitions: BTreeMap::new(),
            rules: BTreeMap::new(),
            filter: FilterConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            synthetic: None,
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut config = Self::from_json(&text).map_err(|e| match e {
            PipelineError::Config(msg) => PipelineError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        config.paths.resolve(path.parent().unwrap_or(Path::new("")));
        Ok(config)
    }

    /// Referential and range checks that do not need input data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let config_err = |msg: String| PipelineError::Config(msg);
        self.filter.validate().map_err(|e| config_err(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(config_err(format!(
                "threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        for (action, rule) in &self.rules {
            check_action_name(action)?;
            rule.validate()
                .map_err(|e| config_err(format!("rule `{action}`: {e}")))?;
            for param in rule.parameters() {
                if !self.partitions.contains_key(param) {
                    return Err(config_err(format!(
                        "rule `{action}` uses parameter `{param}` which has no partition"
                    )));
                }
            }
        }
        if let Some(spec) = &self.synthetic {
            spec.validate().map_err(|e| config_err(format!("synthetic: {e}")))?;
            for action in spec.actions.keys() {
                check_action_name(action)?;
            }
        }
        Ok(())
    }
}

fn check_action_name(name: &str) -> Result<(), PipelineError> {
    if name.is_empty() || name == "." || name == ".." || name.contains(['/', '\\']) {
        return Err(PipelineError::Config(format!(
            "action name `{name}` cannot be used as a directory name"
        )));
    }
    Ok(())
}

/// Fuzzifies and fuses a parameter trace into one measurement stream per
/// action.
pub fn fuse_trace(
    config: &PipelineConfig,
    trace: &ParameterTrace,
) -> Result<BTreeMap<String, Vec<MassDistribution>>, PipelineError> {
    if config.rules.is_empty() {
        return Err(PipelineError::Config(
            "a parameter trace needs at least one rule".into(),
        ));
    }
    let used: BTreeSet<&str> = config.rules.values().flat_map(RuleExpr::parameters).collect();
    let mut columns = Vec::new();
    for param in used {
        let col = trace.column(param).ok_or_else(|| {
            PipelineError::Config(format!("parameter `{param}` is not a column of the trace"))
        })?;
        columns.push((param, col, &config.partitions[param]));
    }
    let mut out: BTreeMap<String, Vec<MassDistribution>> = config
        .rules
        .keys()
        .map(|a| (a.clone(), Vec::with_capacity(trace.len())))
        .collect();
    for frame in 0..trace.len() {
        let data_err = |message: String| PipelineError::Data { frame, message };
        let mut evidence = FrameEvidence::new();
        for &(param, col, partition) in &columns {
            let mass = partition
                .fuzzify(trace.value(frame, col))
                .map_err(|e| data_err(format!("`{param}`: {e}")))?;
            evidence
                .insert(param, mass, trace.reliability(frame, col))
                .map_err(|e| data_err(format!("`{param}`: {e}")))?;
        }
        let fused = fusion::fuse_frame(&config.rules, &evidence).map_err(|e| data_err(e.to_string()))?;
        for (action, m) in fused {
            out.get_mut(&action).expect("one stream per rule").push(m);
        }
    }
    Ok(out)
}

/// Filter input: conflict removed by Dempster normalization, total
/// conflict replaced by ignorance.
pub fn normalize_measurement(m: &MassDistribution) -> MassDistribution {
    m.dempster_normalize()
        .unwrap_or_else(|_| MassDistribution::vacuous(Frame::binary()))
}

/// Everything computed for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionResult {
    pub action: String,
    pub fused: Vec<MassDistribution>,
    pub filtered: Option<BatchOutput>,
    pub before: Vec<bool>,
    pub after: Option<Vec<bool>>,
}

/// Filters one action's measurements (unless `filter` is `None`) and takes
/// decisions before and after.
pub fn process_action(
    action: &str,
    fused: Vec<MassDistribution>,
    filter: Option<&FilterConfig>,
    threshold: f64,
) -> Result<ActionResult, PipelineError> {
    let measurements: Vec<MassDistribution> = fused.iter().map(normalize_measurement).collect();
    let data_err = |frame: usize, message: String| PipelineError::Data { frame, message };
    let before = eval::decide_all(&measurements, threshold)
        .map_err(|e| data_err(0, format!("`{action}`: {e}")))?;
    let filtered = match filter {
        Some(cfg) if !measurements.is_empty() => Some(
            filter::run_batch(&measurements, cfg)
                .map_err(|e| data_err(0, format!("`{action}`: {e}")))?,
        ),
        _ => None,
    };
    let after = filtered
        .as_ref()
        .map(|b| eval::decide_all(&b.outputs, threshold))
        .transpose()
        .map_err(|e| data_err(0, format!("`{action}`: {e}")))?;
    Ok(ActionResult {
        action: action.to_owned(),
        fused,
        filtered,
        before,
        after,
    })
}

/// Where measurements come from.
#[derive(Debug, Clone)]
pub enum PipelineInput {
    /// Raw parameters: fuzzified and fused with the configured rules.
    Trace(ParameterTrace),
    /// Pre-fused measurement streams per action.
    Masses(BTreeMap<String, Vec<MassDistribution>>),
    /// Generated streams with their own truth.
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub no_filter: bool,
    /// Overrides the configured decision threshold.
    pub threshold: Option<f64>,
    /// Overrides truth coming with a synthetic input.
    pub truth: Option<Vec<SegmentAnnotation>>,
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub actions: Vec<ActionResult>,
    pub truth: Option<Vec<SegmentAnnotation>>,
    pub report: Option<EvalReport>,
    /// Written files, in creation order.
    pub files: Vec<PathBuf>,
}

/// In-memory result of [`compute`].
#[derive(Debug, Clone)]
pub struct Computed {
    pub actions: Vec<ActionResult>,
    /// Truth used for the report: the given one, else the synthetic one.
    pub truth: Option<Vec<SegmentAnnotation>>,
    pub report: Option<EvalReport>,
}

/// Computes every action and the report, without touching the disk.
pub fn compute(
    config: &PipelineConfig,
    input: PipelineInput,
    no_filter: bool,
    threshold: f64,
    truth: Option<Vec<SegmentAnnotation>>,
) -> Result<Computed, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::Config(format!(
            "threshold {threshold} is outside [0, 1]"
        )));
    }
    let (streams, input_truth) = match input {
        PipelineInput::Trace(t) => (fuse_trace(config, &t)?, None),
        PipelineInput::Masses(m) => (m, None),
        PipelineInput::Synthetic(spec) => {
            let generated = synthetic::generate_synthetic(&spec)
                .map_err(|e| PipelineError::Config(format!("synthetic: {e}")))?;
            (generated.masses, Some(generated.truth))
        }
    };
    for action in streams.keys() {
        check_action_name(action)?;
    }
    let truth = truth.or(input_truth);
    let filter_cfg = (!no_filter).then_some(&config.filter);
    let actions = streams
        .into_iter()
        .map(|(action, fused)| process_action(&action, fused, filter_cfg, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    let report = truth
        .as_ref()
        .map(|t| build_report(&actions, t, threshold))
        .transpose()?;
    Ok(Computed {
        actions,
        truth,
        report,
    })
}

fn build_report(
    actions: &[ActionResult],
    truth: &[SegmentAnnotation],
    threshold: f64,
) -> Result<EvalReport, PipelineError> {
    let inputs: Vec<ActionDecisions<'_>> = actions
        .iter()
        .filter_map(|a| {
            truth.iter().find(|t| t.action == a.action).map(|t| ActionDecisions {
                truth: t,
                before: &a.before,
                after: a.after.as_deref(),
            })
        })
        .collect();
    eval::gain_report(&inputs, threshold).map_err(|e| PipelineError::Data {
        frame: 0,
        message: e.to_string(),
    })
}

/// Runs the whole pipeline and writes its artifacts under
/// `options.out_dir`.
pub fn run_pipeline(
    config: &PipelineConfig,
    input: PipelineInput,
    options: &RunOptions,
) -> Result<PipelineSummary, PipelineError> {
    config.validate()?;
    let threshold = options.threshold.unwrap_or(config.threshold);
    let Computed {
        actions,
        truth,
        report,
    } = compute(config, input, options.no_filter, threshold, options.truth.clone())?;
    let mut files = Vec::new();
    let out = &options.out_dir;
    create_dir(out)?;
    for a in &actions {
        let dir = out.join(&a.action);
        create_dir(&dir)?;
        files.push(write_with(&dir.join("fused.csv"), |w| trace::write_mass_csv(w, &a.fused))?);
        match &a.filtered {
            Some(batch) => {
                files.push(write_with(&dir.join("filtered.csv"), |w| {
                    trace::write_mass_csv(w, &batch.outputs)
                })?);
                files.push(write_with(&dir.join("events.jsonl"), |w| {
                    trace::write_events_jsonl(w, &batch.events)
                })?);
                files.push(write_with(&dir.join("plot.csv"), |w| {
                    trace::write_plot_csv(w, &batch.outputs, Some(&batch.cusum))
                })?);
            }
            None => {
                files.push(write_with(&dir.join("plot.csv"), |w| {
                    trace::write_plot_csv(w, &a.fused, None)
                })?);
            }
        }
        let table = DecisionTable {
            before: a.before.clone(),
            after: a.after.clone(),
        };
        files.push(write_with(&dir.join("decisions.csv"), |w| {
            trace::write_decisions_csv(w, &table)
        })?);
        if let Some(row) = report
            .as_ref()
            .and_then(|r| r.rows.iter().find(|row| row.action == a.action))
        {
            files.push(write_json(&dir.join("report.json"), row)?);
        }
    }
    if let Some(r) = &report {
        files.push(write_json(&out.join("report.json"), r)?);
        files.push(write_with(&out.join("report.txt"), |w| {
            w.write_all(r.render_table().as_bytes())
                .map_err(|e| TraceError::io(&out.join("report.txt"), e))
        })?);
    }
    Ok(PipelineSummary {
        actions,
        truth,
        report,
        files,
    })
}

/// Filters one pre-fused stream and writes `filtered.csv`, `events.jsonl`
/// and `plot.csv` into `out_dir`.
pub fn run_filter(
    measurements: &[MassDistribution],
    config: &FilterConfig,
    out_dir: &Path,
) -> Result<BatchOutput, PipelineError> {
    config
        .validate()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let normalized: Vec<MassDistribution> = measurements.iter().map(normalize_measurement).collect();
    let batch = filter::run_batch(&normalized, config).map_err(|e| PipelineError::Data {
        frame: 0,
        message: e.to_string(),
    })?;
    create_dir(out_dir)?;
    write_with(&out_dir.join("filtered.csv"), |w| trace::write_mass_csv(w, &batch.outputs))?;
    write_with(&out_dir.join("events.jsonl"), |w| trace::write_events_jsonl(w, &batch.events))?;
    write_with(&out_dir.join("plot.csv"), |w| {
        trace::write_plot_csv(w, &batch.outputs, Some(&batch.cusum))
    })?;
    Ok(batch)
}

/// Scores `<dir>/<action>/decisions.csv` for every annotated action found.
pub fn evaluate_decisions(
    dir: &Path,
    truth: &[SegmentAnnotation],
    threshold: f64,
) -> Result<EvalReport, PipelineError> {
    let mut tables = Vec::new();
    for t in truth {
        let path = dir.join(&t.action).join("decisions.csv");
        if !path.exists() {
            continue;
        }
        let file = fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
        tables.push((t, trace::read_decisions_csv(file)?));
    }
    if tables.is_empty() {
        return Err(PipelineError::Config(format!(
            "no `<action>/decisions.csv` under {} matches the truth file",
            dir.display()
        )));
    }
    let inputs: Vec<ActionDecisions<'_>> = tables
        .iter()
        .map(|(t, d)| ActionDecisions {
            truth: t,
            before: &d.before,
            after: d.after.as_deref(),
        })
        .collect();
    eval::gain_report(&inputs, threshold).map_err(|e| PipelineError::Data {
        frame: 0,
        message: e.to_string(),
    })
}

/// Reads every `<action>.csv` mass stream in a directory.
pub fn load_masses_dir(dir: &Path) -> Result<BTreeMap<String, Vec<MassDistribution>>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            let action = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| PipelineError::Config(format!("bad file name {}", path.display())))?
                .to_owned();
            let masses = trace::load_mass_csv(&path).map_err(|e| match e {
                TraceError::Io { .. } => PipelineError::Trace(e),
                other => PipelineError::Data {
                    frame: 0,
                    message: format!("{}: {other}", path.display()),
                },
            })?;
            out.insert(action, masses);
        }
    }
    if out.is_empty() {
        return Err(PipelineError::Config(format!(
            "no `.csv` mass streams in {}",
            dir.display()
        )));
    }
    Ok(out)
}

pub fn load_truth(path: &Path) -> Result<Vec<SegmentAnnotation>, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Data {
        frame: 0,
        message: format!("{}: {e}", path.display()),
    })
}

/// Writes generated streams as `<dir>/<action>.csv` plus `<dir>/truth.json`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let generated = synthetic::generate_synthetic(spec)
        .map_err(|e| PipelineError::Config(format!("synthetic: {e}")))?;
    for action in generated.masses.keys() {
        check_action_name(action)?;
    }
    create_dir(dir)?;
    let mut files = Vec::new();
    for (action, masses) in &generated.masses {
        files.push(write_with(&dir.join(format!("{action}.csv")), |w| {
            trace::write_mass_csv(w, masses)
        })?);
    }
    files.push(write_json(&dir.join("truth.json"), &generated.truth)?);
    Ok(files)
}

fn create_dir(path: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(path).map_err(|e| PipelineError::io(path, e))
}

fn write_with<F>(path: &Path, body: F) -> Result<PathBuf, PipelineError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> Result<(), TraceError>,
{
    let file = fs::File::create(path).map_err(|e| PipelineError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| PipelineError::io(path, e))?;
    Ok(path.to_owned())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, PipelineError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n").map_err(|e| TraceError::io(path, e))
    })
}
