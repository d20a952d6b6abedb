use std::path::{Path, PathBuf};
use std::process::ExitCode;

use belief_filter::pipeline::{self, PipelineConfig, PipelineError, PipelineInput, RunOptions};
use belief_filter::trace;
use belief_filter::SyntheticSpec;
use clap::{Args, Parser, Subcommand};

/// Frame-level action detection with belief functions and temporal filtering.
#[derive(Debug, Parser)]
#[command(name = "belief-filter", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration (partitions, rules, filter, threshold, synthetic, paths).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory. Defaults to `paths.out_dir` or `out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic measurement streams and their truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the synthetic seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fuse, filter, decide and (with truth) evaluate.
    Run {
        #[command(flatten)]
        common: Common,
        /// Parameter trace CSV.
        #[arg(long, conflicts_with = "masses_dir")]
        trace: Option<PathBuf>,
        /// Directory of `<action>.csv` mass streams.
        #[arg(long)]
        masses_dir: Option<PathBuf>,
        /// Ground-truth annotations (JSON).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Overrides the synthetic seed when no input is given.
        #[arg(long)]
        seed: Option<u64>,
        /// Skip temporal filtering.
        #[arg(long)]
        no_filter: bool,
        /// Decision threshold on BetP(R).
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Filter a single mass stream.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Mass CSV (`frame,m_empty,m_R,m_F,m_omega`).
        #[arg(long)]
        input: PathBuf,
    },
    /// Score `<dir>/<action>/decisions.csv` files against truth.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        truth: PathBuf,
        /// Directory holding one sub-directory per action.
        #[arg(long)]
        decisions_dir: PathBuf,
        /// Threshold recorded in the report.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, PipelineError> {
    match &common.config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    }
}

fn out_dir(common: &Common, config: &PipelineConfig) -> PathBuf {
    common
        .out_dir
        .clone()
        .or_else(|| config.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn synthetic_spec(config: &PipelineConfig, seed: Option<u64>) -> SyntheticSpec {
    let mut spec = config.synthetic.clone().unwrap_or_default();
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec
}

fn execute(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Simulate { common, seed } => {
            let config = load_config(&common)?;
            let dir = out_dir(&common, &config);
            let files = pipeline::write_synthetic(&synthetic_spec(&config, seed), &dir)?;
            report_files(&files);
        }
        Command::Run {
            common,
            trace,
            masses_dir,
            truth,
            seed,
            no_filter,
            threshold,
        } => {
            let config = load_config(&common)?;
            let trace = trace.or_else(|| config.paths.trace.clone());
            let masses_dir = masses_dir.or_else(|| config.paths.masses_dir.clone());
            let input = match (trace, masses_dir) {
                (Some(path), _) => PipelineInput::Trace(trace::load_trace(&path)?),
                (None, Some(dir)) => PipelineInput::Masses(pipeline::load_masses_dir(&dir)?),
                (None, None) => PipelineInput::Synthetic(synthetic_spec(&config, seed)),
            };
            let truth = truth
                .or_else(|| config.paths.truth.clone())
                .map(|p| pipeline::load_truth(&p))
                .transpose()?;
            let options = RunOptions {
                out_dir: out_dir(&common, &config),
                no_filter,
                threshold,
                truth,
            };
            let summary = pipeline::run_pipeline(&config, input, &options)?;
            for a in &summary.actions {
                let switches = a.filtered.as_ref().map_or(0, |b| {
                    b.events
                        .iter()
                        .filter(|e| matches!(e.kind, belief_filter::filter::EventKind::ModelSwitch { .. }))
                        .count()
                });
                println!("{}: {} frames, {} model switches", a.action, a.fused.len(), switches);
            }
            if let Some(report) = &summary.report {
                print!("{}", report.render_table());
            }
            println!("wrote {} files to {}", summary.files.len(), options.out_dir.display());
        }
        Command::Filter { common, input } => {
            let config = load_config(&common)?;
            let masses = trace::load_mass_csv(&input)?;
            let dir = out_dir(&common, &config);
            let batch = pipeline::run_filter(&masses, &config.filter, &dir)?;
            for event in &batch.events {
                println!(
                    "{}",
                    serde_json::to_string(event).expect("events serialize")
                );
            }
            println!("wrote filtered.csv, events.jsonl, plot.csv to {}", dir.display());
        }
        Command::Eval {
            common,
            truth,
            decisions_dir,
            threshold,
        } => {
            let config = load_config(&common)?;
            let truth = pipeline::load_truth(&truth)?;
            let threshold = threshold.unwrap_or(config.threshold);
            let report = pipeline::evaluate_decisions(&decisions_dir, &truth, threshold)?;
            print!("{}", report.render_table());
            if let Some(dir) = &common.out_dir {
                write_report(dir, &report)?;
            }
        }
    }
    Ok(())
}

fn write_report(dir: &Path, report: &belief_filter::EvalReport) -> Result<(), PipelineError> {
    let io = |path: &Path, e| PipelineError::Io {
        path: path.to_owned(),
        source: e,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    std::fs::write(&json, text).map_err(|e| io(&json, e))?;
    let txt = dir.join("report.txt");
    std::fs::write(&txt, report.render_table()).map_err(|e| io(&txt, e))?;
    Ok(())
}

fn report_files(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}
