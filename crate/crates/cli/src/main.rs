use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use narmax_vmp::basis::enumerate_monomials;
use narmax_vmp::harness::{aggregate, run_plan, SweepMode};
use narmax_vmp::io;
use narmax_vmp::plot::{chart_from_aggregates, render_svg, Metric};
use narmax_vmp::predict::{one_step_sequence, simulate_state, DivergenceRule};
use narmax_vmp::vmp::EstimatorState;
use narmax_vmp::Error;

#[derive(Parser)]
#[command(name = "narmax-vmp", version, about = "Online variational identification of polynomial NARMAX systems")]
struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identify a model online from t,u,y data and write a checkpoint.
    Identify {
        data: PathBuf,
        /// JSON with optional `model`, `priors` and `settings` sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path; predictions and free energy go next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Free-run simulation of a trained checkpoint on new inputs.
    Simulate {
        checkpoint: PathBuf,
        inputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment plan and write records, aggregates and figures.
    Experiment {
        plan: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 uses all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Overrides the plan's base seed.
        #[arg(long, env = "NARMAX_VMP_SEED")]
        seed: Option<u64>,
    },
    /// Render an aggregates CSV as SVG.
    Plot {
        aggregates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MetricArg::Sim)]
        metric: MetricArg,
        #[arg(long, default_value = "sweep value")]
        x_label: String,
        /// Add the failure-proportion panel.
        #[arg(long)]
        failures: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Sim,
    Pred,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Sim => Metric::Simulation,
            MetricArg::Pred => Metric::Prediction,
        }
    }
}

fn read(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", path.display()) },
        other => other,
    }
}

fn identify(data: &Path, config: Option<&Path>, out: &Path, quiet: bool) -> Result<(), Error> {
    let signals = io::parse_data_csv(&read(data)?).map_err(|e| with_path(data, e))?;
    let cfg = match config {
        Some(p) => io::parse_identify_config(&read(p)?).map_err(|e| with_path(p, e))?,
        None => io::IdentifyConfig::default(),
    };
    let spec = Arc::new(enumerate_monomials(&cfg.model)?);
    let mut state = EstimatorState::new(spec.clone(), cfg.priors.priors(spec.dim())?)?;
    let run = one_step_sequence(&mut state, &signals.u, &signals.y, &cfg.settings)?;
    write(out, &io::to_json(&state.to_checkpoint())?)?;
    write(&sibling(out, "predictions.csv"), &io::write_predictions_csv(&signals, &run.predictions))?;
    write(&sibling(out, "free_energy.csv"), &io::write_free_energy_csv(&run.free_energy))?;
    if !quiet {
        eprintln!("identified {} samples, basis dimension {}", signals.u.len(), spec.dim());
    }
    Ok(())
}

fn simulate(checkpoint: &Path, inputs: &Path, out: &Path, quiet: bool) -> Result<(), Error> {
    let ck = io::parse_checkpoint(&read(checkpoint)?).map_err(|e| with_path(checkpoint, e))?;
    let state = EstimatorState::from_checkpoint(ck)?;
    let signals = io::parse_input_csv(&read(inputs)?).map_err(|e| with_path(inputs, e))?;
    let result = simulate_state(&state, &signals.u, DivergenceRule::default())?;
    write(out, &io::write_simulation_csv(&signals.u, &result))?;
    if let Some(at) = result.diverged_at {
        if !quiet {
            eprintln!("simulation diverged at index {at}");
        }
        return Err(Error::UnstableSystem { step: at });
    }
    Ok(())
}

fn experiment(plan: &Path, out: &Path, jobs: usize, seed: Option<u64>, quiet: bool) -> Result<(), Error> {
    let mut plan = io::parse_plan(&read(plan)?).map_err(|e| with_path(plan, e))?;
    if let Some(seed) = seed {
        plan.base_seed = seed;
    }
    fs::create_dir_all(out).map_err(|e| Error::InvalidArgument(format!("{}: {e}", out.display())))?;
    let outcome = run_plan(&plan, jobs)?;
    if !quiet {
        for r in &outcome.rejections {
            eprintln!("realization {}: rejected unstable system draw {} (step {})", r.realization, r.attempt, r.step);
        }
    }
    let rows = aggregate(&outcome.records);
    write(&out.join("records.csv"), &io::write_records_csv(&outcome.records))?;
    write(&out.join("aggregates.csv"), &io::write_aggregates_csv(&rows))?;
    let x_label = match plan.mode {
        SweepMode::SampleSweep => "training samples",
        SweepMode::NoiseSweep => "noise standard deviation",
    };
    let sim = chart_from_aggregates(&rows, Metric::Simulation, x_label, false);
    let pred = chart_from_aggregates(&rows, Metric::Prediction, x_label, true);
    write(&out.join("simulation_rms.svg"), &render_svg(&sim))?;
    write(&out.join("prediction_rms.svg"), &render_svg(&pred))?;
    if !quiet {
        eprintln!("wrote {} records to {}", outcome.records.len(), out.display());
    }
    Ok(())
}

fn plot(aggregates: &Path, out: &Path, metric: Metric, x_label: &str, failures: bool) -> Result<(), Error> {
    let rows = io::parse_aggregates_csv(&read(aggregates)?).map_err(|e| with_path(aggregates, e))?;
    write(out, &render_svg(&chart_from_aggregates(&rows, metric, x_label, failures)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Identify { data, config, out } => identify(data, config.as_deref(), out, cli.quiet),
        Command::Simulate { checkpoint, inputs, out } => simulate(checkpoint, inputs, out, cli.quiet),
        Command::Experiment { plan, out, jobs, seed } => experiment(plan, out, *jobs, *seed, cli.quiet),
        Command::Plot { aggregates, out, metric, x_label, failures } => {
            plot(aggregates, out, (*metric).into(), x_label, *failures)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
