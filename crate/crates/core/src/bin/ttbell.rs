use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use timetag_bell::diagnostics::{self, CorrelationKind};
use timetag_bell::pipeline::{self, ProtocolConfig, Scale, SourceSpec, TrainedParams, TrainingOptions};
use timetag_bell::simsrc::{generate_trials, JitterModel};
use timetag_bell::trial::{read_trials, write_trials, TrialRecord};
use timetag_bell::{verify, Error, Result};

#[derive(Parser)]
#[command(name = "ttbell", version, about = "Timetag Bell tests for continuously emitting pair sources")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate trials from a source and write a trial file.
    Simulate(SimulateArgs),
    /// Fix the analysis parameters from a training trial file.
    Train(TrainArgs),
    /// Analyze a trial file with trained parameters.
    Analyze(AnalyzeArgs),
    /// Run the whole protocol over a jitter grid.
    Sweep(SweepArgs),
    /// Auto- and cross-correlation functions of a trial file.
    Correlate(CorrelateArgs),
    /// Run the oracle and property self-checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceKind {
    Quantum,
    Lr,
    DeltaShift,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, value_enum, default_value = "quantum")]
    source: SourceKind,
    #[arg(long, default_value_t = 0.8)]
    efficiency: f64,
    /// none, uniform:J or exp:G.
    #[arg(long, default_value = "uniform:0.02")]
    jitter: JitterModel,
    /// Shift of the delta-shift source.
    #[arg(long, default_value_t = 0.001)]
    delta: f64,
    /// Monte Carlo trials per calibration step of the LR source.
    #[arg(long, default_value_t = 50)]
    calibration_trials: usize,
}

impl SourceArgs {
    fn spec(&self) -> Result<SourceSpec> {
        Ok(match self.source {
            SourceKind::Quantum => SourceSpec::Quantum {
                efficiency: self.efficiency,
                jitter: self.jitter,
            },
            SourceKind::Lr => match self.jitter {
                JitterModel::Uniform { width } => SourceSpec::Lr {
                    efficiency: self.efficiency,
                    jitter_width: width,
                    calibration_trials: self.calibration_trials,
                },
                _ => {
                    return Err(Error::InvalidParameter {
                        name: "jitter",
                        msg: "the LR source needs uniform jitter".into(),
                    })
                }
            },
            SourceKind::DeltaShift => SourceSpec::DeltaShift {
                delta: self.delta,
                jitter: self.jitter,
            },
        })
    }
}

#[derive(Args)]
struct ScaleArgs {
    /// Desk-scale trial counts and window (default).
    #[arg(long, conflicts_with = "full_scale")]
    desk_scale: bool,
    /// Full-size trial counts and window.
    #[arg(long)]
    full_scale: bool,
    /// Trial window length.
    #[arg(long)]
    window: Option<f64>,
}

impl ScaleArgs {
    fn scale(&self) -> Scale {
        let mut s = if self.full_scale { Scale::FULL } else { Scale::DESK };
        if let Some(w) = self.window {
            s.window = w;
        }
        s
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    scale: ScaleArgs,
    /// Number of trials; defaults to training plus analysis counts of the scale.
    #[arg(long)]
    trials: Option<usize>,
    /// Id of the first trial.
    #[arg(long, default_value_t = 0)]
    first_id: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Trial file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training trial file.
    trials: PathBuf,
    /// Optional TOML file with training options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter file (JSON); stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Conventional,
    Timetag,
    Pbr,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Analysis trial file.
    trials: PathBuf,
    /// Parameter file written by `train`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Report file: CSV for conventional, JSON otherwise; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML protocol configuration. Flags below override its scale and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    scale: ScaleArgs,
    /// Analysis trials per point.
    #[arg(long)]
    trials: Option<usize>,
    /// Training trials per point.
    #[arg(long)]
    training_trials: Option<usize>,
    /// Comma-separated jitter models, e.g. uniform:0.02,uniform:0.05.
    #[arg(long, value_delimiter = ',', default_value = "uniform:0.02,uniform:0.05,uniform:0.08")]
    grid: Vec<JitterModel>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV table; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorrelateArgs {
    trials: PathBuf,
    #[arg(long, default_value_t = 0.005)]
    bin_width: f64,
    #[arg(long, default_value_t = 40)]
    max_lag: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Smaller sample sizes.
    #[arg(long)]
    quick: bool,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    read_trials(BufReader::new(File::open(path)?))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let scale = a.scale.scale();
    let spec = a.source.spec()?;
    let n = a.trials.unwrap_or(scale.training_trials + scale.analysis_trials);
    let src = pipeline::build_source(&spec, scale.window, a.seed)?;
    if let Some(c) = src.calibration() {
        eprintln!("LR calibration: {}", serde_json::to_string(c).map_err(|e| Error::Config(e.to_string()))?);
    }
    let opts = TrainingOptions::default();
    let trials = generate_trials(src.as_trial_source(), &opts.settings, a.seed, a.first_id, n);
    let mut out = output(&a.out)?;
    write_trials(&mut out, &trials)?;
    out.flush()?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let opts = match &a.config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
        None => TrainingOptions::default(),
    };
    let trials = load_trials(&a.trials)?;
    let p = pipeline::train(&trials, &opts)?;
    let mut out = output(&a.out)?;
    writeln!(out, "{}", p.to_json()?)?;
    out.flush()?;
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Config(e.to_string()))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let p = TrainedParams::from_json(&std::fs::read_to_string(&a.params)?)?;
    let trials = load_trials(&a.trials)?;
    let mut out = output(&a.out)?;
    match a.mode {
        Mode::Conventional => {
            let r = pipeline::analyze_conventional(&p, &trials)?;
            diagnostics::write_conventional_csv(&mut out, &r)?;
        }
        Mode::Timetag => writeln!(out, "{}", json(&pipeline::analyze_timetag(&p, &trials)?)?)?,
        Mode::Pbr => writeln!(out, "{}", json(&pipeline::analyze_pbr(&p, &trials)?)?)?,
    }
    out.flush()?;
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ProtocolConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => ProtocolConfig::desk(a.source.spec()?, 1),
    };
    if a.config.is_none() || a.scale.full_scale || a.scale.desk_scale {
        cfg.scale = a.scale.scale();
    } else if let Some(w) = a.scale.window {
        cfg.scale.window = w;
    }
    if let Some(n) = a.trials {
        cfg.scale.analysis_trials = n;
    }
    if let Some(n) = a.training_trials {
        cfg.scale.training_trials = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let reports = pipeline::sweep(&cfg, &a.grid)?;
    let rows: Vec<_> = reports.iter().map(|r| r.row.clone()).collect();
    let mut out = output(&a.out)?;
    pipeline::write_sweep_csv(&mut out, &rows)?;
    out.flush()?;
    match pipeline::jitter_threshold(&rows) {
        Some(m) => eprintln!("largest median jitter with log-p > 0: {m}"),
        None => eprintln!("no grid point shows a PBR violation"),
    }
    Ok(())
}

fn correlate(a: CorrelateArgs) -> Result<()> {
    let trials = load_trials(&a.trials)?;
    let est = CorrelationKind::all()
        .into_iter()
        .map(|k| diagnostics::correlation_estimate(&trials, k, a.bin_width, a.max_lag))
        .collect::<Result<Vec<_>>>()?;
    let mut out = output(&a.out)?;
    diagnostics::write_correlation_csv(&mut out, &est)?;
    out.flush()?;
    Ok(())
}

fn run_verify(a: VerifyArgs) -> Result<bool> {
    let reports = if a.quick {
        vec![
            verify::t4_membership(10_000, a.seed),
            verify::matching_oracle(200, 50, a.seed),
            verify::lr_nonnegativity(),
            verify::ns_invariance(100_000, a.seed),
            verify::pbr_correctness(a.seed),
            verify::snr_estimator(100, a.seed),
        ]
    } else {
        verify::run_all(a.seed)
    };
    for r in &reports {
        println!("{r}");
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Simulate(a) => simulate(a).map(|_| true),
        Cmd::Train(a) => train(a).map(|_| true),
        Cmd::Analyze(a) => analyze(a).map(|_| true),
        Cmd::Sweep(a) => sweep(a).map(|_| true),
        Cmd::Correlate(a) => correlate(a).map(|_| true),
        Cmd::Verify(a) => run_verify(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("ttbell: {e}");
            ExitCode::from(2)
        }
    }
}
