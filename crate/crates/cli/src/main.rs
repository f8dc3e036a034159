//! `qcert`: config-driven experiment runner for the certification lab.
//!
//! Exit codes: 0 success, 2 invalid config, 3 budget exceeded,
//! 4 truncation exhausted.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcert_core::bounds::BucketScheme;
use qcert_core::experiments::{
    run_command, ExperimentConfig, FamilySpec, OutputFormat, StrategySpec,
};

#[derive(Parser)]
#[command(
    name = "qcert",
    version,
    about = "Quantum state certification simulation lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Total-variation distance of a point-vs-mixture task across copy counts.
    TvScan(CommonArgs),
    /// Smallest copy count at which the likelihood-ratio test succeeds, per dimension.
    DistinguisherScan(CommonArgs),
    /// Max deviation of the one-step martingale expectation from 1.
    Martingale(CommonArgs),
    /// Running supremum of ||K_t||_F^2 under the null vs the 8nd(d-1) bound.
    Doob(CommonArgs),
    /// The alternating transcript separating K from kappa.
    KappaDemo(CommonArgs),
    /// Instance-optimal bound report for a spectrum.
    BoundCalc(CommonArgs),
    /// Re-derive a transcript's log-probability from a state file.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ReplayArgs {
    /// Transcript in JSON-lines form (one step per line).
    #[arg(long)]
    transcript: PathBuf,
    /// Density-matrix JSON file ({"dim": d, "re": [[..]], "im": [[..]]}).
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TvScan(_) => "tv-scan",
            Command::DistinguisherScan(_) => "distinguisher-scan",
            Command::Martingale(_) => "martingale",
            Command::Doob(_) => "doob",
            Command::KappaDemo(_) => "kappa-demo",
            Command::BoundCalc(_) => "bound-calc",
            Command::Replay(_) => "replay",
        }
    }

    fn args(&self) -> Option<&CommonArgs> {
        match self {
            Command::TvScan(a)
            | Command::DistinguisherScan(a)
            | Command::Martingale(a)
            | Command::Doob(a)
            | Command::KappaDemo(a)
            | Command::BoundCalc(a) => Some(a),
            Command::Replay(_) => None,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated copy-count grid (tv-scan, doob).
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Comma-separated dimension grid (distinguisher-scan).
    #[arg(long, value_delimiter = ',')]
    d_list: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bucketing scheme: simple | refined.
    #[arg(long)]
    scheme: Option<String>,
    /// Scale a for kappa-demo / off-diagonal defaults.
    #[arg(long)]
    a: Option<f64>,
    /// Scale b for kappa-demo / off-diagonal defaults.
    #[arg(long)]
    b: Option<f64>,
    /// Spectrum file ({"diag": [...]}) for bound-calc.
    #[arg(long)]
    sigma: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: csv | json.
    #[arg(long)]
    format: Option<String>,
    /// Relax the off-diagonal eps constraint for desk-scale demos.
    #[arg(long)]
    force: bool,
    /// Disable trial-level parallelism (results are identical either way).
    #[arg(long)]
    single_thread: bool,
    /// Success threshold for the distinguisher scan.
    #[arg(long)]
    threshold: Option<f64>,
}

fn invalid(message: String) -> qcert_core::Error {
    qcert_core::Error::InvalidParameter {
        name: "cli",
        message,
    }
}

fn build_config(args: &CommonArgs) -> qcert_core::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = &args.family {
        config.family = match f.as_str() {
            "mixedness" => FamilySpec::Mixedness,
            "offdiag" => FamilySpec::Offdiag,
            "multiblock" => FamilySpec::Multiblock,
            "classical-paninski" => FamilySpec::ClassicalPaninski,
            other => return Err(invalid(format!("unknown family `{other}`"))),
        };
    }
    if let Some(s) = &args.strategy {
        config.strategy = match s.as_str() {
            "standard" => StrategySpec::Standard,
            "haar" => StrategySpec::Haar,
            "k-eigenbasis" => StrategySpec::KEigenbasis,
            other => return Err(invalid(format!("unknown strategy `{other}`"))),
        };
    }
    if let Some(s) = &args.scheme {
        config.scheme = match s.as_str() {
            "simple" => BucketScheme::Simple,
            "refined" => BucketScheme::Refined,
            other => return Err(invalid(format!("unknown scheme `{other}`"))),
        };
    }
    if let Some(f) = &args.format {
        config.format = match f.as_str() {
            "csv" => OutputFormat::Csv,
            "json" => OutputFormat::Json,
            other => return Err(invalid(format!("unknown format `{other}`"))),
        };
    }
    if let Some(v) = args.d {
        config.d = v;
    }
    config.d1 = args.d1.or(config.d1);
    config.d2 = args.d2.or(config.d2);
    if let Some(v) = args.eps {
        config.eps = v;
    }
    if let Some(v) = args.n {
        config.n = v;
    }
    config.n_list = args.n_list.clone().or(config.n_list);
    config.d_list = args.d_list.clone().or(config.d_list);
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.samples {
        config.samples = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.a = args.a.or(config.a);
    config.b = args.b.or(config.b);
    config.sigma_file = args.sigma.clone().or(config.sigma_file);
    config.out = args.out.clone().or(config.out);
    if args.force {
        config.force = true;
    }
    if args.single_thread {
        config.single_thread = true;
    }
    if let Some(v) = args.threshold {
        config.threshold = v;
    }
    Ok(config)
}

fn run_replay(args: &ReplayArgs) -> qcert_core::Result<()> {
    use qcert_core::measurement::Transcript;
    use qcert_core::states::DensityMatrix;
    let transcript = Transcript::from_json_lines(&std::fs::read_to_string(&args.transcript)?)?;
    let state = DensityMatrix::from_json(&std::fs::read_to_string(&args.state)?)?;
    let recorded = transcript.log_p0();
    let replayed = transcript.replay_log_p0(&state)?;
    let output = serde_json::json!({
        "steps": transcript.len(),
        "recorded_log_p0": recorded,
        "replayed_log_p0": replayed,
        "difference": replayed - recorded,
    })
    .to_string();
    match &args.out {
        Some(path) => std::fs::write(path, output)?,
        None => println!("{output}"),
    }
    Ok(())
}

fn run() -> qcert_core::Result<()> {
    let cli = Cli::parse();
    if let Command::Replay(args) = &cli.command {
        return run_replay(args);
    }
    let config = build_config(cli.command.args().expect("non-replay commands carry args"))?;
    let output = run_command(cli.command.name(), &config)?;
    match &config.out {
        Some(path) => std::fs::write(path, output)?,
        None => print!("{output}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
