mod input;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hdlrt::lrt::{run_test_regimes, BlockPartition, Regime, TestInput, TestKind};
use hdlrt::simulation::{
    oracle_crosscheck, run_experiment, write_json, write_pvalues_csv, ExperimentConfig,
    OracleConfig, OracleTarget, Preset, Scale,
};
use hdlrt::{Error, Matrix, RegressionData};
use log::info;

/// Likelihood ratio tests for high-dimensional normal data.
#[derive(Parser, Debug)]
#[command(name = "lrt", version)]
struct Cli {
    /// Worker threads for simulations (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one test on a data file and print the report as JSON.
    Test(TestArgs),
    /// Run a calibration experiment under the null.
    Simulate(SimulateArgs),
    /// Compare the Gaussian null statistic with its exact Beta-product law.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Independence,
    Regression,
    EqualCov,
    EqualDist,
}

impl From<Kind> for TestKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Independence => TestKind::Independence,
            Kind::Regression => TestKind::Regression,
            Kind::EqualCov => TestKind::EqualCov,
            Kind::EqualDist => TestKind::EqualDist,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum RegimeArg {
    GrowingQ,
    FixedQ,
    Both,
}

impl RegimeArg {
    fn regimes(self) -> Vec<Regime> {
        match self {
            RegimeArg::GrowingQ => vec![Regime::GrowingQ],
            RegimeArg::FixedQ => vec![Regime::FixedQ],
            RegimeArg::Both => Regime::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(value_enum)]
    kind: Kind,

    /// Observations (n × p); for equal-cov and equal-dist the first column is a group label.
    #[arg(long)]
    data: PathBuf,

    /// Block sizes for the independence test, e.g. 2,3,4.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,

    /// Regression designs (n × q).
    #[arg(long)]
    designs: Option<PathBuf>,

    /// Number of leading design columns under test.
    #[arg(long)]
    q1: Option<usize>,

    /// Hypothesized coefficients for the tested block (p × q1); zero if omitted.
    #[arg(long)]
    beta01: Option<PathBuf>,

    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    #[arg(long, value_enum, default_value = "growing-q")]
    regime: RegimeArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Fig1,
    Fig2,
    Fig3,
    Fig4a,
    Fig4b,
    Fig4c,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Fig1 => Preset::Fig1,
            PresetArg::Fig2 => Preset::Fig2,
            PresetArg::Fig3 => Preset::Fig3,
            PresetArg::Fig4a => Preset::Fig4a,
            PresetArg::Fig4b => Preset::Fig4b,
            PresetArg::Fig4c => Preset::Fig4c,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScaleArg {
    Desk,
    Paper,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Named experiment configuration.
    #[arg(long, value_enum, required_unless_present = "config", conflicts_with = "config")]
    preset: Option<PresetArg>,

    /// Dimensions and replication count of the preset.
    #[arg(long, value_enum, requires = "preset")]
    scale: Option<ScaleArg>,

    /// JSON experiment configuration instead of a preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the number of replications.
    #[arg(long)]
    reps: Option<usize>,

    #[arg(long)]
    seed: u64,

    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,

    /// Directory for report.json and pvalues.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(value_enum)]
    kind: Kind,

    #[arg(long)]
    n: usize,

    /// Block sizes (independence).
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,

    /// Response dimension (regression).
    #[arg(long)]
    p: Option<usize>,

    /// Total number of design columns (regression).
    #[arg(long)]
    q: Option<usize>,

    /// Columns under test (regression).
    #[arg(long)]
    q1: Option<usize>,

    #[arg(long)]
    seed: u64,

    #[arg(long, default_value_t = 5000)]
    draws: usize,

    #[arg(long, default_value_t = 20)]
    repetitions: usize,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(Error::from)?;
    writeln!(out).map_err(Error::from)?;
    Ok(())
}

fn require<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T, Failure> {
    v.ok_or_else(|| usage(format!("{kind} requires {flag}")))
}

fn cmd_test(args: TestArgs) -> Result<u8, Failure> {
    let input = match args.kind {
        Kind::Independence => {
            let blocks = require(args.blocks, "--blocks", "independence")?;
            TestInput::Independence {
                observations: input::read_matrix(&args.data)?,
                blocks: BlockPartition::new(blocks)?,
            }
        }
        Kind::Regression => {
            let designs = require(args.designs.as_deref(), "--designs", "regression")?;
            let q1 = require(args.q1, "--q1", "regression")?;
            let data = RegressionData::new(
                input::read_matrix(&args.data)?,
                input::read_matrix(designs)?,
                q1,
            )?;
            let beta01 = match &args.beta01 {
                Some(path) => read_beta01(path, data.p(), q1)?,
                None => Matrix::zeros(data.p(), q1),
            };
            TestInput::Regression { data, beta01 }
        }
        Kind::EqualCov => TestInput::EqualCov(input::read_grouped(&args.data)?),
        Kind::EqualDist => TestInput::EqualDist(input::read_grouped(&args.data)?),
    };
    let reports = run_test_regimes(&input, &args.regime.regimes(), args.alpha)?;
    for r in &reports {
        info!(
            "{} {}: statistic {:.6}, z {:.4}, p-value {:.4}, {}",
            r.standardization.kind,
            r.regime(),
            r.statistic,
            r.z,
            r.p_value,
            if r.reject { "reject" } else { "do not reject" }
        );
    }
    if reports.len() == 1 {
        print_json(&reports[0])?;
    } else {
        print_json(&reports)?;
    }
    Ok(0)
}

fn read_beta01(path: &Path, p: usize, q1: usize) -> Result<Matrix, Failure> {
    let m = input::read_matrix(path)?;
    if (m.rows(), m.cols()) != (p, q1) {
        return Err(Error::DimensionMismatch(format!(
            "--beta01 must be {p} × {q1}; {} is {} × {}",
            path.display(),
            m.rows(),
            m.cols()
        ))
        .into());
    }
    Ok(m)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let mut cfg = match (args.preset, &args.config) {
        (Some(p), None) => {
            let scale = match args.scale.unwrap_or(ScaleArg::Desk) {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Paper => Scale::Paper,
            };
            ExperimentConfig::preset(p.into(), scale, args.seed)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            let mut cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            cfg.seed = args.seed;
            cfg
        }
        _ => return Err(usage("give exactly one of --preset or --config")),
    };
    if let Some(r) = args.reps {
        cfg.replications = r;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(r) = args.regime {
        cfg.regimes = r.regimes();
    }
    cfg.validate()?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| usage(format!("cannot create {}: {e}", args.out.display())))?;
    let report = run_experiment(&cfg)?;
    let json_path = args.out.join("report.json");
    let csv_path = args.out.join("pvalues.csv");
    write_json(&report, &json_path)?;
    write_pvalues_csv(&report, &csv_path)?;
    let summary: Vec<_> = report
        .regimes
        .iter()
        .map(|s| {
            serde_json::json!({
                "regime": s.regime,
                "rejection_rate": s.rejection_rate,
                "ks": s.ks,
            })
        })
        .collect();
    print_json(&serde_json::json!({
        "report": json_path,
        "pvalues": csv_path,
        "replications": cfg.replications,
        "excluded": report.excluded,
        "runtime_secs": report.runtime_secs,
        "regimes": summary,
    }))?;
    Ok(0)
}

fn cmd_oracle(args: OracleArgs) -> Result<u8, Failure> {
    let target = match args.kind {
        Kind::Independence => OracleTarget::Independence {
            n: args.n,
            blocks: BlockPartition::new(require(args.blocks, "--blocks", "independence")?)?,
        },
        Kind::Regression => {
            let p = require(args.p, "--p", "regression")?;
            let q = require(args.q, "--q", "regression")?;
            let q1 = require(args.q1, "--q1", "regression")?;
            if q1 == 0 || q1 >= q {
                return Err(usage(format!("requires 1 ≤ q1 < q; got q1 = {q1}, q = {q}")));
            }
            OracleTarget::Regression {
                n: args.n,
                p,
                q1,
                q2: q - q1,
            }
        }
        Kind::EqualCov | Kind::EqualDist => {
            return Err(usage("no Beta decomposition available for this test"))
        }
    };
    let cfg = OracleConfig {
        draws: args.draws,
        repetitions: args.repetitions,
        ..OracleConfig::new(target, args.seed)
    };
    let report = oracle_crosscheck(&cfg)?;
    info!(
        "{}: {}/{} repetitions below the KS critical value {:.4}",
        TestKind::from(args.kind),
        report.pass_count,
        cfg.repetitions,
        report.repetitions[0].critical
    );
    print_json(&serde_json::json!({
        "passed": report.passed,
        "pass_count": report.pass_count,
        "repetitions": report.repetitions,
        "exact": report.exact,
        "clt": report.clt,
    }))?;
    Ok(if report.passed { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LRT_LOG", "info"))
        .format(|buf, rec| writeln!(buf, "{}", rec.args()))
        .init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
