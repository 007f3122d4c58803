//! Monte Carlo calibration: draw null data, compute p-values under each
//! regime, and summarize how close they are to uniform.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beta_oracle::{
    exact_log_moments, sample_log_product, spec_independence, spec_regression, verify_clt_conditions,
    BetaProductSpec, CltDiagnostics, LogMoments,
};
use crate::error::{Error, Result};
use crate::linalg::{GroupedSample, Matrix, RegressionData};
use crate::lrt::{
    check_alpha, standardize_equal_cov, standardize_equal_dist, standardize_independence,
    standardize_regression, stat_equal_cov, stat_equal_dist, stat_independence, stat_regression,
    BlockPartition, Regime, Standardization, TestKind,
};
use crate::rng::{stream, StreamRng, SHARED_STREAM};

pub const HISTOGRAM_BINS: usize = 20;

/// Dimensions of one experiment; the data are always drawn from the null with
/// identity covariance and zero means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "kebab-case")]
pub enum Design {
    Independence { n: usize, blocks: BlockPartition },
    /// Designs are standard normal with an intercept as the first nuisance
    /// column, drawn once per experiment.
    Regression { n: usize, p: usize, q1: usize, q2: usize },
    EqualCov { sizes: Vec<usize>, p: usize },
    EqualDist { sizes: Vec<usize>, p: usize },
}

impl Design {
    pub fn kind(&self) -> TestKind {
        match self {
            Design::Independence { .. } => TestKind::Independence,
            Design::Regression { .. } => TestKind::Regression,
            Design::EqualCov { .. } => TestKind::EqualCov,
            Design::EqualDist { .. } => TestKind::EqualDist,
        }
    }

    fn standardize(&self, regime: Regime) -> Result<Standardization> {
        match self {
            Design::Independence { n, blocks } => standardize_independence(*n, blocks, regime),
            Design::Regression { n, p, q1, q2 } => {
                if regime == Regime::FixedQ {
                    return Err(Error::Config(
                        "the regression test has only the growing-dimension standardization".into(),
                    ));
                }
                standardize_regression(*n, *p, *q1, *q2)
            }
            Design::EqualCov { sizes, p } => standardize_equal_cov(sizes, *p, regime),
            Design::EqualDist { sizes, p } => standardize_equal_dist(sizes, *p, regime),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub design: Design,
    pub replications: usize,
    pub seed: u64,
    pub regimes: Vec<Regime>,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig1,
    Fig2,
    Fig3,
    Fig4a,
    Fig4b,
    Fig4c,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fig1" => Preset::Fig1,
            "fig2" => Preset::Fig2,
            "fig3" => Preset::Fig3,
            "fig4a" => Preset::Fig4a,
            "fig4b" => Preset::Fig4b,
            "fig4c" => Preset::Fig4c,
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {s:?}; expected fig1, fig2, fig3, fig4a, fig4b or fig4c"
                )))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Reduced dimensions or replication counts that run in minutes.
    Desk,
    /// Full dimensions with 20000 replications.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::Config(format!(
                "unknown scale {s:?}; expected desk or paper"
            ))),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset, scale: Scale, seed: u64) -> Self {
        let replications = match scale {
            Scale::Desk => 2000,
            Scale::Paper => 20_000,
        };
        let equal_dist = |nj: usize, p: usize, q: usize| Design::EqualDist {
            sizes: vec![nj; q],
            p,
        };
        let design = match (preset, scale) {
            (Preset::Fig1, Scale::Desk) => Design::Independence {
                n: 200,
                blocks: BlockPartition::equal(10, 6).expect("non-empty"),
            },
            (Preset::Fig1, Scale::Paper) => Design::Independence {
                n: 800,
                blocks: BlockPartition::equal(40, 18).expect("non-empty"),
            },
            (Preset::Fig2, _) => equal_dist(80, 40, 300),
            (Preset::Fig3, _) => equal_dist(200, 100, 50),
            (Preset::Fig4a, _) => equal_dist(80, 40, 100),
            (Preset::Fig4b, _) => equal_dist(80, 40, 200),
            (Preset::Fig4c, _) => equal_dist(80, 40, 300),
        };
        ExperimentConfig {
            design,
            replications,
            seed,
            regimes: Regime::ALL.to_vec(),
            alpha: 0.05,
        }
    }

    /// Checks everything that can fail before any data are drawn and returns
    /// the standardization for each requested regime.
    pub fn validate(&self) -> Result<Vec<Standardization>> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        check_alpha(self.alpha)?;
        if self.regimes.is_empty() {
            return Err(Error::Config("no regime requested".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if self.regimes[..i].contains(r) {
                return Err(Error::Config(format!("regime {r} listed twice")));
            }
        }
        match &self.design {
            Design::Independence { n, blocks } => {
                let p = blocks.total();
                if *n <= p + 1 {
                    return Err(Error::Precondition(format!(
                        "requires n > p + 1; got n = {n}, p = {p}"
                    )));
                }
            }
            Design::Regression { q1, q2, .. } => {
                if *q1 == 0 || *q2 == 0 {
                    return Err(Error::Config(
                        "regression experiments need q1 ≥ 1 and q2 ≥ 1 (the intercept)".into(),
                    ));
                }
            }
            Design::EqualCov { sizes, p } | Design::EqualDist { sizes, p } => {
                if sizes.is_empty() || *p == 0 {
                    return Err(Error::Config("need at least one group and p ≥ 1".into()));
                }
            }
        }
        self.regimes
            .iter()
            .map(|&r| self.design.standardize(r))
            .collect()
    }
}

/// Standard-normal regression designs with an intercept in column q₁.
pub fn regression_designs(n: usize, q1: usize, q2: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, SHARED_STREAM);
    let mut z = Matrix::standard_normal(n, q1 + q2, &mut rng);
    for i in 0..n {
        z.set(i, q1, 1.0);
    }
    z
}

/// Everything fixed across replications.
struct Prepared {
    standardizations: Vec<Standardization>,
    designs: Option<Matrix>,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let standardizations = cfg.validate()?;
    let designs = match &cfg.design {
        Design::Regression { n, q1, q2, .. } => Some(regression_designs(*n, *q1, *q2, cfg.seed)),
        _ => None,
    };
    Ok(Prepared {
        standardizations,
        designs,
    })
}

fn null_groups(sizes: &[usize], p: usize, rng: &mut StreamRng) -> Result<GroupedSample> {
    GroupedSample::new(
        sizes
            .iter()
            .map(|&nj| Matrix::standard_normal(nj, p, rng))
            .collect(),
        None,
    )
}

/// Statistic of one null replication drawn from `rng`.
fn null_statistic(design: &Design, designs: Option<&Matrix>, rng: &mut StreamRng) -> Result<f64> {
    match design {
        Design::Independence { n, blocks } => {
            stat_independence(&Matrix::standard_normal(*n, blocks.total(), rng), blocks)
        }
        Design::Regression { n, p, q1, .. } => {
            let z = designs.expect("designs prepared for regression").clone();
            let d = RegressionData::new(Matrix::standard_normal(*n, *p, rng), z, *q1)?;
            stat_regression(&d, &Matrix::zeros(*p, *q1))
        }
        Design::EqualCov { sizes, p } => stat_equal_cov(&null_groups(sizes, *p, rng)?),
        Design::EqualDist { sizes, p } => stat_equal_dist(&null_groups(sizes, *p, rng)?),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: Regime,
    pub center: f64,
    pub scale: f64,
    pub pvalues: Vec<f64>,
    pub rejection_rate: f64,
    pub ks: f64,
    pub histogram: Vec<usize>,
}

impl RegimeSummary {
    fn new(st: &Standardization, pvalues: Vec<f64>, alpha: f64) -> Self {
        let m = pvalues.len();
        let (rejection_rate, ks) = if m == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (
                pvalues.iter().filter(|&&p| p < alpha).count() as f64 / m as f64,
                ks_uniform(&pvalues).expect("non-empty"),
            )
        };
        RegimeSummary {
            regime: st.regime,
            center: st.center,
            scale: st.scale,
            histogram: histogram(&pvalues),
            pvalues,
            rejection_rate,
            ks,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedReplication {
    pub replication: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config: ExperimentConfig,
    pub regimes: Vec<RegimeSummary>,
    /// Stream index of each retained replication, aligned with `pvalues`.
    pub streams: Vec<u64>,
    pub excluded: usize,
    pub failures: Vec<ExcludedReplication>,
    pub runtime_secs: f64,
}

impl CalibrationReport {
    pub fn regime(&self, r: Regime) -> Option<&RegimeSummary> {
        self.regimes.iter().find(|s| s.regime == r)
    }

    pub fn summary_lines(&self) -> Vec<String> {
        self.regimes
            .iter()
            .map(|s| {
                format!(
                    "{} {}: rejection rate {:.4} at alpha {}, KS {:.4}, {} p-values, {} excluded",
                    self.config.design.kind(),
                    s.regime,
                    s.rejection_rate,
                    self.config.alpha,
                    s.ks,
                    s.pvalues.len(),
                    self.excluded
                )
            })
            .collect()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<CalibrationReport> {
    run_replications(cfg, 0..cfg.replications as u64)
}

/// Runs the replications whose stream indices lie in `range`. Splitting the
/// full range and concatenating the reports reproduces a single run.
pub fn run_replications(cfg: &ExperimentConfig, range: Range<u64>) -> Result<CalibrationReport> {
    let prep = prepare(cfg)?;
    let started = Instant::now();
    info!(
        "{} experiment: {} replications, seed {}",
        cfg.design.kind(),
        range.end.saturating_sub(range.start),
        cfg.seed
    );
    let stats: Vec<(u64, Result<f64>)> = range
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(cfg.seed, r);
            (r, null_statistic(&cfg.design, prep.designs.as_ref(), &mut rng))
        })
        .collect();

    let mut streams = Vec::with_capacity(stats.len());
    let mut values = Vec::with_capacity(stats.len());
    let mut failures = Vec::new();
    for (r, s) in stats {
        match s {
            Ok(v) => {
                streams.push(r);
                values.push(v);
            }
            Err(e) if e.is_numerical() => {
                debug!("replication {r} excluded: {e}");
                failures.push(ExcludedReplication {
                    replication: r,
                    error: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    let regimes = prep
        .standardizations
        .iter()
        .map(|st| {
            let p = values.iter().map(|&v| st.p_value(v)).collect();
            RegimeSummary::new(st, p, cfg.alpha)
        })
        .collect();
    let report = CalibrationReport {
        config: cfg.clone(),
        regimes,
        streams,
        excluded: failures.len(),
        failures,
        runtime_secs: started.elapsed().as_secs_f64(),
    };
    for line in report.summary_lines() {
        info!("{line}");
    }
    Ok(report)
}

fn histogram(pvalues: &[f64]) -> Vec<usize> {
    let mut h = vec![0; HISTOGRAM_BINS];
    for &p in pvalues {
        let bin = ((p * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        h[bin] += 1;
    }
    h
}

fn sorted(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InsufficientData("empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Config("sample contains NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// One-sample Kolmogorov–Smirnov distance sup_t |F̂(t) − t| from Uniform(0, 1).
pub fn ks_uniform(pvalues: &[f64]) -> Result<f64> {
    let v = sorted(pvalues)?;
    let m = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0, |d: f64, (i, &p)| {
        let t = p.clamp(0.0, 1.0);
        d.max((i + 1) as f64 / m - t).max(t - i as f64 / m)
    }))
}

/// Two-sample Kolmogorov–Smirnov distance sup_t |F̂_a(t) − F̂_b(t)|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic critical value of the two-sample KS distance at level `alpha`.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    (-0.5 * (alpha / 2.0).ln()).sqrt() * ((n + m) / (n * m)).sqrt()
}

// ---------------------------------------------------------------------------
// Beta-product cross-check

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "kebab-case")]
pub enum OracleTarget {
    Independence { n: usize, blocks: BlockPartition },
    Regression { n: usize, p: usize, q1: usize, q2: usize },
}

impl OracleTarget {
    pub fn spec(&self) -> Result<BetaProductSpec> {
        match self {
            OracleTarget::Independence { n, blocks } => spec_independence(*n, blocks),
            OracleTarget::Regression { n, p, q1, q2 } => spec_regression(*n, *p, q1 + q2, *q1),
        }
    }

    fn design(&self) -> Design {
        match self {
            OracleTarget::Independence { n, blocks } => Design::Independence {
                n: *n,
                blocks: blocks.clone(),
            },
            OracleTarget::Regression { n, p, q1, q2 } => Design::Regression {
                n: *n,
                p: *p,
                q1: *q1,
                q2: *q2,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub target: OracleTarget,
    /// Draws per sample; each repetition compares two samples of this size.
    pub draws: usize,
    pub repetitions: usize,
    pub seed: u64,
    /// Level of the two-sample KS comparison.
    pub level: f64,
}

impl OracleConfig {
    pub fn new(target: OracleTarget, seed: u64) -> Self {
        OracleConfig {
            target,
            draws: 5000,
            repetitions: 20,
            seed,
            level: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRepetition {
    pub ks: f64,
    pub critical: f64,
    pub pass: bool,
    /// |MC mean − exact mean| in standard errors of the MC mean.
    pub mean_gap_se: f64,
    /// |MC variance − exact variance| in standard errors of the MC variance.
    pub variance_gap_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub config: OracleConfig,
    pub exact: Option<LogMoments>,
    pub clt: Option<CltDiagnostics>,
    pub repetitions: Vec<OracleRepetition>,
    pub pass_count: usize,
    /// At least 95% of repetitions pass the KS comparison.
    pub passed: bool,
}

fn moment_gaps(sample: &[f64], exact: &LogMoments) -> (f64, f64) {
    let m = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / m;
    let c2 = sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let c4 = sample.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
    let var = c2 * m / (m - 1.0);
    let mean_se = (exact.variance / m).sqrt();
    let var_se = ((c4 - c2 * c2) / m).sqrt();
    (
        (mean - exact.mean).abs() / mean_se,
        (var - exact.variance).abs() / var_se,
    )
}

pub fn oracle_crosscheck(cfg: &OracleConfig) -> Result<OracleReport> {
    if cfg.draws < 2 || cfg.repetitions == 0 {
        return Err(Error::Config(
            "oracle cross-check needs at least 2 draws and 1 repetition".into(),
        ));
    }
    check_alpha(cfg.level)?;
    let spec = cfg.target.spec()?;
    let design = cfg.target.design();
    let designs = match &cfg.target {
        OracleTarget::Regression { n, q1, q2, .. } => {
            if *q2 == 0 {
                return Err(Error::Config("q2 must be at least 1 (the intercept)".into()));
            }
            Some(regression_designs(*n, *q1, *q2, cfg.seed))
        }
        OracleTarget::Independence { .. } => None,
    };
    let (exact, clt) = if spec.is_empty() {
        (None, None)
    } else {
        (
            Some(exact_log_moments(&spec)?),
            Some(verify_clt_conditions(&spec, 1.0)?),
        )
    };
    let critical = ks_two_sample_critical(cfg.level, cfg.draws, cfg.draws);
    // Repetition r uses streams r(draws + 1) .. r(draws + 1) + draws − 1 for
    // Gaussian data and the next one for all of its Beta draws.
    let block = cfg.draws as u64 + 1;
    let repetitions = (0..cfg.repetitions as u64)
        .map(|r| -> Result<OracleRepetition> {
            let base = r * block;
            let gaussian = (0..cfg.draws as u64)
                .into_par_iter()
                .map(|k| {
                    let mut rng = stream(cfg.seed, base + k);
                    null_statistic(&design, designs.as_ref(), &mut rng)
                })
                .collect::<Result<Vec<f64>>>()?;
            let beta = if spec.is_empty() {
                vec![0.0; cfg.draws]
            } else {
                let mut rng = stream(cfg.seed, base + cfg.draws as u64);
                (0..cfg.draws)
                    .map(|_| sample_log_product(&spec, &mut rng))
                    .collect::<Result<Vec<f64>>>()?
            };
            let ks = ks_two_sample(&gaussian, &beta)?;
            let (mean_gap_se, variance_gap_se) = match &exact {
                Some(m) => moment_gaps(&gaussian, m),
                None => (0.0, 0.0),
            };
            Ok(OracleRepetition {
                ks,
                critical,
                pass: ks < critical,
                mean_gap_se,
                variance_gap_se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass_count = repetitions.iter().filter(|r| r.pass).count();
    Ok(OracleReport {
        config: cfg.clone(),
        exact,
        clt,
        passed: pass_count as f64 >= 0.95 * cfg.repetitions as f64,
        pass_count,
        repetitions,
    })
}

// ---------------------------------------------------------------------------
// Output

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

#[derive(Serialize)]
struct PvalueRow {
    replication: u64,
    regime: Regime,
    pvalue: f64,
}

/// Long-format CSV with columns replication, regime, pvalue.
pub fn write_pvalues_csv(report: &CalibrationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in &report.regimes {
        for (&replication, &pvalue) in report.streams.iter().zip(&s.pvalues) {
            w.serialize(PvalueRow {
                replication,
                regime: s.regime,
                pvalue,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4a => "fig4a",
            Preset::Fig4b => "fig4b",
            Preset::Fig4c => "fig4c",
        };
        f.write_str(s)
    }
}
