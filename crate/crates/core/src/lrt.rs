//! The four log-likelihood-ratio statistics and their growing-q / fixed-q
//! standardizations.
//!
//! | test | statistic | growing-q scale | fixed-q scale |
//! |------|-----------|-----------------|---------------|
//! | independence of q blocks | (2/n) log Λ_n | σ_{n,q} | σ_{n−1,q} |
//! | linear regression hypothesis | (2/n) log Λ_n | σ (y₁, y₂ plug-ins) | — |
//! | equal covariances (Bartlett-modified) | log Λ̃_{n,1} | √(p(n−q)) σ_n | (n−q) σ_n⁽¹⁾ |
//! | equal distributions | log Λ_n | √(pn) σ̃_n | n σ̃_n⁽¹⁾ |
//!
//! Every test rejects for small Λ, so p-values are left-tail: p = Φ(z) with
//! z = (statistic − center) / scale.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    regression_residual_covariances, sample_covariance, scatter_matrices, GroupedSample, Matrix,
    RegressionData, Scatter, SymMatrix,
};
use crate::specfun::std_normal_cdf;

/// Scales (or variances) at or below this are treated as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Slack allowed when checking that log Λ ≤ 0.
pub const NONPOSITIVE_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// Number of groups grows jointly with dimension and sample size.
    GrowingQ,
    /// Number of groups held fixed.
    FixedQ,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::GrowingQ, Regime::FixedQ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::GrowingQ => "growing-q",
            Regime::FixedQ => "fixed-q",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "growing-q" => Ok(Regime::GrowingQ),
            "fixed-q" => Ok(Regime::FixedQ),
            _ => Err(Error::Config(format!(
                "unknown regime {s:?}; expected growing-q or fixed-q"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Independence,
    Regression,
    EqualCov,
    EqualDist,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::Independence => "independence",
            TestKind::Regression => "regression",
            TestKind::EqualCov => "equal-cov",
            TestKind::EqualDist => "equal-dist",
        }
    }

    /// Whether a fixed-q standardization exists for this test.
    pub fn supports(self, regime: Regime) -> bool {
        !(self == TestKind::Regression && regime == Regime::FixedQ)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independence" => Ok(TestKind::Independence),
            "regression" => Ok(TestKind::Regression),
            "equal-cov" => Ok(TestKind::EqualCov),
            "equal-dist" => Ok(TestKind::EqualDist),
            _ => Err(Error::Config(format!(
                "unknown test {s:?}; expected independence, regression, equal-cov or equal-dist"
            ))),
        }
    }
}

/// Ordered block sizes (p₁, …, p_q) of a partitioned dimension p.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BlockPartition {
    sizes: Vec<usize>,
}

impl BlockPartition {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Config("block partition needs at least one block".into()));
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Config(format!("block {} has size 0", i + 1)));
        }
        Ok(BlockPartition { sizes })
    }

    /// `count` blocks of equal size `size`.
    pub fn equal(count: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; count])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Cumulative offsets p_i* = Σ_{l<i} p_l.
    pub fn offsets(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect()
    }
}

impl TryFrom<Vec<usize>> for BlockPartition {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BlockPartition> for Vec<usize> {
    fn from(b: BlockPartition) -> Self {
        b.sizes
    }
}

/// A (center, scale) pair for one statistic under one regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub kind: TestKind,
    pub regime: Regime,
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    pub fn new(kind: TestKind, regime: Regime, center: f64, scale: f64) -> Result<Self> {
        if !center.is_finite() {
            return Err(Error::RegimeViolation(format!(
                "{kind} {regime} center is not finite"
            )));
        }
        if !scale.is_finite() || scale <= DEGENERATE_TOL {
            return Err(Error::DegenerateScale(format!(
                "{kind} {regime} scale is {scale:e}; it must be positive"
            )));
        }
        Ok(Standardization {
            kind,
            regime,
            center,
            scale,
        })
    }

    pub fn z(&self, statistic: f64) -> f64 {
        (statistic - self.center) / self.scale
    }

    /// Left-tail p-value Φ(z).
    pub fn p_value(&self, statistic: f64) -> f64 {
        std_normal_cdf(self.z(statistic))
    }
}

/// log(num / den), failing when the ratio is not positive.
fn ln_ratio(num: f64, den: f64) -> Result<f64> {
    let r = num / den;
    if r > 0.0 && r.is_finite() {
        Ok(r.ln())
    } else {
        Err(Error::RegimeViolation(format!(
            "log argument {num}/{den} is not positive"
        )))
    }
}

/// log(1 − x) for x < 1.
fn ln_1m(x: f64) -> Result<f64> {
    if x < 1.0 {
        Ok((-x).ln_1p())
    } else {
        Err(Error::RegimeViolation(format!(
            "log(1 − {x}) has a non-positive argument"
        )))
    }
}

fn check_variance(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() && v > DEGENERATE_TOL {
        Ok(v)
    } else {
        Err(Error::DegenerateScale(format!(
            "{what} = {v:e} is not positive"
        )))
    }
}

fn singular(e: Error, msg: impl FnOnce() -> String) -> Error {
    match e {
        Error::NotPositiveDefinite { .. } => Error::Rank(msg()),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Independence of q blocks

/// log|Σ̂| and Σ_i log|Σ̂_ii|.
fn independence_logdets(x: &Matrix, blocks: &BlockPartition) -> Result<(f64, f64)> {
    let (n, p) = (x.rows(), x.cols());
    if blocks.total() != p {
        return Err(Error::DimensionMismatch(format!(
            "blocks sum to {} but the data has {p} columns",
            blocks.total()
        )));
    }
    if n <= p + 1 {
        return Err(Error::Precondition(format!(
            "requires n > p + 1; got n = {n}, p = {p}"
        )));
    }
    let s = sample_covariance(x)?;
    let rank_msg = || format!("sample covariance is singular (n = {n}, p = {p}); requires n > p and non-degenerate data");
    let full = s.logdet().map_err(|e| singular(e, rank_msg))?;
    let mut parts = 0.0;
    for (o, len) in blocks.offsets().into_iter().zip(blocks.sizes()) {
        parts += s.block(o, *len).logdet().map_err(|e| singular(e, rank_msg))?;
    }
    Ok((full, parts))
}

/// (2/n) log Λ_n = log|Σ̂| − Σ_i log|Σ̂_ii| for the hypothesis of independent
/// blocks. Non-positive by Fischer's inequality.
pub fn stat_independence(x: &Matrix, blocks: &BlockPartition) -> Result<f64> {
    if blocks.num_blocks() == 1 && blocks.total() == x.cols() {
        return Ok(0.0);
    }
    let (full, parts) = independence_logdets(x, blocks)?;
    Ok(full - parts)
}

/// σ²_{m,q} = 2 log(Π(1 − p_i/m) / (1 − p/m)).
fn independence_variance(m: f64, blocks: &BlockPartition) -> Result<f64> {
    let p = blocks.total() as f64;
    let mut s = -ln_1m(p / m)?;
    for &pi in blocks.sizes() {
        s += ln_1m(pi as f64 / m)?;
    }
    Ok(2.0 * s)
}

pub fn standardize_independence(
    n: usize,
    blocks: &BlockPartition,
    regime: Regime,
) -> Result<Standardization> {
    let p = blocks.total();
    if n <= p + 1 {
        return Err(Error::Precondition(format!(
            "requires n > p + 1; got n = {n}, p = {p}"
        )));
    }
    let (nf, pf) = (n as f64, p as f64);
    // Σ (n − p_i − c) log(1 − p_i/(n−1)) − (n − p − c) log(1 − p/(n−1))
    let bias = |c: f64| -> Result<f64> {
        let mut s = -(nf - pf - c) * ln_1m(pf / (nf - 1.0))?;
        for &pi in blocks.sizes() {
            let pi = pi as f64;
            s += (nf - pi - c) * ln_1m(pi / (nf - 1.0))?;
        }
        Ok(s)
    };
    let (center, var) = match regime {
        Regime::GrowingQ => {
            let var = independence_variance(nf, blocks)?;
            (bias(1.0)? - var / 4.0, var)
        }
        Regime::FixedQ => (bias(1.5)?, independence_variance(nf - 1.0, blocks)?),
    };
    let var = check_variance(var, "independence variance σ²")?;
    Standardization::new(TestKind::Independence, regime, center, var.sqrt())
}

// ---------------------------------------------------------------------------
// Linear hypothesis on regression coefficients

fn regression_logdets(d: &RegressionData, beta01: &Matrix) -> Result<(f64, f64)> {
    let (n, p, q) = (d.n(), d.p(), d.q());
    if n <= q + p {
        return Err(Error::Precondition(format!(
            "requires n > q + p; got n = {n}, q = {q}, p = {p}"
        )));
    }
    let (full, null) = regression_residual_covariances(d, beta01)?;
    let msg = || format!("residual covariance is singular (n = {n}, q = {q}, p = {p})");
    Ok((
        full.logdet().map_err(|e| singular(e, msg))?,
        null.logdet().map_err(|e| singular(e, msg))?,
    ))
}

/// (2/n) log Λ_n = log|Σ̂| − log|Σ̂₀| for H₀: β₁ = β₀₁.
pub fn stat_regression(d: &RegressionData, beta01: &Matrix) -> Result<f64> {
    let (full, null) = regression_logdets(d, beta01)?;
    Ok(full - null)
}

/// Growing-dimension standardization with plug-ins y₁ = p/q₁, y₂ = p/(n − q).
pub fn standardize_regression(n: usize, p: usize, q1: usize, q2: usize) -> Result<Standardization> {
    let q = q1 + q2;
    if q1 == 0 {
        return Err(Error::Precondition("requires q1 ≥ 1".into()));
    }
    if n < q + p + 2 {
        return Err(Error::Precondition(format!(
            "requires n − q − p > 1; got n = {n}, q = {q}, p = {p}"
        )));
    }
    let (nf, pf, qf, q1f, q2f) = (n as f64, p as f64, q as f64, q1 as f64, q2 as f64);
    let y1 = pf / q1f;
    let y2 = pf / (nf - qf);
    if y2 >= 1.0 {
        return Err(Error::RegimeViolation(format!(
            "y2 = p/(n − q) = {y2} must be below 1"
        )));
    }
    let var = 2.0 * (-ln_1m(y2)? - ln_ratio(y1 + y2, y1 + y2 - y1 * y2)?);
    let var = check_variance(var, "regression variance σ²")?;
    let center = (nf - q2f - 1.0) * ln_ratio(nf - qf - 1.0, nf - q2f - 1.0)?
        + q1f * ln_ratio(nf - qf - pf - 1.0, nf - qf - 1.0)?
        + (nf - q2f - pf - 1.0) * ln_ratio(nf - q2f - pf - 1.0, nf - qf - pf - 1.0)?
        + var / 4.0;
    Standardization::new(TestKind::Regression, Regime::GrowingQ, center, var.sqrt())
}

// ---------------------------------------------------------------------------
// q-sample tests

fn check_group_sizes(sizes: &[usize], p: usize, excess: usize) -> Result<()> {
    for (j, &nj) in sizes.iter().enumerate() {
        if nj <= p + excess {
            return Err(Error::Precondition(format!(
                "requires n_j > p + {excess}; group {} has n_j = {nj}, p = {p}",
                j + 1
            )));
        }
    }
    Ok(())
}

/// log|A_j| per group plus log|A| and log|B|.
struct GroupLogdets {
    within: Vec<f64>,
    pooled: f64,
    total: f64,
}

fn group_logdets(sc: &Scatter, with_total: bool) -> Result<GroupLogdets> {
    let mut within = Vec::with_capacity(sc.within.len());
    for (j, a) in sc.within.iter().enumerate() {
        within.push(a.logdet().map_err(|e| {
            singular(e, || format!("scatter matrix of group {} is singular", j + 1))
        })?);
    }
    let pooled = sc
        .pooled
        .logdet()
        .map_err(|e| singular(e, || "pooled scatter matrix A is singular".into()))?;
    let total = if with_total {
        sc.total
            .logdet()
            .map_err(|e| singular(e, || "total scatter matrix B is singular".into()))?
    } else {
        f64::NAN
    };
    Ok(GroupLogdets {
        within,
        pooled,
        total,
    })
}

fn equal_cov_from_logdets(sizes: &[usize], p: usize, ld: &GroupLogdets) -> f64 {
    let pf = p as f64;
    let q = sizes.len();
    let dof = (sizes.iter().sum::<usize>() - q) as f64;
    let groups: f64 = sizes
        .iter()
        .zip(&ld.within)
        .map(|(&nj, l)| {
            let m = (nj - 1) as f64;
            0.5 * m * (l - pf * m.ln())
        })
        .sum();
    groups - 0.5 * dof * (ld.pooled - pf * dof.ln())
}

/// Unmodified log Λ_{n,1} (sample sizes instead of degrees of freedom).
fn equal_cov_unmodified(sizes: &[usize], p: usize, ld: &GroupLogdets) -> f64 {
    let pf = p as f64;
    let n = sizes.iter().sum::<usize>() as f64;
    let groups: f64 = sizes
        .iter()
        .zip(&ld.within)
        .map(|(&nj, l)| {
            let m = nj as f64;
            0.5 * m * (l - pf * m.ln())
        })
        .sum();
    groups - 0.5 * n * (ld.pooled - pf * n.ln())
}

fn equal_dist_from_logdets(sizes: &[usize], p: usize, ld: &GroupLogdets) -> f64 {
    let pf = p as f64;
    let n = sizes.iter().sum::<usize>() as f64;
    let groups: f64 = sizes
        .iter()
        .zip(&ld.within)
        .map(|(&nj, l)| {
            let m = nj as f64;
            0.5 * m * (l - pf * m.ln())
        })
        .sum();
    groups - 0.5 * n * (ld.total - pf * n.ln())
}

fn q_sample_logdets(s: &GroupedSample, with_total: bool) -> Result<GroupLogdets> {
    check_group_sizes(&s.sizes(), s.dim(), 1)?;
    let sc = scatter_matrices(s)?;
    group_logdets(&sc, with_total)
}

/// Bartlett-modified log Λ̃_{n,1} for H₀: Σ₁ = … = Σ_q.
pub fn stat_equal_cov(s: &GroupedSample) -> Result<f64> {
    let ld = q_sample_logdets(s, false)?;
    Ok(equal_cov_from_logdets(&s.sizes(), s.dim(), &ld))
}

/// log Λ_n for H₀: μ₁ = … = μ_q and Σ₁ = … = Σ_q.
pub fn stat_equal_dist(s: &GroupedSample) -> Result<f64> {
    let ld = q_sample_logdets(s, true)?;
    Ok(equal_dist_from_logdets(&s.sizes(), s.dim(), &ld))
}

/// log Λ_{n,1} − log Λ̃_{n,1} computed from the data.
pub fn bartlett_gap(s: &GroupedSample) -> Result<f64> {
    let ld = q_sample_logdets(s, false)?;
    let sizes = s.sizes();
    Ok(equal_cov_unmodified(&sizes, s.dim(), &ld) - equal_cov_from_logdets(&sizes, s.dim(), &ld))
}

/// Closed form for log Λ_{n,1} − log Λ̃_{n,1}:
/// ½ Σ p n_j log((n_j−1)/n_j) − ½ p n log((n−q)/n) − Σ (p/2) log((n_j−1)/(n−q)).
///
/// This omits the data term ½ Σ_j log|A_j| − (q/2) log|A|, so it does not
/// equal [`bartlett_gap`]; see [`bartlett_gap_data_term`].
pub fn bartlett_gap_closed_form(sizes: &[usize], p: usize) -> f64 {
    let pf = p as f64;
    let q = sizes.len() as f64;
    let n = sizes.iter().sum::<usize>() as f64;
    let mut s = -0.5 * pf * n * ((n - q) / n).ln();
    for &nj in sizes {
        let m = nj as f64;
        s += 0.5 * pf * m * ((m - 1.0) / m).ln() - 0.5 * pf * ((m - 1.0) / (n - q)).ln();
    }
    s
}

/// ½ Σ_j log|A_j| − (q/2) log|A|, the part of the Bartlett gap that depends on
/// the data.
pub fn bartlett_gap_data_term(s: &GroupedSample) -> Result<f64> {
    let ld = q_sample_logdets(s, false)?;
    Ok(0.5 * ld.within.iter().sum::<f64>() - 0.5 * ld.within.len() as f64 * ld.pooled)
}

struct Totals {
    n: f64,
    q: f64,
    p: f64,
}

fn q_sample_preconditions(sizes: &[usize], p: usize) -> Result<Totals> {
    if sizes.is_empty() {
        return Err(Error::Config("no groups".into()));
    }
    if p == 0 {
        return Err(Error::Config("dimension p must be positive".into()));
    }
    check_group_sizes(sizes, p, 2)?;
    let n: usize = sizes.iter().sum();
    let q = sizes.len();
    if n - q <= p {
        return Err(Error::Precondition(format!(
            "requires n − q > p; got n = {n}, q = {q}, p = {p}"
        )));
    }
    Ok(Totals {
        n: n as f64,
        q: q as f64,
        p: p as f64,
    })
}

pub fn standardize_equal_cov(sizes: &[usize], p: usize, regime: Regime) -> Result<Standardization> {
    let Totals { n, q, p: pf } = q_sample_preconditions(sizes, p)?;
    let dof = n - q;
    match regime {
        Regime::GrowingQ => {
            let mut var = -0.5;
            let mut center = -0.5 * dof * (dof - pf) * ln_ratio(dof, dof - pf)?;
            for &nj in sizes {
                let m = nj as f64;
                var += 0.5 * (m - 1.0).powi(2) / (pf * dof) * ln_ratio(m - 1.0, m - pf - 1.0)?;
                center += 0.5
                    * (m - 1.0)
                    * ((m - 1.5) * ln_ratio(m - 2.0, m - pf - 2.0)?
                        - pf * ln_ratio(m - 1.0, m - pf - 2.0)?);
            }
            let var = check_variance(var, "equal-covariance variance σ_n²")?;
            Standardization::new(
                TestKind::EqualCov,
                regime,
                center,
                (pf * dof).sqrt() * var.sqrt(),
            )
        }
        Regime::FixedQ => {
            let lp = ln_1m(pf / dof)?;
            let mut mu = dof * (2.0 * n - 2.0 * pf - 2.0 * q - 1.0) * lp;
            let mut var = lp;
            for &nj in sizes {
                let m = nj as f64;
                let lj = ln_1m(pf / (m - 1.0))?;
                mu -= (m - 1.0) * (2.0 * m - 2.0 * pf - 3.0) * lj;
                var -= ((m - 1.0) / dof).powi(2) * lj;
            }
            let var = check_variance(0.5 * var, "equal-covariance variance (σ_n⁽¹⁾)²")?;
            Standardization::new(TestKind::EqualCov, regime, 0.25 * mu, dof * var.sqrt())
        }
    }
}

pub fn standardize_equal_dist(
    sizes: &[usize],
    p: usize,
    regime: Regime,
) -> Result<Standardization> {
    let Totals { n, q, p: pf } = q_sample_preconditions(sizes, p)?;
    match regime {
        Regime::GrowingQ => {
            let h = 0.5 * n;
            if h <= pf + 1.0 {
                return Err(Error::Precondition(format!(
                    "requires n/2 > p + 1; got n = {n}, p = {p}"
                )));
            }
            let hq = h + 0.5 * q - 1.5;
            let mut var = -0.5;
            let mut center = h
                * (pf * ln_ratio(h - 1.0, hq)?
                    + (n - q - pf) * ln_ratio(n - q - pf, n - q)?
                    + pf * n.ln()
                    + (h - pf - 1.0) * ln_ratio(h - 1.0, h - pf - 1.0)?
                    + (hq - pf) * ln_ratio(hq - pf, hq)?);
            for &nj in sizes {
                let m = nj as f64;
                var += 0.5 * m * m / (pf * n) * ln_ratio(m - 1.0, m - pf - 1.0)?;
                center += 0.5
                    * m
                    * ((m - pf - 1.5) * ln_ratio(m - 2.0, m - pf - 2.0)?
                        + pf * ln_ratio(m - 2.0, n - q)?
                        - pf * m.ln());
            }
            let var = check_variance(var, "equal-distribution variance σ̃_n²")?;
            Standardization::new(TestKind::EqualDist, regime, center, (pf * n).sqrt() * var.sqrt())
        }
        Regime::FixedQ => {
            let lp = ln_1m(pf / n)?;
            let mut mu = -2.0 * q * pf - n * (2.0 * pf - 2.0 * n + 3.0) * lp;
            let mut var = lp;
            for &nj in sizes {
                let m = nj as f64;
                let lj = ln_1m(pf / (m - 1.0))?;
                // y_j = p/n_j
                mu += -pf / m + m * (2.0 * pf - 2.0 * m + 3.0) * lj;
                var -= (m / n).powi(2) * lj;
            }
            let var = check_variance(0.5 * var, "equal-distribution variance (σ̃_n⁽¹⁾)²")?;
            Standardization::new(TestKind::EqualDist, regime, 0.25 * mu, n * var.sqrt())
        }
    }
}

// ---------------------------------------------------------------------------
// Reports

/// Outcome of one test under one standardization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    #[serde(flatten)]
    pub standardization: Standardization,
    pub z: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

impl TestReport {
    pub fn new(
        statistic: f64,
        standardization: Standardization,
        alpha: f64,
        diagnostics: BTreeMap<String, f64>,
    ) -> Self {
        let z = standardization.z(statistic);
        let p_value = std_normal_cdf(z);
        TestReport {
            statistic,
            standardization,
            z,
            p_value,
            alpha,
            reject: p_value < alpha,
            diagnostics,
        }
    }

    pub fn regime(&self) -> Regime {
        self.standardization.regime
    }
}

/// Data for one of the four tests.
#[derive(Clone, Debug)]
pub enum TestInput {
    Independence {
        observations: Matrix,
        blocks: BlockPartition,
    },
    Regression {
        data: RegressionData,
        beta01: Matrix,
    },
    EqualCov(GroupedSample),
    EqualDist(GroupedSample),
}

impl TestInput {
    pub fn kind(&self) -> TestKind {
        match self {
            TestInput::Independence { .. } => TestKind::Independence,
            TestInput::Regression { .. } => TestKind::Regression,
            TestInput::EqualCov(_) => TestKind::EqualCov,
            TestInput::EqualDist(_) => TestKind::EqualDist,
        }
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1); got {alpha}")))
    }
}

/// Statistic plus named raw quantities (log-determinants and similar).
fn evaluate(input: &TestInput) -> Result<(f64, BTreeMap<String, f64>)> {
    let mut diag = BTreeMap::new();
    let stat = match input {
        TestInput::Independence {
            observations,
            blocks,
        } => {
            let (full, parts) = independence_logdets(observations, blocks)?;
            diag.insert("logdet_sigma_hat".into(), full);
            diag.insert("sum_logdet_diagonal_blocks".into(), parts);
            diag.insert("n".into(), observations.rows() as f64);
            diag.insert("p".into(), blocks.total() as f64);
            diag.insert("q".into(), blocks.num_blocks() as f64);
            if blocks.num_blocks() == 1 {
                0.0
            } else {
                full - parts
            }
        }
        TestInput::Regression { data, beta01 } => {
            let (full, null) = regression_logdets(data, beta01)?;
            diag.insert("logdet_sigma_hat".into(), full);
            diag.insert("logdet_sigma0_hat".into(), null);
            diag.insert("n".into(), data.n() as f64);
            diag.insert("p".into(), data.p() as f64);
            diag.insert("q1".into(), data.q1() as f64);
            diag.insert("q2".into(), data.q2() as f64);
            full - null
        }
        TestInput::EqualCov(s) => {
            let ld = q_sample_logdets(s, false)?;
            let (sizes, p) = (s.sizes(), s.dim());
            let modified = equal_cov_from_logdets(&sizes, p, &ld);
            diag.insert("logdet_pooled".into(), ld.pooled);
            diag.insert("sum_logdet_within".into(), ld.within.iter().sum());
            diag.insert(
                "log_lambda_unmodified".into(),
                equal_cov_unmodified(&sizes, p, &ld),
            );
            diag.insert(
                "bartlett_gap".into(),
                equal_cov_unmodified(&sizes, p, &ld) - modified,
            );
            diag.insert(
                "bartlett_gap_closed_form".into(),
                bartlett_gap_closed_form(&sizes, p),
            );
            modified
        }
        TestInput::EqualDist(s) => {
            let ld = q_sample_logdets(s, true)?;
            let (sizes, p) = (s.sizes(), s.dim());
            diag.insert("logdet_total".into(), ld.total);
            diag.insert("logdet_pooled".into(), ld.pooled);
            diag.insert("sum_logdet_within".into(), ld.within.iter().sum());
            equal_dist_from_logdets(&sizes, p, &ld)
        }
    };
    Ok((stat, diag))
}

/// The standardization of `kind` for the sizes implied by `input`.
pub fn standardize(input: &TestInput, regime: Regime) -> Result<Standardization> {
    match input {
        TestInput::Independence {
            observations,
            blocks,
        } => standardize_independence(observations.rows(), blocks, regime),
        TestInput::Regression { data, .. } => {
            if regime == Regime::FixedQ {
                return Err(Error::Config(
                    "the regression test has only the growing-dimension standardization; use --regime growing-q".into(),
                ));
            }
            standardize_regression(data.n(), data.p(), data.q1(), data.q2())
        }
        TestInput::EqualCov(s) => standardize_equal_cov(&s.sizes(), s.dim(), regime),
        TestInput::EqualDist(s) => standardize_equal_dist(&s.sizes(), s.dim(), regime),
    }
}

/// Runs one test under one regime.
pub fn run_test(input: &TestInput, regime: Regime, alpha: f64) -> Result<TestReport> {
    Ok(run_test_regimes(input, &[regime], alpha)?.remove(0))
}

/// Runs one test under several regimes, computing the statistic once.
pub fn run_test_regimes(
    input: &TestInput,
    regimes: &[Regime],
    alpha: f64,
) -> Result<Vec<TestReport>> {
    check_alpha(alpha)?;
    if regimes.is_empty() {
        return Err(Error::Config("no regime requested".into()));
    }
    let standardizations = regimes
        .iter()
        .map(|&r| standardize(input, r))
        .collect::<Result<Vec<_>>>()?;
    let (stat, diag) = evaluate(input)?;
    Ok(standardizations
        .into_iter()
        .map(|s| TestReport::new(stat, s, alpha, diag.clone()))
        .collect())
}

/// Log-determinant of a sample covariance matrix, with singularity reported as
/// a rank error.
pub fn logdet_covariance(x: &Matrix) -> Result<f64> {
    let s: SymMatrix = sample_covariance(x)?;
    s.logdet().map_err(|e| {
        singular(e, || {
            format!(
                "sample covariance is singular (n = {}, p = {})",
                x.rows(),
                x.cols()
            )
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    fn groups(rng: &mut crate::rng::StreamRng, sizes: &[usize], p: usize) -> GroupedSample {
        GroupedSample::new(
            sizes
                .iter()
                .map(|&n| Matrix::standard_normal(n, p, rng))
                .collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn independence_single_block_is_zero() {
        let x = Matrix::standard_normal(20, 4, &mut stream(1, 0));
        let b = BlockPartition::new(vec![4]).unwrap();
        assert_eq!(stat_independence(&x, &b).unwrap(), 0.0);
    }

    #[test]
    fn independence_two_scalars_is_log_one_minus_r2() {
        let x = Matrix::standard_normal(30, 2, &mut stream(2, 0));
        let m = x.column_means();
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for r in x.row_iter() {
            sxy += (r[0] - m[0]) * (r[1] - m[1]);
            sxx += (r[0] - m[0]).powi(2);
            syy += (r[1] - m[1]).powi(2);
        }
        let r2 = sxy * sxy / (sxx * syy);
        let b = BlockPartition::new(vec![1, 1]).unwrap();
        assert!(close(stat_independence(&x, &b).unwrap(), (1.0 - r2).ln(), 1e-12));
    }

    #[test]
    fn independence_errors() {
        let x = Matrix::standard_normal(10, 4, &mut stream(3, 0));
        let b = BlockPartition::new(vec![2, 3]).unwrap();
        assert!(matches!(
            stat_independence(&x, &b),
            Err(Error::DimensionMismatch(_))
        ));
        let x = Matrix::standard_normal(5, 4, &mut stream(3, 0));
        let b = BlockPartition::new(vec![2, 2]).unwrap();
        assert!(matches!(stat_independence(&x, &b), Err(Error::Precondition(_))));
        // rank-deficient: one column duplicated
        let y = Matrix::standard_normal(10, 3, &mut stream(3, 1));
        let x = Matrix::from_fn(10, 4, |i, j| y.get(i, j.min(2)));
        assert!(matches!(stat_independence(&x, &b), Err(Error::Rank(_))));
    }

    #[test]
    fn independence_standardization_small_case() {
        // σ²_{4,2} = 2 log(0.75² / 0.5)
        let b = BlockPartition::new(vec![1, 1]).unwrap();
        let s = standardize_independence(4, &b, Regime::GrowingQ).unwrap();
        let want = 2.0 * (0.5625_f64 / 0.5).ln();
        assert!(close(s.scale * s.scale, want, 1e-14));
        assert!(close(want, 0.235_566_1, 1e-7));
    }

    #[test]
    fn independence_single_block_standardization_is_degenerate() {
        let b = BlockPartition::new(vec![5]).unwrap();
        for r in Regime::ALL {
            assert!(matches!(
                standardize_independence(20, &b, r),
                Err(Error::DegenerateScale(_))
            ));
        }
    }

    #[test]
    fn fixed_q_independence_is_growing_formula_at_n_minus_one() {
        let b = BlockPartition::new(vec![3, 5, 2]).unwrap();
        let fixed = standardize_independence(40, &b, Regime::FixedQ).unwrap();
        let grow = standardize_independence(40, &b, Regime::GrowingQ).unwrap();
        // s_{n,q} = Σ(n−p_i−1)log(…) − (n−p−1)log(…) − σ²_{n−1,q}/4
        let var_nm1 = fixed.scale * fixed.scale;
        let var_n = grow.scale * grow.scale;
        assert!(close(fixed.center, grow.center + var_n / 4.0 - var_nm1 / 4.0, 1e-12));
    }

    #[test]
    fn regression_standardization_unit_ratios() {
        // p = 10, q₁ = p, n − q = 2p: y₁ = 1, y₂ = 1/2
        // σ² = 2{log 2 − log(1.5 / 1)} = 2 log(4/3)
        let s = standardize_regression(23 + 20, 10, 10, 13).unwrap();
        let want = 2.0 * (2f64.ln() - 1.5f64.ln());
        assert!(close(s.scale * s.scale, want, 1e-13));
        assert_eq!(s.regime, Regime::GrowingQ);
    }

    #[test]
    fn regression_standardization_degenerate_and_violations() {
        // p ≪ q₁ and p ≪ n − q: both logs nearly cancel
        assert!(matches!(
            standardize_regression(10_000_000_000_000, 1, 5_000_000_000_000, 10),
            Err(Error::DegenerateScale(_))
        ));
        assert!(matches!(
            standardize_regression(20, 10, 5, 5),
            Err(Error::Precondition(_))
        ));
        assert!(standardize_regression(20, 3, 0, 5).is_err());
    }

    #[test]
    fn regression_scalar_response_is_log_rss_ratio() {
        let mut rng = stream(17, 0);
        let n = 25;
        let x = Matrix::standard_normal(n, 1, &mut rng);
        let z = Matrix::standard_normal(n, 3, &mut rng);
        let d = RegressionData::new(x, z, 2).unwrap();
        let (full, null) =
            regression_residual_covariances(&d, &Matrix::zeros(1, 2)).unwrap();
        let stat = stat_regression(&d, &Matrix::zeros(1, 2)).unwrap();
        assert!(close(stat, (full.get(0, 0) / null.get(0, 0)).ln(), 1e-12));
        assert!(stat <= NONPOSITIVE_SLACK);
    }

    #[test]
    fn regression_equal_determinants_give_zero() {
        // Responses that do not depend on z₁ at all, with β₀₁ equal to the
        // fitted coefficients of z₁ being exactly zero: orthogonal designs.
        let n = 8;
        let z = Matrix::from_fn(n, 2, |i, j| match j {
            0 => if i % 2 == 0 { 1.0 } else { -1.0 },
            _ => 1.0,
        });
        let x = Matrix::from_fn(n, 1, |i, _| if i < 4 { 1.0 } else { 3.0 });
        let d = RegressionData::new(x, z, 1).unwrap();
        let stat = stat_regression(&d, &Matrix::zeros(1, 1)).unwrap();
        assert!(stat.abs() < 1e-14, "{stat}");
    }

    #[test]
    fn equal_cov_single_group_and_scalar_form() {
        let mut rng = stream(5, 0);
        let s = groups(&mut rng, &[15], 3);
        assert_eq!(stat_equal_cov(&s).unwrap(), 0.0);

        // p = 1: Σ ((n_j−1)/2) log v_j − ((n−q)/2) log v_pooled with unbiased
        // variances v_j.
        let s = groups(&mut rng, &[8, 11], 1);
        let mut ss = Vec::new();
        for g in s.groups() {
            let m = g.column_means()[0];
            ss.push(g.row_iter().map(|r| (r[0] - m).powi(2)).sum::<f64>());
        }
        let want = 3.5 * (ss[0] / 7.0).ln() + 5.0 * (ss[1] / 10.0).ln()
            - 8.5 * ((ss[0] + ss[1]) / 17.0).ln();
        assert!(close(stat_equal_cov(&s).unwrap(), want, 1e-12));
    }

    #[test]
    fn equal_dist_single_group_and_identical_groups() {
        let mut rng = stream(6, 0);
        let s = groups(&mut rng, &[12], 2);
        assert!(stat_equal_dist(&s).unwrap().abs() < 1e-9);

        // identical groups: B = A, so log Λ_n = Σ (n_j/2) log|A_j/n_j| − (n/2) log|A/n|
        let g = Matrix::standard_normal(9, 2, &mut rng);
        let s = GroupedSample::new(vec![g.clone(), g.clone(), g], None).unwrap();
        let la = crate::linalg::scatter(&s.groups()[0]).0.logdet().unwrap();
        let pooled = la + 3f64.ln() * 2.0;
        let want = 3.0 * 4.5 * (la - 2.0 * 9f64.ln()) - 13.5 * (pooled - 2.0 * 27f64.ln());
        assert!(close(stat_equal_dist(&s).unwrap(), want, 1e-10));
        // A_j/n_j are all equal to A/n here, so the statistic is 0.
        assert!(stat_equal_dist(&s).unwrap().abs() < 1e-9);
    }

    #[test]
    fn q_sample_errors_name_the_group() {
        let mut rng = stream(7, 0);
        let s = groups(&mut rng, &[10, 4, 10], 3);
        match stat_equal_cov(&s) {
            Err(Error::Precondition(m)) => assert!(m.contains("group 2 has n_j = 4, p = 3"), "{m}"),
            other => panic!("{other:?}"),
        }
        match standardize_equal_dist(&[50, 50, 41], 40, Regime::GrowingQ) {
            Err(Error::Precondition(m)) => {
                assert_eq!(m, "requires n_j > p + 2; group 3 has n_j = 41, p = 40")
            }
            other => panic!("{other:?}"),
        }
        // singular group scatter: a duplicated column
        let base = Matrix::standard_normal(10, 2, &mut rng);
        let dup = Matrix::from_fn(10, 3, |i, j| base.get(i, j.min(1)));
        let ok = Matrix::standard_normal(10, 3, &mut rng);
        let s = GroupedSample::new(vec![ok, dup], None).unwrap();
        match stat_equal_cov(&s) {
            Err(Error::Rank(m)) => assert!(m.contains("group 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn balanced_equal_cov_variance_collapses() {
        // n_j = m + 1: σ_n² = m² q / (2 p (n − q)) log(m/(m − p)) − 1/2
        let (m, q, p) = (30usize, 6usize, 10usize);
        let sizes = vec![m + 1; q];
        let s = standardize_equal_cov(&sizes, p, Regime::GrowingQ).unwrap();
        let n = (q * (m + 1)) as f64;
        let (mf, qf, pf) = (m as f64, q as f64, p as f64);
        let var = mf * mf * qf / (2.0 * pf * (n - qf)) * (mf / (mf - pf)).ln() - 0.5;
        assert!(close(s.scale, (pf * (n - qf)).sqrt() * var.sqrt(), 1e-13));
    }

    #[test]
    fn balanced_equal_dist_center_is_q_copies_of_one_group_bracket() {
        let (m, q, p) = (40usize, 7usize, 12usize);
        let s = standardize_equal_dist(&vec![m; q], p, Regime::GrowingQ).unwrap();
        let (mf, qf, pf) = (m as f64, q as f64, p as f64);
        let n = mf * qf;
        let h = n / 2.0;
        let hq = h + qf / 2.0 - 1.5;
        let group = mf / 2.0
            * ((mf - pf - 1.5) * ((mf - 2.0) / (mf - pf - 2.0)).ln()
                + pf * ((mf - 2.0) / (n - qf)).ln()
                - pf * mf.ln());
        let common = h
            * (pf * ((h - 1.0) / hq).ln()
                + (n - qf - pf) * ((n - qf - pf) / (n - qf)).ln()
                + pf * n.ln()
                + (h - pf - 1.0) * ((h - 1.0) / (h - pf - 1.0)).ln()
                + (hq - pf) * ((hq - pf) / hq).ln());
        assert!(close(s.center, qf * group + common, 1e-12));
    }

    #[test]
    fn remark_variance_reconciliation_at_figure3_config() {
        // σ² − (n−q)/p (σ⁽¹⁾)² = −1/2 − (n−q)/(2p) log(1 − p/(n−q))
        let (nj, q, p) = (200usize, 50usize, 100usize);
        let sizes = vec![nj; q];
        let g = standardize_equal_cov(&sizes, p, Regime::GrowingQ).unwrap();
        let f = standardize_equal_cov(&sizes, p, Regime::FixedQ).unwrap();
        let dof = (nj * q - q) as f64;
        let pf = p as f64;
        let sigma2 = g.scale * g.scale / (pf * dof);
        let sigma1_2 = (f.scale / dof).powi(2);
        let gap = sigma2 - dof / pf * sigma1_2;
        let want = -0.5 - dof / (2.0 * pf) * (1.0 - pf / dof).ln();
        assert!((gap - want).abs() < 1e-10, "{gap} vs {want}");
        assert!(gap.abs() < 0.01);
    }

    #[test]
    fn zero_z_gives_half() {
        let s = Standardization::new(TestKind::EqualCov, Regime::GrowingQ, -3.0, 2.0).unwrap();
        let r = TestReport::new(-3.0, s, 0.05, BTreeMap::new());
        assert_eq!(r.z, 0.0);
        assert_eq!(r.p_value, 0.5);
        assert!(!r.reject);
    }

    #[test]
    fn degenerate_scale_rejected() {
        assert!(matches!(
            Standardization::new(TestKind::Independence, Regime::GrowingQ, 0.0, 1e-13),
            Err(Error::DegenerateScale(_))
        ));
        assert!(Standardization::new(TestKind::Independence, Regime::GrowingQ, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn regression_has_no_fixed_q_regime() {
        let mut rng = stream(1, 1);
        let d = RegressionData::new(
            Matrix::standard_normal(30, 2, &mut rng),
            Matrix::standard_normal(30, 4, &mut rng),
            2,
        )
        .unwrap();
        let input = TestInput::Regression {
            data: d,
            beta01: Matrix::zeros(2, 2),
        };
        assert!(matches!(
            run_test(&input, Regime::FixedQ, 0.05),
            Err(Error::Config(_))
        ));
        let r = run_test(&input, Regime::GrowingQ, 0.05).unwrap();
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn run_test_report_invariants() {
        let mut rng = stream(12, 0);
        let s = groups(&mut rng, &[20, 25, 30], 4);
        let reports = run_test_regimes(&TestInput::EqualCov(s), &Regime::ALL, 0.05).unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            let st = r.standardization;
            assert!(close(r.z, (r.statistic - st.center) / st.scale, 1e-15));
            assert_eq!(r.p_value, std_normal_cdf(r.z));
            assert_eq!(r.reject, r.p_value < r.alpha);
            assert!(r.diagnostics.contains_key("bartlett_gap"));
            assert!(r.diagnostics.contains_key("bartlett_gap_closed_form"));
        }
        assert_eq!(reports[0].statistic, reports[1].statistic);
        assert!(matches!(
            run_test_regimes(&TestInput::EqualDist(groups(&mut rng, &[20, 20], 3)), &Regime::ALL, 1.5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn bartlett_gap_equals_closed_form_plus_data_term() {
        let mut rng = stream(33, 0);
        for sizes in [vec![12, 15, 20], vec![9, 9], vec![30, 11, 14, 22]] {
            let s = groups(&mut rng, &sizes, 4);
            let gap = bartlett_gap(&s).unwrap();
            let want = bartlett_gap_closed_form(&sizes, 4) + bartlett_gap_data_term(&s).unwrap();
            assert!((gap - want).abs() < 1e-8, "{gap} vs {want}");
        }
    }

    #[test]
    fn strong_dependence_is_rejected() {
        let p = 20;
        let cov = SymMatrix::from_lower_fn(p, |i, j| if i == j { 1.0 } else { 0.9 });
        let blocks = BlockPartition::equal(4, 5).unwrap();
        let x = crate::linalg::sample_mvn(&vec![0.0; p], &cov, 200, &mut stream(40, 0)).unwrap();
        let input = TestInput::Independence {
            observations: x,
            blocks,
        };
        for r in run_test_regimes(&input, &Regime::ALL, 0.05).unwrap() {
            assert!(r.p_value < 1e-6);
            assert!(r.reject);
        }
    }
}
