//! Exact null distributions of the independence and regression statistics as
//! sums of independent log-Beta variables.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lrt::BlockPartition;
use crate::specfun::{digamma_positive, trigamma_positive};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFactor {
    pub a: f64,
    pub b: f64,
}

/// A product Π B_k of independent B_k ~ Beta(a_k, b_k).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BetaProductSpec {
    factors: Vec<BetaFactor>,
}

impl BetaProductSpec {
    pub fn new(factors: Vec<BetaFactor>) -> Result<Self> {
        for (k, f) in factors.iter().enumerate() {
            if !(f.a > 0.0 && f.b > 0.0 && f.a.is_finite() && f.b.is_finite()) {
                return Err(Error::RegimeViolation(format!(
                    "Beta factor {k} has parameters ({}, {}); both must be positive",
                    f.a, f.b
                )));
            }
        }
        Ok(BetaProductSpec { factors })
    }

    pub fn factors(&self) -> &[BetaFactor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// The product of this spec's factors and `other`'s.
    pub fn concat(&self, other: &BetaProductSpec) -> BetaProductSpec {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        BetaProductSpec { factors }
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.factors.is_empty() {
            Err(Error::Config("Beta product has no factors".into()))
        } else {
            Ok(())
        }
    }
}

/// Factors Beta((n − p_i* − j)/2, p_i*/2) for blocks i = 2..q, j = 1..p_i,
/// where p_i* is the total size of the preceding blocks.
pub fn spec_independence(n: usize, blocks: &BlockPartition) -> Result<BetaProductSpec> {
    let p = blocks.total();
    if n <= p + 1 {
        return Err(Error::Precondition(format!(
            "requires n > p + 1; got n = {n}, p = {p}"
        )));
    }
    let mut factors = Vec::with_capacity(p - blocks.sizes()[0]);
    for (&offset, &size) in blocks.offsets().iter().zip(blocks.sizes()).skip(1) {
        for j in 1..=size {
            factors.push(BetaFactor {
                a: (n as f64 - offset as f64 - j as f64) / 2.0,
                b: offset as f64 / 2.0,
            });
        }
    }
    BetaProductSpec::new(factors)
}

/// Factors Beta((n − q + 1 − i)/2, q₁/2) for i = 1..p.
pub fn spec_regression(n: usize, p: usize, q: usize, q1: usize) -> Result<BetaProductSpec> {
    if q1 == 0 || q1 >= q {
        return Err(Error::Config(format!("requires 1 ≤ q1 < q; got q1 = {q1}, q = {q}")));
    }
    if n < q + p {
        return Err(Error::Precondition(format!(
            "requires n − q + 1 − p > 0; got n = {n}, q = {q}, p = {p}"
        )));
    }
    let factors = (1..=p)
        .map(|i| BetaFactor {
            a: (n + 1 - q - i) as f64 / 2.0,
            b: q1 as f64 / 2.0,
        })
        .collect();
    BetaProductSpec::new(factors)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean Σ(ψ₀(a) − ψ₀(a+b)) and variance Σ(ψ₁(a) − ψ₁(a+b)) of Σ log B_k.
pub fn exact_log_moments(spec: &BetaProductSpec) -> Result<LogMoments> {
    spec.require_nonempty()?;
    let (mut mean, mut variance) = (0.0, 0.0);
    for f in &spec.factors {
        mean += digamma_positive(f.a) - digamma_positive(f.a + f.b);
        variance += trigamma_positive(f.a) - trigamma_positive(f.a + f.b);
    }
    Ok(LogMoments { mean, variance })
}

/// log B for B ~ Beta(a, b), as log G_a − log(G_a + G_b).
fn sample_log_beta<R: Rng + ?Sized>(f: &BetaFactor, rng: &mut R) -> f64 {
    // Parameters are validated positive on construction.
    let ga = Gamma::new(f.a, 1.0).expect("positive shape").sample(rng);
    let gb = Gamma::new(f.b, 1.0).expect("positive shape").sample(rng);
    if ga > 0.0 {
        ga.ln() - (ga + gb).ln()
    } else {
        // Shapes far below 1 can underflow; fall back to log-space via
        // G_a = G_{a+1} U^{1/a}.
        let g1 = Gamma::new(f.a + 1.0, 1.0).expect("positive shape").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let log_ga = g1.ln() + u.ln() / f.a;
        log_ga - (log_ga.exp() + gb).ln()
    }
}

/// One draw of Σ log B_k.
pub fn sample_log_product<R: Rng + ?Sized>(spec: &BetaProductSpec, rng: &mut R) -> Result<f64> {
    spec.require_nonempty()?;
    Ok(spec.factors.iter().map(|f| sample_log_beta(f, rng)).sum())
}

/// Third derivative of the digamma function, ψ₃(x) for x > 0.
fn pentagamma(x: f64) -> f64 {
    let mut z = x;
    let mut shift = 0.0;
    while z < 10.0 {
        shift += 6.0 / z.powi(4);
        z += 1.0;
    }
    let r = 1.0 / z;
    let r2 = r * r;
    // 2/z³ + 3/z⁴ + 2/z⁵ − 1/z⁷ + 4/(3z⁹) − 3/z¹¹ + 10/z¹³
    let series = r2 * r * (2.0 + 3.0 * r + r2 * (2.0 - r2 * (1.0 - r2 * (4.0 / 3.0 - r2 * (3.0 - 10.0 * r2)))));
    shift + series
}

/// Moment diagnostics for the array X_k = g·(log B_k − E log B_k) with a
/// common weight g.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltDiagnostics {
    /// sup_k g² Var(log B_k)
    pub sup_term: f64,
    /// Σ_k g² Var(log B_k)
    pub variance_sum: f64,
    /// max_k E X_k⁴ / (E X_k²)², which is 3 for a Gaussian term.
    pub max_kurtosis_ratio: f64,
}

pub fn verify_clt_conditions(spec: &BetaProductSpec, normalization: f64) -> Result<CltDiagnostics> {
    spec.require_nonempty()?;
    let g2 = normalization * normalization;
    let mut out = CltDiagnostics {
        sup_term: 0.0,
        variance_sum: 0.0,
        max_kurtosis_ratio: 0.0,
    };
    for f in &spec.factors {
        let var = trigamma_positive(f.a) - trigamma_positive(f.a + f.b);
        let k4 = pentagamma(f.a) - pentagamma(f.a + f.b);
        out.sup_term = out.sup_term.max(g2 * var);
        out.variance_sum += g2 * var;
        out.max_kurtosis_ratio = out.max_kurtosis_ratio.max(3.0 + k4 / (var * var));
    }
    Ok(out)
}
