//! Dense matrices, Cholesky log-determinants, covariance and scatter matrices,
//! and Gaussian sampling.
//!
//! Determinants are only ever formed in the log domain: |Σ̂| for p in the
//! hundreds underflows double precision.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

/// Row-major `rows × cols` real matrix. Observation matrices hold one
/// observation per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}×{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has {} columns, expected {cols}",
                    i + 1,
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Matrix of independent standard normal entries.
    pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Adds `shift` to every row.
    pub fn shifted(&self, shift: &[f64]) -> Matrix {
        assert_eq!(shift.len(), self.cols);
        let mut out = self.clone();
        for i in 0..out.rows {
            for (v, s) in out.row_mut(i).iter_mut().zip(shift) {
                *v += s;
            }
        }
        out
    }

    /// Maps every row x to `m · x`, i.e. returns `X Mᵀ`.
    pub fn transform_rows(&self, m: &Matrix) -> Result<Matrix> {
        if m.cols != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot apply a {}×{} map to {}-dimensional rows",
                m.rows, m.cols, self.cols
            )));
        }
        Ok(Matrix::from_fn(self.rows, m.rows, |i, k| dot(self.row(i), m.row(k))))
    }

    /// Copies columns `start..start + len`.
    pub fn column_block(&self, start: usize, len: usize) -> Matrix {
        assert!(start + len <= self.cols);
        Matrix::from_fn(self.rows, len, |i, j| self.get(i, start + j))
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn vstack(parts: &[Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::DimensionMismatch(format!(
                    "cannot stack {}-column and {cols}-column blocks",
                    m.cols
                )));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense symmetric matrix stored in full row-major form.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from full row-major entries. Entries must be
    /// symmetric to 1e-10 relative to the largest magnitude; the result is
    /// symmetrized as (m + mᵀ)/2.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix of dimension {dim} needs {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        let scale = data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in 0..i {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let mut m = SymMatrix { dim, data };
        m.symmetrize();
        Ok(m)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, d) in diag.iter().enumerate() {
            m.data[i * dim + i] = *d;
        }
        m
    }

    /// Builds from a function evaluated on the lower triangle (i ≥ j).
    pub fn from_lower_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    fn symmetrize(&mut self) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..i {
                let v = 0.5 * (self.data[i * d + j] + self.data[j * d + i]);
                self.data[i * d + j] = v;
                self.data[j * d + i] = v;
            }
        }
    }

    /// Diagonal block on indices `offset..offset + len`.
    pub fn block(&self, offset: usize, len: usize) -> SymMatrix {
        assert!(offset + len <= self.dim);
        SymMatrix::from_lower_fn(len, |i, j| self.get(offset + i, offset + j))
    }

    pub fn scaled(&self, c: f64) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, other.dim);
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &SymMatrix) -> SymMatrix {
        self.add(&other.scaled(-1.0))
    }

    pub fn add_diag(&self, eps: f64) -> SymMatrix {
        let mut m = self.clone();
        for i in 0..self.dim {
            m.data[i * self.dim + i] += eps;
        }
        m
    }

    /// self += w · v vᵀ
    pub fn add_outer(&mut self, w: f64, v: &[f64]) {
        assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            let wi = w * v[i];
            for (a, vj) in self.data[i * self.dim..(i + 1) * self.dim].iter_mut().zip(v) {
                *a += wi * vj;
            }
        }
    }

    /// Lower Cholesky factor. Fails with the index of the first pivot that is
    /// not positive beyond rounding level.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.dim;
        let max_diag = (0..n).fold(0.0_f64, |m, i| m.max(self.get(i, i).abs()));
        let tol = max_diag * n as f64 * f64::EPSILON;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = self.data[i * n + j] - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if s.is_nan() || s <= tol || s.is_infinite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { dim: n, lower: l })
    }

    pub fn logdet(&self) -> Result<f64> {
        Ok(self.cholesky()?.logdet())
    }
}

/// Lower-triangular factor L with m = L Lᵀ.
#[derive(Clone, Debug)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// log|m| = 2 Σ log L_ii
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| self.get(i, i).ln()).sum::<f64>()
    }

    /// L · v
    pub fn lower_mul(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| dot(&self.lower[i * n..i * n + i + 1], &v[..=i]))
            .collect()
    }

    /// Solves m x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = (b[i] - dot(&self.lower[i * n..i * n + i], &y[..i])) / self.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.get(k, i) * x[k]).sum();
            x[i] = (y[i] - s) / self.get(i, i);
        }
        x
    }
}

pub fn cholesky_logdet(m: &SymMatrix) -> Result<f64> {
    m.logdet()
}

/// Σ_k (x_k − c)(x_k − c)ᵀ over the rows of `x`; `center = None` gives the raw
/// cross-product XᵀX.
fn cross_product(x: &Matrix, center: Option<&[f64]>) -> SymMatrix {
    let p = x.cols;
    let mut acc = vec![0.0; p * p];
    let mut row = vec![0.0; p];
    for r in x.row_iter() {
        match center {
            Some(c) => row.iter_mut().zip(r.iter().zip(c)).for_each(|(d, (v, m))| *d = v - m),
            None => row.copy_from_slice(r),
        }
        // lower triangle only; mirrored below
        for i in 0..p {
            let ri = row[i];
            for (a, v) in acc[i * p..i * p + i + 1].iter_mut().zip(&row[..=i]) {
                *a += ri * v;
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            acc[j * p + i] = acc[i * p + j];
        }
    }
    SymMatrix { dim: p, data: acc }
}

/// Un-normalized mean-centered scatter Σ (x_k − x̄)(x_k − x̄)ᵀ and the mean x̄.
pub fn scatter(x: &Matrix) -> (SymMatrix, Vec<f64>) {
    let mean = x.column_means();
    (cross_product(x, Some(&mean)), mean)
}

/// Divisor-n sample covariance (1/n) Σ (x_k − x̄)(x_k − x̄)ᵀ.
pub fn sample_covariance(x: &Matrix) -> Result<SymMatrix> {
    if x.rows < 2 {
        return Err(Error::InsufficientData(format!(
            "sample covariance needs at least 2 observations, got {}",
            x.rows
        )));
    }
    if x.cols == 0 {
        return Err(Error::DimensionMismatch("observations have no columns".into()));
    }
    Ok(scatter(x).0.scaled(1.0 / x.rows as f64))
}

/// q groups of p-dimensional observations; group j is an n_j × p matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedSample {
    groups: Vec<Matrix>,
    labels: Option<Vec<String>>,
}

impl GroupedSample {
    pub fn new(groups: Vec<Matrix>, labels: Option<Vec<String>>) -> Result<Self> {
        let Some(first) = groups.first() else {
            return Err(Error::InsufficientData("no groups".into()));
        };
        let p = first.cols;
        if p == 0 {
            return Err(Error::DimensionMismatch("observations have no columns".into()));
        }
        for (j, g) in groups.iter().enumerate() {
            if g.cols != p {
                return Err(Error::DimensionMismatch(format!(
                    "group {} has dimension {}, expected {p}",
                    j + 1,
                    g.cols
                )));
            }
            if g.rows < 2 {
                return Err(Error::InsufficientData(format!(
                    "group {} has n_j = {}; every group needs n_j ≥ 2",
                    j + 1,
                    g.rows
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != groups.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} groups",
                    l.len(),
                    groups.len()
                )));
            }
        }
        Ok(GroupedSample { groups, labels })
    }

    pub fn groups(&self) -> &[Matrix] {
        &self.groups
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.groups[0].cols
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Matrix::rows).collect()
    }

    pub fn total_size(&self) -> usize {
        self.groups.iter().map(Matrix::rows).sum()
    }
}

/// Within-group scatters A_j, pooled A = Σ A_j, and total B.
#[derive(Clone, Debug)]
pub struct Scatter {
    pub within: Vec<SymMatrix>,
    pub pooled: SymMatrix,
    pub total: SymMatrix,
}

pub fn scatter_matrices(s: &GroupedSample) -> Result<Scatter> {
    let p = s.dim();
    let n = s.total_size() as f64;
    let mut within = Vec::with_capacity(s.num_groups());
    let mut means = Vec::with_capacity(s.num_groups());
    for (j, g) in s.groups.iter().enumerate() {
        if g.rows < 2 {
            return Err(Error::InsufficientData(format!(
                "group {} has n_j = {}; every group needs n_j ≥ 2",
                j + 1,
                g.rows
            )));
        }
        let (a, m) = scatter(g);
        within.push(a);
        means.push(m);
    }
    let mut pooled = SymMatrix::zeros(p);
    for a in &within {
        pooled = pooled.add(a);
    }
    let mut grand = vec![0.0; p];
    for (g, m) in s.groups.iter().zip(&means) {
        let w = g.rows as f64 / n;
        grand.iter_mut().zip(m).for_each(|(a, b)| *a += w * b);
    }
    let mut total = pooled.clone();
    for (g, m) in s.groups.iter().zip(&means) {
        let d: Vec<f64> = m.iter().zip(&grand).map(|(a, b)| a - b).collect();
        total.add_outer(g.rows as f64, &d);
    }
    Ok(Scatter {
        within,
        pooled,
        total,
    })
}

/// Responses X (n × p), designs Z (n × q) and the split q = q₁ + q₂ with the
/// first q₁ design columns forming the tested block.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionData {
    responses: Matrix,
    designs: Matrix,
    q1: usize,
}

impl RegressionData {
    pub fn new(responses: Matrix, designs: Matrix, q1: usize) -> Result<Self> {
        let (n, q) = (designs.rows, designs.cols);
        if responses.rows != n {
            return Err(Error::DimensionMismatch(format!(
                "{} response rows but {n} design rows",
                responses.rows
            )));
        }
        if responses.cols == 0 {
            return Err(Error::DimensionMismatch("responses have no columns".into()));
        }
        if q1 == 0 || q1 >= q {
            return Err(Error::Precondition(format!(
                "requires 1 ≤ q1 < q so that both design blocks are nonempty; got q1 = {q1}, q = {q}"
            )));
        }
        if n <= q {
            return Err(Error::Precondition(format!(
                "requires n > q; got n = {n}, q = {q}"
            )));
        }
        Ok(RegressionData {
            responses,
            designs,
            q1,
        })
    }

    pub fn responses(&self) -> &Matrix {
        &self.responses
    }

    pub fn designs(&self) -> &Matrix {
        &self.designs
    }

    pub fn n(&self) -> usize {
        self.responses.rows
    }

    pub fn p(&self) -> usize {
        self.responses.cols
    }

    pub fn q(&self) -> usize {
        self.designs.cols
    }

    pub fn q1(&self) -> usize {
        self.q1
    }

    pub fn q2(&self) -> usize {
        self.designs.cols - self.q1
    }
}

/// Residuals of the least-squares fit of each response column on `z`.
fn least_squares_residuals(y: &Matrix, z: &Matrix, what: &str) -> Result<Matrix> {
    let gram = cross_product(z, None);
    let chol = gram.cholesky().map_err(|_| {
        Error::SingularDesign(format!(
            "{what} design block ({} columns) does not have full column rank",
            z.cols
        ))
    })?;
    // coefficients: column k of y regressed on z
    let zt = z.transpose();
    let yt = y.transpose();
    let coef: Vec<Vec<f64>> = (0..y.cols)
        .map(|k| {
            let rhs: Vec<f64> = (0..z.cols).map(|l| dot(zt.row(l), yt.row(k))).collect();
            chol.solve(&rhs)
        })
        .collect();
    Ok(Matrix::from_fn(y.rows, y.cols, |i, k| {
        y.get(i, k) - dot(z.row(i), &coef[k])
    }))
}

/// Full-model Σ̂ and null-model Σ̂₀ (both divisor n) for the hypothesis
/// β₁ = β₀₁, with `beta01` a p × q₁ matrix.
pub fn regression_residual_covariances(
    d: &RegressionData,
    beta01: &Matrix,
) -> Result<(SymMatrix, SymMatrix)> {
    let (n, p, q1) = (d.n(), d.p(), d.q1);
    if beta01.rows != p || beta01.cols != q1 {
        return Err(Error::DimensionMismatch(format!(
            "beta01 must be {p}×{q1}, got {}×{}",
            beta01.rows, beta01.cols
        )));
    }
    let full = least_squares_residuals(&d.responses, &d.designs, "full")?;
    let z1 = d.designs.column_block(0, q1);
    let z2 = d.designs.column_block(q1, d.q2());
    let offset = z1.transform_rows(beta01)?;
    let corrected = Matrix::from_fn(n, p, |i, k| d.responses.get(i, k) - offset.get(i, k));
    let null = least_squares_residuals(&corrected, &z2, "nuisance")?;
    let inv_n = 1.0 / n as f64;
    Ok((
        cross_product(&full, None).scaled(inv_n),
        cross_product(&null, None).scaled(inv_n),
    ))
}

/// n independent draws mean + L η with L the Cholesky factor of `cov`.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &[f64],
    cov: &SymMatrix,
    n: usize,
    rng: &mut R,
) -> Result<Matrix> {
    if mean.len() != cov.dim {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, covariance has dimension {}",
            mean.len(),
            cov.dim
        )));
    }
    let chol = cov.cholesky()?;
    let p = cov.dim;
    let mut out = Matrix::zeros(n, p);
    let mut eta = vec![0.0; p];
    for i in 0..n {
        eta.iter_mut()
            .for_each(|e| *e = rng.sample::<f64, _>(StandardNormal));
        let x = chol.lower_mul(&eta);
        for (o, (m, v)) in out.row_mut(i).iter_mut().zip(mean.iter().zip(&x)) {
            *o = m + v;
        }
    }
    Ok(out)
}
