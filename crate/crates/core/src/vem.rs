//! Variational EM for the heterogeneous block covariance model.
//!
//! The posterior over labels and latent community signals is approximated
//! by `q1(c) q2(α)`, where `q1` is a product of per-feature categorical
//! distributions (a row-stochastic P×K matrix) and `q2` is a product of
//! per-sample Gaussians `N(μ_i, V)` sharing one K×K covariance. Each
//! iteration updates `q2`, then `q1`, then the parameters
//! `Φ = {π, Ω, λ, σ²}`, all in closed form, so the objective `J` never
//! decreases.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelAssignment;
use crate::linalg::{self, compensated_sum};
use crate::model::{matrix_to_rows, rows_to_matrix};
use crate::simulate::{rng_from_seed, DataMatrix};
use crate::spectral::{self, SpectralOptions};

/// How much initial membership mass the initial label receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitMass {
    /// `u ~ Uniform(0.5, 1)`: the initial label keeps the majority.
    #[default]
    Majority,
    /// `u ~ Uniform(0, 0.5)` on the initial label.
    PaperLiteral,
}

impl InitMass {
    fn range(self) -> (f64, f64) {
        match self {
            InitMass::Majority => (0.5, 1.0),
            InitMass::PaperLiteral => (0.0, 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iters: usize,
    pub elbo_rel_tol: f64,
    /// Communities whose `q1` column sum falls below `min_pi · P` are
    /// re-seeded.
    pub min_pi: f64,
    pub sigma2_floor: f64,
    pub init_mass: InitMass,
    /// Iterations of the one-community fit that initializes `λ` and `σ²`.
    pub init_inner_iters: usize,
    pub spectral: SpectralOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            elbo_rel_tol: 1e-6,
            min_pi: 1e-6,
            sigma2_floor: 1e-8,
            init_mass: InitMass::Majority,
            init_inner_iters: 5,
            spectral: SpectralOptions::default(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        if !(self.elbo_rel_tol >= 0.0) || !positive(self.min_pi) || !positive(self.sigma2_floor) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Model parameters `Φ = {π, Ω, λ, σ²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub pi: Vec<f64>,
    pub omega: DMatrix<f64>,
    pub lambda: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl Params {
    pub fn k(&self) -> usize {
        self.pi.len()
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        let k = self.k();
        if self.omega.shape() != (k, k) {
            return Err(Error::DimensionMismatch {
                what: "omega size",
                expected: k,
                found: self.omega.nrows(),
            });
        }
        for (what, len) in [("lambda length", self.lambda.len()), ("sigma2 length", self.sigma2.len())] {
            if len != x.ncols() {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: x.ncols(),
                    found: len,
                });
            }
        }
        Ok(())
    }
}

/// Moments of `q2`: row `i` of `mu` is the mean of `α_i`, `v` the shared
/// covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Q2 {
    pub mu: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub q1: DMatrix<f64>,
    pub q2: Q2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub params: Params,
    /// Features whose `λ` denominator vanished; their previous `λ` was kept.
    pub degenerate_lambda: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub labels: LabelAssignment,
    pub params: Params,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Labels the fit started from.
    pub init_labels: LabelAssignment,
    pub state: VariationalState,
    /// Number of times an emptied community was re-seeded.
    pub reseeds: usize,
}

#[derive(Serialize, Deserialize)]
struct FitDoc {
    labels: Vec<usize>,
    pi: Vec<f64>,
    omega: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    sigma2: Vec<f64>,
    elbo_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// The serialized part of a fit: labels, parameters and convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub labels: LabelAssignment,
    pub params: Params,
    pub elbo_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            labels: self.labels.clone(),
            params: self.params.clone(),
            elbo_trace: self.elbo_trace.clone(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    pub fn to_json(&self) -> String {
        self.summary().to_json()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

impl FitSummary {
    pub fn to_json(&self) -> String {
        let doc = FitDoc {
            labels: self.labels.as_slice().iter().map(|l| l + 1).collect(),
            pi: self.params.pi.clone(),
            omega: matrix_to_rows(&self.params.omega),
            lambda: self.params.lambda.clone(),
            sigma2: self.params.sigma2.clone(),
            elbo_trace: self.elbo_trace.clone(),
            iterations: self.iterations,
            converged: self.converged,
        };
        serde_json::to_string(&doc).expect("fit serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: FitDoc = serde_json::from_str(s)?;
        if doc.labels.contains(&0) {
            return Err(Error::Parse("labels are 1-based; found 0".into()));
        }
        let k = doc.pi.len();
        Ok(Self {
            labels: LabelAssignment::new(doc.labels.iter().map(|l| l - 1).collect(), k)?,
            params: Params {
                pi: doc.pi,
                omega: rows_to_matrix(&doc.omega)?,
                lambda: doc.lambda,
                sigma2: doc.sigma2,
            },
            elbo_trace: doc.elbo_trace,
            iterations: doc.iterations,
            converged: doc.converged,
        })
    }
}

fn column_sq_sums(x: &DMatrix<f64>) -> Vec<f64> {
    x.column_iter().map(|c| c.norm_squared()).collect()
}

fn check_q1(x: &DMatrix<f64>, q1: &DMatrix<f64>, k: usize) -> Result<()> {
    if q1.shape() != (x.ncols(), k) {
        return Err(Error::DimensionMismatch {
            what: "q1 rows",
            expected: x.ncols(),
            found: q1.nrows(),
        });
    }
    Ok(())
}

/// Gaussian update of `q2` given `q1` and `Φ`:
/// `A = Ω⁻¹ + Σ_j D_j`, `V = A⁻¹`, `μ_i = A⁻¹ B_i` with
/// `B_ik = Σ_j q1_jk λ_j X_ij / σ²_j`.
pub fn e_step_q2(x: &DMatrix<f64>, q1: &DMatrix<f64>, params: &Params) -> Result<Q2> {
    params.check(x)?;
    let k = params.k();
    check_q1(x, q1, k)?;
    let p = x.ncols();

    let (omega_inv, _) = linalg::spd_inverse_logdet(&params.omega, "omega")?;
    let mut precision = omega_inv;
    let mut weights = DMatrix::zeros(p, k);
    for j in 0..p {
        let l = params.lambda[j];
        let s2 = params.sigma2[j];
        for c in 0..k {
            let q = q1[(j, c)];
            precision[(c, c)] += q * l * l / s2;
            weights[(j, c)] = q * l / s2;
        }
    }
    let chol = precision
        .clone()
        .cholesky()
        .ok_or(Error::NotPd { what: "q2 precision" })?;
    let b = x * weights;
    let mu = chol.solve(&b.transpose()).transpose();
    let mut v = chol.inverse();
    linalg::symmetrize(&mut v);
    Ok(Q2 { mu, v })
}

/// Unnormalized log membership weights `log f_j(k)`.
pub fn log_membership(x: &DMatrix<f64>, q2: &Q2, params: &Params) -> Result<DMatrix<f64>> {
    params.check(x)?;
    let (n, p) = x.shape();
    let k = params.k();
    let sxx = column_sq_sums(x);
    let cross = x.transpose() * &q2.mu;
    let second: Vec<f64> = (0..k)
        .map(|c| q2.mu.column(c).norm_squared() + n as f64 * q2.v[(c, c)])
        .collect();
    let log_pi: Vec<f64> = params.pi.iter().map(|p| p.ln()).collect();
    let mut out = DMatrix::zeros(p, k);
    for j in 0..p {
        let l = params.lambda[j];
        let s2 = params.sigma2[j];
        let base = -0.5 * n as f64 * s2.ln();
        for c in 0..k {
            let quad = sxx[j] - 2.0 * l * cross[(j, c)] + l * l * second[c];
            out[(j, c)] = log_pi[c] + base - quad / (2.0 * s2);
        }
    }
    Ok(out)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = logits.clone();
    for mut row in q.row_iter_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            let k = row.len() as f64;
            row.fill(1.0 / k);
            continue;
        }
        row.apply(|v| *v = (*v - m).exp());
        let s: f64 = row.sum();
        row.unscale_mut(s);
    }
    q
}

/// Categorical update of `q1` given `q2` and `Φ`.
pub fn e_step_q1(x: &DMatrix<f64>, q2: &Q2, params: &Params) -> Result<DMatrix<f64>> {
    Ok(softmax_rows(&log_membership(x, q2, params)?))
}

/// Closed-form maximization of `J` over `Φ` given `q1` and `q2`.
pub fn m_step(
    x: &DMatrix<f64>,
    q1: &DMatrix<f64>,
    q2: &Q2,
    prev: &Params,
    sigma2_floor: f64,
) -> Result<MStep> {
    let (n, p) = x.shape();
    let k = q1.ncols();
    check_q1(x, q1, k)?;
    let nf = n as f64;

    let mut omega = (q2.mu.transpose() * &q2.mu + &q2.v * nf) / nf;
    linalg::symmetrize(&mut omega);

    let pi: Vec<f64> = (0..k)
        .map(|c| compensated_sum(q1.column(c).iter().copied()) / p as f64)
        .collect();

    let sxx = column_sq_sums(x);
    let cross = x.transpose() * &q2.mu;
    let second: Vec<f64> = (0..k)
        .map(|c| q2.mu.column(c).norm_squared() + nf * q2.v[(c, c)])
        .collect();
    let mut lambda = Vec::with_capacity(p);
    let mut sigma2 = Vec::with_capacity(p);
    let mut degenerate = Vec::new();
    for j in 0..p {
        let num: f64 = (0..k).map(|c| q1[(j, c)] * cross[(j, c)]).sum();
        let den: f64 = (0..k).map(|c| q1[(j, c)] * second[c]).sum();
        let l = if den > f64::MIN_POSITIVE && (num / den).is_finite() {
            num / den
        } else {
            degenerate.push(j);
            prev.lambda[j]
        };
        let s2 = (sxx[j] - 2.0 * l * num + l * l * den) / nf;
        lambda.push(l);
        sigma2.push(if s2 > sigma2_floor { s2 } else { sigma2_floor });
    }
    Ok(MStep {
        params: Params {
            pi,
            omega,
            lambda,
            sigma2,
        },
        degenerate_lambda: degenerate,
    })
}

fn xlogx(v: f64) -> f64 {
    if v > 0.0 {
        v * v.ln()
    } else {
        0.0
    }
}

/// The variational objective
///
/// ```text
/// J = Σ_jk q1_jk log π_k − (N/2) log|Ω| − ½ Σ_i tr((μ_i μ_iᵀ + V) Ω⁻¹)
///   + Σ_ijk q1_jk (−½ log σ²_j − E(X_ij − λ_j α_ik)² / (2σ²_j))
///   − Σ_jk q1_jk log q1_jk + (N/2) log|V| + NK(1 + log 2π)/2
/// ```
pub fn elbo(x: &DMatrix<f64>, q1: &DMatrix<f64>, q2: &Q2, params: &Params) -> Result<f64> {
    params.check(x)?;
    let (n, p) = x.shape();
    let k = params.k();
    check_q1(x, q1, k)?;
    let nf = n as f64;

    let (omega_inv, logdet_omega) = linalg::spd_inverse_logdet(&params.omega, "omega")?;
    let logdet_v = linalg::spd_logdet(&q2.v, "q2 covariance")?;
    let second_moment = q2.mu.transpose() * &q2.mu + &q2.v * nf;
    let trace_term = second_moment.component_mul(&omega_inv).sum();

    let sxx = column_sq_sums(x);
    let cross = x.transpose() * &q2.mu;
    let second: Vec<f64> = (0..k)
        .map(|c| q2.mu.column(c).norm_squared() + nf * q2.v[(c, c)])
        .collect();

    let mut terms = Vec::with_capacity(p * (k + 1) + 4);
    for j in 0..p {
        let l = params.lambda[j];
        let s2 = params.sigma2[j];
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..k {
            let q = q1[(j, c)];
            num += q * cross[(j, c)];
            den += q * second[c];
            if q > 0.0 {
                terms.push(q * params.pi[c].ln());
            }
            terms.push(-xlogx(q));
        }
        let mass: f64 = q1.row(j).sum();
        terms.push(-0.5 * nf * mass * s2.ln());
        terms.push(-(mass * sxx[j] - 2.0 * l * num + l * l * den) / (2.0 * s2));
    }
    terms.push(-0.5 * nf * logdet_omega);
    terms.push(-0.5 * trace_term);
    terms.push(0.5 * nf * logdet_v);
    terms.push(0.5 * nf * k as f64 * (1.0 + (2.0 * PI).ln()));
    Ok(compensated_sum(terms))
}

/// Initial `q1` and `Φ` from a hard labelling.
pub fn init_from_labels<R: Rng + ?Sized>(
    x: &DataMatrix,
    labels0: &LabelAssignment,
    k: usize,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Params)> {
    let data = x.matrix();
    let (n, p) = data.shape();
    if labels0.len() != p {
        return Err(Error::DimensionMismatch {
            what: "initial labels length",
            expected: p,
            found: labels0.len(),
        });
    }
    let labels0 = LabelAssignment::new(labels0.as_slice().to_vec(), k)?;
    let counts = labels0.counts();
    if let Some(community) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyCommunity { community });
    }
    let c0 = labels0.as_slice();

    // Classes in order of first appearance, so relabelling the input
    // relabels the random draws identically.
    let mut class_order = Vec::with_capacity(k);
    let mut seen = vec![false; k];
    for &l in c0 {
        if !std::mem::replace(&mut seen[l], true) {
            class_order.push(l);
        }
    }

    let (lo, hi) = opts.init_mass.range();
    let mut q1 = DMatrix::zeros(p, k);
    let mut rest = vec![0.0; k.saturating_sub(1)];
    for j in 0..p {
        let u = lo + (hi - lo) * rng.random::<f64>();
        q1[(j, c0[j])] = u;
        for r in rest.iter_mut() {
            *r = rng.random::<f64>() + f64::EPSILON;
        }
        let total: f64 = rest.iter().sum();
        let others = class_order.iter().filter(|&&c| c != c0[j]);
        for (&c, &r) in others.zip(&rest) {
            q1[(j, c)] = (1.0 - u) * r / total;
        }
        if k == 1 {
            q1[(j, 0)] = 1.0;
        }
    }
    let pi: Vec<f64> = (0..k)
        .map(|c| q1.column(c).sum() / p as f64)
        .collect();

    let omega = block_average_covariance(data, &labels0);

    let nf = n as f64;
    let mut lambda = vec![0.0; p];
    let mut sigma2 = vec![0.0; p];
    for c in 0..k {
        let members: Vec<usize> = (0..p).filter(|&j| c0[j] == c).collect();
        let sub = data.select_columns(&members);
        let mut local = Params {
            pi: vec![1.0],
            omega: DMatrix::from_element(1, 1, omega[(c, c)]),
            lambda: vec![1.0; members.len()],
            sigma2: sub
                .column_iter()
                .map(|col| (col.norm_squared() / nf).max(opts.sigma2_floor))
                .collect(),
        };
        let ones = DMatrix::from_element(members.len(), 1, 1.0);
        for _ in 0..opts.init_inner_iters {
            let q2 = e_step_q2(&sub, &ones, &local)?;
            let step = m_step(&sub, &ones, &q2, &local, opts.sigma2_floor)?;
            local.lambda = step.params.lambda;
            local.sigma2 = step.params.sigma2;
        }
        for (idx, &j) in members.iter().enumerate() {
            lambda[j] = local.lambda[idx];
            sigma2[j] = local.sigma2[idx];
        }
    }
    Ok((
        q1,
        Params {
            pi,
            omega,
            lambda,
            sigma2,
        },
    ))
}

/// Average of `S = XᵀX/N` over feature pairs `(j, j')` with `j` in group
/// `k`, `j'` in group `l` and `j ≠ j'`, projected to be positive definite.
pub fn block_average_covariance(x: &DMatrix<f64>, labels: &LabelAssignment) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let k = labels.k();
    let nf = n as f64;
    let c = labels.as_slice();
    let counts = labels.counts();

    // Σ_{j∈k, j'∈l} S_jj' = (1/N) Σ_i T_ik T_il with T = X L.
    let t = x * labels.one_hot();
    let mut sums = t.transpose() * &t / nf;
    let mut diag = vec![0.0; k];
    for j in 0..p {
        diag[c[j]] += x.column(j).norm_squared() / nf;
    }
    let mut omega = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            omega[(a, b)] = if a == b {
                sums[(a, a)] -= diag[a];
                let pairs = counts[a] * counts[a].saturating_sub(1);
                if pairs > 0 {
                    sums[(a, a)] / pairs as f64
                } else {
                    diag[a] / counts[a].max(1) as f64
                }
            } else {
                sums[(a, b)] / (counts[a] * counts[b]).max(1) as f64
            };
        }
    }
    linalg::symmetrize(&mut omega);
    make_positive_definite(&omega, &diag, &counts)
}

/// Clips eigenvalues from below at a small fraction of the average feature
/// variance so the result can serve as a prior covariance.
fn make_positive_definite(omega: &DMatrix<f64>, diag_sums: &[f64], counts: &[usize]) -> DMatrix<f64> {
    let total: f64 = diag_sums.iter().sum();
    let features: usize = counts.iter().sum();
    let scale = (total / features.max(1) as f64).max(f64::MIN_POSITIVE);
    let floor = 1e-3 * scale;
    let eig = nalgebra::SymmetricEigen::new(omega.clone());
    if eig.eigenvalues.iter().all(|&e| e >= floor) {
        return omega.clone();
    }
    let clipped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| e.max(floor)),
    );
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    linalg::symmetrize(&mut out);
    out
}

const RESEED_FEATURES: usize = 3;

/// Copy of `q1` with the least confident features moved into communities
/// whose total membership fell below `min_pi · P`, and the number of such
/// communities; `None` when no community is below the threshold.
fn reseed_empty(q1: &DMatrix<f64>, min_pi: f64) -> Option<(DMatrix<f64>, usize)> {
    let (p, k) = q1.shape();
    let threshold = min_pi * p as f64;
    let empty: Vec<usize> = (0..k).filter(|&c| q1.column(c).sum() < threshold).collect();
    if empty.is_empty() {
        return None;
    }
    let take = RESEED_FEATURES.min(p / k.max(1)).max(1);
    let confidence: Vec<f64> = q1.row_iter().map(|r| r.max()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| confidence[a].total_cmp(&confidence[b]).then(a.cmp(&b)));
    let mut out = q1.clone();
    for (&c, rows) in empty.iter().zip(order.chunks(take)) {
        for &j in rows {
            out.row_mut(j).fill(0.0);
            out[(j, c)] = 1.0;
        }
    }
    Some((out, empty.len()))
}

/// Runs variational EM from `init_labels`, or from spectral clustering of
/// the absolute correlation kernel when none are given.
pub fn fit(
    x: &DataMatrix,
    k: usize,
    opts: &FitOptions,
    init_labels: Option<&LabelAssignment>,
    seed: u64,
) -> Result<FitResult> {
    opts.validate()?;
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need k >= 2, got {k}")));
    }
    if k > x.p() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the number of features {}",
            x.p()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let labels0 = match init_labels {
        Some(l) => l.clone(),
        None => {
            let kernel = spectral::abs_correlation(x)?;
            spectral::spectral_cluster(&kernel, k, &opts.spectral, &mut rng)?
        }
    };
    let (mut q1, mut params) = init_from_labels(x, &labels0, k, opts, &mut rng)?;
    let data = x.matrix();

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut reseeds = 0;
    let mut q2 = e_step_q2(data, &q1, &params)?;
    let mut iterations = 0;
    for iter in 1..=opts.max_iters {
        iterations = iter;
        if iter > 1 {
            q2 = e_step_q2(data, &q1, &params)?;
        }
        q1 = e_step_q1(data, &q2, &params)?;
        let mut step = m_step(data, &q1, &q2, &params, opts.sigma2_floor)?;
        let mut j = match elbo(data, &q1, &q2, &step.params) {
            Err(e) if e.is_numerical() => f64::NAN,
            other => other?,
        };
        let mut reseeded = false;
        if let Some((candidate, r)) = reseed_empty(&q1, opts.min_pi) {
            // Kept only when it does not lower the objective.
            let alt = m_step(data, &candidate, &q2, &params, opts.sigma2_floor)?;
            match elbo(data, &candidate, &q2, &alt.params) {
                Ok(ja) if ja.is_finite() && !(ja < j) => {
                    log::info!("iteration {iter}: re-seeded {r} emptied communities");
                    q1 = candidate;
                    step = alt;
                    j = ja;
                    reseeds += r;
                    reseeded = true;
                }
                _ => log::debug!("iteration {iter}: re-seeding {r} communities rejected"),
            }
        }
        if !step.degenerate_lambda.is_empty() {
            log::warn!(
                "iteration {iter}: lambda denominator vanished for {} features",
                step.degenerate_lambda.len()
            );
        }
        params = step.params;
        if !j.is_finite() {
            return Err(Error::NonFiniteElbo { iteration: iter });
        }
        let prev = trace.last().copied();
        trace.push(j);
        if let Some(prev) = prev {
            if !reseeded && (j - prev).abs() <= opts.elbo_rel_tol * prev.abs() {
                converged = true;
                break;
            }
        }
    }
    Ok(FitResult {
        labels: LabelAssignment::from_membership(&q1),
        params,
        elbo_trace: trace,
        iterations,
        converged,
        init_labels: labels0,
        state: VariationalState { q1, q2 },
        reseeds,
    })
}
