//! Parameter systems of the heterogeneous block covariance model, covariance
//! assembly, identifiability checks and canonical parameters.
//!
//! A system `{λ, Ω, c, σ²}` induces the feature covariance
//!
//! ```text
//! Σ = diag(λ) L Ω Lᵀ diag(λ) + diag(σ²)
//! ```
//!
//! where `L` is the one-hot membership matrix of the labels `c`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelAssignment;
use crate::linalg;

/// Minimum community size required for identifiability.
pub const MIN_COMMUNITY_SIZE: usize = 3;

const SIMPLEX_TOL: f64 = 1e-12;
const CANONICAL_EPS: f64 = 1e-12;
const RATIO_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSystem {
    pub labels: LabelAssignment,
    pub lambda: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub omega: DMatrix<f64>,
    pub pi: Option<Vec<f64>>,
}

/// Feature covariance `Σ` (P×P, exactly symmetric).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix(pub DMatrix<f64>);

impl CovarianceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// Canonical representative `(λ*, Ω*)` of an equivalence class of systems.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSystem {
    pub lambda: Vec<f64>,
    pub omega: DMatrix<f64>,
    pub labels: LabelAssignment,
    pub sigma2: Vec<f64>,
}

impl CanonicalSystem {
    pub fn to_system(&self) -> ParameterSystem {
        ParameterSystem {
            labels: self.labels.clone(),
            lambda: self.lambda.clone(),
            sigma2: self.sigma2.clone(),
            omega: self.omega.clone(),
            pi: None,
        }
    }
}

/// Witness of equivalence between two systems `a` and `b`.
///
/// Community `k` of `a` corresponds to community `permutation[k]` of `b`, and
/// `λ_b,j = λ_a,j / d[c_a(j)]`, `Ω_b[π(k), π(l)] = d_k d_l Ω_a[k, l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equivalence {
    pub permutation: Vec<usize>,
    pub d: Vec<f64>,
}

impl Equivalence {
    /// Permutation matrix `Q` with `L_b = L_a Q`.
    pub fn permutation_matrix(&self) -> DMatrix<f64> {
        let k = self.permutation.len();
        let mut q = DMatrix::zeros(k, k);
        for (from, &to) in self.permutation.iter().enumerate() {
            q[(from, to)] = 1.0;
        }
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ZeroLambda { index: usize },
    NonPositiveSigma2 { index: usize },
    OmegaNotPositiveDefinite { eigenvalue: f64 },
    OmegaNotSymmetric,
    LabelOutOfRange { index: usize },
    SmallCommunity { community: usize, size: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroLambda { index } => write!(f, "lambda[{index}] is zero"),
            Violation::NonPositiveSigma2 { index } => write!(f, "sigma2[{index}] is not positive"),
            Violation::OmegaNotPositiveDefinite { eigenvalue } => {
                write!(f, "omega is not positive definite (eigenvalue {eigenvalue:e})")
            }
            Violation::OmegaNotSymmetric => write!(f, "omega is not symmetric"),
            Violation::LabelOutOfRange { index } => write!(f, "label of feature {index} out of range"),
            Violation::SmallCommunity { community, size } => write!(
                f,
                "community {community} has {size} members (< {MIN_COMMUNITY_SIZE})"
            ),
        }
    }
}

impl ParameterSystem {
    /// Builds a system after checking shapes only; value constraints are
    /// checked by [`ParameterSystem::validate`] and [`validate_condition1`].
    pub fn new(
        labels: LabelAssignment,
        lambda: Vec<f64>,
        sigma2: Vec<f64>,
        omega: DMatrix<f64>,
        pi: Option<Vec<f64>>,
    ) -> Result<Self> {
        let p = labels.len();
        if lambda.len() != p {
            return Err(Error::DimensionMismatch {
                what: "lambda length",
                expected: p,
                found: lambda.len(),
            });
        }
        if sigma2.len() != p {
            return Err(Error::DimensionMismatch {
                what: "sigma2 length",
                expected: p,
                found: sigma2.len(),
            });
        }
        if !omega.is_square() {
            return Err(Error::DimensionMismatch {
                what: "omega columns",
                expected: omega.nrows(),
                found: omega.ncols(),
            });
        }
        if labels.k() > omega.nrows() {
            return Err(Error::DimensionMismatch {
                what: "omega size",
                expected: labels.k(),
                found: omega.nrows(),
            });
        }
        // Widen the label range to the size of omega.
        let k = omega.nrows();
        let labels = LabelAssignment::new(labels.into_vec(), k)?;
        if let Some(pi) = &pi {
            if pi.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "pi length",
                    expected: k,
                    found: pi.len(),
                });
            }
            check_simplex(pi)?;
        }
        Ok(Self {
            labels,
            lambda,
            sigma2,
            omega,
            pi,
        })
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    pub fn k(&self) -> usize {
        self.omega.nrows()
    }

    /// Type invariants: nonzero λ, positive σ², symmetric PSD Ω.
    pub fn validate(&self) -> Result<()> {
        if let Some(index) = self.lambda.iter().position(|&l| l == 0.0 || !l.is_finite()) {
            return Err(Error::ZeroLambda { index });
        }
        if let Some(index) = self.sigma2.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::NonPositiveSigma2 {
                index,
                value: self.sigma2[index],
            });
        }
        if !linalg::is_symmetric(&self.omega, 1e-12 * max_abs(&self.omega).max(1.0)) {
            return Err(Error::NotSymmetric { what: "omega" });
        }
        linalg::check_psd(&self.omega, "omega")
    }

    /// The P×P block matrix `Ω̃` with `Ω̃_{jj'} = ω_{c_j c_j'}`.
    pub fn block_matrix(&self) -> DMatrix<f64> {
        let c = self.labels.as_slice();
        let p = self.p();
        DMatrix::from_fn(p, p, |j, jj| self.omega[(c[j], c[jj])])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SystemDoc::from(self)).expect("system serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SystemDoc = serde_json::from_str(s)?;
        doc.try_into()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &x| a.max(x.abs()))
}

pub(crate) fn check_simplex(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(Error::InvalidSimplex("empty".into()));
    }
    if let Some(bad) = pi.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidSimplex(format!("entry {bad} outside [0, 1]")));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL * pi.len() as f64 {
        return Err(Error::InvalidSimplex(format!("entries sum to {total}")));
    }
    Ok(())
}

/// JSON form of a [`ParameterSystem`]; labels are 1-based.
#[derive(Serialize, Deserialize)]
struct SystemDoc {
    p: usize,
    k: usize,
    labels: Vec<usize>,
    lambda: Vec<f64>,
    sigma2: Vec<f64>,
    omega: Vec<Vec<f64>>,
    #[serde(default)]
    pi: Option<Vec<f64>>,
}

impl From<&ParameterSystem> for SystemDoc {
    fn from(s: &ParameterSystem) -> Self {
        Self {
            p: s.p(),
            k: s.k(),
            labels: s.labels.as_slice().iter().map(|l| l + 1).collect(),
            lambda: s.lambda.clone(),
            sigma2: s.sigma2.clone(),
            omega: matrix_to_rows(&s.omega),
            pi: s.pi.clone(),
        }
    }
}

impl TryFrom<SystemDoc> for ParameterSystem {
    type Error = Error;

    fn try_from(doc: SystemDoc) -> Result<Self> {
        if doc.labels.contains(&0) {
            return Err(Error::Parse("labels are 1-based; found 0".into()));
        }
        let omega = rows_to_matrix(&doc.omega)?;
        if omega.nrows() != doc.k {
            return Err(Error::DimensionMismatch {
                what: "omega rows",
                expected: doc.k,
                found: omega.nrows(),
            });
        }
        if doc.labels.len() != doc.p {
            return Err(Error::DimensionMismatch {
                what: "labels length",
                expected: doc.p,
                found: doc.labels.len(),
            });
        }
        let labels = LabelAssignment::new(doc.labels.iter().map(|l| l - 1).collect(), doc.k)?;
        ParameterSystem::new(labels, doc.lambda, doc.sigma2, omega, doc.pi)
    }
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            what: "matrix row length",
            expected: m,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Assembles `Σ_{jj'} = λ_j λ_j' ω_{c_j c_j'} + σ²_j·1(j = j')`.
pub fn assemble_covariance(sys: &ParameterSystem) -> Result<CovarianceMatrix> {
    sys.validate()?;
    let p = sys.p();
    let c = sys.labels.as_slice();
    let mut sigma = DMatrix::zeros(p, p);
    for j in 0..p {
        for jj in 0..=j {
            let v = sys.lambda[j] * sys.lambda[jj] * sys.omega[(c[j], c[jj])];
            sigma[(j, jj)] = v;
            sigma[(jj, j)] = v;
        }
        sigma[(j, j)] += sys.sigma2[j];
    }
    Ok(CovarianceMatrix(sigma))
}

/// Canonical parameters with multiplier `d = (Ω Lᵀ λ / P)⁻¹`:
/// `λ*_j = λ_j / d_{c_j}` and `Ω* = diag(d) Ω diag(d)`.
pub fn canonicalize(sys: &ParameterSystem) -> Result<CanonicalSystem> {
    let p = sys.p();
    let k = sys.k();
    let c = sys.labels.as_slice();
    let mut lt_lambda = DVector::zeros(k);
    for (j, &cj) in c.iter().enumerate() {
        lt_lambda[cj] += sys.lambda[j];
    }
    let t = &sys.omega * lt_lambda / p as f64;

    let mut d = vec![1.0; k];
    let mut first_member = vec![None; k];
    for (j, &cj) in c.iter().enumerate() {
        first_member[cj].get_or_insert(j);
    }
    for kk in 0..k {
        if let Some(j) = first_member[kk] {
            if t[kk].abs() < CANONICAL_EPS {
                return Err(Error::VanishingCanonicalDenominator { index: j });
            }
            d[kk] = 1.0 / t[kk];
        }
    }
    let lambda = c
        .iter()
        .zip(&sys.lambda)
        .map(|(&cj, &l)| l * t[cj])
        .collect();
    let omega = DMatrix::from_fn(k, k, |a, b| d[a] * sys.omega[(a, b)] * d[b]);
    Ok(CanonicalSystem {
        lambda,
        omega,
        labels: sys.labels.clone(),
        sigma2: sys.sigma2.clone(),
    })
}

/// Lists every violation of the identifiability preconditions.
pub fn validate_condition1(sys: &ParameterSystem) -> Vec<Violation> {
    let mut out = Vec::new();
    for (index, &l) in sys.lambda.iter().enumerate() {
        if l == 0.0 || !l.is_finite() {
            out.push(Violation::ZeroLambda { index });
        }
    }
    for (index, &s) in sys.sigma2.iter().enumerate() {
        if !(s > 0.0) || !s.is_finite() {
            out.push(Violation::NonPositiveSigma2 { index });
        }
    }
    if !linalg::is_symmetric(&sys.omega, 1e-12 * max_abs(&sys.omega).max(1.0)) {
        out.push(Violation::OmegaNotSymmetric);
    } else if sys.k() > 0 {
        let min = linalg::sorted_eigenvalues(&sys.omega)[0];
        if !(min > 0.0) {
            out.push(Violation::OmegaNotPositiveDefinite { eigenvalue: min });
        }
    }
    let k = sys.k();
    let mut counts = vec![0usize; k];
    for (index, &l) in sys.labels.as_slice().iter().enumerate() {
        if l < k {
            counts[l] += 1;
        } else {
            out.push(Violation::LabelOutOfRange { index });
        }
    }
    for (community, &size) in counts.iter().enumerate() {
        if size < MIN_COMMUNITY_SIZE {
            out.push(Violation::SmallCommunity { community, size });
        }
    }
    out
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Decides whether two systems induce the same covariance, returning the
/// relabelling and scale witness when they do.
///
/// Both systems must satisfy [`validate_condition1`].
pub fn systems_equivalent(a: &ParameterSystem, b: &ParameterSystem) -> Result<Option<Equivalence>> {
    for s in [a, b] {
        let v = validate_condition1(s);
        if !v.is_empty() {
            return Err(Error::Condition1(v));
        }
    }
    if a.p() != b.p() || a.k() != b.k() {
        return Ok(None);
    }
    if !a
        .sigma2
        .iter()
        .zip(&b.sigma2)
        .all(|(&x, &y)| close(x, y, 1e-10))
    {
        return Ok(None);
    }

    // Each community of `a` must map onto exactly one community of `b`.
    let k = a.k();
    let ca = a.labels.as_slice();
    let cb = b.labels.as_slice();
    let mut perm: Vec<Option<usize>> = vec![None; k];
    for (&la, &lb) in ca.iter().zip(cb) {
        match perm[la] {
            None => perm[la] = Some(lb),
            Some(m) if m != lb => return Ok(None),
            Some(_) => {}
        }
    }
    let perm: Vec<usize> = perm.into_iter().map(|m| m.expect("community nonempty")).collect();
    let mut seen = vec![false; k];
    for &m in &perm {
        if std::mem::replace(&mut seen[m], true) {
            return Ok(None);
        }
    }

    let mut d: Vec<Option<f64>> = vec![None; k];
    for j in 0..a.p() {
        let ratio = a.lambda[j] / b.lambda[j];
        match d[ca[j]] {
            None => d[ca[j]] = Some(ratio),
            Some(r) if !close(r, ratio, RATIO_TOL) => return Ok(None),
            Some(_) => {}
        }
    }
    let d: Vec<f64> = d.into_iter().map(|x| x.expect("community nonempty")).collect();

    let scale = max_abs(&b.omega).max(1.0);
    for r in 0..k {
        for s in 0..k {
            let expected = d[r] * a.omega[(r, s)] * d[s];
            if (b.omega[(perm[r], perm[s])] - expected).abs() > RATIO_TOL * scale {
                return Ok(None);
            }
        }
    }
    Ok(Some(Equivalence {
        permutation: perm,
        d,
    }))
}

/// Applies a relabelling and scale change: the output system is equivalent
/// to `sys` with witness `(permutation, d)`.
pub fn transform_system(sys: &ParameterSystem, permutation: &[usize], d: &[f64]) -> ParameterSystem {
    let k = sys.k();
    let c = sys.labels.as_slice();
    let lambda = c
        .iter()
        .zip(&sys.lambda)
        .map(|(&cj, &l)| l / d[cj])
        .collect();
    let mut omega = DMatrix::zeros(k, k);
    for r in 0..k {
        for s in 0..k {
            omega[(permutation[r], permutation[s])] = d[r] * sys.omega[(r, s)] * d[s];
        }
    }
    let pi = sys.pi.as_ref().map(|pi| {
        let mut out = vec![0.0; k];
        for (r, &m) in permutation.iter().enumerate() {
            out[m] = pi[r];
        }
        out
    });
    ParameterSystem {
        labels: sys.labels.permuted(permutation),
        lambda,
        sigma2: sys.sigma2.clone(),
        omega,
        pi,
    }
}
