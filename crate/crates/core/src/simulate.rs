//! Synthetic data from the block covariance generative process and the
//! perturbed variants used in the benchmark sweeps.
//!
//! Every generator draws from an explicit caller-owned random stream, so a
//! given `(seed, arguments)` pair always reproduces the same output bits.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::LabelAssignment;
use crate::linalg;
use crate::model::{check_simplex, matrix_to_rows, ParameterSystem};

/// Random stream used throughout the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from a master seed and a path of indices
/// (`seed ⊕ hash(path)`).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let h = path
        .iter()
        .fold(0x5851_F42D_4C95_7F2D_u64, |acc, &x| splitmix64(acc ^ splitmix64(x)));
    master ^ h
}

/// An N×P data matrix, rows are samples and columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    x: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() < 2 || x.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "data matrix must be at least 2x2, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("data matrix has non-finite entries".into()));
        }
        Ok(Self { x })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.x
    }

    /// Rows at `indices`, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.x.select_rows(indices))
    }

    /// Columns at `indices`, in order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.x.select_columns(indices))
    }

    /// Headerless CSV, one sample per row.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let mut line = String::new();
        for row in self.x.row_iter() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl std::io::Read) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut values = Vec::new();
        let mut ncols = None;
        let mut nrows = 0;
        for record in reader.records() {
            let record = record?;
            match ncols {
                None => ncols = Some(record.len()),
                Some(c) if c != record.len() => {
                    return Err(Error::DimensionMismatch {
                        what: "csv row length",
                        expected: c,
                        found: record.len(),
                    })
                }
                Some(_) => {}
            }
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {field:?}", nrows + 1)))?;
                values.push(v);
            }
            nrows += 1;
        }
        let ncols = ncols.unwrap_or(0);
        Self::new(DMatrix::from_row_slice(nrows, ncols, &values))
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Gaussian,
    StudentT { dof: f64 },
    /// Student-t draws divided by `sqrt(v / (v - 2))`.
    StudentTStandardized { dof: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian => Ok(()),
            NoiseSpec::StudentT { dof } | NoiseSpec::StudentTStandardized { dof } => {
                if dof > 2.0 && dof.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument(format!(
                        "t noise needs dof > 2, got {dof}"
                    )))
                }
            }
        }
    }

    /// Variance of a single noise draw.
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::StudentT { dof } => dof / (dof - 2.0),
            _ => 1.0,
        }
    }
}

enum NoiseSampler {
    Gaussian,
    T { dist: StudentT<f64>, scale: f64 },
}

impl NoiseSampler {
    fn new(spec: NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let t = |dof: f64| {
            StudentT::new(dof).map_err(|e| Error::InvalidArgument(format!("student t: {e}")))
        };
        Ok(match spec {
            NoiseSpec::Gaussian => NoiseSampler::Gaussian,
            NoiseSpec::StudentT { dof } => NoiseSampler::T {
                dist: t(dof)?,
                scale: 1.0,
            },
            NoiseSpec::StudentTStandardized { dof } => NoiseSampler::T {
                dist: t(dof)?,
                scale: (dof / (dof - 2.0)).sqrt().recip(),
            },
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseSampler::Gaussian => rng.sample(StandardNormal),
            NoiseSampler::T { dist, scale } => dist.sample(rng) * scale,
        }
    }
}

/// True latent structure behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub labels: LabelAssignment,
    pub alpha: DMatrix<f64>,
    pub system: ParameterSystem,
}

#[derive(Serialize)]
struct GroundTruthDoc {
    labels: Vec<usize>,
    alpha: Vec<Vec<f64>>,
    system: serde_json::Value,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        let doc = GroundTruthDoc {
            labels: self.labels.as_slice().iter().map(|l| l + 1).collect(),
            alpha: matrix_to_rows(&self.alpha),
            system: serde_json::from_str(&self.system.to_json()).expect("system json"),
        };
        serde_json::to_string(&doc).expect("truth serializes")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Reads back the labels and system of a ground-truth file.
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let labels = LabelAssignment::from_json(&v.to_string())?;
        let system = ParameterSystem::from_json(&v["system"].to_string())?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(v["alpha"].clone())?;
        let alpha = crate::model::rows_to_matrix(&rows)?;
        Ok(Self {
            labels: LabelAssignment::new(labels.into_vec(), system.k())?,
            alpha,
            system,
        })
    }
}

/// Draws `P` labels i.i.d. from `Multinomial(1, π)`.
pub fn generate_labels<R: Rng + ?Sized>(p: usize, pi: &[f64], rng: &mut R) -> Result<LabelAssignment> {
    check_simplex(pi)?;
    let mut cum = Vec::with_capacity(pi.len());
    let mut acc = 0.0;
    for &w in pi {
        acc += w;
        cum.push(acc);
    }
    let last_positive = pi.iter().rposition(|&w| w > 0.0).expect("simplex has mass");
    let labels = (0..p)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            cum.iter()
                .zip(pi)
                .position(|(&c, &w)| w > 0.0 && u < c)
                .unwrap_or(last_positive)
        })
        .collect();
    LabelAssignment::new(labels, pi.len())
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Row-major fill so the stream order follows samples.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Rows drawn i.i.d. from `N(0, cov)` through an eigenvalue-clipped factor.
pub fn sample_mvn<R: Rng + ?Sized>(n: usize, cov: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let (factor, _) = linalg::psd_factor(cov);
    let z = standard_normal_matrix(n, cov.nrows(), rng);
    z * factor.transpose()
}

/// Draws `α_i ~ N(0, Ω)` and `X_ij = λ_j α_{i,c_j} + σ_j ε_ij`.
pub fn generate_dataset<R: Rng + ?Sized>(
    n: usize,
    sys: &ParameterSystem,
    noise: NoiseSpec,
    rng: &mut R,
) -> Result<(DataMatrix, GroundTruth)> {
    sys.validate()?;
    let sampler = NoiseSampler::new(noise)?;
    let alpha = sample_mvn(n, &sys.omega, rng);
    let c = sys.labels.as_slice();
    let sigma: Vec<f64> = sys.sigma2.iter().map(|s| s.sqrt()).collect();
    let p = sys.p();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let eps = sampler.sample(rng);
            x[(i, j)] = sys.lambda[j] * alpha[(i, c[j])] + sigma[j] * eps;
        }
    }
    let truth = GroundTruth {
        labels: sys.labels.clone(),
        alpha,
        system: sys.clone(),
    };
    Ok((DataMatrix::new(x)?, truth))
}

/// `Ω` with unit diagonal and constant off-diagonal entries.
pub fn compound_omega(k: usize, offdiag: f64) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |a, b| if a == b { 1.0 } else { offdiag })
}

/// The sample-size/dimension grid system: `Ω = 0.5 + 0.5·I`, uniform `π`,
/// `λ_j ~ N(0, 1)` and `σ²_j ~ χ²₂ + 1`.
pub fn table1_system<R: Rng + ?Sized>(p: usize, k: usize, rng: &mut R) -> Result<ParameterSystem> {
    let pi = vec![1.0 / k as f64; k];
    let labels = generate_labels(p, &pi, rng)?;
    let lambda: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    let chi2 = ChiSquared::new(2.0).expect("valid dof");
    let sigma2: Vec<f64> = (0..p).map(|_| chi2.sample(rng) + 1.0).collect();
    ParameterSystem::new(labels, lambda, sigma2, compound_omega(k, 0.5), Some(pi))
}

/// Constant `λ_j = lambda`, `σ_j = sigma`, compound-symmetric `Ω`, uniform
/// random labels.
pub fn homogeneous_system<R: Rng + ?Sized>(
    p: usize,
    k: usize,
    lambda: f64,
    sigma: f64,
    offdiag: f64,
    rng: &mut R,
) -> Result<ParameterSystem> {
    let pi = vec![1.0 / k as f64; k];
    let labels = generate_labels(p, &pi, rng)?;
    ParameterSystem::new(
        labels,
        vec![lambda; p],
        vec![sigma * sigma; p],
        compound_omega(k, offdiag),
        Some(pi),
    )
}

/// Like [`homogeneous_system`] with `λ_j = 1` on the first half of the
/// features and `-1` on the second half.
pub fn signed_lambda_system<R: Rng + ?Sized>(
    p: usize,
    k: usize,
    sigma: f64,
    offdiag: f64,
    rng: &mut R,
) -> Result<ParameterSystem> {
    let mut sys = homogeneous_system(p, k, 1.0, sigma, offdiag, rng)?;
    for l in sys.lambda.iter_mut().skip(p / 2) {
        *l = -1.0;
    }
    Ok(sys)
}

/// Number of features in the heterogeneous-λ experiment.
pub const MISLEAD_P: usize = 1000;

/// Heterogeneity tiers `λ ∈ {1, 5, 25}` over features `1..330`, `331..660`
/// and `661..1000`, independent of the uniformly drawn true labels.
///
/// Returns the system and the partition of features by λ tier.
pub fn misleading_lambda_system<R: Rng + ?Sized>(
    sigma: f64,
    rng: &mut R,
) -> Result<(ParameterSystem, LabelAssignment)> {
    let k = 3;
    let pi = vec![1.0 / 3.0; k];
    let labels = generate_labels(MISLEAD_P, &pi, rng)?;
    let tier = |j: usize| match j {
        0..330 => 0,
        330..660 => 1,
        _ => 2,
    };
    let values = [1.0, 5.0, 25.0];
    let lambda = (0..MISLEAD_P).map(|j| values[tier(j)]).collect();
    let mislead = LabelAssignment::new((0..MISLEAD_P).map(tier).collect(), k)?;
    let sys = ParameterSystem::new(
        labels,
        lambda,
        vec![sigma * sigma; MISLEAD_P],
        compound_omega(k, 0.5),
        Some(pi),
    )?;
    Ok((sys, mislead))
}

/// `W = (1/√m) Σ_{s=1}^{m} z_s z_sᵀ` with standard-normal `z_s ∈ ℝ^P`.
pub fn spike_matrix<R: Rng + ?Sized>(p: usize, num_spikes: usize, rng: &mut R) -> DMatrix<f64> {
    let z = standard_normal_matrix(num_spikes, p, rng);
    let mut w = z.transpose() * &z / (num_spikes as f64).sqrt();
    linalg::symmetrize(&mut w);
    w
}

/// `Σ̃ = diag(λ)(Ω̃ + rW)diag(λ) + diag(σ²)`.
pub fn perturbed_covariance<R: Rng + ?Sized>(
    sys: &ParameterSystem,
    r: f64,
    num_spikes: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("perturbation scale must be >= 0, got {r}")));
    }
    if num_spikes == 0 {
        return Err(Error::InvalidArgument("need at least one spike".into()));
    }
    sys.validate()?;
    let w = spike_matrix(sys.p(), num_spikes, rng);
    let c = sys.labels.as_slice();
    let p = sys.p();
    let mut sigma = DMatrix::zeros(p, p);
    for j in 0..p {
        for jj in 0..=j {
            let v = sys.lambda[j] * sys.lambda[jj] * (sys.omega[(c[j], c[jj])] + r * w[(j, jj)]);
            sigma[(j, jj)] = v;
            sigma[(jj, j)] = v;
        }
        sigma[(j, j)] += sys.sigma2[j];
    }
    Ok(sigma)
}

/// Rows i.i.d. from `N(0, Σ̃)` with the perturbed covariance; also returns
/// `Σ̃` (after jitter, if any was needed).
pub fn perturbed_covariance_dataset<R: Rng + ?Sized>(
    n: usize,
    sys: &ParameterSystem,
    r: f64,
    num_spikes: usize,
    rng: &mut R,
) -> Result<(DataMatrix, DMatrix<f64>)> {
    let mut cov = perturbed_covariance(sys, r, num_spikes, rng)?;
    let (mut factor, min_eig) = linalg::psd_factor(&cov);
    if min_eig <= 0.0 {
        log::warn!("perturbed covariance not positive definite (min eigenvalue {min_eig:e}); adding 1e-8 I");
        for j in 0..cov.nrows() {
            cov[(j, j)] += 1e-8;
        }
        factor = linalg::psd_factor(&cov).0;
    }
    let z = standard_normal_matrix(n, cov.nrows(), rng);
    let x = z * factor.transpose();
    Ok((DataMatrix::new(x)?, cov))
}
