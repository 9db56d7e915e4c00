//! Spectral clustering of features on the absolute sample correlation
//! kernel. Used as a standalone baseline and to initialize the variational
//! EM fit.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::labels::LabelAssignment;
use crate::simulate::{rng_from_seed, DataMatrix};

const MIN_COLUMN_VARIANCE: f64 = 1e-12;

/// P×P symmetric kernel with unit diagonal and entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix(DMatrix<f64>);

impl KernelMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                what: "kernel columns",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if !crate::linalg::is_symmetric(&m, 0.0) {
            return Err(Error::NotSymmetric { what: "kernel" });
        }
        if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("kernel entries must lie in [0, 1]".into()));
        }
        if let Some(j) = (0..m.nrows()).find(|&j| m[(j, j)] != 1.0) {
            return Err(Error::InvalidArgument(format!("kernel diagonal entry {} is not 1", j + 1)));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }
}

/// Which matrix the embedding eigenvectors are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Laplacian {
    /// The kernel itself.
    #[default]
    None,
    /// `D^{-1/2} M D^{-1/2}` with `D` the kernel degrees.
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOptions {
    pub laplacian: Laplacian,
    pub restarts: usize,
    pub max_lloyd_iters: usize,
    pub row_normalize: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            laplacian: Laplacian::None,
            restarts: 10,
            max_lloyd_iters: 300,
            row_normalize: true,
        }
    }
}

/// Column-centered copy of the data matrix.
pub fn centered_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    let n = x.nrows() as f64;
    for mut col in xc.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    xc
}

/// `|corr(X)|` between columns, after centering.
pub fn abs_correlation(x: &DataMatrix) -> Result<KernelMatrix> {
    let mut z = centered_columns(x.matrix());
    let n = x.n() as f64;
    for (index, mut col) in z.column_iter_mut().enumerate() {
        let var = col.norm_squared() / n;
        if !(var > MIN_COLUMN_VARIANCE) {
            return Err(Error::ConstantColumn { index });
        }
        col.unscale_mut(col.norm());
    }
    let mut m = z.transpose() * &z;
    let p = m.nrows();
    for j in 0..p {
        m[(j, j)] = 1.0;
        for jj in 0..j {
            let v = (0.5 * (m[(j, jj)] + m[(jj, j)])).abs().min(1.0);
            m[(j, jj)] = v;
            m[(jj, j)] = v;
        }
    }
    Ok(KernelMatrix(m))
}

/// Top-`k` eigenpairs of a symmetric matrix, eigenvalues non-increasing.
pub fn top_eigenpairs(m: &DMatrix<f64>, k: usize) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    order.truncate(k);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    (values, vectors)
}

/// Row-normalized top-`k` eigenvector embedding of the kernel.
pub fn spectral_embedding(kernel: &KernelMatrix, k: usize, opts: &SpectralOptions) -> Result<DMatrix<f64>> {
    let m = match opts.laplacian {
        Laplacian::None => kernel.0.clone(),
        Laplacian::Normalized => {
            let inv_sqrt: Vec<f64> = kernel
                .0
                .row_iter()
                .map(|r| r.sum().sqrt().recip())
                .collect();
            DMatrix::from_fn(kernel.p(), kernel.p(), |a, b| {
                kernel.0[(a, b)] * inv_sqrt[a] * inv_sqrt[b]
            })
        }
    };
    let (values, mut u) = top_eigenpairs(&m, k);
    if values.iter().any(|v| !v.is_finite()) || u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("eigensolver produced non-finite output".into()));
    }
    if opts.row_normalize {
        for mut row in u.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row.unscale_mut(norm);
            }
        }
    }
    Ok(u)
}

/// Spectral clustering of the kernel into `k` groups.
///
/// The k-means stage visits points in an order determined by the kernel
/// degrees, so permuting the features permutes the labels identically.
pub fn spectral_cluster<R: Rng + ?Sized>(
    kernel: &KernelMatrix,
    k: usize,
    opts: &SpectralOptions,
    rng: &mut R,
) -> Result<LabelAssignment> {
    let p = kernel.p();
    if k < 2 || k > p {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= k <= P, got k = {k}, P = {p}"
        )));
    }
    let embedding = spectral_embedding(kernel, k, opts)?;

    let degrees: Vec<f64> = kernel.0.row_iter().map(|r| r.sum()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        degrees[a]
            .partial_cmp(&degrees[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let points = embedding.select_rows(&order);

    let km = kmeans(&points, k, opts.restarts, opts.max_lloyd_iters, rng)?;
    let mut labels = vec![0; p];
    for (pos, &j) in order.iter().enumerate() {
        labels[j] = km.labels[pos];
    }
    LabelAssignment::new(labels, k)
}

/// Convenience: `spectral_cluster(abs_correlation(x), k)` with a fresh stream.
pub fn spectral_labels(x: &DataMatrix, k: usize, opts: &SpectralOptions, seed: u64) -> Result<LabelAssignment> {
    let kernel = abs_correlation(x)?;
    spectral_cluster(&kernel, k, opts, &mut rng_from_seed(seed))
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// Cluster of each point; clusters are numbered by first appearance.
    pub labels: Vec<usize>,
    pub centers: DMatrix<f64>,
    /// Within-cluster sum of squares.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub trace: Vec<f64>,
    /// Final inertia of every restart that produced `k` non-empty clusters.
    pub restart_inertias: Vec<f64>,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| {
            let t = points[(i, d)] - centers[(c, d)];
            t * t
        })
        .sum()
}

fn kmeanspp_seed<R: Rng + ?Sized>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let (n, dim) = points.shape();
    let mut centers = DMatrix::zeros(k, dim);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, c));
        }
    }
    centers
}

fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for c in 0..centers.nrows() {
            let d = sq_dist(points, i, centers, c);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        if *label != best {
            *label = best;
            changed = true;
        }
        inertia += best_d;
    }
    (changed, inertia)
}

fn inertia_of(points: &DMatrix<f64>, centers: &DMatrix<f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points, i, centers, c))
        .sum()
}

/// Recomputes centers; an empty cluster takes the point farthest from its
/// current center. Returns false if that is impossible.
fn update_centers(points: &DMatrix<f64>, k: usize, labels: &mut [usize], centers: &mut DMatrix<f64>) -> bool {
    let (n, dim) = points.shape();
    loop {
        let mut counts = vec![0usize; k];
        let mut sums = DMatrix::zeros(k, dim);
        for i in 0..n {
            counts[labels[i]] += 1;
            let mut row = sums.row_mut(labels[i]);
            row += points.row(i);
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            for c in 0..k {
                let mean = sums.row(c) / counts[c] as f64;
                centers.row_mut(c).copy_from(&mean);
            }
            return true;
        };
        let far = (0..n)
            .filter(|&i| counts[labels[i]] > 1)
            .map(|i| (i, sq_dist(points, i, centers, labels[i])))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match far {
            Some((i, _)) => {
                labels[i] = empty;
                centers.row_mut(empty).copy_from(&points.row(i));
            }
            None => return false,
        }
    }
}

/// Lloyd's algorithm with k-means++ seeding; keeps the restart with the
/// smallest within-cluster sum of squares.
pub fn kmeans<R: Rng + ?Sized>(
    points: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    max_iters: usize,
    rng: &mut R,
) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k-means needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut best: Option<KMeansResult> = None;
    let mut restart_inertias = Vec::new();
    for _ in 0..restarts.max(1) {
        let mut centers = kmeanspp_seed(points, k, rng);
        let mut labels = vec![usize::MAX; n];
        let mut trace = Vec::new();
        let mut ok = true;
        for iter in 0..max_iters.max(1) {
            let (changed, _) = assign(points, &centers, &mut labels);
            if !changed && iter > 0 {
                break;
            }
            if !update_centers(points, k, &mut labels, &mut centers) {
                ok = false;
                break;
            }
            trace.push(inertia_of(points, &centers, &labels));
        }
        if !ok {
            continue;
        }
        let inertia = inertia_of(points, &centers, &labels);
        restart_inertias.push(inertia);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansResult {
                labels,
                centers,
                inertia,
                trace,
                restart_inertias: Vec::new(),
            });
        }
    }
    let mut best = best.ok_or(Error::EmptyCluster)?;
    best.restart_inertias = restart_inertias;
    relabel_by_first_appearance(&mut best);
    Ok(best)
}

fn relabel_by_first_appearance(res: &mut KMeansResult) {
    let k = res.centers.nrows();
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &l in &res.labels {
        if map[l] == usize::MAX {
            map[l] = next;
            next += 1;
        }
    }
    let old = res.centers.clone();
    for (from, &to) in map.iter().enumerate() {
        res.centers.row_mut(to).copy_from(&old.row(from));
    }
    for l in &mut res.labels {
        *l = map[*l];
    }
}
