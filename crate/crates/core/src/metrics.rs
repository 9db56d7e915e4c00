//! Agreement metrics between partitions and the moment estimator of the
//! canonical heterogeneity parameters.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::labels::LabelAssignment;
use crate::simulate::DataMatrix;

/// Largest `K` accepted by [`min_misclassification`].
pub const MAX_MISCLASSIFICATION_K: usize = 10;

/// Soft confusion matrix `R_{kk'} = (1/P) Σ_j q_jk q̃_jk'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftConfusion(pub DMatrix<f64>);

impl SoftConfusion {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }
}

fn choose2(n: u64) -> i128 {
    let n = n as i128;
    n * (n - 1) / 2
}

/// Adjusted Rand index from exact pair counts.
pub fn adjusted_rand_index(a: &LabelAssignment, b: &LabelAssignment) -> Result<f64> {
    adjusted_rand_index_slices(a.as_slice(), b.as_slice())
}

pub fn adjusted_rand_index_slices(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "label vector length",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("ARI needs at least two items".into()));
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    let mut rows = vec![0u64; ka];
    let mut cols = vec![0u64; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let index: i128 = table.iter().map(|&n| choose2(n)).sum();
    let sum_a: i128 = rows.iter().map(|&n| choose2(n)).sum();
    let sum_b: i128 = cols.iter().map(|&n| choose2(n)).sum();
    let total = choose2(a.len() as u64);
    // ARI = (index - sa·sb/total) / ((sa + sb)/2 - sa·sb/total), scaled by 2·total.
    let num = 2 * (index * total - sum_a * sum_b);
    let den = (sum_a + sum_b) * total - 2 * sum_a * sum_b;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

fn check_row_stochastic(q: &DMatrix<f64>, what: &'static str) -> Result<()> {
    for (j, row) in q.row_iter().enumerate() {
        let s: f64 = row.sum();
        if row.iter().any(|&v| !(v >= 0.0)) || (s - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "{what} row {j} is not a probability vector"
            )));
        }
    }
    Ok(())
}

pub fn soft_confusion(q: &DMatrix<f64>, q_tilde: &DMatrix<f64>) -> Result<SoftConfusion> {
    if q.shape() != q_tilde.shape() {
        return Err(Error::DimensionMismatch {
            what: "soft confusion rows",
            expected: q.nrows(),
            found: q_tilde.nrows(),
        });
    }
    check_row_stochastic(q, "q")?;
    check_row_stochastic(q_tilde, "q_tilde")?;
    let p = q.nrows() as f64;
    Ok(SoftConfusion(q.transpose() * q_tilde / p))
}

/// Optimal assignment maximizing `Σ_r weight[r][perm[r]]` (Hungarian method,
/// O(K³)). Returns `perm`.
pub fn max_weight_assignment(weight: &DMatrix<f64>) -> Vec<usize> {
    let n = weight.nrows();
    assert!(weight.is_square());
    // Shortest augmenting path on cost = -weight; 1-based potentials.
    let cost = |i: usize, j: usize| -weight[(i - 1, j - 1)];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        if matched[j] != 0 {
            perm[matched[j] - 1] = j - 1;
        }
    }
    perm
}

/// `min_s 1 − Tr(R(q, I^c∘s))` over relabellings `s` of the true one-hot
/// membership.
pub fn min_misclassification(q: &DMatrix<f64>, truth: &LabelAssignment) -> Result<f64> {
    let k = q.ncols();
    if k > MAX_MISCLASSIFICATION_K {
        return Err(Error::TooManyCommunities {
            k,
            max: MAX_MISCLASSIFICATION_K,
        });
    }
    if truth.k() > k {
        return Err(Error::InvalidArgument(format!(
            "truth uses {} classes but q has {k} columns",
            truth.k()
        )));
    }
    let onehot = LabelAssignment::new(truth.as_slice().to_vec(), k)?.one_hot();
    let r = soft_confusion(q, &onehot)?;
    let perm = max_weight_assignment(r.matrix());
    let best: f64 = perm.iter().enumerate().map(|(a, &b)| r.0[(a, b)]).sum();
    Ok((1.0 - best).clamp(0.0, 1.0))
}

/// `λ̂_j = Σ_{j'} Σ_i X_ij X_ij' / (P N)`, the row means of `XᵀX/N`.
pub fn moment_lambda(x: &DataMatrix) -> Vec<f64> {
    moment_lambda_matrix(x.matrix())
}

/// [`moment_lambda`] on a raw matrix (no shape restrictions).
pub fn moment_lambda_matrix(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = m.shape();
    // Σ_j' X_ij' per row, then project each column on it.
    let row_sums: nalgebra::DVector<f64> = m.column_sum();
    let proj = m.transpose() * row_sums;
    proj.iter().map(|v| v / (n as f64 * p as f64)).collect()
}
