//! Independent reference implementations used as test oracles, and random
//! instance generators.
#![allow(dead_code)]

use hbcm::linalg;
use hbcm::model::ParameterSystem;
use hbcm::vem::{self, Params, Q2};
use hbcm::LabelAssignment;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// ARI straight from the definition: count agreeing pairs over all
/// `C(n, 2)` pairs, then apply the Hubert–Arabie correction with exact
/// rational arithmetic on the pair counts.
pub fn ari_brute_force(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b) = (0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += (sa && sb) as i128;
            in_a += sa as i128;
            in_b += sb as i128;
        }
    }
    let total = (n * (n - 1) / 2) as i128;
    let num = both * total - in_a * in_b;
    let den = (in_a + in_b) * total - 2 * in_a * in_b;
    if den == 0 {
        return 1.0;
    }
    (2 * num) as f64 / den as f64
}

pub fn random_labels<R: Rng>(p: usize, k: usize, rng: &mut R) -> Vec<usize> {
    (0..p).map(|_| rng.random_range(0..k)).collect()
}

/// Labels using every class at least `min_size` times, in random order.
pub fn balanced_labels<R: Rng>(p: usize, k: usize, min_size: usize, rng: &mut R) -> LabelAssignment {
    use rand::seq::SliceRandom;
    assert!(p >= k * min_size);
    let mut labels: Vec<usize> = (0..k).flat_map(|c| std::iter::repeat_n(c, min_size)).collect();
    labels.extend((labels.len()..p).map(|_| rng.random_range(0..k)));
    labels.shuffle(rng);
    LabelAssignment::new(labels, k).unwrap()
}

pub fn normal_matrix<R: Rng>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `A Aᵀ / k + shift·I`.
pub fn random_spd<R: Rng>(k: usize, shift: f64, rng: &mut R) -> DMatrix<f64> {
    let a = normal_matrix(k, k, rng);
    let mut m = &a * a.transpose() / k as f64;
    for i in 0..k {
        m[(i, i)] += shift;
    }
    linalg::symmetrize(&mut m);
    m
}

pub fn random_row_stochastic<R: Rng>(p: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let mut q = DMatrix::from_fn(p, k, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z.exp()
    });
    for mut row in q.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    q
}

pub fn random_nonzero<R: Rng>(rng: &mut R) -> f64 {
    let v: f64 = rng.random_range(0.3..2.0);
    if rng.random::<bool>() {
        v
    } else {
        -v
    }
}

pub fn random_params<R: Rng>(p: usize, k: usize, rng: &mut R) -> Params {
    let mut pi: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    Params {
        pi,
        omega: random_spd(k, 0.5, rng),
        lambda: (0..p).map(|_| random_nonzero(rng)).collect(),
        sigma2: (0..p).map(|_| rng.random_range(0.5..2.0)).collect(),
    }
}

/// A valid parameter system satisfying the identifiability preconditions.
pub fn random_system<R: Rng>(p: usize, k: usize, rng: &mut R) -> ParameterSystem {
    let labels = balanced_labels(p, k, 3, rng);
    let lambda = (0..p).map(|_| random_nonzero(rng)).collect();
    let sigma2 = (0..p).map(|_| rng.random_range(0.2..3.0)).collect();
    ParameterSystem::new(labels, lambda, sigma2, random_spd(k, 0.3, rng), None).unwrap()
}

/// `q2` by assembling `A = Ω⁻¹ + Σ_j D_j` and `B_i = Σ_j D_j b_ij` literally
/// and solving each row with an LU factorization.
pub fn e_step_q2_dense(x: &DMatrix<f64>, q1: &DMatrix<f64>, params: &Params) -> Q2 {
    let (n, p) = x.shape();
    let k = params.k();
    let omega_inv = params.omega.clone().try_inverse().unwrap();
    let mut a = omega_inv;
    let mut d = Vec::with_capacity(p);
    for j in 0..p {
        let scale = params.lambda[j].powi(2) / params.sigma2[j];
        let dj = DMatrix::from_diagonal(&DVector::from_fn(k, |c, _| scale * q1[(j, c)]));
        a += &dj;
        d.push(dj);
    }
    let lu = a.clone().lu();
    let mut mu = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut b = DVector::zeros(k);
        for j in 0..p {
            let bij = DVector::from_element(k, x[(i, j)] / params.lambda[j]);
            b += &d[j] * bij;
        }
        mu.set_row(i, &lu.solve(&b).unwrap().transpose());
    }
    Q2 {
        mu,
        v: a.try_inverse().unwrap(),
    }
}

fn det2(m: &DMatrix<f64>) -> f64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

fn inv2(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = det2(m);
    DMatrix::from_row_slice(2, 2, &[m[(1, 1)] / d, -m[(0, 1)] / d, -m[(1, 0)] / d, m[(0, 0)] / d])
}

/// The objective for `K = 2` by enumerating every joint label vector
/// `c ∈ {0,1}^P` under `q1(c) = Π_j q1_j(c_j)` and integrating the Gaussian
/// `q2` in closed form. The `log 2π` constants of the likelihood and prior
/// are left out, matching the library's objective.
pub fn elbo_enumerate_k2(x: &DMatrix<f64>, q1: &DMatrix<f64>, q2: &Q2, params: &Params) -> f64 {
    let (n, p) = x.shape();
    assert_eq!(params.k(), 2);
    let omega_inv = inv2(&params.omega);
    let mut prior = 0.0;
    for i in 0..n {
        let mu = q2.mu.row(i).transpose();
        let second = &mu * mu.transpose() + &q2.v;
        prior += -0.5 * det2(&params.omega).ln() - 0.5 * (&omega_inv * second).trace();
    }
    let mut expected = 0.0;
    let mut entropy_c = 0.0;
    for code in 0..(1usize << p) {
        let c: Vec<usize> = (0..p).map(|j| (code >> j) & 1).collect();
        let w: f64 = (0..p).map(|j| q1[(j, c[j])]).product();
        if w == 0.0 {
            continue;
        }
        entropy_c -= w * w.ln();
        let mut log_joint = 0.0;
        for j in 0..p {
            log_joint += params.pi[c[j]].ln();
            for i in 0..n {
                let m = q2.mu[(i, c[j])];
                let e_sq = x[(i, j)].powi(2) - 2.0 * x[(i, j)] * params.lambda[j] * m
                    + params.lambda[j].powi(2) * (m * m + q2.v[(c[j], c[j])]);
                log_joint += -0.5 * params.sigma2[j].ln() - e_sq / (2.0 * params.sigma2[j]);
            }
        }
        expected += w * log_joint;
    }
    let entropy_alpha =
        n as f64 * (1.0 + (2.0 * std::f64::consts::PI).ln() + 0.5 * det2(&q2.v).ln());
    prior + expected + entropy_c + entropy_alpha
}

/// Largest increase of the objective over single-coordinate perturbations
/// of `params` by `±h`. `π` moves along the simplex (mass shifted between
/// two entries) and `Ω` entries move symmetrically.
pub fn max_perturbation_gain(
    x: &DMatrix<f64>,
    q1: &DMatrix<f64>,
    q2: &Q2,
    params: &Params,
    h: f64,
) -> f64 {
    let base = vem::elbo(x, q1, q2, params).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut consider = |p: Params| {
        if let Ok(j) = vem::elbo(x, q1, q2, &p) {
            worst = worst.max(j - base);
        }
    };
    let k = params.k();
    for s in [-h, h] {
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    let mut p = params.clone();
                    p.pi[a] += s;
                    p.pi[b] -= s;
                    if p.pi.iter().all(|&v| v > 0.0) {
                        consider(p);
                    }
                }
                if b >= a {
                    let mut p = params.clone();
                    p.omega[(a, b)] += s;
                    if a != b {
                        p.omega[(b, a)] += s;
                    }
                    consider(p);
                }
            }
        }
        for j in 0..params.p() {
            let mut p = params.clone();
            p.lambda[j] += s;
            consider(p);
            let mut p = params.clone();
            p.sigma2[j] += s;
            consider(p);
        }
    }
    worst
}

/// Minimum over all `K!` relabellings of the truth of `1 − Tr R`.
pub fn misclassification_brute_force(q: &DMatrix<f64>, truth: &[usize]) -> f64 {
    let k = q.ncols();
    let p = q.nrows() as f64;
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |s| {
        let agree: f64 = truth.iter().enumerate().map(|(j, &t)| q[(j, s[t])]).sum();
        best = best.min(1.0 - agree / p);
    });
    best
}

fn permute(v: &mut Vec<usize>, at: usize, f: &mut impl FnMut(&[usize])) {
    if at == v.len() {
        f(v);
        return;
    }
    for i in at..v.len() {
        v.swap(at, i);
        permute(v, at + 1, f);
        v.swap(at, i);
    }
}

/// `t = Ω Lᵀ λ / P`, the per-community canonical scale.
pub fn canonical_scale(sys: &ParameterSystem) -> Vec<f64> {
    let k = sys.k();
    let mut lt = vec![0.0; k];
    for (j, &c) in sys.labels.as_slice().iter().enumerate() {
        lt[c] += sys.lambda[j];
    }
    (0..k)
        .map(|r| (0..k).map(|s| sys.omega[(r, s)] * lt[s]).sum::<f64>() / sys.p() as f64)
        .collect()
}
