//! Experiment harness: cross-validated choice of `K`, the `(N, P, K)` grid
//! and the parameter sweeps, with CSV output.
//!
//! Every replicate owns a random stream derived from the master seed and
//! its `(cell, replicate)` position, and rows are sorted before output, so
//! files do not depend on the number of worker threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::LabelAssignment;
use crate::metrics::adjusted_rand_index;
use crate::simulate::{self, derive_seed, rng_from_seed, DataMatrix, NoiseSpec};
use crate::spectral;
use crate::vem::{self, FitOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Hbcm,
    Spectral,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hbcm => "hbcm",
            Method::Spectral => "spectral",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hbcm" => Ok(Method::Hbcm),
            "spectral" => Ok(Method::Spectral),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

/// Clusters the columns of `x` into `k` groups with the given method.
/// HBCM is initialized by spectral clustering.
pub fn cluster(x: &DataMatrix, k: usize, method: Method, opts: &FitOptions, seed: u64) -> Result<LabelAssignment> {
    match method {
        Method::Spectral => spectral::spectral_labels(x, k, &opts.spectral, seed),
        Method::Hbcm => Ok(vem::fit(x, k, opts, None, seed)?.labels),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub k_values: Vec<usize>,
    /// Mean over the splits that succeeded; `None` when all failed.
    pub mean_ari: Vec<Option<f64>>,
    pub best_k: usize,
    /// `per_split_ari[m][i]` is the agreement for split `m` and
    /// `k_values[i]`; `None` marks a failed fit.
    pub per_split_ari: Vec<Vec<Option<f64>>>,
}

impl CvReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Random split of `0..n` into halves of sizes `⌊n/2⌋` and `⌈n/2⌉`.
pub fn random_halves(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let second = idx.split_off(n / 2);
    (idx, second)
}

/// Split-half stability selection of `K`: for each split, both halves are
/// clustered independently and scored by the ARI between the two column
/// labellings.
pub fn select_k_cv(
    x: &DataMatrix,
    k_candidates: &[usize],
    m: usize,
    method: Method,
    opts: &FitOptions,
    seed: u64,
) -> Result<CvReport> {
    if k_candidates.is_empty() || m == 0 {
        return Err(Error::InvalidArgument("need at least one K and one split".into()));
    }
    if let Some(&k) = k_candidates.iter().find(|&&k| k < 2) {
        return Err(Error::InvalidArgument(format!("candidate K must be >= 2, got {k}")));
    }
    if x.n() < 4 {
        return Err(Error::InvalidArgument(format!("need N >= 4 rows, got {}", x.n())));
    }
    let splits: Vec<(DataMatrix, DataMatrix)> = (0..m)
        .map(|s| {
            let (a, b) = random_halves(x.n(), derive_seed(seed, &[0, s as u64]));
            Ok((x.select_rows(&a)?, x.select_rows(&b)?))
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..m)
        .flat_map(|s| (0..k_candidates.len()).map(move |i| (s, i)))
        .collect();
    let scores: Vec<Option<f64>> = tasks
        .par_iter()
        .map(|&(s, i)| {
            let k = k_candidates[i];
            let (a, b) = &splits[s];
            let fit_seed = |half: u64| derive_seed(seed, &[1, s as u64, k as u64, half]);
            let res = cluster(a, k, method, opts, fit_seed(0))
                .and_then(|la| Ok((la, cluster(b, k, method, opts, fit_seed(1))?)))
                .and_then(|(la, lb)| adjusted_rand_index(&la, &lb));
            match res {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("cv split {s}, K = {k}: {e}; cell excluded");
                    None
                }
            }
        })
        .collect();

    let per_split_ari: Vec<Vec<Option<f64>>> = scores
        .chunks(k_candidates.len())
        .map(|c| c.to_vec())
        .collect();
    let mean_ari: Vec<Option<f64>> = (0..k_candidates.len())
        .map(|i| {
            let ok: Vec<f64> = per_split_ari.iter().filter_map(|row| row[i]).collect();
            (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (&k, mean) in k_candidates.iter().zip(&mean_ari) {
        if let Some(v) = *mean {
            let better = match best {
                None => true,
                Some((bk, bv)) => v > bv || (v == bv && k < bk),
            };
            if better {
                best = Some((k, v));
            }
        }
    }
    let best_k = best
        .map(|(k, _)| k)
        .ok_or_else(|| Error::InvalidArgument("every cross-validation fit failed".into()))?;
    Ok(CvReport {
        k_values: k_candidates.to_vec(),
        mean_ari,
        best_k,
        per_split_ari,
    })
}

/// How one benchmark dataset is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    /// Random `λ ~ N(0,1)`, `σ² ~ χ²₂ + 1`, `Ω = 0.5 + 0.5·I`.
    Table1 { n: usize, p: usize, k: usize },
    /// Constant `λ` and `σ`, compound-symmetric `Ω`.
    Homogeneous {
        n: usize,
        p: usize,
        k: usize,
        lambda: f64,
        sigma: f64,
        offdiag: f64,
        noise: NoiseSpec,
    },
    /// λ tiers `{1, 5, 25}` independent of the true labels.
    Mislead { n: usize, sigma: f64 },
    /// Homogeneous covariance plus `r·W` inside the λ scaling.
    Misspec {
        n: usize,
        p: usize,
        k: usize,
        lambda: f64,
        sigma: f64,
        offdiag: f64,
        r: f64,
    },
}

impl Scenario {
    pub fn dims(&self) -> (usize, usize, usize) {
        match *self {
            Scenario::Table1 { n, p, k }
            | Scenario::Homogeneous { n, p, k, .. }
            | Scenario::Misspec { n, p, k, .. } => (n, p, k),
            Scenario::Mislead { n, .. } => (n, simulate::MISLEAD_P, 3),
        }
    }

    /// Draws a dataset with its true labels and, for the λ-tier scenario,
    /// the partition by λ value.
    pub fn generate(&self, seed: u64) -> Result<(DataMatrix, LabelAssignment, Option<LabelAssignment>)> {
        let mut rng = rng_from_seed(seed);
        match *self {
            Scenario::Table1 { n, p, k } => {
                let sys = simulate::table1_system(p, k, &mut rng)?;
                let (x, truth) = simulate::generate_dataset(n, &sys, NoiseSpec::Gaussian, &mut rng)?;
                Ok((x, truth.labels, None))
            }
            Scenario::Homogeneous {
                n,
                p,
                k,
                lambda,
                sigma,
                offdiag,
                noise,
            } => {
                let sys = simulate::homogeneous_system(p, k, lambda, sigma, offdiag, &mut rng)?;
                let (x, truth) = simulate::generate_dataset(n, &sys, noise, &mut rng)?;
                Ok((x, truth.labels, None))
            }
            Scenario::Mislead { n, sigma } => {
                let (sys, mislead) = simulate::misleading_lambda_system(sigma, &mut rng)?;
                let (x, truth) = simulate::generate_dataset(n, &sys, NoiseSpec::Gaussian, &mut rng)?;
                Ok((x, truth.labels, Some(mislead)))
            }
            Scenario::Misspec {
                n,
                p,
                k,
                lambda,
                sigma,
                offdiag,
                r,
            } => {
                let sys = simulate::homogeneous_system(p, k, lambda, sigma, offdiag, &mut rng)?;
                let (x, _) = simulate::perturbed_covariance_dataset(n, &sys, r, 10, &mut rng)?;
                Ok((x, sys.labels, None))
            }
        }
    }
}

/// One grid point of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: String,
    /// The swept parameter value, if any.
    pub param: Option<f64>,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub reps: usize,
    pub seed: u64,
    pub fit: FitOptions,
    /// Record wall-clock times. Off by default so output files are
    /// byte-reproducible.
    pub timing: bool,
}

impl BenchConfig {
    pub fn new(reps: usize, seed: u64) -> Self {
        Self {
            reps,
            seed,
            fit: FitOptions::default(),
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scenario: String,
    pub param: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub method: Method,
    pub replicate: usize,
    pub seed: u64,
    /// `None` when the replicate failed.
    pub ari: Option<f64>,
    /// Agreement with the λ-tier partition (λ-tier scenario only).
    pub ari_mislead: Option<f64>,
    pub iterations: usize,
    pub wall_ms: f64,
    cell_index: usize,
}

impl BenchRow {
    pub fn failed(&self) -> bool {
        self.ari.is_none()
    }
}

fn replicate_rows(cell_index: usize, cell: &Cell, replicate: usize, cfg: &BenchConfig) -> Vec<BenchRow> {
    let seed = derive_seed(cfg.seed, &[cell_index as u64, replicate as u64]);
    let (n, p, k) = cell.scenario.dims();
    let row = |method: Method| BenchRow {
        scenario: cell.id.clone(),
        param: cell.param,
        n,
        p,
        k,
        method,
        replicate,
        seed,
        ari: None,
        ari_mislead: None,
        iterations: 0,
        wall_ms: 0.0,
        cell_index,
    };
    let mut spec_row = row(Method::Spectral);
    let mut hbcm_row = row(Method::Hbcm);
    let fail = |what: &str, e: &Error| {
        log::warn!("{} replicate {replicate}: {what} failed: {e}", cell.id);
    };

    let (x, truth, mislead) = match cell.scenario.generate(derive_seed(seed, &[0])) {
        Ok(v) => v,
        Err(e) => {
            fail("generation", &e);
            return vec![hbcm_row, spec_row];
        }
    };
    let score = |labels: &LabelAssignment, r: &mut BenchRow| {
        r.ari = adjusted_rand_index(labels, &truth).ok();
        r.ari_mislead = mislead
            .as_ref()
            .and_then(|m| adjusted_rand_index(labels, m).ok());
    };
    let ms = |t: Instant| if cfg.timing { t.elapsed().as_secs_f64() * 1e3 } else { 0.0 };

    let start = Instant::now();
    let spectral_labels = match spectral::spectral_labels(&x, k, &cfg.fit.spectral, derive_seed(seed, &[1])) {
        Ok(l) => l,
        Err(e) => {
            fail("spectral", &e);
            return vec![hbcm_row, spec_row];
        }
    };
    spec_row.wall_ms = ms(start);
    score(&spectral_labels, &mut spec_row);

    match vem::fit(&x, k, &cfg.fit, Some(&spectral_labels), derive_seed(seed, &[2])) {
        Ok(fit) => {
            hbcm_row.wall_ms = ms(start);
            hbcm_row.iterations = fit.iterations;
            score(&fit.labels, &mut hbcm_row);
        }
        Err(e) => fail("hbcm", &e),
    }
    vec![hbcm_row, spec_row]
}

/// Runs every replicate of every cell on the rayon pool; rows come back
/// ordered by cell, replicate and method.
pub fn run_cells(cells: &[Cell], cfg: &BenchConfig) -> Vec<BenchRow> {
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.reps).map(move |r| (c, r)))
        .collect();
    let mut rows: Vec<BenchRow> = tasks
        .par_iter()
        .flat_map_iter(|&(c, r)| replicate_rows(c, &cells[c], r, cfg))
        .collect();
    rows.sort_by(|a, b| {
        (a.cell_index, a.replicate, a.method).cmp(&(b.cell_index, b.replicate, b.method))
    });
    rows
}

/// The `(N, P, K)` cells of the simulation grid.
pub fn table1_grid() -> Vec<(usize, usize, usize)> {
    let mut cells = Vec::new();
    for (n, ps) in [(500, [300, 500, 1000]), (1000, [500, 1000, 1500])] {
        for p in ps {
            for k in [3, 5, 7] {
                cells.push((n, p, k));
            }
        }
    }
    cells
}

pub fn table1_cells(grid: &[(usize, usize, usize)]) -> Result<Vec<Cell>> {
    let allowed = table1_grid();
    grid.iter()
        .map(|&(n, p, k)| {
            if !allowed.contains(&(n, p, k)) {
                return Err(Error::InvalidArgument(format!(
                    "({n}, {p}, {k}) is not a cell of the simulation grid"
                )));
            }
            Ok(Cell {
                id: format!("table1_n{n}_p{p}_k{k}"),
                param: None,
                scenario: Scenario::Table1 { n, p, k },
            })
        })
        .collect()
}

pub fn bench_table1(grid: &[(usize, usize, usize)], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    Ok(run_cells(&table1_cells(grid)?, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Sigma,
    Omega,
    TDof,
    TDofStandardized,
    Mislead,
    Misspec,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sigma" => Sweep::Sigma,
            "omega" | "omega_offdiag" => Sweep::Omega,
            "tdof" | "t_dof" => Sweep::TDof,
            "tdof-std" | "t_dof_standardized" => Sweep::TDofStandardized,
            "mislead" => Sweep::Mislead,
            "misspec" => Sweep::Misspec,
            _ => return Err(Error::InvalidArgument(format!("unknown sweep {s:?}"))),
        })
    }
}

/// Sample size, dimension and community count shared by all sweeps.
pub const SWEEP_N: usize = 1000;
pub const SWEEP_P: usize = 1000;
pub const SWEEP_K: usize = 3;

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Sigma => "sigma",
            Sweep::Omega => "omega",
            Sweep::TDof => "tdof",
            Sweep::TDofStandardized => "tdof-std",
            Sweep::Mislead => "mislead",
            Sweep::Misspec => "misspec",
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Sweep::Sigma | Sweep::Mislead => (1..=10).map(f64::from).collect(),
            Sweep::Omega => (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            Sweep::TDof | Sweep::TDofStandardized => vec![2.5, 3.0, 4.0, 6.0, 10.0, 20.0],
            Sweep::Misspec => (0..=5).map(|i| f64::from(i) / 10.0).collect(),
        }
    }

    pub fn scenario(self, value: f64) -> Scenario {
        let (n, p, k) = (SWEEP_N, SWEEP_P, SWEEP_K);
        let homogeneous = |sigma: f64, offdiag: f64, noise: NoiseSpec| Scenario::Homogeneous {
            n,
            p,
            k,
            lambda: 1.0,
            sigma,
            offdiag,
            noise,
        };
        match self {
            Sweep::Sigma => homogeneous(value, 0.5, NoiseSpec::Gaussian),
            Sweep::Omega => homogeneous(6.0, value, NoiseSpec::Gaussian),
            Sweep::TDof => homogeneous(6.0, 0.5, NoiseSpec::StudentT { dof: value }),
            Sweep::TDofStandardized => {
                homogeneous(6.0, 0.5, NoiseSpec::StudentTStandardized { dof: value })
            }
            Sweep::Mislead => Scenario::Mislead { n, sigma: value },
            Sweep::Misspec => Scenario::Misspec {
                n,
                p,
                k,
                lambda: 1.0,
                sigma: 6.0,
                offdiag: 0.5,
                r: value,
            },
        }
    }

    pub fn cells(self, grid: &[f64]) -> Vec<Cell> {
        grid.iter()
            .map(|&v| Cell {
                id: format!("{}_{v}", self.name()),
                param: Some(v),
                scenario: self.scenario(v),
            })
            .collect()
    }
}

pub fn bench_sweep(sweep: Sweep, grid: Option<&[f64]>, cfg: &BenchConfig) -> Vec<BenchRow> {
    let default = sweep.default_grid();
    run_cells(&sweep.cells(grid.unwrap_or(&default)), cfg)
}

/// Mean and standard deviation of one (cell, method) group.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub param: Option<f64>,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub method: Method,
    pub reps: usize,
    pub failed: usize,
    pub mean_ari: Option<f64>,
    pub sd_ari: Option<f64>,
    pub mean_ari_mislead: Option<f64>,
    pub mean_iterations: f64,
}

fn mean_sd(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.len() > 1).then(|| {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    });
    (Some(m), sd)
}

/// Per (cell, method) summaries in row order; failed replicates are
/// counted but excluded from the means.
pub fn summarize(rows: &[BenchRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, Method)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.cell_index, r.method)) {
            keys.push((r.cell_index, r.method));
        }
    }
    keys.iter()
        .map(|&(cell, method)| {
            let group: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.cell_index == cell && r.method == method)
                .collect();
            let ok: Vec<&BenchRow> = group.iter().copied().filter(|r| !r.failed()).collect();
            let aris: Vec<f64> = ok.iter().filter_map(|r| r.ari).collect();
            let mislead: Vec<f64> = ok.iter().filter_map(|r| r.ari_mislead).collect();
            let (mean_ari, sd_ari) = mean_sd(&aris);
            let first = group[0];
            SummaryRow {
                scenario: first.scenario.clone(),
                param: first.param,
                n: first.n,
                p: first.p,
                k: first.k,
                method,
                reps: group.len(),
                failed: group.len() - ok.len(),
                mean_ari,
                sd_ari,
                mean_ari_mislead: mean_sd(&mislead).0,
                mean_iterations: ok.iter().map(|r| r.iterations as f64).sum::<f64>()
                    / ok.len().max(1) as f64,
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_rows_csv(rows: &[BenchRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "scenario", "param", "n", "p", "k", "method", "replicate", "seed", "ari", "ari_mislead",
        "iterations", "wall_ms", "status",
    ])?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            opt(r.param),
            r.n.to_string(),
            r.p.to_string(),
            r.k.to_string(),
            r.method.to_string(),
            r.replicate.to_string(),
            r.seed.to_string(),
            opt(r.ari),
            opt(r.ari_mislead),
            r.iterations.to_string(),
            r.wall_ms.to_string(),
            if r.failed() { "failed" } else { "ok" }.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_csv(summary: &[SummaryRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "scenario", "param", "n", "p", "k", "method", "reps", "failed", "mean_ari", "sd_ari",
        "mean_ari_mislead", "mean_iterations",
    ])?;
    for s in summary {
        out.write_record([
            s.scenario.clone(),
            opt(s.param),
            s.n.to_string(),
            s.p.to_string(),
            s.k.to_string(),
            s.method.to_string(),
            s.reps.to_string(),
            s.failed.to_string(),
            opt(s.mean_ari),
            opt(s.sd_ari),
            opt(s.mean_ari_mislead),
            s.mean_iterations.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halves_cover_all_rows() {
        let (a, b) = random_halves(7, 3);
        assert_eq!((a.len(), b.len()), (3, 4));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn grid_rejects_foreign_cells() {
        assert_eq!(table1_grid().len(), 18);
        assert!(table1_cells(&[(500, 300, 3)]).is_ok());
        assert!(table1_cells(&[(500, 301, 3)]).is_err());
    }

    #[test]
    fn sweep_names_parse() {
        for name in ["sigma", "omega", "tdof", "tdof-std", "mislead", "misspec"] {
            assert_eq!(name.parse::<Sweep>().unwrap().name(), name);
        }
        assert!("bogus".parse::<Sweep>().is_err());
    }

    #[test]
    fn summary_matches_rows() {
        let cell = Cell {
            id: "tiny".into(),
            param: Some(1.0),
            scenario: Scenario::Homogeneous {
                n: 60,
                p: 12,
                k: 2,
                lambda: 1.0,
                sigma: 0.5,
                offdiag: 0.2,
                noise: NoiseSpec::Gaussian,
            },
        };
        let rows = run_cells(&[cell], &BenchConfig::new(3, 9));
        assert_eq!(rows.len(), 6);
        let summary = summarize(&rows);
        for s in &summary {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.method == s.method)
                .filter_map(|r| r.ari)
                .collect();
            assert_eq!(s.mean_ari, Some(v.iter().sum::<f64>() / v.len() as f64));
        }
    }
}
