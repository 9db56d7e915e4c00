use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hbcm::bench::{self, BenchConfig, Method, Sweep};
use hbcm::simulate::{self, rng_from_seed};
use hbcm::{metrics, spectral, vem, DataMatrix, FitOptions, LabelAssignment, NoiseSpec};

#[derive(Parser)]
#[command(name = "hbcm", version, about = "Community detection for correlated features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it with its ground truth.
    Generate(GenerateArgs),
    /// Fit the model by variational EM.
    Fit(FitArgs),
    /// Spectral clustering of the absolute correlation kernel.
    Spectral(SpectralArgs),
    /// Choose the number of communities by split-half agreement.
    Cv(CvArgs),
    /// Simulation benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Adjusted Rand index between two label files.
    Ari(AriArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseKind {
    Gaussian,
    T,
    TStd,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseKind,
    #[arg(long)]
    dof: Option<f64>,
    /// Constant noise standard deviation with `λ = 1`.
    #[arg(long, conflicts_with = "table1")]
    sigma: Option<f64>,
    /// Random `λ` and `σ²` as in the simulation grid (the default).
    #[arg(long)]
    table1: bool,
    /// Off-diagonal entry of `Ω` when `--sigma` is given.
    #[arg(long, default_value_t = 0.5, requires = "sigma")]
    offdiag: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// `spectral`, or `labels FILE`.
    #[arg(long, num_args = 1..=2, value_names = ["MODE", "FILE"], default_value = "spectral")]
    init: Vec<String>,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Put mass in (0, 0.5) rather than (0.5, 1) on the initial label.
    #[arg(long)]
    paper_literal_init: bool,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Hbcm,
    Spectral,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Hbcm => Method::Hbcm,
            MethodArg::Spectral => Method::Spectral,
        }
    }
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 9)]
    k_max: usize,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "hbcm")]
    method: MethodArg,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// The (N, P, K) grid.
    Table1(Table1Args),
    /// One of the parameter sweeps.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Table1Args {
    /// `all`, or `N,P,K` triples separated by spaces or `;`.
    #[arg(long, num_args = 1.., default_value = "all")]
    cells: Vec<String>,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Record wall-clock times (output is then not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    name: String,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated grid overriding the default one.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct AriArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

/// Failure of a subcommand, carrying its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let err = e.into();
        let numerical = err
            .chain()
            .filter_map(|c| c.downcast_ref::<hbcm::Error>())
            .any(|e| e.is_numerical());
        Failure {
            code: if numerical { 2 } else { 1 },
            err,
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Spectral(a) => spectral_cmd(a),
        Command::Cv(a) => cv(a),
        Command::Bench(BenchCommand::Table1(a)) => bench_table1(a),
        Command::Bench(BenchCommand::Sweep(a)) => bench_sweep(a),
        Command::Ari(a) => ari(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn read_data(path: &Path) -> anyhow::Result<DataMatrix> {
    DataMatrix::read_csv_file(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn generate(a: GenerateArgs) -> CmdResult {
    let noise = match (a.noise, a.dof) {
        (NoiseKind::Gaussian, None) => NoiseSpec::Gaussian,
        (NoiseKind::Gaussian, Some(_)) => bail_usage("--dof only applies to t noise")?,
        (NoiseKind::T, Some(dof)) => NoiseSpec::StudentT { dof },
        (NoiseKind::TStd, Some(dof)) => NoiseSpec::StudentTStandardized { dof },
        (_, None) => bail_usage("t noise needs --dof")?,
    };
    let mut rng = rng_from_seed(a.seed);
    let sys = match a.sigma {
        Some(sigma) if !a.table1 => simulate::homogeneous_system(a.p, a.k, 1.0, sigma, a.offdiag, &mut rng)?,
        _ => simulate::table1_system(a.p, a.k, &mut rng)?,
    };
    let (x, truth) = simulate::generate_dataset(a.n, &sys, noise, &mut rng)?;
    x.write_csv_file(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    truth
        .write_json(&a.truth)
        .with_context(|| format!("writing {}", a.truth.display()))?;
    Ok(())
}

fn bail_usage<T>(msg: &str) -> Result<T, Failure> {
    Err(Failure {
        code: 1,
        err: anyhow::anyhow!("{msg}"),
    })
}

fn fit(a: FitArgs) -> CmdResult {
    let x = read_data(&a.data)?;
    let init = match a.init.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["spectral"] => None,
        ["labels", file] => Some(
            LabelAssignment::read_json(file).with_context(|| format!("reading {file}"))?,
        ),
        other => bail_usage(&format!(
            "--init expects `spectral` or `labels FILE`, got {other:?}"
        ))?,
    };
    let opts = FitOptions {
        max_iters: a.max_iters,
        elbo_rel_tol: a.tol,
        init_mass: if a.paper_literal_init {
            vem::InitMass::PaperLiteral
        } else {
            vem::InitMass::Majority
        },
        ..FitOptions::default()
    };
    let res = vem::fit(&x, a.k, &opts, init.as_ref(), a.seed)?;
    if !res.converged {
        log::warn!("stopped after {} iterations without converging", res.iterations);
    }
    write(&a.out, &res.to_json())?;
    Ok(())
}

fn spectral_cmd(a: SpectralArgs) -> CmdResult {
    let x = read_data(&a.data)?;
    let labels = spectral::spectral_labels(&x, a.k, &Default::default(), a.seed)?;
    write(&a.out, &labels.to_json())?;
    Ok(())
}

fn cv(a: CvArgs) -> CmdResult {
    if a.k_min > a.k_max {
        return bail_usage("--k-min exceeds --k-max");
    }
    let x = read_data(&a.data)?;
    let ks: Vec<usize> = (a.k_min..=a.k_max).collect();
    let report = bench::select_k_cv(&x, &ks, a.m, a.method.into(), &FitOptions::default(), a.seed)?;
    write(&a.out, &report.to_json())?;
    println!("best_k {}", report.best_k);
    Ok(())
}

fn parse_cells(specs: &[String]) -> anyhow::Result<Vec<(usize, usize, usize)>> {
    if specs.len() == 1 && specs[0] == "all" {
        return Ok(bench::table1_grid());
    }
    let mut cells = Vec::new();
    for spec in specs.iter().flat_map(|s| s.split(';')).filter(|s| !s.trim().is_empty()) {
        let parts: Vec<usize> = spec
            .split(',')
            .map(|v| v.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad cell {spec:?}"))?;
        match parts.as_slice() {
            &[n, p, k] => cells.push((n, p, k)),
            _ => bail!("cell {spec:?} is not an N,P,K triple"),
        }
    }
    Ok(cells)
}

/// `dir/name.csv` → `dir/name.summary.csv`.
fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn write_bench(out: &Path, rows: &[bench::BenchRow]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    bench::write_rows_csv(rows, &mut buf)?;
    std::fs::write(out, buf).with_context(|| format!("writing {}", out.display()))?;
    let summary = bench::summarize(rows);
    let mut buf = Vec::new();
    bench::write_summary_csv(&summary, &mut buf)?;
    let path = summary_path(out);
    std::fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
    for s in &summary {
        println!(
            "{} {} mean_ari {} sd {} failed {}/{}",
            s.scenario,
            s.method,
            s.mean_ari.map_or("NA".into(), |v| format!("{v:.3}")),
            s.sd_ari.map_or("NA".into(), |v| format!("{v:.3}")),
            s.failed,
            s.reps
        );
    }
    Ok(())
}

fn bench_table1(a: Table1Args) -> CmdResult {
    let cells = parse_cells(&a.cells).map_err(|err| Failure { code: 1, err })?;
    let mut cfg = BenchConfig::new(a.reps, a.seed);
    cfg.timing = a.timing;
    let rows = bench::bench_table1(&cells, &cfg).map_err(|e| Failure {
        code: 1,
        err: e.into(),
    })?;
    write_bench(&a.out, &rows)?;
    Ok(())
}

fn bench_sweep(a: SweepArgs) -> CmdResult {
    let sweep: Sweep = a.name.parse().map_err(|e: hbcm::Error| Failure {
        code: 1,
        err: e.into(),
    })?;
    let mut cfg = BenchConfig::new(a.reps, a.seed);
    cfg.timing = a.timing;
    let rows = bench::bench_sweep(sweep, a.grid.as_deref(), &cfg);
    write_bench(&a.out, &rows)?;
    Ok(())
}

fn ari(a: AriArgs) -> CmdResult {
    let read = |p: &Path| {
        LabelAssignment::read_json(p).with_context(|| format!("reading {}", p.display()))
    };
    let v = metrics::adjusted_rand_index(&read(&a.a)?, &read(&a.b)?)?;
    println!("{v}");
    Ok(())
}
