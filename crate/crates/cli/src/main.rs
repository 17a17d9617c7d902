//! Command-line front end: problem generation, single factorizations and
//! solves, benchmark sweeps and scaling fits.
//!
//! Exit codes: 0 success, 2 loss of positive definiteness, 64 usage error,
//! 1 anything else.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use hifde::bench::{self, check_desk_scale, BenchConfig, BenchRow, CSV_HEADER};
use hifde::grid::{assemble_operator_with, FluxAverage};
use hifde::krylov::{pcg, PcgOptions};
use hifde::rng::{self, Stream};
use hifde::{factorize, generate_field, Error, GridSpec, Method, SymSparseMatrix};

const SMOOTHING_WIDTH: f64 = 4.0;

#[derive(Parser, Debug)]
#[command(
    name = "hifde",
    version,
    about = "Hierarchical interpolative factorization benchmarks"
)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Opts {
    /// Spatial dimension, 2 or 3.
    #[arg(long, global = true, default_value_t = 2, value_parser = clap::value_parser!(u8).range(2..=3))]
    dim: u8,
    /// Grid intervals per dimension (power of two); a comma-separated list for `bench`.
    #[arg(long, global = true, value_delimiter = ',')]
    n: Vec<usize>,
    /// Leaf cell size.
    #[arg(long, global = true, default_value_t = 8)]
    m: usize,
    /// ID tolerance; a comma-separated list for `bench` [default: 1e-6].
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Vec<f64>,
    /// hif, phif or exact; a comma-separated list for `bench` [default: phif, both for `bench`].
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_method)]
    method: Vec<Method>,
    /// Problem seed (first seed for `bench`).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Coefficient contrast σ.
    #[arg(long, global = true, default_value = "1e4")]
    contrast: f64,
    /// PCG relative residual target.
    #[arg(long, global = true, default_value = "1e-12")]
    tol: f64,
    /// PCG iteration cap.
    #[arg(long, global = true, default_value_t = 500)]
    maxit: usize,
    /// Output file (directory for `gen`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of consecutive seeds for `bench`, starting at --seed.
    #[arg(long, global = true, default_value_t = 1)]
    seeds: u64,
    /// Allow sizes beyond the desk-scale limits.
    #[arg(long, global = true)]
    large: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the coefficient field, the matrix in Matrix Market format and a metadata sidecar.
    Gen,
    /// Factor one problem and print the factorization statistics as JSON.
    Factor,
    /// Factor one problem and solve with PCG preconditioned by the factorization.
    Solve,
    /// Run a benchmark sweep and write one CSV row per case.
    Bench {
        /// JSON benchmark configuration; replaces the problem flags.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Median scaling points and log-log slopes from a benchmark CSV.
    Scaling {
        /// Benchmark CSV produced by `bench`.
        csv: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    NotSpd(String),
    Other(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotSpd(_) => CliError::NotSpd(e.to_string()),
            Error::Config(_) => CliError::Usage(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

struct Problem {
    spec: GridSpec,
    a: SymSparseMatrix,
}

impl Opts {
    fn dim(&self) -> usize {
        self.dim as usize
    }

    fn single_n(&self) -> CliResult<usize> {
        match self.n.as_slice() {
            [n] => {
                check_desk_scale(self.dim(), *n, self.large)?;
                Ok(*n)
            }
            [] => Err(CliError::Usage("--n is required".into())),
            _ => Err(CliError::Usage("this command takes a single --n".into())),
        }
    }

    fn single_eps(&self) -> CliResult<f64> {
        match self.eps.as_slice() {
            [] => Ok(1e-6),
            [e] => Ok(*e),
            _ => Err(CliError::Usage("this command takes a single --eps".into())),
        }
    }

    fn single_method(&self) -> CliResult<Method> {
        match self.method.as_slice() {
            [] => Ok(Method::Phif),
            [m] => Ok(*m),
            _ => Err(CliError::Usage(
                "this command takes a single --method".into(),
            )),
        }
    }

    fn problem(&self) -> CliResult<Problem> {
        let spec = GridSpec::new(self.dim(), self.single_n()?, self.m)?;
        let field = generate_field(spec, self.seed, self.contrast, SMOOTHING_WIDTH)?;
        let a = assemble_operator_with(&field, 0.0, FluxAverage::default())?;
        Ok(Problem { spec, a })
    }
}

/// Writes `text` to `out`, or to stdout when no file is given.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_gen(o: &Opts) -> CliResult<()> {
    let spec = GridSpec::new(o.dim(), o.single_n()?, o.m)?;
    let field = generate_field(spec, o.seed, o.contrast, SMOOTHING_WIDTH)?;
    let flux = FluxAverage::default();
    let a = assemble_operator_with(&field, 0.0, flux)?;
    let dir = o.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let mut w = BufWriter::new(File::create(dir.join("field.txt"))?);
    field.write_values(&mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("matrix.mtx"))?);
    a.write_matrix_market(&mut w)?;
    w.flush()?;
    fs::write(
        dir.join("problem.json"),
        serde_json::to_string_pretty(&field.metadata(flux))?,
    )?;
    println!(
        "{}",
        json!({
            "dir": dir,
            "N": a.order(),
            "nnz_lower": a.nnz_lower(),
            "levels": spec.levels,
        })
    );
    Ok(())
}

fn cmd_factor(o: &Opts) -> CliResult<()> {
    let p = o.problem()?;
    let (eps, method) = (o.single_eps()?, o.single_method()?);
    match factorize(&p.a, &p.spec, eps, method) {
        Ok(f) => {
            let mut v = serde_json::to_value(f.stats())?;
            v["status"] = json!("ok");
            emit(o.out.as_deref(), &serde_json::to_string_pretty(&v)?)
        }
        Err(Error::NotSpd(fail)) => {
            let mut v = serde_json::to_value(&fail.stats)?;
            v["status"] = json!("not-spd");
            v["failure"] = json!({
                "level": fail.level,
                "stage": fail.stage,
                "group": fail.group,
                "pivot": fail.pivot,
            });
            emit(o.out.as_deref(), &serde_json::to_string_pretty(&v)?)?;
            Err(CliError::NotSpd(fail.to_string()))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_solve(o: &Opts) -> CliResult<()> {
    let p = o.problem()?;
    let (eps, method) = (o.single_eps()?, o.single_method()?);
    let t = Instant::now();
    let f = factorize(&p.a, &p.spec, eps, method)?;
    let t_factor = t.elapsed().as_secs_f64();
    let b = rng::normal_vec(&mut rng::stream(o.seed, Stream::RightHandSide), p.a.order());
    let opts = PcgOptions {
        tol: o.tol,
        maxit: o.maxit,
        ..PcgOptions::default()
    };
    let (_, report) = pcg(&p.a, &b, Some(&f), &opts)?;
    if let Some(path) = &o.out {
        report.write_history_csv(BufWriter::new(File::create(path)?))?;
    }
    let v: Value = json!({
        "method": method,
        "eps": f.eps(),
        "dim": p.spec.dim,
        "n": p.spec.n,
        "N": p.a.order(),
        "seed": o.seed,
        "SL": f.root_size(),
        "t_factor_s": t_factor,
        "n_i": report.iterations,
        "rel_residual": report.rel_residual,
        "t_solve_s": report.wall_time_s,
        "status": if report.hit_maxit { "maxit" } else { "ok" },
    });
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn bench_config(o: &Opts, config: Option<&Path>) -> CliResult<BenchConfig> {
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let mut cfg: BenchConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            cfg.large |= o.large;
            cfg
        }
        None => {
            if o.n.is_empty() {
                return Err(CliError::Usage("--n or --config is required".into()));
            }
            if o.seeds == 0 {
                return Err(CliError::Usage("--seeds must be at least 1".into()));
            }
            BenchConfig {
                dim: o.dim(),
                sizes: o.n.clone(),
                eps: if o.eps.is_empty() {
                    vec![1e-6]
                } else {
                    o.eps.clone()
                },
                methods: if o.method.is_empty() {
                    vec![Method::Hif, Method::Phif]
                } else {
                    o.method.clone()
                },
                seeds: (o.seed..o.seed + o.seeds).collect(),
                m: o.m,
                contrast: o.contrast,
                smoothing_width: SMOOTHING_WIDTH,
                tol: o.tol,
                maxit: o.maxit,
                flux: FluxAverage::default(),
                output: None,
                large: o.large,
            }
        }
    };
    if o.out.is_some() {
        cfg.output = o.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_bench(o: &Opts, config: Option<&Path>) -> CliResult<()> {
    let cfg = bench_config(o, config)?;
    let progress = |r: &BenchRow| {
        eprintln!(
            "{} eps={:e} N={} seed={} {}",
            r.method,
            r.eps,
            r.big_n,
            r.seed,
            serde_json::to_string(&r.status)
                .unwrap_or_default()
                .trim_matches('"')
        );
    };
    let rows = bench::run_benchmark(&cfg, progress)?;
    if cfg.output.is_none() {
        let out = io::stdout();
        let mut lock = out.lock();
        writeln!(lock, "{CSV_HEADER}")?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(lock);
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_scaling(o: &Opts, csv_path: &Path) -> CliResult<()> {
    let rows = bench::read_rows(csv_path)?;
    let report = bench::emit_scaling(&rows).map_err(|e| CliError::Other(e.to_string()))?;
    let mut points = Vec::new();
    report.write_points_csv(&mut points)?;
    let mut fits = Vec::new();
    report.write_fits_csv(&mut fits)?;
    let (points, fits) = (
        String::from_utf8_lossy(&points),
        String::from_utf8_lossy(&fits),
    );
    match &o.out {
        Some(path) => {
            fs::write(path, points.as_bytes())?;
            let mut fp = path.as_os_str().to_owned();
            fp.push(".fits.csv");
            fs::write(PathBuf::from(fp), fits.as_bytes())?;
        }
        None => print!("{points}\n{fits}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let o = &cli.opts;
    match &cli.command {
        Command::Gen => cmd_gen(o),
        Command::Factor => cmd_factor(o),
        Command::Solve => cmd_solve(o),
        Command::Bench { config } => cmd_bench(o, config.as_deref()),
        Command::Scaling { csv } => cmd_scaling(o, csv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(64),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(64)
        }
        Err(CliError::NotSpd(msg)) => {
            eprintln!("not-spd: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
