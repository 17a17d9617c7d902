//! Benchmark protocol: generate, factor, estimate errors, solve, and record
//! one CSV row per run; log-log scaling fits over the recorded rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{estimate_apply_error, estimate_solve_error};
use crate::factor::{factorize, Factorization, Method};
use crate::grid::{assemble_operator_with, generate_field, FluxAverage, GridSpec};
use crate::krylov::{pcg, PcgOptions, SolveReport};
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Largest grid size `n` per dimension (2D, 3D) run without opting in to
/// paper-scale problems.
pub const DESK_MAX_N: [usize; 2] = [512, 64];

/// Refuses sizes beyond [`DESK_MAX_N`] unless `large` is set.
pub fn check_desk_scale(dim: usize, n: usize, large: bool) -> Result<()> {
    let limit = if dim == 3 {
        DESK_MAX_N[1]
    } else {
        DESK_MAX_N[0]
    };
    if n > limit && !large {
        return Err(Error::Config(format!(
            "n = {n} exceeds the desk-scale limit {limit} for {dim}D; opt in with large"
        )));
    }
    Ok(())
}

pub const CSV_HEADER: &str =
    "method,eps,dim,n,N,seed,SL,e_a,e_s,n_i,t_factor_s,t_apply_s,mem_bytes,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "not-spd")]
    NotSpd,
    #[serde(rename = "maxit")]
    Maxit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub eps: f64,
    pub dim: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub seed: u64,
    #[serde(rename = "SL")]
    pub sl: Option<usize>,
    pub e_a: Option<f64>,
    pub e_s: Option<f64>,
    pub n_i: Option<usize>,
    pub t_factor_s: Option<f64>,
    pub t_apply_s: Option<f64>,
    pub mem_bytes: Option<usize>,
    pub status: Status,
}

fn default_m() -> usize {
    8
}
fn default_contrast() -> f64 {
    1e4
}
fn default_width() -> f64 {
    4.0
}
fn default_tol() -> f64 {
    1e-12
}
fn default_maxit() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub dim: usize,
    /// Grid sizes `n` (intervals per dimension).
    pub sizes: Vec<usize>,
    pub eps: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default = "default_width")]
    pub smoothing_width: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_maxit")]
    pub maxit: usize,
    #[serde(default)]
    pub flux: FluxAverage,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Allow sizes beyond the desk-scale limits.
    #[serde(default)]
    pub large: bool,
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty()
            || self.eps.is_empty()
            || self.methods.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::Config(
                "sizes, eps, methods and seeds must all be non-empty".into(),
            ));
        }
        for &n in &self.sizes {
            GridSpec::new(self.dim, n, self.m)?;
            check_desk_scale(self.dim, n, self.large)?;
        }
        if self.eps.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            return Err(Error::Config("tolerances must be finite and >= 0".into()));
        }
        if !(self.tol > 0.0) || self.maxit == 0 {
            return Err(Error::Config(
                "PCG tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }

    fn pcg_options(&self) -> PcgOptions {
        PcgOptions {
            tol: self.tol,
            maxit: self.maxit,
            ..PcgOptions::default()
        }
    }
}

/// Provenance written next to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata<'a> {
    pub generator: &'static str,
    pub m: usize,
    pub contrast: f64,
    pub smoothing_width: f64,
    pub flux: FluxAverage,
    pub tol: f64,
    pub maxit: usize,
    pub rhs: &'static str,
    pub estimator: &'static str,
    pub config: &'a BenchConfig,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Everything produced by one factor-and-solve run.
pub struct CaseOutcome {
    pub row: BenchRow,
    pub factorization: Option<Factorization>,
    pub solve: Option<SolveReport>,
}

/// Runs one (method, ε, n, seed) case of the protocol.
pub fn run_case(
    config: &BenchConfig,
    n: usize,
    eps: f64,
    method: Method,
    seed: u64,
) -> Result<CaseOutcome> {
    let spec = GridSpec::new(config.dim, n, config.m)?;
    let field = generate_field(spec, seed, config.contrast, config.smoothing_width)?;
    let a = assemble_operator_with(&field, 0.0, config.flux)?;
    let mut row = BenchRow {
        method,
        eps,
        dim: spec.dim,
        n,
        big_n: spec.num_dofs(),
        seed,
        sl: None,
        e_a: None,
        e_s: None,
        n_i: None,
        t_factor_s: None,
        t_apply_s: None,
        mem_bytes: None,
        status: Status::Ok,
    };
    let t = Instant::now();
    let f = match factorize(&a, &spec, eps, method) {
        Ok(f) => f,
        Err(Error::NotSpd(_)) => {
            row.t_factor_s = Some(t.elapsed().as_secs_f64());
            row.status = Status::NotSpd;
            return Ok(CaseOutcome {
                row,
                factorization: None,
                solve: None,
            });
        }
        Err(e) => return Err(e),
    };
    row.t_factor_s = Some(t.elapsed().as_secs_f64());
    row.sl = Some(f.root_size());
    row.mem_bytes = Some(f.memory_bytes());
    row.e_a = Some(estimate_apply_error(&a, &f, seed).value);
    row.e_s = Some(estimate_solve_error(&a, &f, seed).value);

    let b = rng::normal_vec(&mut rng::stream(seed, Stream::RightHandSide), a.order());
    let t = Instant::now();
    let _ = f.apply_inverse(&b);
    row.t_apply_s = Some(t.elapsed().as_secs_f64());

    let (_, report) = pcg(&a, &b, Some(&f), &config.pcg_options())?;
    row.n_i = Some(report.iterations);
    if report.hit_maxit {
        row.status = Status::Maxit;
    }
    Ok(CaseOutcome {
        row,
        factorization: Some(f),
        solve: Some(report),
    })
}

/// Runs every configured case, appending each row to the output CSV (if
/// any) as soon as it is finished. `progress` sees every row.
pub fn run_benchmark(
    config: &BenchConfig,
    mut progress: impl FnMut(&BenchRow),
) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let mut writer = match &config.output {
        Some(path) => {
            let meta = RunMetadata {
                generator: rng::GENERATOR,
                m: config.m,
                contrast: config.contrast,
                smoothing_width: config.smoothing_width,
                flux: config.flux,
                tol: config.tol,
                maxit: config.maxit,
                rhs: "standard normal",
                estimator: "power iteration, relative tolerance 1e-2, at most 200 steps",
                config,
            };
            std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{CSV_HEADER}")?;
            w.flush()?;
            Some(csv::WriterBuilder::new().has_headers(false).from_writer(w))
        }
        None => None,
    };
    let mut rows = Vec::new();
    for &n in &config.sizes {
        for &eps in &config.eps {
            for &method in &config.methods {
                for &seed in &config.seeds {
                    let row = run_case(config, n, eps, method, seed)?.row;
                    if let Some(w) = writer.as_mut() {
                        w.serialize(&row)?;
                        w.flush()?;
                    }
                    progress(&row);
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}

pub fn read_rows<P: AsRef<Path>>(path: P) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<BenchRow>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub method: Method,
    pub eps: f64,
    pub dim: usize,
    pub factor_time: f64,
    pub apply_time: f64,
    pub memory: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesFit {
    pub method: Method,
    pub eps: f64,
    pub dim: usize,
    pub sizes: usize,
    pub factor_time_slope: f64,
    pub apply_time_slope: f64,
    pub memory_slope: f64,
    pub time_reference: String,
    pub memory_reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub fits: Vec<SeriesFit>,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Medians per (method, ε, dim, N) over completed rows and log-log slopes
/// per (method, ε, dim) series.
pub fn emit_scaling(rows: &[BenchRow]) -> Result<ScalingReport> {
    type Key = (Method, u64, usize);
    let mut groups: BTreeMap<(Key, usize), [Vec<f64>; 3]> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status != Status::NotSpd) {
        let (Some(tf), Some(ta), Some(mem)) = (r.t_factor_s, r.t_apply_s, r.mem_bytes) else {
            continue;
        };
        let key = ((r.method, r.eps.to_bits(), r.dim), r.big_n);
        let e = groups.entry(key).or_default();
        e[0].push(tf);
        e[1].push(ta);
        e[2].push(mem as f64);
    }
    let mut sizes: Vec<usize> = groups.keys().map(|k| k.1).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 2 {
        return Err(Error::Config(format!(
            "scaling needs rows from at least 2 problem sizes, found {}",
            sizes.len()
        )));
    }
    let mut points = Vec::new();
    let mut series: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (((method, eps_bits, dim), big_n), mut vals) in groups {
        series
            .entry((method, eps_bits, dim))
            .or_default()
            .push(points.len());
        points.push(ScalingPoint {
            big_n,
            method,
            eps: f64::from_bits(eps_bits),
            dim,
            factor_time: median(&mut vals[0]),
            apply_time: median(&mut vals[1]),
            memory: median(&mut vals[2]),
        });
    }
    let mut fits = Vec::new();
    for ((method, eps_bits, dim), idx) in series {
        if idx.len() < 2 {
            continue;
        }
        let pts: Vec<&ScalingPoint> = idx.iter().map(|&i| &points[i]).collect();
        let x: Vec<f64> = pts.iter().map(|p| p.big_n as f64).collect();
        let col = |f: fn(&ScalingPoint) -> f64| pts.iter().map(|p| f(p)).collect::<Vec<f64>>();
        let (time_reference, memory_reference) = if dim == 3 {
            ("1, 3/2", "1, 4/3")
        } else {
            ("1", "1")
        };
        fits.push(SeriesFit {
            method,
            eps: f64::from_bits(eps_bits),
            dim,
            sizes: idx.len(),
            factor_time_slope: loglog_slope(&x, &col(|p| p.factor_time)),
            apply_time_slope: loglog_slope(&x, &col(|p| p.apply_time)),
            memory_slope: loglog_slope(&x, &col(|p| p.memory)),
            time_reference: time_reference.into(),
            memory_reference: memory_reference.into(),
        });
    }
    Ok(ScalingReport { points, fits })
}

impl ScalingReport {
    pub fn write_points_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.points {
            out.serialize(p)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_fits_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for f in &self.fits {
            out.serialize(f)?;
        }
        out.flush()?;
        Ok(())
    }
}
