//! Test problems: the uniform-grid finite-difference discretization of
//! `−∇·(a∇u) + b u = f` on the unit square or cube with homogeneous Dirichlet
//! data, and the quantized high-contrast random coefficient field.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::cholesky;
use crate::diagnostics::{power_norm, PowerOptions};
use crate::krylov::{cg_solve_operator, PcgOptions};
use crate::rng::{self, Stream};
use crate::sparse::SymSparseMatrix;
use crate::{Error, Result};

/// Uniform grid with `n = 2^L m` intervals per dimension. The unknowns are
/// the `(n − 1)^dim` interior lattice points, numbered with the first
/// coordinate varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    pub levels: usize,
}

impl GridSpec {
    pub fn new(dim: usize, n: usize, m: usize) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if m < 2 {
            return Err(Error::Config(format!(
                "leaf size m must be at least 2, got {m}"
            )));
        }
        if !n.is_multiple_of(m) || !(n / m).is_power_of_two() || n / m < 2 {
            return Err(Error::Config(format!(
                "grid size n = {n} is not 2^L * {m} with L >= 1"
            )));
        }
        let levels = (n / m).trailing_zeros() as usize;
        Ok(Self { dim, n, m, levels })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Interior points per dimension, `n − 1`.
    pub fn side(&self) -> usize {
        self.n - 1
    }

    pub fn num_dofs(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    /// Lattice coordinates (each in `1..n`) of a DOF; unused axes are 0.
    #[inline]
    pub fn coords(&self, dof: usize) -> [usize; 3] {
        let s = self.side();
        let mut c = [0; 3];
        let mut r = dof;
        for c_d in c.iter_mut().take(self.dim) {
            *c_d = r % s + 1;
            r /= s;
        }
        c
    }

    /// Inverse of [`GridSpec::coords`]; `None` for points off the interior.
    #[inline]
    pub fn dof(&self, c: [usize; 3]) -> Option<usize> {
        let s = self.side();
        let mut idx = 0;
        for d in (0..self.dim).rev() {
            if c[d] == 0 || c[d] >= self.n {
                return None;
            }
            idx = idx * s + (c[d] - 1);
        }
        Some(idx)
    }
}

/// How the coefficient at a half point is formed from the two adjacent
/// nodal values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxAverage {
    #[default]
    Arithmetic,
    Harmonic,
}

impl FluxAverage {
    #[inline]
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            FluxAverage::Arithmetic => 0.5 * (a + b),
            FluxAverage::Harmonic => 2.0 * a * b / (a + b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub seed: u64,
    pub contrast: f64,
    pub smoothing_width: f64,
}

impl CoefficientField {
    /// A constant field, handy for model problems.
    pub fn constant(spec: GridSpec, value: f64) -> Self {
        Self {
            spec,
            values: vec![value; spec.num_dofs()],
            seed: 0,
            contrast: 1.0,
            smoothing_width: 0.0,
        }
    }

    pub fn low_value(&self) -> f64 {
        self.contrast.powf(-0.5)
    }

    pub fn high_value(&self) -> f64 {
        self.contrast.sqrt()
    }

    pub fn metadata(&self, flux: FluxAverage) -> ProblemMetadata {
        ProblemMetadata {
            dim: self.spec.dim,
            n: self.spec.n,
            m: self.spec.m,
            levels: self.spec.levels,
            seed: self.seed,
            contrast: self.contrast,
            smoothing_width: self.smoothing_width,
            generator: rng::GENERATOR.to_string(),
            kernel: "gaussian, std = smoothing_width*h, truncated at 4 std, reflective boundary"
                .to_string(),
            median: "lower".to_string(),
            flux,
            stencil_scaling: "h^2".to_string(),
        }
    }

    pub fn write_values<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }
}

/// JSON sidecar describing how a field and operator were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "L")]
    pub levels: usize,
    pub seed: u64,
    pub contrast: f64,
    pub smoothing_width: f64,
    pub generator: String,
    pub kernel: String,
    pub median: String,
    pub flux: FluxAverage,
    pub stencil_scaling: String,
}

/// Quantized high-contrast random field: uniform samples, Gaussian smoothing
/// with standard deviation `smoothing_width · h`, then a split at the lower
/// median into `σ^{-1/2}` (at or below) and `σ^{1/2}` (above).
pub fn generate_field(
    spec: GridSpec,
    seed: u64,
    contrast: f64,
    smoothing_width: f64,
) -> Result<CoefficientField> {
    let spec = GridSpec::new(spec.dim, spec.n, spec.m)?;
    if !(contrast >= 1.0) {
        return Err(Error::Config(format!(
            "contrast must be >= 1, got {contrast}"
        )));
    }
    if !(smoothing_width > 0.0) {
        return Err(Error::Config(format!(
            "smoothing width must be positive, got {smoothing_width}"
        )));
    }
    let total = spec.num_dofs();
    let mut rng = rng::stream(seed, Stream::Field);
    let mut values: Vec<f64> = (0..total).map(|_| rng.random::<f64>()).collect();

    let kernel = gaussian_kernel(smoothing_width);
    let side = spec.side();
    let mut scratch = vec![0.0; side];
    let mut out = vec![0.0; side];
    for axis in 0..spec.dim {
        let stride = side.pow(axis as u32);
        for start in line_starts(side, spec.dim, axis) {
            for (k, s) in scratch.iter_mut().enumerate() {
                *s = values[start + k * stride];
            }
            convolve_reflect(&scratch, &kernel, &mut out);
            for (k, o) in out.iter().enumerate() {
                values[start + k * stride] = *o;
            }
        }
    }

    let mut sorted = values.clone();
    let k = total.div_ceil(2);
    let (_, &mut mu, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
    let (lo, hi) = (contrast.powf(-0.5), contrast.sqrt());
    for v in &mut values {
        *v = if *v <= mu { lo } else { hi };
    }
    Ok(CoefficientField {
        spec,
        values,
        seed,
        contrast,
        smoothing_width,
    })
}

fn gaussian_kernel(width: f64) -> Vec<f64> {
    let radius = (4.0 * width).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t as f64).powi(2) / (2.0 * width * width)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Offsets of the first element of every grid line along `axis`.
fn line_starts(side: usize, dim: usize, axis: usize) -> Vec<usize> {
    let stride = side.pow(axis as u32);
    let total = side.pow(dim as u32);
    (0..total)
        .filter(|&i| (i / stride).is_multiple_of(side))
        .collect()
}

/// Half-sample symmetric reflection: `… x1 x0 | x0 x1 …`.
fn reflect(mut i: isize, len: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= len {
            i = 2 * len - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn convolve_reflect(x: &[f64], kernel: &[f64], out: &mut [f64]) {
    let len = x.len() as isize;
    let r = (kernel.len() / 2) as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, w) in kernel.iter().enumerate() {
            acc += w * x[reflect(i as isize + t as isize - r, len)];
        }
        *o = acc;
    }
}

/// Five-point (2D) or seven-point (3D) finite-difference operator, scaled by
/// `h²`, with arithmetic-mean half-point coefficients.
pub fn assemble_operator(field: &CoefficientField, b: f64) -> Result<SymSparseMatrix> {
    assemble_operator_with(field, b, FluxAverage::Arithmetic)
}

/// As [`assemble_operator`] with a chosen half-point average. A neighbor
/// outside the domain contributes the DOF's own coefficient to the diagonal
/// and no off-diagonal entry.
pub fn assemble_operator_with(
    field: &CoefficientField,
    b: f64,
    flux: FluxAverage,
) -> Result<SymSparseMatrix> {
    let spec = field.spec;
    if field.values.len() != spec.num_dofs() {
        return Err(Error::Config(format!(
            "field has {} values, grid expects {}",
            field.values.len(),
            spec.num_dofs()
        )));
    }
    if !(b >= 0.0) {
        return Err(Error::Config(format!(
            "reaction coefficient must be >= 0, got {b}"
        )));
    }
    if field.values.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config("coefficient field must be positive".into()));
    }
    let h2 = spec.h() * spec.h();
    let mut triplets = Vec::with_capacity(spec.num_dofs() * (spec.dim + 1));
    for dof in 0..spec.num_dofs() {
        let c = spec.coords(dof);
        let a = field.values[dof];
        let mut diag = b * h2;
        for d in 0..spec.dim {
            for step in [-1isize, 1] {
                let mut nb = c;
                nb[d] = (c[d] as isize + step) as usize;
                match spec.dof(nb) {
                    Some(j) => {
                        let w = flux.combine(a, field.values[j]);
                        diag += w;
                        if j < dof {
                            triplets.push((dof, j, -w));
                        }
                    }
                    None => diag += a,
                }
            }
        }
        triplets.push((dof, dof, diag));
    }
    Ok(SymSparseMatrix::from_triplets(spec.num_dofs(), triplets))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionEstimate {
    pub kappa: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
}

const DENSE_INVERSE_LIMIT: usize = 4096;

/// `λ_max / λ_min` by power iteration on `A` and on `A⁻¹`. The inverse is
/// applied with a dense Cholesky factor for small orders and with CG
/// otherwise.
pub fn estimate_operator_condition(a: &SymSparseMatrix, seed: u64) -> Result<ConditionEstimate> {
    let n = a.order();
    let opts = PowerOptions {
        rel_tol: 1e-4,
        maxit: 5000,
        seed,
        stream: Stream::Condition,
    };
    let top = power_norm(|x, y| a.matvec(x, y), n, &opts);
    if !top.converged {
        return Err(Error::Estimator {
            what: "largest-eigenvalue power iteration",
            iterations: top.iterations,
            partial: top.value,
        });
    }
    let bottom = if n <= DENSE_INVERSE_LIMIT {
        let l = cholesky(&a.to_dense())
            .map_err(|e| Error::Config(format!("operator is not SPD: {e}")))?;
        power_norm(
            |x, y| {
                y.copy_from_slice(x);
                l.solve_in_place(y);
                l.solve_t_in_place(y);
            },
            n,
            &opts,
        )
    } else {
        let cg_opts = PcgOptions {
            tol: 1e-12,
            maxit: 20 * n,
            ..PcgOptions::default()
        };
        let mut failure = None;
        let est = power_norm(
            |x, y| match cg_solve_operator(|v, w| a.matvec(v, w), x, &cg_opts) {
                Ok(sol) => y.copy_from_slice(&sol),
                Err(e) => {
                    failure.get_or_insert(e);
                    y.iter_mut().for_each(|v| *v = 0.0);
                }
            },
            n,
            &opts,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        est
    };
    if !bottom.converged {
        return Err(Error::Estimator {
            what: "inverse power iteration",
            iterations: bottom.iterations,
            partial: bottom.value,
        });
    }
    let lambda_max = top.value;
    let lambda_min = 1.0 / bottom.value;
    Ok(ConditionEstimate {
        kappa: lambda_max / lambda_min,
        lambda_max,
        lambda_min,
    })
}
