//! Hierarchical interpolative factorization and its block-Jacobi
//! preconditioned variant.
//!
//! Level by level the factorization eliminates cell interiors, optionally
//! rescales every remaining group to a unit diagonal block, and compresses
//! the separators with interpolative decompositions. Writing `P` for the
//! product of all stored records in the order they were produced, the
//! factorization leaves `Pᵀ A P ≈ A_L` with `A_L` the identity outside the
//! root set `S_L` and `A_L = B_L B_Lᵀ` on it, so that `A ≈ F = G Gᵀ` with
//! `G = P⁻ᵀ B_L`.

mod live;
mod record;
mod stages;

use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dense::{cholesky, LowerTriangular, Mat};
use crate::grid::GridSpec;
use crate::hierarchy::classify_active;
use crate::sparse::SymSparseMatrix;
use crate::{Error, Result};

pub use live::LiveMatrix;
pub use record::{FactorRecord, RecordKind};
pub use stages::{
    eliminate_cells, precondition_blocks, skeletonize_separators, skeletonize_separators_with,
    StageFailure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hif,
    Phif,
    /// No compression: IDs at zero tolerance, so `F = A` up to round-off.
    Exact,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hif => "hif",
            Method::Phif => "phif",
            Method::Exact => "exact",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hif" => Ok(Method::Hif),
            "phif" => Ok(Method::Phif),
            "exact" => Ok(Method::Exact),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Eliminate,
    Precondition,
    Skeletonize,
    Root,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Eliminate => "eliminate",
            Stage::Precondition => "precondition",
            Stage::Skeletonize => "skeletonize",
            Stage::Root => "root",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NotSpdEvent {
    pub stage: Stage,
    pub group: usize,
    pub pivot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    /// Active DOFs entering the level.
    pub active: usize,
    pub p: usize,
    pub q: usize,
    pub r: usize,
    pub rank_max: usize,
    pub rank_mean: f64,
    pub redundant: usize,
    pub t_eliminate_s: f64,
    pub t_precondition_s: f64,
    pub t_skeletonize_s: f64,
    pub not_spd: Vec<NotSpdEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorStats {
    pub method: Method,
    pub eps: f64,
    pub dim: usize,
    pub n: usize,
    pub m: usize,
    pub order: usize,
    pub levels: Vec<LevelStats>,
    pub root_size: usize,
    pub t_root_s: f64,
    pub t_factor_s: f64,
    /// Stored records plus the root factor.
    pub factor_bytes: usize,
    /// Largest size of the live matrix between stages.
    pub peak_live_bytes: usize,
    pub memory_bytes: usize,
}

impl FactorStats {
    /// Copy with every timing zeroed, for run-to-run comparisons.
    pub fn without_timings(&self) -> Self {
        let mut s = self.clone();
        s.t_root_s = 0.0;
        s.t_factor_s = 0.0;
        for l in &mut s.levels {
            l.t_eliminate_s = 0.0;
            l.t_precondition_s = 0.0;
            l.t_skeletonize_s = 0.0;
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Loss of positive definiteness during factorization, with the statistics
/// gathered up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct NotSpdFailure {
    pub method: Method,
    pub eps: f64,
    pub level: usize,
    pub stage: Stage,
    pub group: usize,
    pub pivot: usize,
    pub stats: FactorStats,
}

impl fmt::Display for NotSpdFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} factorization (eps = {:e}) lost positive definiteness at level {}, {} stage, group {} (pivot {})",
            self.method, self.eps, self.level, self.stage, self.group, self.pivot
        )
    }
}

impl std::error::Error for NotSpdFailure {}

/// Completed factorization `F = G Gᵀ ≈ A`.
#[derive(Debug, Clone)]
pub struct Factorization {
    method: Method,
    eps: f64,
    spec: GridSpec,
    records: Vec<FactorRecord>,
    root: Vec<u32>,
    root_factor: LowerTriangular,
    stats: FactorStats,
}

const ROOT_CONDITION_LIMIT: usize = 5000;

/// Factors `a`, assembled on the grid `spec`, to tolerance `eps`.
pub fn factorize(
    a: &SymSparseMatrix,
    spec: &GridSpec,
    eps: f64,
    method: Method,
) -> Result<Factorization> {
    let spec = GridSpec::new(spec.dim, spec.n, spec.m)?;
    if a.order() != spec.num_dofs() {
        return Err(Error::Config(format!(
            "matrix order {} does not match the {} DOFs of the grid",
            a.order(),
            spec.num_dofs()
        )));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!(
            "tolerance must be finite and >= 0, got {eps}"
        )));
    }
    let eps = if method == Method::Exact { 0.0 } else { eps };
    let start = Instant::now();
    let mut stats = FactorStats {
        method,
        eps,
        dim: spec.dim,
        n: spec.n,
        m: spec.m,
        order: a.order(),
        levels: Vec::with_capacity(spec.levels),
        root_size: 0,
        t_root_s: 0.0,
        t_factor_s: 0.0,
        factor_bytes: 0,
        peak_live_bytes: 0,
        memory_bytes: 0,
    };
    let mut live = LiveMatrix::from_sparse(a);
    let mut records: Vec<FactorRecord> = Vec::new();
    let mut factor_bytes = 0;
    let mut peak_live = live.bytes();

    let fail =
        |mut stats: FactorStats, level: usize, stage: Stage, e: StageFailure, t0: Instant| {
            stats.t_factor_s = t0.elapsed().as_secs_f64();
            if let Some(l) = stats.levels.last_mut() {
                l.not_spd.push(NotSpdEvent {
                    stage,
                    group: e.group,
                    pivot: e.pivot,
                });
            }
            Error::NotSpd(Box::new(NotSpdFailure {
                method,
                eps,
                level,
                stage,
                group: e.group,
                pivot: e.pivot,
                stats,
            }))
        };

    for level in 0..spec.levels {
        let active = live.active_indices();
        let part = classify_active(&spec, level, &active)?;
        stats.levels.push(LevelStats {
            level,
            active: active.len(),
            p: part.p(),
            q: part.q(),
            r: part.r(),
            rank_max: 0,
            rank_mean: 0.0,
            redundant: 0,
            t_eliminate_s: 0.0,
            t_precondition_s: 0.0,
            t_skeletonize_s: 0.0,
            not_spd: Vec::new(),
        });

        let t = Instant::now();
        let recs = match eliminate_cells(&mut live, &part.interior, level) {
            Ok(r) => r,
            Err(e) => return Err(fail(stats, level, Stage::Eliminate, e, start)),
        };
        stats.levels[level].t_eliminate_s = t.elapsed().as_secs_f64();
        factor_bytes += recs.iter().map(FactorRecord::bytes).sum::<usize>();
        records.extend(recs);
        peak_live = peak_live.max(live.bytes());

        if method == Method::Phif {
            let t = Instant::now();
            let recs = match precondition_blocks(&mut live, &part.precond, level) {
                Ok(r) => r,
                Err(e) => return Err(fail(stats, level, Stage::Precondition, e, start)),
            };
            stats.levels[level].t_precondition_s = t.elapsed().as_secs_f64();
            factor_bytes += recs.iter().map(FactorRecord::bytes).sum::<usize>();
            records.extend(recs);
        }

        let t = Instant::now();
        let recs = match skeletonize_separators(&mut live, &part.skeleton, level, eps) {
            Ok(r) => r,
            Err(e) => return Err(fail(stats, level, Stage::Skeletonize, e, start)),
        };
        stats.levels[level].t_skeletonize_s = t.elapsed().as_secs_f64();
        let ls = &mut stats.levels[level];
        let mut redundant = 0;
        let mut ranks: Vec<usize> = part.skeleton.iter().map(|g| g.indices.len()).collect();
        // Records come in group order but skip uncompressed groups; match
        // them back by their first index.
        let mut gi = 0;
        for rec in &recs {
            if let FactorRecord::Skeletonize {
                redundant: rd,
                skeleton: sk,
                ..
            } = rec
            {
                let first = rd[0] as usize;
                while !part.skeleton[gi].indices.contains(&first) {
                    gi += 1;
                }
                ranks[gi] = sk.len();
                redundant += rd.len();
            }
        }
        ls.redundant = redundant;
        ls.rank_max = ranks.iter().copied().max().unwrap_or(0);
        ls.rank_mean = if ranks.is_empty() {
            0.0
        } else {
            ranks.iter().sum::<usize>() as f64 / ranks.len() as f64
        };
        factor_bytes += recs.iter().map(FactorRecord::bytes).sum::<usize>();
        records.extend(recs);
        peak_live = peak_live.max(live.bytes());
    }

    let t = Instant::now();
    let root = live.active_indices();
    let root_block = live.block(&root, &root);
    drop(live);
    let root_factor = match cholesky(&root_block) {
        Ok(l) => l,
        Err(e) => {
            stats.root_size = root.len();
            stats.levels.push(LevelStats {
                level: spec.levels,
                active: root.len(),
                p: 1,
                q: 0,
                r: 0,
                rank_max: 0,
                rank_mean: 0.0,
                redundant: 0,
                t_eliminate_s: 0.0,
                t_precondition_s: 0.0,
                t_skeletonize_s: 0.0,
                not_spd: Vec::new(),
            });
            let err = StageFailure {
                group: 0,
                pivot: e.pivot,
            };
            return Err(fail(stats, spec.levels, Stage::Root, err, start));
        }
    };
    stats.t_root_s = t.elapsed().as_secs_f64();
    stats.root_size = root.len();
    factor_bytes += root_factor.bytes() + root.len() * std::mem::size_of::<u32>();
    stats.factor_bytes = factor_bytes;
    stats.peak_live_bytes = peak_live;
    stats.memory_bytes = factor_bytes + peak_live;
    stats.t_factor_s = start.elapsed().as_secs_f64();

    Ok(Factorization {
        method,
        eps,
        spec,
        records,
        root: root.iter().map(|&i| i as u32).collect(),
        root_factor,
        stats,
    })
}

impl Factorization {
    pub fn method(&self) -> Method {
        self.method
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn order(&self) -> usize {
        self.stats.order
    }

    pub fn records(&self) -> &[FactorRecord] {
        &self.records
    }

    /// The root set `S_L`, ascending.
    pub fn root_indices(&self) -> Vec<usize> {
        self.root.iter().map(|&i| i as usize).collect()
    }

    pub fn root_size(&self) -> usize {
        self.root.len()
    }

    pub fn root_factor(&self) -> &LowerTriangular {
        &self.root_factor
    }

    pub fn stats(&self) -> &FactorStats {
        &self.stats
    }

    pub fn memory_bytes(&self) -> usize {
        self.stats.memory_bytes
    }

    fn check_len(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.order(),
            "vector length does not match the factorization"
        );
    }

    fn root_gather(&self, v: &[f64]) -> Vec<f64> {
        self.root.iter().map(|&i| v[i as usize]).collect()
    }

    fn root_scatter(&self, v: &mut [f64], src: &[f64]) {
        for (&i, &s) in self.root.iter().zip(src) {
            v[i as usize] = s;
        }
    }

    /// `F x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.check_len(x);
        let mut v = x.to_vec();
        for rec in &self.records {
            rec.apply_inv(&mut v);
        }
        let mut u = self.root_gather(&v);
        self.root_factor.mul_t_in_place(&mut u);
        self.root_factor.mul_in_place(&mut u);
        self.root_scatter(&mut v, &u);
        for rec in self.records.iter().rev() {
            rec.apply_inv_t(&mut v);
        }
        v
    }

    /// `F⁻¹ b`.
    pub fn apply_inverse(&self, b: &[f64]) -> Vec<f64> {
        self.check_len(b);
        let mut v = b.to_vec();
        self.apply_inverse_in_place(&mut v);
        v
    }

    pub fn apply_inverse_in_place(&self, v: &mut [f64]) {
        self.check_len(v);
        for rec in &self.records {
            rec.apply_t(v);
        }
        let mut u = self.root_gather(v);
        self.root_factor.solve_in_place(&mut u);
        self.root_factor.solve_t_in_place(&mut u);
        self.root_scatter(v, &u);
        for rec in self.records.iter().rev() {
            rec.apply(v);
        }
    }

    /// `G⁻¹ x`.
    pub fn apply_ginv(&self, x: &[f64]) -> Vec<f64> {
        self.check_len(x);
        let mut v = x.to_vec();
        for rec in &self.records {
            rec.apply_t(&mut v);
        }
        let mut u = self.root_gather(&v);
        self.root_factor.solve_in_place(&mut u);
        self.root_scatter(&mut v, &u);
        v
    }

    /// `G⁻ᵀ x`.
    pub fn apply_ginv_t(&self, x: &[f64]) -> Vec<f64> {
        self.check_len(x);
        let mut v = x.to_vec();
        let mut u = self.root_gather(&v);
        self.root_factor.solve_t_in_place(&mut u);
        self.root_scatter(&mut v, &u);
        for rec in self.records.iter().rev() {
            rec.apply(&mut v);
        }
        v
    }

    /// Dense `A_L = B_L B_Lᵀ` on the root set.
    pub fn root_matrix(&self) -> Mat {
        self.root_factor.reconstruct()
    }

    /// Spectral condition number of the root block `A_L`, from the singular
    /// values of its Cholesky factor.
    pub fn root_condition(&self) -> Result<f64> {
        let k = self.root.len();
        if k > ROOT_CONDITION_LIMIT {
            return Err(Error::SizeGuard {
                size: k,
                limit: ROOT_CONDITION_LIMIT,
            });
        }
        if k == 0 {
            return Ok(1.0);
        }
        let b = DMatrix::from_column_slice(k, k, self.root_factor.as_mat().as_slice());
        let sv = b.singular_values();
        let max = sv.max();
        let min = sv.min();
        Ok((max / min).powi(2))
    }
}
