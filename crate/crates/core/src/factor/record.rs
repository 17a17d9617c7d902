use serde::Serialize;

use crate::dense::{LowerTriangular, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Eliminate,
    Precondition,
    Skeletonize,
}

/// One stored operator of the factorization. Each record `Q` acts on a
/// full-length vector in place and touches only its own index sets.
#[derive(Debug, Clone)]
pub enum FactorRecord {
    /// Block elimination of `interior` against `boundary`:
    /// `M = [[L⁻ᵀ, −L⁻ᵀX], [0, I]]` with `L Lᵀ = A_II`, `X = L⁻¹ A_IB`.
    Eliminate {
        level: usize,
        interior: Vec<u32>,
        boundary: Vec<u32>,
        l: LowerTriangular,
        x: Mat,
    },
    /// Block Jacobi scaling `C = L⁻ᵀ` on `group`.
    Precondition {
        level: usize,
        group: Vec<u32>,
        l: LowerTriangular,
    },
    /// Skeletonization `K = Z M`: the zeroing map `Z` (`v_Î −= T v_Ĩ`)
    /// composed with elimination of the redundant DOFs against the
    /// skeletons.
    Skeletonize {
        level: usize,
        redundant: Vec<u32>,
        skeleton: Vec<u32>,
        t: Mat,
        l: LowerTriangular,
        x: Mat,
    },
}

fn gather(v: &[f64], idx: &[u32]) -> Vec<f64> {
    idx.iter().map(|&i| v[i as usize]).collect()
}

fn scatter(v: &mut [f64], idx: &[u32], src: &[f64]) {
    for (&i, &s) in idx.iter().zip(src) {
        v[i as usize] = s;
    }
}

fn scatter_add(v: &mut [f64], idx: &[u32], alpha: f64, src: &[f64]) {
    for (&i, &s) in idx.iter().zip(src) {
        v[i as usize] += alpha * s;
    }
}

/// Block elimination maps shared by `Eliminate` and `Skeletonize`.
mod elim {
    use super::*;

    /// `v_I = L⁻ᵀ (v_I − X v_B)`.
    pub fn apply(v: &mut [f64], i: &[u32], b: &[u32], l: &LowerTriangular, x: &Mat) {
        let mut u = gather(v, i);
        if !b.is_empty() {
            x.gemv(-1.0, &gather(v, b), 1.0, &mut u);
        }
        l.solve_t_in_place(&mut u);
        scatter(v, i, &u);
    }

    /// `u = L⁻¹ v_I`, `v_B −= Xᵀ u`, `v_I = u`.
    pub fn apply_t(v: &mut [f64], i: &[u32], b: &[u32], l: &LowerTriangular, x: &Mat) {
        let mut u = gather(v, i);
        l.solve_in_place(&mut u);
        if !b.is_empty() {
            let mut w = vec![0.0; b.len()];
            x.gemv_t(1.0, &u, 0.0, &mut w);
            scatter_add(v, b, -1.0, &w);
        }
        scatter(v, i, &u);
    }

    /// `v_I = Lᵀ v_I + X v_B`.
    pub fn apply_inv(v: &mut [f64], i: &[u32], b: &[u32], l: &LowerTriangular, x: &Mat) {
        let mut u = gather(v, i);
        l.mul_t_in_place(&mut u);
        if !b.is_empty() {
            x.gemv(1.0, &gather(v, b), 1.0, &mut u);
        }
        scatter(v, i, &u);
    }

    /// `v_B += Xᵀ v_I`, `v_I = L v_I`.
    pub fn apply_inv_t(v: &mut [f64], i: &[u32], b: &[u32], l: &LowerTriangular, x: &Mat) {
        let mut u = gather(v, i);
        if !b.is_empty() {
            let mut w = vec![0.0; b.len()];
            x.gemv_t(1.0, &u, 0.0, &mut w);
            scatter_add(v, b, 1.0, &w);
        }
        l.mul_in_place(&mut u);
        scatter(v, i, &u);
    }
}

/// Zeroing map `Z` on `(Ĩ, Î)`: `v_Î += sign · T v_Ĩ`.
fn zero_apply(v: &mut [f64], rd: &[u32], sk: &[u32], t: &Mat, sign: f64) {
    if sk.is_empty() || rd.is_empty() {
        return;
    }
    let mut w = vec![0.0; sk.len()];
    t.gemv(1.0, &gather(v, rd), 0.0, &mut w);
    scatter_add(v, sk, sign, &w);
}

/// Transposed zeroing map: `v_Ĩ += sign · Tᵀ v_Î`.
fn zero_apply_t(v: &mut [f64], rd: &[u32], sk: &[u32], t: &Mat, sign: f64) {
    if sk.is_empty() || rd.is_empty() {
        return;
    }
    let mut w = vec![0.0; rd.len()];
    t.gemv_t(1.0, &gather(v, sk), 0.0, &mut w);
    scatter_add(v, rd, sign, &w);
}

impl FactorRecord {
    pub fn kind(&self) -> RecordKind {
        match self {
            FactorRecord::Eliminate { .. } => RecordKind::Eliminate,
            FactorRecord::Precondition { .. } => RecordKind::Precondition,
            FactorRecord::Skeletonize { .. } => RecordKind::Skeletonize,
        }
    }

    pub fn level(&self) -> usize {
        match self {
            FactorRecord::Eliminate { level, .. }
            | FactorRecord::Precondition { level, .. }
            | FactorRecord::Skeletonize { level, .. } => *level,
        }
    }

    /// Bytes of stored factor data, index sets included.
    pub fn bytes(&self) -> usize {
        let idx = |v: &Vec<u32>| v.len() * std::mem::size_of::<u32>();
        match self {
            FactorRecord::Eliminate {
                interior,
                boundary,
                l,
                x,
                ..
            } => idx(interior) + idx(boundary) + l.bytes() + x.bytes(),
            FactorRecord::Precondition { group, l, .. } => idx(group) + l.bytes(),
            FactorRecord::Skeletonize {
                redundant,
                skeleton,
                t,
                l,
                x,
                ..
            } => idx(redundant) + idx(skeleton) + t.bytes() + l.bytes() + x.bytes(),
        }
    }

    /// `v ← Q v`.
    pub fn apply(&self, v: &mut [f64]) {
        match self {
            FactorRecord::Eliminate {
                interior,
                boundary,
                l,
                x,
                ..
            } => elim::apply(v, interior, boundary, l, x),
            FactorRecord::Precondition { group, l, .. } => {
                let mut u = gather(v, group);
                l.solve_t_in_place(&mut u);
                scatter(v, group, &u);
            }
            FactorRecord::Skeletonize {
                redundant,
                skeleton,
                t,
                l,
                x,
                ..
            } => {
                elim::apply(v, redundant, skeleton, l, x);
                zero_apply(v, redundant, skeleton, t, -1.0);
            }
        }
    }

    /// `v ← Qᵀ v`.
    pub fn apply_t(&self, v: &mut [f64]) {
        match self {
            FactorRecord::Eliminate {
                interior,
                boundary,
                l,
                x,
                ..
            } => elim::apply_t(v, interior, boundary, l, x),
            FactorRecord::Precondition { group, l, .. } => {
                let mut u = gather(v, group);
                l.solve_in_place(&mut u);
                scatter(v, group, &u);
            }
            FactorRecord::Skeletonize {
                redundant,
                skeleton,
                t,
                l,
                x,
                ..
            } => {
                zero_apply_t(v, redundant, skeleton, t, -1.0);
                elim::apply_t(v, redundant, skeleton, l, x);
            }
        }
    }

    /// `v ← Q⁻¹ v`.
    pub fn apply_inv(&self, v: &mut [f64]) {
        match self {
            FactorRecord::Eliminate {
                interior,
                boundary,
                l,
                x,
                ..
            } => elim::apply_inv(v, interior, boundary, l, x),
            FactorRecord::Precondition { group, l, .. } => {
                let mut u = gather(v, group);
                l.mul_t_in_place(&mut u);
                scatter(v, group, &u);
            }
            FactorRecord::Skeletonize {
                redundant,
                skeleton,
                t,
                l,
                x,
                ..
            } => {
                zero_apply(v, redundant, skeleton, t, 1.0);
                elim::apply_inv(v, redundant, skeleton, l, x);
            }
        }
    }

    /// `v ← Q⁻ᵀ v`.
    pub fn apply_inv_t(&self, v: &mut [f64]) {
        match self {
            FactorRecord::Eliminate {
                interior,
                boundary,
                l,
                x,
                ..
            } => elim::apply_inv_t(v, interior, boundary, l, x),
            FactorRecord::Precondition { group, l, .. } => {
                let mut u = gather(v, group);
                l.mul_in_place(&mut u);
                scatter(v, group, &u);
            }
            FactorRecord::Skeletonize {
                redundant,
                skeleton,
                t,
                l,
                x,
                ..
            } => {
                elim::apply_inv_t(v, redundant, skeleton, l, x);
                zero_apply_t(v, redundant, skeleton, t, 1.0);
            }
        }
    }

    /// Dense matrix of `Q` for small orders, built column by column.
    pub fn to_dense(&self, order: usize) -> Mat {
        let mut q = Mat::identity(order);
        for j in 0..order {
            self.apply(q.col_mut(j));
        }
        q
    }
}
