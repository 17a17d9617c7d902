//! The three per-level stages. Each works group by group on the live matrix
//! and returns the records it produced, or the group and pivot at which a
//! Cholesky factorization broke down.

use crate::dense::{cholesky, LowerTriangular, Mat, RankRule};
use crate::hierarchy::DofGroup;

use super::live::LiveMatrix;
use super::record::FactorRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageFailure {
    /// Position of the failing group in the stage's group list.
    pub group: usize,
    pub pivot: usize,
}

fn to_u32(idx: &[usize]) -> Vec<u32> {
    idx.iter().map(|&i| i as u32).collect()
}

fn factor(a: &Mat, group: usize) -> Result<LowerTriangular, StageFailure> {
    cholesky(a).map_err(|e| StageFailure {
        group,
        pivot: e.pivot,
    })
}

/// Eliminates each interior group `I` against its active neighbors `B`:
/// `A_BB ← A_BB − XᵀX` with `X = L⁻¹ A_IB`, then `I` is removed.
pub fn eliminate_cells(
    live: &mut LiveMatrix,
    groups: &[DofGroup],
    level: usize,
) -> Result<Vec<FactorRecord>, StageFailure> {
    let mut records = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let i = &group.indices;
        if i.is_empty() {
            continue;
        }
        let b = live.neighbors(i);
        let l = factor(&live.block(i, i), g)?;
        let mut x = live.block(i, &b);
        l.solve_mat_in_place(&mut x);
        let mut s = x.tr_matmul(&x);
        s.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        live.schur_remove(i, &b, &s);
        records.push(FactorRecord::Eliminate {
            level,
            interior: to_u32(i),
            boundary: to_u32(&b),
            l,
            x,
        });
    }
    Ok(records)
}

/// Rescales each group to a unit diagonal block: `A_II ← I`,
/// `A_IB ← L⁻¹ A_IB`.
pub fn precondition_blocks(
    live: &mut LiveMatrix,
    groups: &[DofGroup],
    level: usize,
) -> Result<Vec<FactorRecord>, StageFailure> {
    let mut records = Vec::with_capacity(groups.len());
    for (g, group) in groups.iter().enumerate() {
        let i = &group.indices;
        if i.is_empty() {
            continue;
        }
        let b = live.neighbors(i);
        let l = factor(&live.block(i, i), g)?;
        if !b.is_empty() {
            let mut w = live.block(i, &b);
            l.solve_mat_in_place(&mut w);
            live.set_block_sym(i, &b, &w);
        }
        live.set_identity(i);
        records.push(FactorRecord::Precondition {
            level,
            group: to_u32(i),
            l,
        });
    }
    Ok(records)
}

/// Skeletonizes each group in turn. The ID of the group's coupling to the
/// rest of the active matrix splits it into redundant `Ĩ` and skeleton `Î`
/// DOFs; after the zeroing update the residual coupling of `Ĩ` to the rest is
/// discarded and `Ĩ` is eliminated against `Î`. Groups with nothing to
/// compress produce no record.
pub fn skeletonize_separators(
    live: &mut LiveMatrix,
    groups: &[DofGroup],
    level: usize,
    eps: f64,
) -> Result<Vec<FactorRecord>, StageFailure> {
    skeletonize_separators_with(live, groups, level, RankRule::Tolerance(eps))
}

/// [`skeletonize_separators`] with an arbitrary rank rule for the IDs.
pub fn skeletonize_separators_with(
    live: &mut LiveMatrix,
    groups: &[DofGroup],
    level: usize,
    rule: RankRule,
) -> Result<Vec<FactorRecord>, StageFailure> {
    let mut records = Vec::new();
    for (g, group) in groups.iter().enumerate() {
        let i = &group.indices;
        if i.is_empty() {
            continue;
        }
        let r = live.neighbors(i);
        let id = rule.decompose(&live.block(&r, i));
        if id.redundant.is_empty() {
            continue;
        }
        let a_ii = live.block(i, i);
        let (rd, sk) = (&id.redundant, &id.skeleton);
        let t = &id.interp;
        let a_rr = a_ii.select(rd, rd);
        let a_sr = a_ii.select(sk, rd);
        let a_ss = a_ii.select(sk, sk);

        // Ã_ĨĨ = A_ĨĨ − TᵀA_ÎĨ − A_ÎĨᵀT + TᵀA_ÎÎT, Ã_ÎĨ = A_ÎĨ − A_ÎÎT.
        let mut a_sr_new = a_sr.clone();
        let ss_t = a_ss.matmul(t);
        for (v, w) in a_sr_new.as_mut_slice().iter_mut().zip(ss_t.as_slice()) {
            *v -= w;
        }
        let mut a_rr_new = a_rr;
        let t_sr = t.tr_matmul(&a_sr);
        let t_ss_t = t.tr_matmul(&ss_t);
        let k = rd.len();
        for c in 0..k {
            for row in 0..k {
                a_rr_new[(row, c)] += t_ss_t[(row, c)] - t_sr[(row, c)] - t_sr[(c, row)];
            }
        }
        a_rr_new.symmetrize();

        let l = factor(&a_rr_new, g)?;
        let mut x = a_sr_new.transpose();
        l.solve_mat_in_place(&mut x);

        let redundant: Vec<usize> = rd.iter().map(|&p| i[p]).collect();
        let skeleton: Vec<usize> = sk.iter().map(|&p| i[p]).collect();
        let mut s = x.tr_matmul(&x);
        s.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        live.schur_remove(&redundant, &skeleton, &s);
        records.push(FactorRecord::Skeletonize {
            level,
            redundant: to_u32(&redundant),
            skeleton: to_u32(&skeleton),
            t: id.interp,
            l,
            x,
        });
    }
    Ok(records)
}
