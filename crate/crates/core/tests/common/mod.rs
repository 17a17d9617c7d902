//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use hifde::dense::{cholesky, interpolative_decomposition, Mat};
use hifde::diagnostics::DenseOracle;
use hifde::krylov::{pcg, PcgOptions};
use hifde::{assemble_operator, generate_field, GridSpec, SymSparseMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn problem(
    dim: usize,
    n: usize,
    m: usize,
    seed: u64,
    contrast: f64,
) -> (GridSpec, SymSparseMatrix) {
    let spec = GridSpec::new(dim, n, m).unwrap();
    let field = generate_field(spec, seed, contrast, 4.0).unwrap();
    (spec, assemble_operator(&field, 0.0).unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| r.sample(StandardNormal)).collect()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    d / b.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.nrows(), m.ncols(), m.as_slice())
}

pub fn sparse_to_na(a: &SymSparseMatrix) -> DMatrix<f64> {
    to_na(&a.to_dense())
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Column ID by modified Gram-Schmidt with full recomputation of the
/// residual column norms at every step. Returns `(skeleton, redundant, T)`
/// in pivot order.
pub fn gram_schmidt_id(m: &DMatrix<f64>, rank: usize) -> (Vec<usize>, Vec<usize>, DMatrix<f64>) {
    let nc = m.ncols();
    let mut res = m.clone();
    let mut order: Vec<usize> = (0..nc).collect();
    let mut qs: Vec<DVector<f64>> = Vec::new();
    let k = rank.min(nc).min(m.nrows());
    for step in 0..k {
        let mut best = step;
        for j in step..nc {
            if res.column(order[j]).norm() > res.column(order[best]).norm() {
                best = j;
            }
        }
        order.swap(step, best);
        let piv = order[step];
        let nrm = res.column(piv).norm();
        if nrm == 0.0 {
            break;
        }
        let q = res.column(piv) / nrm;
        for &j in &order[step..] {
            let c = q.dot(&res.column(j));
            let mut col = res.column_mut(j);
            col.axpy(-c, &q, 1.0);
        }
        qs.push(q);
    }
    let r = qs.len();
    let sk = order[..r].to_vec();
    let rd = order[r..].to_vec();
    let msk = m.select_columns(&sk);
    let mrd = m.select_columns(&rd);
    let t = if r == 0 {
        DMatrix::zeros(0, rd.len())
    } else {
        // Least-squares interpolation: the skeleton columns are independent.
        let gram = msk.transpose() * &msk;
        gram.cholesky().unwrap().solve(&(msk.transpose() * mrd))
    };
    (sk, rd, t)
}

/// A dense reimplementation of one elimination round and one
/// skeletonization round. Every step is a congruence `A ← Wᵀ A W` with an
/// explicitly formed `W`.
pub struct DenseLevel {
    pub a: DMatrix<f64>,
    pub active: Vec<bool>,
    /// Product of all congruence operators applied so far.
    pub w: DMatrix<f64>,
    pub skeletonized: Vec<(Vec<usize>, Vec<usize>, DMatrix<f64>)>,
}

impl DenseLevel {
    pub fn new(a: &SymSparseMatrix) -> Self {
        let n = a.order();
        Self {
            a: sparse_to_na(a),
            active: vec![true; n],
            w: DMatrix::identity(n, n),
            skeletonized: Vec::new(),
        }
    }

    fn congruence(&mut self, w: DMatrix<f64>) {
        self.a = w.transpose() * &self.a * &w;
        self.w = &self.w * w;
    }

    /// `W = [[L⁻ᵀ, −L⁻ᵀ L⁻¹ A_IB], [0, I]]` on `(I, rest)`.
    pub fn eliminate(&mut self, idx: &[usize]) {
        let n = self.a.nrows();
        let aii = self.a.select_rows(idx).select_columns(idx);
        let l = aii.clone().cholesky().unwrap().l();
        let linv_t = l.clone().try_inverse().unwrap().transpose();
        let aii_inv = aii.try_inverse().unwrap();
        let mut w = DMatrix::identity(n, n);
        for (p, &i) in idx.iter().enumerate() {
            for (q, &j) in idx.iter().enumerate() {
                w[(i, j)] = linv_t[(p, q)];
            }
        }
        // Off-block columns: −A_II⁻¹ A_IB.
        let rest: Vec<usize> = (0..n).filter(|j| !idx.contains(j)).collect();
        let aib = self.a.select_rows(idx).select_columns(&rest);
        let shift = -(aii_inv * aib);
        for (p, &i) in idx.iter().enumerate() {
            for (q, &j) in rest.iter().enumerate() {
                w[(i, j)] = shift[(p, q)];
            }
        }
        self.congruence(w);
        for &i in idx {
            self.active[i] = false;
        }
    }

    /// Zeroing congruence `Z = I − E_{ÎĨ} T`, dropping of the residual
    /// coupling of `Ĩ` to the active DOFs outside the group, then
    /// elimination of `Ĩ`.
    pub fn skeletonize(&mut self, group: &[usize], rank: usize) {
        let n = self.a.nrows();
        let r: Vec<usize> = (0..n)
            .filter(|&j| self.active[j] && !group.contains(&j))
            .filter(|&j| group.iter().any(|&i| self.a[(j, i)] != 0.0))
            .collect();
        let arg = self.a.select_rows(&r).select_columns(group);
        let (sk, rd, t) = gram_schmidt_id(&arg, rank);
        if rd.is_empty() {
            return;
        }
        let sk_g: Vec<usize> = sk.iter().map(|&p| group[p]).collect();
        let rd_g: Vec<usize> = rd.iter().map(|&p| group[p]).collect();
        let mut z = DMatrix::identity(n, n);
        for (p, &i) in sk_g.iter().enumerate() {
            for (q, &j) in rd_g.iter().enumerate() {
                z[(i, j)] = -t[(p, q)];
            }
        }
        self.congruence(z);
        for &i in &rd_g {
            for j in 0..n {
                if !group.contains(&j) {
                    self.a[(i, j)] = 0.0;
                    self.a[(j, i)] = 0.0;
                }
            }
        }
        self.eliminate(&rd_g);
        self.skeletonized.push((sk_g, rd_g, t));
    }

    /// The active matrix with the identity on removed DOFs, as stored by
    /// the factorization's live matrix.
    pub fn live_view(&self) -> DMatrix<f64> {
        let n = self.a.nrows();
        DMatrix::from_fn(n, n, |i, j| {
            if self.active[i] && self.active[j] {
                self.a[(i, j)]
            } else if i == j {
                1.0
            } else {
                0.0
            }
        })
    }

    /// `F = W⁻ᵀ A_L W⁻¹` for the current state.
    pub fn factored(&self) -> DMatrix<f64> {
        let winv = self.w.clone().try_inverse().unwrap();
        winv.transpose() * self.live_view() * winv
    }
}

fn random_matrix(r: &mut ChaCha8Rng, nr: usize, nc: usize) -> Mat {
    Mat::from_fn(nr, nc, |_, _| r.sample(StandardNormal))
}

/// Random matrix with prescribed exact rank and geometrically decaying
/// column scales.
pub fn random_low_rank(r: &mut ChaCha8Rng, nr: usize, nc: usize, rank: usize) -> Mat {
    let u = random_matrix(r, nr, rank);
    let v = random_matrix(r, rank, nc);
    let mut m = u.matmul(&v);
    for j in 0..nc {
        let s = 10f64.powf(-r.random_range(0.0..6.0));
        m.col_mut(j).iter_mut().for_each(|x| *x *= s);
    }
    m
}

/// ID reconstruction bound `‖M_Ĩ − M_Î T‖_F ≤ √|I| ε ‖M‖_F` over `count`
/// random matrices of assorted shape, rank and tolerance. Returns the
/// number of violations and the worst ratio to the bound.
pub fn id_property_suite(count: usize, seed: u64) -> (usize, f64) {
    let mut r = rng(seed);
    let mut fails = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let nr = r.random_range(1..60);
        let nc = r.random_range(1..60);
        let rank = r.random_range(0..=nr.min(nc));
        let eps = 10f64.powf(-r.random_range(1.0..12.0));
        let m = if r.random_bool(0.5) {
            random_low_rank(&mut r, nr, nc, rank)
        } else {
            random_matrix(&mut r, nr, nc)
        };
        let id = interpolative_decomposition(&m, eps);
        let mut seen: Vec<usize> = id.skeleton.iter().chain(&id.redundant).copied().collect();
        seen.sort_unstable();
        let partition_ok = seen == (0..nc).collect::<Vec<_>>()
            && id.interp.shape() == (id.rank(), id.redundant.len());
        let bound = (nc as f64).sqrt() * eps * m.norm_fro();
        let res = id.residual_fro(&m);
        let ratio = if bound > 0.0 { res / bound } else { 0.0 };
        worst = worst.max(ratio);
        if !partition_ok || res > bound {
            fails += 1;
        }
    }
    (fails, worst)
}

/// Cholesky fails exactly on the indefinite inputs of a random family of
/// symmetric matrices with controlled smallest eigenvalue. Returns the
/// number of disagreements.
pub fn cholesky_property_suite(count: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut wrong = 0;
    for _ in 0..count {
        let n = r.random_range(1..40);
        let q = to_na(&random_matrix(&mut r, n, n)).qr().q();
        let mut ev: Vec<f64> = (0..n).map(|_| r.random_range(0.5..10.0)).collect();
        let indefinite = r.random_bool(0.5);
        if indefinite {
            let k = r.random_range(0..n);
            ev[k] = -r.random_range(0.01..10.0);
        }
        let s = &q * DMatrix::from_diagonal(&DVector::from_vec(ev)) * q.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let failed = cholesky(&Mat::from_col_major(n, n, s.as_slice().to_vec())).is_err();
        if failed != indefinite {
            wrong += 1;
        }
    }
    wrong
}

/// Unpreconditioned PCG against dense Cholesky solves on random SPD
/// systems. Returns the worst relative difference.
pub fn pcg_property_suite(count: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let n = r.random_range(1..=200);
        let g = random_matrix(&mut r, n, n);
        let mut a = g.tr_matmul(&g);
        for i in 0..n {
            a[(i, i)] += n as f64;
        }
        let sa = SymSparseMatrix::from_dense(&a);
        let b = normal(&mut r, n);
        let x_ref = DenseOracle::new(&sa).unwrap().solve(&b);
        let (x, rep) = pcg(&sa, &b, None, &PcgOptions::default()).unwrap();
        assert!(
            rep.converged,
            "PCG did not converge on a random SPD system of order {n}"
        );
        worst = worst.max(rel_diff(&x, &x_ref));
    }
    worst
}

/// Outcome of running one elimination round and one fixed-rank
/// skeletonization round through the library stages and through
/// [`DenseLevel`].
pub struct SingleLevelComparison {
    pub scale: f64,
    pub matrix_diff: f64,
    pub interp_diff: f64,
    pub splits_match: bool,
    pub compressed_groups: usize,
}

pub fn single_level_comparison(seed: u64, rank: usize) -> SingleLevelComparison {
    use hifde::dense::RankRule;
    use hifde::factor::{eliminate_cells, skeletonize_separators_with, FactorRecord, LiveMatrix};
    use hifde::hierarchy::classify_active;

    let (spec, a) = problem(2, 8, 4, seed, 1e4);
    let all: Vec<usize> = (0..a.order()).collect();
    let part = classify_active(&spec, 0, &all).unwrap();

    let mut live = LiveMatrix::from_sparse(&a);
    eliminate_cells(&mut live, &part.interior, 0).unwrap();
    let recs =
        skeletonize_separators_with(&mut live, &part.skeleton, 0, RankRule::Fixed(rank)).unwrap();

    let mut oracle = DenseLevel::new(&a);
    for g in &part.interior {
        oracle.eliminate(&g.indices);
    }
    for g in &part.skeleton {
        oracle.skeletonize(&g.indices, rank);
    }

    let got = to_na(&live.to_dense());
    let expect = oracle.live_view();
    let mut splits_match = recs.len() == oracle.skeletonized.len();
    let mut interp_diff: f64 = 0.0;
    for (rec, (sk, rd, t)) in recs.iter().zip(&oracle.skeletonized) {
        match rec {
            FactorRecord::Skeletonize {
                redundant,
                skeleton,
                t: t_rec,
                ..
            } => {
                let same = redundant.iter().map(|&i| i as usize).eq(rd.iter().copied())
                    && skeleton.iter().map(|&i| i as usize).eq(sk.iter().copied());
                splits_match &= same;
                if same {
                    interp_diff = interp_diff.max(max_abs_diff(&to_na(t_rec), t));
                }
            }
            _ => splits_match = false,
        }
    }
    SingleLevelComparison {
        scale: sparse_to_na(&a).amax(),
        matrix_diff: max_abs_diff(&got, &expect),
        interp_diff,
        splits_match,
        compressed_groups: recs.len(),
    }
}
