mod common;

use common::{normal, problem, rel_diff, rng, to_na};
use hifde::dense::Mat;
use hifde::diagnostics::{
    estimate_apply_error, estimate_inverse_error, estimate_solve_error, DenseOracle,
};
use hifde::factor::{eliminate_cells, precondition_blocks, skeletonize_separators, LiveMatrix};
use hifde::hierarchy::classify_active;
use hifde::krylov::{pcg, pcg_with, FnOperator, IdentityPreconditioner, PcgOptions};
use hifde::{factorize, Factorization, GridSpec, Method, SymSparseMatrix};

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn factor(
    dim: usize,
    n: usize,
    m: usize,
    seed: u64,
    eps: f64,
    method: Method,
) -> (SymSparseMatrix, Factorization) {
    let (spec, a) = problem(dim, n, m, seed, 1e4);
    let f = factorize(&a, &spec, eps, method).unwrap();
    (a, f)
}

#[test]
fn exact_mode_inverts_2d() {
    let (a, f) = factor(2, 16, 4, 3, 0.0, Method::Exact);
    let mut r = rng(1);
    for _ in 0..10 {
        let x = normal(&mut r, a.order());
        let back = f.apply_inverse(&a.mul(&x));
        assert!(rel_diff(&back, &x) <= 1e-10);
    }
}

#[test]
fn exact_mode_apply_and_round_trip() {
    for (dim, n, m) in [(2, 32, 8), (3, 16, 4)] {
        let (a, f) = factor(dim, n, m, 0, 0.0, Method::Exact);
        let mut r = rng(2);
        let x = normal(&mut r, a.order());
        assert!(rel_diff(&f.apply(&x), &a.mul(&x)) <= 1e-10);
        assert!(rel_diff(&f.apply_inverse(&f.apply(&x)), &x) <= 1e-9);
        assert!(estimate_apply_error(&a, &f, 0).value <= 1e-9);
        assert!(estimate_solve_error(&a, &f, 0).value <= 1e-9);
        assert!(estimate_inverse_error(&a, &f, 0).value <= 1e-9);
    }
}

#[test]
fn approximate_operators_are_consistent() {
    for method in [Method::Hif, Method::Phif] {
        let (a, f) = factor(2, 64, 8, 1, 1e-6, method);
        let mut r = rng(3);
        let u = normal(&mut r, a.order());
        let v = normal(&mut r, a.order());

        let lhs = dot(&f.apply_inverse(&u), &v);
        let rhs = dot(&u, &f.apply_inverse(&v));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()));

        let split = f.apply_ginv_t(&f.apply_ginv(&u));
        assert!(rel_diff(&split, &f.apply_inverse(&u)) <= 1e-12);

        let sum: Vec<f64> = u.iter().zip(&v).map(|(x, y)| x + y).collect();
        let fu = f.apply(&u);
        let fv = f.apply(&v);
        let fsum: Vec<f64> = fu.iter().zip(&fv).map(|(x, y)| x + y).collect();
        assert!(rel_diff(&f.apply(&sum), &fsum) <= 1e-12);
    }
}

#[test]
fn stage_invariants_hold_on_a_grid() {
    let (spec, a) = problem(2, 32, 4, 5, 1e4);
    let mut live = LiveMatrix::from_sparse(&a);
    let all: Vec<usize> = (0..a.order()).collect();
    let part = classify_active(&spec, 0, &all).unwrap();

    // Interior groups are mutually uncoupled.
    for (x, gx) in part.interior.iter().enumerate() {
        for gy in &part.interior[x + 1..] {
            for &i in &gx.indices {
                for &j in &gy.indices {
                    assert_eq!(live.get(i, j), 0.0);
                }
            }
        }
    }

    let check_removed = |live: &LiveMatrix| {
        let n = live.order();
        for i in (0..n).filter(|&i| !live.is_active(i)) {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(live.get(i, j), expect);
                assert_eq!(live.get(j, i), expect);
            }
        }
    };

    eliminate_cells(&mut live, &part.interior, 0).unwrap();
    assert!(live.max_asymmetry() <= 1e-12);
    check_removed(&live);

    precondition_blocks(&mut live, &part.precond, 0).unwrap();
    assert!(live.max_asymmetry() <= 1e-12);
    for g in &part.precond {
        let d = live.block(&g.indices, &g.indices);
        let err = to_na(&d) - to_na(&Mat::identity(g.indices.len()));
        assert!(err.amax() <= 1e-12);
    }

    skeletonize_separators(&mut live, &part.skeleton, 0, 1e-6).unwrap();
    assert!(live.max_asymmetry() <= 1e-12);
    check_removed(&live);
}

#[test]
fn elimination_order_of_uncoupled_groups_is_irrelevant() {
    let (spec, a) = problem(2, 16, 4, 2, 1e4);
    let all: Vec<usize> = (0..a.order()).collect();
    let part = classify_active(&spec, 0, &all).unwrap();
    let mut forward = LiveMatrix::from_sparse(&a);
    eliminate_cells(&mut forward, &part.interior, 0).unwrap();
    let mut rev_groups = part.interior.clone();
    rev_groups.reverse();
    let mut backward = LiveMatrix::from_sparse(&a);
    eliminate_cells(&mut backward, &rev_groups, 0).unwrap();
    let d = to_na(&forward.to_dense()) - to_na(&backward.to_dense());
    assert!(d.amax() <= 1e-12 * to_na(&a.to_dense()).amax());
}

#[test]
fn block_diagonal_and_identity_blocks_are_left_alone() {
    let a = SymSparseMatrix::from_dense(&Mat::from_rows(&[
        &[2.0, 1.0, 0.0, 0.0],
        &[1.0, 2.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, 0.0],
        &[0.0, 0.0, 0.0, 3.0],
    ]));
    let group = |indices: Vec<usize>| hifde::hierarchy::DofGroup {
        kind: hifde::hierarchy::DofKind::Interior,
        level: 0,
        indices,
        key: [0; 3],
    };
    let mut live = LiveMatrix::from_sparse(&a);
    eliminate_cells(&mut live, &[group(vec![0, 1])], 0).unwrap();
    assert_eq!(live.get(3, 3), 3.0);
    assert_eq!(live.get(2, 2), 1.0);

    let before = live.to_dense();
    precondition_blocks(&mut live, &[group(vec![2])], 0).unwrap();
    assert_eq!(live.to_dense(), before);
}

#[test]
fn skeletonization_touches_only_the_neighborhood() {
    let (spec, a) = problem(2, 32, 4, 4, 1e4);
    let all: Vec<usize> = (0..a.order()).collect();
    let part = classify_active(&spec, 0, &all).unwrap();
    let mut live = LiveMatrix::from_sparse(&a);
    eliminate_cells(&mut live, &part.interior, 0).unwrap();
    let g = &part.skeleton[part.skeleton.len() / 2];
    let mut near = live.neighbors(&g.indices);
    near.extend(&g.indices);
    let before = live.to_dense();
    skeletonize_separators(&mut live, std::slice::from_ref(g), 0, 1e-2).unwrap();
    let after = live.to_dense();
    let n = live.order();
    for j in (0..n).filter(|j| !near.contains(j)) {
        for k in (0..n).filter(|k| !near.contains(k)) {
            assert_eq!(before[(j, k)], after[(j, k)]);
        }
    }
}

#[test]
fn dense_solve_error_is_smaller_with_preconditioning() {
    for seed in 0..3 {
        let (spec, a) = problem(2, 32, 8, seed, 1e4);
        let oracle = DenseOracle::new(&a).unwrap();
        let b = normal(&mut rng(seed), a.order());
        let x = oracle.solve(&b);
        let err = |method| {
            let f = factorize(&a, &spec, 1e-6, method).unwrap();
            rel_diff(&f.apply_inverse(&b), &x)
        };
        let (hif, phif) = (err(Method::Hif), err(Method::Phif));
        assert!(phif <= hif, "seed {seed}: PHIF {phif:e} vs HIF {hif:e}");
    }
}

#[test]
fn estimators_match_dense_values_at_small_size() {
    for method in [Method::Hif, Method::Phif] {
        let (spec, a) = problem(2, 16, 4, 7, 1e4);
        let f = factorize(&a, &spec, 1e-6, method).unwrap();
        let oracle = DenseOracle::new(&a).unwrap();
        let ea = estimate_apply_error(&a, &f, 0).value;
        let ea_exact = oracle.apply_error(&f);
        let es = estimate_solve_error(&a, &f, 0).value;
        let es_exact = oracle.solve_error(&f);
        assert!(
            (ea - ea_exact).abs() <= 0.05 * ea_exact,
            "{ea:e} vs {ea_exact:e}"
        );
        assert!(
            (es - es_exact).abs() <= 0.05 * es_exact,
            "{es:e} vs {es_exact:e}"
        );

        // I − AF⁻¹ = G (I − G⁻¹AG⁻ᵀ) G⁻¹ shares its spectrum with the
        // symmetric form, so e_s is its spectral radius and a lower bound
        // on its norm.
        let inv = oracle.inverse_error(&f);
        let n = a.order();
        let finv = to_na(&oracle.factored_matrix(&f)).try_inverse().unwrap();
        let e = nalgebra::DMatrix::identity(n, n) - common::sparse_to_na(&a) * finv;
        let radius = e
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(
            (radius - es_exact).abs() <= 1e-3 * es_exact,
            "{radius:e} vs {es_exact:e}"
        );
        assert!(es_exact <= inv * (1.0 + 1e-8));
    }
}

#[test]
fn exact_root_is_no_worse_conditioned_than_the_operator() {
    let (spec, a) = problem(2, 32, 8, 0, 1.0);
    let f = factorize(&a, &spec, 0.0, Method::Exact).unwrap();
    let ka = DenseOracle::new(&a).unwrap().condition();
    let root = f.root_matrix();
    let kl = DenseOracle::from_dense(root).unwrap().condition();
    assert!(kl <= ka * (1.0 + 1e-8), "{kl} vs {ka}");
    assert!((f.root_condition().unwrap() - kl).abs() <= 1e-6 * kl);
}

#[test]
fn ranks_grow_slowly_in_2d_and_proportionally_in_3d() {
    let (spec, a) = problem(2, 256, 8, 0, 1.0);
    let f = factorize(&a, &spec, 1e-6, Method::Hif).unwrap();
    let (xs, ys): (Vec<f64>, Vec<f64>) = f
        .stats()
        .levels
        .iter()
        .filter(|l| l.rank_max > 0)
        .map(|l| ((1usize << l.level) as f64, l.rank_max as f64))
        .unzip();
    assert!(xs.len() >= 3);
    let slope = hifde::bench::loglog_slope(&xs, &ys);
    assert!(slope < 0.5, "2D rank growth exponent {slope}");

    let (spec, a) = problem(3, 32, 4, 0, 1.0);
    let f = factorize(&a, &spec, 1e-6, Method::Hif).unwrap();
    let ratios: Vec<f64> = f
        .stats()
        .levels
        .iter()
        .filter(|l| l.rank_max > 0)
        .map(|l| l.rank_max as f64 / (1usize << l.level) as f64)
        .collect();
    // Level-0 faces are too small to compress; the bound concerns the
    // compressed levels.
    assert!(ratios.len() >= 3);
    assert!(
        ratios[1..].windows(2).all(|w| w[1] <= 1.5 * w[0]),
        "{ratios:?}"
    );
}

#[test]
fn statistics_are_deterministic() {
    let run = || {
        let (_, f) = factor(2, 64, 8, 9, 1e-6, Method::Phif);
        f.stats().without_timings().to_json().unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn exact_preconditioner_converges_immediately() {
    let (a, f) = factor(2, 32, 8, 1, 0.0, Method::Exact);
    let b = normal(&mut rng(5), a.order());
    let (_, rep) = pcg(&a, &b, Some(&f), &PcgOptions::default()).unwrap();
    assert!(rep.converged && rep.iterations <= 2, "{rep:?}");
}

#[test]
fn pcg_error_decreases_in_energy_norm() {
    let (a, f) = factor(2, 32, 8, 2, 1e-3, Method::Hif);
    let b = normal(&mut rng(6), a.order());
    let xs = DenseOracle::new(&a).unwrap().solve(&b);
    for pre in [true, false] {
        let mut errs = Vec::new();
        let mut observe = |_: usize, x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&xs).map(|(u, v)| u - v).collect();
            errs.push(dot(&e, &a.mul(&e)).sqrt());
        };
        let opts = PcgOptions::default();
        if pre {
            pcg_with(&a, &b, &f, &opts, &mut observe).unwrap();
        } else {
            pcg_with(&a, &b, &IdentityPreconditioner, &opts, &mut observe).unwrap();
        }
        let e0 = errs[0];
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * e0, "{} > {}", w[1], w[0]);
        }
    }
}

#[test]
fn pcg_matches_split_preconditioned_cg() {
    let spec = GridSpec::new(2, 16, 4).unwrap();
    let (_, a) = problem(2, 16, 4, 8, 1e4);
    let f = factorize(&a, &spec, 1e-2, Method::Phif).unwrap();
    let b = normal(&mut rng(7), a.order());
    let opts = PcgOptions {
        tol: 1e-10,
        ..PcgOptions::default()
    };

    let mut pcg_iterates = Vec::new();
    pcg_with(&a, &b, &f, &opts, |_, x| pcg_iterates.push(x.to_vec())).unwrap();

    let split = FnOperator {
        order: a.order(),
        f: |y: &[f64], out: &mut [f64]| {
            let w = a.mul(&f.apply_ginv_t(y));
            out.copy_from_slice(&f.apply_ginv(&w));
        },
    };
    let c = f.apply_ginv(&b);
    let mut split_iterates = Vec::new();
    pcg_with(&split, &c, &IdentityPreconditioner, &opts, |_, y| {
        split_iterates.push(f.apply_ginv_t(y))
    })
    .unwrap();

    let k = pcg_iterates.len().min(split_iterates.len()).min(8);
    assert!(k >= 3);
    let xs = DenseOracle::new(&a).unwrap().solve(&b);
    let scale = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
    for i in 1..k {
        let d: f64 = pcg_iterates[i]
            .iter()
            .zip(&split_iterates[i])
            .map(|(u, v)| (u - v).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(d <= 1e-10 * scale, "iterate {i}: {d:e}");
    }
}
