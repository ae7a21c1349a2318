mod common;

use std::time::Instant;

use choquard::radial::Field;
use choquard::riesz::{
    apply, assemble_kernel, identity_limit_check, mc_oracle, order_comparison, riesz_pairing,
};
use common::{analytic_entry, annulus, newton};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn three_dim_entries_match_analytic_cell_integrals() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphas = [0.5, 1.0, 1.5, 2.0, 2.5];
    let mut worst: f64 = 0.0;
    for t in 0..50 {
        let alpha = alphas[t % alphas.len()];
        let a = rng.random_range(0.5..2.0);
        let b = a + rng.random_range(0.5..2.0);
        let g = annulus(3, a, b, 64);
        let k = assemble_kernel(g.clone(), alpha).unwrap();
        let i = rng.random_range(0..g.len());
        let j = loop {
            let j = rng.random_range(0..g.len());
            if j.abs_diff(i) >= 2 {
                break j;
            }
        };
        let want = analytic_entry(&g, alpha, i, j);
        let got = k.entry(i, j);
        worst = worst.max((got - want).abs() / want.abs());
    }
    println!("closed-form max rel err {worst:.3e} in {:?}", start.elapsed());
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn singular_entries_match_analytic_cell_integrals() {
    let g = annulus(3, 1.0, 2.0, 64);
    for alpha in [0.2, 0.5, 1.0, 1.5, 2.5] {
        let k = assemble_kernel(g.clone(), alpha).unwrap();
        for i in [0usize, 1, 17, 63, 64] {
            for j in i.saturating_sub(1)..=(i + 1).min(64) {
                let want = analytic_entry(&g, alpha, i, j);
                let got = k.entry(i, j);
                let rel = (got - want).abs() / want.abs();
                assert!(rel < 1e-8, "alpha={alpha} i={i} j={j}: {got} vs {want} ({rel:e})");
            }
        }
    }
}

#[test]
fn newton_shell_profile() {
    let start = Instant::now();
    let mut errs = Vec::new();
    for n in [256, 512] {
        let g = annulus(3, 1.0, 2.0, n);
        let k = assemble_kernel(g.clone(), 2.0).unwrap();
        let w = apply(&k, &Field::from_fn(g.clone(), |_| 1.0)).unwrap();
        let err = g
            .nodes()
            .iter()
            .zip(w.values())
            .map(|(&r, v)| (v - newton(r, 1.0, 2.0)).abs() / newton(r, 1.0, 2.0))
            .fold(0.0, f64::max);
        errs.push(err);
        if n == 512 {
            let i = g.nearest_node(1.5);
            assert!((w.values()[i] - 1.402778).abs() < 1e-6);
        }
    }
    println!("newton errors {errs:?} in {:?}", start.elapsed());
    assert!(errs[1] < 1e-6);
}

#[test]
fn monte_carlo_matches_newton_in_three_dims() {
    let g = annulus(3, 1.0, 2.0, 64);
    let one = Field::from_fn(g, |_| 1.0);
    let est = mc_oracle(&one, 2.0, 1.5, 1_000_000, 3).unwrap();
    let want = newton(1.5, 1.0, 2.0);
    assert!((want - 1.402778).abs() < 1e-6);
    assert!((est.mean - want).abs() < 3.0 * est.std_error, "{est:?}");
}

#[test]
fn monte_carlo_cross_check_in_two_dims() {
    let start = Instant::now();
    let g = annulus(2, 1.0, 2.0, 512);
    let k = assemble_kernel(g.clone(), 1.0).unwrap();
    let t_asm = start.elapsed();
    let one = Field::from_fn(g.clone(), |_| 1.0);
    let conv = apply(&k, &one).unwrap();
    for (t, r) in [1.1, 1.3, 1.5, 1.7, 1.9].into_iter().enumerate() {
        let i = g.nearest_node(r);
        let ri = g.nodes()[i];
        let est = mc_oracle(&one, 1.0, ri, 1_000_000, 100 + t as u64).unwrap();
        let got = conv.values()[i];
        assert!(
            (est.mean - got).abs() < 3.0 * est.std_error,
            "r={ri}: kernel {got} mc {} ± {}",
            est.mean,
            est.std_error
        );
    }
    println!("2d assembly {t_asm:?}, total {:?}", start.elapsed());
}

#[test]
fn bilinear_form_is_nearly_symmetric_and_positive() {
    let g = annulus(3, 1.0, 2.0, 128);
    let k = assemble_kernel(g.clone(), 0.8).unwrap();
    let f = Field::from_fn(g.clone(), |r| 1.0 + (3.0 * r).sin().powi(2));
    let h = Field::from_fn(g.clone(), |r| r * r);
    let fg = riesz_pairing(&k, &f, &h).unwrap();
    let gf = riesz_pairing(&k, &h, &f).unwrap();
    assert!(fg > 0.0);
    println!("asym {:e} weighted {:e}", (fg - gf).abs() / fg, k.weighted_asymmetry());
    assert!((fg - gf).abs() / fg < 1e-3);
}

#[test]
fn approximate_identity_and_order_comparison() {
    let g = annulus(3, 1.0, 2.0, 256);
    let one = Field::from_fn(g.clone(), |_| 1.0);
    let alphas = [0.4, 0.2, 0.1, 0.05];
    let rows = identity_limit_check(&one, &alphas).unwrap();
    println!("{rows:?}");
    for w in rows.windows(2) {
        assert!(w[1].deviation < w[0].deviation);
    }
    let kernels: Vec<_> = alphas.iter().map(|&a| assemble_kernel(g.clone(), a).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        let f = Field::new(g.clone(), vals).unwrap();
        for i in 0..kernels.len() {
            for j in i + 1..kernels.len() {
                let c = order_comparison(&kernels[i], &kernels[j], &f).unwrap();
                assert!(c.holds(), "{c:?}");
            }
        }
    }
}
