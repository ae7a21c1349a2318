//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use choquard::radial::{build_grid, Grading, RadialDomain, RadialGrid};
use choquard::riesz::riesz_constant;

pub fn annulus(dim: usize, a: f64, b: f64, n: usize) -> Arc<RadialGrid> {
    let d = RadialDomain::annulus(dim, a, b).unwrap();
    Arc::new(build_grid(d, n, Grading::Uniform).unwrap())
}

/// Antiderivative of `u^k E(u)` with `E(u) = u^β/β` (β ≠ 0) or `ln u`.
pub fn prim(k: i32, beta: f64, u: f64) -> f64 {
    let kf = k as f64;
    if beta == 0.0 {
        u.powi(k + 1) * (u.ln() / (kf + 1.0) - 1.0 / ((kf + 1.0) * (kf + 1.0)))
    } else {
        u.powf(kf + beta + 1.0) / (beta * (kf + beta + 1.0))
    }
}

fn binom(m: i32, k: i32) -> f64 {
    match (m, k) {
        (_, 0) => 1.0,
        (1, 1) => 1.0,
        (2, 1) => 2.0,
        (2, 2) => 1.0,
        _ => unreachable!(),
    }
}

/// `∫_lo^hi s^m [E(r+s) - E(|r-s|)] ds` in closed form, cell not straddling r.
pub fn bracket_moment(m: i32, beta: f64, r: f64, lo: f64, hi: f64) -> f64 {
    // s = u - r on the (r+s) part
    let mut plus = 0.0;
    for k in 0..=m {
        let c = binom(m, k) * (-r).powi(m - k);
        plus += c * (prim(k, beta, r + hi) - prim(k, beta, r + lo));
    }
    let mut minus = 0.0;
    if lo >= r {
        // s = r + u
        for k in 0..=m {
            let c = binom(m, k) * r.powi(m - k);
            minus += c * (prim(k, beta, hi - r) - if lo == r { 0.0 } else { prim(k, beta, lo - r) });
        }
    } else {
        assert!(hi <= r);
        // s = r - u, ds = -du
        for k in 0..=m {
            let c = binom(m, k) * r.powi(m - k) * (-1f64).powi(k);
            let upper = r - lo;
            let lower = r - hi;
            minus += c * (prim(k, beta, upper) - if lower == 0.0 { 0.0 } else { prim(k, beta, lower) });
        }
    }
    plus - minus
}

/// Analytic hat-weighted entry `∫ k(r_i,s) φ_j(s) s² ds` for N = 3.
pub fn analytic_entry(grid: &RadialGrid, alpha: f64, i: usize, j: usize) -> f64 {
    let beta = alpha - 1.0;
    let pref = riesz_constant(3, alpha).unwrap() * 2.0 * PI;
    let nodes = grid.nodes();
    let r = nodes[i];
    let mut total = 0.0;
    // left cell, φ_j = (s - lo)/h
    if j > 0 {
        let (lo, hi) = (nodes[j - 1], nodes[j]);
        let h = hi - lo;
        total += (bracket_moment(2, beta, r, lo, hi) - lo * bracket_moment(1, beta, r, lo, hi)) / h;
    }
    // right cell, φ_j = (hi - s)/h
    if j + 1 < nodes.len() {
        let (lo, hi) = (nodes[j], nodes[j + 1]);
        let h = hi - lo;
        total += (hi * bracket_moment(1, beta, r, lo, hi) - bracket_moment(2, beta, r, lo, hi)) / h;
    }
    pref * total / r
}

/// Potential of the unit density on `A_{a,b}` for N = 3, α = 2.
pub fn newton(r: f64, a: f64, b: f64) -> f64 {
    (r.powi(3) - a.powi(3)) / (3.0 * r) + (b * b - r * r) / 2.0
}

