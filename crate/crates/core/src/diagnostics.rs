//! Audits of computed solutions: the Pohozaev identity, the nonexistence
//! regime, the small-α limit of the nonlocal problem, and exterior decay.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{BoundaryCondition, Problem};
use crate::error::{Error, Result};
use crate::potential::sampled_drift;
use crate::radial::{dirichlet_integral, h1_norm, Field, RadialGrid};
use crate::riesz::{
    cached_kernel, check_alpha, identity_limit_check, interior_window, mc_oracle, KernelEvaluator, RieszKernel,
};
use crate::solver::{minimize_from, solve_local, SolveOptions, SolveResult};

/// Terms of
/// `(2−N+(α+N)/p)∫|∇v|² − (N−(α+N)/p)∫Vv² − ∫v² ∇V·x = ∫_{∂Ω} v_ν² x·ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    pub grad_term: f64,
    pub potential_term: f64,
    pub drift_term: f64,
    pub boundary_term: f64,
    pub residual: f64,
    pub scale: f64,
}

impl PohozaevReport {
    pub fn lhs(&self) -> f64 {
        self.grad_term + self.potential_term + self.drift_term
    }

    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("grad_term", self.grad_term),
            ("potential_term", self.potential_term),
            ("drift_term", self.drift_term),
            ("boundary_term", self.boundary_term),
            ("residual", self.residual),
        ]
    }
}

/// Second-order one-sided derivative at `x[0]` from three nodes.
fn one_sided_derivative(x: [f64; 3], f: [f64; 3]) -> f64 {
    let h1 = x[1] - x[0];
    let h2 = x[2] - x[1];
    -f[0] * (2.0 * h1 + h2) / (h1 * (h1 + h2)) + f[1] * (h1 + h2) / (h1 * h2) - f[2] * h1 / (h2 * (h1 + h2))
}

/// Evaluates the Pohozaev identity on a Dirichlet solution `v`.
pub fn pohozaev_residual(v: &Field, problem: &Problem) -> Result<PohozaevReport> {
    if problem.bc != BoundaryCondition::Dirichlet {
        return Err(Error::DirichletOnly);
    }
    let grid = v.grid();
    if grid.domain() != &problem.domain {
        return Err(Error::GridMismatch);
    }
    let dim = grid.dim() as f64;
    let ratio = (problem.alpha + dim) / problem.p;
    let omega = grid.sphere_measure();
    let nodes = grid.nodes();
    let vals = v.values();

    let mut drift: Vec<f64> = nodes.iter().map(|&r| problem.potential.radial_drift(r)).collect();
    if drift.iter().any(|d| !d.is_finite()) {
        let samples: Vec<f64> = nodes.iter().map(|&r| problem.potential.value(r)).collect();
        drift = sampled_drift(nodes, &samples);
    }
    let weighted = |g: &dyn Fn(usize) -> f64| -> f64 {
        omega * grid.weights().iter().enumerate().map(|(i, w)| w * g(i)).sum::<f64>()
    };
    let grad_sq = dirichlet_integral(v);
    let pot_sq = weighted(&|i| problem.potential.value(nodes[i]) * vals[i] * vals[i]);
    let drift_sq = weighted(&|i| drift[i] * vals[i] * vals[i]);

    let n = nodes.len();
    let da = one_sided_derivative([nodes[0], nodes[1], nodes[2]], [vals[0], vals[1], vals[2]]);
    let db = -one_sided_derivative(
        [nodes[n - 1], nodes[n - 2], nodes[n - 3]].map(|x| -x),
        [vals[n - 1], vals[n - 2], vals[n - 3]],
    );
    let (a, b) = (nodes[0], nodes[n - 1]);
    let boundary_term = omega * (b.powf(dim) * db * db - a.powf(dim) * da * da);

    let grad_term = (2.0 - dim + ratio) * grad_sq;
    let potential_term = -(dim - ratio) * pot_sq;
    // `0.0 - x` keeps a vanishing drift from printing as -0
    let drift_term = -drift_sq;
    let scale = grad_term.abs() + potential_term.abs() + drift_term.abs() + boundary_term.abs();
    let lhs = grad_term + potential_term + drift_term;
    let residual = if scale > 0.0 { (lhs - boundary_term).abs() / scale } else { 0.0 };
    Ok(PohozaevReport {
        grad_term,
        potential_term,
        drift_term,
        boundary_term,
        residual,
        scale,
    })
}

/// Position of `p` relative to the star-shaped nonexistence threshold
/// `(N+α)/(N−2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    SubcriticalForIdentity,
    CriticalThreshold,
    SupercriticalThreshold,
}

impl Regime {
    pub fn note(&self) -> &'static str {
        "nonexistence for p >= (N+alpha)/(N-2) applies to strictly star-shaped domains; \
         annuli and exterior domains are not star-shaped, so this label reports the regime only"
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::SubcriticalForIdentity => "SubcriticalForIdentity",
            Regime::CriticalThreshold => "CriticalThreshold",
            Regime::SupercriticalThreshold => "SupercriticalThreshold",
        })
    }
}

pub fn nonexistence_threshold(dim: usize, alpha: f64) -> Result<f64> {
    if dim < 3 {
        return Err(Error::ThresholdUndefined);
    }
    check_alpha(dim, alpha)?;
    Ok((dim as f64 + alpha) / (dim as f64 - 2.0))
}

pub fn classify_nonexistence(problem: &Problem) -> Result<Regime> {
    let t = nonexistence_threshold(problem.domain.dim, problem.alpha)?;
    let p = problem.p;
    Ok(if (p - t).abs() <= 1e-12 * t {
        Regime::CriticalThreshold
    } else if p < t {
        Regime::SubcriticalForIdentity
    } else {
        Regime::SupercriticalThreshold
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSweepRow {
    pub alpha: f64,
    pub j_alpha: f64,
    pub j0: f64,
    pub h1_distance: f64,
    pub mu_alpha: f64,
}

#[derive(Debug, Clone)]
pub struct GammaSweep {
    pub rows: Vec<GammaSweepRow>,
    pub local: SolveResult,
    pub minimizers: Vec<SolveResult>,
}

fn nonneg(f: &Field) -> Field {
    f.with_values(f.values().iter().map(|v| v.abs()).collect())
        .expect("same grid")
}

/// Solves the local problem and then the nonlocal one along a decreasing
/// α ladder, warm-starting every solve from the previous minimizer.
pub fn gamma_sweep(
    problem: &Problem,
    grid: &Arc<RadialGrid>,
    alphas: &[f64],
    opts: &SolveOptions,
    kernel_cache: Option<&Path>,
) -> Result<GammaSweep> {
    if problem.domain.is_exterior() {
        return Err(Error::InvalidProblem("the alpha sweep is defined on annuli only".into()));
    }
    if alphas.is_empty() {
        return Err(Error::InvalidProblem("alpha list is empty".into()));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidProblem("alpha list must be strictly decreasing".into()));
    }
    // the local problem is the α = 0 end of the ladder
    let local_failed = |e: Error| Error::SweepFailed {
        alpha: 0.0,
        source: Box::new(e),
    };
    let local = solve_local(problem, grid, opts).map_err(local_failed)?;
    if !local.converged {
        return Err(local_failed(Error::NotConverged));
    }
    let u0 = nonneg(&local.u);
    let mut rows = Vec::with_capacity(alphas.len());
    let mut minimizers = Vec::with_capacity(alphas.len());
    let mut start = local.u.clone();
    for &alpha in alphas {
        let wrap = |e: Error| Error::SweepFailed {
            alpha,
            source: Box::new(e),
        };
        let prob = Problem {
            alpha,
            ..problem.clone()
        };
        let kernel = cached_kernel(kernel_cache, grid.clone(), alpha).map_err(wrap)?;
        let res = minimize_from(&prob, &kernel, &start, opts).map_err(wrap)?;
        if !res.converged {
            return Err(wrap(Error::NotConverged));
        }
        let diff = Field::new(
            grid.clone(),
            nonneg(&res.u).values().iter().zip(u0.values()).map(|(a, b)| a - b).collect(),
        )?;
        rows.push(GammaSweepRow {
            alpha,
            j_alpha: res.j,
            j0: local.j,
            h1_distance: h1_norm(&diff),
            mu_alpha: res.mu,
        });
        start = res.u.clone();
        minimizers.push(res);
    }
    Ok(GammaSweep {
        rows,
        local,
        minimizers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted exponent in `|v| ≈ C r^{-beta}`.
    pub beta: f64,
    pub log_c: f64,
    /// `N/2 − 1`.
    pub strauss: f64,
}

/// Least-squares slope of `log|v|` against `log r` over the outer half of the
/// grid. The outermost node carries the truncation condition and is skipped.
pub fn decay_fit(v: &Field) -> Result<DecayFit> {
    let grid = v.grid();
    if !grid.domain().is_exterior() {
        return Err(Error::InvalidProblem("decay fits need an exterior domain".into()));
    }
    let n = grid.len();
    let window = n / 2..n - 1;
    let mut xs = Vec::with_capacity(window.len());
    let mut ys = Vec::with_capacity(window.len());
    let sign = v.values()[window.start].signum();
    for i in window {
        let val = v.values()[i];
        if val == 0.0 || val.signum() != sign {
            return Err(Error::DecayWindow(format!("v = {val} at r = {}", grid.nodes()[i])));
        }
        xs.push(grid.nodes()[i].ln());
        ys.push(val.abs().ln());
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        beta: -slope,
        log_c: my - slope * mx,
        strauss: grid.dim() as f64 / 2.0 - 1.0,
    })
}

pub fn gamma_sweep_csv(rows: &[GammaSweepRow]) -> String {
    let mut out = String::from("alpha,J_alpha,J0,h1_dist,mu_alpha\n");
    for r in rows {
        out.push_str(&format!(
            "{:?},{:?},{:?},{:?},{:?}\n",
            r.alpha, r.j_alpha, r.j0, r.h1_distance, r.mu_alpha
        ));
    }
    out
}

pub fn pohozaev_csv(report: &PohozaevReport) -> String {
    let mut out = String::from("term,value\n");
    for (name, value) in report.rows() {
        // `+ 0.0` maps -0.0 to 0.0
        out.push_str(&format!("{name},{:?}\n", value + 0.0));
    }
    out
}

/// Outcome of one kernel oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

/// Potential of the unit density on `A_{a,b}` in three dimensions with
/// `α = 2` (Newton's shell theorem).
pub fn newton_shell_potential(a: f64, b: f64, r: f64) -> f64 {
    (r.powi(3) - a.powi(3)) / (3.0 * r) + (b * b - r * r) / 2.0
}

pub const IDENTITY_LADDER: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

/// Runs the kernel oracles that apply to `kernel`'s geometry: closed form
/// against angular quadrature (N = 3), Newton's shell theorem (N = 3,
/// α = 2, annulus), Monte Carlo at five interior radii, and the
/// approximate-identity ladder.
pub fn kernel_check(kernel: &RieszKernel, mc_samples: u64, seed: u64) -> Result<Vec<OracleCheck>> {
    let grid = kernel.grid().clone();
    let dim = grid.dim();
    let alpha = kernel.alpha();
    let nodes = grid.nodes();
    let mut checks = Vec::new();

    if dim == 3 {
        let eval = KernelEvaluator::new(dim, alpha)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let i = rng.random_range(0..nodes.len());
            let mut j = rng.random_range(0..nodes.len() - 1);
            if j >= i {
                j += 1;
            }
            let (r, s) = (nodes[i], nodes[j]);
            let closed = eval.eval(r, s, (r - s).abs());
            let quad = eval.eval_angular(r, s, (r - s).abs());
            worst = worst.max((closed - quad).abs() / quad.abs());
        }
        checks.push(OracleCheck {
            name: "closed-form".into(),
            deviation: worst,
            tolerance: 1e-8,
            passed: worst <= 1e-8,
            detail: "50 random node pairs, closed form vs angular quadrature".into(),
        });
    }

    let one = Field::from_fn(grid.clone(), |_| 1.0);
    let conv = kernel.mul(one.values());
    if let (3, false) = (dim, grid.domain().is_exterior()) {
        if alpha == 2.0 {
            let (a, b) = (grid.domain().inner(), grid.domain().outer());
            let worst = nodes
                .iter()
                .zip(&conv)
                .map(|(&r, c)| {
                    let w = newton_shell_potential(a, b, r);
                    (c - w).abs() / w
                })
                .fold(0.0, f64::max);
            checks.push(OracleCheck {
                name: "newton-shell".into(),
                deviation: worst,
                tolerance: 1e-6,
                passed: worst <= 1e-6,
                detail: "max relative deviation over all nodes".into(),
            });
        }
    }

    if mc_samples > 0 {
        let window = interior_window(&grid);
        let picks: Vec<usize> = (0..5).map(|k| window[k * (window.len() - 1) / 4]).collect();
        let mut worst: f64 = 0.0;
        for (k, &i) in picks.iter().enumerate() {
            let est = mc_oracle(&one, alpha, nodes[i], mc_samples, seed.wrapping_add(k as u64))?;
            worst = worst.max((conv[i] - est.mean).abs() / est.std_error);
        }
        checks.push(OracleCheck {
            name: "monte-carlo".into(),
            deviation: worst,
            tolerance: 3.0,
            passed: worst <= 3.0,
            detail: format!("max |kernel - mc| in standard errors, 5 radii, {mc_samples} samples"),
        });
    }

    let rows = identity_limit_check(&one, &IDENTITY_LADDER)?;
    let decreasing = rows.windows(2).all(|w| w[1].deviation < w[0].deviation);
    let table: Vec<String> = rows.iter().map(|r| format!("{}:{:.3e}", r.alpha, r.deviation)).collect();
    checks.push(OracleCheck {
        name: "identity-limit".into(),
        deviation: rows.last().map_or(0.0, |r| r.deviation),
        tolerance: rows.first().map_or(0.0, |r| r.deviation),
        passed: decreasing,
        detail: format!("sup interior |I_a*1 - 1| strictly decreasing: {}", table.join(" ")),
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::radial::{build_grid, Grading, RadialDomain};

    fn problem(dim: usize, alpha: f64, p: f64) -> Problem {
        Problem {
            domain: RadialDomain::annulus(dim, 1.0, 2.0).unwrap(),
            bc: BoundaryCondition::Dirichlet,
            potential: Potential::constant(1.0),
            p,
            alpha,
        }
    }

    #[test]
    fn classification() {
        assert_eq!(classify_nonexistence(&problem(3, 1.0, 4.0)).unwrap(), Regime::CriticalThreshold);
        assert_eq!(
            classify_nonexistence(&problem(3, 1.0, 3.0)).unwrap(),
            Regime::SubcriticalForIdentity
        );
        assert_eq!(
            classify_nonexistence(&problem(4, 2.0, 3.5)).unwrap(),
            Regime::SupercriticalThreshold
        );
        assert_eq!(classify_nonexistence(&problem(2, 1.0, 3.0)).unwrap_err(), Error::ThresholdUndefined);
    }

    #[test]
    fn pohozaev_trivial_cases() {
        let p = problem(3, 1.5, 2.0);
        let grid = Arc::new(build_grid(p.domain, 64, Grading::Uniform).unwrap());
        let rep = pohozaev_residual(&Field::zeros(grid.clone()), &p).unwrap();
        assert_eq!(rep.rows().map(|r| r.1), [0.0; 5]);
        let v = Field::from_fn(grid, |r| (r - 1.0) * (2.0 - r));
        assert_eq!(pohozaev_residual(&v, &p).unwrap().drift_term, 0.0);
        let neumann = Problem {
            bc: BoundaryCondition::Neumann,
            ..p
        };
        assert_eq!(pohozaev_residual(&v, &neumann).unwrap_err(), Error::DirichletOnly);
    }

    #[test]
    fn boundary_derivatives_are_second_order() {
        let x = [1.0, 1.1, 1.25];
        let f = x.map(|t: f64| t * t);
        assert!((one_sided_derivative(x, f) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn decay_fit_power_law() {
        let d = RadialDomain::exterior(3, 1.0, 16.0).unwrap();
        let grid = Arc::new(build_grid(d, 256, Grading::log_spaced(&d, 256)).unwrap());
        let fit = decay_fit(&Field::from_fn(grid.clone(), |r| r.powi(-2))).unwrap();
        assert!((fit.beta - 2.0).abs() < 1e-3);
        assert_eq!(fit.strauss, 0.5);
        assert!(matches!(decay_fit(&Field::zeros(grid)), Err(Error::DecayWindow(_))));
    }

    #[test]
    fn csv_layout() {
        let row = GammaSweepRow {
            alpha: 0.4,
            j_alpha: 1.0,
            j0: 0.9,
            h1_distance: 1e-20,
            mu_alpha: 2.0,
        };
        assert_eq!(gamma_sweep_csv(&[row]), "alpha,J_alpha,J0,h1_dist,mu_alpha\n0.4,1.0,0.9,1e-20,2.0\n");
    }
}
