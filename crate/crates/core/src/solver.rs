//! Constrained minimization of `Q` over `{D_α(u) = 1}` (or `{∫|u|^{2p} = 1}`
//! for the local problem), multiplier extraction and rescaling.
//!
//! The iteration is a projected Sobolev-gradient descent: gradients are
//! represented in the H¹ metric (tridiagonal Gram matrix), projected onto the
//! tangent space of the constraint, and each step is retracted back onto the
//! constraint by homogeneous rescaling.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{
    local_energy_values, local_partials_values, riesz_energy_values, riesz_partials_values,
    BoundaryCondition, Problem, QuadraticForm, SymTridiagonal,
};
use crate::error::{Error, Result};
use crate::radial::{Field, RadialGrid};
use crate::riesz::RieszKernel;

/// A homogeneous constraint functional `C` with `C(σu) = σ^degree C(u)`.
pub trait Constraint {
    fn value(&self, u: &[f64]) -> f64;
    fn partials(&self, u: &[f64]) -> Vec<f64>;
    fn degree(&self) -> f64;
}

/// `D_α(u) = ∫(I_α*|u|^p)|u|^p`.
pub struct RieszConstraint<'a> {
    pub kernel: &'a RieszKernel,
    pub p: f64,
}

impl Constraint for RieszConstraint<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        riesz_energy_values(self.kernel, u, self.p)
    }
    fn partials(&self, u: &[f64]) -> Vec<f64> {
        riesz_partials_values(self.kernel, u, self.p)
    }
    fn degree(&self) -> f64 {
        2.0 * self.p
    }
}

/// `∫|u|^{2p}`, the local limit of `D_α`.
pub struct LocalConstraint<'a> {
    pub grid: &'a RadialGrid,
    pub p: f64,
}

impl Constraint for LocalConstraint<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        local_energy_values(self.grid, u, self.p)
    }
    fn partials(&self, u: &[f64]) -> Vec<f64> {
        local_partials_values(self.grid, u, self.p)
    }
    fn degree(&self) -> f64 {
        2.0 * self.p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum StepRule {
    Fixed { tau: f64 },
    Armijo { c: f64, shrink: f64, initial: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Armijo {
            c: 1e-4,
            shrink: 0.5,
            initial: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Bound on the tangent gradient, measured in the dual H¹ norm.
    pub tol_grad: f64,
    pub tol_constraint: f64,
    pub step_rule: StepRule,
    pub seed: u64,
    pub enforce_nonneg: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            tol_grad: 1e-9,
            tol_constraint: 1e-12,
            step_rule: StepRule::default(),
            seed: 0,
            enforce_nonneg: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOptions(m));
        if !(self.tol_grad > 0.0) {
            return bad(format!("tol_grad must be > 0, got {}", self.tol_grad));
        }
        if !(self.tol_constraint > 0.0) {
            return bad(format!("tol_constraint must be > 0, got {}", self.tol_constraint));
        }
        match self.step_rule {
            StepRule::Fixed { tau } if !(tau > 0.0 && tau.is_finite()) => {
                bad(format!("step size must be > 0, got {tau}"))
            }
            StepRule::Armijo { c, shrink, initial } => {
                if !(c > 0.0 && c < 1.0) {
                    bad(format!("armijo c must lie in (0,1), got {c}"))
                } else if !(shrink > 0.0 && shrink < 1.0) {
                    bad(format!("armijo shrink must lie in (0,1), got {shrink}"))
                } else if !(initial > 0.0 && initial.is_finite()) {
                    bad(format!("initial step must be > 0, got {initial}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Constrained minimizer, normalized to unit constraint value.
    pub u: Field,
    /// `Q(u)`, the minimal energy.
    pub j: f64,
    /// `2 Q(u)`.
    pub mu: f64,
    /// Multiplier from the least-squares fit `∇Q ≈ λ∇C`, scaled to match `mu`.
    pub mu_least_squares: f64,
    /// `mu^{1/(2p-2)} u`; absent for `p = 1`.
    pub v: Option<Field>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub constraint_drift: f64,
    pub converged: bool,
    pub seed: u64,
    /// `Q` at every accepted iterate, starting with the initial guess.
    pub energy_history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn zero_pinned(v: &mut [f64], pinned: &[usize]) {
    for &i in pinned {
        v[i] = 0.0;
    }
}

/// Raw positive starting profile: a boundary-compatible bump times a seeded
/// low-frequency perturbation.
pub fn initial_profile(problem: &Problem, grid: &Arc<RadialGrid>, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (a, b) = (grid.domain().inner(), grid.domain().outer());
    let exterior = problem.domain.is_exterior();
    let dirichlet = problem.bc == BoundaryCondition::Dirichlet;
    let mut values: Vec<f64> = grid
        .nodes()
        .iter()
        .map(|&r| {
            let x = (r - a) / (b - a);
            let bump = match (exterior, dirichlet) {
                (false, true) => (std::f64::consts::PI * x).sin(),
                (false, false) => 1.0 + 0.5 * (std::f64::consts::PI * x).sin(),
                (true, true) => (r - a) * (-(r - a)).exp() * (1.0 - x),
                (true, false) => (-(r - a)).exp(),
            };
            let wobble: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let k = (k + 1) as f64;
                    c * (k * std::f64::consts::PI * x).cos() / k
                })
                .sum();
            bump * (1.0 + 0.1 * wobble)
        })
        .collect();
    if dirichlet {
        values[0] = 0.0;
        *values.last_mut().expect("non-empty grid") = 0.0;
    }
    Field::new(grid.clone(), values).expect("finite profile")
}

/// Seeded positive start, normalized to `D_α = 1`.
pub fn initial_guess(problem: &Problem, kernel: &RieszKernel, seed: u64) -> Result<Field> {
    let raw = initial_profile(problem, kernel.grid(), seed);
    renormalize(&raw, kernel, problem.p)
}

fn renormalize_values(constraint: &dyn Constraint, u: &[f64]) -> Result<Vec<f64>> {
    let c = constraint.value(u);
    if !(c > 0.0) || u.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroField);
    }
    let sigma = c.powf(-1.0 / constraint.degree());
    Ok(u.iter().map(|v| sigma * v).collect())
}

/// `σu` with `σ = D_α(u)^{-1/(2p)}`, so that `D_α(σu) = 1`.
pub fn renormalize(u: &Field, kernel: &RieszKernel, p: f64) -> Result<Field> {
    u.ensure_grid(kernel.grid())?;
    let values = renormalize_values(&RieszConstraint { kernel, p }, u.values())?;
    u.with_values(values)
}

/// Same as [`renormalize`] for the constraint `∫|u|^{2p} = 1`.
pub fn renormalize_local(u: &Field, p: f64) -> Result<Field> {
    let values = renormalize_values(&LocalConstraint { grid: u.grid(), p }, u.values())?;
    u.with_values(values)
}

struct Tangent {
    direction: Vec<f64>,
    norm: f64,
    lambda: f64,
}

/// Projects the Sobolev gradient of `Q` onto the tangent space of `C`.
fn tangent(
    qf: &QuadraticForm,
    gram: &SymTridiagonal,
    constraint: &dyn Constraint,
    pinned: &[usize],
    u: &[f64],
) -> Tangent {
    let gq = qf.partials(u);
    let mut gd = constraint.partials(u);
    zero_pinned(&mut gd, pinned);
    let zq = gram.solve(&gq);
    let zd = gram.solve(&gd);
    let lambda = dot(&gq, &zd) / dot(&gd, &zd);
    let direction: Vec<f64> = zq.iter().zip(&zd).map(|(a, b)| a - lambda * b).collect();
    let residual: Vec<f64> = gq.iter().zip(&gd).map(|(a, b)| a - lambda * b).collect();
    let norm = dot(&residual, &direction).max(0.0).sqrt();
    Tangent {
        direction,
        norm,
        lambda,
    }
}

fn minimize_with(
    problem: &Problem,
    grid: &Arc<RadialGrid>,
    constraint: &dyn Constraint,
    start: &Field,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    problem.validate()?;
    start.ensure_grid(grid)?;
    let qf = QuadraticForm::new(problem, grid.clone())?;
    let gram = qf.h1_gram();
    let pinned = qf.pinned();

    let mut u = start.values().to_vec();
    zero_pinned(&mut u, &pinned);
    if opts.enforce_nonneg {
        u.iter_mut().for_each(|v| *v = v.abs());
    }
    let mut u = renormalize_values(constraint, &u)?;
    let mut q = qf.energy(&u);
    let mut history = vec![q];
    let mut iterations = 0;

    let (t, converged) = loop {
        let t = tangent(&qf, &gram, constraint, &pinned, &u);
        if t.norm <= opts.tol_grad {
            break (t, true);
        }
        if iterations == opts.max_iters {
            break (t, false);
        }
        let trial = |tau: f64| -> Option<(Vec<f64>, f64)> {
            let mut cand: Vec<f64> = u.iter().zip(&t.direction).map(|(a, d)| a - tau * d).collect();
            zero_pinned(&mut cand, &pinned);
            if opts.enforce_nonneg {
                cand.iter_mut().for_each(|v| *v = v.abs());
            }
            let cand = renormalize_values(constraint, &cand).ok()?;
            let dq = qf.energy_difference(&u, &cand);
            dq.is_finite().then_some((cand, dq))
        };
        let (next, _) = match opts.step_rule {
            StepRule::Fixed { tau } => trial(tau).ok_or(Error::StepUnderflow { iteration: iterations })?,
            StepRule::Armijo { c, shrink, initial } => {
                let mut tau = initial;
                loop {
                    if let Some((cand, dq)) = trial(tau) {
                        // Near the minimum the predicted decrease drops below
                        // the round-off of Q on the retracted constraint; such
                        // steps are taken as long as Q does not visibly grow.
                        let noise = 4.0 * f64::EPSILON * q.abs();
                        let predicted = tau * t.norm * t.norm;
                        if dq <= -c * predicted || (dq <= noise && predicted <= 256.0 * noise) {
                            break (cand, dq);
                        }
                    }
                    tau *= shrink;
                    if tau < 1e-16 * initial {
                        return Err(Error::StepUnderflow { iteration: iterations });
                    }
                }
            }
        };
        u = next;
        q = qf.energy(&u);
        history.push(q);
        iterations += 1;
    };

    let degree = constraint.degree();
    let drift = (constraint.value(&u) - 1.0).abs();
    let p = problem.p;
    let mu = 2.0 * q;
    let u = Field::new(grid.clone(), u)?;
    let v = if p > 1.0 { Some(rescale_to_solution(&u, mu, p)?) } else { None };
    Ok(SolveResult {
        u,
        j: q,
        mu,
        mu_least_squares: degree * t.lambda,
        v,
        iterations,
        grad_norm: t.norm,
        constraint_drift: drift,
        converged: converged && drift <= opts.tol_constraint,
        seed: opts.seed,
        energy_history: history,
    })
}

fn check_kernel(problem: &Problem, kernel: &RieszKernel) -> Result<()> {
    if kernel.grid().domain() != &problem.domain || kernel.alpha() != problem.alpha {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Minimizes `Q` over `{D_α = 1}` from the seeded initial guess.
///
/// Running out of iterations is not an error: the partial result comes back
/// with `converged = false`.
pub fn minimize_constrained(problem: &Problem, kernel: &RieszKernel, opts: &SolveOptions) -> Result<SolveResult> {
    check_kernel(problem, kernel)?;
    let start = initial_profile(problem, kernel.grid(), opts.seed);
    minimize_from(problem, kernel, &start, opts)
}

/// Like [`minimize_constrained`] with an explicit (unnormalized) start.
pub fn minimize_from(problem: &Problem, kernel: &RieszKernel, start: &Field, opts: &SolveOptions) -> Result<SolveResult> {
    check_kernel(problem, kernel)?;
    let constraint = RieszConstraint { kernel, p: problem.p };
    minimize_with(problem, kernel.grid(), &constraint, start, opts)
}

/// Minimizes `Q` over `{∫|u|^{2p} = 1}`.
pub fn solve_local(problem: &Problem, grid: &Arc<RadialGrid>, opts: &SolveOptions) -> Result<SolveResult> {
    let start = initial_profile(problem, grid, opts.seed);
    solve_local_from(problem, grid, &start, opts)
}

pub fn solve_local_from(
    problem: &Problem,
    grid: &Arc<RadialGrid>,
    start: &Field,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let constraint = LocalConstraint { grid, p: problem.p };
    minimize_with(problem, grid, &constraint, start, opts)
}

/// `μ = 2Q(u)` for a converged run.
pub fn lagrange_multiplier(result: &SolveResult) -> Result<f64> {
    if !result.converged {
        return Err(Error::NotConverged);
    }
    Ok(result.mu)
}

/// `v = μ^{1/(2p-2)} u`.
pub fn rescale_to_solution(u: &Field, mu: f64, p: f64) -> Result<Field> {
    if p <= 1.0 {
        return Err(Error::NoRescaling);
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidProblem(format!("multiplier must be positive, got {mu}")));
    }
    Ok(u.scaled(mu.powf(1.0 / (2.0 * p - 2.0))))
}

/// `‖∂Q(u) − (μ/deg C) ∂C(u)‖_{H⁻¹} / ‖u‖_{H¹}` over the admissible test space.
pub fn multiplier_residual(
    problem: &Problem,
    constraint: &dyn Constraint,
    u: &Field,
    mu: f64,
) -> Result<f64> {
    let qf = QuadraticForm::new(problem, u.grid().clone())?;
    let gram = qf.h1_gram();
    let pinned = qf.pinned();
    let scale = mu / constraint.degree();
    let mut r: Vec<f64> = qf
        .partials(u.values())
        .iter()
        .zip(constraint.partials(u.values()))
        .map(|(a, b)| a - scale * b)
        .collect();
    zero_pinned(&mut r, &pinned);
    let mut uu = u.values().to_vec();
    zero_pinned(&mut uu, &pinned);
    let norm = dot(&uu, &gram.mul(&uu)).sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(&r, &gram.solve(&r)).max(0.0).sqrt() / norm)
}

/// Relative weak residual of `−Δv + Vv = (I_α*|v|^p)|v|^{p−2}v`.
pub fn pde_residual(v: &Field, problem: &Problem, kernel: &RieszKernel) -> Result<f64> {
    v.ensure_grid(kernel.grid())?;
    multiplier_residual(problem, &RieszConstraint { kernel, p: problem.p }, v, 1.0)
}

/// Relative weak residual of `−Δv + Vv = |v|^{2p−2}v`.
pub fn local_pde_residual(v: &Field, problem: &Problem) -> Result<f64> {
    multiplier_residual(problem, &LocalConstraint { grid: v.grid(), p: problem.p }, v, 1.0)
}
