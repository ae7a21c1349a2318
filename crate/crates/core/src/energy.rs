//! The quadratic energy `Q(u) = ½∫(|∇u|² + V u²)`, the nonlocal constraint
//! functional `D_α(u) = ∫(I_α*|u|^p)|u|^p`, its local analogue `∫|u|^{2p}`,
//! and their discrete gradients.
//!
//! Fields are piecewise linear in `r`. Gradients are returned in two forms:
//! raw partial derivatives (`*_partials`), and nodal fields `g` with
//! `⟨g, v⟩ = Σ ∂_i F v_i` for the weighted inner product
//! `⟨f, g⟩ = ω Σ w_i f_i g_i ≈ ∫ f g dx`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::radial::{Field, RadialDomain, RadialGrid};
use crate::riesz::{check_alpha, RieszKernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::Dirichlet => "dirichlet",
        })
    }
}

/// A boundary-value problem for the Choquard equation.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub domain: RadialDomain,
    pub bc: BoundaryCondition,
    pub potential: Potential,
    pub p: f64,
    pub alpha: f64,
}

impl Problem {
    /// Checks the existence hypotheses; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let dim = self.domain.dim;
        check_alpha(dim, self.alpha)?;
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(Error::InvalidProblem(format!("p must be >= 1, got {}", self.p)));
        }
        let floor = self.potential.declared_floor;
        match self.bc {
            BoundaryCondition::Neumann if floor <= 0.0 => {
                return Err(Error::InvalidProblem(format!(
                    "Neumann problems need inf V > 0 (existence hypothesis), got {floor}"
                )));
            }
            BoundaryCondition::Dirichlet if (dim == 2 || self.domain.is_exterior()) && floor <= 0.0 => {
                return Err(Error::InvalidProblem(format!(
                    "Dirichlet problems with N = 2 or exterior domains need inf V > 0, got {floor}"
                )));
            }
            BoundaryCondition::Dirichlet if floor < 0.0 => {
                return Err(Error::InvalidProblem(format!(
                    "Dirichlet problems need V >= 0, got inf V = {floor}"
                )));
            }
            _ => {}
        }
        let mut warnings = Vec::new();
        if self.domain.is_exterior() {
            let lower = (dim as f64 + self.alpha) / dim as f64;
            if self.p <= lower {
                warnings.push(format!(
                    "p = {} is outside theorem range p > (N+alpha)/N ≈ {lower:.3} for exterior domains",
                    self.p
                ));
            }
        }
        Ok(warnings)
    }
}

/// Symmetric tridiagonal matrix with a direct solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    /// Thomas algorithm; the matrix must be nonsingular.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut beta = self.diag[0];
        d[0] = rhs[0] / beta;
        for i in 1..n {
            c[i] = self.off[i - 1] / beta;
            beta = self.diag[i] - self.off[i - 1] * c[i];
            d[i] = (rhs[i] - self.off[i - 1] * d[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i + 1] * d[i + 1];
        }
        d
    }

    /// Pins `rows` to the identity, decoupling them from their neighbours.
    pub fn pin(&mut self, rows: &[usize]) {
        for &i in rows {
            self.diag[i] = 1.0;
            if i > 0 {
                self.off[i - 1] = 0.0;
            }
            if i < self.off.len() {
                self.off[i] = 0.0;
            }
        }
    }
}

/// Discretized `Q` on a fixed grid: cell stiffness plus nodal mass with `V`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    grid: Arc<RadialGrid>,
    bc: BoundaryCondition,
    v_nodes: Vec<f64>,
    /// `ω ∫ (∂φ_i)(∂φ_j) r^{N-1} + ω w_i V_i δ_ij`
    operator: SymTridiagonal,
    /// `ω m_k / h_k²` per cell.
    stiffness: Vec<f64>,
    /// `ω w_i V_i` per node.
    mass: Vec<f64>,
}

/// Stiffness with the given nodal mass coefficients, scaled by `ω`.
fn stiffness_plus_mass(grid: &RadialGrid, mass_coeff: &[f64]) -> SymTridiagonal {
    let n = grid.len();
    let omega = grid.sphere_measure();
    let nodes = grid.nodes();
    let mut diag: Vec<f64> = grid
        .weights()
        .iter()
        .zip(mass_coeff)
        .map(|(w, c)| omega * w * c)
        .collect();
    let mut off = vec![0.0; n - 1];
    for (k, m) in grid.cell_moments().iter().enumerate() {
        let h = nodes[k + 1] - nodes[k];
        let s = omega * m / (h * h);
        diag[k] += s;
        diag[k + 1] += s;
        off[k] = -s;
    }
    SymTridiagonal { diag, off }
}

impl QuadraticForm {
    pub fn new(problem: &Problem, grid: Arc<RadialGrid>) -> Result<Self> {
        if grid.domain() != &problem.domain {
            return Err(Error::GridMismatch);
        }
        let v_nodes: Vec<f64> = grid.nodes().iter().map(|&r| problem.potential.value(r)).collect();
        if v_nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("V must be finite at every node".into()));
        }
        let operator = stiffness_plus_mass(&grid, &v_nodes);
        let omega = grid.sphere_measure();
        let nodes = grid.nodes();
        let stiffness = grid
            .cell_moments()
            .iter()
            .zip(nodes.windows(2))
            .map(|(m, c)| omega * m / ((c[1] - c[0]) * (c[1] - c[0])))
            .collect();
        let mass = grid.weights().iter().zip(&v_nodes).map(|(w, v)| omega * w * v).collect();
        Ok(Self {
            grid,
            bc: problem.bc,
            v_nodes,
            operator,
            stiffness,
            mass,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn potential_nodes(&self) -> &[f64] {
        &self.v_nodes
    }

    pub fn operator(&self) -> &SymTridiagonal {
        &self.operator
    }

    /// Indices held at zero by the boundary condition.
    pub fn pinned(&self) -> Vec<usize> {
        match self.bc {
            BoundaryCondition::Neumann => Vec::new(),
            BoundaryCondition::Dirichlet => vec![0, self.grid.len() - 1],
        }
    }

    /// `½ uᵀAv`, summed cell by cell over differences to avoid the
    /// cancellation in `A u`.
    fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let grad: f64 = self
            .stiffness
            .iter()
            .enumerate()
            .map(|(k, s)| s * (u[k + 1] - u[k]) * (v[k + 1] - v[k]))
            .sum();
        let mass: f64 = self.mass.iter().zip(u).zip(v).map(|((m, a), b)| m * a * b).sum();
        0.5 * (grad + mass)
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        self.bilinear(u, u)
    }

    /// `Q(to) − Q(from)` as `½(to−from)ᵀA(to+from)`, accurate even when the
    /// difference is far below the round-off level of `Q` itself.
    pub fn energy_difference(&self, from: &[f64], to: &[f64]) -> f64 {
        let delta: Vec<f64> = to.iter().zip(from).map(|(a, b)| a - b).collect();
        let sum: Vec<f64> = to.iter().zip(from).map(|(a, b)| a + b).collect();
        self.bilinear(&delta, &sum)
    }

    /// `∂Q/∂u_i`; zero on Dirichlet boundary nodes.
    pub fn partials(&self, u: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self.mass.iter().zip(u).map(|(m, v)| m * v).collect();
        for (k, s) in self.stiffness.iter().enumerate() {
            let flux = s * (u[k + 1] - u[k]);
            g[k] -= flux;
            g[k + 1] += flux;
        }
        for i in self.pinned() {
            g[i] = 0.0;
        }
        g
    }

    /// The H¹ Gram matrix `ω(∫u'v' r^{N-1} + Σ w_i u_i v_i)` with pinned
    /// Dirichlet rows; used as the metric for gradients.
    pub fn h1_gram(&self) -> SymTridiagonal {
        let mut g = stiffness_plus_mass(&self.grid, &vec![1.0; self.grid.len()]);
        g.pin(&self.pinned());
        g
    }
}

/// Nodal field representing raw partials in the weighted inner product.
pub fn partials_to_field(grid: &Arc<RadialGrid>, partials: &[f64]) -> Field {
    let omega = grid.sphere_measure();
    let values = partials
        .iter()
        .zip(grid.weights())
        .map(|(g, w)| g / (omega * w))
        .collect();
    Field::new(grid.clone(), values).expect("finite partials")
}

/// `Q(u)`.
pub fn quadratic_energy(u: &Field, problem: &Problem) -> Result<f64> {
    let q = QuadraticForm::new(problem, u.grid().clone())?;
    Ok(q.energy(u.values()))
}

/// Nodal gradient of `Q` in the weighted inner product.
pub fn grad_quadratic(u: &Field, problem: &Problem) -> Result<Field> {
    let q = QuadraticForm::new(problem, u.grid().clone())?;
    Ok(partials_to_field(u.grid(), &q.partials(u.values())))
}

fn abs_pow(u: &[f64], p: f64) -> Vec<f64> {
    u.iter().map(|v| v.abs().powf(p)).collect()
}

/// `sign(u)|u|^{p-1}`, vanishing where `u = 0`.
fn signed_pow(v: f64, p: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().powf(p - 1.0)
    }
}

/// `D_α(u) = ω Σ w_i |u_i|^p (M |u|^p)_i` on raw nodal values.
pub fn riesz_energy_values(kernel: &RieszKernel, u: &[f64], p: f64) -> f64 {
    let grid = kernel.grid();
    let g = abs_pow(u, p);
    let conv = kernel.mul(&g);
    grid.sphere_measure()
        * grid
            .weights()
            .iter()
            .zip(&g)
            .zip(&conv)
            .map(|((w, a), b)| w * a * b)
            .sum::<f64>()
}

/// Exact partials of the discrete `D_α`:
/// `p sign(u_k)|u_k|^{p-1} ω [w_k (Mg)_k + (Mᵀ(w∘g))_k]`.
pub fn riesz_partials_values(kernel: &RieszKernel, u: &[f64], p: f64) -> Vec<f64> {
    let grid = kernel.grid();
    let omega = grid.sphere_measure();
    let w = grid.weights();
    let g = abs_pow(u, p);
    let conv = kernel.mul(&g);
    let wg: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a * b).collect();
    let back = kernel.mul_transpose(&wg);
    (0..u.len())
        .map(|k| p * signed_pow(u[k], p) * omega * (w[k] * conv[k] + back[k]))
        .collect()
}

/// `D_α(u) = ∫(I_α*|u|^p)|u|^p`.
pub fn riesz_energy(u: &Field, kernel: &RieszKernel, p: f64) -> Result<f64> {
    u.ensure_grid(kernel.grid())?;
    Ok(riesz_energy_values(kernel, u.values(), p))
}

/// Nodal gradient of `D_α` in the weighted inner product.
pub fn grad_riesz(u: &Field, kernel: &RieszKernel, p: f64) -> Result<Field> {
    u.ensure_grid(kernel.grid())?;
    Ok(partials_to_field(kernel.grid(), &riesz_partials_values(kernel, u.values(), p)))
}

/// `∫|u|^{2p}` with the nodal rule.
pub fn local_energy_values(grid: &RadialGrid, u: &[f64], p: f64) -> f64 {
    grid.sphere_measure()
        * grid
            .weights()
            .iter()
            .zip(u)
            .map(|(w, v)| w * v.abs().powf(2.0 * p))
            .sum::<f64>()
}

pub fn local_partials_values(grid: &RadialGrid, u: &[f64], p: f64) -> Vec<f64> {
    let omega = grid.sphere_measure();
    grid.weights()
        .iter()
        .zip(u)
        .map(|(w, v)| omega * w * 2.0 * p * signed_pow(*v, 2.0 * p))
        .collect()
}

/// `(I_α*|v|^p)|v|^{p-2}v` at the nodes.
pub fn choquard_nonlinearity(kernel: &RieszKernel, v: &[f64], p: f64) -> Vec<f64> {
    let conv = kernel.mul(&abs_pow(v, p));
    conv.iter().zip(v).map(|(c, x)| c * signed_pow(*x, p)).collect()
}
