//! Radial geometry: domains, graded grids, weighted quadrature and norms.
//!
//! Every N-dimensional integral of a radial function is reduced to
//! `ω_{N-1} ∫ f(r) r^{N-1} dr`, discretized with piecewise-linear hats on the
//! grid nodes. Hat moments of `r^{N-1}` are computed exactly, so the nodal
//! rule integrates every piecewise-linear field without error.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

/// Radial geometry of the computational domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainShape {
    /// `{a < |x| < b}`.
    Annulus { a: f64, b: f64 },
    /// `{|x| > a}`, truncated at `truncation` for computation.
    Exterior { a: f64, truncation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialDomain {
    pub shape: DomainShape,
    pub dim: usize,
}

impl RadialDomain {
    pub fn annulus(dim: usize, a: f64, b: f64) -> Result<Self> {
        Self::new(DomainShape::Annulus { a, b }, dim)
    }

    pub fn exterior(dim: usize, a: f64, truncation: f64) -> Result<Self> {
        Self::new(DomainShape::Exterior { a, truncation }, dim)
    }

    pub fn new(shape: DomainShape, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDomain(format!("dimension must be >= 2, got {dim}")));
        }
        let (a, outer) = match shape {
            DomainShape::Annulus { a, b } => (a, b),
            DomainShape::Exterior { a, truncation } => (a, truncation),
        };
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidDomain(format!("inner radius must be > 0, got {a}")));
        }
        if !(outer.is_finite() && outer > a) {
            return Err(Error::InvalidDomain(format!(
                "outer radius {outer} must exceed inner radius {a}"
            )));
        }
        Ok(Self { shape, dim })
    }

    pub fn inner(&self) -> f64 {
        match self.shape {
            DomainShape::Annulus { a, .. } | DomainShape::Exterior { a, .. } => a,
        }
    }

    /// Outer radius of the computational domain (`b`, or the truncation radius).
    pub fn outer(&self) -> f64 {
        match self.shape {
            DomainShape::Annulus { b, .. } => b,
            DomainShape::Exterior { truncation, .. } => truncation,
        }
    }

    pub fn is_exterior(&self) -> bool {
        matches!(self.shape, DomainShape::Exterior { .. })
    }

    /// Closed-form volume of the computational domain.
    pub fn volume(&self) -> f64 {
        let n = self.dim as f64;
        sphere_measure(self.dim) / n * (self.outer().powf(n) - self.inner().powf(n))
    }
}

/// Surface measure of the unit sphere in R^N: `2 π^{N/2} / Γ(N/2)`.
pub fn sphere_measure(dim: usize) -> f64 {
    let half = dim as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(half) / gamma(half)
}

/// Node distribution along the radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grading {
    Uniform,
    /// Consecutive cell widths grow by `ratio`.
    Geometric { ratio: f64 },
}

impl Grading {
    /// Geometric grading whose cell widths scale with `r`, i.e. nodes equally
    /// spaced in `log r`.
    pub fn log_spaced(domain: &RadialDomain, cells: usize) -> Self {
        Grading::Geometric {
            ratio: (domain.outer() / domain.inner()).powf(1.0 / cells.max(1) as f64),
        }
    }
}

/// Radial nodes with exact hat weights for the measure `r^{N-1} dr`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    domain: RadialDomain,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    cell_moments: Vec<f64>,
    sphere_measure: f64,
}

pub const MIN_CELLS: usize = 16;

/// Builds a grid with `cells` cells (`cells + 1` nodes).
pub fn build_grid(domain: RadialDomain, cells: usize, grading: Grading) -> Result<RadialGrid> {
    if cells < MIN_CELLS {
        return Err(Error::InvalidGrid(format!(
            "need at least {MIN_CELLS} cells, got {cells}"
        )));
    }
    let a = domain.inner();
    let b = domain.outer();
    let mut nodes = Vec::with_capacity(cells + 1);
    match grading {
        Grading::Uniform => {
            let h = (b - a) / cells as f64;
            nodes.extend((0..=cells).map(|i| a + h * i as f64));
        }
        Grading::Geometric { ratio } => {
            if !(ratio.is_finite() && ratio > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "geometric ratio must be positive, got {ratio}"
                )));
            }
            // widths h0 * ratio^k, normalized to span [a, b]
            let mut widths = Vec::with_capacity(cells);
            let mut w = 1.0;
            for _ in 0..cells {
                widths.push(w);
                w *= ratio;
            }
            let total: f64 = widths.iter().sum();
            let mut r = a;
            nodes.push(a);
            for w in &widths[..cells - 1] {
                r += (b - a) * w / total;
                nodes.push(r);
            }
            nodes.push(b);
        }
    }
    *nodes.last_mut().expect("non-empty") = b;
    RadialGrid::from_nodes(domain, nodes)
}

impl RadialGrid {
    /// Builds a grid from explicit nodes; the endpoints must match the domain.
    pub fn from_nodes(domain: RadialDomain, nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < MIN_CELLS + 1 {
            return Err(Error::InvalidGrid(format!(
                "need at least {} nodes, got {}",
                MIN_CELLS + 1,
                nodes.len()
            )));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("nodes must be strictly increasing".into()));
        }
        let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
        if first != domain.inner() || last != domain.outer() {
            return Err(Error::InvalidGrid(format!(
                "grid spans [{first}, {last}] but domain is [{}, {}]",
                domain.inner(),
                domain.outer()
            )));
        }
        let power = (domain.dim - 1) as i32;
        let rule = GaussRule::new(domain.dim / 2 + 2);
        let mut weights = vec![0.0; nodes.len()];
        let mut cell_moments = Vec::with_capacity(nodes.len() - 1);
        for (k, cell) in nodes.windows(2).enumerate() {
            let (lo, hi) = (cell[0], cell[1]);
            let h = hi - lo;
            let mut m0 = 0.0;
            let mut left = 0.0;
            let mut right = 0.0;
            for (r, w) in rule.mapped(lo, hi) {
                let g = w * r.powi(power);
                m0 += g;
                left += g * (hi - r) / h;
                right += g * (r - lo) / h;
            }
            cell_moments.push(m0);
            weights[k] += left;
            weights[k + 1] += right;
        }
        Ok(Self {
            sphere_measure: sphere_measure(domain.dim),
            domain,
            nodes,
            weights,
            cell_moments,
        })
    }

    pub fn domain(&self) -> &RadialDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Hat weights `w_i = ∫ φ_i r^{N-1} dr`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_{cell} r^{N-1} dr` per cell.
    pub fn cell_moments(&self) -> &[f64] {
        &self.cell_moments
    }

    pub fn sphere_measure(&self) -> f64 {
        self.sphere_measure
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Content hash of dimension, domain and node bits, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.domain.dim as u64).to_le_bytes());
        hasher.update(self.domain.inner().to_bits().to_le_bytes());
        hasher.update(self.domain.outer().to_bits().to_le_bytes());
        hasher.update([u8::from(self.domain.is_exterior())]);
        for r in &self.nodes {
            hasher.update(r.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Index of the node closest to `r`.
    pub fn nearest_node(&self, r: f64) -> usize {
        let mut best = 0;
        for (i, x) in self.nodes.iter().enumerate() {
            if (x - r).abs() < (self.nodes[best] - r).abs() {
                best = i;
            }
        }
        best
    }
}

/// A radial function sampled at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("field values must be finite".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), values)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn same_grid(&self, grid: &RadialGrid) -> bool {
        std::ptr::eq(self.grid.as_ref(), grid) || self.grid.as_ref() == grid
    }

    pub fn ensure_grid(&self, grid: &RadialGrid) -> Result<()> {
        if self.same_grid(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Piecewise-linear interpolant; zero outside the grid (the field is
    /// understood as `χ_Ω f`).
    pub fn interpolate(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r < nodes[0] || r > nodes[nodes.len() - 1] {
            return 0.0;
        }
        let k = match nodes.binary_search_by(|x| x.partial_cmp(&r).expect("finite nodes")) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let t = (r - nodes[k]) / (nodes[k + 1] - nodes[k]);
        (1.0 - t) * self.values[k] + t * self.values[k + 1]
    }

    /// Difference quotients on each cell.
    pub fn cell_derivatives(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(r, v)| (v[1] - v[0]) / (r[1] - r[0]))
            .collect()
    }
}

/// `∫_Ω f dx` for a radial field.
pub fn integrate(f: &Field) -> f64 {
    let g = f.grid();
    g.sphere_measure() * dot_weighted(g.weights(), f.values(), &vec![1.0; f.values.len()])
}

pub(crate) fn dot_weighted(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

/// `∫ |f'|^2 dx` with cell-constant derivatives and exact cell moments.
pub fn dirichlet_integral(f: &Field) -> f64 {
    let g = f.grid();
    let s: f64 = f
        .cell_derivatives()
        .iter()
        .zip(g.cell_moments())
        .map(|(d, m)| d * d * m)
        .sum();
    g.sphere_measure() * s
}

/// `(∫ f^2 + |f'|^2 dx)^{1/2}`; the mass term uses the nodal rule.
pub fn h1_norm(f: &Field) -> f64 {
    let g = f.grid();
    let mass = g.sphere_measure() * dot_weighted(g.weights(), f.values(), f.values());
    (mass + dirichlet_integral(f)).sqrt()
}

/// `(∫ |f|^q dx)^{1/q}` for `q >= 1`.
pub fn lp_norm(f: &Field, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidExponent(q));
    }
    let g = f.grid();
    let s: f64 = g
        .weights()
        .iter()
        .zip(f.values())
        .map(|(w, v)| w * v.abs().powf(q))
        .sum();
    Ok((g.sphere_measure() * s).powf(1.0 / q))
}
