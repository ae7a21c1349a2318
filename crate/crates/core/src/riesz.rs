//! Riesz potential `I_α * f` for radial `f`, reduced to a one-dimensional
//! kernel `k_α(r, s)` and assembled into a dense collocation matrix.
//!
//! Row `i` evaluates the convolution at node `r_i`; column `j` integrates the
//! kernel against the hat function of node `j` with the weight `s^{N-1}`:
//!
//! ```text
//! M_ij = ∫ k_α(r_i, s) φ_j(s) s^{N-1} ds
//! ```
//!
//! so `M f` is exact (up to quadrature tolerance) for piecewise-linear `f`.
//! The kernel is never evaluated on the diagonal; the two cells touching
//! `r_i` are integrated on geometrically graded panels towards the
//! singularity.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{gauss12, gauss8};
use crate::radial::{sphere_measure, Field, RadialGrid};

/// `C_{N,α} = Γ((N-α)/2) / (Γ(α/2) π^{N/2} 2^α)`.
pub fn riesz_constant(dim: usize, alpha: f64) -> Result<f64> {
    check_alpha(dim, alpha)?;
    let n = dim as f64;
    Ok(gamma((n - alpha) / 2.0) / (gamma(alpha / 2.0) * PI.powf(n / 2.0) * 2f64.powf(alpha)))
}

pub(crate) fn check_alpha(dim: usize, alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < dim as f64 {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange { alpha, dim })
    }
}

/// Pointwise evaluator of the reduced kernel.
///
/// For N = 3 the angular integral has a closed form. Otherwise
/// `k_α(r,s) = C |S^{N-2}| (rs)^{(α-N)/2} F(|r-s|/√(rs))` with the
/// dimensionless profile
///
/// ```text
/// F(q) = ∫_0^π sin^{N-2}θ (q² + 4 sin²(θ/2))^{(α-N)/2} dθ
/// ```
///
/// which is tabulated once on a logarithmic grid in `q` and interpolated
/// with cubic Hermite polynomials in `(ln q, ln F)`.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    dim: usize,
    alpha: f64,
    /// `C_{N,α} |S^{N-2}|`
    prefactor: f64,
    table: Option<Arc<ProfileTable>>,
}

impl KernelEvaluator {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        let c = riesz_constant(dim, alpha)?;
        let ring = if dim == 2 { 2.0 } else { sphere_measure(dim - 1) };
        let table = (dim != 3).then(|| Arc::new(ProfileTable::build(dim, alpha)));
        Ok(Self {
            dim,
            alpha,
            prefactor: c * ring,
            table,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `k_α(r, s)` given the separation `d = |r - s|` computed by the caller
    /// without cancellation. `d` must be positive unless `α > 1`.
    pub fn eval(&self, r: f64, s: f64, d: f64) -> f64 {
        match &self.table {
            None => self.eval_three_dim(r, s, d),
            Some(table) => {
                let rs = r * s;
                let q = d / rs.sqrt();
                let f = table.lookup(q).unwrap_or_else(|| angular_profile(self.dim, self.alpha, q).0);
                self.prefactor * rs.powf((self.alpha - self.dim as f64) / 2.0) * f
            }
        }
    }

    /// N = 3 closed form `C·2π ((r+s)^{α-1} - |r-s|^{α-1}) / ((α-1) r s)`,
    /// with the logarithmic limit at α = 1.
    fn eval_three_dim(&self, r: f64, s: f64, d: f64) -> f64 {
        let beta = self.alpha - 1.0;
        let sum = r + s;
        let bracket = if d == 0.0 {
            // only reachable for α > 1
            sum.powf(beta) / beta
        } else if beta == 0.0 {
            (sum / d).ln()
        } else {
            d.powf(beta) * (beta * (sum / d).ln()).exp_m1() / beta
        };
        self.prefactor * bracket / (r * s)
    }

    /// Direct angular quadrature, bypassing both the closed form and the table.
    pub fn eval_angular(&self, r: f64, s: f64, d: f64) -> f64 {
        let rs = r * s;
        let f = angular_profile(self.dim, self.alpha, d / rs.sqrt()).0;
        self.prefactor * rs.powf((self.alpha - self.dim as f64) / 2.0) * f
    }

    /// Singularity exponent used for the innermost panel estimate.
    fn tail_exponent(&self) -> f64 {
        self.alpha.min(1.0)
    }
}

/// `F(q)` and `F'(q)` by Gauss panels doubling away from the near-singular
/// angle `θ ≈ q`.
pub fn angular_profile(dim: usize, alpha: f64, q: f64) -> (f64, f64) {
    let expo = (alpha - dim as f64) / 2.0;
    let sin_pow = (dim - 2) as i32;
    let q2 = q * q;
    let rule = gauss12();
    let mut value = 0.0;
    let mut slope = 0.0;
    let mut panel = |lo: f64, hi: f64| {
        for (theta, w) in rule.mapped(lo, hi) {
            let half = (0.5 * theta).sin();
            let base = q2 + 4.0 * half * half;
            let g = w * theta.sin().powi(sin_pow) * base.powf(expo);
            value += g;
            slope += g * 2.0 * expo * q / base;
        }
    };
    let width = if q > 0.0 { q } else { 1e-12 };
    if width >= PI / 4.0 {
        for k in 0..4 {
            let lo = PI * k as f64 / 4.0;
            panel(lo, lo + PI / 4.0);
        }
    } else {
        let mut lo = 0.0;
        let mut hi = width;
        let mut tail = 0.0;
        if q == 0.0 {
            // θ^{α-2} behaviour at the origin, integrable for α > 1
            let t = width;
            tail = t.sin().powi(sin_pow) * (4.0 * (0.5 * t).sin().powi(2)).powf(expo) * t
                / (alpha - 1.0);
            lo = width;
            hi = 2.0 * width;
        }
        loop {
            let top = hi.min(PI);
            panel(lo, top);
            if top >= PI {
                break;
            }
            lo = top;
            hi = if 2.0 * top > PI * 0.75 { PI } else { 2.0 * top };
        }
        value += tail;
    }
    (value, slope)
}

/// Cubic Hermite table of `ln F` against `ln q`.
#[derive(Debug, Clone)]
pub struct ProfileTable {
    t0: f64,
    dt: f64,
    log_f: Vec<f64>,
    /// `d ln F / d ln q`
    slope: Vec<f64>,
}

const TABLE_LOG_Q_MIN: f64 = -41.4; // q ≈ 1e-18
const TABLE_LOG_Q_MAX: f64 = 6.95; // q ≈ 1e3
const TABLE_INTERVALS: usize = 6000;

impl ProfileTable {
    pub fn build(dim: usize, alpha: f64) -> Self {
        let dt = (TABLE_LOG_Q_MAX - TABLE_LOG_Q_MIN) / TABLE_INTERVALS as f64;
        let (log_f, slope): (Vec<f64>, Vec<f64>) = (0..=TABLE_INTERVALS)
            .into_par_iter()
            .map(|k| {
                let q = (TABLE_LOG_Q_MIN + dt * k as f64).exp();
                let (f, df) = angular_profile(dim, alpha, q);
                (f.ln(), q * df / f)
            })
            .unzip();
        Self {
            t0: TABLE_LOG_Q_MIN,
            dt,
            log_f,
            slope,
        }
    }

    /// Interpolated `F(q)`, or `None` outside the tabulated range.
    pub fn lookup(&self, q: f64) -> Option<f64> {
        if !(q > 0.0) {
            return None;
        }
        let x = (q.ln() - self.t0) / self.dt;
        if !(0.0..TABLE_INTERVALS as f64).contains(&x) {
            return None;
        }
        let k = x as usize;
        let t = x - k as f64;
        let (y0, y1) = (self.log_f[k], self.log_f[k + 1]);
        let (m0, m1) = (self.slope[k] * self.dt, self.slope[k + 1] * self.dt);
        let t2 = t * t;
        let t3 = t2 * t;
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        Some(y.exp())
    }
}

/// Value of `k_α(r, s)`; errors on the diagonal when the kernel is infinite.
pub fn angular_kernel(r: f64, s: f64, dim: usize, alpha: f64) -> Result<f64> {
    let eval = KernelEvaluator::new(dim, alpha)?;
    if !(r > 0.0 && s > 0.0) {
        return Err(Error::InvalidDomain(format!("radii must be positive: r={r}, s={s}")));
    }
    let d = (r - s).abs();
    if d == 0.0 && alpha <= 1.0 {
        return Err(Error::SingularDiagonal);
    }
    Ok(eval.eval(r, s, d))
}

/// Graded halvings towards the singular endpoint of a touching cell.
const GRADED_LEVELS: i32 = 30;

/// Integrals of `k(r_i, s) s^{N-1}` against the two linear shape functions
/// of cell `cell` (left node, right node).
pub fn cell_integrals(
    eval: &KernelEvaluator,
    grid: &RadialGrid,
    row: usize,
    cell: usize,
) -> (f64, f64) {
    let nodes = grid.nodes();
    let (lo, hi) = (nodes[cell], nodes[cell + 1]);
    let h = hi - lo;
    let r = nodes[row];
    let pow = (grid.dim() - 1) as i32;
    let mut left = 0.0;
    let mut right = 0.0;
    if cell == row || cell + 1 == row {
        // singular endpoint at r; x is the distance from it
        let at_lo = cell == row;
        let to_s = |x: f64| if at_lo { lo + x } else { hi - x };
        let add = |x: f64, w: f64, left: &mut f64, right: &mut f64| {
            let s = to_s(x);
            let g = w * eval.eval(r, s, x) * s.powi(pow);
            *left += g * (hi - s) / h;
            *right += g * (s - lo) / h;
        };
        let rule = gauss8();
        let mut top = h;
        for _ in 0..GRADED_LEVELS {
            let bottom = 0.5 * top;
            for (x, w) in rule.mapped(bottom, top) {
                add(x, w, &mut left, &mut right);
            }
            top = bottom;
        }
        // innermost panel: the integrand behaves like x^{γ-1} (γ = min(α,1)),
        // times x for the shape function that vanishes at r
        let delta = top;
        let s = to_s(delta);
        let g = eval.eval(r, s, delta) * s.powi(pow) * delta;
        let gam = eval.tail_exponent();
        let (near, far) = ((hi - s) / h, (s - lo) / h);
        if at_lo {
            left += g * near / gam;
            right += g * far / (gam + 1.0);
        } else {
            left += g * near / (gam + 1.0);
            right += g * far / gam;
        }
    } else {
        let rule = if cell.abs_diff(row) <= 3 { gauss12() } else { gauss8() };
        for (s, w) in rule.mapped(lo, hi) {
            let g = w * eval.eval(r, s, (r - s).abs()) * s.powi(pow);
            left += g * (hi - s) / h;
            right += g * (s - lo) / h;
        }
    }
    (left, right)
}

/// Dense collocation matrix of the radial Riesz convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszKernel {
    alpha: f64,
    grid: Arc<RadialGrid>,
    entries: Vec<f64>,
}

/// Assembles the kernel matrix row by row (rows are independent).
pub fn assemble_kernel(grid: Arc<RadialGrid>, alpha: f64) -> Result<RieszKernel> {
    let eval = KernelEvaluator::new(grid.dim(), alpha)?;
    let n = grid.len();
    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for cell in 0..n - 1 {
            let (l, r) = cell_integrals(&eval, &grid, i, cell);
            row[cell] += l;
            row[cell + 1] += r;
        }
    });
    Ok(RieszKernel {
        alpha,
        grid,
        entries,
    })
}

impl RieszKernel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.size();
        &self.entries[i * n..(i + 1) * n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `M x` on raw nodal vectors.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.size())
            .map(|row| row.iter().zip(x).map(|(m, v)| m * v).sum())
            .collect()
    }

    /// `Mᵀ x` on raw nodal vectors.
    pub fn mul_transpose(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size();
        let mut out = vec![0.0; n];
        for (row, xi) in self.entries.chunks_exact(n).zip(x) {
            for (o, m) in out.iter_mut().zip(row) {
                *o += m * xi;
            }
        }
        out
    }

    /// Largest relative violation of `M_ij w_i = M_ji w_j`.
    pub fn weighted_asymmetry(&self) -> f64 {
        let w = self.grid.weights();
        let n = self.size();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let a = self.entry(i, j) * w[i];
                let b = self.entry(j, i) * w[j];
                let scale = a.abs().max(b.abs());
                if scale > 0.0 {
                    worst = worst.max((a - b).abs() / scale);
                }
            }
        }
        worst
    }

    /// Writes the kernel as a text file that reloads bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let n = self.size();
        let mut text = format!(
            "riesz-kernel v1 N={} alpha={:?} gridhash={}\n",
            self.grid.dim(),
            self.alpha,
            self.grid.hash()
        );
        for row in self.entries.chunks_exact(n) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    text.push(' ');
                }
                let _ = write!(text, "{v:?}");
            }
            text.push('\n');
        }
        crate::io::write_atomic(path, text.as_bytes())
            .map_err(|e| Error::KernelCache(e.to_string()))
    }

    /// Loads a kernel written by [`RieszKernel::save`] for the given grid.
    pub fn load(path: &Path, grid: Arc<RadialGrid>, alpha: f64) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::KernelCache(e.to_string()))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::KernelCache("empty file".into()))?
            .map_err(|e| Error::KernelCache(e.to_string()))?;
        let expected = format!(
            "riesz-kernel v1 N={} alpha={:?} gridhash={}",
            grid.dim(),
            alpha,
            grid.hash()
        );
        if header != expected {
            return Err(Error::KernelCache(format!(
                "header mismatch: found `{header}`, expected `{expected}`"
            )));
        }
        let n = grid.len();
        let mut entries = Vec::with_capacity(n * n);
        for line in lines {
            let line = line.map_err(|e| Error::KernelCache(e.to_string()))?;
            for tok in line.split_ascii_whitespace() {
                entries.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::KernelCache(format!("bad entry `{tok}`: {e}")))?,
                );
            }
        }
        if entries.len() != n * n {
            return Err(Error::KernelCache(format!(
                "expected {} entries, found {}",
                n * n,
                entries.len()
            )));
        }
        Ok(Self {
            alpha,
            grid,
            entries,
        })
    }

    /// File name used for the kernel cache.
    pub fn cache_name(grid: &RadialGrid, alpha: f64) -> String {
        format!("riesz-N{}-a{:016x}-{}.kernel", grid.dim(), alpha.to_bits(), grid.hash())
    }
}

/// Loads the kernel from `dir` if cached, otherwise assembles and stores it.
pub fn cached_kernel(dir: Option<&Path>, grid: Arc<RadialGrid>, alpha: f64) -> Result<RieszKernel> {
    let Some(dir) = dir else {
        return assemble_kernel(grid, alpha);
    };
    let path = dir.join(RieszKernel::cache_name(&grid, alpha));
    if path.exists() {
        if let Ok(k) = RieszKernel::load(&path, grid.clone(), alpha) {
            return Ok(k);
        }
    }
    let kernel = assemble_kernel(grid, alpha)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::KernelCache(e.to_string()))?;
    kernel.save(&path)?;
    Ok(kernel)
}

/// `I_α * f` at the grid nodes.
pub fn apply(kernel: &RieszKernel, f: &Field) -> Result<Field> {
    f.ensure_grid(&kernel.grid)?;
    Field::new(kernel.grid.clone(), kernel.mul(f.values()))
}

/// `∫_Ω (I_α * f) g dx` with the nodal rule.
pub fn riesz_pairing(kernel: &RieszKernel, f: &Field, g: &Field) -> Result<f64> {
    f.ensure_grid(&kernel.grid)?;
    g.ensure_grid(&kernel.grid)?;
    let conv = kernel.mul(f.values());
    let grid = &kernel.grid;
    Ok(grid.sphere_measure() * crate::radial::dot_weighted(grid.weights(), &conv, g.values()))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

const MC_CHUNK: u64 = 1 << 16;

/// Direct N-dimensional Monte Carlo estimate of `(I_α * f)(r e_1)`.
///
/// Points are drawn as `y = x + ρω` with `ω` uniform on the sphere and `ρ`
/// distributed with density `∝ ρ^{α-1}` on `[0, r + R_out]`, which cancels
/// the kernel singularity and leaves a bounded estimator. Each chunk of
/// samples uses its own ChaCha stream, so the result does not depend on
/// thread scheduling.
pub fn mc_oracle(f: &Field, alpha: f64, r: f64, samples: u64, seed: u64) -> Result<McEstimate> {
    let grid = f.grid();
    let dim = grid.dim();
    let c = riesz_constant(dim, alpha)?;
    if samples == 0 {
        return Err(Error::InvalidGrid("need at least one sample".into()));
    }
    let rho_max = r + grid.domain().outer();
    let scale = c * sphere_measure(dim) * rho_max.powf(alpha) / alpha;
    let chunks = samples.div_ceil(MC_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let count = MC_CHUNK.min(samples - k * MC_CHUNK);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut dir = vec![0.0; dim];
            for _ in 0..count {
                let u: f64 = rng.random();
                let rho = rho_max * (1.0 - u).powf(1.0 / alpha);
                // first component of a uniform direction on S^{N-1}
                let cos_t = loop {
                    for d in dir.iter_mut() {
                        *d = rng.sample(StandardNormal);
                    }
                    let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        break dir[0] / norm;
                    }
                };
                let dist = (r * r + rho * rho + 2.0 * r * rho * cos_t).max(0.0).sqrt();
                let x = scale * f.interpolate(dist);
                sum += x;
                sum_sq += x * x;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(McEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples,
    })
}

/// Nodes of the middle half of the domain, away from the boundary where
/// `χ_Ω f` jumps.
pub fn interior_window(grid: &RadialGrid) -> Vec<usize> {
    let a = grid.domain().inner();
    let b = grid.domain().outer();
    let (lo, hi) = (a + 0.25 * (b - a), b - 0.25 * (b - a));
    grid.nodes()
        .iter()
        .enumerate()
        .filter(|(_, &r)| r >= lo && r <= hi)
        .map(|(i, _)| i)
        .collect()
}

/// One row of the approximate-identity table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityRow {
    pub alpha: f64,
    /// `max |I_α*f - f|` over interior nodes.
    pub deviation: f64,
}

/// Sup deviation of `I_α * f` from `f` over interior nodes, for each α.
pub fn identity_limit_check(f: &Field, alphas: &[f64]) -> Result<Vec<IdentityRow>> {
    let grid = f.grid().clone();
    let window = interior_window(&grid);
    alphas
        .iter()
        .map(|&alpha| {
            let kernel = assemble_kernel(grid.clone(), alpha)?;
            let conv = kernel.mul(f.values());
            let deviation = window
                .iter()
                .map(|&i| (conv[i] - f.values()[i]).abs())
                .fold(0.0, f64::max);
            Ok(IdentityRow { alpha, deviation })
        })
        .collect()
}

/// Both sides of `∫(I_{α1}*|f|)|f| ≤ (max{1,2b})^{α1} ∫(I_{α2}*|f|)|f|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub lhs: f64,
    pub rhs: f64,
}

impl Comparison {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Evaluates the order-comparison estimate for `α1 > α2` on kernels that
/// share a grid.
pub fn order_comparison(high: &RieszKernel, low: &RieszKernel, f: &Field) -> Result<Comparison> {
    if high.alpha <= low.alpha {
        return Err(Error::InvalidProblem(format!(
            "comparison needs alpha1 > alpha2, got {} <= {}",
            high.alpha, low.alpha
        )));
    }
    let abs = f.with_values(f.values().iter().map(|v| v.abs()).collect())?;
    let b = high.grid.domain().outer();
    let c = (2.0 * b).max(1.0).powf(high.alpha);
    Ok(Comparison {
        lhs: riesz_pairing(high, &abs, &abs)?,
        rhs: c * riesz_pairing(low, &abs, &abs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{build_grid, Grading, RadialDomain};

    fn grid(dim: usize, n: usize) -> Arc<RadialGrid> {
        let d = RadialDomain::annulus(dim, 1.0, 2.0).unwrap();
        Arc::new(build_grid(d, n, Grading::Uniform).unwrap())
    }

    #[test]
    fn riesz_constant_examples() {
        assert!((riesz_constant(3, 2.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((riesz_constant(2, 1.0).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(riesz_constant(3, 3.0).is_err());
        assert!(riesz_constant(3, 0.0).is_err());
        assert!(riesz_constant(3, 3.5).is_err());
        // Γ((N-α)/2) diverges as α → N
        assert!(riesz_constant(3, 2.999).unwrap() > 10.0);
    }

    #[test]
    fn newton_point_value() {
        let k = angular_kernel(1.5, 1.0, 3, 2.0).unwrap();
        assert!((k - 1.0 / 1.5).abs() < 1e-14);
    }

    #[test]
    fn kernel_is_symmetric() {
        for (r, s) in [(1.1, 1.7), (1.9, 1.2), (3.0, 1.01)] {
            for dim in [2, 3, 4] {
                let a = angular_kernel(r, s, dim, 0.7).unwrap();
                let b = angular_kernel(s, r, dim, 0.7).unwrap();
                assert!((a - b).abs() <= 1e-13 * a.abs(), "{dim}: {a} {b}");
            }
        }
    }

    #[test]
    fn log_form_at_alpha_one() {
        let k = angular_kernel(2.0, 1.0, 3, 1.0).unwrap();
        let c = riesz_constant(3, 1.0).unwrap();
        let want = c * PI * 3f64.ln();
        assert!((k - want).abs() < 1e-14 * want);
    }

    #[test]
    fn angular_route_matches_three_dim_closed_form() {
        for alpha in [0.3, 1.0, 1.7, 2.5] {
            let e = KernelEvaluator::new(3, alpha).unwrap();
            for (r, s) in [(1.0f64, 1.5f64), (1.5, 1.499), (1.2, 1.2000001), (2.0, 1.0)] {
                let d = (r - s).abs();
                let a = e.eval_angular(r, s, d);
                let b = e.eval(r, s, d);
                assert!((a - b).abs() < 1e-11 * b, "alpha={alpha} r={r} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn profile_table_matches_direct_quadrature() {
        for dim in [2, 4] {
            for alpha in [0.05, 0.5, 1.0, 1.5] {
                let e = KernelEvaluator::new(dim, alpha).unwrap();
                for (r, s) in [(1.0f64, 1.5f64), (1.5, 1.4999), (1.2, 1.2 + 1e-11), (2.0, 30.0)] {
                    let d = (r - s).abs();
                    let a = e.eval_angular(r, s, d);
                    let b = e.eval(r, s, d);
                    assert!((a - b).abs() < 1e-10 * a, "N={dim} alpha={alpha} r={r} s={s}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn diagonal_is_singular_for_small_alpha() {
        assert_eq!(angular_kernel(1.3, 1.3, 3, 1.0), Err(Error::SingularDiagonal));
        assert_eq!(angular_kernel(1.3, 1.3, 2, 0.5), Err(Error::SingularDiagonal));
        let k = angular_kernel(1.3, 1.3, 3, 2.0).unwrap();
        assert!((k - 1.0 / 1.3).abs() < 1e-12);
    }

    #[test]
    fn kernel_entries_are_nonnegative_and_finite() {
        let k = assemble_kernel(grid(2, 32), 0.5).unwrap();
        assert!(k.entries().iter().all(|v| v.is_finite() && *v >= 0.0));
        let k = assemble_kernel(grid(3, 32), 0.2).unwrap();
        assert!(k.entries().iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn apply_zero_and_linearity() {
        let g = grid(3, 48);
        let k = assemble_kernel(g.clone(), 1.3).unwrap();
        let z = apply(&k, &Field::zeros(g.clone())).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        let f = Field::from_fn(g.clone(), |r| r.sin());
        let h = Field::from_fn(g.clone(), |r| r * r);
        let sum = f.with_values(f.values().iter().zip(h.values()).map(|(a, b)| a + b).collect()).unwrap();
        let lhs = apply(&k, &sum).unwrap();
        let a = apply(&k, &f).unwrap();
        let b = apply(&k, &h).unwrap();
        for i in 0..g.len() {
            let want = a.values()[i] + b.values()[i];
            assert!((lhs.values()[i] - want).abs() < 1e-13 * want.abs().max(1.0));
        }
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let k = assemble_kernel(grid(3, 32), 1.0).unwrap();
        let f = Field::zeros(grid(3, 40));
        assert_eq!(apply(&k, &f), Err(Error::GridMismatch));
    }

    #[test]
    fn mc_zero_field_is_exactly_zero() {
        let f = Field::zeros(grid(3, 32));
        let est = mc_oracle(&f, 1.0, 1.5, 100_000, 7).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn identity_check_on_zero_field() {
        let f = Field::zeros(grid(3, 32));
        let rows = identity_limit_check(&f, &[0.4, 0.1]).unwrap();
        assert!(rows.iter().all(|r| r.deviation == 0.0));
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let g = grid(3, 20);
        let k = assemble_kernel(g.clone(), 0.7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.txt");
        k.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("riesz-kernel v1 N=3 alpha=0.7 gridhash={}\n", g.hash())));
        let back = RieszKernel::load(&path, g.clone(), 0.7).unwrap();
        assert!(k.entries().iter().zip(back.entries()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(RieszKernel::load(&path, g, 0.8).is_err());
    }
}
