//! Run configuration: a sectioned `key = value` format.
//!
//! ```text
//! # comments start with '#'
//! [problem]
//! dim = 3
//! alpha = 1.0
//! p = 2.0
//! bc = neumann            # or dirichlet
//! domain = annulus        # or exterior
//! a = 1.0
//! b = 2.0                 # annulus only
//! V = const 1.0           # or: V = expr 1 + exp(-r)
//! V_floor = 1.0           # optional; sampled from V when absent
//!
//! [grid]
//! n = 512                 # number of cells
//! grading = uniform       # uniform | log | geometric <ratio>
//! truncation_R = 16.0     # exterior only; defaults to 16 a
//!
//! [solver]
//! max_iters = 50000
//! tol_grad = 1e-9
//! tol_constraint = 1e-12
//! step = armijo           # or fixed
//! armijo_c = 0.0001
//! armijo_shrink = 0.5
//! step_size = 1.0
//! seed = 0
//! enforce_nonneg = true
//!
//! [sweep]
//! alphas = 0.4, 0.2, 0.1, 0.05
//!
//! [kernel]
//! mc_samples = 200000
//!
//! [output]
//! dir = out               # optional
//! solution = solution.json
//! kernel_cache = cache    # optional
//! ```
//!
//! Every key is optional. Errors carry the line (or `--set` override) they
//! come from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use crate::energy::{BoundaryCondition, Problem};
use crate::error::Error;
use crate::potential::{Potential, PotentialSpec};
use crate::radial::{build_grid, DomainShape, Grading, RadialDomain, RadialGrid};
use crate::riesz::check_alpha;
use crate::solver::{SolveOptions, StepRule};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Override(String),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}"),
            Location::Override(s) => write!(f, "--set {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{location}: {message}")]
pub struct ConfigError {
    pub location: Location,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct ConfigErrors(pub Vec<ConfigError>);

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub dim: usize,
    pub alpha: f64,
    pub p: f64,
    pub bc: BoundaryCondition,
    pub shape: DomainShape,
    pub potential: PotentialSpec,
    pub v_floor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradingConfig {
    Uniform,
    Log,
    Geometric(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    /// `None` picks uniform for annuli and log spacing for exterior domains.
    pub grading: Option<GradingConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub solution: String,
    pub kernel_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub solver: SolveOptions,
    pub alphas: Vec<f64>,
    pub mc_samples: u64,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig {
                dim: 3,
                alpha: 1.0,
                p: 2.0,
                bc: BoundaryCondition::Neumann,
                shape: DomainShape::Annulus { a: 1.0, b: 2.0 },
                potential: PotentialSpec::Const(1.0),
                v_floor: None,
            },
            grid: GridConfig { n: 512, grading: None },
            solver: SolveOptions::default(),
            alphas: vec![0.4, 0.2, 0.1, 0.05],
            mc_samples: 200_000,
            output: OutputConfig {
                dir: None,
                solution: "solution.json".into(),
                kernel_cache: None,
            },
        }
    }
}

impl RunConfig {
    pub fn domain(&self) -> crate::Result<RadialDomain> {
        RadialDomain::new(self.problem.shape, self.problem.dim)
    }

    pub fn build_problem(&self) -> crate::Result<Problem> {
        let domain = self.domain()?;
        Ok(Problem {
            domain,
            bc: self.problem.bc,
            potential: Potential::new(self.problem.potential.clone(), self.problem.v_floor, &domain)?,
            p: self.problem.p,
            alpha: self.problem.alpha,
        })
    }

    pub fn grading(&self) -> crate::Result<Grading> {
        let domain = self.domain()?;
        let g = self.grid.grading.unwrap_or(if domain.is_exterior() {
            GradingConfig::Log
        } else {
            GradingConfig::Uniform
        });
        Ok(match g {
            GradingConfig::Uniform => Grading::Uniform,
            GradingConfig::Log => Grading::log_spaced(&domain, self.grid.n),
            GradingConfig::Geometric(ratio) => Grading::Geometric { ratio },
        })
    }

    pub fn build_grid(&self) -> crate::Result<Arc<RadialGrid>> {
        Ok(Arc::new(build_grid(self.domain()?, self.grid.n, self.grading()?)?))
    }

    /// Renders the configuration so that [`parse_config`] reproduces it.
    pub fn render(&self) -> String {
        let p = &self.problem;
        let mut s = String::from("[problem]\n");
        s += &format!("dim = {}\nalpha = {:?}\np = {:?}\nbc = {}\n", p.dim, p.alpha, p.p, p.bc);
        match p.shape {
            DomainShape::Annulus { a, b } => s += &format!("domain = annulus\na = {a:?}\nb = {b:?}\n"),
            DomainShape::Exterior { a, .. } => s += &format!("domain = exterior\na = {a:?}\n"),
        }
        s += &format!("V = {}\n", p.potential);
        if let Some(f) = p.v_floor {
            s += &format!("V_floor = {f:?}\n");
        }
        s += &format!("\n[grid]\nn = {}\n", self.grid.n);
        match self.grid.grading {
            Some(GradingConfig::Uniform) => s += "grading = uniform\n",
            Some(GradingConfig::Log) => s += "grading = log\n",
            Some(GradingConfig::Geometric(r)) => s += &format!("grading = geometric {r:?}\n"),
            None => {}
        }
        if let DomainShape::Exterior { truncation, .. } = p.shape {
            s += &format!("truncation_R = {truncation:?}\n");
        }
        let o = &self.solver;
        s += &format!(
            "\n[solver]\nmax_iters = {}\ntol_grad = {:?}\ntol_constraint = {:?}\n",
            o.max_iters, o.tol_grad, o.tol_constraint
        );
        match o.step_rule {
            StepRule::Armijo { c, shrink, initial } => {
                s += &format!("step = armijo\narmijo_c = {c:?}\narmijo_shrink = {shrink:?}\nstep_size = {initial:?}\n")
            }
            StepRule::Fixed { tau } => s += &format!("step = fixed\nstep_size = {tau:?}\n"),
        }
        s += &format!("seed = {}\nenforce_nonneg = {}\n", o.seed, o.enforce_nonneg);
        let alphas: Vec<String> = self.alphas.iter().map(|a| format!("{a:?}")).collect();
        s += &format!("\n[sweep]\nalphas = {}\n", alphas.join(", "));
        s += &format!("\n[kernel]\nmc_samples = {}\n", self.mc_samples);
        s += "\n[output]\n";
        if let Some(d) = &self.output.dir {
            s += &format!("dir = {}\n", d.display());
        }
        s += &format!("solution = {}\n", self.output.solution);
        if let Some(d) = &self.output.kernel_cache {
            s += &format!("kernel_cache = {}\n", d.display());
        }
        s
    }
}

/// A parsed configuration with non-fatal warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub config: RunConfig,
    pub warnings: Vec<ConfigError>,
}

const SECTIONS: [&str; 6] = ["problem", "grid", "solver", "sweep", "kernel", "output"];

struct Raw {
    entries: BTreeMap<(String, String), (String, Location)>,
    errors: Vec<ConfigError>,
}

impl Raw {
    fn error(&mut self, location: Location, message: impl Into<String>) {
        self.errors.push(ConfigError {
            location,
            message: message.into(),
        });
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, Location)> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str, what: &str) -> Option<(T, Location)> {
        let (value, loc) = self.take(section, key)?;
        match value.parse::<T>() {
            Ok(v) => Some((v, loc)),
            Err(_) => {
                self.error(loc, format!("{key}: expected {what}, got `{value}`"));
                None
            }
        }
    }

    fn number(&mut self, section: &str, key: &str) -> Option<(f64, Location)> {
        let (v, loc) = self.parsed::<f64>(section, key, "a number")?;
        if v.is_finite() {
            Some((v, loc))
        } else {
            self.error(loc, format!("{key}: expected a finite number"));
            None
        }
    }
}

fn split_override(text: &str) -> Option<(String, String, String)> {
    let (path, value) = text.split_once('=')?;
    let (section, key) = path.trim().split_once('.')?;
    Some((section.trim().into(), key.trim().into(), value.trim().into()))
}

/// Parses and validates a configuration. `overrides` are `section.key=value`
/// strings applied on top of the file.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<Parsed, ConfigErrors> {
    let mut raw = Raw {
        entries: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut section: Option<String> = None;
    for (idx, line) in text.lines().enumerate() {
        let loc = Location::Line(idx + 1);
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                raw.error(loc, "unterminated section header");
                continue;
            };
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                raw.error(loc, format!("unknown section [{name}]"));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            raw.error(loc, format!("expected `key = value`, got `{line}`"));
            continue;
        };
        let Some(sec) = section.clone() else {
            raw.error(loc, "key outside of any section");
            continue;
        };
        let key = key.trim().to_string();
        if let Some((_, prev)) = raw.entries.get(&(sec.clone(), key.clone())) {
            let prev = prev.clone();
            raw.error(loc, format!("duplicate key `{key}` (first set at {prev})"));
            continue;
        }
        raw.entries.insert((sec, key), (value.trim().to_string(), loc));
    }
    for o in overrides {
        let loc = Location::Override(o.clone());
        match split_override(o) {
            Some((sec, key, value)) => {
                raw.entries.insert((sec, key), (value, loc));
            }
            None => raw.error(loc, "override must look like section.key=value"),
        }
    }

    let mut cfg = RunConfig::default();
    let mut warnings = Vec::new();

    // [problem]
    let pc = &mut cfg.problem;
    if let Some((v, _)) = raw.parsed::<usize>("problem", "dim", "an integer") {
        pc.dim = v;
    }
    let alpha_loc = raw.number("problem", "alpha").map(|(v, l)| {
        pc.alpha = v;
        l
    });
    let p_loc = raw.number("problem", "p").map(|(v, l)| {
        pc.p = v;
        l
    });
    if let Some((v, loc)) = raw.take("problem", "bc") {
        match v.as_str() {
            "neumann" => pc.bc = BoundaryCondition::Neumann,
            "dirichlet" => pc.bc = BoundaryCondition::Dirichlet,
            _ => raw.error(loc, format!("bc must be neumann or dirichlet, got `{v}`")),
        }
    }
    let kind = raw.take("problem", "domain");
    let a = raw.number("problem", "a");
    let b = raw.number("problem", "b");
    let truncation = raw.number("grid", "truncation_R");
    let inner = a.as_ref().map_or(1.0, |x| x.0);
    let exterior = match &kind {
        None => false,
        Some((k, _)) if k == "annulus" => false,
        Some((k, _)) if k == "exterior" => true,
        Some((k, loc)) => {
            raw.error(loc.clone(), format!("domain must be annulus or exterior, got `{k}`"));
            false
        }
    };
    if exterior {
        if let Some((_, loc)) = &b {
            raw.error(loc.clone(), "b applies to annulus domains only; use [grid] truncation_R");
        }
        pc.shape = DomainShape::Exterior {
            a: inner,
            truncation: truncation.as_ref().map_or(16.0 * inner, |x| x.0),
        };
    } else {
        if let Some((_, loc)) = &truncation {
            raw.error(loc.clone(), "truncation_R applies to exterior domains only");
        }
        pc.shape = DomainShape::Annulus {
            a: inner,
            b: b.as_ref().map_or(2.0, |x| x.0),
        };
    }
    let v_loc = raw.take("problem", "V").and_then(|(v, loc)| match PotentialSpec::parse(&v) {
        Ok(spec) => {
            pc.potential = spec;
            Some(loc)
        }
        Err(e) => {
            raw.error(loc, format!("V: {e}"));
            None
        }
    });
    let floor_loc = raw.number("problem", "V_floor").map(|(v, l)| {
        pc.v_floor = Some(v);
        l
    });

    // [grid]
    let n_loc = raw.parsed::<usize>("grid", "n", "an integer").map(|(n, l)| {
        cfg.grid.n = n;
        l
    });
    if let Some((g, loc)) = raw.take("grid", "grading") {
        let mut parts = g.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("uniform"), None, _) => cfg.grid.grading = Some(GradingConfig::Uniform),
            (Some("log"), None, _) => cfg.grid.grading = Some(GradingConfig::Log),
            (Some("geometric"), Some(r), None) => match r.parse::<f64>() {
                Ok(r) if r > 0.0 && r.is_finite() => cfg.grid.grading = Some(GradingConfig::Geometric(r)),
                _ => raw.error(loc, format!("geometric ratio must be a positive number, got `{r}`")),
            },
            _ => raw.error(loc, format!("grading must be uniform, log or geometric <ratio>, got `{g}`")),
        }
    }

    // [solver]
    let o = &mut cfg.solver;
    if let Some((v, _)) = raw.parsed::<usize>("solver", "max_iters", "an integer") {
        o.max_iters = v;
    }
    if let Some((v, _)) = raw.number("solver", "tol_grad") {
        o.tol_grad = v;
    }
    if let Some((v, _)) = raw.number("solver", "tol_constraint") {
        o.tol_constraint = v;
    }
    let step = raw.take("solver", "step");
    let c = raw.number("solver", "armijo_c");
    let shrink = raw.number("solver", "armijo_shrink");
    let size = raw.number("solver", "step_size");
    let step_loc = step.as_ref().map(|s| s.1.clone()).or(size.as_ref().map(|s| s.1.clone()));
    let tau = size.map_or(1.0, |x| x.0);
    match step.as_ref().map(|s| s.0.as_str()) {
        None | Some("armijo") => {
            o.step_rule = StepRule::Armijo {
                c: c.map_or(1e-4, |x| x.0),
                shrink: shrink.map_or(0.5, |x| x.0),
                initial: tau,
            }
        }
        Some("fixed") => {
            for (k, v) in [("armijo_c", c), ("armijo_shrink", shrink)] {
                if let Some((_, loc)) = v {
                    raw.error(loc, format!("{k} requires step = armijo"));
                }
            }
            o.step_rule = StepRule::Fixed { tau }
        }
        Some(other) => raw.error(
            step.as_ref().map(|s| s.1.clone()).expect("present"),
            format!("step must be armijo or fixed, got `{other}`"),
        ),
    }
    if let Some((v, _)) = raw.parsed::<u64>("solver", "seed", "an unsigned integer") {
        o.seed = v;
    }
    if let Some((v, _)) = raw.parsed::<bool>("solver", "enforce_nonneg", "true or false") {
        o.enforce_nonneg = v;
    }
    if let Err(e) = o.validate() {
        let loc = step_loc.unwrap_or(Location::Line(0));
        raw.error(loc, e.to_string());
    }

    // [sweep]
    if let Some((list, loc)) = raw.take("sweep", "alphas") {
        let parsed: Result<Vec<f64>, _> = list.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.is_empty() => raw.error(loc, "alphas must not be empty"),
            Ok(v) => {
                if v.windows(2).any(|w| w[1] >= w[0]) {
                    raw.error(loc.clone(), "alphas must be strictly decreasing");
                }
                for &x in &v {
                    if check_alpha(cfg.problem.dim, x).is_err() {
                        raw.error(loc.clone(), format!("alpha must lie in (0,N): {x} with N={}", cfg.problem.dim));
                    }
                }
                cfg.alphas = v;
            }
            Err(_) => raw.error(loc, format!("alphas: expected a comma-separated list of numbers, got `{list}`")),
        }
    }

    // [kernel], [output]
    if let Some((v, _)) = raw.parsed::<u64>("kernel", "mc_samples", "an unsigned integer") {
        cfg.mc_samples = v;
    }
    if let Some((v, _)) = raw.take("output", "dir") {
        cfg.output.dir = Some(PathBuf::from(v));
    }
    if let Some((v, _)) = raw.take("output", "solution") {
        cfg.output.solution = v;
    }
    if let Some((v, _)) = raw.take("output", "kernel_cache") {
        cfg.output.kernel_cache = Some(PathBuf::from(v));
    }

    let leftovers: Vec<_> = std::mem::take(&mut raw.entries).into_iter().collect();
    for ((sec, key), (_, loc)) in leftovers {
        if SECTIONS.contains(&sec.as_str()) {
            raw.error(loc, format!("unknown key `{key}` in [{sec}]"));
        } else if matches!(loc, Location::Override(_)) {
            raw.error(loc, format!("unknown section [{sec}]"));
        }
    }

    // Semantic checks, located at the key responsible.
    let line0 = || Location::Line(0);
    let pc = &cfg.problem;
    let domain = RadialDomain::new(pc.shape, pc.dim);
    if let Err(e) = &domain {
        let loc = a.map(|x| x.1).or(kind.map(|x| x.1)).unwrap_or_else(line0);
        raw.error(loc, e.to_string());
    }
    if check_alpha(pc.dim, pc.alpha).is_err() {
        raw.error(alpha_loc.clone().unwrap_or_else(line0), "alpha must lie in (0,N)");
    }
    if !(pc.p >= 1.0) {
        raw.error(p_loc.clone().unwrap_or_else(line0), format!("p must be >= 1, got {}", pc.p));
    }
    if cfg.grid.n < crate::radial::MIN_CELLS {
        raw.error(n_loc.unwrap_or_else(line0), format!("grid n must be at least {}", crate::radial::MIN_CELLS));
    }
    if raw.errors.is_empty() {
        match cfg.build_problem() {
            Err(e) => raw.error(floor_loc.or(v_loc.clone()).unwrap_or_else(line0), e.to_string()),
            Ok(problem) => match problem.validate() {
                Ok(ws) => warnings.extend(ws.into_iter().map(|message| ConfigError {
                    location: p_loc.clone().unwrap_or_else(line0),
                    message,
                })),
                Err(e) => raw.error(v_loc.unwrap_or_else(line0), e.to_string()),
            },
        }
    }

    if raw.errors.is_empty() {
        Ok(Parsed { config: cfg, warnings })
    } else {
        Err(ConfigErrors(raw.errors))
    }
}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::InvalidProblem(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let parsed = parse_config("[problem]\n", &[]).unwrap();
        assert_eq!(parsed.config, RunConfig::default());
        assert!(parsed.warnings.is_empty());
        assert_eq!(parse_config("", &[]).unwrap().config, RunConfig::default());
    }

    #[test]
    fn exterior_low_p_warns() {
        let text = "[problem]\ndim = 3\nalpha = 1\np = 1.2\ndomain = exterior\n";
        let parsed = parse_config(text, &[]).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        let w = &parsed.warnings[0];
        assert_eq!(w.location, Location::Line(4));
        assert!(w.message.contains("outside theorem range p > (N+alpha)/N ≈ 1.333"), "{}", w.message);
    }

    #[test]
    fn located_errors() {
        let err = parse_config("[problem]\ndim = 3\nalpha = 3.5\n", &[]).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].location, Location::Line(3));
        assert!(err.0[0].message.contains("alpha must lie in (0,N)"));

        let err = parse_config("[problem]\nfoo = 1\n[grid]\nn = many\n", &[]).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("line 2: unknown key `foo` in [problem]"), "{text}");
        assert!(text.contains("line 4: n: expected an integer"), "{text}");

        let err = parse_config("[problem]\nV = const 0\n", &[]).unwrap_err();
        assert_eq!(err.0[0].location, Location::Line(2));
        assert!(err.0[0].message.contains("existence hypothesis"));

        let err = parse_config("", &["problem.alpha=7".into()]).unwrap_err();
        assert_eq!(err.0[0].location, Location::Override("problem.alpha=7".into()));
    }

    #[test]
    fn overrides_replace_file_values() {
        let parsed = parse_config("[problem]\nalpha = 1.0\n", &["problem.alpha = 0.5".into()]).unwrap();
        assert_eq!(parsed.config.problem.alpha, 0.5);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        assert_eq!(parse_config(&cfg.render(), &[]).unwrap().config, cfg);
        cfg.problem.shape = DomainShape::Exterior { a: 0.7, truncation: 11.2 };
        cfg.problem.potential = PotentialSpec::parse("expr 1 + exp(-r)/3").unwrap();
        cfg.problem.v_floor = Some(1.0);
        cfg.problem.p = 2.5;
        cfg.grid.grading = Some(GradingConfig::Geometric(1.01));
        cfg.solver.step_rule = StepRule::Fixed { tau: 0.1 };
        cfg.solver.seed = u64::MAX;
        cfg.alphas = vec![0.3, 0.1 + 0.2 / 3.0];
        cfg.output.dir = Some("out dir".into());
        cfg.output.kernel_cache = Some("cache".into());
        let text = cfg.render();
        assert_eq!(parse_config(&text, &[]).unwrap().config, cfg, "{text}");
    }
}
