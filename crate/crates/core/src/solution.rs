//! JSON interchange for computed ground states.

use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::energy::{BoundaryCondition, Problem};
use crate::error::{Error, Result};
use crate::potential::{Potential, PotentialSpec};
use crate::radial::{DomainShape, Field, RadialDomain, RadialGrid};
use crate::solver::SolveResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol_grad: f64,
    pub tol_constraint: f64,
    pub max_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(rename = "N")]
    pub dim: usize,
    pub alpha: f64,
    pub p: f64,
    pub bc: BoundaryCondition,
    pub domain: DomainShape,
    #[serde(rename = "V")]
    pub potential: String,
    #[serde(rename = "V_floor")]
    pub v_floor: f64,
    pub seed: u64,
    pub tolerances: Tolerances,
    /// Seconds since the Unix epoch; the only field that differs between
    /// otherwise identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nodes {
    pub nodes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Values {
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub meta: Meta,
    pub grid: Nodes,
    pub u: Values,
    /// Absent when `p = 1`, where no rescaling exists.
    pub v: Option<Values>,
    #[serde(rename = "J")]
    pub j: f64,
    pub mu: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl SolutionFile {
    pub fn new(problem: &Problem, result: &SolveResult, tolerances: Tolerances) -> Self {
        let grid = result.u.grid();
        Self {
            meta: Meta {
                dim: problem.domain.dim,
                alpha: problem.alpha,
                p: problem.p,
                bc: problem.bc,
                domain: problem.domain.shape,
                potential: problem.potential.spec.to_string(),
                v_floor: problem.potential.declared_floor,
                seed: result.seed,
                tolerances,
                timestamp: now(),
            },
            grid: Nodes {
                nodes: grid.nodes().to_vec(),
            },
            u: Values {
                values: result.u.values().to_vec(),
            },
            v: result.v.as_ref().map(|v| Values {
                values: v.values().to_vec(),
            }),
            j: result.j,
            mu: result.mu,
            iterations: result.iterations,
            grad_norm: result.grad_norm,
            converged: result.converged,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidProblem(format!("solution file: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidProblem(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn problem(&self) -> Result<Problem> {
        let domain = RadialDomain::new(self.meta.domain, self.meta.dim)?;
        let spec = PotentialSpec::parse(&self.meta.potential)?;
        Ok(Problem {
            domain,
            bc: self.meta.bc,
            potential: Potential::new(spec, Some(self.meta.v_floor), &domain)?,
            p: self.meta.p,
            alpha: self.meta.alpha,
        })
    }

    pub fn grid(&self) -> Result<Arc<RadialGrid>> {
        let domain = RadialDomain::new(self.meta.domain, self.meta.dim)?;
        Ok(Arc::new(RadialGrid::from_nodes(domain, self.grid.nodes.clone())?))
    }

    pub fn u_field(&self) -> Result<Field> {
        Field::new(self.grid()?, self.u.values.clone())
    }

    pub fn v_field(&self) -> Result<Option<Field>> {
        let grid = self.grid()?;
        self.v
            .as_ref()
            .map(|v| Field::new(grid, v.values.clone()))
            .transpose()
    }
}
