use serde::{Deserialize, Serialize};

use super::catalog::{self, CatalogEntry};
use super::ExperimentError;
use crate::approx::check_ladder;
use crate::lattice::SolverConfig;
use crate::model::GParams;
use crate::tree::TreeConfig;

/// A catalog name, or a catalog entry with its volatility bounds and
/// horizon replaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Name(String),
    Inline(InlineProblem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub base: String,
    pub sigma_low: Option<f64>,
    pub sigma_high: Option<f64>,
    pub horizon: Option<f64>,
}

impl ProblemRef {
    pub fn name(&self) -> &str {
        match self {
            ProblemRef::Name(n) => n,
            ProblemRef::Inline(i) => &i.base,
        }
    }

    pub fn resolve(&self) -> Result<CatalogEntry, ExperimentError> {
        match self {
            ProblemRef::Name(n) => catalog::lookup(n),
            ProblemRef::Inline(i) => {
                let mut entry = catalog::lookup(&i.base)?;
                let params = GParams::new(
                    i.sigma_low.unwrap_or(entry.problem.params.sigma_low),
                    i.sigma_high.unwrap_or(entry.problem.params.sigma_high),
                )?;
                let horizon = i.horizon.unwrap_or(entry.problem.horizon);
                if !(horizon > 0.0 && horizon.is_finite()) {
                    return Err(ExperimentError::Config(format!("horizon must be positive, got {horizon}")));
                }
                for p in std::iter::once(&mut entry.problem).chain(entry.partner.as_mut()) {
                    p.params = params;
                    p.horizon = horizon;
                }
                Ok(entry)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeSettings {
    /// Each command has its own default depth.
    pub n_steps: Option<usize>,
    pub max_leaves: u64,
    /// Defaults to `{σ̲, σ̄}`.
    pub sigma_set: Option<Vec<f64>>,
}

impl Default for TreeSettings {
    fn default() -> Self {
        Self { n_steps: None, max_leaves: 1 << 22, sigma_set: None }
    }
}

impl TreeSettings {
    pub fn config(&self, params: &GParams, default_steps: usize) -> TreeConfig {
        let mut c = TreeConfig::new(params, self.n_steps.unwrap_or(default_steps));
        c.max_leaves = self.max_leaves;
        if let Some(s) = &self.sigma_set {
            c.sigma_set = s.clone();
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSettings {
    pub n_space: usize,
    /// Target `σ̄²Δt/Δx²`; the time step follows from it.
    pub cfl: f64,
}

impl Default for PdeSettings {
    fn default() -> Self {
        Self { n_space: 241, cfl: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative error of the lattice G-expectations against closed forms.
    pub expect_lattice_rel: f64,
    /// Absolute error of the tree G-expectations against closed forms.
    pub expect_tree_abs: f64,
    /// Allowed factor on the gap ratio.
    pub gap_growth_factor: f64,
    /// Allowed factor on the tree norms across the ladder.
    pub norms_growth_factor: f64,
    pub tree_lattice_matched: f64,
    pub tree_lattice_interp: f64,
    /// Space nodes of the lattice compared with the tree by interpolation.
    pub interp_space: usize,
    pub pde_rel: f64,
    pub comparison_tree: f64,
    pub k_martingale: f64,
    pub linear_rep: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            expect_lattice_rel: 0.02,
            expect_tree_abs: 1e-14,
            gap_growth_factor: 1.2,
            norms_growth_factor: 1.5,
            tree_lattice_matched: 1e-9,
            tree_lattice_interp: 5e-3,
            interp_space: 6001,
            pde_rel: 0.01,
            comparison_tree: 1e-10,
            k_martingale: 1e-12,
            linear_rep: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Each command has its own default problem.
    pub problem: Option<ProblemRef>,
    /// Approximation indices; each command has its own default.
    pub ladder: Option<Vec<u32>>,
    pub seed: u64,
    /// Samples per index for the approximant property suite.
    pub sample_budget: usize,
    /// Randomized ordered pairs for the comparison run.
    pub comparison_pairs: usize,
    pub output_dir: Option<String>,
    pub solver: SolverConfig,
    pub tree: TreeSettings,
    pub pde: PdeSettings,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: None,
            ladder: None,
            seed: 42,
            sample_budget: 1000,
            comparison_pairs: 100,
            output_dir: None,
            solver: SolverConfig::default(),
            tree: TreeSettings::default(),
            pde: PdeSettings::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse and validate a JSON document. Unknown keys are errors.
    pub fn from_json_str(s: &str) -> Result<Self, ExperimentError> {
        let c: Self = serde_json::from_str(s).map_err(|e| ExperimentError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn problem_or(&self, default: &str) -> ProblemRef {
        self.problem.clone().unwrap_or_else(|| ProblemRef::Name(default.into()))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let entry = self.problem_or("sqrt_z").resolve()?;
        if let Some(l) = &self.ladder {
            check_ladder(l, entry.problem.gen.modulus.normalized_growth())?;
        }
        self.solver.validate()?;
        if self.tree.n_steps == Some(0) {
            return Err(ExperimentError::Config("tree.n_steps must be ≥ 1".into()));
        }
        if self.pde.n_space < 5 || self.pde.n_space.is_multiple_of(2) {
            return Err(ExperimentError::Config("pde.n_space must be odd and ≥ 5".into()));
        }
        Ok(())
    }

    pub fn ladder_or(&self, default: &[u32]) -> Vec<u32> {
        self.ladder.clone().unwrap_or_else(|| default.to_vec())
    }
}

/// Parse a comma-separated list of approximation indices such as `2,4,8,16`.
/// Only the syntax is checked here; ordering and `n > L` are checked against
/// the problem.
pub fn parse_ladder(s: &str) -> Result<Vec<u32>, ExperimentError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(ExperimentError::Config("empty ladder".into()));
    }
    s.split(',')
        .map(|part| {
            let p = part.trim();
            p.parse::<u32>().map_err(|e| ExperimentError::Config(format!("bad ladder entry {p:?}: {e}")))
        })
        .collect()
}
