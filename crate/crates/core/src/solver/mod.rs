//! Value functions `v(t, ω) = sup E[ψ]` over feedback controls of the Euler
//! scheme `x' = x + b Δt + σ √Δt ξ`, with `ξ` drawn from a moment-matching quadrature.
//!
//! Four modes share that discrete model:
//!
//! * `tree`: backward induction over every reachable path (exact for the scheme).
//! * `exhaustive`: brute-force enumeration of feedback strategies, an oracle for tiny trees.
//! * `markovian`: a recombining state lattice for fields that only read `ω(t)`.
//! * `montecarlo`: a lower bound from a finite family of feedback rules.

mod exhaustive;
mod lattice;
mod montecarlo;
mod quadrature;
mod tree;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::path::{SampledPath, TimedPath, KNOT_EPS};

pub use exhaustive::solve_exhaustive;
pub use lattice::solve_markovian;
pub use montecarlo::{default_policies, solve_montecarlo, Policy};
pub use quadrature::{Quadrature, QuadratureKind};
pub use tree::{solve_tree, solve_tree_recorded, ChildGroup, TreeNode, ValueTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Tree,
    Markovian,
    Montecarlo,
    Exhaustive,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Tree => "tree",
            Mode::Markovian => "markovian",
            Mode::Montecarlo => "montecarlo",
            Mode::Exhaustive => "exhaustive",
        }
    }

    pub fn is_exact(self) -> bool {
        self != Mode::Montecarlo
    }
}

/// State grid of the Markovian lattice: `x₀ + i dx` for `|i dx| ≤ half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dx: f64,
    pub half_width: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec {
            dx: 0.02,
            half_width: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloSpec {
    pub paths: usize,
    pub seed: u64,
    /// Threshold levels, relative to the starting state, for the bang-bang rules.
    pub thresholds: Vec<f64>,
    /// Include the state and running-maximum threshold rules besides constants.
    pub threshold_rules: bool,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        MonteCarloSpec {
            paths: 4096,
            seed: 0,
            thresholds: vec![-0.5, 0.0, 0.5],
            threshold_rules: true,
        }
    }
}

fn default_control_res() -> usize {
    2
}

fn default_tree_budget() -> f64 {
    2e7
}

fn default_exhaustive_budget() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: Mode,
    pub steps: usize,
    #[serde(default)]
    pub quadrature: QuadratureKind,
    /// Grid points per action axis.
    #[serde(default = "default_control_res")]
    pub control_res: usize,
    /// Largest admissible number of tree leaves, `(controls · shocks)^steps`.
    #[serde(default = "default_tree_budget")]
    pub tree_budget: f64,
    /// Largest admissible number of enumerated strategies.
    #[serde(default = "default_exhaustive_budget")]
    pub exhaustive_budget: f64,
    #[serde(default)]
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub montecarlo: MonteCarloSpec,
}

impl SolverConfig {
    pub fn new(mode: Mode, steps: usize) -> Self {
        SolverConfig {
            mode,
            steps,
            quadrature: QuadratureKind::default(),
            control_res: default_control_res(),
            tree_budget: default_tree_budget(),
            exhaustive_budget: default_exhaustive_budget(),
            lattice: LatticeSpec::default(),
            montecarlo: MonteCarloSpec::default(),
        }
    }

    pub fn with_res(mut self, res: usize) -> Self {
        self.control_res = res;
        self
    }

    pub fn with_quadrature(mut self, q: QuadratureKind) -> Self {
        self.quadrature = q;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub value: f64,
    /// Zero for the exact modes.
    pub stderr: f64,
    pub mode: Mode,
    /// Tree nodes, lattice cells or simulated path steps.
    pub nodes: u64,
    pub runtime_ms: f64,
    pub argmax_policy_summary: String,
}

/// Runs the mode selected in `cfg`.
pub fn solve(c: &CoefficientField, start: &TimedPath, cfg: &SolverConfig) -> Result<ValueEstimate> {
    match cfg.mode {
        Mode::Tree => solve_tree(c, start, cfg),
        Mode::Markovian => solve_markovian(c, start, cfg),
        Mode::Exhaustive => solve_exhaustive(c, start, cfg),
        Mode::Montecarlo => {
            let policies = default_policies(c, cfg)?;
            solve_montecarlo(c, start, cfg, &policies)
        }
    }
}

/// Time grid and starting prefix shared by all modes.
#[derive(Debug, Clone)]
pub(crate) struct Schedule {
    pub times: Vec<f64>,
    pub dt: f64,
    pub sqdt: f64,
    pub prefix: SampledPath,
}

impl Schedule {
    pub fn new(c: &CoefficientField, start: &TimedPath, steps: usize) -> Result<Self> {
        let meta = c.meta();
        if steps == 0 {
            return Err(Error::domain("steps must be positive"));
        }
        if start.path().dim() != meta.state_dim {
            return Err(Error::domain(format!(
                "start path has dimension {} but the field has state dimension {}",
                start.path().dim(),
                meta.state_dim
            )));
        }
        let horizon = meta.horizon;
        if start.t() > horizon + KNOT_EPS {
            return Err(Error::domain(format!(
                "start time {} is after the horizon {horizon}",
                start.t()
            )));
        }
        let prefix = start.path().prefix(start.t())?;
        let t0 = prefix.horizon();
        let dt = ((horizon - t0) / steps as f64).max(0.0);
        let mut times: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * dt).collect();
        times.push(horizon.max(t0));
        Ok(Schedule {
            times,
            dt,
            sqdt: dt.sqrt(),
            prefix,
        })
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// No time left: the value is the terminal functional of the prefix.
    pub fn is_terminal(&self) -> bool {
        self.dt <= KNOT_EPS
    }
}

/// `x + b Δt + √Δt σ ξ`, written once so every mode rounds identically.
pub(crate) fn euler_step(
    x: &[f64],
    b: &DVector<f64>,
    s: &DMatrix<f64>,
    xi: &[f64],
    dt: f64,
    sqdt: f64,
    out: &mut [f64],
) {
    for i in 0..x.len() {
        let noise: f64 = (0..xi.len()).map(|r| s[(i, r)] * xi[r]).sum();
        out[i] = x[i] + b[i] * dt + sqdt * noise;
    }
}

pub(crate) fn check_finite(v: f64, location: impl FnOnce() -> String) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric {
            location: location(),
        })
    }
}

pub(crate) fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// `(b, σ)` at every control of the grid, keeping the first index of each distinct pair.
pub(crate) fn distinct_controls(
    c: &CoefficientField,
    grid: crate::coefficients::ControlGrid,
    t: f64,
    path: &SampledPath,
) -> Vec<(usize, DVector<f64>, DMatrix<f64>)> {
    let mut out: Vec<(usize, DVector<f64>, DMatrix<f64>)> = Vec::new();
    for i in 0..grid.len() {
        let f = grid.point(i);
        let b = c.drift(&f, t, path);
        let s = c.diffusion(&f, t, path);
        if !out.iter().any(|(_, b2, s2)| *b2 == b && *s2 == s) {
            out.push((i, b, s));
        }
    }
    out
}
