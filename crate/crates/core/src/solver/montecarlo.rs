use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, elapsed_ms, euler_step, Mode, Quadrature, Schedule, SolverConfig, ValueEstimate};
use crate::coefficients::{CoefficientField, ControlGrid};
use crate::error::{Error, Result};
use crate::path::TimedPath;

/// Paths per random stream. Block `b` draws from stream `b` of the master seed.
pub const BLOCK: usize = 256;

/// A feedback rule choosing a control-grid index from the current state and
/// running maximum, both measured relative to the starting state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Constant { control: usize },
    StateThreshold { level: f64, below: usize, above: usize },
    MaxThreshold { level: f64, below: usize, above: usize },
}

impl Policy {
    fn choose(&self, state: f64, running_max: f64) -> usize {
        match *self {
            Policy::Constant { control } => control,
            Policy::StateThreshold { level, below, above } => {
                if state < level {
                    below
                } else {
                    above
                }
            }
            Policy::MaxThreshold { level, below, above } => {
                if running_max < level {
                    below
                } else {
                    above
                }
            }
        }
    }

    fn controls(&self) -> [usize; 2] {
        match *self {
            Policy::Constant { control } => [control, control],
            Policy::StateThreshold { below, above, .. } | Policy::MaxThreshold { below, above, .. } => {
                [below, above]
            }
        }
    }

    pub fn describe(&self, grid: ControlGrid) -> String {
        let p = |i: usize| format!("{:?}", grid.point(i).coords());
        match *self {
            Policy::Constant { control } => format!("constant {}", p(control)),
            Policy::StateThreshold { level, below, above } => {
                format!("state < {level}: {}, else {}", p(below), p(above))
            }
            Policy::MaxThreshold { level, below, above } => {
                format!("running max < {level}: {}, else {}", p(below), p(above))
            }
        }
    }
}

/// Every constant control, plus threshold rules switching between corners of the action box.
pub fn default_policies(c: &CoefficientField, cfg: &SolverConfig) -> Result<Vec<Policy>> {
    let grid = c.control_grid(cfg.control_res)?;
    let mut out: Vec<Policy> = (0..grid.len()).map(|control| Policy::Constant { control }).collect();
    if !cfg.montecarlo.threshold_rules {
        return Ok(out);
    }
    let corners: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.point(i).coords().iter().all(|&x| x == 0.0 || x == 1.0))
        .collect();
    for &level in &cfg.montecarlo.thresholds {
        for &below in &corners {
            for &above in corners.iter().filter(|&&a| a != below) {
                out.push(Policy::StateThreshold { level, below, above });
                out.push(Policy::MaxThreshold { level, below, above });
            }
        }
    }
    Ok(out)
}

/// Shock indices for `paths` paths of `steps` steps, laid out path-major.
fn draw_shocks(quad: &Quadrature, paths: usize, steps: usize, seed: u64) -> Vec<u16> {
    let mut cumulative = Vec::with_capacity(quad.len());
    let mut acc = 0.0;
    for w in &quad.weights {
        acc += w;
        cumulative.push(acc);
    }
    let blocks = paths.div_ceil(BLOCK);
    let per_block: Vec<Vec<u16>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let n = BLOCK.min(paths - b * BLOCK) * steps;
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random();
                    cumulative.iter().position(|&c| u < c).unwrap_or(quad.len() - 1) as u16
                })
                .collect()
        })
        .collect();
    per_block.concat()
}

struct Simulator<'a> {
    c: &'a CoefficientField,
    quad: &'a Quadrature,
    grid: ControlGrid,
    sched: &'a Schedule,
    x0: f64,
    max0: f64,
}

impl Simulator<'_> {
    fn payoff(&self, policy: &Policy, shocks: &[u16]) -> Result<f64> {
        let mut path = self.sched.prefix.clone();
        let mut running_max = self.max0;
        let mut next = vec![0.0; path.dim()];
        for (k, &j) in shocks.iter().enumerate() {
            let t = self.sched.times[k];
            let x = path.last_value().to_vec();
            running_max = running_max.max(x[0]);
            let f = self.grid.point(policy.choose(x[0] - self.x0, running_max - self.x0));
            let b = self.c.drift(&f, t, &path);
            let s = self.c.diffusion(&f, t, &path);
            euler_step(&x, &b, &s, &self.quad.nodes[j as usize], self.sched.dt, self.sched.sqdt, &mut next);
            path.push(self.sched.times[k + 1], &next)?;
        }
        check_finite(self.c.terminal(&path), || format!("payoff of policy {policy:?}"))
    }
}

/// Best sample mean over `policies`, all simulated on the same shocks.
pub fn solve_montecarlo(
    c: &CoefficientField,
    start: &TimedPath,
    cfg: &SolverConfig,
    policies: &[Policy],
) -> Result<ValueEstimate> {
    let clock = Instant::now();
    if policies.is_empty() {
        return Err(Error::domain("policy class is empty"));
    }
    let paths = cfg.montecarlo.paths;
    if paths < 2 {
        return Err(Error::domain("Monte Carlo needs at least two paths"));
    }
    let sched = Schedule::new(c, start, cfg.steps)?;
    let quad = Quadrature::new(cfg.quadrature, c.meta().noise_dim)?;
    let grid = c.control_grid(cfg.control_res)?;
    if let Some(p) = policies.iter().find(|p| p.controls().iter().any(|&i| i >= grid.len())) {
        return Err(Error::domain(format!("policy {p:?} refers to a control outside the grid")));
    }
    let steps = if sched.is_terminal() { 0 } else { sched.steps() };
    let shocks = draw_shocks(&quad, paths, steps, cfg.montecarlo.seed);
    let sim = Simulator {
        c,
        quad: &quad,
        grid,
        sched: &sched,
        x0: sched.prefix.last_value()[0],
        max0: sched.prefix.max_first_coord(),
    };
    let blocks = paths.div_ceil(BLOCK);
    let jobs: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|p| (0..blocks).map(move |b| (p, b)))
        .collect();
    let payoffs: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(p, b)| {
            let lo = b * BLOCK;
            let hi = paths.min(lo + BLOCK);
            (lo..hi)
                .map(|i| sim.payoff(&policies[p], &shocks[i * steps..(i + 1) * steps]))
                .collect()
        })
        .collect();
    let mut best: Option<(f64, f64, usize)> = None;
    let mut iter = payoffs.into_iter();
    for p in 0..policies.len() {
        let mut values = Vec::with_capacity(paths);
        for _ in 0..blocks {
            values.extend(iter.next().expect("one result per job")?);
        }
        let n = values.len() as f64;
        // Anchored at the first payoff so that a constant payoff averages exactly.
        let anchor = values[0];
        let mean = anchor + values.iter().map(|v| v - anchor).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        if best.is_none_or(|(m, _, _)| mean > m) {
            best = Some((mean, stderr, p));
        }
    }
    let (value, stderr, p) = best.expect("policies are nonempty");
    Ok(ValueEstimate {
        value,
        stderr,
        mode: Mode::Montecarlo,
        nodes: (paths * steps * policies.len()) as u64,
        runtime_ms: elapsed_ms(clock),
        argmax_policy_summary: policies[p].describe(grid),
    })
}
