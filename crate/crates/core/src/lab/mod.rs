//! Experiments on coefficient sequences and single fields: compact convergence
//! of value functions, Lipschitz regularity under the pseudometric `d`, and a
//! finite-difference oracle for Markovian instances.

mod fd;
mod lipschitz;
mod residual;
mod stability;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{SampledPath, TimedPath, KNOT_EPS};

pub use fd::{fd_oracle_markovian, FdGrid, FdTable};
pub use lipschitz::{lipschitz_budget, run_lipschitz, sample_timed_pairs, LipschitzPair, LipschitzReport, PairSpec};
pub use residual::{residual_probe, residual_probe_points, ResidualStats, TableKernel};
pub use stability::{run_stability, StabilityReport};

/// A finite family of `(t, ω)` with `sup |ω| ≤ radius` and `t ≤ horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactTestSet {
    pub points: Vec<TimedPath>,
    pub radius: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestSetSpec {
    pub count: usize,
    pub radius: f64,
    pub seed: u64,
    /// Times are drawn from `[0, max_time * horizon]`.
    pub max_time: f64,
    pub knots: usize,
}

impl Default for TestSetSpec {
    fn default() -> Self {
        TestSetSpec {
            count: 12,
            radius: 1.0,
            seed: 11,
            max_time: 0.5,
            knots: 6,
        }
    }
}

impl CompactTestSet {
    pub fn new(points: Vec<TimedPath>, radius: f64, horizon: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("test set is empty"));
        }
        for (i, p) in points.iter().enumerate() {
            let norm = p.path().sup_norm(p.t())?;
            if norm > radius + KNOT_EPS || p.t() > horizon + KNOT_EPS {
                return Err(Error::domain(format!(
                    "test point {i} at t = {} with sup norm {norm} leaves the set (radius {radius}, horizon {horizon})",
                    p.t()
                )));
            }
        }
        Ok(CompactTestSet {
            points,
            radius,
            horizon,
        })
    }

    /// Constants, hats and clamped random walks, cycling in that order. The
    /// first point sits at `t = 0` so that suprema over the set include the start.
    pub fn sample(spec: &TestSetSpec, horizon: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let r = spec.radius;
        let points = (0..spec.count)
            .map(|i| {
                let t = if i == 0 {
                    0.0
                } else {
                    rng.random_range(0.0..=spec.max_time) * horizon
                };
                let path = if t == 0.0 {
                    SampledPath::scalar(vec![0.0], vec![rng.random_range(-r..=r)])?
                } else {
                    let knots = spec.knots.max(2);
                    let grid: Vec<f64> = (0..knots).map(|k| t * k as f64 / (knots - 1) as f64).collect();
                    let values: Vec<f64> = match i % 3 {
                        0 => vec![rng.random_range(-r..=r); knots],
                        1 => {
                            let peak = rng.random_range(-r..=r);
                            grid.iter().map(|&g| peak * (1.0 - (2.0 * g / t - 1.0).abs())).collect()
                        }
                        _ => {
                            let mut x = rng.random_range(-r..=r) * 0.5;
                            grid.iter()
                                .map(|_| {
                                    let v = x;
                                    x = (x + rng.random_range(-0.5..0.5) * r).clamp(-r, r);
                                    v
                                })
                                .collect()
                        }
                    };
                    SampledPath::scalar(grid, values)?
                };
                TimedPath::new(t, path)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points, r, horizon)
    }

    /// Smallest time in the set.
    pub fn t_min(&self) -> f64 {
        self.points.iter().map(TimedPath::t).fold(f64::INFINITY, f64::min)
    }
}
