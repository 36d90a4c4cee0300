use std::time::Instant;

use rayon::prelude::*;

use super::{check_finite, elapsed_ms, euler_step, Mode, Quadrature, Schedule, SolverConfig, ValueEstimate};
use crate::coefficients::{CoefficientField, ControlGrid};
use crate::error::{Error, Result};
use crate::path::{SampledPath, TimedPath};

/// Decision nodes are the shock histories of length `< steps`, numbered level
/// by level; a strategy assigns one grid index to each of them.
struct Strategy<'a> {
    c: &'a CoefficientField,
    quad: &'a Quadrature,
    grid: ControlGrid,
    sched: &'a Schedule,
    digits: Vec<usize>,
}

impl Strategy<'_> {
    /// `E[ψ]` under the strategy: weighted sum over every shock history.
    fn expected_payoff(&self, k: usize, node: usize, path: &mut SampledPath) -> Result<f64> {
        if k == self.sched.steps() {
            return check_finite(self.c.terminal(path), || "terminal value".into());
        }
        let t = self.sched.times[k];
        let f = self.grid.point(self.digits[node]);
        let b = self.c.drift(&f, t, path);
        let s = self.c.diffusion(&f, t, path);
        let x = path.last_value().to_vec();
        let q = self.quad.len();
        let mut values = Vec::with_capacity(q);
        let mut next = vec![0.0; x.len()];
        for (j, xi) in self.quad.nodes.iter().enumerate() {
            euler_step(&x, &b, &s, xi, self.sched.dt, self.sched.sqdt, &mut next);
            let len = path.len();
            path.push(self.sched.times[k + 1], &next)?;
            let v = self.expected_payoff(k + 1, node * q + j + 1, path);
            path.truncate(len);
            values.push(v?);
        }
        Ok(self.quad.expect(values))
    }
}

/// Enumerates every feedback strategy on the full control grid and returns the best expected payoff.
pub fn solve_exhaustive(c: &CoefficientField, start: &TimedPath, cfg: &SolverConfig) -> Result<ValueEstimate> {
    let clock = Instant::now();
    let sched = Schedule::new(c, start, cfg.steps)?;
    let quad = Quadrature::new(cfg.quadrature, c.meta().noise_dim)?;
    let grid = c.control_grid(cfg.control_res)?;
    let steps = if sched.is_terminal() { 0 } else { sched.steps() };
    let q = quad.len();
    let decisions: usize = (0..steps).map(|k| q.pow(k as u32)).sum();
    let required = (grid.len() as f64).powi(decisions as i32);
    if required > cfg.exhaustive_budget {
        return Err(Error::Budget {
            what: "enumerated strategies",
            required,
            budget: cfg.exhaustive_budget,
        });
    }
    let count = required as u64;
    let g = grid.len() as u64;
    let evaluate = |code: u64| -> Result<f64> {
        let mut digits = vec![0usize; decisions];
        let mut rest = code;
        for d in digits.iter_mut() {
            *d = (rest % g) as usize;
            rest /= g;
        }
        let strategy = Strategy {
            c,
            quad: &quad,
            grid,
            sched: &sched,
            digits,
        };
        strategy.expected_payoff(0, 0, &mut sched.prefix.clone())
    };
    let values: Vec<Result<f64>> = (0..count).into_par_iter().map(evaluate).collect();
    let mut best = (f64::NEG_INFINITY, 0u64);
    for (code, v) in values.into_iter().enumerate() {
        let v = v?;
        if v > best.0 {
            best = (v, code as u64);
        }
    }
    Ok(ValueEstimate {
        value: best.0,
        stderr: 0.0,
        mode: Mode::Exhaustive,
        nodes: count,
        runtime_ms: elapsed_ms(clock),
        argmax_policy_summary: format!(
            "strategy {} of {count}, root control {:?}",
            best.1,
            grid.point((best.1 % g) as usize).coords()
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{RandomGParams, TerminalSpec};
    use crate::solver::solve_tree;

    fn start() -> TimedPath {
        TimedPath::new(0.0, SampledPath::constant(&[0.0], 1.0).unwrap()).unwrap()
    }

    #[test]
    fn strategy_counts_and_oracle_values() {
        let c = RandomGParams::constant((0.0, 0.0), (1.0, 3.0), TerminalSpec::Square { cap: None }, 1.0)
            .build()
            .unwrap();
        let cfg = SolverConfig::new(Mode::Exhaustive, 3);
        let est = solve_exhaustive(&c, &start(), &cfg).unwrap();
        assert_eq!(est.nodes, 4u64.pow(7));
        assert!((est.value - 3.0).abs() < 1e-12, "{}", est.value);

        // One action axis, two controls, two steps: 2^3 strategies.
        let mut meta = crate::coefficients::FieldMeta::scalar("two", 1, 1.0);
        meta.markovian = true;
        let two = CoefficientField::scalar(
            meta,
            |f, t, w| f.get(0) - 0.3 * w.eval_scalar(t).sin(),
            |f, _, _| 1.0 + f.get(0),
            |w| w.eval_scalar(1.0).cos(),
        );
        let cfg = SolverConfig::new(Mode::Exhaustive, 2);
        let est = solve_exhaustive(&two, &start(), &cfg).unwrap();
        assert_eq!(est.nodes, 8);
        let tree = solve_tree(&two, &start(), &cfg.clone().with_mode(Mode::Tree)).unwrap();
        assert!((est.value - tree.value).abs() < 1e-12);
    }

    #[test]
    fn enumeration_budget() {
        let c = crate::coefficients::builtin("constant", 1.0).unwrap();
        let cfg = SolverConfig::new(Mode::Exhaustive, 5);
        assert!(matches!(solve_exhaustive(&c, &start(), &cfg), Err(Error::Budget { .. })));
    }
}
