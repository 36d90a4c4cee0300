use std::time::Instant;

use rayon::prelude::*;

use super::{check_finite, elapsed_ms, Mode, Quadrature, Schedule, SolverConfig, ValueEstimate};
use crate::coefficients::{CoefficientField, ControlGrid};
use crate::error::{Condition, Error, Result};
use crate::path::{SampledPath, TimedPath};

/// Normalized variance ceiling of a trinomial step; keeps the middle weight nonnegative.
const MAX_SPREAD: f64 = 0.75;

/// Values on `x₀ + (i - M) dx`, extended quadratically beyond both ends.
struct Layer<'a> {
    v: &'a [f64],
}

impl Layer<'_> {
    fn at(&self, i: isize) -> f64 {
        let n = self.v.len() as isize;
        if (0..n).contains(&i) {
            return self.v[i as usize];
        }
        let (a, b, c, s) = if i < 0 {
            (self.v[0], self.v[1], self.v[2], i as f64)
        } else {
            (self.v[(n - 1) as usize], self.v[(n - 2) as usize], self.v[(n - 3) as usize], (n - 1 - i) as f64)
        };
        // Lagrange interpolant through offsets 0, 1, 2 evaluated at s, anchored at
        // the boundary value so that constants extend exactly.
        a - (b - a) * s * (s - 2.0) + (c - a) * s * (s - 1.0) / 2.0
    }

    /// Linear interpolation at a fractional index.
    fn interp(&self, y: f64) -> f64 {
        let lo = y.floor();
        let w = y - lo;
        let lo = lo as isize;
        if w == 0.0 {
            self.at(lo)
        } else {
            let a = self.at(lo);
            a + w * (self.at(lo + 1) - a)
        }
    }

    /// Expectation of the value after a move with mean `m` and variance `var`,
    /// both in units of grid cells.
    fn expect(&self, i: usize, m: f64, var: f64) -> f64 {
        let y = i as f64 + m;
        let stride = (var / MAX_SPREAD).sqrt().ceil().max(1.0);
        let centre = y.round();
        let u = (y - centre) / stride;
        let s = var / (stride * stride);
        let up = 0.5 * (s + u * u + u);
        let down = 0.5 * (s + u * u - u);
        let mid = 1.0 - s - u * u;
        if up < 0.0 || down < 0.0 || mid < 0.0 {
            // Variance below the grid resolution: keep the mean, drop the spread.
            return self.interp(y);
        }
        let (c, l) = (centre as isize, stride as isize);
        let centre_value = self.at(c);
        centre_value + down * (self.at(c - l) - centre_value) + up * (self.at(c + l) - centre_value)
    }
}

/// Recombining lattice for one-dimensional fields that read only the current state.
///
/// The last step integrates `ψ` at the quadrature points exactly as the tree does;
/// earlier steps project the Euler move onto a moment-matched trinomial.
pub fn solve_markovian(c: &CoefficientField, start: &TimedPath, cfg: &SolverConfig) -> Result<ValueEstimate> {
    let clock = Instant::now();
    let meta = c.meta();
    if !meta.markovian {
        return Err(Error::validation(
            Condition::MarkovianField,
            format!("field '{}' is not declared Markovian; use tree mode", meta.label),
        ));
    }
    if meta.state_dim != 1 {
        return Err(Error::domain("the lattice supports one-dimensional states only"));
    }
    let lat = cfg.lattice;
    if !(lat.dx > 0.0) || !(lat.half_width >= 2.0 * lat.dx) {
        return Err(Error::domain(format!("invalid lattice dx = {}, half width = {}", lat.dx, lat.half_width)));
    }
    let sched = Schedule::new(c, start, cfg.steps)?;
    let quad = Quadrature::new(cfg.quadrature, meta.noise_dim)?;
    let grid = c.control_grid(cfg.control_res)?;
    let x0 = sched.prefix.last_value()[0];
    if sched.is_terminal() {
        return Ok(ValueEstimate {
            value: check_finite(c.terminal(&sched.prefix), || "terminal value".into())?,
            stderr: 0.0,
            mode: Mode::Markovian,
            nodes: 1,
            runtime_ms: elapsed_ms(clock),
            argmax_policy_summary: "terminal".into(),
        });
    }
    let half = (lat.half_width / lat.dx).ceil() as usize;
    let width = 2 * half + 1;
    let xs: Vec<f64> = (0..width).map(|i| x0 + (i as f64 - half as f64) * lat.dx).collect();
    let steps = sched.steps();

    let solver = Stepper { c, quad: &quad, grid, sched: &sched, dx: lat.dx };
    let mut values = solver.terminal_step(&xs)?;
    let mut start_control = values[half].1;
    for k in (0..steps - 1).rev() {
        let layer: Vec<f64> = values.iter().map(|v| v.0).collect();
        values = solver.interior_step(k, &xs, &layer)?;
        start_control = values[half].1;
    }
    Ok(ValueEstimate {
        value: values[half].0,
        stderr: 0.0,
        mode: Mode::Markovian,
        nodes: (width * steps) as u64,
        runtime_ms: elapsed_ms(clock),
        argmax_policy_summary: format!("start control {:?}", grid.point(start_control).coords()),
    })
}

struct Stepper<'a> {
    c: &'a CoefficientField,
    quad: &'a Quadrature,
    grid: ControlGrid,
    sched: &'a Schedule,
    dx: f64,
}

fn state_path() -> SampledPath {
    SampledPath::scalar(vec![0.0], vec![0.0]).expect("single knot")
}

impl Stepper<'_> {
    fn best(&self, mut eval: impl FnMut(usize) -> f64) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for i in 0..self.grid.len() {
            let v = eval(i);
            if v > best.0 || i == 0 {
                best = (v, i);
            }
        }
        best
    }

    fn terminal_step(&self, xs: &[f64]) -> Result<Vec<(f64, usize)>> {
        let k = self.sched.steps() - 1;
        let t = self.sched.times[k];
        let (dt, sqdt) = (self.sched.dt, self.sched.sqdt);
        let out: Vec<(f64, usize)> = xs
            .par_iter()
            .map_init(state_path, |path, &x| {
                path.set_last(&[x]);
                self.best(|ci| {
                    let f = self.grid.point(ci);
                    let b = self.c.drift(&f, t, path)[0];
                    let s = self.c.diffusion(&f, t, path);
                    let mut end = state_path();
                    self.quad.expect(self.quad.nodes.iter().map(|xi| {
                        let noise: f64 = (0..xi.len()).map(|r| s[(0, r)] * xi[r]).sum();
                        end.set_last(&[x + b * dt + sqdt * noise]);
                        self.c.terminal(&end)
                    }))
                })
            })
            .collect();
        self.check(out, k)
    }

    fn interior_step(&self, k: usize, xs: &[f64], next: &[f64]) -> Result<Vec<(f64, usize)>> {
        let t = self.sched.times[k];
        let dt = self.sched.dt;
        let layer = Layer { v: next };
        let cells = self.dx * self.dx;
        let out: Vec<(f64, usize)> = xs
            .par_iter()
            .enumerate()
            .map_init(state_path, |path, (i, &x)| {
                path.set_last(&[x]);
                self.best(|ci| {
                    let f = self.grid.point(ci);
                    let b = self.c.drift(&f, t, path)[0];
                    let var = self.c.covariance(&f, t, path)[(0, 0)] * dt;
                    layer.expect(i, b * dt / self.dx, var / cells)
                })
            })
            .collect();
        self.check(out, k)
    }

    fn check(&self, out: Vec<(f64, usize)>, k: usize) -> Result<Vec<(f64, usize)>> {
        if let Some(i) = out.iter().position(|v| !v.0.is_finite()) {
            return Err(Error::Numeric {
                location: format!("lattice node {i} at step {k}, t = {}", self.sched.times[k]),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{RandomGParams, TerminalSpec};
    use crate::solver::solve_tree;

    fn start(x: f64) -> TimedPath {
        TimedPath::new(0.0, SampledPath::constant(&[x], 1.0).unwrap()).unwrap()
    }

    fn field(b: (f64, f64), a: (f64, f64), psi: TerminalSpec) -> CoefficientField {
        RandomGParams::constant(b, a, psi, 1.0).build().unwrap()
    }

    #[test]
    fn quadratic_extension_is_exact_on_quadratics() {
        let v: Vec<f64> = (0..6).map(|i| (i as f64 - 1.5).powi(2)).collect();
        let layer = Layer { v: &v };
        for i in [-4isize, -1, 7, 9] {
            assert!((layer.at(i) - (i as f64 - 1.5).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_second_moment() {
        let c = field((0.0, 0.0), (1.0, 1.0), TerminalSpec::Square { cap: None });
        let v = solve_markovian(&c, &start(0.0), &SolverConfig::new(Mode::Markovian, 200)).unwrap();
        assert!((v.value - 1.0).abs() < 1e-3, "{}", v.value);
    }

    #[test]
    fn worst_case_abs_payoff() {
        let c = field((0.0, 0.0), (1.0, 2.0), TerminalSpec::Abs);
        let v = solve_markovian(&c, &start(0.0), &SolverConfig::new(Mode::Markovian, 200)).unwrap().value;
        let reference = (4.0 / std::f64::consts::PI).sqrt();
        assert!((v / reference - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn single_step_matches_tree() {
        for name in ["constant", "state_affine", "heat"] {
            let c = crate::coefficients::builtin(name, 1.0).unwrap();
            for quad in [super::super::QuadratureKind::Binary, super::super::QuadratureKind::GaussHermite3] {
                let cfg = SolverConfig::new(Mode::Markovian, 1).with_quadrature(quad).with_res(3);
                let lattice = solve_markovian(&c, &start(0.3), &cfg).unwrap().value;
                let tree = solve_tree(&c, &start(0.3), &cfg.clone().with_mode(Mode::Tree)).unwrap().value;
                assert!((lattice - tree).abs() < 1e-12, "{name}: {lattice} vs {tree}");
            }
        }
    }

    #[test]
    fn path_dependent_field_is_refused() {
        let c = crate::coefficients::builtin("running_max", 1.0).unwrap();
        let err = solve_markovian(&c, &start(0.0), &SolverConfig::new(Mode::Markovian, 10)).unwrap_err();
        assert!(matches!(err, Error::Validation { condition: Condition::MarkovianField, .. }));
    }
}
