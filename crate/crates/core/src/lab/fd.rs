use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::error::{Condition, Error, Result};
use crate::path::SampledPath;

/// Safety factor applied to the monotonicity bound on `Δt`.
const CFL_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FdGrid {
    pub center: f64,
    pub half_width: f64,
    pub dx: f64,
    /// Requested time step; reduced when it breaks monotonicity.
    pub dt: Option<f64>,
    /// Control grid points per action axis.
    pub control_res: usize,
}

impl Default for FdGrid {
    fn default() -> Self {
        FdGrid {
            center: 0.0,
            half_width: 6.0,
            dx: 0.02,
            dt: None,
            control_res: 2,
        }
    }
}

/// `w(t_k, x_i)` for every time level of an explicit scheme, `times` ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdTable {
    pub xs: Vec<f64>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub dt: f64,
    pub dx: f64,
    /// Set when the requested step was reduced.
    pub cfl_reduced: bool,
}

impl FdTable {
    fn locate(&self, x: f64) -> (usize, f64) {
        let s = ((x - self.xs[0]) / self.dx).clamp(0.0, (self.xs.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.xs.len() - 2);
        (i, s - i as f64)
    }

    fn level(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.times[0]) / self.dt).clamp(0.0, (self.times.len() - 1) as f64);
        let k = (s.floor() as usize).min(self.times.len() - 2);
        (k, s - k as f64)
    }

    fn row_at(&self, row: &[f64], x: f64) -> f64 {
        let (i, w) = self.locate(x);
        (1.0 - w) * row[i] + w * row[i + 1]
    }

    /// Bilinear interpolation in `(t, x)`.
    pub fn value_at(&self, t: f64, x: f64) -> f64 {
        let (k, w) = self.level(t);
        (1.0 - w) * self.row_at(&self.values[k], x) + w * self.row_at(&self.values[k + 1], x)
    }

    pub fn initial_at(&self, x: f64) -> f64 {
        self.row_at(&self.values[0], x)
    }

    pub(crate) fn row(&self, k: usize) -> &[f64] {
        &self.values[k]
    }
}

fn sweep_bounds(c: &CoefficientField, fd: &FdGrid, xs: &[f64]) -> Result<(f64, f64)> {
    let grid = c.control_grid(fd.control_res)?;
    let horizon = c.horizon();
    let mut path = SampledPath::scalar(vec![0.0], vec![0.0])?;
    let (mut a_max, mut b_max) = (0.0f64, 0.0f64);
    for t in [0.0, 0.5 * horizon, horizon] {
        for &x in xs {
            path.set_last(&[x]);
            for i in 0..grid.len() {
                let f = grid.point(i);
                a_max = a_max.max(c.covariance(&f, t, &path)[(0, 0)]);
                b_max = b_max.max(c.drift(&f, t, &path)[0].abs());
            }
        }
    }
    Ok((a_max, b_max))
}

/// Explicit upwind scheme for `w_t + sup_f [b w_x + ½ σ² w_xx] = 0`, `w(T) = ψ`,
/// with ghost nodes extrapolated linearly at both ends.
pub fn fd_oracle_markovian(c: &CoefficientField, psi: impl Fn(f64) -> f64, fd: &FdGrid) -> Result<FdTable> {
    let meta = c.meta();
    if !meta.markovian || meta.state_dim != 1 {
        return Err(Error::validation(
            Condition::MarkovianField,
            format!("the finite-difference oracle needs a one-dimensional Markovian field, got '{}'", meta.label),
        ));
    }
    if !(fd.dx > 0.0) || !(fd.half_width >= 2.0 * fd.dx) {
        return Err(Error::domain(format!("invalid grid dx = {}, half width = {}", fd.dx, fd.half_width)));
    }
    let half = (fd.half_width / fd.dx).ceil() as usize;
    let xs: Vec<f64> = (0..=2 * half).map(|i| fd.center + (i as f64 - half as f64) * fd.dx).collect();
    let horizon = meta.horizon;

    let (a_max, b_max) = sweep_bounds(c, fd, &xs)?;
    let stable = CFL_SAFETY * fd.dx * fd.dx / (a_max + b_max * fd.dx).max(f64::MIN_POSITIVE);
    let requested = fd.dt.unwrap_or(stable);
    let cfl_reduced = requested > stable;
    if cfl_reduced {
        log::warn!("finite differences: dt = {requested} breaks monotonicity, reduced to {stable}");
    }
    let steps = (horizon / requested.min(stable)).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;

    let grid = c.control_grid(fd.control_res)?;
    let controls: Vec<_> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let n = xs.len();
    let mut values = vec![vec![0.0; n]; steps + 1];
    values[steps] = xs.iter().map(|&x| psi(x)).collect();
    let mut path = SampledPath::scalar(vec![0.0], vec![0.0])?;
    let (inv_dx, inv_dx2) = (1.0 / fd.dx, 1.0 / (fd.dx * fd.dx));
    for k in (0..steps).rev() {
        let t = k as f64 * dt;
        let (done, todo) = values.split_at_mut(k + 1);
        let next = &todo[0];
        let cur = &mut done[k];
        for i in 0..n {
            let w = next[i];
            let left = if i == 0 { 2.0 * w - next[1] } else { next[i - 1] };
            let right = if i + 1 == n { 2.0 * w - next[n - 2] } else { next[i + 1] };
            path.set_last(&[xs[i]]);
            let mut best = f64::NEG_INFINITY;
            for f in &controls {
                let b = c.drift(f, t, &path)[0];
                let a = c.covariance(f, t, &path)[(0, 0)];
                let transport = if b >= 0.0 { b * (right - w) } else { b * (w - left) } * inv_dx;
                let diffusion = 0.5 * a * (right - 2.0 * w + left) * inv_dx2;
                best = best.max(transport + diffusion);
            }
            cur[i] = w + dt * best;
        }
        if let Some(i) = cur.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                location: format!("finite-difference node {i} at t = {t}"),
            });
        }
    }
    Ok(FdTable {
        xs,
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        values,
        dt,
        dx: fd.dx,
        cfl_reduced,
    })
}
