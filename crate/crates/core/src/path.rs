//! Sampled continuous paths and the path algebra used by every other module.
//!
//! A [`SampledPath`] is a piecewise-linear path on an ascending time grid,
//! extended as a constant after its last knot. All operations here are exact
//! on that representation: stopping and concatenation only insert knots, and
//! suprema of piecewise-linear quantities are attained at knots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Knots closer than this are treated as the same time.
pub const KNOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathRepr", into = "PathRepr")]
pub struct SampledPath {
    grid: Vec<f64>,
    /// Row-major, `dim` entries per knot.
    values: Vec<f64>,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct PathRepr {
    grid: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl TryFrom<PathRepr> for SampledPath {
    type Error = Error;

    fn try_from(repr: PathRepr) -> Result<Self> {
        SampledPath::new(repr.grid, repr.values)
    }
}

impl From<SampledPath> for PathRepr {
    fn from(path: SampledPath) -> Self {
        let values = path.values.chunks(path.dim).map(|c| c.to_vec()).collect();
        PathRepr {
            grid: path.grid,
            values,
        }
    }
}

impl SampledPath {
    pub fn new(grid: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values.first().map(|v| v.len()).unwrap_or(0);
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::domain("path values have inconsistent dimensions"));
        }
        let flat = values.into_iter().flatten().collect();
        Self::from_flat(grid, flat, dim)
    }

    pub fn from_flat(grid: Vec<f64>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("path dimension must be positive"));
        }
        if grid.is_empty() {
            return Err(Error::domain("path grid is empty"));
        }
        if grid[0] != 0.0 {
            return Err(Error::domain(format!("path grid must start at 0, got {}", grid[0])));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("path grid must be strictly increasing"));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::domain(format!(
                "path has {} knots but {} values of dimension {dim}",
                grid.len(),
                values.len() / dim
            )));
        }
        if grid.iter().chain(values.iter()).any(|x| !x.is_finite()) {
            return Err(Error::domain("path contains non-finite entries"));
        }
        Ok(SampledPath { grid, values, dim })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(grid, values, 1)
    }

    /// Constant path at `point` on `[0, horizon]`.
    pub fn constant(point: &[f64], horizon: f64) -> Result<Self> {
        if horizon > 0.0 {
            let mut values = point.to_vec();
            values.extend_from_slice(point);
            Self::from_flat(vec![0.0, horizon], values, point.len())
        } else {
            Self::from_flat(vec![0.0], point.to_vec(), point.len())
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn knot(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn horizon(&self) -> f64 {
        *self.grid.last().expect("grid is never empty")
    }

    pub fn last_value(&self) -> &[f64] {
        self.knot(self.grid.len() - 1)
    }

    /// Index of the last knot at or before `t` (0 for negative `t`).
    fn segment(&self, t: f64) -> usize {
        self.grid.partition_point(|&g| g <= t).saturating_sub(1)
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let i = self.segment(t);
        if i + 1 >= self.grid.len() || t <= self.grid[i] {
            out.copy_from_slice(self.knot(i));
            return;
        }
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.knot(i), self.knot(i + 1));
        for k in 0..self.dim {
            out[k] = a[k] + w * (b[k] - a[k]);
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// First coordinate at `t`.
    pub fn eval_scalar(&self, t: f64) -> f64 {
        let i = self.segment(t);
        if i + 1 >= self.grid.len() || t <= self.grid[i] {
            return self.values[i * self.dim];
        }
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let w = (t - t0) / (t1 - t0);
        let a = self.values[i * self.dim];
        let b = self.values[(i + 1) * self.dim];
        a + w * (b - a)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon() + KNOT_EPS) {
            return Err(Error::domain(format!(
                "time {t} outside path horizon [0, {}]",
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Index of an existing knot within [`KNOT_EPS`] of `t`.
    fn knot_near(&self, t: f64) -> Option<usize> {
        let i = self.segment(t);
        if (self.grid[i] - t).abs() <= KNOT_EPS {
            return Some(i);
        }
        (i + 1 < self.grid.len() && (self.grid[i + 1] - t).abs() <= KNOT_EPS).then_some(i + 1)
    }

    /// The path frozen at time `t`: equal to `self` on `[0, t]`, constant afterwards.
    /// The grid is kept and `t` becomes a knot.
    pub fn stop(&self, t: f64) -> Result<SampledPath> {
        self.check_time(t)?;
        let (cut, frozen) = self.cut_point(t);
        let mut grid = Vec::with_capacity(self.grid.len() + 1);
        let mut values = Vec::with_capacity(self.values.len() + self.dim);
        for (i, &g) in self.grid.iter().enumerate() {
            if g < cut - KNOT_EPS {
                grid.push(g);
                values.extend_from_slice(self.knot(i));
            }
        }
        grid.push(cut);
        values.extend_from_slice(&frozen);
        for &g in self.grid.iter().filter(|&&g| g > cut + KNOT_EPS) {
            grid.push(g);
            values.extend_from_slice(&frozen);
        }
        Ok(SampledPath {
            grid,
            values,
            dim: self.dim,
        })
    }

    /// The path restricted to `[0, t]`, with `t` as its last knot. Functionally
    /// identical to [`stop`](Self::stop) under the constant extension.
    pub fn prefix(&self, t: f64) -> Result<SampledPath> {
        self.check_time(t)?;
        let (cut, frozen) = self.cut_point(t);
        let n = self.grid.partition_point(|&g| g < cut - KNOT_EPS);
        let mut grid = self.grid[..n].to_vec();
        let mut values = self.values[..n * self.dim].to_vec();
        grid.push(cut);
        values.extend_from_slice(&frozen);
        Ok(SampledPath {
            grid,
            values,
            dim: self.dim,
        })
    }

    /// Knot time used for `t` (an existing knot within tolerance, else `t`) and the value there.
    fn cut_point(&self, t: f64) -> (f64, Vec<f64>) {
        match self.knot_near(t) {
            Some(i) => (self.grid[i], self.knot(i).to_vec()),
            None => (t, self.eval(t)),
        }
    }

    /// Appends a knot after the current horizon.
    pub fn push(&mut self, t: f64, value: &[f64]) -> Result<()> {
        if value.len() != self.dim {
            return Err(Error::domain("pushed value has the wrong dimension"));
        }
        if !(t > self.horizon() + KNOT_EPS) {
            return Err(Error::domain(format!(
                "pushed knot at {t} is not after the horizon {}",
                self.horizon()
            )));
        }
        if !t.is_finite() || value.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("pushed knot is non-finite"));
        }
        self.grid.push(t);
        self.values.extend_from_slice(value);
        Ok(())
    }

    /// Drops every knot from index `len` on (keeping at least one).
    pub(crate) fn truncate(&mut self, len: usize) {
        self.grid.truncate(len.max(1));
        self.values.truncate(self.grid.len() * self.dim);
    }

    /// Overwrites the value at the last knot.
    pub(crate) fn set_last(&mut self, value: &[f64]) {
        let n = self.values.len();
        self.values[n - self.dim..].copy_from_slice(value);
    }

    /// Copy of the path with one more knot appended.
    pub fn pushed(&self, t: f64, value: &[f64]) -> Result<SampledPath> {
        let mut out = SampledPath {
            grid: Vec::with_capacity(self.grid.len() + 1),
            values: Vec::with_capacity(self.values.len() + self.dim),
            dim: self.dim,
        };
        out.grid.extend_from_slice(&self.grid);
        out.values.extend_from_slice(&self.values);
        out.push(t, value)?;
        Ok(out)
    }

    /// Follows `self` on `[0, t)` and continues with the increments of `next`
    /// from `self(t)` onward.
    pub fn concat(&self, t: f64, next: &SampledPath) -> Result<SampledPath> {
        if next.dim != self.dim {
            return Err(Error::domain(format!(
                "cannot concatenate paths of dimension {} and {}",
                self.dim, next.dim
            )));
        }
        self.check_time(t)?;
        let (cut, anchor) = self.cut_point(t);
        let origin = next.knot(0);

        let mut grid = Vec::with_capacity(self.grid.len() + next.grid.len());
        let mut values = Vec::with_capacity(self.values.len() + next.values.len());
        for (i, &g) in self.grid.iter().enumerate() {
            if g < cut - KNOT_EPS {
                grid.push(g);
                values.extend_from_slice(self.knot(i));
            }
        }
        grid.push(cut);
        values.extend_from_slice(&anchor);

        let mut tail: Vec<f64> = next
            .grid
            .iter()
            .map(|&s| cut + s)
            .chain(self.grid.iter().copied())
            .filter(|&r| r > cut + KNOT_EPS)
            .collect();
        tail.sort_by(f64::total_cmp);
        let mut buf = vec![0.0; self.dim];
        let mut last = cut;
        for r in tail {
            if r - last <= KNOT_EPS {
                continue;
            }
            next.eval_into(r - cut, &mut buf);
            grid.push(r);
            values.extend(
                anchor
                    .iter()
                    .zip(&buf)
                    .zip(origin)
                    .map(|((a, b), o)| a + (b - o)),
            );
            last = r;
        }
        Ok(SampledPath {
            grid,
            values,
            dim: self.dim,
        })
    }

    /// `max_{s in [0, t]} |self(s)|` evaluated on the knots in `[0, t]` and at `t`.
    pub fn sup_norm(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.sup_norm_unchecked(t))
    }

    pub(crate) fn sup_norm_unchecked(&self, t: f64) -> f64 {
        let end = self.grid.partition_point(|&g| g <= t);
        let knots = (0..end).map(|i| norm(self.knot(i)));
        let at_t = norm(&self.eval(t));
        knots.fold(at_t, f64::max)
    }

    /// Running maximum of the first coordinate on `[0, t]`.
    pub fn running_max(&self, t: f64) -> f64 {
        let end = self.grid.partition_point(|&g| g <= t);
        (0..end)
            .map(|i| self.values[i * self.dim])
            .fold(self.eval_scalar(t), f64::max)
    }

    /// Maximum over all knots of the first coordinate.
    pub fn max_first_coord(&self) -> f64 {
        self.values
            .iter()
            .step_by(self.dim)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sup distance `max_{s in [0, t]} |self(s) - other(s)|` on the union of knots.
    pub fn sup_distance(&self, other: &SampledPath, t: f64) -> f64 {
        let mut times: Vec<f64> = self
            .grid
            .iter()
            .chain(other.grid.iter())
            .copied()
            .filter(|&r| r <= t)
            .collect();
        times.push(t);
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; other.dim];
        times
            .into_iter()
            .map(|r| {
                self.eval_into(r, &mut a);
                other.eval_into(r, &mut b);
                distance(&a, &b)
            })
            .fold(0.0, f64::max)
    }

    /// Functional equality on the union of knots (and the later of the two horizons).
    pub fn same_function(&self, other: &SampledPath, tol: f64) -> bool {
        let end = self.horizon().max(other.horizon());
        self.dim == other.dim && self.sup_distance(other, end) <= tol
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A path together with a current time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimedRepr", into = "TimedRepr")]
pub struct TimedPath {
    t: f64,
    path: SampledPath,
}

#[derive(Serialize, Deserialize)]
struct TimedRepr {
    t: f64,
    path: SampledPath,
}

impl TryFrom<TimedRepr> for TimedPath {
    type Error = Error;

    fn try_from(repr: TimedRepr) -> Result<Self> {
        TimedPath::new(repr.t, repr.path)
    }
}

impl From<TimedPath> for TimedRepr {
    fn from(p: TimedPath) -> Self {
        TimedRepr { t: p.t, path: p.path }
    }
}

impl TimedPath {
    pub fn new(t: f64, path: SampledPath) -> Result<Self> {
        path.check_time(t)?;
        Ok(TimedPath { t, path })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn path(&self) -> &SampledPath {
        &self.path
    }

    /// Current state `path(t)`.
    pub fn state(&self) -> Vec<f64> {
        self.path.eval(self.t)
    }
}

fn check_metric_inputs(a: &TimedPath, b: &TimedPath, horizon: f64) -> Result<()> {
    if a.t > horizon + KNOT_EPS || b.t > horizon + KNOT_EPS {
        return Err(Error::domain(format!(
            "metric arguments at times {} and {} exceed the horizon {horizon}",
            a.t, b.t
        )));
    }
    if a.path.dim != b.path.dim {
        return Err(Error::domain("metric arguments have different dimensions"));
    }
    Ok(())
}

/// `sup_{r in [0, T]} |a(r ∧ t) - b(r ∧ s)|`, exact for piecewise-linear paths.
fn stopped_distance(a: &TimedPath, b: &TimedPath, horizon: f64) -> f64 {
    let mut times: Vec<f64> = a
        .path
        .grid
        .iter()
        .chain(b.path.grid.iter())
        .copied()
        .filter(|&r| r <= horizon)
        .collect();
    times.extend([a.t, b.t, horizon]);
    let mut x = vec![0.0; a.path.dim];
    let mut y = vec![0.0; b.path.dim];
    times
        .into_iter()
        .map(|r| {
            a.path.eval_into(r.min(a.t), &mut x);
            b.path.eval_into(r.min(b.t), &mut y);
            distance(&x, &y)
        })
        .fold(0.0, f64::max)
}

/// The growth-weighted pseudometric under which value functions are Lipschitz:
/// `(1 + |a|_t + |b|_s) |t - s|^{1/2} + sup_r |a(r ∧ t) - b(r ∧ s)|`.
pub fn metric_d(a: &TimedPath, b: &TimedPath, horizon: f64) -> Result<f64> {
    check_metric_inputs(a, b, horizon)?;
    let weight = 1.0 + (a.path.sup_norm_unchecked(a.t) + b.path.sup_norm_unchecked(b.t));
    Ok(weight * (a.t - b.t).abs().sqrt() + stopped_distance(a, b, horizon))
}

/// `|t - s| + sup_r |a(r ∧ t) - b(r ∧ s)|`.
pub fn metric_dstar(a: &TimedPath, b: &TimedPath, horizon: f64) -> Result<f64> {
    check_metric_inputs(a, b, horizon)?;
    Ok((a.t - b.t).abs() + stopped_distance(a, b, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(vals: &[f64]) -> SampledPath {
        SampledPath::scalar((0..vals.len()).map(|i| i as f64).collect(), vals.to_vec()).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SampledPath::scalar(vec![0.0, 1.0, 1.0], vec![0.0; 3]).is_err());
        assert!(SampledPath::scalar(vec![0.5, 1.0], vec![0.0; 2]).is_err());
        assert!(SampledPath::scalar(vec![0.0, 1.0], vec![0.0, f64::NAN]).is_err());
        assert!(SampledPath::scalar(vec![0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn interpolates_and_extends_constantly() {
        let p = line(&[0.0, 2.0]);
        assert_eq!(p.eval_scalar(0.25), 0.5);
        assert_eq!(p.eval_scalar(5.0), 2.0);
    }

    #[test]
    fn stop_freezes_linear_path() {
        let p = line(&[0.0, 1.0, 2.0]);
        let s = p.stop(1.0).unwrap();
        assert_eq!(s.grid(), &[0.0, 1.0, 2.0]);
        assert_eq!(s.values, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn stop_inserts_knot_and_errors_outside_horizon() {
        let p = line(&[0.0, 1.0, 2.0]);
        let s = p.stop(0.5).unwrap();
        assert_eq!(s.grid(), &[0.0, 0.5, 1.0, 2.0]);
        assert_eq!(s.values, vec![0.0, 0.5, 0.5, 0.5]);
        assert!(p.stop(2.5).is_err());
        assert!(p.stop(-0.1).is_err());
        assert!(p.stop(2.0).unwrap().same_function(&p, 0.0));
    }

    #[test]
    fn stop_of_constant_is_constant() {
        let c = SampledPath::constant(&[3.0, -1.0], 2.0).unwrap();
        assert!(c.stop(0.7).unwrap().same_function(&c, 0.0));
    }

    #[test]
    fn near_duplicate_knots_merge_keeping_existing() {
        let p = line(&[0.0, 1.0, 2.0]);
        let s = p.stop(1.0 + 1e-13).unwrap();
        assert_eq!(s.grid(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn concat_hand_example() {
        let w = line(&[0.0, 1.0, 2.0]);
        let next = SampledPath::scalar(vec![0.0, 1.0], vec![5.0, 7.0]).unwrap();
        let c = w.concat(1.0, &next).unwrap();
        assert_eq!(c.grid(), &[0.0, 1.0, 2.0]);
        assert_eq!(c.values, vec![0.0, 1.0, 3.0]);
    }

    #[test]
    fn concat_at_zero_and_with_constant() {
        let w = line(&[1.0, 4.0, -2.0]);
        let next = SampledPath::scalar(vec![0.0, 0.5, 3.0], vec![1.0, 0.0, 2.0]).unwrap();
        assert!(w.concat(0.0, &next).unwrap().same_function(&next, 1e-15));
        let flat = SampledPath::constant(&[9.0], 1.0).unwrap();
        assert!(w.concat(1.3, &flat).unwrap().same_function(&w.stop(1.3).unwrap(), 0.0));
    }

    #[test]
    fn concat_dimension_mismatch() {
        let w = line(&[0.0, 1.0]);
        let next = SampledPath::constant(&[0.0, 0.0], 1.0).unwrap();
        assert!(matches!(w.concat(0.5, &next), Err(Error::Domain(_))));
    }

    #[test]
    fn sup_norm_examples() {
        let c = SampledPath::constant(&[3.0, 4.0], 1.0).unwrap();
        assert_eq!(c.sup_norm(1.0).unwrap(), 5.0);
        assert_eq!(line(&[0.0, -3.0]).sup_norm(1.0).unwrap(), 3.0);
        assert_eq!(line(&[1.0, -2.0, 0.0]).sup_norm(2.0).unwrap(), 2.0);
        assert_eq!(line(&[1.0, -2.0, 0.0]).sup_norm(0.5).unwrap(), 1.0);
    }

    #[test]
    fn metric_examples() {
        let zero = TimedPath::new(1.0, SampledPath::constant(&[0.0], 1.0).unwrap()).unwrap();
        let zero0 = TimedPath::new(0.0, SampledPath::constant(&[0.0], 1.0).unwrap()).unwrap();
        assert_eq!(metric_d(&zero, &zero, 1.0).unwrap(), 0.0);
        assert_eq!(metric_d(&zero, &zero0, 1.0).unwrap(), 1.0);
        assert_eq!(metric_dstar(&zero, &zero0, 1.0).unwrap(), 1.0);

        let w = TimedPath::new(2.0, line(&[0.0, 1.0, 2.0])).unwrap();
        let a = TimedPath::new(1.0, line(&[0.0, 2.0, 4.0])).unwrap();
        // (1 + 2 + 2) * 1 + sup_r |r - 2 (r ∧ 1)| = 5 + 1
        assert_eq!(metric_d(&w, &a, 2.0).unwrap(), 6.0);
        assert_eq!(metric_dstar(&w, &a, 2.0).unwrap(), 2.0);
        assert!(metric_d(&w, &a, 1.5).is_err());
    }

    #[test]
    fn json_schema() {
        let p = SampledPath::new(vec![0.0, 1.0], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"grid":[0.0,1.0],"values":[[1.0,2.0],[3.0,4.0]]}"#);
        let back: SampledPath = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<SampledPath>(r#"{"grid":[0,0],"values":[[1],[2]]}"#).is_err());
    }
}
