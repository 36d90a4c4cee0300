use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FdTable;
use crate::coefficients::CoefficientField;
use crate::error::Result;
use crate::hamiltonian::{ppde_residual, CylindricalTestFunction, Kernel};
use crate::path::{SampledPath, TimedPath};

/// Interpolant of a finite-difference table: local cubics in space, forward
/// differences between stored levels in time. Spatial derivatives are read
/// from the later of the two levels bracketing `t`.
#[derive(Debug, Clone)]
pub struct TableKernel {
    table: Arc<FdTable>,
}

impl TableKernel {
    pub fn new(table: Arc<FdTable>) -> Self {
        TableKernel { table }
    }

    /// The interpolant as a test function of the state at the last table time.
    pub fn test_function(table: Arc<FdTable>) -> Result<CylindricalTestFunction> {
        let horizon = *table.times.last().expect("tables have levels");
        let bound = table.values.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        CylindricalTestFunction::new(vec![horizon], 1, TableKernel::new(table), (bound, 0))
    }

    /// Value, first and second derivative of the cubic through the four nodes around `x`.
    fn cubic(&self, row: &[f64], x: f64) -> (f64, f64, f64) {
        let tb = &self.table;
        let n = tb.xs.len();
        let s = (x - tb.xs[0]) / tb.dx;
        let i = (s.floor() as isize).clamp(1, n as isize - 3) as usize;
        let (f0, f1, f2, f3) = (row[i - 1], row[i], row[i + 1], row[i + 2]);
        let u = s - (i - 1) as f64;
        let d1 = f1 - f0;
        let d2 = f2 - 2.0 * f1 + f0;
        let d3 = f3 - 3.0 * f2 + 3.0 * f1 - f0;
        let p = f0 + u * d1 + u * (u - 1.0) / 2.0 * d2 + u * (u - 1.0) * (u - 2.0) / 6.0 * d3;
        let dp = d1 + (2.0 * u - 1.0) / 2.0 * d2 + (3.0 * u * u - 6.0 * u + 2.0) / 6.0 * d3;
        let ddp = d2 + (u - 1.0) * d3;
        (p, dp / tb.dx, ddp / (tb.dx * tb.dx))
    }

    fn levels(&self, t: f64) -> (usize, f64) {
        let tb = &self.table;
        let s = ((t - tb.times[0]) / tb.dt).clamp(0.0, (tb.times.len() - 1) as f64);
        let k = (s.floor() as usize).min(tb.times.len() - 2);
        (k, s - k as f64)
    }
}

impl Kernel for TableKernel {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let (k, w) = self.levels(t);
        let a = self.cubic(self.table.row(k), x[0]).0;
        let b = self.cubic(self.table.row(k + 1), x[0]).0;
        (1.0 - w) * a + w * b
    }

    fn time_partial(&self, t: f64, x: &[f64]) -> f64 {
        let (k, _) = self.levels(t);
        let a = self.cubic(self.table.row(k), x[0]).0;
        let b = self.cubic(self.table.row(k + 1), x[0]).0;
        (b - a) / self.table.dt
    }

    fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let (k, _) = self.levels(t);
        vec![self.cubic(self.table.row(k + 1), x[0]).1]
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let (k, _) = self.levels(t);
        DMatrix::from_element(1, 1, self.cubic(self.table.row(k + 1), x[0]).2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub count: usize,
    pub worst: Option<usize>,
}

/// Constant paths at states in `[-x_range, x_range]` and times in `[0, 0.9 T]`.
pub fn residual_probe_points(horizon: f64, count: usize, x_range: f64, seed: u64) -> Result<Vec<TimedPath>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.random_range(0.0..0.9) * horizon;
            let x = rng.random_range(-x_range..=x_range);
            TimedPath::new(t, SampledPath::constant(&[x], t)?)
        })
        .collect()
}

/// `|∂φ + G(∇φ, ∇²φ)|` over the probe points.
pub fn residual_probe(
    c: &CoefficientField,
    phi: &CylindricalTestFunction,
    probes: &[TimedPath],
    grid_res: usize,
) -> Result<ResidualStats> {
    let residuals: Vec<f64> = probes
        .iter()
        .map(|p| ppde_residual(c, phi, p, grid_res).map(f64::abs))
        .collect::<Result<_>>()?;
    let mut worst = None;
    let mut max_abs = 0.0;
    for (i, &r) in residuals.iter().enumerate() {
        if r > max_abs || worst.is_none() {
            max_abs = r;
            worst = Some(i);
        }
    }
    let count = residuals.len();
    Ok(ResidualStats {
        max_abs,
        mean_abs: if count == 0 { 0.0 } else { residuals.iter().sum::<f64>() / count as f64 },
        count,
        worst,
    })
}
