//! The nonlinear operator `G` and functional derivatives of cylindrical test functions.
//!
//! `G(t, ω, p, X) = sup_f ⟨p, b(f, t, ω)⟩ + ½ tr[X σσ*(f, t, ω)]`, with the sup
//! taken over a uniform control grid and certified against the nested refinement.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, ControlGrid, ControlPoint};
use crate::error::{Error, Result};
use crate::path::{SampledPath, TimedPath};

/// Grids with more points than this are swept in parallel.
const PAR_GRID: usize = 512;

/// A smooth function `g(t, x)` of time and the stacked anchor values
/// `x = (x_1, …, x_q)`, each `x_j ∈ R^d`.
///
/// Partials default to Richardson-extrapolated central differences.
pub trait Kernel: Send + Sync {
    fn value(&self, t: f64, x: &[f64]) -> f64;

    fn time_partial(&self, t: f64, x: &[f64]) -> f64 {
        richardson(1e-3, |h| (self.value(t + h, x) - self.value(t - h, x)) / (2.0 * h))
    }

    fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        (0..x.len())
            .map(|i| {
                richardson(1e-3, |h| {
                    y[i] = x[i] + h;
                    let up = self.value(t, &y);
                    y[i] = x[i] - h;
                    let dn = self.value(t, &y);
                    y[i] = x[i];
                    (up - dn) / (2.0 * h)
                })
            })
            .collect()
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut y = x.to_vec();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = richardson(1e-2, |h| second_difference(|u| self.value(t, u), &mut y, x, i, j, h));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

/// `(4 D(h/2) - D(h)) / 3`, cancelling the `h²` term of a central difference.
fn richardson(h: f64, mut d: impl FnMut(f64) -> f64) -> f64 {
    let coarse = d(h);
    let fine = d(h / 2.0);
    (4.0 * fine - coarse) / 3.0
}

fn second_difference(
    g: impl Fn(&[f64]) -> f64,
    y: &mut [f64],
    x: &[f64],
    i: usize,
    j: usize,
    h: f64,
) -> f64 {
    let mut at = |di: f64, dj: f64| {
        y[i] = x[i] + di;
        y[j] += dj;
        let v = g(y);
        y[i] = x[i];
        y[j] = x[j];
        v
    };
    if i == j {
        (at(h, 0.0) - 2.0 * at(0.0, 0.0) + at(-h, 0.0)) / (h * h)
    } else {
        (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h)
    }
}

/// `φ(t, ω) = g(t, ω(t_1 ∧ t), …, ω(t_q ∧ t))`.
#[derive(Clone)]
pub struct CylindricalTestFunction {
    anchors: Vec<f64>,
    dim: usize,
    kernel: Arc<dyn Kernel>,
    /// `(C, q)` with `|φ| ≤ C (1 + |ω|^q)`.
    pub poly_bound: (f64, u32),
}

impl std::fmt::Debug for CylindricalTestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CylindricalTestFunction")
            .field("anchors", &self.anchors)
            .field("dim", &self.dim)
            .field("poly_bound", &self.poly_bound)
            .finish()
    }
}

impl CylindricalTestFunction {
    pub fn new(
        anchors: Vec<f64>,
        dim: usize,
        kernel: impl Kernel + 'static,
        poly_bound: (f64, u32),
    ) -> Result<Self> {
        if anchors.is_empty() || dim == 0 {
            return Err(Error::domain("test function needs at least one anchor and dimension"));
        }
        if anchors.windows(2).any(|w| !(w[1] > w[0])) || anchors[0] < 0.0 {
            return Err(Error::domain("anchor times must be nonnegative and strictly increasing"));
        }
        Ok(CylindricalTestFunction {
            anchors,
            dim,
            kernel: Arc::new(kernel),
            poly_bound,
        })
    }

    pub fn anchors(&self) -> &[f64] {
        &self.anchors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kernel(&self) -> &dyn Kernel {
        self.kernel.as_ref()
    }

    fn check(&self, at: &TimedPath) -> Result<()> {
        if at.path().dim() != self.dim {
            return Err(Error::domain(format!(
                "test function of dimension {} evaluated on a path of dimension {}",
                self.dim,
                at.path().dim()
            )));
        }
        if at.t() > self.horizon() {
            return Err(Error::domain(format!(
                "time {} is past the last anchor {}",
                at.t(),
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Last anchor time, taken as the horizon of the test function.
    pub fn horizon(&self) -> f64 {
        *self.anchors.last().expect("anchors are never empty")
    }

    fn arguments(&self, at: &TimedPath) -> Vec<f64> {
        let t = at.t();
        let mut x = vec![0.0; self.anchors.len() * self.dim];
        for (j, &tj) in self.anchors.iter().enumerate() {
            at.path().eval_into(tj.min(t), &mut x[j * self.dim..(j + 1) * self.dim]);
        }
        x
    }

    /// Anchors at or after `t`, the ones a vertical bump moves.
    fn live(&self, t: f64) -> impl Iterator<Item = usize> + '_ {
        self.anchors
            .iter()
            .enumerate()
            .filter(move |(_, &tj)| tj >= t)
            .map(|(j, _)| j)
    }

    pub fn value(&self, at: &TimedPath) -> Result<f64> {
        self.check(at)?;
        Ok(self.kernel.value(at.t(), &self.arguments(at)))
    }

    /// `φ(t, ω + bump 1_{[t, T]})` evaluated directly on the bumped path.
    pub fn value_bumped(&self, at: &TimedPath, bump: &[f64]) -> Result<f64> {
        self.check(at)?;
        let t = at.t();
        let mut x = vec![0.0; self.anchors.len() * self.dim];
        for (j, &tj) in self.anchors.iter().enumerate() {
            let s = tj.min(t);
            let slot = &mut x[j * self.dim..(j + 1) * self.dim];
            at.path().eval_into(s, slot);
            if s >= t {
                slot.iter_mut().zip(bump).for_each(|(v, b)| *v += b);
            }
        }
        Ok(self.kernel.value(t, &x))
    }

    /// `φ(t + h, ω stopped at t)`. For `h < 0` the anchors stay frozen at their
    /// time-`t` values, which is the move whose limit defines the derivative at the horizon.
    pub fn value_shifted(&self, at: &TimedPath, h: f64) -> Result<f64> {
        self.check(at)?;
        let stopped = at.path().stop(at.t())?;
        let until = at.t() + h.max(0.0);
        let x: Vec<f64> = self
            .anchors
            .iter()
            .flat_map(|&tj| stopped.eval(tj.min(until)))
            .collect();
        Ok(self.kernel.value(at.t() + h, &x))
    }

    /// Time derivative with the path frozen at `t`.
    pub fn horizontal_derivative(&self, at: &TimedPath) -> Result<f64> {
        self.check(at)?;
        Ok(self.kernel.time_partial(at.t(), &self.arguments(at)))
    }

    /// Derivative along bumps `ω + h e_i 1_{[t, T]}`: the sum of the partials
    /// over the anchors at or after `t`.
    pub fn vertical_gradient(&self, at: &TimedPath) -> Result<DVector<f64>> {
        self.check(at)?;
        let g = self.kernel.gradient(at.t(), &self.arguments(at));
        let mut out = DVector::zeros(self.dim);
        for j in self.live(at.t()) {
            for i in 0..self.dim {
                out[i] += g[j * self.dim + i];
            }
        }
        Ok(out)
    }

    pub fn vertical_hessian(&self, at: &TimedPath) -> Result<DMatrix<f64>> {
        self.check(at)?;
        let h = self.kernel.hessian(at.t(), &self.arguments(at));
        let live: Vec<usize> = self.live(at.t()).collect();
        let d = self.dim;
        let mut out = DMatrix::zeros(d, d);
        for &j in &live {
            for &l in &live {
                for i in 0..d {
                    for k in 0..d {
                        out[(i, k)] += h[(j * d + i, l * d + k)];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Partials recomputed from the defining perturbations, for cross-checking.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpDerivatives {
    pub horizontal: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Finite differences of `φ` itself: one-sided time quotients on the stopped
/// path and central differences in the bump size, both Richardson-extrapolated.
pub fn bump_oracle(phi: &CylindricalTestFunction, at: &TimedPath) -> Result<BumpDerivatives> {
    let d = phi.dim();
    let base = phi.value(at)?;
    // Near the last anchor the one-sided quotient looks backwards (left limit).
    let dir = if phi.horizon() - at.t() >= 2e-3 { 1.0 } else { -1.0 };
    let q = |h: f64| (phi.value_shifted(at, dir * h).expect("checked") - base) / (dir * h);
    let (q1, q2, q3) = (q(1e-3), q(5e-4), q(2.5e-4));
    // Two Richardson passes on a first-order quotient.
    let (r1, r2) = (2.0 * q2 - q1, 2.0 * q3 - q2);
    let horizontal = (4.0 * r2 - r1) / 3.0;
    let bumped = |b: &[f64]| phi.value_bumped(at, b).expect("checked");
    let mut gradient = DVector::zeros(d);
    let mut e = vec![0.0; d];
    for i in 0..d {
        gradient[i] = richardson(1e-3, |h| {
            e[i] = h;
            let up = bumped(&e);
            e[i] = -h;
            let dn = bumped(&e);
            e[i] = 0.0;
            (up - dn) / (2.0 * h)
        });
    }
    let zero = vec![0.0; d];
    let mut hessian = DMatrix::zeros(d, d);
    let mut y = vec![0.0; d];
    for i in 0..d {
        for j in i..d {
            let v = richardson(1e-2, |h| second_difference(bumped, &mut y, &zero, i, j, h));
            hessian[(i, j)] = v;
            hessian[(j, i)] = v;
        }
    }
    Ok(BumpDerivatives {
        horizontal,
        gradient,
        hessian,
    })
}

/// `|a - b| ≤ tol · max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// The supremum of the generator over a control grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GEvaluation {
    pub value: f64,
    pub argmax_control: ControlPoint,
    /// `|value(res) - value(2 res - 1)|`.
    pub gap_certificate: f64,
}

/// `⟨p, b(f, t, ω)⟩ + ½ tr[X σσ*(f, t, ω)]`.
pub fn generator(
    c: &CoefficientField,
    f: &ControlPoint,
    t: f64,
    path: &SampledPath,
    grad: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> f64 {
    let b = c.drift(f, t, path);
    let s = c.diffusion(f, t, path);
    // tr[X σσ*] = Σ_k σ_kᵀ X σ_k over the columns of σ.
    let quad: f64 = s.column_iter().map(|col| col.dot(&(hess * col))).sum();
    grad.dot(&b) + 0.5 * quad
}

/// Max and lowest index attaining it.
fn grid_sup(
    c: &CoefficientField,
    grid: ControlGrid,
    t: f64,
    path: &SampledPath,
    grad: &DVector<f64>,
    hess: &DMatrix<f64>,
) -> (f64, usize) {
    let eval = |i: usize| generator(c, &grid.point(i), t, path, grad, hess);
    let values: Vec<f64> = if grid.len() > PAR_GRID {
        (0..grid.len()).into_par_iter().map(eval).collect()
    } else {
        (0..grid.len()).map(eval).collect()
    };
    values
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(best, bi), (i, &v)| {
            if v > best {
                (v, i)
            } else {
                (best, bi)
            }
        })
}

pub fn evaluate_g(
    c: &CoefficientField,
    at: &TimedPath,
    grad: &DVector<f64>,
    hess: &DMatrix<f64>,
    grid_res: usize,
) -> Result<GEvaluation> {
    let d = c.meta().state_dim;
    if grad.len() != d || hess.nrows() != d || hess.ncols() != d {
        return Err(Error::domain(format!(
            "gradient/hessian shapes {} and {}x{} do not match state dimension {d}",
            grad.len(),
            hess.nrows(),
            hess.ncols()
        )));
    }
    let scale = hess.amax().max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (hess[(i, j)] - hess[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::domain(format!(
                    "hessian is not symmetric at ({i}, {j}): {} vs {}",
                    hess[(i, j)],
                    hess[(j, i)]
                )));
            }
        }
    }
    if grad.iter().chain(hess.iter()).any(|x| !x.is_finite()) {
        return Err(Error::domain("non-finite gradient or hessian"));
    }
    let grid = c.control_grid(grid_res)?;
    let (value, idx) = grid_sup(c, grid, at.t(), at.path(), grad, hess);
    let (fine, _) = grid_sup(c, grid.refined(), at.t(), at.path(), grad, hess);
    if !value.is_finite() || !fine.is_finite() {
        return Err(Error::Numeric {
            location: format!("generator at t = {}", at.t()),
        });
    }
    Ok(GEvaluation {
        value,
        argmax_control: grid.point(idx),
        gap_certificate: (fine - value).abs(),
    })
}

/// `∂φ + G(t, ω, ∇φ, ∇²φ)`; nonpositive for subsolution test functions touching from above.
pub fn ppde_residual(
    c: &CoefficientField,
    phi: &CylindricalTestFunction,
    at: &TimedPath,
    grid_res: usize,
) -> Result<f64> {
    let dt = phi.horizontal_derivative(at)?;
    let grad = phi.vertical_gradient(at)?;
    let hess = phi.vertical_hessian(at)?;
    Ok(dt + evaluate_g(c, at, &grad, &hess, grid_res)?.value)
}

/// `c0 + c_t t + ⟨l, x⟩ + ½ xᵀ Q x`, with exact partials.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub constant: f64,
    pub time: f64,
    pub linear: DVector<f64>,
    pub quad: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(constant: f64, time: f64, linear: Vec<f64>, quad: DMatrix<f64>) -> Result<Self> {
        let n = linear.len();
        if quad.nrows() != n || quad.ncols() != n {
            return Err(Error::domain("quadratic form has the wrong shape"));
        }
        if (&quad - quad.transpose()).amax() > 0.0 {
            return Err(Error::domain("quadratic form must be symmetric"));
        }
        Ok(Quadratic {
            constant,
            time,
            linear: DVector::from_vec(linear),
            quad,
        })
    }
}

impl Kernel for Quadratic {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        self.constant + self.time * t + self.linear.dot(&x) + 0.5 * x.dot(&(&self.quad * &x))
    }

    fn time_partial(&self, _: f64, _: &[f64]) -> f64 {
        self.time
    }

    fn gradient(&self, _: f64, x: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(x);
        (&self.linear + &self.quad * x).iter().copied().collect()
    }

    fn hessian(&self, _: f64, _: &[f64]) -> DMatrix<f64> {
        self.quad.clone()
    }
}

/// `t ⟨l, x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeLinear {
    pub linear: Vec<f64>,
}

impl Kernel for TimeLinear {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        t * dot(&self.linear, x)
    }

    fn time_partial(&self, _: f64, x: &[f64]) -> f64 {
        dot(&self.linear, x)
    }

    fn gradient(&self, t: f64, _: &[f64]) -> Vec<f64> {
        self.linear.iter().map(|l| t * l).collect()
    }

    fn hessian(&self, _: f64, x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

/// `e^{-λ t} sin(⟨k, x⟩)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DampedWave {
    pub decay: f64,
    pub freq: Vec<f64>,
}

impl Kernel for DampedWave {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        (-self.decay * t).exp() * dot(&self.freq, x).sin()
    }

    fn time_partial(&self, t: f64, x: &[f64]) -> f64 {
        -self.decay * self.value(t, x)
    }

    fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let c = (-self.decay * t).exp() * dot(&self.freq, x).cos();
        self.freq.iter().map(|k| c * k).collect()
    }

    fn hessian(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        let s = -(-self.decay * t).exp() * dot(&self.freq, x).sin();
        let k = DVector::from_column_slice(&self.freq);
        &k * k.transpose() * s
    }
}

/// `g(t, x) = x_1 x_2 ⋯` over the first coordinate of each anchor, partials by differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorProduct;

impl Kernel for AnchorProduct {
    fn value(&self, _: f64, x: &[f64]) -> f64 {
        x.iter().product()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-dimensional test functions with closed-form partials, on `[0, horizon]`.
pub fn builtin_test_functions(horizon: f64) -> Vec<(&'static str, CylindricalTestFunction)> {
    let one = |q: f64| DMatrix::from_element(1, 1, q);
    let mid = 0.5 * horizon;
    vec![
        (
            "time",
            CylindricalTestFunction::new(vec![horizon], 1, Quadratic::new(0.0, 1.0, vec![0.0], one(0.0)).unwrap(), (horizon, 0)),
        ),
        (
            "terminal_state",
            CylindricalTestFunction::new(vec![horizon], 1, Quadratic::new(0.0, 0.0, vec![1.0], one(0.0)).unwrap(), (1.0, 1)),
        ),
        (
            "terminal_square",
            CylindricalTestFunction::new(vec![horizon], 1, Quadratic::new(0.0, 0.0, vec![0.0], one(2.0)).unwrap(), (1.0, 2)),
        ),
        (
            "heat_quadratic",
            CylindricalTestFunction::new(vec![horizon], 1, Quadratic::new(horizon, -1.0, vec![0.0], one(2.0)).unwrap(), (1.0 + horizon, 2)),
        ),
        (
            "time_state",
            CylindricalTestFunction::new(vec![horizon], 1, TimeLinear { linear: vec![1.0] }, (horizon, 1)),
        ),
        (
            "two_anchor_quadratic",
            CylindricalTestFunction::new(
                vec![mid, horizon],
                1,
                Quadratic::new(0.3, 0.2, vec![0.5, -1.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0])).unwrap(),
                (4.0, 2),
            ),
        ),
        (
            "damped_wave",
            CylindricalTestFunction::new(
                vec![0.25 * horizon, mid, horizon],
                1,
                DampedWave { decay: 0.7, freq: vec![0.4, -1.1, 0.8] },
                (1.0, 0),
            ),
        ),
    ]
    .into_iter()
    .map(|(name, f)| (name, f.expect("valid built-in")))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::RandomGParams;
    use crate::coefficients::TerminalSpec;

    fn flat(x: f64) -> SampledPath {
        SampledPath::constant(&[x], 1.0).unwrap()
    }

    fn at(t: f64, path: SampledPath) -> TimedPath {
        TimedPath::new(t, path).unwrap()
    }

    fn quad(c: f64, time: f64, l: f64, q: f64) -> Quadratic {
        Quadratic::new(c, time, vec![l], DMatrix::from_element(1, 1, q)).unwrap()
    }

    fn random_g(b: (f64, f64), a: (f64, f64)) -> CoefficientField {
        RandomGParams::constant(b, a, TerminalSpec::Sin, 1.0).build().unwrap()
    }

    fn scalar(g: f64, h: f64) -> (DVector<f64>, DMatrix<f64>) {
        (DVector::from_element(1, g), DMatrix::from_element(1, 1, h))
    }

    #[test]
    fn horizontal_examples() {
        let time = CylindricalTestFunction::new(vec![1.0], 1, quad(0.0, 1.0, 0.0, 0.0), (1.0, 0)).unwrap();
        let state = CylindricalTestFunction::new(vec![1.0], 1, quad(0.0, 0.0, 1.0, 0.0), (1.0, 1)).unwrap();
        let tx = CylindricalTestFunction::new(vec![1.0], 1, TimeLinear { linear: vec![1.0] }, (1.0, 1)).unwrap();
        let w = SampledPath::scalar(vec![0.0, 1.0], vec![0.5, -1.0]).unwrap();
        for t in [0.0, 0.3, 1.0] {
            assert_eq!(time.horizontal_derivative(&at(t, w.clone())).unwrap(), 1.0);
            assert_eq!(state.horizontal_derivative(&at(t, w.clone())).unwrap(), 0.0);
        }
        for t in [0.0, 0.4, 0.9] {
            let p = at(t, flat(2.0));
            assert_eq!(tx.horizontal_derivative(&p).unwrap(), 2.0);
            let oracle = bump_oracle(&tx, &p).unwrap().horizontal;
            assert!((oracle - 2.0).abs() < 1e-9, "{oracle}");
        }
    }

    #[test]
    fn vertical_examples() {
        let state = CylindricalTestFunction::new(vec![1.0], 1, quad(0.0, 0.0, 1.0, 0.0), (1.0, 1)).unwrap();
        let sq = CylindricalTestFunction::new(vec![1.0], 1, quad(0.0, 0.0, 0.0, 2.0), (1.0, 2)).unwrap();
        let prod = CylindricalTestFunction::new(vec![0.3, 0.8], 1, AnchorProduct, (1.0, 2)).unwrap();
        let w = SampledPath::scalar(vec![0.0, 0.5, 1.0], vec![0.2, 1.4, -0.6]).unwrap();
        for t in [0.0, 0.3, 0.5, 0.77, 1.0] {
            let p = at(t, w.clone());
            assert_eq!(state.vertical_gradient(&p).unwrap()[0], 1.0);
            assert_eq!(state.vertical_hessian(&p).unwrap()[(0, 0)], 0.0);
            assert_eq!(sq.vertical_gradient(&p).unwrap()[0], 2.0 * w.eval_scalar(t));
            assert_eq!(sq.vertical_hessian(&p).unwrap()[(0, 0)], 2.0);
        }
        for t in [0.31, 0.5, 0.8] {
            let p = at(t, w.clone());
            let g = prod.vertical_gradient(&p).unwrap()[0];
            assert!((g - w.eval_scalar(0.3)).abs() < 1e-9, "{g}");
            assert!(prod.vertical_hessian(&p).unwrap()[(0, 0)].abs() < 1e-8);
            let oracle = bump_oracle(&prod, &p).unwrap();
            assert!((oracle.gradient[0] - w.eval_scalar(0.3)).abs() < 1e-9);
        }
    }

    #[test]
    fn builtin_partials_match_bump_oracle() {
        let w = SampledPath::scalar(vec![0.0, 0.2, 0.45, 0.7, 1.0], vec![0.1, -0.4, 0.9, 0.3, 1.2]).unwrap();
        for (name, phi) in builtin_test_functions(1.0) {
            for t in [0.0, 0.1, 0.25, 0.5, 0.6, 0.999, 1.0] {
                let p = at(t, w.clone());
                let oracle = bump_oracle(&phi, &p).unwrap();
                let h = phi.horizontal_derivative(&p).unwrap();
                let g = phi.vertical_gradient(&p).unwrap()[0];
                let x = phi.vertical_hessian(&p).unwrap()[(0, 0)];
                assert!(close(h, oracle.horizontal, 1e-6), "{name} t={t}: {h} vs {}", oracle.horizontal);
                assert!(close(g, oracle.gradient[0], 1e-6), "{name} t={t}: {g} vs {}", oracle.gradient[0]);
                assert!(close(x, oracle.hessian[(0, 0)], 1e-6), "{name} t={t}: {x} vs {}", oracle.hessian[(0, 0)]);
            }
        }
    }

    #[test]
    fn g_examples() {
        let p = at(0.2, flat(0.3));
        let c = random_g((-1.0, 2.0), (1.0, 3.0));
        let (g, h) = scalar(0.0, 0.0);
        assert_eq!(evaluate_g(&c, &p, &g, &h, 3).unwrap().value, 0.0);

        let (g, h) = scalar(1.0, -1.0);
        let e = evaluate_g(&c, &p, &g, &h, 5).unwrap();
        assert_eq!(e.value, 1.5);
        assert_eq!(e.argmax_control.coords(), &[1.0, 0.0]);
        assert_eq!(e.gap_certificate, 0.0);

        let (g, h) = scalar(-1.0, 2.0);
        let e = evaluate_g(&c, &p, &g, &h, 2).unwrap();
        assert!((e.value - 4.0).abs() < 1e-12);
        assert_eq!(e.argmax_control.coords(), &[0.0, 1.0]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let c = random_g((0.0, 0.0), (1.0, 1.0));
        let (g, h) = scalar(1.0, 1.0);
        let e = evaluate_g(&c, &at(0.0, flat(0.0)), &g, &h, 4).unwrap();
        assert_eq!(e.argmax_control.coords(), &[0.0, 0.0]);
    }

    #[test]
    fn asymmetric_hessian_is_refused() {
        let mut meta = crate::coefficients::FieldMeta::scalar("2d", 1, 1.0);
        meta.state_dim = 2;
        meta.noise_dim = 2;
        let c = CoefficientField::new(
            meta,
            |_, _, _| DVector::zeros(2),
            |_, _, _| DMatrix::identity(2, 2),
            |_| 0.0,
        );
        let w = SampledPath::constant(&[0.0, 0.0], 1.0).unwrap();
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let err = evaluate_g(&c, &at(0.0, w), &DVector::zeros(2), &h, 3).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn residual_examples() {
        let a = 1.7;
        let heat = random_g((0.0, 0.0), (a, a));
        let exact = CylindricalTestFunction::new(vec![1.0], 1, quad(a, -a, 0.0, 2.0), (1.0 + a, 2)).unwrap();
        let sq = CylindricalTestFunction::new(vec![1.0], 1, quad(0.0, 0.0, 0.0, 2.0), (1.0, 2)).unwrap();
        for (t, x) in [(0.0, 0.0), (0.3, 1.5), (0.9, -2.0)] {
            let p = at(t, flat(x));
            assert!(ppde_residual(&heat, &exact, &p, 3).unwrap().abs() < 1e-12);
            assert!((ppde_residual(&heat, &sq, &p, 3).unwrap() - a).abs() < 1e-12);
        }
        let drift = random_g((0.0, 1.0), (1.0, 1.0));
        let state = CylindricalTestFunction::new(vec![1.0], 1, quad(0.0, 0.0, 1.0, 0.0), (1.0, 1)).unwrap();
        assert_eq!(ppde_residual(&drift, &state, &at(0.5, flat(3.0)), 2).unwrap(), 1.0);
    }
}
