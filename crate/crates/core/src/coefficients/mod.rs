//! Coefficient families `(b, σ, ψ)` indexed by `n`, the random-G construction,
//! and the sampling validators for the structural conditions on them.

mod library;
mod validate;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Condition, Error, Result};
use crate::path::SampledPath;

pub use library::{builtin, builtin_names, builtin_params, BoundFn, Perturbation, RandomGParams, SequenceParams, TerminalSpec};
pub use validate::{
    compact_convergence_gap, sample_probe_pairs, sample_probes, theta_convexity_gap,
    validate_growth, validate_nonanticipativity, validate_path_lipschitz, validate_terminal_bound,
    CheckReport, ConvergenceGap, Probe, ProbePair, ProbeSpec, NONANTICIPATIVITY_TOL,
};
pub(crate) use validate::validate_growth_against;

/// An action `f` in the unit box `[0, 1]^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlPoint(Vec<f64>);

impl ControlPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::domain(format!("control {coords:?} outside the unit box")));
        }
        Ok(ControlPoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Coordinate `i`, or 0 when the action set has fewer axes.
    pub fn get(&self, i: usize) -> f64 {
        self.0.get(i).copied().unwrap_or(0.0)
    }
}

impl TryFrom<Vec<f64>> for ControlPoint {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ControlPoint::new(v)
    }
}

impl From<ControlPoint> for Vec<f64> {
    fn from(c: ControlPoint) -> Self {
        c.0
    }
}

/// Uniform grid with `res` points per axis on `[0, 1]^dim`, enumerated in
/// lexicographic order with the first axis most significant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlGrid {
    pub dim: usize,
    pub res: usize,
}

impl ControlGrid {
    pub fn new(dim: usize, res: usize) -> Result<Self> {
        if res < 2 && dim > 0 {
            return Err(Error::domain("control grid needs at least 2 points per axis"));
        }
        Ok(ControlGrid { dim, res })
    }

    pub fn len(&self) -> usize {
        self.res.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> ControlPoint {
        let mut coords = vec![0.0; self.dim];
        let mut rest = index;
        let step = (self.res - 1) as f64;
        for c in coords.iter_mut().rev() {
            *c = (rest % self.res) as f64 / step;
            rest /= self.res;
        }
        ControlPoint(coords)
    }

    pub fn points(&self) -> Vec<ControlPoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// The nested refinement with `2 res - 1` points per axis.
    pub fn refined(&self) -> ControlGrid {
        ControlGrid {
            dim: self.dim,
            res: 2 * self.res - 1,
        }
    }
}

pub type DriftFn = dyn Fn(&ControlPoint, f64, &SampledPath) -> DVector<f64> + Send + Sync;
pub type DiffusionFn = dyn Fn(&ControlPoint, f64, &SampledPath) -> DMatrix<f64> + Send + Sync;
pub type TerminalFn = dyn Fn(&SampledPath) -> f64 + Send + Sync;
pub type ScalarFn = dyn Fn(f64, &SampledPath) -> f64 + Send + Sync;

/// Declared shape and regularity constants of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub label: String,
    pub state_dim: usize,
    pub noise_dim: usize,
    pub action_dim: usize,
    pub horizon: f64,
    pub growth_c: f64,
    pub lipschitz_c: Option<f64>,
    pub terminal_bound: Option<f64>,
    pub terminal_lipschitz: Option<f64>,
    /// Coefficients depend on the path only through its current value and
    /// the terminal functional only through the value at the horizon.
    pub markovian: bool,
}

impl FieldMeta {
    pub fn scalar(label: impl Into<String>, action_dim: usize, horizon: f64) -> Self {
        FieldMeta {
            label: label.into(),
            state_dim: 1,
            noise_dim: 1,
            action_dim,
            horizon,
            growth_c: 1.0,
            lipschitz_c: None,
            terminal_bound: None,
            terminal_lipschitz: None,
            markovian: false,
        }
    }
}

/// Non-anticipative drift, diffusion and terminal evaluators with metadata.
#[derive(Clone)]
pub struct CoefficientField {
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
    terminal: Arc<TerminalFn>,
    meta: FieldMeta,
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField").field("meta", &self.meta).finish()
    }
}

impl CoefficientField {
    pub fn new(
        meta: FieldMeta,
        drift: impl Fn(&ControlPoint, f64, &SampledPath) -> DVector<f64> + Send + Sync + 'static,
        diffusion: impl Fn(&ControlPoint, f64, &SampledPath) -> DMatrix<f64> + Send + Sync + 'static,
        terminal: impl Fn(&SampledPath) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CoefficientField {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            terminal: Arc::new(terminal),
            meta,
        }
    }

    /// One-dimensional field from scalar closures.
    pub fn scalar(
        meta: FieldMeta,
        drift: impl Fn(&ControlPoint, f64, &SampledPath) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(&ControlPoint, f64, &SampledPath) -> f64 + Send + Sync + 'static,
        terminal: impl Fn(&SampledPath) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(
            meta,
            move |f, t, w| DVector::from_element(1, drift(f, t, w)),
            move |f, t, w| DMatrix::from_element(1, 1, diffusion(f, t, w)),
            terminal,
        )
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn with_meta(mut self, meta: FieldMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.meta.horizon
    }

    pub fn control_grid(&self, res: usize) -> Result<ControlGrid> {
        ControlGrid::new(self.meta.action_dim, res)
    }

    pub fn drift(&self, f: &ControlPoint, t: f64, path: &SampledPath) -> DVector<f64> {
        (self.drift)(f, t, path)
    }

    pub fn diffusion(&self, f: &ControlPoint, t: f64, path: &SampledPath) -> DMatrix<f64> {
        (self.diffusion)(f, t, path)
    }

    /// `σ σ*`, always recomputed from `σ`.
    pub fn covariance(&self, f: &ControlPoint, t: f64, path: &SampledPath) -> DMatrix<f64> {
        let s = self.diffusion(f, t, path);
        &s * s.transpose()
    }

    pub fn terminal(&self, path: &SampledPath) -> f64 {
        (self.terminal)(path)
    }
}

/// The four bound evaluators of a random-G family plus its terminal functional.
#[derive(Clone)]
pub struct RandomGSpec {
    pub b_lo: Arc<ScalarFn>,
    pub b_hi: Arc<ScalarFn>,
    pub a_lo: Arc<ScalarFn>,
    pub a_hi: Arc<ScalarFn>,
    pub bound_c: f64,
    pub terminal: Arc<TerminalFn>,
    pub meta: FieldMeta,
}

impl RandomGSpec {
    /// Checks the ordering, positivity and `bound_c` constraints on `probes`.
    pub fn check(&self, probes: &[(f64, SampledPath)]) -> Result<()> {
        let c = self.bound_c;
        if !(c > 0.0) {
            return Err(Error::domain("bound_c must be positive"));
        }
        for (t, w) in probes {
            let (bl, bh) = ((self.b_lo)(*t, w), (self.b_hi)(*t, w));
            let (al, ah) = ((self.a_lo)(*t, w), (self.a_hi)(*t, w));
            let at = || format!("at t = {t}, path value {:?}", w.eval(*t));
            if !(al > 0.0) || !(ah > 0.0) {
                return Err(Error::validation(
                    Condition::LinearGrowth,
                    format!("variance bounds must be strictly positive, got [{al}, {ah}] {}", at()),
                ));
            }
            if bl > bh || al > ah {
                return Err(Error::validation(
                    Condition::ConvexAttainableSet,
                    format!("bounds out of order: b in [{bl}, {bh}], a in [{al}, {ah}] {}", at()),
                ));
            }
            let tol = 1e-12 * c;
            if al < 1.0 / c - tol || ah > c + tol || bl.abs() > c + tol || bh.abs() > c + tol {
                return Err(Error::validation(
                    Condition::LinearGrowth,
                    format!(
                        "bounds b in [{bl}, {bh}], a in [{al}, {ah}] violate the constant {c} {}",
                        at()
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// Deterministic probe paths used when building random-G fields.
pub fn default_bound_probes(horizon: f64) -> Vec<(f64, SampledPath)> {
    let mut out = Vec::new();
    let times = [0.0, 0.25 * horizon, 0.5 * horizon, horizon];
    for x in [-2.0, -1.0, -0.3, 0.0, 0.4, 1.0, 2.0] {
        let flat = SampledPath::constant(&[x], horizon).expect("finite");
        let ramp = SampledPath::scalar(vec![0.0, horizon], vec![0.0, x]).expect("finite");
        let zigzag = SampledPath::scalar(
            vec![0.0, 0.3 * horizon, 0.6 * horizon, horizon],
            vec![x, -x, 0.5 * x, x],
        )
        .expect("finite");
        for &t in &times {
            out.push((t, flat.clone()));
            out.push((t, ramp.clone()));
            out.push((t, zigzag.clone()));
        }
    }
    out
}

/// Builds `b = b_lo + f₁ (b_hi - b_lo)` and `σ = sqrt(a_lo + f₂ (a_hi - a_lo))` on `F = [0,1]²`.
pub fn make_random_g(spec: &RandomGSpec) -> Result<CoefficientField> {
    spec.check(&default_bound_probes(spec.meta.horizon))?;
    let (b_lo, b_hi) = (spec.b_lo.clone(), spec.b_hi.clone());
    let (a_lo, a_hi) = (spec.a_lo.clone(), spec.a_hi.clone());
    let terminal = spec.terminal.clone();
    let meta = FieldMeta {
        state_dim: 1,
        noise_dim: 1,
        action_dim: 2,
        ..spec.meta.clone()
    };
    Ok(CoefficientField::scalar(
        meta,
        move |f, t, w| {
            let lo = b_lo(t, w);
            lo + f.get(0) * (b_hi(t, w) - lo)
        },
        move |f, t, w| {
            let lo = a_lo(t, w);
            (lo + f.get(1) * (a_hi(t, w) - lo)).sqrt()
        },
        move |w| terminal(w),
    ))
}

/// A family `n ↦ (b^n, σ^n, ψ^n)`; member 0 is the limit.
#[derive(Clone)]
pub struct CoefficientSequence {
    member: Arc<dyn Fn(u32) -> Result<CoefficientField> + Send + Sync>,
    /// Growth constant declared to hold for every member.
    pub shared_growth_c: f64,
    /// Terminal bound declared to hold for every member.
    pub shared_terminal_bound: Option<f64>,
    pub label: String,
}

impl std::fmt::Debug for CoefficientSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSequence")
            .field("label", &self.label)
            .field("shared_growth_c", &self.shared_growth_c)
            .finish()
    }
}

impl CoefficientSequence {
    pub fn new(
        label: impl Into<String>,
        shared_growth_c: f64,
        shared_terminal_bound: Option<f64>,
        member: impl Fn(u32) -> Result<CoefficientField> + Send + Sync + 'static,
    ) -> Self {
        CoefficientSequence {
            member: Arc::new(member),
            shared_growth_c,
            shared_terminal_bound,
            label: label.into(),
        }
    }

    /// The same field for every `n`.
    pub fn constant(field: CoefficientField) -> Self {
        let c = field.meta().growth_c;
        let bound = field.meta().terminal_bound;
        let label = format!("constant({})", field.meta().label);
        Self::new(label, c, bound, move |_| Ok(field.clone()))
    }

    pub fn at(&self, n: u32) -> Result<CoefficientField> {
        (self.member)(n)
    }
}

/// Checks that two members agree in dimensions and horizon.
pub(crate) fn check_same_shape(a: &FieldMeta, b: &FieldMeta) -> Result<()> {
    let same = a.state_dim == b.state_dim
        && a.noise_dim == b.noise_dim
        && a.action_dim == b.action_dim
        && a.horizon == b.horizon;
    if same {
        Ok(())
    } else {
        Err(Error::validation(
            Condition::Shape,
            format!("members '{}' and '{}' have different shapes", a.label, b.label),
        ))
    }
}
