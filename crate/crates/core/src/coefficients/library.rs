//! Serializable building blocks for random-G families and the built-in library.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{make_random_g, CoefficientField, CoefficientSequence, FieldMeta, RandomGSpec};
use crate::error::{Error, Result};
use crate::path::SampledPath;

/// A scalar functional of `(t, ω)` used as a drift or variance bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundFn {
    Const { value: f64 },
    /// `offset + slope ω(t)`
    StateAffine { offset: f64, slope: f64 },
    /// `offset + amp cos(ω(t))`
    StateCos { offset: f64, amp: f64 },
    /// `offset + amp sin(ω(t))`
    StateSin { offset: f64, amp: f64 },
    /// `offset + amp tanh(ω(t))`
    StateTanh { offset: f64, amp: f64 },
    /// `offset + amp tanh(max_{s ≤ t} ω(s))`
    RunningMax { offset: f64, amp: f64 },
    /// `offset + amp sin(ω((t - delay) ∨ 0))`
    Delayed { offset: f64, amp: f64, delay: f64 },
    Sum { terms: Vec<BoundFn> },
    Scaled { factor: f64, inner: Box<BoundFn> },
}

impl BoundFn {
    pub fn constant(value: f64) -> Self {
        BoundFn::Const { value }
    }

    pub fn eval(&self, t: f64, w: &SampledPath) -> f64 {
        match self {
            BoundFn::Const { value } => *value,
            BoundFn::StateAffine { offset, slope } => offset + slope * w.eval_scalar(t),
            BoundFn::StateCos { offset, amp } => offset + amp * w.eval_scalar(t).cos(),
            BoundFn::StateSin { offset, amp } => offset + amp * w.eval_scalar(t).sin(),
            BoundFn::StateTanh { offset, amp } => offset + amp * w.eval_scalar(t).tanh(),
            BoundFn::RunningMax { offset, amp } => offset + amp * w.running_max(t).tanh(),
            BoundFn::Delayed { offset, amp, delay } => {
                offset + amp * w.eval_scalar((t - delay).max(0.0)).sin()
            }
            BoundFn::Sum { terms } => terms.iter().map(|b| b.eval(t, w)).sum(),
            BoundFn::Scaled { factor, inner } => factor * inner.eval(t, w),
        }
    }

    pub fn is_markovian(&self) -> bool {
        match self {
            BoundFn::RunningMax { .. } | BoundFn::Delayed { .. } => false,
            BoundFn::Sum { terms } => terms.iter().all(BoundFn::is_markovian),
            BoundFn::Scaled { inner, .. } => inner.is_markovian(),
            _ => true,
        }
    }

    /// Lipschitz constant with respect to `sup_{s ≤ t} |ω(s) - α(s)|`.
    pub fn path_lipschitz(&self) -> f64 {
        match self {
            BoundFn::Const { .. } => 0.0,
            BoundFn::StateAffine { slope, .. } => slope.abs(),
            BoundFn::StateCos { amp, .. }
            | BoundFn::StateSin { amp, .. }
            | BoundFn::StateTanh { amp, .. }
            | BoundFn::RunningMax { amp, .. }
            | BoundFn::Delayed { amp, .. } => amp.abs(),
            BoundFn::Sum { terms } => terms.iter().map(BoundFn::path_lipschitz).sum(),
            BoundFn::Scaled { factor, inner } => factor.abs() * inner.path_lipschitz(),
        }
    }

    /// `(c0, c1)` with `|bound(t, ω)| ≤ c0 + c1 sup_{s ≤ t} |ω(s)|`.
    pub fn growth(&self) -> (f64, f64) {
        match self {
            BoundFn::Const { value } => (value.abs(), 0.0),
            BoundFn::StateAffine { offset, slope } => (offset.abs(), slope.abs()),
            BoundFn::StateCos { offset, amp }
            | BoundFn::StateSin { offset, amp }
            | BoundFn::StateTanh { offset, amp }
            | BoundFn::RunningMax { offset, amp }
            | BoundFn::Delayed { offset, amp, .. } => (offset.abs() + amp.abs(), 0.0),
            BoundFn::Sum { terms } => terms
                .iter()
                .map(BoundFn::growth)
                .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d)),
            BoundFn::Scaled { factor, inner } => {
                let (c0, c1) = inner.growth();
                (factor.abs() * c0, factor.abs() * c1)
            }
        }
    }

    /// `self + perturbation / n`.
    pub fn perturbed(&self, perturbation: &BoundFn, n: u32) -> BoundFn {
        BoundFn::Sum {
            terms: vec![
                self.clone(),
                BoundFn::Scaled {
                    factor: 1.0 / n as f64,
                    inner: Box::new(perturbation.clone()),
                },
            ],
        }
    }

    fn into_fn(self) -> Arc<super::ScalarFn> {
        Arc::new(move |t, w| self.eval(t, w))
    }
}

/// A terminal functional `ψ(ω)` evaluated at the horizon `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalSpec {
    Const { value: f64 },
    /// `scale ω(T)`
    Linear {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `min(ω(T)², cap)`
    Square { cap: Option<f64> },
    Abs,
    Sin,
    Tanh,
    /// `ω(T)` clamped to `[lo, hi]`
    Clamp { lo: f64, hi: f64 },
    /// `max_{s ≤ T} ω(s)`
    RunningMax,
    /// `tanh(max_{s ≤ T} ω(s))`
    TanhRunningMax,
    Sum { terms: Vec<TerminalSpec> },
    Scaled { factor: f64, inner: Box<TerminalSpec> },
}

fn one() -> f64 {
    1.0
}

impl TerminalSpec {
    pub fn eval(&self, w: &SampledPath, horizon: f64) -> f64 {
        let end = || w.eval_scalar(horizon);
        match self {
            TerminalSpec::Const { value } => *value,
            TerminalSpec::Linear { scale } => scale * end(),
            TerminalSpec::Square { cap } => {
                let x = end();
                let sq = x * x;
                cap.map_or(sq, |c| sq.min(c))
            }
            TerminalSpec::Abs => end().abs(),
            TerminalSpec::Sin => end().sin(),
            TerminalSpec::Tanh => end().tanh(),
            TerminalSpec::Clamp { lo, hi } => end().clamp(*lo, *hi),
            TerminalSpec::RunningMax => w.running_max(horizon),
            TerminalSpec::TanhRunningMax => w.running_max(horizon).tanh(),
            TerminalSpec::Sum { terms } => terms.iter().map(|p| p.eval(w, horizon)).sum(),
            TerminalSpec::Scaled { factor, inner } => factor * inner.eval(w, horizon),
        }
    }

    /// Declared `sup |ψ|`, if finite.
    pub fn bound(&self) -> Option<f64> {
        match self {
            TerminalSpec::Const { value } => Some(value.abs()),
            TerminalSpec::Square { cap } => *cap,
            TerminalSpec::Sin | TerminalSpec::Tanh | TerminalSpec::TanhRunningMax => Some(1.0),
            TerminalSpec::Clamp { lo, hi } => Some(lo.abs().max(hi.abs())),
            TerminalSpec::Linear { .. } | TerminalSpec::Abs | TerminalSpec::RunningMax => None,
            TerminalSpec::Sum { terms } => terms.iter().map(TerminalSpec::bound).sum(),
            TerminalSpec::Scaled { factor, inner } => inner.bound().map(|b| factor.abs() * b),
        }
    }

    /// Lipschitz constant with respect to the sup distance on `[0, T]`.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            TerminalSpec::Const { .. } => Some(0.0),
            TerminalSpec::Linear { scale } => Some(scale.abs()),
            TerminalSpec::Square { cap } => cap.map(|c| 2.0 * c.sqrt()),
            TerminalSpec::Abs
            | TerminalSpec::Sin
            | TerminalSpec::Tanh
            | TerminalSpec::Clamp { .. }
            | TerminalSpec::RunningMax
            | TerminalSpec::TanhRunningMax => Some(1.0),
            TerminalSpec::Sum { terms } => terms.iter().map(TerminalSpec::lipschitz).sum(),
            TerminalSpec::Scaled { factor, inner } => inner.lipschitz().map(|l| factor.abs() * l),
        }
    }

    pub fn is_markovian(&self) -> bool {
        match self {
            TerminalSpec::RunningMax | TerminalSpec::TanhRunningMax => false,
            TerminalSpec::Sum { terms } => terms.iter().all(TerminalSpec::is_markovian),
            TerminalSpec::Scaled { inner, .. } => inner.is_markovian(),
            _ => true,
        }
    }

    pub fn perturbed(&self, perturbation: &TerminalSpec, n: u32) -> TerminalSpec {
        TerminalSpec::Sum {
            terms: vec![
                self.clone(),
                TerminalSpec::Scaled {
                    factor: 1.0 / n as f64,
                    inner: Box::new(perturbation.clone()),
                },
            ],
        }
    }
}

fn default_horizon() -> f64 {
    1.0
}

/// JSON parameters of a random-G family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomGParams {
    pub b_lo: BoundFn,
    pub b_hi: BoundFn,
    pub a_lo: BoundFn,
    pub a_hi: BoundFn,
    pub bound_c: f64,
    pub terminal: TerminalSpec,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Overrides the growth constant derived from the bounds.
    #[serde(default)]
    pub growth_c: Option<f64>,
    #[serde(default)]
    pub label: Option<String>,
}

impl RandomGParams {
    /// Constant bounds.
    pub fn constant(b: (f64, f64), a: (f64, f64), terminal: TerminalSpec, horizon: f64) -> Self {
        let bound_c = [b.0.abs(), b.1.abs(), a.1, 1.0 / a.0]
            .into_iter()
            .fold(1.0, f64::max);
        RandomGParams {
            b_lo: BoundFn::constant(b.0),
            b_hi: BoundFn::constant(b.1),
            a_lo: BoundFn::constant(a.0),
            a_hi: BoundFn::constant(a.1),
            bound_c,
            terminal,
            horizon,
            growth_c: None,
            label: None,
        }
    }

    /// Growth constant implied by the bound functionals:
    /// `|b| ≤ max(c0, c1) (1 + |ω|)` and `σ ≤ sqrt(c0 + c1) (1 + |ω|)`.
    pub fn derived_growth(&self) -> f64 {
        let (b0, b1) = max_growth(&self.b_lo, &self.b_hi);
        let (a0, a1) = max_growth(&self.a_lo, &self.a_hi);
        b0.max(b1) + (a0 + a1).sqrt()
    }

    /// Path-Lipschitz constant of `b` and `σ = sqrt(a)` with `a ≥ 1 / bound_c`.
    pub fn derived_lipschitz(&self) -> f64 {
        let lb = self.b_lo.path_lipschitz() + self.b_hi.path_lipschitz();
        let la = self.a_lo.path_lipschitz() + self.a_hi.path_lipschitz();
        lb.max(la * self.bound_c.sqrt() / 2.0)
    }

    pub fn is_markovian(&self) -> bool {
        [&self.b_lo, &self.b_hi, &self.a_lo, &self.a_hi]
            .iter()
            .all(|b| b.is_markovian())
            && self.terminal.is_markovian()
    }

    pub fn meta(&self) -> FieldMeta {
        FieldMeta {
            label: self.label.clone().unwrap_or_else(|| "random_g".into()),
            state_dim: 1,
            noise_dim: 1,
            action_dim: 2,
            horizon: self.horizon,
            growth_c: self.growth_c.unwrap_or_else(|| self.derived_growth()),
            lipschitz_c: Some(self.derived_lipschitz()),
            terminal_bound: self.terminal.bound(),
            terminal_lipschitz: self.terminal.lipschitz(),
            markovian: self.is_markovian(),
        }
    }

    pub fn to_spec(&self) -> RandomGSpec {
        let terminal = self.terminal.clone();
        let horizon = self.horizon;
        RandomGSpec {
            b_lo: self.b_lo.clone().into_fn(),
            b_hi: self.b_hi.clone().into_fn(),
            a_lo: self.a_lo.clone().into_fn(),
            a_hi: self.a_hi.clone().into_fn(),
            bound_c: self.bound_c,
            terminal: Arc::new(move |w| terminal.eval(w, horizon)),
            meta: self.meta(),
        }
    }

    pub fn build(&self) -> Result<CoefficientField> {
        if !(self.horizon > 0.0) {
            return Err(Error::domain("horizon must be positive"));
        }
        make_random_g(&self.to_spec())
    }
}

fn max_growth(a: &BoundFn, b: &BoundFn) -> (f64, f64) {
    let (a0, a1) = a.growth();
    let (b0, b1) = b.growth();
    (a0.max(b0), a1.max(b1))
}

/// Additive perturbations; member `n ≥ 1` adds `perturbation / n`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    #[serde(default)]
    pub b_lo: Option<BoundFn>,
    #[serde(default)]
    pub b_hi: Option<BoundFn>,
    #[serde(default)]
    pub a_lo: Option<BoundFn>,
    #[serde(default)]
    pub a_hi: Option<BoundFn>,
    #[serde(default)]
    pub terminal: Option<TerminalSpec>,
}

/// JSON parameters of a random-G sequence `base + perturbation / n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub base: RandomGParams,
    #[serde(default)]
    pub perturb: Perturbation,
    /// Declared growth constant for all members; defaults to that of member 1.
    #[serde(default)]
    pub shared_growth_c: Option<f64>,
    #[serde(default)]
    pub shared_terminal_bound: Option<f64>,
}

impl SequenceParams {
    pub fn member_params(&self, n: u32) -> RandomGParams {
        if n == 0 {
            return self.base.clone();
        }
        let p = &self.perturb;
        let bump = |base: &BoundFn, pert: &Option<BoundFn>| match pert {
            Some(q) => base.perturbed(q, n),
            None => base.clone(),
        };
        let b = &self.base;
        RandomGParams {
            b_lo: bump(&b.b_lo, &p.b_lo),
            b_hi: bump(&b.b_hi, &p.b_hi),
            a_lo: bump(&b.a_lo, &p.a_lo),
            a_hi: bump(&b.a_hi, &p.a_hi),
            terminal: match &p.terminal {
                Some(q) => b.terminal.perturbed(q, n),
                None => b.terminal.clone(),
            },
            label: Some(format!("{}[n={n}]", b.label.as_deref().unwrap_or("random_g"))),
            ..b.clone()
        }
    }

    pub fn build(&self) -> CoefficientSequence {
        let first = self.member_params(1);
        let shared_c = self
            .shared_growth_c
            .unwrap_or_else(|| first.growth_c.unwrap_or_else(|| first.derived_growth()));
        let bound = self.shared_terminal_bound.or_else(|| first.terminal.bound());
        let params = self.clone();
        let label = self.base.label.clone().unwrap_or_else(|| "random_g".into());
        CoefficientSequence::new(label, shared_c, bound, move |n| params.member_params(n).build())
    }
}

/// Names accepted by [`builtin`].
pub fn builtin_names() -> &'static [&'static str] {
    &[
        "constant",
        "state_affine",
        "running_max",
        "delayed",
        "heat",
        "tail_reader",
    ]
}

/// Parameters of the random-G members of the built-in library.
pub fn builtin_params(name: &str, horizon: f64) -> Option<RandomGParams> {
    let c = BoundFn::constant;
    let mut p = match name {
        "constant" => RandomGParams::constant((-0.5, 0.5), (1.0, 2.0), TerminalSpec::Sin, horizon),
        "state_affine" => RandomGParams {
            b_lo: BoundFn::StateAffine { offset: -0.5, slope: 0.2 },
            b_hi: BoundFn::StateAffine { offset: 0.5, slope: 0.2 },
            a_lo: c(1.0),
            a_hi: c(2.0),
            bound_c: 2.0,
            terminal: TerminalSpec::Tanh,
            horizon,
            growth_c: None,
            label: None,
        },
        "running_max" => RandomGParams {
            b_lo: c(-0.5),
            b_hi: c(0.5),
            a_lo: c(1.0),
            a_hi: BoundFn::RunningMax { offset: 1.5, amp: 0.5 },
            bound_c: 2.0,
            terminal: TerminalSpec::TanhRunningMax,
            horizon,
            growth_c: None,
            label: None,
        },
        "delayed" => RandomGParams {
            b_lo: c(-0.5),
            b_hi: BoundFn::Delayed { offset: 0.25, amp: 0.5, delay: 0.25 * horizon },
            a_lo: c(1.0),
            a_hi: c(1.5),
            bound_c: 2.0,
            terminal: TerminalSpec::Sin,
            horizon,
            growth_c: None,
            label: None,
        },
        "heat" => RandomGParams::constant((0.0, 0.0), (1.0, 1.0), TerminalSpec::Linear { scale: 1.0 }, horizon),
        _ => return None,
    };
    p.label = Some(name.to_string());
    Some(p)
}

/// A member of the built-in library by name.
pub fn builtin(name: &str, horizon: f64) -> Result<CoefficientField> {
    if let Some(p) = builtin_params(name, horizon) {
        return p.build();
    }
    match name {
        // Drift reads the path at the horizon: a deliberate violation of non-anticipativity.
        "tail_reader" => {
            let mut meta = FieldMeta::scalar("tail_reader", 1, horizon);
            meta.terminal_lipschitz = Some(1.0);
            Ok(CoefficientField::scalar(
                meta,
                move |_, _, w| 0.1 * w.eval_scalar(horizon).tanh(),
                |_, _, _| 1.0,
                move |w| w.eval_scalar(horizon).sin(),
            ))
        }
        _ => Err(Error::domain(format!(
            "unknown built-in family '{name}' (known: {})",
            builtin_names().join(", ")
        ))),
    }
}
