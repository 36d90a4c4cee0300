//! Sampling validators. Each condition quantifies over an infinite set, so a
//! check reports the worst ratio found over a deterministic, seeded probe set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_same_shape, CoefficientField, CoefficientSequence, ControlGrid, ControlPoint, FieldMeta};
use crate::error::{Condition, Error, Result};
use crate::path::SampledPath;

pub const NONANTICIPATIVITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub control: ControlPoint,
    pub t: f64,
    pub path: SampledPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePair {
    pub probe: Probe,
    pub other: SampledPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    pub count: usize,
    /// Bound on the sup-norm of probe paths.
    pub radius: f64,
    pub seed: u64,
    pub knots: usize,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec {
            count: 256,
            radius: 2.0,
            seed: 7,
            knots: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub condition: Condition,
    pub estimate: f64,
    pub threshold: f64,
    pub passed: bool,
    pub probes: usize,
    /// Index of the probe attaining the estimate.
    pub worst: Option<usize>,
}

impl CheckReport {
    fn from_ratios(condition: Condition, ratios: Vec<Option<f64>>, threshold: f64) -> Self {
        let mut estimate = 0.0;
        let mut worst = None;
        for (i, r) in ratios.iter().enumerate() {
            if let Some(r) = *r {
                if r > estimate || (worst.is_none() && r >= estimate) {
                    estimate = r;
                    worst = Some(i);
                }
            }
        }
        CheckReport {
            condition,
            estimate,
            threshold,
            passed: estimate <= threshold,
            probes: ratios.len(),
            worst,
        }
    }

    /// `Ok` when passed, otherwise a validation error naming the condition.
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::validation(
                self.condition,
                format!(
                    "estimate {} exceeds {} (worst probe {:?} of {})",
                    self.estimate, self.threshold, self.worst, self.probes
                ),
            ))
        }
    }
}

fn random_path(rng: &mut ChaCha8Rng, horizon: f64, spec: &ProbeSpec, kind: usize) -> SampledPath {
    let knots = spec.knots.max(2);
    let grid: Vec<f64> = (0..knots)
        .map(|i| horizon * i as f64 / (knots - 1) as f64)
        .collect();
    let r = spec.radius;
    let values: Vec<f64> = match kind % 3 {
        0 => vec![rng.random_range(-r..=r); knots],
        1 => {
            let peak = rng.random_range(-r..=r);
            let center = rng.random_range(0.2..0.8) * horizon;
            let width = rng.random_range(0.1..0.5) * horizon;
            grid.iter()
                .map(|&g| peak * (1.0 - (g - center).abs() / width).max(0.0))
                .collect()
        }
        _ => {
            let mut x = rng.random_range(-r..=r) * 0.5;
            let mut vals = Vec::with_capacity(knots);
            for _ in 0..knots {
                vals.push(x);
                x = (x + rng.random_range(-0.5..0.5) * r).clamp(-r, r);
            }
            vals
        }
    };
    SampledPath::scalar(grid, values).expect("probe paths are finite and ordered")
}

fn random_control(rng: &mut ChaCha8Rng, dim: usize) -> ControlPoint {
    ControlPoint::new((0..dim).map(|_| rng.random_range(0.0..=1.0)).collect())
        .expect("coordinates drawn from the unit interval")
}

/// Probes `(f, t, ω)` with one-dimensional paths bounded by `spec.radius`.
pub fn sample_probes(meta: &FieldMeta, spec: &ProbeSpec) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count)
        .map(|i| {
            let path = lift(random_path(&mut rng, meta.horizon, spec, i), meta.state_dim);
            let t = rng.random_range(0.0..=meta.horizon);
            Probe {
                control: random_control(&mut rng, meta.action_dim),
                t,
                path,
            }
        })
        .collect()
}

/// Replicates a scalar path across `dim` coordinates.
fn lift(path: SampledPath, dim: usize) -> SampledPath {
    if dim == 1 {
        return path;
    }
    let flat = (0..path.len())
        .flat_map(|i| std::iter::repeat_n(path.knot(i)[0], dim))
        .collect();
    SampledPath::from_flat(path.grid().to_vec(), flat, dim).expect("same grid")
}

/// Probe pairs `(ω, α)` where `α` is a shifted or perturbed copy of `ω`.
pub fn sample_probe_pairs(meta: &FieldMeta, spec: &ProbeSpec) -> Vec<ProbePair> {
    let probes = sample_probes(meta, spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    probes
        .into_iter()
        .enumerate()
        .map(|(i, probe)| {
            let scale = 0.25 * spec.radius;
            let w = &probe.path;
            let shift = rng.random_range(-scale..=scale);
            let noise: Vec<f64> = (0..w.len()).map(|_| rng.random_range(-scale..=scale)).collect();
            let flat = (0..w.len())
                .flat_map(|k| {
                    let delta = if i % 2 == 0 { shift } else { noise[k] };
                    w.knot(k).iter().map(move |x| x + delta).collect::<Vec<_>>()
                })
                .collect();
            let other = SampledPath::from_flat(w.grid().to_vec(), flat, w.dim()).expect("same grid");
            ProbePair { probe, other }
        })
        .collect()
}

fn coeff_distance(
    c: &CoefficientField,
    f: &ControlPoint,
    t: f64,
    a: &SampledPath,
    b: &SampledPath,
) -> f64 {
    let db = (c.drift(f, t, a) - c.drift(f, t, b)).norm();
    let ds = (c.diffusion(f, t, a) - c.diffusion(f, t, b)).norm();
    db.max(ds)
}

/// Copy of `w` that agrees on `[0, t]` and is bumped by a ramp afterwards.
fn tail_perturbed(w: &SampledPath, t: f64, bump: f64, jitter: &[f64]) -> Result<SampledPath> {
    let stopped = w.stop(t)?;
    // `stop` keeps the grid and inserts `t`; take values from `w` on that grid.
    let horizon = w.horizon();
    let span = (horizon - t).max(f64::MIN_POSITIVE);
    let mut flat = Vec::with_capacity(stopped.len() * w.dim());
    let mut k = 0;
    for &g in stopped.grid() {
        let mut v = w.eval(g);
        if g > t {
            let j = jitter.get(k).copied().unwrap_or(0.0);
            k += 1;
            for x in v.iter_mut() {
                *x += bump * ((g - t) / span) * (1.0 + 0.5 * j);
            }
        }
        flat.extend(v);
    }
    SampledPath::from_flat(stopped.grid().to_vec(), flat, w.dim())
}

/// Compares coefficients on `ω` and on a copy of `ω` altered after `t`.
pub fn validate_nonanticipativity(c: &CoefficientField, probes: &[Probe], seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, Vec<f64>)> = probes
        .iter()
        .map(|p| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let jitter = (0..p.path.len() + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            (sign * rng.random_range(0.5..2.0), jitter)
        })
        .collect();
    let ratios = probes
        .par_iter()
        .zip(bumps.par_iter())
        .map(|(p, (bump, jitter))| {
            if p.t >= p.path.horizon() {
                return Some(0.0);
            }
            let other = tail_perturbed(&p.path, p.t, *bump, jitter).ok()?;
            Some(coeff_distance(c, &p.control, p.t, &p.path, &other))
        })
        .collect();
    CheckReport::from_ratios(Condition::NonAnticipativity, ratios, NONANTICIPATIVITY_TOL)
}

/// Worst `(‖b‖ + ‖σ‖) / (1 + sup_{s ≤ t} ‖ω(s)‖)` against the declared growth constant.
pub fn validate_growth(c: &CoefficientField, probes: &[Probe]) -> CheckReport {
    validate_growth_against(c, probes, c.meta().growth_c, Condition::LinearGrowth)
}

pub(crate) fn validate_growth_against(
    c: &CoefficientField,
    probes: &[Probe],
    threshold: f64,
    condition: Condition,
) -> CheckReport {
    let ratios = probes
        .par_iter()
        .map(|p| {
            let b = c.drift(&p.control, p.t, &p.path).norm();
            let s = c.diffusion(&p.control, p.t, &p.path).norm();
            let scale = 1.0 + p.path.sup_norm(p.t).ok()?;
            Some((b + s) / scale)
        })
        .collect();
    CheckReport::from_ratios(condition, ratios, threshold)
}

/// Worst ratio of coefficient discrepancy to `sup_{s ≤ t} ‖ω(s) - α(s)‖`.
pub fn validate_path_lipschitz(c: &CoefficientField, pairs: &[ProbePair]) -> CheckReport {
    let ratios = pairs
        .par_iter()
        .map(|pair| {
            let p = &pair.probe;
            let denom = p.path.sup_distance(&pair.other, p.t);
            (denom > 1e-12).then(|| coeff_distance(c, &p.control, p.t, &p.path, &pair.other) / denom)
        })
        .collect();
    let threshold = c.meta().lipschitz_c.unwrap_or(f64::INFINITY);
    CheckReport::from_ratios(Condition::PathLipschitz, ratios, threshold)
}

/// Worst `|ψ(ω)|` over the probe paths against `bound` (the declared one when `None`).
pub fn validate_terminal_bound(c: &CoefficientField, probes: &[Probe], bound: Option<f64>) -> CheckReport {
    let threshold = bound.or(c.meta().terminal_bound).unwrap_or(f64::INFINITY);
    let ratios = probes
        .par_iter()
        .map(|p| Some(c.terminal(&p.path).abs()))
        .collect();
    CheckReport::from_ratios(Condition::TerminalBound, ratios, threshold)
}

/// Hausdorff distance between the sampled attainable set `{(b, σ²)(f)}` over a
/// `res`-point grid and its convex hull (scalar fields only). Tends to zero
/// under refinement exactly when the attainable set is convex.
pub fn theta_convexity_gap(c: &CoefficientField, t: f64, path: &SampledPath, res: usize) -> Result<f64> {
    let meta = c.meta();
    if meta.state_dim != 1 || meta.noise_dim != 1 {
        return Err(Error::domain("convexity surrogate is implemented for scalar fields"));
    }
    let grid = ControlGrid::new(meta.action_dim, res)?;
    let pts: Vec<[f64; 2]> = grid
        .points()
        .iter()
        .map(|f| [c.drift(f, t, path)[0], c.covariance(f, t, path)[(0, 0)]])
        .collect();
    let hull = convex_hull(&pts);
    let nearest = |q: [f64; 2]| {
        pts.iter()
            .map(|p| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    };
    // Dense sample of the hull: a lattice over its bounding box plus its edges.
    const LATTICE: usize = 96;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &hull {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let mut gap: f64 = 0.0;
    for (i, a) in hull.iter().enumerate() {
        let b = hull[(i + 1) % hull.len()];
        for s in 0..=LATTICE {
            let u = s as f64 / LATTICE as f64;
            gap = gap.max(nearest([a[0] + u * (b[0] - a[0]), a[1] + u * (b[1] - a[1])]));
        }
    }
    if hull.len() >= 3 {
        for i in 0..=LATTICE {
            for j in 0..=LATTICE {
                let q = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / LATTICE as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / LATTICE as f64,
                ];
                if inside_hull(&hull, q) {
                    gap = gap.max(nearest(q));
                }
            }
        }
    }
    Ok(gap)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn inside_hull(hull: &[[f64; 2]], q: [f64; 2]) -> bool {
    (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], q) >= -1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceGap {
    pub b: f64,
    pub sigma: f64,
    pub psi: f64,
}

/// Sup discrepancies between member `n` and member 0 over `probes`.
pub fn compact_convergence_gap(seq: &CoefficientSequence, n: u32, probes: &[Probe]) -> Result<ConvergenceGap> {
    let limit = seq.at(0)?;
    let member = seq.at(n)?;
    check_same_shape(limit.meta(), member.meta())?;
    let parts: Vec<(f64, f64, f64)> = probes
        .par_iter()
        .map(|p| {
            let (f, t, w) = (&p.control, p.t, &p.path);
            (
                (member.drift(f, t, w) - limit.drift(f, t, w)).norm(),
                (member.diffusion(f, t, w) - limit.diffusion(f, t, w)).norm(),
                (member.terminal(w) - limit.terminal(w)).abs(),
            )
        })
        .collect();
    Ok(parts.into_iter().fold(
        ConvergenceGap { b: 0.0, sigma: 0.0, psi: 0.0 },
        |g, (b, s, p)| ConvergenceGap {
            b: g.b.max(b),
            sigma: g.sigma.max(s),
            psi: g.psi.max(p),
        },
    ))
}
