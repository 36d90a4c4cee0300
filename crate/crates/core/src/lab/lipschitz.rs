use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{sample_probe_pairs, validate_path_lipschitz, CoefficientField, FieldMeta, ProbeSpec};
use crate::error::{Condition, Error, Result};
use crate::path::{metric_d, SampledPath, TimedPath};
use crate::solver::{solve, SolverConfig};

/// Pairs closer than this under `d` are skipped.
pub const DEGENERATE_METRIC: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSpec {
    pub count: usize,
    pub radius: f64,
    pub seed: u64,
    pub knots: usize,
}

impl Default for PairSpec {
    fn default() -> Self {
        PairSpec {
            count: 200,
            radius: 1.0,
            seed: 5,
            knots: 6,
        }
    }
}

fn walk(rng: &mut ChaCha8Rng, knots: usize, r: f64) -> Vec<f64> {
    let mut x = rng.random_range(-r..=r) * 0.5;
    (0..knots)
        .map(|_| {
            let v = x;
            x = (x + rng.random_range(-0.4..0.4) * r).clamp(-r, r);
            v
        })
        .collect()
}

/// Pairs that differ in time only, in path only, or in both, cycling in that order.
pub fn sample_timed_pairs(horizon: f64, spec: &PairSpec) -> Result<Vec<(TimedPath, TimedPath)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let knots = spec.knots.max(2);
    let grid: Vec<f64> = (0..knots).map(|k| horizon * k as f64 / (knots - 1) as f64).collect();
    let r = spec.radius;
    (0..spec.count)
        .map(|i| {
            let w = SampledPath::scalar(grid.clone(), walk(&mut rng, knots, r))?;
            let t = rng.random_range(0.0..=horizon);
            let shift = rng.random_range(0.02..0.3) * horizon;
            let s = if rng.random::<bool>() { (t + shift).min(horizon) } else { (t - shift).max(0.0) };
            let mut other = || -> Result<SampledPath> {
                let bump = rng.random_range(-0.3..0.3) * r;
                let values: Vec<f64> = (0..knots)
                    .map(|k| w.knot(k)[0] + bump + rng.random_range(-0.1..0.1) * r)
                    .collect();
                SampledPath::scalar(grid.clone(), values)
            };
            let (s, alpha) = match i % 3 {
                0 => (s, w.clone()),
                1 => (t, other()?),
                _ => (s, other()?),
            };
            Ok((TimedPath::new(t, w)?, TimedPath::new(s, alpha)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzPair {
    pub a: TimedPath,
    pub b: TimedPath,
    pub value_a: f64,
    pub value_b: f64,
    pub metric: f64,
    /// `None` for skipped pairs.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub field: String,
    pub pairs: Vec<LipschitzPair>,
    pub max_ratio: f64,
    pub skipped: usize,
    pub horizon: f64,
    pub l_budget: f64,
    pub passed: bool,
    pub solver: SolverConfig,
}

/// `L_ψ (1 + C_g (1 + √T)) exp(C_l (T + √T))` from the declared constants: terminal
/// Lipschitz, growth and path-Lipschitz. Infinite when a constant is missing.
pub fn lipschitz_budget(meta: &FieldMeta) -> f64 {
    let (Some(l_psi), Some(c_l)) = (meta.terminal_lipschitz, meta.lipschitz_c) else {
        return f64::INFINITY;
    };
    let t = meta.horizon;
    let budget = l_psi * (1.0 + meta.growth_c * (1.0 + t.sqrt())) * (c_l * (t + t.sqrt())).exp();
    log::info!(
        "Lipschitz budget for '{}': L_psi = {l_psi}, C_growth = {}, C_lip = {c_l}, T = {t} -> {budget}",
        meta.label,
        meta.growth_c
    );
    budget
}

/// Ratios `|v(a) - v(b)| / d(a, b)` over `pairs`.
pub fn run_lipschitz(
    c: &CoefficientField,
    pairs: &[(TimedPath, TimedPath)],
    cfg: &SolverConfig,
    l_budget: f64,
) -> Result<LipschitzReport> {
    let meta = c.meta();
    if meta.terminal_lipschitz.is_none() || meta.lipschitz_c.is_none() {
        return Err(Error::validation(
            Condition::PathLipschitz,
            format!("field '{}' does not declare Lipschitz constants for its coefficients and ψ", meta.label),
        ));
    }
    let check = validate_path_lipschitz(c, &sample_probe_pairs(meta, &ProbeSpec::default()));
    check.into_result()?;

    let horizon = meta.horizon;
    let rows: Vec<LipschitzPair> = pairs
        .par_iter()
        .map(|(a, b)| {
            let metric = metric_d(a, b, horizon)?;
            let value_a = solve(c, a, cfg)?.value;
            let value_b = if metric > DEGENERATE_METRIC { solve(c, b, cfg)?.value } else { value_a };
            let ratio = (metric > DEGENERATE_METRIC).then(|| (value_a - value_b).abs() / metric);
            Ok(LipschitzPair {
                a: a.clone(),
                b: b.clone(),
                value_a,
                value_b,
                metric,
                ratio,
            })
        })
        .collect::<Result<_>>()?;
    let skipped = rows.iter().filter(|r| r.ratio.is_none()).count();
    let max_ratio = rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
    Ok(LipschitzReport {
        field: meta.label.clone(),
        pairs: rows,
        max_ratio,
        skipped,
        horizon,
        l_budget,
        passed: max_ratio <= l_budget,
        solver: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Mode;

    #[test]
    fn heat_value_is_one_lipschitz() {
        let c = crate::coefficients::builtin("heat", 1.0).unwrap();
        let pairs = sample_timed_pairs(1.0, &PairSpec { count: 30, ..Default::default() }).unwrap();
        let report = run_lipschitz(&c, &pairs, &SolverConfig::new(Mode::Markovian, 20), 1.0).unwrap();
        assert!(report.max_ratio <= 1.0 + 1e-9, "{}", report.max_ratio);
        assert!(report.passed);
    }

    #[test]
    fn identical_pairs_are_skipped() {
        let c = crate::coefficients::builtin("constant", 1.0).unwrap();
        let mut pairs = sample_timed_pairs(1.0, &PairSpec { count: 3, ..Default::default() }).unwrap();
        pairs.push((pairs[0].0.clone(), pairs[0].0.clone()));
        let report = run_lipschitz(&c, &pairs, &SolverConfig::new(Mode::Markovian, 10), f64::INFINITY).unwrap();
        assert_eq!(report.skipped, 1);
        assert!(report.max_ratio > 0.0);
    }

    #[test]
    fn anticipating_field_is_refused_without_constants() {
        let c = crate::coefficients::builtin("tail_reader", 1.0).unwrap();
        let pairs = sample_timed_pairs(1.0, &PairSpec { count: 1, ..Default::default() }).unwrap();
        assert!(run_lipschitz(&c, &pairs, &SolverConfig::new(Mode::Tree, 2), 1.0).is_err());
    }
}
