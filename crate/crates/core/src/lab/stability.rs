use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CompactTestSet;
use crate::coefficients::{
    sample_probes, validate_growth_against, validate_terminal_bound, CoefficientField, CoefficientSequence,
    ProbeSpec,
};
use crate::error::{Condition, Error, Result};
use crate::solver::{solve, SolverConfig, ValueEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub sequence: String,
    pub n_values: Vec<u32>,
    /// `sup_i |v^n(t_i, ω_i) - v^0(t_i, ω_i)|` per entry of `n_values`.
    pub gaps: Vec<f64>,
    /// Gap between member 0 solved with `2 steps` and with `steps`.
    pub floor_estimate: f64,
    /// The configuration used for every member (the floor run doubles `steps` only).
    pub solver: SolverConfig,
    pub limit_values: Vec<f64>,
    /// `values[k][i]` is `v^{n_values[k]}` at test point `i`.
    pub values: Vec<Vec<f64>>,
    /// Summed solver time per entry of `n_values`; not part of the numeric results.
    pub runtime_ms: Vec<f64>,
}

/// Checks the shared growth constant and the uniform terminal bound on `members`.
fn validate_members(seq: &CoefficientSequence, members: &[(u32, CoefficientField)]) -> Result<()> {
    let bound = seq.shared_terminal_bound.ok_or_else(|| {
        Error::validation(
            Condition::UniformTerminalBound,
            format!("sequence '{}' declares no uniform terminal bound", seq.label),
        )
    })?;
    for (n, c) in members {
        let probes = sample_probes(c.meta(), &ProbeSpec::default());
        let growth = validate_growth_against(c, &probes, seq.shared_growth_c, Condition::SharedLinearGrowth);
        if !growth.passed {
            return Err(Error::validation(
                Condition::SharedLinearGrowth,
                format!(
                    "member n = {n} has growth ratio {} above the shared constant {}",
                    growth.estimate, seq.shared_growth_c
                ),
            ));
        }
        let terminal = validate_terminal_bound(c, &probes, Some(bound));
        if !terminal.passed {
            return Err(Error::validation(
                Condition::UniformTerminalBound,
                format!("member n = {n} has |ψ| up to {} above the uniform bound {bound}", terminal.estimate),
            ));
        }
    }
    Ok(())
}

fn solve_all(c: &CoefficientField, set: &CompactTestSet, cfg: &SolverConfig) -> Result<Vec<ValueEstimate>> {
    set.points.par_iter().map(|p| solve(c, p, cfg)).collect()
}

fn sup_gap(a: &[ValueEstimate], b: &[ValueEstimate]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.value - y.value).abs()).fold(0.0, f64::max)
}

/// Solves every member at every test point with one configuration and reports sup gaps to member 0.
pub fn run_stability(
    seq: &CoefficientSequence,
    set: &CompactTestSet,
    cfg: &SolverConfig,
    n_values: &[u32],
) -> Result<StabilityReport> {
    if n_values.contains(&0) {
        return Err(Error::domain("n_values index the perturbed members and must be positive"));
    }
    let mut members = vec![(0, seq.at(0)?)];
    for &n in n_values {
        members.push((n, seq.at(n)?));
    }
    for (_, c) in &members[1..] {
        crate::coefficients::check_same_shape(members[0].1.meta(), c.meta())?;
    }
    validate_members(seq, &members)?;
    log::info!(
        "stability: '{}' with {} members on {} test points",
        seq.label,
        members.len(),
        set.points.len()
    );

    let mut jobs: Vec<(&CoefficientField, SolverConfig)> =
        members.iter().map(|(_, c)| (c, cfg.clone())).collect();
    jobs.push((&members[0].1, cfg.clone().with_steps(2 * cfg.steps)));
    let solved: Vec<Vec<ValueEstimate>> = jobs
        .par_iter()
        .map(|(c, cfg)| solve_all(c, set, cfg))
        .collect::<Result<_>>()?;

    let limit = &solved[0];
    let floor_estimate = sup_gap(limit, &solved[members.len()]);
    let per_n = &solved[1..members.len()];
    let values = |rows: &[ValueEstimate]| rows.iter().map(|v| v.value).collect::<Vec<_>>();
    Ok(StabilityReport {
        sequence: seq.label.clone(),
        n_values: n_values.to_vec(),
        gaps: per_n.iter().map(|rows| sup_gap(rows, limit)).collect(),
        floor_estimate,
        solver: cfg.clone(),
        limit_values: values(limit),
        values: per_n.iter().map(|rows| values(rows)).collect(),
        runtime_ms: per_n.iter().map(|rows| rows.iter().map(|v| v.runtime_ms).sum()).collect(),
    })
}
