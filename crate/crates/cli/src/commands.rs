use std::path::PathBuf;
use std::time::Instant;

use ppde_core::coefficients::{sample_probe_pairs, sample_probes, theta_convexity_gap, validate_growth,
    validate_nonanticipativity, validate_path_lipschitz, validate_terminal_bound, CheckReport};
use ppde_core::lab::{lipschitz_budget, run_lipschitz, run_stability, sample_timed_pairs, CompactTestSet};
use ppde_core::solver::{solve, ValueEstimate};
use ppde_core::Error;
use serde_json::json;

use crate::config::{self, LipschitzConfig, RunSettings, SolveConfig, StabilityConfig, ValidateConfig};
use crate::report::{config_hash, num, RunSummary, RunWriter, TIMING_COLUMN};
use crate::CliError;

/// Seed used when neither the flag nor the config sets one.
pub const DEFAULT_SEED: u64 = 0;

/// Control grid resolution for the convexity surrogate reported by `validate`.
const CONVEXITY_RES: usize = 5;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

struct Prepared<T> {
    cfg: T,
    seed: u64,
    threads: Option<usize>,
    hash: String,
}

fn prepare<T: RunSettings>(opts: &RunOptions, command: &str) -> Result<Prepared<T>, CliError> {
    let mut cfg: T = config::load(&opts.config, command)?;
    let seed = opts.seed.or(cfg.seed()).unwrap_or(DEFAULT_SEED);
    let threads = opts.threads.or(cfg.threads());
    cfg.pin(seed);
    cfg.clear_threads();
    let hash = config_hash(command, &cfg)?;
    log::info!("{command}: config hash {hash}, seed {seed}");
    Ok(Prepared { cfg, seed, threads, hash })
}

/// Runs `f` on a pool of `threads` workers, or on the global pool when unset.
fn in_pool<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Invalid("`threads` must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}

fn ms_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn cmd_solve(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let p: Prepared<SolveConfig> = prepare(opts, "solve")?;
    let cfg = &p.cfg;
    if cfg.query.is_empty() {
        return Err(CliError::Invalid("`query` lists no start points".into()));
    }
    let c = cfg.field()?;
    let estimates: Vec<ValueEstimate> = in_pool(p.threads, || {
        cfg.query.iter().map(|q| solve(&c, q, &cfg.solver)).collect::<Result<_, Error>>()
    })??;

    let mut out = RunWriter::create(&opts.out, "solve", p.hash, p.seed)?;
    let mut rows = Vec::new();
    for (i, (q, est)) in cfg.query.iter().zip(&estimates).enumerate() {
        out.time(format!("solve[{i}]"), est.runtime_ms);
        out.json(
            &format!("value_{i:03}.json"),
            &json!({
                "field": c.meta().label,
                "query_index": i,
                "start": q,
                "value": est.value,
                "stderr": est.stderr,
                "mode": est.mode,
                "nodes": est.nodes,
                "argmax_policy_summary": est.argmax_policy_summary,
            }),
        )?;
        rows.push(vec![i.to_string(), num(q.t()), num(est.value), num(est.stderr)]);
    }
    out.csv("values.csv", &["index", "t", "value", "stderr"], &rows)?;
    out.finish("solve")
}

pub fn cmd_stability(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let p: Prepared<StabilityConfig> = prepare(opts, "stability")?;
    let cfg = &p.cfg;
    let seq = cfg.sequence.build()?;
    let horizon = seq.at(0)?.horizon();
    let set = CompactTestSet::sample(&cfg.test_set, horizon)?;
    let start = Instant::now();
    let report = in_pool(p.threads, || run_stability(&seq, &set, &cfg.solver, &cfg.n_values))??;

    let mut out = RunWriter::create(&opts.out, "stability", p.hash, p.seed)?;
    out.time("stability", ms_since(start));
    for (n, ms) in report.n_values.iter().zip(&report.runtime_ms) {
        out.time(format!("solve[n={n}]"), *ms);
    }
    out.json(
        "stability.json",
        &json!({
            "sequence": report.sequence,
            "n_values": report.n_values,
            "gaps": report.gaps,
            "floor_estimate": report.floor_estimate,
            "solver": report.solver,
            "test_set": cfg.test_set,
        }),
    )?;
    let gaps: Vec<Vec<String>> = report
        .n_values
        .iter()
        .zip(&report.gaps)
        .zip(&report.runtime_ms)
        .map(|((n, g), ms)| vec![n.to_string(), num(*g), num(report.floor_estimate), format!("{ms:.3}")])
        .collect();
    out.csv("gaps.csv", &["n", "gap", "floor", TIMING_COLUMN], &gaps)?;
    let mut values = Vec::new();
    let members = std::iter::once((0, &report.limit_values)).chain(report.n_values.iter().copied().zip(&report.values));
    for (n, row) in members {
        for (i, (point, v)) in set.points.iter().zip(row).enumerate() {
            values.push(vec![i.to_string(), num(point.t()), n.to_string(), num(*v)]);
        }
    }
    out.csv("values.csv", &["point", "t", "n", "value"], &values)?;
    out.finish("stability")
}

pub fn cmd_lipschitz(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let p: Prepared<LipschitzConfig> = prepare(opts, "lipschitz")?;
    let cfg = &p.cfg;
    let c = cfg.field()?;
    let pairs = sample_timed_pairs(c.horizon(), &cfg.pairs)?;
    let budget = cfg.l_budget.unwrap_or_else(|| lipschitz_budget(c.meta()));
    let start = Instant::now();
    let report = in_pool(p.threads, || run_lipschitz(&c, &pairs, &cfg.solver, budget))??;
    if !report.passed {
        log::warn!("max ratio {} exceeds the budget {}", report.max_ratio, report.l_budget);
    }

    let mut out = RunWriter::create(&opts.out, "lipschitz", p.hash, p.seed)?;
    out.time("lipschitz", ms_since(start));
    out.json(
        "lipschitz.json",
        &json!({
            "field": report.field,
            "max_ratio": report.max_ratio,
            "l_budget": report.l_budget,
            "passed": report.passed,
            "pairs": report.pairs.len(),
            "skipped": report.skipped,
            "horizon": report.horizon,
            "solver": report.solver,
        }),
    )?;
    let rows: Vec<Vec<String>> = report
        .pairs
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                num(r.a.t()),
                num(r.b.t()),
                num(r.metric),
                num(r.value_a),
                num(r.value_b),
                r.ratio.map(num).unwrap_or_default(),
            ]
        })
        .collect();
    out.csv("pairs.csv", &["pair", "t_a", "t_b", "metric", "value_a", "value_b", "ratio"], &rows)?;
    out.finish("lipschitz")
}

/// Runs every sampling validator that applies, writes the report, then refuses
/// with the first failed condition.
pub fn cmd_validate(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let p: Prepared<ValidateConfig> = prepare(opts, "validate")?;
    let cfg = &p.cfg;
    let c = cfg.field()?;
    let meta = c.meta().clone();
    let start = Instant::now();
    let (checks, skipped, convexity) = in_pool(p.threads, || {
        let probes = sample_probes(&meta, &cfg.probes);
        let mut checks: Vec<CheckReport> = vec![
            validate_nonanticipativity(&c, &probes, p.seed),
            validate_growth(&c, &probes),
        ];
        let mut skipped = Vec::new();
        if meta.lipschitz_c.is_some() {
            checks.push(validate_path_lipschitz(&c, &sample_probe_pairs(&meta, &cfg.probes)));
        } else {
            skipped.push("path_lipschitz");
        }
        if meta.terminal_bound.is_some() {
            checks.push(validate_terminal_bound(&c, &probes, None));
        } else {
            skipped.push("terminal_bound");
        }
        let convexity = probes
            .iter()
            .take(16)
            .map(|pr| theta_convexity_gap(&c, pr.t, &pr.path, CONVEXITY_RES))
            .try_fold(0.0f64, |m, g| g.map(|g| m.max(g)))
            .ok();
        (checks, skipped, convexity)
    })?;

    let mut out = RunWriter::create(&opts.out, "validate", p.hash, p.seed)?;
    out.time("validate", ms_since(start));
    out.json(
        "validation.json",
        &json!({
            "field": meta,
            "checks": checks,
            "skipped": skipped,
            "convexity_gap": convexity,
        }),
    )?;
    let summary = out.finish("validate")?;
    if let Some(failed) = checks.into_iter().find(|r| !r.passed) {
        failed.into_result()?;
    }
    Ok(summary)
}
