mod common;

use ppde_core::coefficients::{
    builtin, compact_convergence_gap, sample_probes, BoundFn, Perturbation, ProbeSpec, RandomGParams, SequenceParams,
    TerminalSpec,
};
use ppde_core::hamiltonian::close;
use ppde_core::lab::{
    fd_oracle_markovian, lipschitz_budget, run_lipschitz, run_stability, sample_timed_pairs, CompactTestSet, FdGrid,
    PairSpec, TestSetSpec,
};
use ppde_core::path::SampledPath;
use ppde_core::solver::{solve, Mode, SolverConfig};

const N_VALUES: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];

fn sequence(perturb: Perturbation) -> SequenceParams {
    let mut base = RandomGParams::constant((-0.5, 0.5), (1.0, 2.0), TerminalSpec::Square { cap: Some(100.0) }, 1.0);
    base.bound_c = 3.0;
    SequenceParams {
        base,
        perturb,
        shared_growth_c: None,
        shared_terminal_bound: None,
    }
}

fn volatility() -> SequenceParams {
    sequence(Perturbation {
        a_hi: Some(BoundFn::constant(1.0)),
        ..Default::default()
    })
}

fn cosine_drift() -> SequenceParams {
    let cos = BoundFn::StateCos { offset: 0.0, amp: 1.0 };
    sequence(Perturbation {
        b_lo: Some(cos.clone()),
        b_hi: Some(cos),
        ..Default::default()
    })
}

#[test]
fn stability_gaps_shrink_to_the_floor() {
    let set = CompactTestSet::sample(&TestSetSpec::default(), 1.0).unwrap();
    let cfg = SolverConfig::new(Mode::Markovian, 10);
    for (name, seq, analytic) in [("volatility", volatility(), Some(1.0)), ("cosine drift", cosine_drift(), None)] {
        let report = run_stability(&seq.build(), &set, &cfg, &N_VALUES).unwrap();
        let g = &report.gaps;
        let first = analytic.unwrap_or(g[0]);
        assert!(g[4] < g[0], "{name}: {g:?}");
        assert!(g[6] <= report.floor_estimate + first / 64.0 + 1e-10, "{name}: {g:?} floor {}", report.floor_estimate);
    }
}

#[test]
fn gap_ordering_survives_doubling_the_steps() {
    let set = CompactTestSet::sample(&TestSetSpec::default(), 1.0).unwrap();
    let seq = cosine_drift().build();
    for steps in [10, 20] {
        let report = run_stability(&seq, &set, &SolverConfig::new(Mode::Markovian, steps), &N_VALUES).unwrap();
        for w in report.gaps.windows(2) {
            assert!(w[1] < w[0] || w[0] <= report.floor_estimate, "N = {steps}: {:?}", report.gaps);
        }
    }
}

#[test]
fn coefficient_gaps_follow_the_perturbation() {
    let seq = sequence(Perturbation {
        b_hi: Some(BoundFn::constant(1.0)),
        ..Default::default()
    })
    .build();
    let probes = sample_probes(seq.at(0).unwrap().meta(), &ProbeSpec::default());
    let mut last = f64::INFINITY;
    for n in [1, 4, 16] {
        let gap = compact_convergence_gap(&seq, n, &probes).unwrap();
        assert!(gap.b <= 1.0 / n as f64 + 1e-12 && gap.b > 0.0, "{gap:?}");
        assert_eq!((gap.sigma, gap.psi), (0.0, 0.0));
        assert!(gap.b < last);
        last = gap.b;
    }
}

#[test]
fn lattice_and_finite_differences_agree_on_the_markovian_library() {
    for name in ["constant", "state_affine", "heat"] {
        let c = builtin(name, 1.0).unwrap();
        let horizon = c.horizon();
        let psi_field = c.clone();
        let psi = move |x: f64| psi_field.terminal(&SampledPath::constant(&[x], horizon).unwrap());
        let fd = fd_oracle_markovian(&c, psi, &FdGrid::default()).unwrap();
        for x in [-0.5, 0.0, 0.7] {
            let lattice = solve(&c, &common::start(x), &SolverConfig::new(Mode::Markovian, 200)).unwrap().value;
            let reference = fd.initial_at(x);
            assert!(close(lattice, reference, 0.01), "{name} at {x}: lattice {lattice} vs fd {reference}");
        }
    }
}

#[test]
fn lipschitz_ratios_stay_within_budget() {
    let pairs = sample_timed_pairs(1.0, &PairSpec { count: 30, ..Default::default() }).unwrap();
    for (name, cfg) in [
        ("constant", SolverConfig::new(Mode::Markovian, 20)),
        ("running_max", SolverConfig::new(Mode::Tree, 3)),
        ("delayed", SolverConfig::new(Mode::Tree, 3)),
    ] {
        let c = builtin(name, 1.0).unwrap();
        let budget = lipschitz_budget(c.meta());
        let report = run_lipschitz(&c, &pairs, &cfg, budget).unwrap();
        assert!(report.passed && report.max_ratio > 0.0, "{name}: {} vs {budget}", report.max_ratio);
    }
}
