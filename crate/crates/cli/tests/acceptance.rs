//! One test per acceptance criterion. Each prints a single `PASS` or `FAIL`
//! line with the measured numbers, then asserts.
//!
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ppde_cli::{cmd_stability, numeric_digest, RunOptions};
use ppde_core::coefficients::{
    builtin, BoundFn, CoefficientField, FieldMeta, Perturbation, RandomGParams, SequenceParams, TerminalSpec,
};
use ppde_core::hamiltonian::{
    builtin_test_functions, bump_oracle, evaluate_g, ppde_residual, CylindricalTestFunction, Quadratic,
};
use ppde_core::lab::{
    fd_oracle_markovian, lipschitz_budget, run_lipschitz, run_stability, sample_timed_pairs, CompactTestSet, FdGrid,
    PairSpec, TestSetSpec,
};
use ppde_core::path::{metric_d, metric_dstar, SampledPath, TimedPath};
use ppde_core::solver::{solve, solve_exhaustive, solve_tree, Mode, SolverConfig};

const T: f64 = 1.0;

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn start(x: f64) -> TimedPath {
    TimedPath::new(0.0, SampledPath::scalar(vec![0.0], vec![x]).unwrap()).unwrap()
}

/// Piecewise-linear scalar path on `[0, horizon]` with 2 to 8 knots in `[-2, 2]`.
fn random_path(rng: &mut ChaCha8Rng, horizon: f64) -> SampledPath {
    let k = rng.random_range(1..8);
    let steps: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = steps.iter().sum();
    let mut grid = vec![0.0];
    let mut acc = 0.0;
    for s in &steps {
        acc += s;
        grid.push(horizon * acc / total);
    }
    *grid.last_mut().unwrap() = horizon;
    let values = (0..=k).map(|_| rng.random_range(-2.0..2.0)).collect();
    SampledPath::scalar(grid, values).unwrap()
}

fn random_timed(rng: &mut ChaCha8Rng) -> TimedPath {
    let path = random_path(rng, T);
    TimedPath::new(rng.random_range(0.0..=T), path).unwrap()
}

/// Three controls on one action axis, nonlinear in the control and in the state.
fn three_control_field(k: [f64; 4], psi: usize) -> CoefficientField {
    CoefficientField::scalar(
        FieldMeta::scalar("three", 1, T),
        move |f, t, w| k[0] * (3.0 * f.get(0)).sin() + k[1] * w.eval_scalar(t).cos(),
        move |f, _, w| 0.5 + f.get(0) * f.get(0) + k[2] * w.running_max(T).tanh().abs(),
        move |w| match psi {
            0 => w.eval_scalar(T).sin(),
            1 => w.running_max(T) - k[3] * w.eval_scalar(T).powi(2),
            _ => (w.eval_scalar(0.5) - w.eval_scalar(T)).abs(),
        },
    )
}

fn cosine_drift_sequence() -> SequenceParams {
    let cos = BoundFn::StateCos { offset: 0.0, amp: 1.0 };
    let mut base = RandomGParams::constant((-0.5, 0.5), (1.0, 2.0), TerminalSpec::Square { cap: Some(100.0) }, T);
    base.bound_c = 2.0;
    SequenceParams {
        base,
        perturb: Perturbation {
            b_lo: Some(cos.clone()),
            b_hi: Some(cos),
            ..Default::default()
        },
        shared_growth_c: None,
        shared_terminal_bound: None,
    }
}

#[test]
fn c1_tree_equals_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clock = Instant::now();
    let mut worst = 0.0f64;
    let instances = 60;
    for _ in 0..instances {
        let k = [(); 4].map(|_| rng.random_range(-1.0..1.0));
        let c = three_control_field(k, rng.random_range(0..3));
        let cfg = SolverConfig::new(Mode::Tree, rng.random_range(1..=3)).with_res(3);
        let x = rng.random_range(-1.0..1.0);
        let tree = solve_tree(&c, &start(x), &cfg).unwrap().value;
        let brute = solve_exhaustive(&c, &start(x), &cfg.clone().with_mode(Mode::Exhaustive)).unwrap().value;
        worst = worst.max((tree - brute).abs());
    }
    let secs = clock.elapsed().as_secs_f64();
    verdict(
        1,
        "tree equals exhaustive enumeration",
        worst <= 1e-12 && secs < 10.0,
        format!("{instances} instances, max |diff| = {worst:.3e} (tol 1e-12), {secs:.2} s (limit 10 s)"),
    );
}

#[test]
fn c2_lattice_closed_forms() {
    let cases = [
        ("max drift", RandomGParams::constant((-1.0, 2.0), (1.0, 1.0), TerminalSpec::Linear { scale: 1.0 }, T), 2.0),
        ("max variance", RandomGParams::constant((0.0, 0.0), (1.0, 3.0), TerminalSpec::Square { cap: None }, T), 3.0),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, params, expected) in cases {
        let c = params.build().unwrap();
        let clock = Instant::now();
        let v = solve(&c, &start(0.0), &SolverConfig::new(Mode::Markovian, 50)).unwrap().value;
        let secs = clock.elapsed().as_secs_f64();
        let ok = (v - expected).abs() <= 1e-12 && secs < 1.0;
        pass &= ok;
        detail.push(format!("{name} {v:.15} vs {expected} in {secs:.3} s"));
    }
    verdict(2, "lattice closed forms", pass, detail.join("; ") + " (tol 1e-12, limit 1 s each)");
}

#[test]
fn c3_lattice_agrees_with_finite_differences() {
    let reference = 1.1284;
    let c = RandomGParams::constant((0.0, 0.0), (1.0, 2.0), TerminalSpec::Abs, T).build().unwrap();
    let clock = Instant::now();
    let lattice = solve(&c, &start(0.0), &SolverConfig::new(Mode::Markovian, 200)).unwrap().value;
    let fd = fd_oracle_markovian(&c, f64::abs, &FdGrid::default()).unwrap().initial_at(0.0);
    let secs = clock.elapsed().as_secs_f64();
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let pass = rel(lattice, fd) <= 0.005 && rel(lattice, reference) <= 0.01 && rel(fd, reference) <= 0.01 && secs < 30.0;
    verdict(
        3,
        "lattice and finite differences agree",
        pass,
        format!(
            "lattice {lattice:.6}, fd {fd:.6}, mutual {:.2e} (tol 5e-3), vs {reference}: {:.2e} / {:.2e} (tol 1e-2), {secs:.2} s",
            rel(lattice, fd),
            rel(lattice, reference),
            rel(fd, reference)
        ),
    );
}

#[test]
fn c4_stability_gaps() {
    let n_values = [1, 2, 4, 8, 16, 32, 64];
    let set = CompactTestSet::sample(&TestSetSpec::default(), T).unwrap();
    let cfg = SolverConfig::new(Mode::Markovian, 10);
    let clock = Instant::now();

    let mut base = RandomGParams::constant((0.0, 0.0), (1.0, 2.0), TerminalSpec::Square { cap: Some(100.0) }, T);
    base.bound_c = 3.0;
    let volatility = SequenceParams {
        base,
        perturb: Perturbation {
            a_hi: Some(BoundFn::constant(1.0)),
            ..Default::default()
        },
        shared_growth_c: None,
        shared_terminal_bound: None,
    };
    let vol = run_stability(&volatility.build(), &set, &cfg, &n_values).unwrap();
    let vol_err = n_values
        .iter()
        .zip(&vol.gaps)
        .map(|(&n, g)| (g - (T - set.t_min()) / n as f64).abs())
        .fold(0.0, f64::max);

    let cos = run_stability(&cosine_drift_sequence().build(), &set, &cfg, &n_values).unwrap();
    let g = &cos.gaps;
    let floor = cos.floor_estimate;
    let decreasing = g.windows(2).all(|w| w[0] <= floor || w[1] < w[0]);
    let tail = g[6] <= floor + g[0] / 32.0;
    let secs = clock.elapsed().as_secs_f64();

    verdict(
        4,
        "stability gaps",
        vol_err <= 1e-10 && decreasing && tail && secs < 300.0,
        format!(
            "volatility gaps vs T/n: max err {vol_err:.2e} (tol 1e-10); cosine drift gaps {:?}, floor {floor:.4e}, \
             decreasing to floor {decreasing}, gap(64) {:.4e} <= {:.4e} {tail}; {secs:.1} s",
            g.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>(),
            g[6],
            floor + g[0] / 32.0
        ),
    );
}

#[test]
fn c5_lipschitz_suite() {
    let pairs = sample_timed_pairs(T, &PairSpec::default()).unwrap();
    let clock = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, mode, steps) in [
        ("constant", Mode::Markovian, 20),
        ("state_affine", Mode::Markovian, 20),
        ("running_max", Mode::Tree, 3),
        ("delayed", Mode::Tree, 3),
    ] {
        let c = builtin(name, T).unwrap();
        let budget = lipschitz_budget(c.meta());
        let coarse = run_lipschitz(&c, &pairs, &SolverConfig::new(mode, steps), budget).unwrap();
        let fine = run_lipschitz(&c, &pairs, &SolverConfig::new(mode, 2 * steps), budget).unwrap();
        let change = (fine.max_ratio - coarse.max_ratio).abs() / coarse.max_ratio;
        let ok = coarse.passed && fine.passed && coarse.max_ratio.is_finite() && change <= 0.10;
        pass &= ok;
        detail.push(format!(
            "{name} {:.4}/{:.4} <= {budget:.2}, change {:.1}%",
            coarse.max_ratio,
            fine.max_ratio,
            100.0 * change
        ));
    }
    let secs = clock.elapsed().as_secs_f64();
    verdict(
        5,
        "Lipschitz ratios within budget and stable",
        pass && secs < 300.0,
        format!("{} pairs; {}; {secs:.1} s", pairs.len(), detail.join("; ")),
    );
}

#[test]
fn c6_hamiltonian_and_calculus() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bang_worst = 0.0f64;
    for _ in 0..1000 {
        let (o, s, width) = (rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(0.0..1.5));
        let (a_off, a_amp, a_width) = (rng.random_range(0.6..2.0), rng.random_range(0.0..0.4), rng.random_range(0.0..1.5));
        let p = RandomGParams {
            b_lo: BoundFn::StateAffine { offset: o, slope: s },
            b_hi: BoundFn::StateAffine { offset: o + width, slope: s },
            a_lo: BoundFn::StateCos { offset: a_off, amp: a_amp },
            a_hi: BoundFn::StateCos { offset: a_off + a_width, amp: a_amp },
            bound_c: 10.0,
            terminal: TerminalSpec::Sin,
            horizon: T,
            growth_c: None,
            label: None,
        };
        let c = p.build().unwrap();
        let at = random_timed(&mut rng);
        let (t, w) = (at.t(), at.path());
        let (g, h) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
        let expected =
            (g * p.b_lo.eval(t, w)).max(g * p.b_hi.eval(t, w)) + 0.5 * (h * p.a_lo.eval(t, w)).max(h * p.a_hi.eval(t, w));
        let res = rng.random_range(2..6);
        let value = evaluate_g(&c, &at, &DVector::from_element(1, g), &DMatrix::from_element(1, 1, h), res)
            .unwrap()
            .value;
        bang_worst = bang_worst.max((value - expected).abs() / expected.abs().max(1.0));
    }

    let functions = builtin_test_functions(T);
    let mut deriv_worst = 0.0f64;
    for i in 0..1000 {
        let at = random_timed(&mut rng);
        let phi = &functions[i % functions.len()].1;
        let oracle = bump_oracle(phi, &at).unwrap();
        let pairs = [
            (phi.horizontal_derivative(&at).unwrap(), oracle.horizontal),
            (phi.vertical_gradient(&at).unwrap()[0], oracle.gradient[0]),
            (phi.vertical_hessian(&at).unwrap()[(0, 0)], oracle.hessian[(0, 0)]),
        ];
        for (declared, bumped) in pairs {
            deriv_worst = deriv_worst.max((declared - bumped).abs() / declared.abs().max(bumped.abs()).max(1.0));
        }
    }

    let a_bar = 3.0;
    let c = RandomGParams::constant((0.0, 0.0), (1.0, a_bar), TerminalSpec::Sin, T).build().unwrap();
    let exact = CylindricalTestFunction::new(
        vec![T],
        1,
        Quadratic::new(a_bar * T, -a_bar, vec![0.0], DMatrix::from_element(1, 1, 2.0)).unwrap(),
        (1.0 + a_bar, 2),
    )
    .unwrap();
    let mut residual_worst = 0.0f64;
    for _ in 0..200 {
        let t = rng.random_range(0.0..T);
        let x = rng.random_range(-3.0..3.0);
        let at = TimedPath::new(t, SampledPath::constant(&[x], t).unwrap()).unwrap();
        residual_worst = residual_worst.max(ppde_residual(&c, &exact, &at, 2).unwrap().abs());
    }

    let pass = bang_worst <= 1e-12 && deriv_worst <= 1e-6 && residual_worst <= 1e-10;
    verdict(
        6,
        "Hamiltonian and functional calculus",
        pass,
        format!(
            "bang-bang max err {bang_worst:.2e} (tol 1e-12, 1000 draws); derivatives max rel err {deriv_worst:.2e} \
             (tol 1e-6, 1000 probes); quadratic residual {residual_worst:.2e} (tol 1e-10)"
        ),
    );
}

#[test]
fn c7_path_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let triples = 10_000;
    let (mut asym, mut tri_d, mut tri_dstar, mut identity) = (0usize, 0usize, 0usize, 0usize);
    let mut worst_d = 0.0f64;
    for _ in 0..triples {
        let [a, b, c] = [(); 3].map(|_| random_timed(&mut rng));
        for metric in [metric_d, metric_dstar] {
            for (x, y) in [(&a, &b), (&b, &c), (&a, &c)] {
                if metric(x, y, T).unwrap() != metric(y, x, T).unwrap() {
                    asym += 1;
                }
            }
        }
        let d = |x, y| metric_d(x, y, T).unwrap();
        let excess = d(&a, &c) - d(&a, &b) - d(&b, &c);
        if excess > 1e-12 {
            tri_d += 1;
            worst_d = worst_d.max(excess);
        }
        let ds = |x, y| metric_dstar(x, y, T).unwrap();
        if ds(&a, &c) > ds(&a, &b) + ds(&b, &c) + 1e-12 {
            tri_dstar += 1;
        }

        let (w, next) = (a.path(), random_path(&mut rng, 0.5));
        let t = a.t();
        let joined = w.concat(t, &next).unwrap();
        let knots = w.grid();
        let (s, u) = (knots[rng.random_range(0..knots.len())], knots[rng.random_range(0..knots.len())]);
        let ok = joined.stop(t).unwrap().same_function(&w.stop(t).unwrap(), 0.0)
            && w.stop(t).unwrap().concat(t, &next).unwrap().same_function(&joined, 0.0)
            && w.stop(s).unwrap().stop(u).unwrap().same_function(&w.stop(s.min(u)).unwrap(), 0.0);
        if !ok {
            identity += 1;
        }
    }

    // Smallest witness for the d triangle inequality: a weight that grows with the sup norms.
    let constant = |x: f64| SampledPath::constant(&[x], T).unwrap();
    let p = TimedPath::new(0.0, constant(0.0)).unwrap();
    let q = TimedPath::new(1.0, constant(0.0)).unwrap();
    let r = TimedPath::new(1.0, constant(5.0)).unwrap();
    let d = |x, y| metric_d(x, y, T).unwrap();
    let witness = (d(&p, &r), d(&p, &q) + d(&q, &r));

    verdict(
        7,
        "path algebra",
        asym == 0 && tri_d == 0 && tri_dstar == 0 && identity == 0,
        format!(
            "{triples} triples: asymmetric {asym}, d triangle violations {tri_d} (max excess {worst_d:.3e}), \
             d* triangle violations {tri_dstar}, concat/stop identity failures {identity}; \
             witness d(p,r) = {} > d(p,q) + d(q,r) = {}",
            witness.0, witness.1
        ),
    );
}

#[test]
fn c8_stability_runs_are_deterministic() {
    let tmp = tempfile::TempDir::new().unwrap();
    let config = tmp.path().join("stability.json");
    let body = serde_json::json!({
        "experiment": "stability",
        "sequence": {"family": "random_g", "params": cosine_drift_sequence()},
        "solver": {"mode": "markovian", "steps": 10},
        "n_values": [1, 2, 4, 8],
        "test_set": {"count": 12, "radius": 1.0, "seed": 11, "max_time": 0.5, "knots": 6}
    });
    std::fs::write(&config, body.to_string()).unwrap();
    let mut digests = Vec::new();
    for (i, threads) in [1, 1, 4, 4].into_iter().enumerate() {
        let opts = RunOptions {
            config: config.clone(),
            out: tmp.path().join(format!("run{i}")),
            seed: Some(17),
            threads: Some(threads),
        };
        digests.push(numeric_digest(&cmd_stability(&opts).unwrap().dir).unwrap());
    }
    let same = digests.iter().all(|d| d == &digests[0]);
    verdict(
        8,
        "deterministic stability runs",
        same,
        format!("digests at 1,1,4,4 threads: {:?}", digests.iter().map(|d| &d[..12]).collect::<Vec<_>>()),
    );
}
