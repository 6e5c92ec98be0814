//! Acceptance suite: analytic counterexamples, closed-form oracles, random
//! bound checks, the end-to-end optimize-and-certify loop, and CLI
//! determinism. One pass/fail line is printed per criterion.

use impdel::approx::{density_sequence, filippov_bound, mollify, shifted_distance, ApproxOptions};
use impdel::auxiliary::{from_auxiliary, integrate_g_frak, to_auxiliary, ImpulsiveControlRef};
use impdel::dynamics::{gronwall_bound, simulate, DriveMeasure, ImpulsiveControl, PiecewiseControl};
use impdel::measure::{default_test_family, weakstar_gap, Atom, Density, VectorMeasure};
use impdel::pmp::{certify, CertifyOptions, Mode};
use impdel::problem::ProblemSpec;
use impdel::scenario::{load_scenario, scenario_from_value};
use impdel::transcribe::{evaluate_cost, optimize, Transcription};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

/// Serializes the timed sections so wall-clock budgets are not contaminated
/// by parallel test execution.
static TIMER_LOCK: Mutex<()> = Mutex::new(());

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn unit_atom_control(horizon: f64, t: f64, q: usize) -> ImpulsiveControl {
    ImpulsiveControl {
        mu: VectorMeasure::from_atoms(1, horizon, vec![Atom { t, w: vec![1.0] }]).unwrap(),
        alpha: PiecewiseControl::constant(horizon, vec![0.0; q]),
    }
}

#[test]
fn criterion_1_control_sensitive_jump_breaks_continuity() {
    let guard = TIMER_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let clock = Instant::now();
    let spec = load_scenario(&fixture("control_sensitive_jump.json")).unwrap();

    // reference: alpha = 0, mu = unit atom at 0 -> jump G(0, 0) * 1 = 0
    let base = unit_atom_control(1.0, 0.0, 1);
    let base_traj = simulate(&spec, &base, &[0.0], 256).unwrap();
    for (i, &t) in base_traj.nodes.iter().enumerate() {
        assert!(base_traj.right[i][0].abs() < 1e-12, "x_bar({t}) != 0");
    }
    let base_diff = base_traj.differential().unwrap();

    let constant_test: Vec<Box<dyn Fn(f64) -> f64>> = vec![Box::new(|_| 1.0)];
    for i in [4usize, 16, 64] {
        // alpha_i = 1 on [0, 1/i], 0 afterwards; in particular alpha_i(0) = 1
        let mut values = vec![vec![0.0]; i];
        values[0] = vec![1.0];
        let control = ImpulsiveControl {
            mu: base.mu.clone(),
            alpha: PiecewiseControl { cells: i, values, atom_values: Vec::new(), horizon: 1.0 },
        };
        let traj = simulate(&spec, &control, &[0.0], 256).unwrap();
        for (k, &t) in traj.nodes.iter().enumerate() {
            if t > 1.0 / i as f64 {
                assert!(
                    (traj.right[k][0] - 1.0).abs() <= 0.01,
                    "x_{i}({t}) = {} != 1",
                    traj.right[k][0]
                );
            }
        }
        // persistent trajectory gap 1.0 +- 0.01
        let gap = (traj.terminal()[0] - base_traj.terminal()[0]).abs();
        assert!((gap - 1.0).abs() <= 0.01);
        // dx_i against dx_bar under the constant test function
        let diff_gap = weakstar_gap(&traj.differential().unwrap(), &base_diff, &constant_test).unwrap();
        assert!(diff_gap >= 0.9, "differential gap {diff_gap} at i = {i}");
    }
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "runtime {elapsed:?}");
    drop(guard);
    println!("[acceptance] criterion 1 (control-sensitive jump counterexample): PASS ({elapsed:?})");
}

#[test]
fn criterion_2_discontinuous_gain_measures_converge_trajectories_do_not() {
    let guard = TIMER_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let clock = Instant::now();
    let spec = load_scenario(&fixture("discontinuous_gain.json")).unwrap();
    let base = unit_atom_control(1.0, 0.0, 0);

    // int G d(mu) = 0 exactly: the only atom sits at 0 where step(0) = 0
    let base_int = base.mu.integrate(1, |t| spec.eval_fast(t, &[]), 0.0, 1.0).unwrap();
    assert_eq!(base_int[0], 0.0);

    let base_traj = simulate(&spec, &base, &[0.0], 256).unwrap();
    assert!(base_traj.terminal()[0].abs() < 1e-12);

    let tests = default_test_family(1.0);
    let mut last_gap = f64::INFINITY;
    for i in [4usize, 16, 64] {
        let mollified = mollify(&base, 1.0 / i as f64).unwrap();
        // int G d(mu_i) = 1 +- 1e-10 for every i
        let int_i = mollified.mu.integrate(1, |t| spec.eval_fast(t, &[]), 0.0, 1.0).unwrap();
        assert!((int_i[0] - 1.0).abs() <= 1e-10, "int G d mu_{i} = {}", int_i[0]);
        // measures converge weak-*
        let gap = weakstar_gap(&mollified.mu, &base.mu, &tests).unwrap();
        assert!(gap < last_gap, "measure gap not decreasing at i = {i}");
        last_gap = gap;
        // trajectories do not converge: endpoint gap stays 1
        let traj = simulate(&spec, &mollified, &[0.0], 256).unwrap();
        let endpoint_gap = (traj.terminal()[0] - base_traj.terminal()[0]).abs();
        assert!((endpoint_gap - 1.0).abs() <= 0.01, "endpoint gap {endpoint_gap} at i = {i}");
    }
    assert!(last_gap <= 0.05, "measure gap at i = 64 is {last_gap}");
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "runtime {elapsed:?}");
    drop(guard);
    println!("[acceptance] criterion 2 (discontinuous-gain counterexample): PASS (final measure gap {last_gap:.4}, {elapsed:?})");
}

#[test]
fn criterion_3_density_of_strict_sense_processes() {
    let guard = TIMER_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let clock = Instant::now();
    let spec = load_scenario(&fixture("continuity_g.json")).unwrap();
    let control = unit_atom_control(1.0, 0.5, 0);
    let widths: Vec<f64> = (2..=8).map(|k| 0.5f64.powi(k)).collect();
    let report = density_sequence(&spec, &control, &[0.0], &widths, 1024, ApproxOptions::default()).unwrap();

    // monotone decrease from k = 3 on
    for w in report.endpoint_errors.windows(2).skip(1) {
        assert!(w[1] <= w[0] + 1e-15, "endpoint errors not monotone: {:?}", report.endpoint_errors);
    }
    let last = *report.endpoint_errors.last().unwrap();
    assert!(last <= 1e-3, "endpoint error at k = 8 is {last}");
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "runtime {elapsed:?}");
    drop(guard);
    println!("[acceptance] criterion 3 (strict-sense density): PASS (final endpoint error {last:.2e}, {elapsed:?})");
}

fn random_constant_matrix_spec(rng: &mut ChaCha8Rng, n: usize, m: usize, identity: bool) -> ProblemSpec {
    let g: Vec<Vec<String>> = (0..n)
        .map(|i| {
            (0..m)
                .map(|j| {
                    if identity {
                        if i == j { "1".to_string() } else { "0".to_string() }
                    } else {
                        format!("{}", rng.gen_range(-1.0f64..1.0))
                    }
                })
                .collect()
        })
        .collect();
    let gens: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>())
        .chain((0..m).map(|j| (0..m).map(|i| if i == j { -1.0 } else { 0.0 }).collect()))
        .collect();
    scenario_from_value(&json!({
        "version": 1, "n": n, "m": m, "q": 0, "T": 1.0,
        "delays": [0.0],
        "f": vec!["0"; n], "G": g,
        "l0": "0", "l1": vec!["0"; m], "Phi": "0",
        "zeta": vec!["0"; n],
        "cone": {"kind": "finitely_generated", "generators": gens},
        "A": {"kind": "box", "lo": [], "hi": []},
        "target": {"kind": "fixed_initial_free_terminal", "x0": vec![0.0; n]},
        "growth": "0"
    }))
    .unwrap()
}

#[test]
fn criterion_4_auxiliary_round_trip_and_integral_identity() {
    let guard = TIMER_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let m = rng.gen_range(1..=3);
        let identity = case % 2 == 0;
        let spec = random_constant_matrix_spec(&mut rng, m, m, identity);
        let n_atoms = rng.gen_range(0..=5);
        let atoms: Vec<Atom> = (0..n_atoms)
            .map(|_| Atom {
                t: rng.gen_range(0.0..1.0),
                w: (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        let cells = rng.gen_range(1..=5);
        let values: Vec<Vec<f64>> = (0..cells)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mu = VectorMeasure::new(m, 1.0, atoms, Density { cells, values }, None).unwrap();
        let alpha = PiecewiseControl::constant(1.0, vec![]);
        let aux = to_auxiliary(&spec, &ImpulsiveControlRef { mu: &mu, alpha: &alpha }).unwrap();
        let back = from_auxiliary(&spec, &aux).unwrap();

        assert_eq!(back.mu.atoms.len(), mu.atoms.len());
        for (a, b) in mu.atoms.iter().zip(&back.mu.atoms) {
            for j in 0..m {
                assert!((a.w[j] - b.w[j]).abs() <= 1e-10, "atom weight mismatch in case {case}");
            }
        }
        for (a, b) in mu.density.values.iter().zip(&back.mu.density.values) {
            for j in 0..m {
                assert!((a[j] - b[j]).abs() <= 1e-10, "cell value mismatch in case {case}");
            }
        }

        let lhs = mu.integrate(m, |t| spec.eval_fast(t, &[]), 0.0, 1.0).unwrap();
        let rhs = integrate_g_frak(&spec, &aux, 0.0, 1.0).unwrap();
        for j in 0..m {
            assert!((lhs[j] - rhs[j]).abs() <= 1e-10, "integral identity fails in case {case}");
        }
    }
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 2.0, "runtime {elapsed:?}");
    drop(guard);
    println!("[acceptance] criterion 4 (auxiliary round trip, 100 random measures): PASS ({elapsed:?})");
}

#[test]
fn criterion_5_delayed_simulator_oracle() {
    let spec = load_scenario(&fixture("delayed_linear.json")).unwrap();
    let zero = ImpulsiveControl::zero(&spec);

    let traj = simulate(&spec, &zero, &[1.0], 512).unwrap();
    assert!((traj.terminal()[0] - 3.5).abs() <= 1e-4, "x(2) = {}", traj.terminal()[0]);

    let with_atom = unit_atom_control(2.0, 1.0, 0);
    let traj_atom = simulate(&spec, &with_atom, &[1.0], 512).unwrap();
    assert!((traj_atom.terminal()[0] - 4.5).abs() <= 1e-4, "x(2) = {}", traj_atom.terminal()[0]);

    // observed order between 256 and 1024 cells; the scheme integrates this
    // piecewise-polynomial solution exactly, so rounding-level errors count
    // as super-convergent
    let e256 = (simulate(&spec, &zero, &[1.0], 256).unwrap().terminal()[0] - 3.5).abs();
    let e1024 = (simulate(&spec, &zero, &[1.0], 1024).unwrap().terminal()[0] - 3.5).abs();
    let order = if e256 < 1e-12 { f64::INFINITY } else { (e256 / e1024.max(1e-300)).log2() / 2.0 };
    assert!(order >= 1.8, "observed order {order} (e256 = {e256:.3e}, e1024 = {e1024:.3e})");
    println!(
        "[acceptance] criterion 5 (delayed simulator oracle): PASS (x(2) errors {:.2e}/{:.2e}, order {order})",
        (traj.terminal()[0] - 3.5).abs(),
        (traj_atom.terminal()[0] - 4.5).abs()
    );
}

#[test]
fn criterion_6_adjoint_oracle_and_gradient_cross_check() {
    let spec = load_scenario(&fixture("delayed_linear.json")).unwrap();
    let zero = ImpulsiveControl::zero(&spec);
    let traj = simulate(&spec, &zero, &[1.0], 512).unwrap();
    let adj = impdel::adjoint::solve_adjoint(&spec, &traj, &zero.alpha, 1.0, &[-1.0]).unwrap();

    // closed form: p = -1 on [1, 2], p(t) = t - 2 on [0, 1]
    let mut sup = 0.0f64;
    for (i, &t) in adj.nodes.iter().enumerate() {
        let expected = if t >= 1.0 { -1.0 } else { t - 2.0 };
        sup = sup.max((adj.p[i][0] - expected).abs());
    }
    assert!(sup <= 1e-4, "adjoint sup error {sup}");

    // zero tail of p_1 on [(T - h_1) v 0, T] = [1, 2], exact
    for (i, &t) in adj.nodes.iter().enumerate() {
        if t >= 1.0 {
            assert_eq!(adj.arcs[1][i][0], 0.0);
        }
    }

    // analytic vs finite-difference gradients on 100 probes
    let mut no_grad = spec.clone();
    no_grad.gradients = None;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let t = rng.gen_range(0.0..2.0);
        let s0 = [rng.gen_range(-2.0f64..2.0)];
        let s1 = [rng.gen_range(-2.0f64..2.0)];
        let states: [&[f64]; 2] = [&s0, &s1];
        for k in 0..2 {
            let a = spec.grad_drift(k, t, &states, &[]).unwrap()[0][0];
            let b = no_grad.grad_drift(k, t, &states, &[]).unwrap()[0][0];
            assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "gradient mismatch {a} vs {b}");
        }
    }
    println!("[acceptance] criterion 6 (adjoint oracle): PASS (sup error {sup:.2e}, zero tail exact)");
}

#[test]
fn criterion_7_end_to_end_optimize_and_certify() {
    let guard = TIMER_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let clock = Instant::now();
    let spec = load_scenario(&fixture("atom_placement.json")).unwrap();

    // independent 2-variable lattice oracle over (atom time, mass)
    let mut oracle_best = f64::INFINITY;
    let mut oracle_arg = (0.0, 0.0);
    for site in 0..=64usize {
        let t = site as f64 / 64.0;
        for mass_step in 0..=200usize {
            let mass = mass_step as f64 * 0.01;
            let control = if mass == 0.0 {
                ImpulsiveControl::zero(&spec)
            } else {
                ImpulsiveControl {
                    mu: VectorMeasure::from_atoms(1, 1.0, vec![Atom { t, w: vec![mass] }]).unwrap(),
                    alpha: PiecewiseControl::constant(1.0, vec![]),
                }
            };
            let cost = evaluate_cost(&spec, &control, &[0.0], 64).unwrap();
            if cost < oracle_best {
                oracle_best = cost;
                oracle_arg = (t, mass);
            }
        }
    }
    assert!(oracle_best.abs() < 1e-12, "oracle optimum should be 0, got {oracle_best}");
    assert_eq!(oracle_arg, (0.5, 1.0));

    let trans = Transcription::new(&spec, 64).unwrap();
    let outcome = optimize(&spec, &trans, 7).unwrap();
    assert!(outcome.cost <= oracle_best + 1e-3, "optimizer cost {}", outcome.cost);

    // mass concentrates within one grid cell of t = 0.5
    let tv = outcome.control.mu.total_variation();
    let cell = 1.0 / 64.0;
    let near = tv.cumulative(0.5 + cell).unwrap()[0] - tv.cumulative_left(0.5 - cell).unwrap()[0];
    assert!((near - 1.0).abs() <= 0.05, "mass within one cell of 0.5 is {near}");

    let opts = CertifyOptions { tolerance: 1e-3, ..CertifyOptions::default() };
    let (cert, _, _) =
        certify(&spec, &outcome.control, &outcome.xi, 64, Some(1.0), Mode::Optimality, &opts).unwrap();
    assert!(cert.adjoint_ode.pass, "adjoint residual {}", cert.adjoint_ode.residual);
    assert!(cert.transversality.pass, "transversality residual {}", cert.transversality.residual);
    assert!(cert.drift_maximality.pass, "maximality residual {}", cert.drift_maximality.residual);
    assert!(cert.cone_everywhere.pass, "cone-everywhere residual {}", cert.cone_everywhere.residual);
    assert!(cert.cone_complementarity.pass, "complementarity residual {}", cert.cone_complementarity.residual);
    assert!(cert.all_pass);

    // perturbed candidate: unit atom at t = 0.3 fails complementarity with
    // residual (0.3 - 0.5)^2 = 0.04
    let perturbed = unit_atom_control(1.0, 0.3, 0);
    let (bad, _, _) = certify(&spec, &perturbed, &[0.0], 64, Some(1.0), Mode::Optimality, &opts).unwrap();
    assert!(!bad.cone_complementarity.pass);
    assert!((bad.cone_complementarity.residual - 0.04).abs() <= 1e-3);

    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "runtime {elapsed:?}");
    drop(guard);
    println!(
        "[acceptance] criterion 7 (end-to-end maximum principle): PASS (cost {:.2e}, mass near 0.5 = {near:.6}, {elapsed:?})",
        outcome.cost
    );
}

fn random_linear_scenario(rng: &mut ChaCha8Rng) -> (ProblemSpec, ImpulsiveControl, Vec<f64>) {
    let n = rng.gen_range(1..=2usize);
    let delayed = rng.gen_bool(0.5);
    let delays = if delayed { vec![0.0, 0.5] } else { vec![0.0] };
    let slots = delays.len();

    // linear drift with an exact sublinear-growth and Lipschitz coefficient
    let mut coeff_sum = 0.0;
    let mut f_exprs = Vec::with_capacity(n);
    for _ in 0..n {
        let mut terms = Vec::new();
        for k in 0..slots {
            for j in 0..n {
                let c: f64 = rng.gen_range(-0.7..0.7);
                coeff_sum += c.abs();
                terms.push(format!("{c}*x{k}[{j}]"));
            }
        }
        f_exprs.push(terms.join(" + "));
    }
    let zeta: Vec<String> = (0..n)
        .map(|_| format!("{} - {}*t", rng.gen_range(-0.5f64..0.5), rng.gen_range(-0.3f64..0.3)))
        .collect();
    let g: Vec<Vec<String>> = (0..n).map(|_| vec![format!("{}", rng.gen_range(-1.0f64..1.0))]).collect();
    let gens = vec![vec![1.0], vec![-1.0]];
    let spec = scenario_from_value(&json!({
        "version": 1, "n": n, "m": 1, "q": 0, "T": 1.0,
        "delays": delays,
        "f": f_exprs, "G": g,
        "l0": "0", "l1": ["0"], "Phi": "0",
        "zeta": zeta,
        "cone": {"kind": "finitely_generated", "generators": gens},
        "A": {"kind": "box", "lo": [], "hi": []},
        "target": {"kind": "fixed_initial_free_terminal", "x0": vec![0.0; n]},
        "growth": format!("{coeff_sum}"),
        "lipschitz": format!("{coeff_sum}")
    }))
    .unwrap();

    // grid-aligned atoms plus a constant density
    let n_atoms = rng.gen_range(0..=2);
    let atoms: Vec<Atom> = (0..n_atoms)
        .map(|_| Atom {
            t: rng.gen_range(1..128) as f64 / 128.0,
            w: vec![rng.gen_range(-1.0f64..1.0)],
        })
        .collect();
    let mu = VectorMeasure::new(
        1,
        1.0,
        atoms,
        Density { cells: 1, values: vec![vec![rng.gen_range(-0.5f64..0.5)]] },
        None,
    )
    .unwrap();
    let control = ImpulsiveControl { mu, alpha: PiecewiseControl::constant(1.0, vec![]) };
    let xi: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
    (spec, control, xi)
}

#[test]
fn criterion_8_gronwall_and_filippov_bounds_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut gronwall_slack = f64::INFINITY;
    let mut filippov_slack = f64::INFINITY;
    for case in 0..50 {
        let (spec, control, xi) = random_linear_scenario(&mut rng);
        let traj = simulate(&spec, &control, &xi, 128).unwrap();

        // a-priori estimate on the shifted trajectory
        let bound = gronwall_bound(&spec, &control, &xi).unwrap();
        let drive = DriveMeasure::from_impulsive(&spec, &control).unwrap();
        let cums = drive.cumulative_at(&traj.nodes);
        let mut sup = 0.0f64;
        for (i, (_, right)) in cums.iter().enumerate() {
            let d: f64 = traj.right[i]
                .iter()
                .zip(right)
                .map(|(&x, &y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            sup = sup.max(d);
        }
        assert!(sup <= bound.bound + 1e-9, "case {case}: shifted sup {sup} > bound {}", bound.bound);
        gronwall_slack = gronwall_slack.min(bound.bound - sup);

        // Filippov estimate for a perturbed input: shifted initial state and
        // one extra grid-aligned atom
        let mut perturbed = control.clone();
        let extra = Atom { t: rng.gen_range(1..128) as f64 / 128.0, w: vec![rng.gen_range(-0.2f64..0.2)] };
        let mut atoms = perturbed.mu.atoms.clone();
        atoms.push(extra);
        perturbed.mu = VectorMeasure::new(1, 1.0, atoms, perturbed.mu.density.clone(), None).unwrap();
        let xi_pert: Vec<f64> = xi.iter().map(|&v| v + rng.gen_range(-0.1..0.1)).collect();

        let fb = filippov_bound(&spec, &control, &traj, &perturbed, &xi_pert).unwrap();
        let pert_traj = simulate(&spec, &perturbed, &xi_pert, 128).unwrap();
        let observed = shifted_distance(&spec, &control, &traj, &perturbed, &pert_traj).unwrap();
        assert!(
            observed <= fb.bound + 1e-9,
            "case {case}: observed {observed} > Filippov bound {}",
            fb.bound
        );
        filippov_slack = filippov_slack.min(fb.bound - observed);
    }
    println!(
        "[acceptance] criterion 8 (Gronwall and Filippov bounds, 50 scenarios): PASS (min slacks {gronwall_slack:.3e}, {filippov_slack:.3e})"
    );
}

// ---------------------------------------------------------------------------
// criterion 9: CLI determinism

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_impdel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().to_string(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn criterion_9_cli_determinism() {
    let scenario = fixture("atom_placement.json");
    let scenario26 = fixture("discontinuous_gain.json");
    let process = fixture("atom_at_half.json");
    let base = std::env::temp_dir().join(format!("impdel-acc-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);

    let commands: Vec<(&str, Vec<String>)> = vec![
        ("validate", vec!["validate".into(), "--scenario".into(), scenario.display().to_string()]),
        (
            "simulate",
            vec![
                "simulate".into(),
                "--scenario".into(),
                scenario.display().to_string(),
                "--process".into(),
                process.display().to_string(),
                "--grid".into(),
                "128".into(),
                "--history".into(),
            ],
        ),
        (
            "to-aux",
            vec![
                "to-aux".into(),
                "--scenario".into(),
                scenario.display().to_string(),
                "--process".into(),
                process.display().to_string(),
            ],
        ),
        (
            "approx",
            vec![
                "approx".into(),
                "--scenario".into(),
                scenario26.display().to_string(),
                "--process".into(),
                process.display().to_string(),
                "--widths".into(),
                "0.25,0.125,0.0625".into(),
                "--grid".into(),
                "128".into(),
            ],
        ),
        (
            "check-pmp",
            vec![
                "check-pmp".into(),
                "--scenario".into(),
                scenario.display().to_string(),
                "--process".into(),
                process.display().to_string(),
                "--lambda".into(),
                "1".into(),
                "--grid".into(),
                "128".into(),
            ],
        ),
        (
            "optimize",
            vec![
                "optimize".into(),
                "--scenario".into(),
                scenario.display().to_string(),
                "--cells".into(),
                "16".into(),
                "--seed".into(),
                "7".into(),
                "--starts".into(),
                "2".into(),
                "--certify".into(),
            ],
        ),
        (
            "probe",
            vec![
                "probe".into(),
                "--scenario".into(),
                scenario.display().to_string(),
                "--samples".into(),
                "128".into(),
            ],
        ),
    ];

    for (name, args) in &commands {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out_dir = base.join(format!("{name}-{run}"));
            std::fs::create_dir_all(&out_dir).unwrap();
            let mut full: Vec<String> = args.clone();
            full.push("--out".into());
            full.push(out_dir.display().to_string());
            let refs: Vec<&str> = full.iter().map(|s| s.as_str()).collect();
            let out = run_cli(&refs);
            assert!(
                out.status.success(),
                "{name} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            );
            outputs.push(dir_contents(&out_dir));
        }
        assert_eq!(outputs[0].len(), outputs[1].len(), "{name}: file sets differ");
        for (a, b) in outputs[0].iter().zip(&outputs[1]) {
            assert_eq!(a.0, b.0, "{name}: file names differ");
            assert_eq!(a.1, b.1, "{name}: file {} is not bit-identical", a.0);
        }
    }

    // from-aux consumes the to-aux output and must be deterministic too
    let aux_path = base.join("to-aux-0").join("aux.json");
    for run in 0..2 {
        let out_dir = base.join(format!("from-aux-{run}"));
        std::fs::create_dir_all(&out_dir).unwrap();
        let out = run_cli(&[
            "from-aux",
            "--scenario",
            &scenario.display().to_string(),
            "--aux",
            &aux_path.display().to_string(),
            "--out",
            &out_dir.display().to_string(),
        ]);
        assert!(out.status.success(), "from-aux failed: {}", String::from_utf8_lossy(&out.stderr));
    }
    let a = dir_contents(&base.join("from-aux-0"));
    let b = dir_contents(&base.join("from-aux-1"));
    assert_eq!(a, b, "from-aux outputs differ");

    let _ = std::fs::remove_dir_all(&base);
    println!("[acceptance] criterion 9 (CLI determinism): PASS (8 commands, bit-identical outputs)");
}
