//! Property tests for the measure algebra and the graph-completion
//! correspondence on randomly generated measures.

use impdel::auxiliary::{from_auxiliary, to_auxiliary, ImpulsiveControlRef};
use impdel::dynamics::PiecewiseControl;
use impdel::measure::{default_test_family, weakstar_gap, Atom, Density, VectorMeasure};
use impdel::problem::ProblemSpec;
use impdel::scenario::scenario_from_value;
use proptest::prelude::*;

fn arb_measure(m: usize) -> impl Strategy<Value = VectorMeasure> {
    let atoms = proptest::collection::vec(
        (0.0f64..1.0, proptest::collection::vec(-2.0f64..2.0, m)),
        0..4,
    );
    let cells = 1usize..6;
    (atoms, cells).prop_flat_map(move |(atoms, cells)| {
        proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, m), cells).prop_map(
            move |values| {
                let atoms = atoms
                    .iter()
                    .map(|(t, w)| Atom { t: *t, w: w.clone() })
                    .collect();
                VectorMeasure::new(m, 1.0, atoms, Density { cells: values.len(), values }, None).unwrap()
            },
        )
    })
}

fn identity_spec(m: usize) -> ProblemSpec {
    let g: Vec<Vec<String>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { "1".into() } else { "0".into() }).collect())
        .collect();
    let gens: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>())
        .chain((0..m).map(|j| (0..m).map(|i| if i == j { -1.0 } else { 0.0 }).collect()))
        .collect();
    scenario_from_value(&serde_json::json!({
        "version": 1, "n": m, "m": m, "q": 0, "T": 1.0,
        "delays": [0.0],
        "f": vec!["0"; m], "G": g,
        "l0": "0", "l1": vec!["0"; m], "Phi": "0",
        "zeta": vec!["0"; m],
        "cone": {"kind": "finitely_generated", "generators": gens},
        "A": {"kind": "box", "lo": [], "hi": []},
        "target": {"kind": "fixed_initial_free_terminal", "x0": vec![0.0; m]},
        "growth": "0"
    }))
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn measure_mass_equals_total_variation_mass(mu in arb_measure(2)) {
        let tv = mu.total_variation();
        prop_assert!((mu.total_mass() - tv.total_mass()).abs() <= 1e-12 * (1.0 + mu.total_mass()));
        // |mu| is nonnegative everywhere
        prop_assert!(tv.atoms.iter().all(|a| a.w[0] >= 0.0));
        prop_assert!(tv.density.values.iter().all(|v| v[0] >= 0.0));
    }

    #[test]
    fn integrating_the_identity_reproduces_the_cumulative(mu in arb_measure(2)) {
        let id = |_: f64| Ok(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let by_integral = mu.integrate(2, id, 0.0, 1.0).unwrap();
        let by_cumulative = mu.cumulative(1.0).unwrap();
        for j in 0..2 {
            prop_assert!((by_integral[j] - by_cumulative[j]).abs() <= 1e-12);
        }
    }

    #[test]
    fn direction_field_reconstructs_the_measure(mu in arb_measure(2)) {
        // mu(dt) = omega(t) |mu|(dt): check atom weights and cell values
        let omega = mu.radon_nikodym();
        let tv = mu.total_variation();
        for (a, ta) in mu.atoms.iter().zip(&tv.atoms) {
            let dir = omega.atom_direction(a.t).unwrap();
            for j in 0..2 {
                prop_assert!((dir[j] * ta.w[0] - a.w[j]).abs() <= 1e-12);
            }
        }
        for (i, row) in mu.density.values.iter().enumerate() {
            if let Some(dir) = omega.cell_direction(i) {
                for j in 0..2 {
                    prop_assert!((dir[j] * tv.density.values[i][0] - row[j]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn cumulative_is_right_continuous_between_atoms(mu in arb_measure(1), t in 0.05f64..0.95) {
        // approach from the right below the gap to the next atom
        let gap = mu.atoms.iter()
            .map(|a| if a.t > t { a.t - t } else { f64::INFINITY })
            .fold(f64::INFINITY, f64::min);
        let eps = (gap * 0.5).min(1e-9);
        if eps > 0.0 && t + eps <= 1.0 {
            let here = mu.cumulative(t).unwrap()[0];
            let right = mu.cumulative(t + eps).unwrap()[0];
            prop_assert!((right - here).abs() <= 1e-8 * (1.0 + here.abs()) + 4.0 * eps);
        }
    }

    #[test]
    fn weakstar_gap_is_a_pseudometric(a in arb_measure(1), b in arb_measure(1), c in arb_measure(1)) {
        let tests = default_test_family(1.0);
        let dab = weakstar_gap(&a, &b, &tests).unwrap();
        let dba = weakstar_gap(&b, &a, &tests).unwrap();
        prop_assert_eq!(dab, dba);
        let dac = weakstar_gap(&a, &c, &tests).unwrap();
        let dbc = weakstar_gap(&b, &c, &tests).unwrap();
        prop_assert!(dac <= dab + dbc + 1e-12);
        prop_assert_eq!(weakstar_gap(&a, &a, &tests).unwrap(), 0.0);
    }

    #[test]
    fn auxiliary_round_trip_is_the_identity(mu in arb_measure(2)) {
        let spec = identity_spec(2);
        let alpha = PiecewiseControl::constant(1.0, vec![]);
        let aux = to_auxiliary(&spec, &ImpulsiveControlRef { mu: &mu, alpha: &alpha }).unwrap();
        // nu dominates |mu|
        prop_assert!(aux.nu.total_mass() >= mu.total_variation().total_mass() - 1e-12);
        let back = from_auxiliary(&spec, &aux).unwrap();
        prop_assert_eq!(back.mu.atoms.len(), mu.atoms.len());
        for (x, y) in mu.atoms.iter().zip(&back.mu.atoms) {
            for j in 0..2 {
                prop_assert!((x.w[j] - y.w[j]).abs() <= 1e-10);
            }
        }
        for (x, y) in mu.density.values.iter().zip(&back.mu.density.values) {
            for j in 0..2 {
                prop_assert!((x[j] - y[j]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn mollification_preserves_vector_mass(
        t in 0.1f64..0.9,
        w in -2.0f64..2.0,
        width_exp in 3u32..7,
    ) {
        prop_assume!(w != 0.0);
        let mu = VectorMeasure::from_atoms(1, 1.0, vec![Atom { t, w: vec![w] }]).unwrap();
        let control = impdel::dynamics::ImpulsiveControl {
            mu,
            alpha: PiecewiseControl::constant(1.0, vec![]),
        };
        let width = 0.5f64.powi(width_exp as i32);
        let out = impdel::approx::mollify(&control, width).unwrap();
        prop_assert!(out.mu.atoms.is_empty());
        let mass_before = w.abs();
        prop_assert!((out.mu.total_mass() - mass_before).abs() <= 1e-12 * (1.0 + mass_before));
        // signed mass is preserved too
        prop_assert!((out.mu.cumulative(1.0).unwrap()[0] - w).abs() <= 1e-12 * (1.0 + mass_before));
    }
}
