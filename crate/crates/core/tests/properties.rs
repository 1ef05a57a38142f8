use num_complex::Complex64;
use proptest::prelude::*;

use loschmidt::analysis::{cumulative_weights, Method};
use loschmidt::config::ExperimentConfig;
use loschmidt::io::{echo_csv, read_echo_csv, write_atomic};
use loschmidt::model::{build_ising, case_study_family, prepare_ansatz, trotter2_circuit, AnsatzKind, AnsatzSpec};
use loschmidt::noise::fit_decay;
use loschmidt::oracle::{wrap, Oracle};
use loschmidt::protocols::{ancilla_probabilities, ite_plan, run_protocol, Sign};
use loschmidt::qsim::{Basis, Circuit, Gate, Pauli, PauliString, State};
use loschmidt::rng::{multinomial, RngSeed};

fn pauli() -> impl Strategy<Value = Pauli> {
    prop_oneof![Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)]
}

fn pauli_string(n: usize) -> impl Strategy<Value = PauliString> {
    proptest::collection::vec(proptest::option::of(pauli()), n).prop_map(move |v| {
        let factors = v.into_iter().enumerate().filter_map(|(q, p)| p.map(|p| (q, p))).collect();
        PauliString::new(n, factors).unwrap()
    })
}

fn random_state(n: usize, angles: &[f64]) -> State<f64> {
    let mut s = State::<f64>::zero(n);
    for (k, &a) in angles.iter().enumerate() {
        let q = k % n;
        s.apply_gate(&Gate::ry(q, a)).unwrap();
        if q + 1 < n {
            s.apply_gate(&Gate::cx(q, q + 1).unwrap()).unwrap();
        }
        s.apply_gate(&Gate::pauli_rotation(&PauliString::single(n, q, Pauli::Z).unwrap(), 0.7 * a).unwrap()).unwrap();
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pauli_products_match_state_action(a in pauli_string(3), b in pauli_string(3), angles in proptest::collection::vec(-3.0f64..3.0, 6)) {
        let psi = random_state(3, &angles);
        let mut lhs = psi.clone();
        lhs.apply_pauli(&b).unwrap();
        lhs.apply_pauli(&a).unwrap();
        let (phase, c) = a.mul::<f64>(&b).unwrap();
        let mut rhs = psi.clone();
        rhs.apply_pauli(&c).unwrap();
        rhs.scale(phase);
        for (x, y) in lhs.amplitudes().iter().zip(rhs.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-12);
        }
        let commute = a.mul::<f64>(&b).unwrap().0 == b.mul::<f64>(&a).unwrap().0;
        prop_assert_eq!(commute, a.commutes_with(&b));
    }

    #[test]
    fn circuits_preserve_the_norm_and_invert(angles in proptest::collection::vec(-3.0f64..3.0, 1..12)) {
        let n = 4;
        let mut c = Circuit::<f64>::new(n);
        for (k, &a) in angles.iter().enumerate() {
            let p = PauliString::pair(n, (k % n, Pauli::X), ((k + 1) % n, Pauli::Y)).unwrap();
            c.push(Gate::pauli_rotation(&p, a).unwrap()).unwrap();
            c.push(Gate::ry(k % n, -a)).unwrap();
        }
        let mut s = State::<f64>::basis(n, 5);
        s.apply_circuit(&c).unwrap();
        prop_assert!((s.norm_squared() - 1.0).abs() < 1e-12);
        s.apply_circuit(&c.inverse()).unwrap();
        prop_assert!((s.amplitude(5).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_lands_in_the_principal_branch(x in -1e3f64..1e3) {
        let w = wrap(x);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        let k = (x - w) / (2.0 * std::f64::consts::PI);
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn multinomial_never_overdraws(trials in 0u64..100_000, probs in proptest::collection::vec(0.0f64..1.0, 1..6), seed in any::<u64>()) {
        let total: f64 = probs.iter().sum();
        let norm: Vec<f64> = probs.iter().map(|p| p / total.max(1.0)).collect();
        let counts = multinomial(&mut RngSeed(seed).rng(), trials, &norm);
        prop_assert!(counts.iter().sum::<u64>() <= trials);
    }

    #[test]
    fn ancilla_outcomes_sum_to_the_branch_weight(re0 in -1.0f64..1.0, im0 in -1.0f64..1.0, re1 in -1.0f64..1.0, im1 in -1.0f64..1.0) {
        let (a0, a1) = (Complex64::new(re0, im0), Complex64::new(re1, im1));
        for basis in [Basis::X, Basis::Y] {
            let [p, m] = ancilla_probabilities(a0, a1, basis);
            prop_assert!((p + m - a0.norm_sqr() - a1.norm_sqr()).abs() < 1e-12);
        }
        let [px, mx] = ancilla_probabilities(a0, a1, Basis::X);
        let [py, my] = ancilla_probabilities(a0, a1, Basis::Y);
        let z = a0.conj() * a1 * 2.0;
        prop_assert!((px - mx - z.re).abs() < 1e-12);
        prop_assert!((py - my - z.im).abs() < 1e-12);
    }

    #[test]
    fn quadrature_weights_are_exact_for_low_degree(k in 2usize..40, h in 0.01f64..0.5, c in proptest::collection::vec(-2.0f64..2.0, 4)) {
        let f = |t: f64| c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t;
        let integral = |t: f64| c[0] * t + c[1] * t * t / 2.0 + c[2] * t.powi(3) / 3.0 + c[3] * t.powi(4) / 4.0;
        let rows = cumulative_weights(k + 1, h, Method::Simpson);
        // composite Simpson at even points is exact for cubics
        for (m, w) in rows.iter().enumerate().step_by(2) {
            let v: f64 = w.iter().enumerate().map(|(i, x)| x * f(i as f64 * h)).sum();
            prop_assert!((v - integral(m as f64 * h)).abs() <= 1e-9, "m={} v={} want={}", m, v, integral(m as f64 * h));
        }
        let rows = cumulative_weights(k + 1, h, Method::Trapezoid);
        for (m, w) in rows.iter().enumerate() {
            let v: f64 = w.iter().enumerate().map(|(i, x)| x * (c[0] + c[1] * i as f64 * h)).sum();
            prop_assert!((v - c[0] * m as f64 * h - c[1] * (m as f64 * h).powi(2) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn trotter_circuits_are_unitary_and_reversible(j in -2.0f64..2.0, bx in -2.0f64..2.0, bz in -2.0f64..2.0, steps in 1usize..5) {
        let h = build_ising::<f64>(3, j, bx, bz, true).unwrap();
        let c = trotter2_circuit(&h, 0.2 * steps as f64, 0.2).unwrap();
        prop_assert!(c.unitarity_deviation().unwrap() < 1e-10);
        let mut s = State::<f64>::basis(3, 3);
        s.apply_circuit(&c).unwrap();
        s.apply_circuit(&c.inverse()).unwrap();
        prop_assert!((s.amplitude(3).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn imaginary_time_blocks_never_amplify(tau in 1e-4f64..0.2, lambda in 0.0f64..1.0, plus in any::<bool>(), angles in proptest::collection::vec(-3.0f64..3.0, 4)) {
        let h = case_study_family::<f64>(3, lambda).unwrap();
        let sign = if plus { Sign::Plus } else { Sign::Minus };
        let plan = ite_plan(&h, tau, sign).unwrap();
        for (j, th) in plan.angles.iter().enumerate() {
            let (c2, s2) = plan.weights(j);
            prop_assert!((c2 + s2 - 1.0).abs() < 1e-12);
            prop_assert!(*th >= 0.0);
        }
        let psi = random_state(3, &angles);
        let out = plan.apply_map(&psi).unwrap();
        prop_assert!(out.norm_squared() <= 1.0 + 1e-12);
        // rescaled map equals the ordered product of term exponentials
        let prep = Circuit::<f64>::new(3);
        let oracle = Oracle::new(&h, &prep).unwrap();
        let mut from_zero = plan.apply_map(&State::<f64>::zero(3)).unwrap();
        from_zero.scale(Complex64::new(plan.rescale_factor, 0.0));
        let (want, _) = oracle.ite_state(tau, sign, None).unwrap();
        for (x, y) in from_zero.amplitudes().iter().zip(want.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn decay_fit_recovers_exact_exponentials(gamma in 0.0f64..0.5, amp in 0.5f64..1.0) {
        let times: Vec<f64> = (0..8).map(|k| 0.5 * k as f64).collect();
        let p: Vec<f64> = times.iter().map(|t| amp * amp * (-2.0 * gamma * t).exp()).collect();
        let fit = fit_decay(&times, &p, 1_000_000).unwrap();
        prop_assert!((fit.gamma - gamma).abs() < 1e-9);
        prop_assert!((fit.amplitude - amp).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exact_sequential_runs_are_valid_series(a in -3.0f64..3.0, b in -3.0f64..3.0, lambda in 0.0f64..1.0) {
        let cfg = ExperimentConfig::from_toml(&format!(
            "seed = 1\nprotocol = \"sht\"\n[model]\nn_qubits = 3\nlambda = {lambda}\n[ansatz]\nkind = \"product\"\nparams = [{a}, {b}]\n[time]\nt_max = 1.5\ndt = 0.25\n"
        )).unwrap();
        let out = run_protocol(&cfg).unwrap();
        let s = &out.series;
        s.validate().unwrap();
        prop_assert!(s.entries.iter().all(|e| e.r <= 1.0 + 1e-12));
        let h = case_study_family::<f64>(3, lambda).unwrap();
        let prep = prepare_ansatz::<f64>(&AnsatzSpec::new(AnsatzKind::Product, vec![a, b]).unwrap(), 3).unwrap();
        if s.truncated.is_none() {
            let g = loschmidt::oracle::exact_circuit_echo(&trotter2_circuit(&h, 1.5, 0.25).unwrap(), &prep).unwrap();
            prop_assert!((s.last().g() - g).norm() < 1e-9);
        }
    }

    #[test]
    fn echo_files_round_trip_exactly(values in proptest::collection::vec((0.0f64..1.0, -50.0f64..50.0, 0.0f64..1.0), 1..20)) {
        let mut s = loschmidt::series::EchoSeries::new("sht", 0);
        for (k, (r, phi, d)) in values.iter().enumerate() {
            s.entries.push(loschmidt::series::EchoPoint { label: k + 1, t: 0.1 * (k + 1) as f64, r: *r, phi: *phi, dr: *d, dphi: d / 3.0, proper: k % 2 == 0 });
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("echo.csv");
        write_atomic(&p, &echo_csv(&s).unwrap()).unwrap();
        let rows = read_echo_csv(&p).unwrap();
        for (row, e) in rows.iter().zip(&s.entries) {
            prop_assert_eq!((row.r, row.phi, row.dr, row.dphi, row.t), (e.r, e.phi, e.dr, e.dphi, e.t));
            prop_assert_eq!(row.proper == 1, e.proper);
        }
    }

    #[test]
    fn configs_round_trip_through_toml(seed in 0u64..(i64::MAX as u64), n in 2usize..9, count in 1u64..10_000, gamma in 0.0f64..0.01) {
        let cfg = ExperimentConfig::from_toml(&format!(
            "seed = {seed}\nprotocol = \"dpg\"\n[model]\nn_qubits = {n}\nlambda = 0.5\n[ansatz]\nkind = \"depth2\"\n[time]\nt_max = 2.0\ndt = 0.25\n[shots]\nmode = \"fixed\"\ncount = {count}\n[noise]\ngamma = {gamma}\n"
        )).unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(cfg, back);
    }
}
