//! Acceptance run: one PASS/FAIL line per headline criterion.
//!
//! `ACCEPTANCE=1,4,8` restricts the run to the listed criteria.

use std::time::Instant;

use num_complex::Complex64;

use loschmidt::analysis::{cumulative_weights, filter_coefficients, ldos, Method};
use loschmidt::config::ExperimentConfig;
use loschmidt::model::{
    case_study_family, optimize_ansatz, prepare_ansatz, time_series_sequence, trotter2_circuit, AnsatzKind,
};
use loschmidt::oracle::{dense_propagator, exact_circuit_echo, operator_distance, wrap, Oracle, SpectralDecomposition};
use loschmidt::protocols::{apply_ite_trajectory, ite_plan, run_protocol, sht_step, Shots, Sign};
use loschmidt::qsim::{Circuit, State};
use loschmidt::rng::RngSeed;
use loschmidt::series::EchoSeries;

type Outcome = (bool, String);

fn depth2_params(n: usize) -> Vec<f64> {
    let h = case_study_family::<f64>(n, 0.5).unwrap();
    optimize_ansatz(&h, AnsatzKind::Depth2, 8, RngSeed(2024)).unwrap().spec.params
}

fn config(protocol: &str, n: usize, params: &[f64], t_max: f64, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "seed = 7\nprotocol = \"{protocol}\"\n[model]\nn_qubits = {n}\nlambda = 0.5\n\
         [ansatz]\nkind = \"depth2\"\nparams = {params:?}\n[time]\nt_max = {t_max}\ndt = 0.25\n{extra}"
    ))
    .unwrap()
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn worst_phase_gap(series: &EchoSeries, reference: &EchoSeries) -> f64 {
    series
        .entries
        .iter()
        .filter_map(|e| reference.at_time(e.t, 1e-9).map(|o| wrap(e.phi - o.phi).abs()))
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for n in [4, 6, 8] {
        let params = depth2_params(n);
        let circuit_ref = run_protocol(&config("oracle", n, &params, 6.0, "[oracle]\nreference = \"circuit\"\n"))
            .unwrap()
            .series;
        let sht = run_protocol(&config("sht", n, &params, 6.0, "")).unwrap().series;
        let sht_gap = sht
            .entries
            .iter()
            .zip(&circuit_ref.entries)
            .map(|(a, b)| wrap(a.phi - b.phi).abs())
            .fold(0.0, f64::max);
        let exact_ref = run_protocol(&config("oracle", n, &params, 6.0, "")).unwrap().series;
        let grad = "[gradient]\nevolution = \"exact\"\nepsilon = 1e-3\n[ite]\ntau = { rule = \"accuracy\", epsilon = 1e-3 }\n";
        let dpg = run_protocol(&config("dpg", n, &params, 6.0, grad)).unwrap();
        let ite = run_protocol(&config("ite", n, &params, 6.0, grad)).unwrap();
        let dpg_gap = worst_phase_gap(&dpg.series, &exact_ref);
        let ite_gap = worst_phase_gap(&ite.series, &exact_ref);
        let covered = dpg.series.truncated.is_none() && ite.series.truncated.is_none();
        ok &= sht_gap <= 1e-9 && dpg_gap <= 1e-3 && ite_gap <= 1e-3 && covered;
        notes.push(format!(
            "n={n}: sht {sht_gap:.1e}, dpg {dpg_gap:.1e}, ite {ite_gap:.1e} (tau {:.2e})",
            ite.tau.unwrap_or(f64::NAN)
        ));
    }

    // τ² scaling of the imaginary-time bias at one grid point
    let params = depth2_params(4);
    let ite_at = |tau: f64| {
        let c = config("ite", 4, &params, 1.0, &format!(
            "[gradient]\nevolution = \"exact\"\nn_intervals = 2\n[ite]\ntau = {{ rule = \"fixed\", tau = {tau} }}\n"
        ));
        run_protocol(&c).unwrap().series
    };
    let reference = config("dpg", 4, &params, 1.0, "[gradient]\nevolution = \"exact\"\nn_intervals = 2\n");
    let dpg_ref = run_protocol(&reference).unwrap().series;
    let taus = [0.04, 0.02, 0.01];
    let errs: Vec<f64> = taus.iter().map(|&t| (ite_at(t).last().phi - dpg_ref.last().phi).abs()).collect();
    let slope = log_slope(&taus, &errs);
    ok &= (slope - 2.0).abs() <= 0.2;
    notes.push(format!("ite bias slope {slope:.2}"));
    (ok, notes.join("; "))
}

fn criterion_2() -> Outcome {
    let n = 6;
    let params = depth2_params(n);
    let h = case_study_family::<f64>(n, 0.5).unwrap();
    let spec = loschmidt::model::AnsatzSpec::new(AnsatzKind::Depth2, params).unwrap();
    let prep = prepare_ansatz::<f64>(&spec, n).unwrap();
    let seq = time_series_sequence(&h, 6.0, 0.25).unwrap();
    let m = 2000u64;
    let seeds = 200u64;
    let mut r_prev = 1.0f64;
    let mut worst: f64 = 0.0;
    let mut over = 0usize;
    let mut checked = 0usize;
    for l in 1..=seq.len() {
        let r = exact_circuit_echo(&seq.circuit(l), &prep).unwrap().norm();
        let e = seq.entry(l).unwrap();
        let dphis: Vec<f64> = (0..seeds)
            .map(|s| {
                let (x, y) = sht_step(&prep, &e.prefix, &e.gate, &e.suffix, Shots::Count(m), None, RngSeed(s).derive(l as u64))
                    .unwrap();
                y.atan2(x)
            })
            .collect();
        let mean = dphis.iter().sum::<f64>() / seeds as f64;
        let var = dphis.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        let bound = (1.0 / r_prev.powi(2) + 1.0 / r.powi(2)) / (2.0 * m as f64);
        if r >= 0.2 && r_prev >= 0.2 {
            checked += 1;
            worst = worst.max(var / bound);
            if var > 1.2 * bound {
                over += 1;
            }
        }
        r_prev = r;
    }
    (over == 0, format!("{checked} steps, max Var/bound {worst:.3}, {over} above 1.2"))
}

fn criterion_3() -> Outcome {
    let n = 6;
    let params = depth2_params(n);
    let eps = 0.05;
    let exact = run_protocol(&config("sht", n, &params, 1.0, "")).unwrap().series;
    let mut finals = Vec::new();
    let mut over_bound = 0;
    let mut detail = String::new();
    for seed in 0..100u64 {
        let mut c = config("sht", n, &params, 1.0, &format!("[shots]\nmode = \"allocated\"\nepsilon = {eps}\n"));
        c.seed = 1000 + seed;
        let out = run_protocol(&c).unwrap();
        let plan = out.shot_plan.expect("allocated plan");
        if (plan.total as f64) > plan.bound {
            over_bound += 1;
        }
        if seed == 0 {
            detail = format!("plan {} shots vs bound {:.0}", plan.total, plan.bound);
        }
        if out.series.truncated.is_none() {
            finals.push(out.series.last().phi);
        }
    }
    let k = finals.len() as f64;
    let mean = finals.iter().sum::<f64>() / k;
    let std = (finals.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let ok = std <= 1.3 * eps && over_bound == 0 && finals.len() == 100;
    (
        ok,
        format!(
            "std(phi_L) {std:.4} (limit {:.4}), bias {:.4}, {detail}, {over_bound} runs over bound",
            1.3 * eps,
            mean - exact.last().phi
        ),
    )
}

fn criterion_4() -> Outcome {
    let n = 4;
    let h = case_study_family::<f64>(n, 0.5).unwrap();
    let params = depth2_params(n);
    let spec = loschmidt::model::AnsatzSpec::new(AnsatzKind::Depth2, params).unwrap();
    let prep = prepare_ansatz::<f64>(&spec, n).unwrap();
    let oracle = Oracle::new(&h, &prep).unwrap();

    let mut angle_err: f64 = 0.0;
    for tau in [0.01, 0.02, 0.05] {
        for sign in [Sign::Plus, Sign::Minus] {
            let plan = ite_plan(&h, tau, sign).unwrap();
            for (j, (l, _)) in plan.terms.iter().enumerate() {
                let want = (-l.abs() * tau).exp() * (l * tau).cosh();
                angle_err = angle_err.max(((plan.angles[j] / 2.0).cos().powi(2) - want).abs());
            }
        }
    }

    let mut infidelity: f64 = 0.0;
    for sign in [Sign::Plus, Sign::Minus] {
        let plan = ite_plan(&h, 0.02, sign).unwrap();
        let traj = (0..)
            .map(|s| apply_ite_trajectory(oracle.state(), &plan, RngSeed(s)).unwrap())
            .find(|t| t.success)
            .unwrap();
        let (mut want, _) = oracle.ite_state(0.02, sign, None).unwrap();
        want.normalize();
        infidelity = infidelity.max(1.0 - traj.state.inner(&want).unwrap().norm_sqr());
    }

    // exact all-success probability against its first-order expansion
    let taus = [0.04, 0.02, 0.01];
    let mut residuals = Vec::new();
    let mut sampled_ok = true;
    for &tau in &taus {
        let mut res: f64 = 0.0;
        for sign in [Sign::Plus, Sign::Minus] {
            let plan = ite_plan(&h, tau, sign).unwrap();
            let out = plan.apply_map(oracle.state()).unwrap();
            let exact = out.norm_squared();
            let linear: f64 = 1.0
                - 2.0
                    * tau
                    * h.terms()
                        .iter()
                        .map(|t| {
                            let p = oracle.state().expectation_pauli(&t.string).unwrap().re;
                            t.coefficient.abs() - sign.value() * t.coefficient * p
                        })
                        .sum::<f64>();
            res = res.max((exact - linear).abs());
            if tau == 0.04 {
                let trials = 20_000u64;
                let hits = (0..trials)
                    .filter(|&s| apply_ite_trajectory(oracle.state(), &plan, RngSeed(1_000_000 + s)).unwrap().success)
                    .count() as f64;
                let rate = hits / trials as f64;
                let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
                sampled_ok &= (rate - exact).abs() <= 4.0 * sigma;
            }
        }
        residuals.push(res);
    }
    let slope = log_slope(&taus, &residuals);
    let ok = angle_err <= 1e-14 && infidelity <= 1e-10 && (slope - 2.0).abs() <= 0.2 && sampled_ok;
    (
        ok,
        format!(
            "angle err {angle_err:.1e}, infidelity {infidelity:.1e}, success residual slope {slope:.2}, sampled rate {}",
            if sampled_ok { "consistent" } else { "off" }
        ),
    )
}

fn criterion_5() -> Outcome {
    // ∫_0^2 f with f = cos 3t + t e^{-t}
    let f = |t: f64| (3.0 * t).cos() + t * (-t).exp();
    let exact = (6.0f64).sin() / 3.0 + 1.0 - 3.0 * (-2.0f64).exp();
    let sizes = [8usize, 16, 32, 64];
    let mut slopes = Vec::new();
    for method in [Method::Trapezoid, Method::Simpson] {
        let errs: Vec<f64> = sizes
            .iter()
            .map(|&k| {
                let h = 2.0 / k as f64;
                let w = cumulative_weights(k + 1, h, method);
                let v: f64 = w[k].iter().enumerate().map(|(i, c)| c * f(i as f64 * h)).sum();
                (v - exact).abs()
            })
            .collect();
        let hs: Vec<f64> = sizes.iter().map(|&k| 2.0 / k as f64).collect();
        slopes.push(log_slope(&hs, &errs));
    }
    let params = depth2_params(4);
    let reference = run_protocol(&config("oracle", 4, &params, 6.0, "")).unwrap().series;
    let mut end_to_end = Vec::new();
    for eps in [1e-2, 1e-3] {
        let c = config("dpg", 4, &params, 6.0, &format!("[gradient]\nevolution = \"exact\"\nepsilon = {eps}\n"));
        let s = run_protocol(&c).unwrap().series;
        end_to_end.push((eps, worst_phase_gap(&s, &reference)));
    }
    let ok = (slopes[0] - 2.0).abs() <= 0.2
        && (slopes[1] - 4.0).abs() <= 0.3
        && end_to_end.iter().all(|(eps, gap)| gap <= eps);
    (
        ok,
        format!(
            "trapezoid slope {:.2}, simpson slope {:.2}, dpg gap {}",
            slopes[0],
            slopes[1],
            end_to_end.iter().map(|(e, g)| format!("{g:.1e} (eps {e:.0e})")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_6() -> Outcome {
    let n = 10;
    let params = depth2_params(n);
    let reference = run_protocol(&config("oracle", n, &params, 6.0, "[oracle]\nreference = \"circuit\"\n")).unwrap().series;
    let noisy = config(
        "sht",
        n,
        &params,
        6.0,
        "[shots]\nmode = \"fixed\"\ncount = 5000\n[noise]\ngamma = 2e-3\n[mitigation]\nenabled = true\n",
    );
    let out = run_protocol(&noisy).unwrap();
    let fit = out.fit.clone().expect("mitigation ran");
    let raw = out.raw.as_ref().expect("raw series");
    let mut amp_bad = 0;
    let mut phase_bad = 0;
    let mut phase_checked = 0;
    let mut amp_worst: f64 = 0.0;
    let mut amp_worst_proper: f64 = 0.0;
    let mut phase_worst: f64 = 0.0;
    for (m, (u, o)) in out.series.entries.iter().zip(raw.entries.iter().zip(&reference.entries)).skip(1) {
        let za = (m.r - o.r).abs() / m.dr.max(1e-300);
        amp_worst = amp_worst.max(za);
        if m.proper {
            amp_worst_proper = amp_worst_proper.max(za);
        }
        if za > 3.0 {
            amp_bad += 1;
        }
        if m.r >= 0.3 {
            phase_checked += 1;
            let zp = wrap(u.phi - o.phi).abs() / u.dphi.max(1e-300);
            phase_worst = phase_worst.max(zp);
            if zp > 3.0 {
                phase_bad += 1;
            }
        }
    }
    let covered = out.series.truncated.is_none() && out.series.entries.len() == reference.entries.len();
    let ok = fit.r_squared >= 0.98 && amp_bad == 0 && phase_bad == 0 && covered;
    let points = out.series.entries.len() - 1;
    // chance that unbiased gaussian estimates leave 3σ somewhere
    let chance = 1.0 - (1.0 - 2.6998e-3f64).powi(points as i32);
    (
        ok,
        format!(
            "R² {:.4} (Γ {:.4}), amplitude max {amp_worst:.2}σ ({amp_bad} over 3σ of {points}; \
             whole steps max {amp_worst_proper:.2}σ; p(any > 3σ | unbiased) = {chance:.2}), \
             raw phase max {phase_worst:.2}σ ({phase_bad} over 3σ of {phase_checked}), truncated {}",
            fit.r_squared,
            fit.gamma,
            out.series.truncated.is_some()
        ),
    )
}

fn criterion_7() -> Outcome {
    let n = 8;
    let delta = 0.25;
    let params = depth2_params(n);
    let h = case_study_family::<f64>(n, 0.5).unwrap();
    let spec = loschmidt::model::AnsatzSpec::new(AnsatzKind::Depth2, params.clone()).unwrap();
    let prep = prepare_ansatz::<f64>(&spec, n).unwrap();
    let oracle = Oracle::new(&h, &prep).unwrap();
    let ground = oracle.spectrum().ground_energy();

    // exact-expectation reconstruction on the run's default window; the
    // Trotter shift of the levels at dt = 0.25 alone moves the density by
    // several percent of the peak, so the check runs at dt = 0.125
    let t_l = 24.0;
    let ldos_cfg = format!("[ldos]\ndelta = {delta}\nt_max = {t_l}\n");
    let relative_dev = |dt: f64| {
        let mut c = config("sht", n, &params, t_l, &ldos_cfg);
        c.time.dt = dt;
        let out = run_protocol(&c).unwrap();
        let rec = out.ldos.clone().expect("spectrum");
        let exact = oracle.ldos(delta, &rec.energies);
        let (_, exact_peak) = exact.peak();
        let dev = rec.density.iter().zip(&exact.density).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        (out, rec.peak().0, dev / exact_peak)
    };
    let (_, peak_e, dev_fine) = relative_dev(0.125);
    let (clean, _, dev_coarse) = relative_dev(0.25);
    let mut ok = (peak_e - ground).abs() <= delta / 2.0 && dev_fine <= 0.05;
    let mut note = format!(
        "peak {peak_e:.3} vs E0 {ground:.3}, exact-mode max dev {:.2}% of peak (dt 0.25: {:.2}%)",
        100.0 * dev_fine,
        100.0 * dev_coarse
    );
    let grid = clean.ldos.as_ref().expect("spectrum").energies.clone();

    // sampled noisy run, mitigated, against the noiseless reconstruction with
    // the same filter
    let t_noisy = 12.0;
    let r = (t_noisy / 0.25) as usize;
    let coeffs = filter_coefficients(delta, t_noisy, r).unwrap();
    let noisy_cfg = config(
        "sht",
        n,
        &params,
        t_noisy,
        &format!(
            "[shots]\nmode = \"fixed\"\ncount = 5000\n[noise]\ngamma = 2e-3\n[mitigation]\nenabled = true\n\
             [ldos]\ndelta = {delta}\nt_max = {t_noisy}\n"
        ),
    );
    let noisy = run_protocol(&noisy_cfg).unwrap();
    let noisy_spec = ldos(&loschmidt::noise::clamp_amplitudes(&noisy.series), &coeffs, &grid).unwrap();
    let clean_spec = ldos(&clean.series, &coeffs, &grid).unwrap();
    let mut band_bad = 0;
    let mut worst: f64 = 0.0;
    for ((a, b), s) in noisy_spec.density.iter().zip(&clean_spec.density).zip(&noisy_spec.uncertainty) {
        let z = (a - b).abs() / s.max(1e-300);
        worst = worst.max(z);
        if (a - b).abs() > 3.0 * s {
            band_bad += 1;
        }
    }
    ok &= band_bad == 0 && noisy.series.truncated.is_none();
    note.push_str(&format!(
        ", noisy-mitigated (t ≤ {t_noisy}) max {worst:.2}σ, {band_bad} of {} grid points outside 3σ",
        grid.len()
    ));
    (ok, note)
}

fn dense_unitary(c: &Circuit<f64>) -> Vec<Complex64> {
    let dim = 1usize << c.n_qubits();
    let mut u = vec![Complex64::new(0.0, 0.0); dim * dim];
    for j in 0..dim {
        let mut s = State::<f64>::basis(c.n_qubits(), j);
        s.apply_circuit(c).unwrap();
        for (i, a) in s.amplitudes().iter().enumerate() {
            u[i * dim + j] = *a;
        }
    }
    u
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for n in [4, 6] {
        let h = case_study_family::<f64>(n, 0.5).unwrap();
        let spectrum = SpectralDecomposition::new(&h).unwrap();
        let exact = dense_propagator(&spectrum, 1.0);
        let dts = [0.25, 0.125, 0.0625, 0.03125];
        let dist: Vec<f64> = dts
            .iter()
            .map(|&dt| operator_distance(&dense_unitary(&trotter2_circuit(&h, 1.0, dt).unwrap()), &exact, 1 << n))
            .collect();
        let slope = log_slope(&dts, &dist);
        ok &= (slope - 2.0).abs() <= 0.2;
        notes.push(format!("n={n} slope {slope:.3}"));
    }
    (ok, notes.join(", "))
}

fn criterion_9() -> Outcome {
    let n = 19;
    let h = case_study_family::<f64>(n, 0.5).unwrap();
    let spec = loschmidt::model::AnsatzSpec::new(AnsatzKind::Depth2, vec![0.3, 2.5, 0.6, -3.5, 3.0, -0.3, 1.2, -2.4]).unwrap();
    let prep = prepare_ansatz::<f64>(&spec, n).unwrap();
    let seq = time_series_sequence(&h, 0.25, 0.25).unwrap();
    let e = seq.entry(seq.len()).unwrap();
    let start = Instant::now();
    let (x, y) = sht_step(&prep, &e.prefix, &e.gate, &e.suffix, Shots::Count(5000), None, RngSeed(9)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let threads = rayon::current_num_threads();
    (secs <= 60.0, format!("{secs:.1} s on {threads} thread(s), step {} of {}, x+iy = {x:.3}{y:+.3}i", seq.len(), seq.len()))
}

fn main() {
    let selected: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "oracle equivalence", criterion_1),
        (2, "per-step variance bound", criterion_2),
        (3, "shot allocation", criterion_3),
        (4, "imaginary-time block encoding", criterion_4),
        (5, "integration orders", criterion_5),
        (6, "noise and mitigation", criterion_6),
        (7, "spectrum reconstruction", criterion_7),
        (8, "trotter order", criterion_8),
        (9, "20-qubit smoke run", criterion_9),
    ];
    let mut failed = 0;
    for (k, name, run) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&k)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {k} ({name}): {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
