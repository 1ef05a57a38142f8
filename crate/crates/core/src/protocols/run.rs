//! One configured experiment end to end: state preparation, the chosen
//! protocol over its time grid, optional noise calibration and mitigation,
//! and the spectrum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{choose_grid, cumulative_weights, energy_grid, filter_coefficients, ldos, IntegrationScheme, LdosSpectrum};
use crate::config::{ExperimentConfig, OracleReference, ShotsConfig};
use crate::error::{Error, Result};
use crate::model::{
    ansatz_energy, max_gate_phase, optimize_ansatz, prepare_ansatz, time_series_sequence, trotter2_circuit, AnsatzSpec,
    PauliSumHamiltonian,
};
use crate::noise::{clamp_amplitudes, echo_calibration, mitigate_series, mitigate_series_at, DecayFit, NoiseModel};
use crate::oracle::{exact_circuit_echo, wrap, Oracle, SpectralDecomposition, MAX_ORACLE_QUBITS};
use crate::qsim::{Circuit, State};
use crate::rng::{binomial, RngSeed};
use crate::series::{EchoPoint, EchoSeries, ShotTotals, Truncation};

use super::common::{Estimate, Evolution, Shots};
use super::dpg::{allocate_shots_dpg, dpg_point};
use super::ite::ite_gradient;
use super::sht::{allocate_shots_sht, amplitude_estimate, from_survival, sht_reconstruct, sht_step, AmplitudeEstimate, ShotPlan, ShtMeasurement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Sht,
    Dpg,
    Ite,
    Oracle,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Sht => "sht",
            Protocol::Dpg => "dpg",
            Protocol::Ite => "ite",
            Protocol::Oracle => "oracle",
        }
    }
}

const TAG_ANSATZ: u64 = 1;
const TAG_PILOT: u64 = 2;
const TAG_STEP: u64 = 3;
const TAG_AMPLITUDE: u64 = 4;
const TAG_CALIBRATION: u64 = 5;
const TAG_GRADIENT: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    /// Final series, mitigated when mitigation ran.
    pub series: EchoSeries,
    /// The series before mitigation, when mitigation ran.
    pub raw: Option<EchoSeries>,
    pub fit: Option<DecayFit>,
    pub ldos: Option<LdosSpectrum>,
    pub ansatz: AnsatzSpec,
    pub ansatz_energy: f64,
    pub tau: Option<f64>,
    pub grid: Option<IntegrationScheme>,
    pub eta: Option<f64>,
    pub shot_plan: Option<ShotPlan>,
    /// Gates in the sequential test's sequence.
    pub sequence_length: Option<usize>,
    /// Noise-equivalent time per label for noisy circuit runs; mitigation
    /// corrects each point for this time instead of its own.
    #[serde(skip)]
    pub noise_times: Option<Vec<f64>>,
}

/// Gates that receive noise.
fn noisy_gates(c: &Circuit<f64>, noise: &NoiseModel) -> usize {
    c.gates().iter().filter(|g| g.arity() >= noise.min_arity).count()
}

/// Maps noisy-gate counts to the time at which a whole-step circuit has as
/// many noisy gates. Partial circuits of the sequential test carry fewer
/// gates than their effective time suggests.
fn noise_time_map(h: &PauliSumHamiltonian<f64>, dt: f64, noise: &NoiseModel) -> Result<impl Fn(usize) -> f64> {
    let n1 = noisy_gates(&trotter2_circuit(h, dt, dt)?, noise) as f64;
    let n2 = noisy_gates(&trotter2_circuit(h, 2.0 * dt, dt)?, noise) as f64;
    let per_time = (n2 - n1) / dt;
    Ok(move |count: usize| {
        if per_time > 0.0 {
            dt + (count as f64 - n1) / per_time
        } else {
            0.0
        }
    })
}

fn shots_of(cfg: &ExperimentConfig) -> Shots {
    match cfg.shots {
        ShotsConfig::Exact => Shots::Exact,
        ShotsConfig::Fixed { count } => Shots::Count(count),
        ShotsConfig::Allocated { pilot, .. } => Shots::Count(pilot),
    }
}

pub fn run_protocol(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let h = cfg.model.hamiltonian()?;
    let n = h.n_qubits();
    let seed = RngSeed(cfg.seed);
    let ansatz = match &cfg.ansatz.params {
        Some(p) => AnsatzSpec::new(cfg.ansatz.kind, p.clone())?,
        None => optimize_ansatz(&h, cfg.ansatz.kind, cfg.ansatz.restarts, seed.derive(TAG_ANSATZ))?.spec,
    };
    let energy = ansatz_energy(&h, &ansatz)?;
    let prep = prepare_ansatz::<f64>(&ansatz, n)?;
    let mut out = RunOutput {
        series: EchoSeries::new(cfg.protocol.name(), cfg.seed),
        raw: None,
        fit: None,
        ldos: None,
        ansatz,
        ansatz_energy: energy,
        tau: None,
        grid: None,
        eta: None,
        shot_plan: None,
        sequence_length: None,
        noise_times: None,
    };
    match cfg.protocol {
        Protocol::Oracle => run_oracle(cfg, &h, &prep, &mut out)?,
        Protocol::Sht => run_sht(cfg, &h, &prep, seed, &mut out)?,
        Protocol::Dpg | Protocol::Ite => run_gradient(cfg, &h, &prep, seed, &mut out)?,
    }

    if let (Some(m), Some(noise)) = (&cfg.mitigation, cfg.noise_model()) {
        if m.enabled {
            let dt = cfg.time.dt;
            let times = match &m.times {
                Some(t) => t.clone(),
                None => {
                    let k = (cfg.time.t_max / (2.0 * dt) + 1e-9).floor() as usize;
                    (0..=k).map(|i| 2.0 * dt * i as f64).collect()
                }
            };
            let cal_shots = m.shots.or(shots_of(cfg).count()).unwrap_or(1);
            let fit = echo_calibration(&prep, &h, &times, dt, noise, cal_shots, seed.derive(TAG_CALIBRATION))?;
            if fit.clamped {
                out.series.warnings.push("decay fit clamped to Γ ≥ 0, A ≤ 1".into());
            }
            let mitigated = match &out.noise_times {
                Some(nt) => {
                    let at: Vec<f64> = out.series.entries.iter().map(|e| nt.get(e.label).copied().unwrap_or(e.t)).collect();
                    mitigate_series_at(&out.series, &fit, m.include_fit_uncertainty, &at)?
                }
                None => mitigate_series(&out.series, &fit, m.include_fit_uncertainty)?,
            };
            out.series.shots.total += cal_shots * times.len() as u64;
            out.series.shots.circuits += times.len() as u64;
            let mut mitigated = mitigated;
            mitigated.shots = out.series.shots;
            out.raw = Some(std::mem::replace(&mut out.series, mitigated));
            out.fit = Some(fit);
        }
    }

    if let Some(l) = &cfg.ldos {
        let t_l = l.t_max.unwrap_or(cfg.time.t_max);
        let spacing = match (cfg.protocol, out.grid) {
            (Protocol::Dpg | Protocol::Ite, Some(g)) => cfg.time.t_max / g.n_intervals as f64,
            _ => cfg.time.dt,
        };
        let mut r = l.r.unwrap_or_else(|| (t_l / spacing).round().max(1.0) as usize);
        let mut t_l = t_l;
        let covered = out.series.proper().last().map_or(0.0, |e| e.t);
        if out.series.truncated.is_some() && covered + 1e-9 < t_l {
            // keep the sample spacing, drop the times that were never reached
            let step = t_l / r as f64;
            r = (covered / step + 1e-9).floor() as usize;
            t_l = r as f64 * step;
            out.series.warnings.push(if r == 0 {
                "spectrum skipped: series truncated before the first filter time".into()
            } else {
                format!("spectrum uses t ≤ {t_l} because the series was truncated")
            });
        }
        if r > 0 {
            let coeffs = filter_coefficients(l.delta, t_l, r)?;
            let (lo, hi) = default_window(h.one_norm(), out.ansatz_energy, t_l / r as f64);
            let grid = energy_grid(l.e_min.unwrap_or(lo), l.e_max.unwrap_or(hi), l.delta, l.points);
            out.ldos = Some(ldos(&clamp_amplitudes(&out.series), &coeffs, &grid)?);
        }
    }
    Ok(out)
}

/// Samples `spacing` apart repeat the spectrum every `2π/spacing`; the
/// default window is the period centred on the state energy, within
/// `±bound`.
pub fn default_window(bound: f64, center: f64, spacing: f64) -> (f64, f64) {
    let half = std::f64::consts::PI / spacing;
    ((center - half).max(-bound), (center + half).min(bound))
}

fn run_oracle(cfg: &ExperimentConfig, h: &PauliSumHamiltonian<f64>, prep: &Circuit<f64>, out: &mut RunOutput) -> Result<()> {
    let n = h.n_qubits();
    if n > MAX_ORACLE_QUBITS {
        return Err(Error::SystemTooLarge { n_qubits: n, cap: MAX_ORACLE_QUBITS });
    }
    let mut prev = 0.0f64;
    fn push(prev: &mut f64, series: &mut EchoSeries, label: usize, t: f64, g: num_complex::Complex64, proper: bool) {
        let phi = *prev + wrap(g.arg() - *prev);
        *prev = phi;
        series.entries.push(EchoPoint { label, t, r: g.norm(), phi, dr: 0.0, dphi: 0.0, proper });
    }
    match cfg.oracle.reference {
        OracleReference::Exact => {
            let oracle = Oracle::new(h, prep)?;
            let k = (cfg.time.t_max / cfg.time.dt).round() as usize;
            // follow the phase on a finer grid so that no branch is skipped
            let sub = (cfg.time.dt * oracle.spectrum().eigenvalues().iter().fold(0.0f64, |m, e| m.max(e.abs())) / 0.25)
                .ceil()
                .max(1.0) as usize;
            for i in 1..=k {
                let t = cfg.time.dt * i as f64;
                for j in 1..sub {
                    let s = cfg.time.dt * ((i - 1) as f64 + j as f64 / sub as f64);
                    prev += wrap(oracle.echo(s).arg() - prev);
                }
                push(&mut prev, &mut out.series, i, t, oracle.echo(t), true);
            }
        }
        OracleReference::Circuit => {
            if cfg.time.t_max > 0.0 {
                let seq = time_series_sequence(h, cfg.time.t_max, cfg.time.dt)?;
                out.sequence_length = Some(seq.len());
                let gs: Vec<Result<num_complex::Complex64>> =
                    (1..=seq.len()).into_par_iter().map(|l| exact_circuit_echo(&seq.circuit(l), prep)).collect();
                for (i, (g, s)) in gs.into_iter().zip(seq.steps()).enumerate() {
                    push(&mut prev, &mut out.series, i + 1, s.effective_time, g?, s.proper);
                }
            }
        }
    }
    Ok(())
}

fn run_sht(
    cfg: &ExperimentConfig,
    h: &PauliSumHamiltonian<f64>,
    prep: &Circuit<f64>,
    seed: RngSeed,
    out: &mut RunOutput,
) -> Result<()> {
    if cfg.time.t_max == 0.0 {
        return Ok(());
    }
    let dt = cfg.time.dt;
    let advance = max_gate_phase(h, dt)?;
    if advance >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::StepTooLarge { advance });
    }
    let seq = time_series_sequence(h, cfg.time.t_max, dt)?;
    let len = seq.len();
    out.sequence_length = Some(len);
    let noise = cfg.noise_model();
    if let Some(nm) = noise {
        let map = noise_time_map(h, dt, nm)?;
        let mut nt = vec![0.0];
        nt.extend((1..=len).map(|l| map(noisy_gates(&seq.circuit(l), nm))));
        out.noise_times = Some(nt);
    }
    let mut totals = ShotTotals::default();

    // shots per basis for each step
    let mut l_eff = len;
    let mut early: Option<Truncation> = None;
    let per_step: Vec<Shots> = match cfg.shots {
        ShotsConfig::Exact => vec![Shots::Exact; len],
        ShotsConfig::Fixed { count } => vec![Shots::Count(count); len],
        ShotsConfig::Allocated { epsilon, pilot } => {
            let pilots = map_steps(len, noise, |l| {
                amplitude_estimate(prep, &seq.circuit(l), Shots::Count(pilot), noise, seed.derive2(TAG_PILOT, l as u64))
            })?;
            totals.pilot += pilot * len as u64;
            totals.total += pilot * len as u64;
            totals.circuits += len as u64;
            let mut r_est = Vec::with_capacity(len);
            for (i, a) in pilots.iter().enumerate() {
                if !(a.p.value > 0.0) || a.p.value < 3.0 * a.p.std {
                    l_eff = i;
                    let step = seq.steps()[i].clone();
                    early = Some(Truncation {
                        label: i + 1,
                        t: step.effective_time,
                        reason: Error::AmplitudeLost { step: i + 1, detail: "pilot survival not resolved".into() }
                            .to_string(),
                    });
                    break;
                }
                r_est.push(a.r.value);
            }
            if l_eff == 0 {
                Vec::new()
            } else {
                let plan = allocate_shots_sht(&r_est, l_eff, epsilon)?;
                let v = plan.per_step.iter().map(|&m| Shots::Count(m)).collect();
                out.shot_plan = Some(plan);
                v
            }
        }
    };

    let measurements = map_steps(l_eff, noise, |l| {
        let e = seq.entry(l)?;
        let shots = per_step[l - 1];
        let (x, y) = sht_step(prep, &e.prefix, &e.gate, &e.suffix, shots, noise, seed.derive2(TAG_STEP, l as u64))?;
        let amplitude =
            amplitude_estimate(prep, &seq.circuit(l), shots, noise, seed.derive2(TAG_AMPLITUDE, l as u64))?;
        Ok(ShtMeasurement { label: l, t: e.effective_time, proper: e.proper, x, y, shots: shots.count(), amplitude })
    })?;
    for s in &per_step[..l_eff] {
        if let Some(m) = s.count() {
            totals.total += 3 * m;
        }
        totals.circuits += 3;
    }
    let mut series = sht_reconstruct(&measurements, "sht", cfg.seed);
    if series.truncated.is_none() {
        series.truncated = early;
    }
    series.shots = totals;
    out.series = series;
    Ok(())
}

/// `f(1..=len)`, in parallel when noiseless (noisy sampling is itself
/// parallel and holds large caches).
fn map_steps<R: Send>(len: usize, noise: Option<&NoiseModel>, f: impl Fn(usize) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    if noise.is_some() {
        (1..=len).map(f).collect()
    } else {
        (1..=len).into_par_iter().map(f).collect()
    }
}

fn survival_at(
    prep: &Circuit<f64>,
    h: &PauliSumHamiltonian<f64>,
    evolution: Evolution,
    spectrum: Option<&SpectralDecomposition>,
    t: f64,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<AmplitudeEstimate> {
    match evolution {
        Evolution::Trotter { .. } => amplitude_estimate(prep, &evolution.circuit(h, t)?, shots, noise, seed),
        Evolution::Exact => {
            let mut psi = State::zero(prep.n_qubits());
            psi.apply_circuit(prep)?;
            let p = psi.inner(&evolution.evolve(h, spectrum, &psi, t)?)?.norm_sqr().clamp(0.0, 1.0);
            let p_hat = match shots {
                Shots::Exact => p,
                Shots::Count(m) => binomial(&mut seed.rng(), m, p) as f64 / m as f64,
            };
            Ok(from_survival(p_hat, shots.count()))
        }
    }
}

struct GradientSample {
    amplitude: AmplitudeEstimate,
    gradient: std::result::Result<Estimate, String>,
    shots: u64,
    restarts: u64,
    circuits: u64,
}

fn run_gradient(
    cfg: &ExperimentConfig,
    h: &PauliSumHamiltonian<f64>,
    prep: &Circuit<f64>,
    seed: RngSeed,
    out: &mut RunOutput,
) -> Result<()> {
    if cfg.time.t_max == 0.0 {
        return Ok(());
    }
    let n = h.n_qubits();
    let method = cfg.gradient.method;
    let t_max = cfg.time.t_max;
    let grid_eps = match cfg.shots {
        ShotsConfig::Allocated { epsilon, .. } => epsilon,
        _ => cfg.gradient.epsilon,
    };
    let intervals = match cfg.gradient.n_intervals {
        Some(k) => k,
        None => choose_grid(n, t_max, grid_eps, method)?.0,
    };
    let scheme = IntegrationScheme::new(method, intervals)?;
    let eta = grid_eps / (intervals as f64).sqrt();
    out.grid = Some(scheme);
    out.eta = Some(eta);
    let times: Vec<f64> = scheme.grid(t_max);
    let evolution = cfg.evolution();
    let spectrum = match evolution {
        Evolution::Exact => {
            if n > MAX_ORACLE_QUBITS {
                return Err(Error::SystemTooLarge { n_qubits: n, cap: MAX_ORACLE_QUBITS });
            }
            Some(SpectralDecomposition::new(h)?)
        }
        Evolution::Trotter { .. } => None,
    };
    let spectrum = spectrum.as_ref();
    let noise = cfg.noise_model();
    if let (Some(nm), Evolution::Trotter { dt: max_dt }) = (noise, evolution) {
        let map = noise_time_map(h, max_dt, nm)?;
        let nt = times
            .iter()
            .map(|&t| if t == 0.0 { Ok(0.0) } else { Ok(map(noisy_gates(&evolution.circuit(h, t)?, nm))) })
            .collect::<Result<Vec<f64>>>()?;
        out.noise_times = Some(nt);
    }
    let tau = if cfg.protocol == Protocol::Ite { Some(cfg.ite.tau.resolve(h, t_max)?) } else { None };
    out.tau = tau;
    let k_terms = h.terms().len() as u64;
    let pilot_shots = match cfg.shots {
        ShotsConfig::Allocated { pilot, .. } => Some(pilot),
        _ => None,
    };

    let sample = |i: usize| -> Result<GradientSample> {
        let t = times[i];
        let s = seed.derive2(TAG_GRADIENT, i as u64);
        let mut spent = 0u64;
        let mut circuits = 0u64;
        // shots per quantity: (term or trajectory count, survival count)
        let (main, surv) = match (cfg.shots, pilot_shots) {
            (ShotsConfig::Exact, _) => (Shots::Exact, Shots::Exact),
            (ShotsConfig::Fixed { count }, _) => (Shots::Count(count), Shots::Count(count)),
            (ShotsConfig::Allocated { .. }, Some(pilot)) => {
                let a = survival_at(prep, h, evolution, spectrum, t, Shots::Count(pilot), noise, s.derive(TAG_PILOT))?;
                spent += pilot;
                circuits += 1;
                let p = a.p.value.max(1.0 / pilot as f64);
                match cfg.protocol {
                    Protocol::Dpg => {
                        let plan = allocate_shots_dpg(n, eta, p)?;
                        (Shots::Count(plan.per_term), Shots::Count(plan.survival))
                    }
                    _ => {
                        // (Δp/p)² ≈ (1 − q)/(qN) per sign, split η² evenly
                        let tau = tau.expect("ite has tau");
                        let q = p.min(1.0 - 1e-12);
                        let m = ((1.0 - q) / (q * 8.0 * tau * tau * eta * eta)).ceil().max(1.0) as u64;
                        (Shots::Count(m), Shots::Count(allocate_shots_dpg(n, eta, p)?.survival))
                    }
                }
            }
            (ShotsConfig::Allocated { .. }, None) => unreachable!(),
        };
        match cfg.protocol {
            Protocol::Dpg => {
                let pt = dpg_point(prep, h, evolution, spectrum, t, main, surv, noise, s)?;
                Ok(GradientSample {
                    amplitude: pt.amplitude,
                    gradient: pt.gradient,
                    shots: spent + pt.shots,
                    restarts: 0,
                    circuits: circuits + k_terms + 1,
                })
            }
            _ => {
                let amplitude = survival_at(prep, h, evolution, spectrum, t, surv, noise, s.derive(TAG_AMPLITUDE))?;
                let tau = tau.expect("ite has tau");
                let r = ite_gradient(prep, h, evolution, spectrum, t, tau, main, noise, s);
                let (gradient, attempts, restarts) = match r {
                    Ok(r) => (Ok(r.gradient), r.attempts, r.restarts),
                    Err(e) => (Err(e.to_string()), 0, 0),
                };
                Ok(GradientSample {
                    amplitude,
                    gradient,
                    shots: spent + attempts + surv.count().unwrap_or(0),
                    restarts,
                    circuits: circuits + 3,
                })
            }
        }
    };
    let samples: Vec<GradientSample> = if noise.is_some() {
        (0..times.len()).map(sample).collect::<Result<_>>()?
    } else {
        (0..times.len()).into_par_iter().map(sample).collect::<Result<_>>()?
    };

    let mut totals = ShotTotals::default();
    for s in &samples {
        totals.total += s.shots;
        totals.restarts += s.restarts;
        totals.circuits += s.circuits;
    }
    if let Some(p) = pilot_shots {
        totals.pilot = p * times.len() as u64;
    }
    let mut kept = samples.len();
    let mut truncated = None;
    for (i, s) in samples.iter().enumerate() {
        if let Err(e) = &s.gradient {
            kept = i;
            truncated = Some(Truncation { label: i, t: times[i], reason: e.clone() });
            break;
        }
    }
    let grads: Vec<f64> = samples[..kept].iter().map(|s| s.gradient.as_ref().expect("kept").value).collect();
    let sigmas: Vec<f64> = samples[..kept].iter().map(|s| s.gradient.as_ref().expect("kept").std).collect();
    let h_step = t_max / intervals as f64;
    let rows = cumulative_weights(kept, h_step, method);
    let mut series = EchoSeries::new(cfg.protocol.name(), cfg.seed);
    for (i, w) in rows.iter().enumerate().skip(1) {
        let phi = w.iter().zip(&grads).map(|(a, b)| a * b).sum();
        let dphi = w.iter().zip(&sigmas).map(|(a, s)| (a * s).powi(2)).sum::<f64>().sqrt();
        let a = samples[i].amplitude;
        series.entries.push(EchoPoint { label: i, t: times[i], r: a.r.value, phi, dr: a.r.std, dphi, proper: true });
    }
    series.truncated = truncated;
    series.shots = totals;
    if let Some(tau) = tau {
        let bound = 0.5 / h.one_norm().max(1e-300);
        if tau > bound {
            series.warnings.push(format!("tau = {tau} exceeds 0.5/Σ|λ| = {bound:.4}"));
        }
    }
    out.series = series;
    Ok(())
}
