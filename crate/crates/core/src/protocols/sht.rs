//! Sequential Hadamard test: one controlled local gate per circuit, phase
//! increments telescoped into the echo phase.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoisySampler};
use crate::qsim::{Basis, Circuit, Gate, Readout, State};
use crate::rng::{binomial, multinomial, RngSeed};
use crate::scalar::{Real, C};
use crate::series::{EchoPoint, EchoSeries, Truncation};

use super::common::{ancilla_probabilities, binomial_std, Estimate, Shots};

/// The register for one step: ancilla in `|+⟩`, `prep`, `prefix`, the new
/// gate controlled on the ancilla, `suffix`, then the inverse preparation.
fn step_circuit<T: Real>(prep: &Circuit<T>, prefix: &Circuit<T>, gate: &Gate<T>, suffix: &Circuit<T>) -> Result<Circuit<T>> {
    let n = prep.n_qubits();
    for c in [prefix, suffix] {
        if c.n_qubits() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.n_qubits() });
        }
    }
    if gate.max_qubit() >= n {
        return Err(Error::QubitOutOfRange { index: gate.max_qubit(), n_qubits: n });
    }
    let mut c = Circuit::new(n + 1);
    c.push(Gate::h(n))?;
    c.extend(&prep.widened(n + 1)?)?;
    c.extend(&prefix.widened(n + 1)?)?;
    c.push(gate.clone().controlled(n)?)?;
    c.extend(&suffix.widened(n + 1)?)?;
    c.extend(&prep.inverse().widened(n + 1)?)?;
    Ok(c)
}

/// Readout states `R†|0…0, b⟩` for the basis rotation `R` on the ancilla.
fn basis_bras<T: Real>(n_total: usize, basis: Basis) -> Result<Vec<State<T>>> {
    let rot = basis.rotation::<T>(n_total - 1);
    (0..2)
        .map(|b| {
            let mut s = State::basis(n_total, b);
            for g in rot.iter().rev() {
                s.apply_gate(&g.dagger())?;
            }
            Ok(s)
        })
        .collect()
}

/// Estimates of `Re(g_L g*_{L−1})` and `Im(g_L g*_{L−1})` where
/// `U_{L−1} = suffix·prefix` and `U_L = suffix·gate·prefix`. With
/// `Shots::Count(m)`, `m` shots are spent in each basis.
pub fn sht_step<T: Real>(
    prep: &Circuit<T>,
    prefix: &Circuit<T>,
    new_gate: &Gate<T>,
    suffix: &Circuit<T>,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<(f64, f64)> {
    shots.check()?;
    let circuit = step_circuit(prep, prefix, new_gate, suffix)?;
    let n_total = circuit.n_qubits();
    let noise = noise.filter(|m| !m.is_noiseless());
    match (shots, noise) {
        (Shots::Exact, Some(_)) => Err(Error::InvalidArgument("noisy runs need a finite shot count".into())),
        (Shots::Exact, None) => {
            let mut s = State::zero(n_total);
            s.apply_circuit(&circuit)?;
            let z: C<T> = s.amplitude(0).conj() * s.amplitude(1) * T::of(2.0);
            Ok((z.re.as_f64(), z.im.as_f64()))
        }
        (Shots::Count(m), None) => {
            let mut s = State::zero(n_total);
            s.apply_circuit(&circuit)?;
            let mut out = [0.0; 2];
            for (k, basis) in [Basis::X, Basis::Y].into_iter().enumerate() {
                let probs = ancilla_probabilities(s.amplitude(0), s.amplitude(1), basis);
                let counts = multinomial(&mut seed.derive(k as u64).rng(), m, &probs);
                out[k] = Readout::Ancilla.estimate(&counts, m);
            }
            Ok((out[0], out[1]))
        }
        (Shots::Count(m), Some(model)) => {
            let sampler = NoisySampler::new(&circuit, State::zero(n_total), *model)?;
            let mut out = [0.0; 2];
            for (k, basis) in [Basis::X, Basis::Y].into_iter().enumerate() {
                let counts = sampler.sample(&basis_bras(n_total, basis)?, m, seed.derive(k as u64))?;
                out[k] = Readout::Ancilla.estimate(&counts, m);
            }
            Ok((out[0], out[1]))
        }
    }
}

/// Survival probability `p = |⟨ψ|U|ψ⟩|²` by inverse preparation and
/// projection, with `r = √p` and its delta-method uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeEstimate {
    pub p: Estimate,
    pub r: Estimate,
    pub shots: Option<u64>,
}

pub fn amplitude_estimate<T: Real>(
    prep: &Circuit<T>,
    evolution: &Circuit<T>,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<AmplitudeEstimate> {
    shots.check()?;
    let mut c = prep.clone();
    c.extend(evolution)?;
    c.extend(&prep.inverse())?;
    let n = c.n_qubits();
    let noise = noise.filter(|m| !m.is_noiseless());
    let p_hat = match (shots, noise) {
        (Shots::Exact, Some(_)) => return Err(Error::InvalidArgument("noisy runs need a finite shot count".into())),
        (Shots::Exact, None) | (Shots::Count(_), None) => {
            let mut s = State::zero(n);
            s.apply_circuit(&c)?;
            let p = s.probability(0).as_f64().clamp(0.0, 1.0);
            match shots {
                Shots::Exact => p,
                Shots::Count(m) => binomial(&mut seed.rng(), m, p) as f64 / m as f64,
            }
        }
        (Shots::Count(m), Some(model)) => {
            let sampler = NoisySampler::new(&c, State::zero(n), *model)?;
            sampler.sample(&[State::basis(n, 0)], m, seed)?[0] as f64 / m as f64
        }
    };
    Ok(from_survival(p_hat, shots.count()))
}

pub(crate) fn from_survival(p: f64, shots: Option<u64>) -> AmplitudeEstimate {
    let r = p.max(0.0).sqrt();
    let (dp, dr) = match shots {
        None => (0.0, 0.0),
        Some(m) => {
            let dp = binomial_std(p, m);
            // one count's worth when nothing survived
            let dr = if r > 0.0 { dp / (2.0 * r) } else { 1.0 / (m as f64).sqrt() };
            (dp, dr)
        }
    };
    AmplitudeEstimate { p: Estimate { value: p, std: dp }, r: Estimate { value: r, std: dr }, shots }
}

/// Everything measured at one step of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShtMeasurement {
    pub label: usize,
    pub t: f64,
    pub proper: bool,
    pub x: f64,
    pub y: f64,
    /// Shots per basis, `None` in the infinite-shot limit.
    pub shots: Option<u64>,
    pub amplitude: AmplitudeEstimate,
}

/// Per-step shot counts from the amplitude estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotPlan {
    /// `M_l` for `l = 1..=L`.
    pub per_step: Vec<u64>,
    pub epsilon: f64,
    pub total: u64,
    /// `(L/(ε·r_min))²`
    pub bound: f64,
}

/// `M_l = ceil(L (1/r²_{l−1} + 1/r²_l) / 2ε²)` with `r_0 = 1`;
/// `r_estimates[l − 1]` is `r̂_l`.
pub fn allocate_shots_sht(r_estimates: &[f64], l_max: usize, epsilon: f64) -> Result<ShotPlan> {
    if r_estimates.len() != l_max {
        return Err(Error::InvalidArgument(format!("{} amplitude estimates for {l_max} steps", r_estimates.len())));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if let Some(r) = r_estimates.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::InvalidArgument(format!("amplitude estimate {r} is not positive")));
    }
    let l = l_max as f64;
    let mut prev = 1.0f64;
    let mut per_step = Vec::with_capacity(l_max);
    for &r in r_estimates {
        let m = (l * (1.0 / (prev * prev) + 1.0 / (r * r)) / (2.0 * epsilon * epsilon)).ceil();
        per_step.push((m as u64).max(1));
        prev = r;
    }
    let r_min = r_estimates.iter().copied().fold(1.0, f64::min);
    Ok(ShotPlan {
        total: per_step.iter().sum(),
        per_step,
        epsilon,
        bound: (l / (epsilon * r_min)).powi(2),
    })
}

/// Magnitudes from the telescoped products alone: `r_L = |z_L| / r_{L−1}`,
/// `r_0 = 1`.
pub fn recursive_magnitudes(steps: &[(f64, f64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(steps.len());
    let mut prev = 1.0f64;
    for &(x, y) in steps {
        let r = x.hypot(y) / prev;
        out.push(r);
        prev = r;
    }
    out
}

/// Assemble the series: `δφ_l = atan2(y_l, x_l)`, `φ_L = Σ_{l≤L} δφ_l`,
/// amplitudes from the separate survival measurements. Stops at the first
/// step whose product `x + iy` is not resolved from zero.
pub fn sht_reconstruct(measurements: &[ShtMeasurement], protocol: &str, seed: u64) -> EchoSeries {
    let mut series = EchoSeries::new(protocol, seed);
    let mut phi = 0.0f64;
    let mut var = 0.0f64;
    let mut r_prev = 1.0f64;
    for m in measurements {
        let mag = m.x.hypot(m.y);
        let threshold = match m.shots {
            None => 1e-12,
            Some(shots) => 3.0 / (shots as f64).sqrt(),
        };
        let r = m.amplitude.r.value;
        if mag < threshold {
            series.truncated = Some(Truncation {
                label: m.label,
                t: m.t,
                reason: Error::UnresolvablePhase { step: m.label, magnitude: mag, threshold }.to_string(),
            });
            break;
        }
        if m.shots.is_some() && !(r > 0.0) {
            series.truncated = Some(Truncation {
                label: m.label,
                t: m.t,
                reason: Error::AmplitudeLost { step: m.label, detail: "no survivals in the projection".into() }
                    .to_string(),
            });
            break;
        }
        phi += m.y.atan2(m.x);
        if let Some(shots) = m.shots {
            var += (1.0 / (r_prev * r_prev) + 1.0 / (r * r)) / (2.0 * shots as f64);
        }
        series.entries.push(EchoPoint {
            label: m.label,
            t: m.t,
            r,
            phi,
            dr: m.amplitude.r.std,
            dphi: var.sqrt(),
            proper: m.proper,
        });
        r_prev = r;
    }
    series
}
