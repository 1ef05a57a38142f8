//! Direct phase gradient: `dφ/dt = −Σ_j λ_j a_j(t) / r(t)²` with
//! `a_j = Re(⟨ψ(t)|ψ⟩⟨ψ|P_j|ψ(t)⟩)` from one Hadamard test per term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PauliSumHamiltonian;
use crate::noise::{NoiseModel, NoisySampler};
use crate::oracle::SpectralDecomposition;
use crate::qsim::{Basis, Circuit, Gate, Readout, State};
use crate::rng::{binomial, multinomial, RngSeed};
use crate::scalar::{Real, C};

use super::common::{ancilla_probabilities, Estimate, Evolution, Shots};
use super::sht::{amplitude_estimate, from_survival, AmplitudeEstimate};

/// Shots per term estimate and per survival estimate at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpgShotPlan {
    pub per_term: u64,
    pub survival: u64,
}

/// `M_r = ceil(n²/(η²p))` and `M_a = ceil(n/(η²p²))` for per-point target
/// `η` on `n` qubits.
pub fn allocate_shots_dpg(n_qubits: usize, eta: f64, p: f64) -> Result<DpgShotPlan> {
    if !(eta > 0.0) || !(p > 0.0) {
        return Err(Error::InvalidArgument(format!("need eta > 0 and p > 0, got {eta}, {p}")));
    }
    let n = n_qubits as f64;
    let cap = |x: f64| if x >= u64::MAX as f64 { u64::MAX } else { (x.ceil() as u64).max(1) };
    Ok(DpgShotPlan { survival: cap(n * n / (eta * eta * p)), per_term: cap(n / (eta * eta * p * p)) })
}

fn term_circuit<T: Real>(prep: &Circuit<T>, evolution: &Circuit<T>, term: &Gate<T>) -> Result<Circuit<T>> {
    let n = prep.n_qubits();
    let mut c = Circuit::new(n + 1);
    c.push(Gate::h(n))?;
    c.extend(&prep.widened(n + 1)?)?;
    c.extend(&evolution.widened(n + 1)?)?;
    c.push(term.clone().controlled(n)?)?;
    c.extend(&prep.inverse().widened(n + 1)?)?;
    Ok(c)
}

fn x_bras<T: Real>(n_total: usize) -> Result<Vec<State<T>>> {
    (0..2)
        .map(|b| {
            let mut s = State::basis(n_total, b);
            s.apply_gate(&Gate::h(n_total - 1))?;
            Ok(s)
        })
        .collect()
}

/// Sample-mean estimate of `a_j` from ancilla counts: `Δa² = (n_succ/M − â²)/M`.
fn term_from_counts(counts: &[u64], m: u64) -> Estimate {
    let a = Readout::Ancilla.estimate(counts, m);
    let succ = (counts[0] + counts[1]) as f64 / m as f64;
    Estimate { value: a, std: ((succ - a * a).max(0.0) / m as f64).sqrt() }
}

/// Estimate of `a_j(t)` for term `j`. With `Evolution::Exact` the state is
/// evolved densely and only noiseless runs are possible.
#[allow(clippy::too_many_arguments)]
pub fn dpg_term<T: Real>(
    prep: &Circuit<T>,
    h: &PauliSumHamiltonian<T>,
    evolution: Evolution,
    spectrum: Option<&SpectralDecomposition>,
    t: f64,
    j: usize,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<Estimate> {
    shots.check()?;
    let term = h
        .terms()
        .get(j)
        .ok_or_else(|| Error::InvalidArgument(format!("term index {j} out of range")))?;
    match noise.filter(|m| !m.is_noiseless()) {
        Some(model) => {
            let m = shots.count().ok_or_else(|| Error::InvalidArgument("noisy runs need a finite shot count".into()))?;
            let c = term_circuit(prep, &evolution.circuit(h, t)?, &Gate::pauli(&term.string)?)?;
            let n_total = c.n_qubits();
            let sampler = NoisySampler::new(&c, State::zero(n_total), *model)?;
            let counts = sampler.sample(&x_bras(n_total)?, m, seed)?;
            Ok(term_from_counts(&counts, m))
        }
        None => {
            let (psi, psi_t) = evolved(prep, h, evolution, spectrum, t)?;
            let u = psi.inner(&psi_t)?;
            let mut p_psi = psi.clone();
            p_psi.apply_pauli(&term.string)?;
            Ok(sample_term(u, p_psi.inner(&psi_t)?, shots, seed))
        }
    }
}

fn evolved<T: Real>(
    prep: &Circuit<T>,
    h: &PauliSumHamiltonian<T>,
    evolution: Evolution,
    spectrum: Option<&SpectralDecomposition>,
    t: f64,
) -> Result<(State<T>, State<T>)> {
    let mut psi = State::zero(prep.n_qubits());
    psi.apply_circuit(prep)?;
    let psi_t = evolution.evolve(h, spectrum, &psi, t)?;
    Ok((psi, psi_t))
}

/// `u = ⟨ψ|ψ(t)⟩`, `v = ⟨ψ|P|ψ(t)⟩`; the ancilla amplitudes are `u/√2`
/// and `v/√2`.
fn sample_term<T: Real>(u: C<T>, v: C<T>, shots: Shots, seed: RngSeed) -> Estimate {
    match shots {
        Shots::Exact => Estimate { value: (u.conj() * v).re.as_f64(), std: 0.0 },
        Shots::Count(m) => {
            let s = T::of(std::f64::consts::FRAC_1_SQRT_2);
            let probs = ancilla_probabilities(u * s, v * s, Basis::X);
            term_from_counts(&multinomial(&mut seed.rng(), m, &probs), m)
        }
    }
}

/// `φ' = −Σ λ_j a_j / p` with
/// `Var φ' = Σ λ_j² Δa_j² / p² + φ'² Δp² / p²`.
pub fn dpg_gradient(a_hats: &[Estimate], lambdas: &[f64], p_hat: Estimate) -> Result<Estimate> {
    if a_hats.len() != lambdas.len() {
        return Err(Error::InvalidArgument(format!("{} term estimates for {} coefficients", a_hats.len(), lambdas.len())));
    }
    let p = p_hat.value;
    if !(p > 0.0) || p < 3.0 * p_hat.std {
        return Err(Error::AmplitudeLost {
            step: 0,
            detail: format!("survival {p:.3e} not resolved from zero (std {:.3e})", p_hat.std),
        });
    }
    let g = -a_hats.iter().zip(lambdas).map(|(a, l)| l * a.value).sum::<f64>() / p;
    let var_a: f64 = a_hats.iter().zip(lambdas).map(|(a, l)| (l * a.std).powi(2)).sum::<f64>() / (p * p);
    let var_p = (g * p_hat.std / p).powi(2);
    Ok(Estimate { value: g, std: (var_a + var_p).sqrt() })
}

/// All term estimates, the survival and the gradient at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpgPoint {
    pub t: f64,
    pub terms: Vec<Estimate>,
    pub amplitude: AmplitudeEstimate,
    pub gradient: Result<Estimate, String>,
    /// Circuit repetitions spent.
    pub shots: u64,
}

/// Gradient at `t`, sharing the evolved state across terms in noiseless
/// runs. `seed.derive(j)` drives term `j`; the survival uses
/// `seed.derive(u64::MAX)`.
#[allow(clippy::too_many_arguments)]
pub fn dpg_point<T: Real>(
    prep: &Circuit<T>,
    h: &PauliSumHamiltonian<T>,
    evolution: Evolution,
    spectrum: Option<&SpectralDecomposition>,
    t: f64,
    term_shots: Shots,
    survival_shots: Shots,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<DpgPoint> {
    term_shots.check()?;
    survival_shots.check()?;
    let noise = noise.filter(|m| !m.is_noiseless());
    let k = h.terms().len();
    let (terms, amplitude) = match noise {
        Some(_) => {
            let terms = (0..k)
                .map(|j| dpg_term(prep, h, evolution, spectrum, t, j, term_shots, noise, seed.derive(j as u64)))
                .collect::<Result<Vec<_>>>()?;
            let amp = amplitude_estimate(prep, &evolution.circuit(h, t)?, survival_shots, noise, seed.derive(u64::MAX))?;
            (terms, amp)
        }
        None => {
            let (psi, psi_t) = evolved(prep, h, evolution, spectrum, t)?;
            let u = psi.inner(&psi_t)?;
            let mut terms = Vec::with_capacity(k);
            for (j, term) in h.terms().iter().enumerate() {
                let mut p_psi = psi.clone();
                p_psi.apply_pauli(&term.string)?;
                terms.push(sample_term(u, p_psi.inner(&psi_t)?, term_shots, seed.derive(j as u64)));
            }
            let p = u.norm_sqr().as_f64().clamp(0.0, 1.0);
            let p_hat = match survival_shots {
                Shots::Exact => p,
                Shots::Count(m) => binomial(&mut seed.derive(u64::MAX).rng(), m, p) as f64 / m as f64,
            };
            (terms, from_survival(p_hat, survival_shots.count()))
        }
    };
    let lambdas: Vec<f64> = h.coefficients().iter().map(|c| c.as_f64()).collect();
    let gradient = dpg_gradient(&terms, &lambdas, amplitude.p).map_err(|e| e.to_string());
    let shots = term_shots.count().unwrap_or(0) * k as u64 + survival_shots.count().unwrap_or(0);
    Ok(DpgPoint { t, terms, amplitude, gradient, shots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Term;
    use crate::qsim::{Pauli, PauliString};

    fn single_z(lambda: f64) -> PauliSumHamiltonian<f64> {
        PauliSumHamiltonian::new(1, vec![Term { coefficient: lambda, string: PauliString::single(1, 0, Pauli::Z).unwrap() }])
            .unwrap()
    }

    #[test]
    fn term_at_time_zero_is_an_expectation() {
        let h = single_z(0.8);
        let e = Circuit::new(1);
        let ev = Evolution::Trotter { dt: 0.1 };
        let a = dpg_term(&e, &h, ev, None, 0.0, 0, Shots::Exact, None, RngSeed(0)).unwrap();
        assert_eq!(a.value, 1.0);
        let plus = Circuit::from_gates(1, vec![Gate::h(0)]).unwrap();
        let a = dpg_term(&plus, &h, ev, None, 0.0, 0, Shots::Exact, None, RngSeed(0)).unwrap();
        assert!(a.value.abs() < 1e-15);
    }

    #[test]
    fn eigenstate_gradient_is_minus_energy() {
        let h = single_z(0.8);
        let spec = SpectralDecomposition::new(&h).unwrap();
        let p = dpg_point(&Circuit::new(1), &h, Evolution::Exact, Some(&spec), 1.3, Shots::Exact, Shots::Exact, None, RngSeed(0))
            .unwrap();
        assert!((p.gradient.unwrap().value + 0.8).abs() < 1e-14);
    }

    #[test]
    fn zero_terms_give_zero_gradient() {
        let a = [Estimate { value: 0.0, std: 0.1 }; 3];
        let g = dpg_gradient(&a, &[1.0, 2.0, 2.0], Estimate { value: 1.0, std: 0.0 }).unwrap();
        assert_eq!(g.value, 0.0);
        assert!((g.std - 0.3).abs() < 1e-15);
        assert!(dpg_gradient(&a, &[1.0; 3], Estimate { value: 0.01, std: 0.01 }).is_err());
    }
}
