//! Imaginary-time phase gradient: `φ' = [ln r(t−iτ) − ln r(t+iτ)]/2τ`, with
//! `e^{±Hτ}` realized term by term through postselected one-ancilla block
//! encodings.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PauliSumHamiltonian;
use crate::noise::NoiseModel;
use crate::oracle::SpectralDecomposition;
use crate::qsim::{Circuit, Gate, PauliString, State};
use crate::rng::{binomial, RngSeed};
use crate::scalar::{cplx, Real};

use super::common::{apply_noisy, Estimate, Evolution, Shots, Sign};

/// How the imaginary-time step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "rule")]
pub enum TauRule {
    /// `min(0.05, 0.5/Σ|λ_j|)`
    #[default]
    Default,
    Fixed { tau: f64 },
    /// Small enough that the finite-difference bias, integrated to `t_max`,
    /// stays below `epsilon` (calibrated on the Ising family, not certified).
    Accuracy { epsilon: f64 },
}

pub fn default_tau<T: Real>(h: &PauliSumHamiltonian<T>) -> f64 {
    let norm = h.one_norm().as_f64();
    if norm > 0.0 {
        0.05f64.min(0.5 / norm)
    } else {
        0.05
    }
}

impl TauRule {
    pub fn resolve<T: Real>(&self, h: &PauliSumHamiltonian<T>, t_max: f64) -> Result<f64> {
        let tau = match *self {
            TauRule::Default => default_tau(h),
            TauRule::Fixed { tau } => tau,
            TauRule::Accuracy { epsilon } => {
                if !(epsilon > 0.0) {
                    return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
                }
                // the central difference is off by O(τ²κ₃) per unit time, with
                // κ₃ bounded by ‖H‖₁·max|λ|²
                let norm = h.one_norm().as_f64().max(1e-300);
                let top = h.coefficients().iter().fold(0.0f64, |m, c| m.max(c.as_f64().abs())).max(1e-300);
                default_tau(h).min((epsilon / (t_max.max(1.0) * norm * top * top)).sqrt())
            }
        };
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(tau)
    }
}

/// Per-term block-encoding angles for one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItePlan {
    pub tau: f64,
    pub sign: Sign,
    /// `(λ_j, P_j)` in application order.
    pub terms: Vec<(f64, PauliString)>,
    /// `θ_j` with `cos²(θ_j/2) = e^{−|λ_j|τ} cosh(λ_j τ)`.
    pub angles: Vec<f64>,
    /// `sign · sgn(λ_j)`: the sign in front of `P_j` in the encoded map.
    pub term_signs: Vec<f64>,
    /// `e^{τ Σ|λ_j|}`
    pub rescale_factor: f64,
}

/// Terms are taken in the Hamiltonian's canonical (ascending Pauli string)
/// order for both signs.
pub fn ite_plan<T: Real>(h: &PauliSumHamiltonian<T>, tau: f64, sign: Sign) -> Result<ItePlan> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let terms: Vec<(f64, PauliString)> = h.terms().iter().map(|t| (t.coefficient.as_f64(), t.string.clone())).collect();
    let angles = terms
        .iter()
        .map(|(l, _)| {
            let c2 = (-l.abs() * tau).exp() * (l * tau).cosh();
            2.0 * c2.clamp(0.0, 1.0).sqrt().acos()
        })
        .collect();
    let term_signs = terms.iter().map(|(l, _)| if *l < 0.0 { -sign.value() } else { sign.value() }).collect();
    let one_norm: f64 = terms.iter().map(|(l, _)| l.abs()).sum();
    Ok(ItePlan { tau, sign, terms, angles, term_signs, rescale_factor: (tau * one_norm).exp() })
}

impl ItePlan {
    /// `cos²(θ_j/2)` and `sin²(θ_j/2)` of term `j`.
    pub fn weights(&self, j: usize) -> (f64, f64) {
        let h = self.angles[j] / 2.0;
        (h.cos().powi(2), h.sin().powi(2))
    }

    /// `R_y(θ)`, controlled `P_j`, `R_y(∓θ)` on the ancilla (last qubit of
    /// an `n + 1` register); postselecting the ancilla on `|0⟩` leaves
    /// `cos²(θ/2) 𝕀 ± sin²(θ/2) P_j`.
    pub fn block_circuit<T: Real>(&self, j: usize, n: usize) -> Result<Circuit<T>> {
        let (_, p) = &self.terms[j];
        let theta = self.angles[j];
        let mut c = Circuit::new(n + 1);
        c.push(Gate::ry(n, T::of(theta)))?;
        c.push(Gate::pauli(p)?.controlled(n)?)?;
        c.push(Gate::ry(n, T::of(-self.term_signs[j] * theta)))?;
        Ok(c)
    }

    /// The whole postselected map applied algebraically (unnormalized):
    /// `Π_j [cos²(θ_j/2) 𝕀 ± sin²(θ_j/2) P_j] |ψ⟩`.
    pub fn apply_map<T: Real>(&self, state: &State<T>) -> Result<State<T>> {
        let mut s = state.clone();
        for (j, (_, p)) in self.terms.iter().enumerate() {
            let (c2, s2) = self.weights(j);
            let mut ps = s.clone();
            ps.apply_pauli(p)?;
            s.scale(cplx(T::of(c2), T::zero()));
            s.add_scaled(&ps, cplx(T::of(self.term_signs[j] * s2), T::zero()))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IteTrajectory<T: Real> {
    /// Normalized output on success, the state at the failing term otherwise.
    pub state: State<T>,
    pub success: bool,
    /// Product of the per-term postselection probabilities so far.
    pub probability: f64,
    /// Index of the term whose ancilla heralded failure.
    pub failed_at: Option<usize>,
}

fn run_blocks<T: Real, R: Rng + ?Sized>(
    state: &State<T>,
    plan: &ItePlan,
    noise: Option<&NoiseModel>,
    rng: &mut R,
) -> Result<IteTrajectory<T>> {
    let n = state.n_qubits();
    let mut s = state.clone();
    s.normalize();
    let mut prob = 1.0;
    for j in 0..plan.terms.len() {
        let block = plan.block_circuit::<T>(j, n)?;
        let mut reg = s.with_ancilla();
        match noise {
            Some(m) => apply_noisy(&mut reg, &block, m, rng)?,
            None => reg.apply_circuit(&block)?,
        }
        let kept = reg.project_last(0)?;
        let p = (kept.norm_squared() / reg.norm_squared()).as_f64().clamp(0.0, 1.0);
        if rng.random::<f64>() >= p {
            return Ok(IteTrajectory { state: s, success: false, probability: prob, failed_at: Some(j) });
        }
        prob *= p;
        s = kept;
        s.normalize();
    }
    Ok(IteTrajectory { state: s, success: true, probability: prob, failed_at: None })
}

/// One attempt through all block encodings, each with a fresh ancilla
/// measured right away; stops at the first failure.
pub fn apply_ite_trajectory<T: Real>(state: &State<T>, plan: &ItePlan, seed: RngSeed) -> Result<IteTrajectory<T>> {
    run_blocks(state, plan, None, &mut seed.rng())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IteResult {
    pub gradient: Estimate,
    /// `|g(t + iτ)|²` estimate.
    pub p_plus: Estimate,
    /// `|g(t − iτ)|²` estimate.
    pub p_minus: Estimate,
    /// All attempts over both signs, failed ones included.
    pub attempts: u64,
    pub restarts: u64,
}

/// Estimate of `|g(t ∓ iτ)|²` for one sign with `shots` successful
/// trajectories. Returns `(estimate, attempts)`.
#[allow(clippy::too_many_arguments)]
fn survival<T: Real>(
    psi: &State<T>,
    prep: &Circuit<T>,
    h: &PauliSumHamiltonian<T>,
    evolution: Evolution,
    spectrum: Option<&SpectralDecomposition>,
    t: f64,
    plan: &ItePlan,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<(Estimate, u64)> {
    let r2 = plan.rescale_factor * plan.rescale_factor;
    if let Some(model) = noise {
        let m = shots.count().ok_or_else(|| Error::InvalidArgument("noisy runs need a finite shot count".into()))?;
        let mut tail = evolution.circuit(h, t)?;
        tail.extend(&prep.inverse())?;
        let n = prep.n_qubits();
        const CHUNK: u64 = 64;
        let chunks = m.div_ceil(CHUNK);
        let parts: Vec<Result<(u64, u64)>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let want = CHUNK.min(m - c * CHUNK);
                let mut rng = seed.derive(c).rng();
                let (mut got, mut attempts, mut hits) = (0u64, 0u64, 0u64);
                while got < want {
                    attempts += 1;
                    let mut s = State::zero(n);
                    apply_noisy(&mut s, prep, model, &mut rng)?;
                    let traj = run_blocks(&s, plan, Some(model), &mut rng)?;
                    if !traj.success {
                        continue;
                    }
                    got += 1;
                    let mut out = traj.state;
                    apply_noisy(&mut out, &tail, model, &mut rng)?;
                    let p0 = (out.probability(0) / out.norm_squared()).as_f64();
                    if rng.random::<f64>() < p0 {
                        hits += 1;
                    }
                }
                Ok((attempts, hits))
            })
            .collect();
        let (mut attempts, mut hits) = (0u64, 0u64);
        for p in parts {
            let (a, k) = p?;
            attempts += a;
            hits += k;
        }
        let q = hits as f64 / attempts as f64;
        let dq = (q * (1.0 - q) / attempts as f64).sqrt();
        return Ok((Estimate { value: r2 * q, std: r2 * dq }, attempts));
    }
    let phi = plan.apply_map(psi)?;
    let p_succ = phi.norm_squared().as_f64();
    let overlap = psi.inner(&evolution.evolve(h, spectrum, &phi, t)?)?.norm_sqr().as_f64();
    match shots {
        Shots::Exact => Ok((Estimate { value: r2 * overlap, std: 0.0 }, 0)),
        Shots::Count(m) => {
            if !(p_succ > 1e-12) {
                return Err(Error::AmplitudeLost { step: 0, detail: format!("postselection probability {p_succ:.3e}") });
            }
            let mut rng = seed.rng();
            let mut failures = 0u64;
            if p_succ < 1.0 {
                let geo = Geometric::new(p_succ).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                for _ in 0..m {
                    failures += geo.sample(&mut rng);
                }
            }
            let attempts = m + failures;
            let hits = binomial(&mut rng, m, (overlap / p_succ).clamp(0.0, 1.0));
            let q = hits as f64 / attempts as f64;
            let dq = (q * (1.0 - q) / attempts as f64).sqrt();
            Ok((Estimate { value: r2 * q, std: r2 * dq }, attempts))
        }
    }
}

/// Finite-difference gradient from both imaginary-time directions. `shots`
/// counts successful trajectories per sign.
#[allow(clippy::too_many_arguments)]
pub fn ite_gradient<T: Real>(
    prep: &Circuit<T>,
    h: &PauliSumHamiltonian<T>,
    evolution: Evolution,
    spectrum: Option<&SpectralDecomposition>,
    t: f64,
    tau: f64,
    shots: Shots,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<IteResult> {
    shots.check()?;
    let noise = noise.filter(|m| !m.is_noiseless());
    let mut psi = State::zero(prep.n_qubits());
    psi.apply_circuit(prep)?;
    let mut est = [Estimate { value: 0.0, std: 0.0 }; 2];
    let mut attempts = 0u64;
    for (k, sign) in [Sign::Plus, Sign::Minus].into_iter().enumerate() {
        let plan = ite_plan(h, tau, sign)?;
        let (e, a) = survival(&psi, prep, h, evolution, spectrum, t, &plan, shots, noise, seed.derive(k as u64))?;
        if !(e.value > 0.0) || e.value < 3.0 * e.std {
            return Err(Error::AmplitudeLost {
                step: 0,
                detail: format!("complex-time survival {:.3e} not resolved (sign {sign:?})", e.value),
            });
        }
        est[k] = e;
        attempts += a;
    }
    let [pp, pm] = est;
    let g = (pm.value.ln() - pp.value.ln()) / (4.0 * tau);
    let std = ((pp.std / pp.value).powi(2) + (pm.std / pm.value).powi(2)).sqrt() / (4.0 * tau);
    let successes = shots.count().map_or(0, |m| 2 * m);
    Ok(IteResult {
        gradient: Estimate { value: g, std },
        p_plus: pp,
        p_minus: pm,
        attempts,
        restarts: attempts.saturating_sub(successes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Term;
    use crate::qsim::Pauli;

    fn single_z(lambda: f64) -> PauliSumHamiltonian<f64> {
        PauliSumHamiltonian::new(1, vec![Term { coefficient: lambda, string: PauliString::single(1, 0, Pauli::Z).unwrap() }])
            .unwrap()
    }

    #[test]
    fn angles_and_rescale() {
        let h = single_z(2.0);
        let plan = ite_plan(&h, 0.05, Sign::Plus).unwrap();
        let (c2, s2) = plan.weights(0);
        assert!((c2 - (-0.1f64).exp() * 0.1f64.cosh()).abs() < 1e-14);
        assert!((c2 + s2 - 1.0).abs() < 1e-15);
        assert!((plan.rescale_factor - 0.1f64.exp()).abs() < 1e-15);
        assert!(ite_plan(&h, 0.0, Sign::Plus).is_err());
    }

    #[test]
    fn eigenstate_block_and_gradient() {
        let h = single_z(-0.7);
        let plan = ite_plan(&h, 0.1, Sign::Plus).unwrap();
        let out = plan.apply_map(&State::<f64>::zero(1)).unwrap();
        // (λ − |λ|)τ = −0.14
        assert!((out.amplitude(0).re - (-0.14f64).exp()).abs() < 1e-14);
        let h = single_z(0.8);
        let spec = SpectralDecomposition::new(&h).unwrap();
        let r = ite_gradient(&Circuit::new(1), &h, Evolution::Exact, Some(&spec), 0.7, 0.03, Shots::Exact, None, RngSeed(1))
            .unwrap();
        assert!((r.gradient.value + 0.8).abs() < 1e-12);
    }

    #[test]
    fn gate_level_trajectory_matches_algebraic_map() {
        let h = crate::model::case_study_family::<f64>(3, 0.5).unwrap();
        let mut psi = State::zero(3);
        psi.apply_gate(&Gate::ry(0, 0.4)).unwrap();
        psi.apply_gate(&Gate::ry(2, 1.1)).unwrap();
        let plan = ite_plan(&h, 0.02, Sign::Minus).unwrap();
        let mut target = plan.apply_map(&psi).unwrap();
        let p = target.norm_squared();
        target.normalize();
        for s in 0..20 {
            let tr = apply_ite_trajectory(&psi, &plan, RngSeed(s)).unwrap();
            if tr.success {
                assert!((tr.probability - p).abs() < 1e-12);
                assert!((1.0 - target.inner(&tr.state).unwrap().norm_sqr()).abs() < 1e-12);
            }
        }
    }
}
