//! Readout by inverse preparation and computational-basis projection, sampled
//! from exact outcome probabilities.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{binomial, multinomial, RngSeed};
use crate::scalar::{Real, C};

use super::circuit::Circuit;
use super::gate::Gate;
use super::state::State;

/// Which projector(s) a circuit ends in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Success iff the whole register is `|0…0⟩`.
    Projection,
    /// Outcomes `(ancilla = b, system = |0…0⟩)` for `b ∈ {0, 1}`; the
    /// ancilla is the last qubit.
    Ancilla,
}

impl Readout {
    /// Amplitude indices of the tracked outcomes.
    pub fn targets(self) -> &'static [usize] {
        match self {
            Readout::Projection => &[0],
            Readout::Ancilla => &[0, 1],
        }
    }

    /// Exact probabilities of the tracked outcomes; the rest of the mass is
    /// the "system projection failed" outcome.
    pub fn probabilities<T: Real>(self, state: &State<T>) -> Vec<f64> {
        self.targets().iter().map(|&i| state.probability(i).as_f64().clamp(0.0, 1.0)).collect()
    }

    /// Signed estimator value per shot for each tracked outcome.
    pub fn weights(self) -> &'static [f64] {
        match self {
            Readout::Projection => &[1.0],
            Readout::Ancilla => &[1.0, -1.0],
        }
    }

    pub fn estimate(self, counts: &[u64], shots: u64) -> f64 {
        let s: f64 = counts.iter().zip(self.weights()).map(|(&c, &w)| c as f64 * w).sum();
        s / shots as f64
    }

    /// Infinite-shot value of the estimator.
    pub fn expectation<T: Real>(self, state: &State<T>) -> f64 {
        self.probabilities(state).iter().zip(self.weights()).map(|(p, w)| p * w).sum()
    }
}

/// Ancilla measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    X,
    Y,
}

impl Basis {
    /// Rotation taking the basis eigenstates onto `|0⟩` (+1) and `|1⟩` (−1).
    pub fn rotation<T: Real>(self, qubit: usize) -> Vec<Gate<T>> {
        match self {
            Basis::X => vec![Gate::h(qubit)],
            Basis::Y => vec![Gate::sdg(qubit), Gate::h(qubit)],
        }
    }
}

/// Draw tracked-outcome counts from exact probabilities.
pub fn sample_counts<R: Rng + ?Sized>(rng: &mut R, shots: u64, probs: &[f64]) -> Vec<u64> {
    multinomial(rng, shots, probs)
}

/// Apply the inverse of `target_prep` and return the `|0…0⟩` probability.
pub fn projection_probability<T: Real>(state: &State<T>, target_prep: &Circuit<T>) -> Result<f64> {
    let mut s = state.clone();
    s.apply_circuit(&target_prep.inverse())?;
    Ok(Readout::Projection.probabilities(&s)[0])
}

/// Number of successful projections onto the prepared target out of `shots`.
pub fn sample_projection<T: Real>(
    state: &State<T>,
    target_prep: &Circuit<T>,
    shots: u64,
    seed: RngSeed,
) -> Result<u64> {
    if shots == 0 {
        return Err(Error::ZeroShots);
    }
    let p = projection_probability(state, target_prep)?;
    Ok(binomial(&mut seed.rng(), shots, p))
}

/// Rotate the ancilla (last qubit) into `basis`, undo the target preparation
/// on the system register and return the final register state.
fn rotated<T: Real>(state: &State<T>, target_prep: &Circuit<T>, basis: Basis) -> Result<State<T>> {
    let n = state.n_qubits();
    if n < 2 || target_prep.n_qubits() != n - 1 {
        return Err(Error::MissingAncilla);
    }
    let mut s = state.clone();
    for g in basis.rotation(n - 1) {
        s.apply_gate(&g)?;
    }
    s.apply_circuit(&target_prep.inverse())?;
    Ok(s)
}

/// Estimates of `⟨σ^x ⊗ |ψ⟩⟨ψ|⟩` and `⟨σ^y ⊗ |ψ⟩⟨ψ|⟩` from `shots_x` and
/// `shots_y` samples.
pub fn sample_ancilla_xy<T: Real>(
    state: &State<T>,
    target_prep: &Circuit<T>,
    shots_x: u64,
    shots_y: u64,
    seed: RngSeed,
) -> Result<(f64, f64)> {
    if shots_x == 0 || shots_y == 0 {
        return Err(Error::ZeroShots);
    }
    let mut out = [0.0; 2];
    for (k, (basis, shots)) in [(Basis::X, shots_x), (Basis::Y, shots_y)].into_iter().enumerate() {
        let s = rotated(state, target_prep, basis)?;
        let probs = Readout::Ancilla.probabilities(&s);
        let counts = sample_counts(&mut seed.derive(k as u64).rng(), shots, &probs);
        out[k] = Readout::Ancilla.estimate(&counts, shots);
    }
    Ok((out[0], out[1]))
}

/// Infinite-shot limit of [`sample_ancilla_xy`], read off the two amplitudes
/// `(anc = b, system = |0…0⟩)` before any basis rotation.
pub fn exact_ancilla_xy<T: Real>(state: &State<T>, target_prep: &Circuit<T>) -> Result<C<T>> {
    let n = state.n_qubits();
    if n < 2 || target_prep.n_qubits() != n - 1 {
        return Err(Error::MissingAncilla);
    }
    let mut s = state.clone();
    s.apply_circuit(&target_prep.inverse())?;
    let (a0, a1) = (s.amplitude(0), s.amplitude(1));
    Ok((a0.conj() * a1) * T::of(2.0))
}
