use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{trotter2_evolution, PauliSumHamiltonian};
use crate::noise::{depolarize_after_gate, NoiseModel};
use crate::oracle::SpectralDecomposition;
use crate::qsim::{Basis, Circuit, State};
use crate::scalar::{cplx, Real, C};

/// Direction of imaginary-time evolution: `Plus` applies `e^{+Hτ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Number of repetitions behind one estimate, or the infinite-shot limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Exact,
    Count(u64),
}

impl Shots {
    pub fn count(self) -> Option<u64> {
        match self {
            Shots::Exact => None,
            Shots::Count(m) => Some(m),
        }
    }

    pub(crate) fn check(self) -> Result<()> {
        match self {
            Shots::Count(0) => Err(Error::ZeroShots),
            _ => Ok(()),
        }
    }
}

/// A value with its standard uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std: f64,
}

/// How `e^{-iHt}` is realized for the gradient methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Evolution {
    /// Second-order Trotter circuit with steps no longer than `dt`.
    Trotter { dt: f64 },
    /// Dense spectral propagator (small systems, noiseless only).
    Exact,
}

impl Evolution {
    pub(crate) fn circuit<T: Real>(&self, h: &PauliSumHamiltonian<T>, t: f64) -> Result<Circuit<T>> {
        match *self {
            Evolution::Trotter { dt } => trotter2_evolution(h, T::of(t), T::of(dt)),
            Evolution::Exact => Err(Error::InvalidArgument("exact evolution has no circuit".into())),
        }
    }

    pub(crate) fn evolve<T: Real>(
        &self,
        h: &PauliSumHamiltonian<T>,
        spectrum: Option<&SpectralDecomposition>,
        state: &State<T>,
        t: f64,
    ) -> Result<State<T>> {
        match self {
            Evolution::Trotter { .. } => {
                let mut s = state.clone();
                s.apply_circuit(&self.circuit(h, t)?)?;
                Ok(s)
            }
            Evolution::Exact => spectrum
                .ok_or_else(|| Error::InvalidArgument("exact evolution needs a spectral decomposition".into()))?
                .evolve(state, t),
        }
    }
}

/// Outcome probabilities `(ancilla = 0, 1)` with the system projected on
/// `|0…0⟩`, after rotating the ancilla into `basis`. `a0` and `a1` are the
/// unrotated amplitudes of `|0…0, 0⟩` and `|0…0, 1⟩`.
pub fn ancilla_probabilities<T: Real>(a0: C<T>, a1: C<T>, basis: Basis) -> [f64; 2] {
    let s = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let b = match basis {
        Basis::X => a1,
        Basis::Y => a1 * cplx(T::zero(), -T::one()),
    };
    [((a0 + b) * s).norm_sqr().as_f64(), ((a0 - b) * s).norm_sqr().as_f64()]
}

/// One noisy trajectory of `circuit` on `state`.
pub fn apply_noisy<T: Real, R: Rng + ?Sized>(
    state: &mut State<T>,
    circuit: &Circuit<T>,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<()> {
    for g in circuit.gates() {
        state.apply_gate(g)?;
        if g.arity() >= noise.min_arity {
            match noise.channel {
                crate::noise::Channel::Joint => {
                    depolarize_after_gate(state, &g.support(), noise.gamma, rng)?;
                }
                crate::noise::Channel::Independent => {
                    for q in g.support() {
                        depolarize_after_gate(state, &[q], noise.gamma, rng)?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Standard error of a binomial frequency, floored away from zero so the
/// propagated uncertainties stay finite.
pub(crate) fn binomial_std(p: f64, m: u64) -> f64 {
    (p * (1.0 - p)).max(0.0).sqrt() / (m as f64).sqrt()
}
