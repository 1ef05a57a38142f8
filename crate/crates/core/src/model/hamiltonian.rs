use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::qsim::{Pauli, PauliString, State};
use crate::scalar::{czero, Real, C};

/// One weighted Pauli term.
#[derive(Debug, Clone, PartialEq)]
pub struct Term<T: Real> {
    pub coefficient: T,
    pub string: PauliString,
}

/// Trotter layer a term is compiled into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Layer {
    /// Bonds `(0,1), (2,3), …`
    A,
    /// Bonds `(1,2), (3,4), …`
    B,
}

/// `H = Σ_j λ_j P_j` with at most two-qubit terms, kept in canonical
/// ascending `(qubit, axis)` order with duplicates summed and zeros dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSumHamiltonian<T: Real> {
    n_qubits: usize,
    terms: Vec<Term<T>>,
}

impl<T: Real> PauliSumHamiltonian<T> {
    pub fn new(n_qubits: usize, terms: Vec<Term<T>>) -> Result<Self> {
        let mut acc: BTreeMap<PauliString, T> = BTreeMap::new();
        for t in terms {
            if t.string.n_qubits() != n_qubits {
                return Err(Error::DimensionMismatch { expected: n_qubits, got: t.string.n_qubits() });
            }
            if !t.coefficient.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient on {}", t.string)));
            }
            if t.string.weight() > 2 {
                return Err(Error::NonLocalTerm(t.string.to_string()));
            }
            *acc.entry(t.string).or_insert_with(T::zero) += t.coefficient;
        }
        let terms = acc
            .into_iter()
            .filter(|(s, c)| *c != T::zero() && !s.is_identity())
            .map(|(string, coefficient)| Term { coefficient, string })
            .collect();
        Ok(PauliSumHamiltonian { n_qubits, terms })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[Term<T>] {
        &self.terms
    }

    pub fn coefficients(&self) -> Vec<T> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    /// `Σ_j |λ_j|`
    pub fn one_norm(&self) -> T {
        self.terms.iter().map(|t| t.coefficient.abs()).sum()
    }

    /// Layer of every term: two-site terms by bond parity, single-site terms
    /// with the A bond covering their site (the last site of an odd chain has
    /// no A bond and goes with B bond `(n-2, n-1)`).
    pub fn bond_of(&self, string: &PauliString) -> Result<(Layer, usize)> {
        let s = string.support();
        let left = match s.as_slice() {
            [a, b] if *b == a + 1 => *a,
            [a, b] => return Err(Error::NonLocalTerm(format!("{string} couples {a} and {b}"))),
            [a] => {
                let base = a - a % 2;
                if base + 1 < self.n_qubits {
                    base
                } else {
                    self.n_qubits - 2
                }
            }
            _ => return Err(Error::NonLocalTerm(string.to_string())),
        };
        let layer = if left % 2 == 0 { Layer::A } else { Layer::B };
        Ok((layer, left))
    }

    /// Dense row-major matrix.
    pub fn to_dense(&self) -> Vec<C<T>> {
        let dim = 1usize << self.n_qubits;
        let mut m = vec![czero::<T>(); dim * dim];
        for t in &self.terms {
            let (xmask, zmask, ny) = t.string.masks();
            let phase = match ny % 4 {
                0 => C::new(T::one(), T::zero()),
                1 => C::new(T::zero(), T::one()),
                2 => C::new(-T::one(), T::zero()),
                _ => C::new(T::zero(), -T::one()),
            };
            for col in 0..dim {
                let row = col ^ xmask;
                let sign = if (col & zmask).count_ones() % 2 == 1 { -T::one() } else { T::one() };
                m[row * dim + col] += phase * (sign * t.coefficient);
            }
        }
        m
    }

    /// `H|ψ⟩`
    pub fn apply(&self, state: &State<T>) -> Result<State<T>> {
        let mut out = State::from_amplitudes(state.n_qubits(), vec![czero(); state.amplitudes().len()])?;
        for t in &self.terms {
            let mut s = state.clone();
            s.apply_pauli(&t.string)?;
            out.add_scaled(&s, C::new(t.coefficient, T::zero()))?;
        }
        Ok(out)
    }

    /// `⟨ψ|H|ψ⟩`
    pub fn expectation(&self, state: &State<T>) -> Result<T> {
        let mut e = T::zero();
        for t in &self.terms {
            e += t.coefficient * state.expectation_pauli(&t.string)?.re;
        }
        Ok(e)
    }

    pub fn cast<U: Real>(&self) -> PauliSumHamiltonian<U> {
        PauliSumHamiltonian {
            n_qubits: self.n_qubits,
            terms: self
                .terms
                .iter()
                .map(|t| Term { coefficient: U::of(t.coefficient.as_f64()), string: t.string.clone() })
                .collect(),
        }
    }
}

/// `J Σ Z_i Z_{i+1} + B_x Σ X_i + B_z Σ Z_i` on an open chain.
pub fn build_ising<T: Real>(n: usize, j: T, bx: T, bz: T, open_boundary: bool) -> Result<PauliSumHamiltonian<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Ising chain needs n >= 2, got {n}")));
    }
    if !open_boundary {
        return Err(Error::InvalidArgument("only open boundary conditions are supported".into()));
    }
    let mut terms = Vec::with_capacity(3 * n);
    for i in 0..n - 1 {
        terms.push(Term { coefficient: j, string: PauliString::pair(n, (i, Pauli::Z), (i + 1, Pauli::Z))? });
    }
    for i in 0..n {
        terms.push(Term { coefficient: bx, string: PauliString::single(n, i, Pauli::X)? });
        terms.push(Term { coefficient: bz, string: PauliString::single(n, i, Pauli::Z)? });
    }
    PauliSumHamiltonian::new(n, terms)
}

/// `(1 − λ) h0 + λ h1`
pub fn interpolate<T: Real>(
    h0: &PauliSumHamiltonian<T>,
    h1: &PauliSumHamiltonian<T>,
    lambda: T,
) -> Result<PauliSumHamiltonian<T>> {
    if h0.n_qubits != h1.n_qubits {
        return Err(Error::DimensionMismatch { expected: h0.n_qubits, got: h1.n_qubits });
    }
    let w0 = T::one() - lambda;
    let terms = h0
        .terms
        .iter()
        .map(|t| Term { coefficient: t.coefficient * w0, string: t.string.clone() })
        .chain(h1.terms.iter().map(|t| Term { coefficient: t.coefficient * lambda, string: t.string.clone() }))
        .collect();
    PauliSumHamiltonian::new(h0.n_qubits, terms)
}

/// The interpolation family used for the case study: `H_0 = H_Ising(0, 1, 0)`,
/// `H_1 = H_Ising(1.5, 1, 1)`.
pub fn case_study_family<T: Real>(n: usize, lambda: T) -> Result<PauliSumHamiltonian<T>> {
    let h0 = build_ising(n, T::zero(), T::one(), T::zero(), true)?;
    let h1 = build_ising(n, T::of(1.5), T::one(), T::one(), true)?;
    interpolate(&h0, &h1, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ising_term_counts() {
        let h = build_ising::<f64>(3, 1.0, 0.0, 0.0, true).unwrap();
        assert_eq!(h.terms().len(), 2);
        assert!(h.terms().iter().all(|t| t.coefficient == 1.0 && t.string.weight() == 2));
        assert!(build_ising::<f64>(1, 1.0, 0.0, 0.0, true).is_err());
        assert_eq!(build_ising::<f64>(19, 0.75, 1.0, 0.5, true).unwrap().terms().len(), 18 + 38);
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let h0 = build_ising::<f64>(4, 0.0, 1.0, 0.0, true).unwrap();
        let h1 = build_ising::<f64>(4, 1.5, 1.0, 1.0, true).unwrap();
        assert_eq!(interpolate(&h0, &h1, 0.0).unwrap(), h0);
        assert_eq!(interpolate(&h0, &h1, 1.0).unwrap(), h1);
        let mid = interpolate(&h0, &h1, 0.5).unwrap();
        assert_eq!(mid, build_ising(4, 0.75, 1.0, 0.5, true).unwrap());
        assert!(interpolate(&h0, &build_ising(5, 1.0, 1.0, 1.0, true).unwrap(), 0.5).is_err());
    }

    #[test]
    fn nonlocal_terms_are_rejected_by_layering() {
        let s = PauliString::pair(4, (0, Pauli::Z), (2, Pauli::Z)).unwrap();
        let h = PauliSumHamiltonian::new(4, vec![Term { coefficient: 1.0, string: s.clone() }]).unwrap();
        assert!(matches!(h.bond_of(&s), Err(Error::NonLocalTerm(_))));
    }

    #[test]
    fn field_layering() {
        let h = build_ising::<f64>(5, 1.0, 1.0, 1.0, true).unwrap();
        let x = |q| PauliString::single(5, q, Pauli::X).unwrap();
        assert_eq!(h.bond_of(&x(0)).unwrap(), (Layer::A, 0));
        assert_eq!(h.bond_of(&x(3)).unwrap(), (Layer::A, 2));
        assert_eq!(h.bond_of(&x(4)).unwrap(), (Layer::B, 3));
    }
}
