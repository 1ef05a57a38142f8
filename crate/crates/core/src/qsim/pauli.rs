use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cone, cplx, czero, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix<T: Real>(self) -> [C<T>; 4] {
        let (o, z) = (cone::<T>(), czero::<T>());
        match self {
            Pauli::X => [z, o, o, z],
            Pauli::Y => [z, cplx(T::zero(), -T::one()), cplx(T::zero(), T::one()), z],
            Pauli::Z => [o, z, z, -o],
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        };
        write!(f, "{c}")
    }
}

/// Sparse tensor product of single-qubit Paulis. Factors are kept sorted by
/// qubit index; the empty list is the identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliString {
    n_qubits: usize,
    factors: Vec<(usize, Pauli)>,
}

impl PauliString {
    pub fn new(n_qubits: usize, mut factors: Vec<(usize, Pauli)>) -> Result<Self> {
        factors.sort_by_key(|&(q, _)| q);
        for w in factors.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument(format!(
                    "repeated qubit {} in Pauli string",
                    w[0].0
                )));
            }
        }
        if let Some(&(q, _)) = factors.last() {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
        }
        Ok(PauliString { n_qubits, factors })
    }

    pub fn identity(n_qubits: usize) -> Self {
        PauliString { n_qubits, factors: Vec::new() }
    }

    pub fn single(n_qubits: usize, q: usize, p: Pauli) -> Result<Self> {
        Self::new(n_qubits, vec![(q, p)])
    }

    pub fn pair(n_qubits: usize, a: (usize, Pauli), b: (usize, Pauli)) -> Result<Self> {
        Self::new(n_qubits, vec![a, b])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn factors(&self) -> &[(usize, Pauli)] {
        &self.factors
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.factors.len()
    }

    pub fn support(&self) -> Vec<usize> {
        self.factors.iter().map(|&(q, _)| q).collect()
    }

    /// Bit masks (MSB = qubit 0): flipped bits, bits that pick up a sign, and
    /// the number of Y factors.
    pub(crate) fn masks(&self) -> (usize, usize, usize) {
        let mut x = 0usize;
        let mut z = 0usize;
        let mut ny = 0usize;
        for &(q, p) in &self.factors {
            let bit = 1usize << (self.n_qubits - 1 - q);
            match p {
                Pauli::X => x |= bit,
                Pauli::Y => {
                    x |= bit;
                    z |= bit;
                    ny += 1;
                }
                Pauli::Z => z |= bit,
            }
        }
        (x, z, ny)
    }

    /// Dense matrix on the support, first support qubit most significant.
    pub fn local_matrix<T: Real>(&self) -> Vec<C<T>> {
        let mut m = vec![cone::<T>()];
        let mut d = 1;
        for &(_, p) in &self.factors {
            m = crate::linalg::kron(&m, d, &p.matrix::<T>(), 2);
            d *= 2;
        }
        m
    }

    /// Embed the Pauli string into the ordered qubit list `targets`
    /// (a superset of its support) as a dense `2^k` matrix.
    pub fn matrix_on<T: Real>(&self, targets: &[usize]) -> Result<Vec<C<T>>> {
        let mut m = vec![cone::<T>()];
        let mut d = 1;
        for &t in targets {
            let f = self.factors.iter().find(|&&(q, _)| q == t).map(|&(_, p)| p);
            let block = match f {
                Some(p) => p.matrix::<T>().to_vec(),
                None => crate::linalg::identity::<T>(2),
            };
            m = crate::linalg::kron(&m, d, &block, 2);
            d *= 2;
        }
        for &(q, _) in &self.factors {
            if !targets.contains(&q) {
                return Err(Error::InvalidArgument(format!(
                    "qubit {q} of {self} not in target list {targets:?}"
                )));
            }
        }
        Ok(m)
    }

    /// Product of commuting-or-not Pauli strings up to a phase: returns
    /// `(phase, string)` with `self · other = phase · string`.
    pub fn mul<T: Real>(&self, other: &PauliString) -> Result<(C<T>, PauliString)> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, got: other.n_qubits });
        }
        let mut phase = cone::<T>();
        let i = cplx(T::zero(), T::one());
        let mut out = Vec::new();
        let (mut a, mut b) = (self.factors.iter().peekable(), other.factors.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (None, None) => break,
                (Some(&&fa), None) => {
                    out.push(fa);
                    a.next();
                }
                (None, Some(&&fb)) => {
                    out.push(fb);
                    b.next();
                }
                (Some(&&(qa, pa)), Some(&&(qb, pb))) => {
                    if qa < qb {
                        out.push((qa, pa));
                        a.next();
                    } else if qb < qa {
                        out.push((qb, pb));
                        b.next();
                    } else {
                        a.next();
                        b.next();
                        if pa == pb {
                            continue;
                        }
                        use Pauli::*;
                        let (p, s) = match (pa, pb) {
                            (X, Y) => (Z, i),
                            (Y, Z) => (X, i),
                            (Z, X) => (Y, i),
                            (Y, X) => (Z, -i),
                            (Z, Y) => (X, -i),
                            (X, Z) => (Y, -i),
                            _ => unreachable!(),
                        };
                        phase = phase * s;
                        out.push((qa, p));
                    }
                }
            }
        }
        Ok((phase, PauliString { n_qubits: self.n_qubits, factors: out }))
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let mut anti = 0;
        for &(q, p) in &self.factors {
            if let Some(&(_, r)) = other.factors.iter().find(|&&(s, _)| s == q) {
                if p != r {
                    anti += 1;
                }
            }
        }
        anti % 2 == 0
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "I");
        }
        let parts: Vec<String> = self.factors.iter().map(|(q, p)| format!("{p}{q}")).collect();
        write!(f, "{}", parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_sorts_and_validates() {
        let p = PauliString::new(3, vec![(2, Pauli::X), (0, Pauli::Z)]).unwrap();
        assert_eq!(p.factors(), &[(0, Pauli::Z), (2, Pauli::X)]);
        assert!(PauliString::new(3, vec![(3, Pauli::X)]).is_err());
        assert!(PauliString::new(3, vec![(1, Pauli::X), (1, Pauli::Z)]).is_err());
        assert_eq!(PauliString::identity(4).to_string(), "I");
        assert_eq!(p.to_string(), "Z0 X2");
    }

    #[test]
    fn products_follow_the_pauli_algebra() {
        let x = PauliString::single(1, 0, Pauli::X).unwrap();
        let y = PauliString::single(1, 0, Pauli::Y).unwrap();
        let (ph, s) = x.mul::<f64>(&y).unwrap();
        assert_eq!(s, PauliString::single(1, 0, Pauli::Z).unwrap());
        assert_eq!(ph, cplx(0.0, 1.0));
        let (ph, s) = x.mul::<f64>(&x).unwrap();
        assert!(s.is_identity());
        assert_eq!(ph, cone());
        assert!(!x.commutes_with(&y));
        let xx = PauliString::pair(2, (0, Pauli::X), (1, Pauli::X)).unwrap();
        let zz = PauliString::pair(2, (0, Pauli::Z), (1, Pauli::Z)).unwrap();
        assert!(xx.commutes_with(&zz));
    }
}
