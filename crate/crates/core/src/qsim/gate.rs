use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{cone, cplx, czero, Real, C};

use super::pauli::PauliString;

/// Unitary on at most three target qubits, optionally conditioned on one
/// control qubit being `|1⟩`. The first target is the most significant bit
/// of the matrix index.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<T: Real> {
    targets: Vec<usize>,
    matrix: Vec<C<T>>,
    control: Option<usize>,
}

pub const MAX_TARGETS: usize = 3;
const UNITARITY_TOL: f64 = 1e-12;

impl<T: Real> Gate<T> {
    pub fn new(targets: Vec<usize>, matrix: Vec<C<T>>, control: Option<usize>) -> Result<Self> {
        if targets.is_empty() || targets.len() > MAX_TARGETS {
            return Err(Error::InvalidGate(format!("{} targets (1..=3 allowed)", targets.len())));
        }
        let dim = 1usize << targets.len();
        if matrix.len() != dim * dim {
            return Err(Error::InvalidGate(format!(
                "matrix has {} entries, expected {}",
                matrix.len(),
                dim * dim
            )));
        }
        for (i, &a) in targets.iter().enumerate() {
            if targets[..i].contains(&a) {
                return Err(Error::InvalidGate(format!("repeated target {a}")));
            }
        }
        if let Some(c) = control {
            if targets.contains(&c) {
                return Err(Error::InvalidGate(format!("control {c} is also a target")));
            }
        }
        let deviation = linalg::unitarity_deviation(&matrix, dim);
        // merged products of many gates accumulate rounding linearly in depth
        if deviation > T::tolerance(UNITARITY_TOL) * T::of(dim as f64) {
            return Err(Error::NonUnitary { deviation: deviation.as_f64() });
        }
        Ok(Gate { targets, matrix, control })
    }

    /// `exp(-i·t·h)` where `h` is a Hermitian block on `targets`.
    pub fn from_generator(targets: Vec<usize>, h: &[C<T>], t: T) -> Result<Self> {
        let dim = 1usize << targets.len();
        Gate::new(targets, linalg::expm_i(h, t, dim), None)
    }

    /// `exp(-i·θ·P)` for a Pauli string `P` of weight 1..=3.
    pub fn pauli_rotation(p: &PauliString, theta: T) -> Result<Self> {
        if p.is_identity() {
            return Err(Error::InvalidGate("rotation about the identity".into()));
        }
        let h = p.local_matrix::<T>();
        Gate::from_generator(p.support(), &h, theta)
    }

    /// The Pauli string itself as a gate.
    pub fn pauli(p: &PauliString) -> Result<Self> {
        if p.is_identity() {
            return Err(Error::InvalidGate("identity Pauli has no support".into()));
        }
        Gate::new(p.support(), p.local_matrix::<T>(), None)
    }

    pub fn identity(targets: Vec<usize>) -> Result<Self> {
        let dim = 1usize << targets.len();
        Gate::new(targets, linalg::identity(dim), None)
    }

    pub fn x(q: usize) -> Self {
        let (o, z) = (cone::<T>(), czero::<T>());
        Gate { targets: vec![q], matrix: vec![z, o, o, z], control: None }
    }

    pub fn z(q: usize) -> Self {
        let (o, z) = (cone::<T>(), czero::<T>());
        Gate { targets: vec![q], matrix: vec![o, z, z, -o], control: None }
    }

    pub fn h(q: usize) -> Self {
        let s = T::FRAC_1_SQRT_2();
        let (p, m) = (cplx(s, T::zero()), cplx(-s, T::zero()));
        Gate { targets: vec![q], matrix: vec![p, p, p, m], control: None }
    }

    /// `S† = diag(1, -i)`
    pub fn sdg(q: usize) -> Self {
        let z = czero::<T>();
        Gate {
            targets: vec![q],
            matrix: vec![cone(), z, z, cplx(T::zero(), -T::one())],
            control: None,
        }
    }

    /// `R_y(θ) = exp(-i θ σ^y / 2)`
    pub fn ry(q: usize, theta: T) -> Self {
        let half = theta / T::of(2.0);
        let (c, s) = (half.cos(), half.sin());
        Gate {
            targets: vec![q],
            matrix: vec![cplx(c, T::zero()), cplx(-s, T::zero()), cplx(s, T::zero()), cplx(c, T::zero())],
            control: None,
        }
    }

    pub fn cx(control: usize, target: usize) -> Result<Self> {
        Gate::x(target).controlled(control)
    }

    pub fn controlled(mut self, control: usize) -> Result<Self> {
        if self.control.is_some() {
            return Err(Error::InvalidGate("gate already has a control".into()));
        }
        if self.targets.contains(&control) {
            return Err(Error::InvalidGate(format!("control {control} is also a target")));
        }
        self.control = Some(control);
        Ok(self)
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn control(&self) -> Option<usize> {
        self.control
    }

    pub fn matrix(&self) -> &[C<T>] {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        1 << self.targets.len()
    }

    /// Targets plus control, in that order.
    pub fn support(&self) -> Vec<usize> {
        let mut s = self.targets.clone();
        s.extend(self.control);
        s
    }

    /// Number of qubits the gate touches, control included.
    pub fn arity(&self) -> usize {
        self.targets.len() + usize::from(self.control.is_some())
    }

    pub fn max_qubit(&self) -> usize {
        self.support().into_iter().max().unwrap_or(0)
    }

    pub fn dagger(&self) -> Self {
        Gate {
            targets: self.targets.clone(),
            matrix: linalg::dagger(&self.matrix, self.dim()),
            control: self.control,
        }
    }

    /// `other · self` (apply `self` first), for gates on identical targets.
    pub(crate) fn then(&self, other: &Gate<T>) -> Option<Gate<T>> {
        if self.targets != other.targets || self.control.is_some() || other.control.is_some() {
            return None;
        }
        Some(Gate {
            targets: self.targets.clone(),
            matrix: linalg::matmul(&other.matrix, &self.matrix, self.dim()),
            control: None,
        })
    }

    pub fn cast<U: Real>(&self) -> Gate<U> {
        Gate {
            targets: self.targets.clone(),
            matrix: self
                .matrix
                .iter()
                .map(|z| cplx(U::of(z.re.as_f64()), U::of(z.im.as_f64())))
                .collect(),
            control: self.control,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_unitary_and_bad_shapes() {
        let m = vec![cone::<f64>(), cone(), czero(), cone()];
        assert!(matches!(Gate::new(vec![0], m, None), Err(Error::NonUnitary { .. })));
        assert!(Gate::<f64>::new(vec![0, 1], linalg::identity(2), None).is_err());
        assert!(Gate::<f64>::new(vec![0, 0], linalg::identity(4), None).is_err());
        assert!(Gate::<f64>::new(vec![0], linalg::identity(2), Some(0)).is_err());
        assert!(Gate::<f64>::identity(vec![0, 1, 2, 3]).is_err());
    }

    #[test]
    fn standard_gates_are_unitary() {
        for g in [Gate::<f64>::h(0), Gate::sdg(0), Gate::ry(0, 0.3), Gate::x(0), Gate::z(0)] {
            assert!(linalg::unitarity_deviation(g.matrix(), 2) < 1e-15);
        }
        let d = Gate::<f64>::ry(0, 1.1).dagger();
        let back = Gate::ry(0, 1.1).then(&d).unwrap();
        assert!((back.matrix()[0] - cone()).norm() < 1e-15);
    }
}
