use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{czero, Real, C};

use super::gate::Gate;
use super::state::State;

/// Ordered gate list on a fixed register width.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit<T: Real> {
    n_qubits: usize,
    gates: Vec<Gate<T>>,
}

impl<T: Real> Circuit<T> {
    pub fn new(n_qubits: usize) -> Self {
        Circuit { n_qubits, gates: Vec::new() }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate<T>>) -> Result<Self> {
        let mut c = Circuit::new(n_qubits);
        for g in gates {
            c.push(g)?;
        }
        Ok(c)
    }

    pub fn push(&mut self, gate: Gate<T>) -> Result<()> {
        if gate.max_qubit() >= self.n_qubits {
            return Err(Error::QubitOutOfRange { index: gate.max_qubit(), n_qubits: self.n_qubits });
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn extend(&mut self, other: &Circuit<T>) -> Result<()> {
        if other.n_qubits > self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, got: other.n_qubits });
        }
        self.gates.extend(other.gates.iter().cloned());
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate<T>] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Same gates on a wider register (extra qubits appended at the end).
    pub fn widened(&self, n_qubits: usize) -> Result<Self> {
        if n_qubits < self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, got: n_qubits });
        }
        Ok(Circuit { n_qubits, gates: self.gates.clone() })
    }

    /// `C†`: reversed order, each gate daggered.
    pub fn inverse(&self) -> Self {
        Circuit { n_qubits: self.n_qubits, gates: self.gates.iter().rev().map(Gate::dagger).collect() }
    }

    /// Multiply each gate into the most recent earlier gate with the same
    /// target list when no gate in between touches those qubits. Controlled
    /// gates are never merged. Identity products are kept as gates.
    pub fn merged(&self) -> Self {
        let mut out: Vec<Gate<T>> = Vec::with_capacity(self.gates.len());
        let mut last_touch: Vec<Option<usize>> = vec![None; self.n_qubits];
        for g in &self.gates {
            let support = g.support();
            let first = last_touch[support[0]];
            let same = support.iter().all(|&q| last_touch[q] == first);
            if let (true, Some(k)) = (same, first) {
                if out[k].support().len() == support.len() {
                    if let Some(prod) = out[k].then(g) {
                        out[k] = prod;
                        continue;
                    }
                }
            }
            for &q in &support {
                last_touch[q] = Some(out.len());
            }
            out.push(g.clone());
        }
        Circuit { n_qubits: self.n_qubits, gates: out }
    }

    /// Greedy as-soon-as-possible layering into moments of disjoint gates.
    pub fn moments(&self) -> Vec<Vec<usize>> {
        let mut depth = vec![0usize; self.n_qubits];
        let mut moments: Vec<Vec<usize>> = Vec::new();
        for (i, g) in self.gates.iter().enumerate() {
            let support = g.support();
            let level = support.iter().map(|&q| depth[q]).max().unwrap_or(0);
            if moments.len() <= level {
                moments.push(Vec::new());
            }
            moments[level].push(i);
            for q in support {
                depth[q] = level + 1;
            }
        }
        moments
    }

    pub fn apply(&self, state: &mut State<T>) -> Result<()> {
        state.apply_circuit(self)
    }

    /// Dense row-major unitary, column by column from basis states.
    pub fn to_dense(&self) -> Result<Vec<C<T>>> {
        let dim = 1usize << self.n_qubits;
        let mut u = vec![czero::<T>(); dim * dim];
        for col in 0..dim {
            let mut s = State::basis(self.n_qubits, col);
            s.apply_circuit(self)?;
            for (row, a) in s.amplitudes().iter().enumerate() {
                u[row * dim + col] = *a;
            }
        }
        Ok(u)
    }

    /// Largest `‖U†U − I‖` entry of the dense unitary.
    pub fn unitarity_deviation(&self) -> Result<T> {
        Ok(linalg::unitarity_deviation(&self.to_dense()?, 1 << self.n_qubits))
    }

    pub fn cast<U: Real>(&self) -> Circuit<U> {
        Circuit { n_qubits: self.n_qubits, gates: self.gates.iter().map(Gate::cast).collect() }
    }
}
