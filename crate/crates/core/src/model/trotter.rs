use crate::error::{Error, Result};
use crate::qsim::{Circuit, Gate};
use crate::scalar::{czero, Real, C};

use super::hamiltonian::{Layer, PauliSumHamiltonian};

/// Local generator of one bond gate: every term the layering assigns to the
/// bond `(left, left + 1)`, as a dense 4×4 block.
#[derive(Debug, Clone)]
pub struct BondGenerator<T: Real> {
    pub layer: Layer,
    pub left: usize,
    pub matrix: Vec<C<T>>,
    /// `Σ |λ_j|` over the bond's terms, an upper bound on its spectral norm.
    pub weight: T,
}

impl<T: Real> BondGenerator<T> {
    pub fn gate(&self, duration: T) -> Result<Gate<T>> {
        Gate::from_generator(vec![self.left, self.left + 1], &self.matrix, duration)
    }
}

pub fn bond_generators<T: Real>(h: &PauliSumHamiltonian<T>) -> Result<Vec<BondGenerator<T>>> {
    let n = h.n_qubits();
    if n < 2 {
        return Err(Error::InvalidArgument("Trotter layering needs at least 2 qubits".into()));
    }
    let mut gens: Vec<BondGenerator<T>> = (0..n - 1)
        .map(|left| BondGenerator {
            layer: if left % 2 == 0 { Layer::A } else { Layer::B },
            left,
            matrix: vec![czero(); 16],
            weight: T::zero(),
        })
        .collect();
    let mut used = vec![false; n - 1];
    for t in h.terms() {
        let (_, left) = h.bond_of(&t.string)?;
        let local = t.string.matrix_on::<T>(&[left, left + 1])?;
        let g = &mut gens[left];
        for (m, l) in g.matrix.iter_mut().zip(local) {
            *m += l * t.coefficient;
        }
        g.weight += t.coefficient.abs();
        used[left] = true;
    }
    Ok(gens.into_iter().zip(used).filter(|(_, u)| *u).map(|(g, _)| g).collect())
}

/// Number of whole steps of size `dt` in `t`, rejecting non-multiples.
pub fn step_count<T: Real>(t: T, dt: T) -> Result<usize> {
    let (t, dt) = (t.as_f64(), dt.as_f64());
    if !(dt > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and t >= 0, got t = {t}, dt = {dt}")));
    }
    let m = (t / dt).round();
    if (m * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
        return Err(Error::NotMultipleOfStep { t, dt });
    }
    Ok(m as usize)
}

fn layer_gates<T: Real>(gens: &[BondGenerator<T>], layer: Layer, duration: T) -> Result<Vec<Gate<T>>> {
    gens.iter().filter(|g| g.layer == layer).map(|g| g.gate(duration)).collect()
}

/// `steps` symmetric second-order steps of size `dt`, one `A/2 · B · A/2`
/// triple each, without merging.
pub fn trotter2_unmerged<T: Real>(h: &PauliSumHamiltonian<T>, dt: T, steps: usize) -> Result<Circuit<T>> {
    let gens = bond_generators(h)?;
    let half = dt / T::of(2.0);
    let a_half = layer_gates(&gens, Layer::A, half)?;
    let b = layer_gates(&gens, Layer::B, dt)?;
    let mut c = Circuit::new(h.n_qubits());
    for _ in 0..steps {
        for g in a_half.iter().chain(&b).chain(&a_half) {
            c.push(g.clone())?;
        }
    }
    Ok(c)
}

/// `U_A^{1/2} (U_B U_A)^{m-1} U_B U_A^{1/2}` for `t_final = m·dt`, with the
/// half steps of neighbouring triples merged.
pub fn trotter2_circuit<T: Real>(h: &PauliSumHamiltonian<T>, t_final: T, dt: T) -> Result<Circuit<T>> {
    let m = step_count(t_final, dt)?;
    if m == 0 {
        return Err(Error::NotMultipleOfStep { t: t_final.as_f64(), dt: dt.as_f64() });
    }
    Ok(trotter2_unmerged(h, dt, m)?.merged())
}

/// Evolution to an arbitrary `t ≥ 0` with the fewest equal steps not longer
/// than `max_dt`.
pub fn trotter2_evolution<T: Real>(h: &PauliSumHamiltonian<T>, t: T, max_dt: T) -> Result<Circuit<T>> {
    if t < T::zero() || max_dt <= T::zero() {
        return Err(Error::InvalidArgument("need t >= 0 and max_dt > 0".into()));
    }
    if t == T::zero() {
        return Ok(Circuit::new(h.n_qubits()));
    }
    let steps = ((t / max_dt).as_f64() - 1e-9).ceil().max(1.0) as usize;
    Ok(trotter2_unmerged(h, t / T::of(steps as f64), steps)?.merged())
}

/// Largest `weight · dt` over the bond gates, the phase a single controlled
/// gate can contribute to one step of the sequential test.
pub fn max_gate_phase<T: Real>(h: &PauliSumHamiltonian<T>, dt: T) -> Result<T> {
    Ok(bond_generators(h)?.iter().map(|g| g.weight * dt).fold(T::zero(), T::max))
}

/// One step of the growing time-series sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStep<T: Real> {
    /// Primitive indices whose product is the newly controlled gate.
    pub members: Vec<usize>,
    /// Trotter block `m`: after its last step the circuit is `m` full steps.
    pub block: usize,
    pub time_label: T,
    /// Linear interpolation of the time inside the block.
    pub effective_time: T,
    /// True when the circuit after this step is a proper Trotter circuit.
    pub proper: bool,
}

/// Circuit pieces for one sequential-test step: the state after
/// `prefix · gate · suffix` is `U_L|ψ⟩` and without `gate` it is
/// `U_{L-1}|ψ⟩`.
#[derive(Debug, Clone)]
pub struct SeriesEntry<T: Real> {
    pub step: usize,
    pub gate: Gate<T>,
    pub prefix: Circuit<T>,
    pub suffix: Circuit<T>,
    pub time_label: T,
    pub effective_time: T,
    pub proper: bool,
}

/// Gate ordering that grows the Trotter circuit one local gate at a time.
/// Read backwards it removes, from the full-depth circuit, the middle `B`
/// layer and the `A` layer after it, one gate at a time, so every
/// `block_size` steps the circuit is again a proper Trotter circuit.
#[derive(Debug, Clone)]
pub struct TimeSeriesSequence<T: Real> {
    n_qubits: usize,
    dt: T,
    primitives: Vec<Gate<T>>,
    activation: Vec<usize>,
    steps: Vec<SeriesStep<T>>,
}

impl<T: Real> TimeSeriesSequence<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> &[SeriesStep<T>] {
        &self.steps
    }

    /// The full-depth circuit's gates, in circuit order.
    pub fn primitives(&self) -> &[Gate<T>] {
        &self.primitives
    }

    /// Circuit after `l` steps (`l = 0` is empty), merged.
    pub fn circuit(&self, l: usize) -> Circuit<T> {
        let gates = self
            .primitives
            .iter()
            .zip(&self.activation)
            .filter(|(_, &a)| a <= l)
            .map(|(g, _)| g.clone())
            .collect();
        Circuit::from_gates(self.n_qubits, gates).expect("primitives fit the register").merged()
    }

    /// Entry for step `l` in `1..=len()`.
    pub fn entry(&self, l: usize) -> Result<SeriesEntry<T>> {
        if l == 0 || l > self.steps.len() {
            return Err(Error::InvalidArgument(format!("step {l} outside 1..={}", self.steps.len())));
        }
        let s = &self.steps[l - 1];
        let first = s.members[0];
        let mut gate = self.primitives[first].clone();
        for &k in &s.members[1..] {
            gate = gate
                .then(&self.primitives[k])
                .ok_or_else(|| Error::InvalidGate("grouped primitives differ in support".into()))?;
        }
        let mut prefix = Circuit::new(self.n_qubits);
        let mut suffix = Circuit::new(self.n_qubits);
        for (i, (g, &a)) in self.primitives.iter().zip(&self.activation).enumerate() {
            if a < l {
                if i < first {
                    prefix.push(g.clone())?;
                } else {
                    suffix.push(g.clone())?;
                }
            }
        }
        Ok(SeriesEntry {
            step: l,
            gate,
            prefix: prefix.merged(),
            suffix: suffix.merged(),
            time_label: s.time_label,
            effective_time: s.effective_time,
            proper: s.proper,
        })
    }

    /// Step indices whose circuit is a proper Trotter circuit, with times.
    pub fn proper_steps(&self) -> Vec<(usize, T)> {
        self.steps.iter().enumerate().filter(|(_, s)| s.proper).map(|(i, s)| (i + 1, s.time_label)).collect()
    }
}

pub fn time_series_sequence<T: Real>(
    h: &PauliSumHamiltonian<T>,
    t_max: T,
    dt: T,
) -> Result<TimeSeriesSequence<T>> {
    let m = step_count(t_max, dt)?;
    if m == 0 {
        return Err(Error::NotMultipleOfStep { t: t_max.as_f64(), dt: dt.as_f64() });
    }
    let gens = bond_generators(h)?;
    let half = dt / T::of(2.0);
    let a_half = layer_gates(&gens, Layer::A, half)?;
    let a_full = layer_gates(&gens, Layer::A, dt)?;
    let b = layer_gates(&gens, Layer::B, dt)?;

    // moments 0 and 2m are A/2, odd moments B, other even moments A
    let mut moments: Vec<Vec<usize>> = Vec::with_capacity(2 * m + 1);
    let mut primitives: Vec<Gate<T>> = Vec::new();
    for k in 0..=2 * m {
        let layer = if k == 0 || k == 2 * m {
            &a_half
        } else if k % 2 == 1 {
            &b
        } else {
            &a_full
        };
        let start = primitives.len();
        primitives.extend(layer.iter().cloned());
        moments.push((start..primitives.len()).collect());
    }

    // removal order, grouped by the block being removed
    let mut blocks: Vec<Vec<Vec<usize>>> = Vec::with_capacity(m);
    let mut active_b: Vec<usize> = (1..2 * m).step_by(2).collect();
    let mut active_a: Vec<usize> = (2..2 * m).step_by(2).collect();
    for mm in (2..=m).rev() {
        let bm = active_b.remove(mm.div_ceil(2) - 1);
        let pos = active_a.iter().position(|&a| a > bm).expect("an A layer follows every inner B");
        let am = active_a.remove(pos);
        let groups = moments[bm].iter().chain(&moments[am]).map(|&i| vec![i]).collect();
        blocks.push(groups);
    }
    let mut last: Vec<Vec<usize>> = moments[active_b[0]].iter().map(|&i| vec![i]).collect();
    last.extend(moments[0].iter().zip(&moments[2 * m]).map(|(&a, &b)| vec![a, b]));
    blocks.push(last);

    let mut activation = vec![0usize; primitives.len()];
    let mut steps = Vec::with_capacity(primitives.len());
    for (bi, groups) in blocks.into_iter().rev().enumerate() {
        let block = bi + 1;
        let size = groups.len();
        for (i, members) in groups.into_iter().rev().enumerate() {
            let l = steps.len() + 1;
            for &k in &members {
                activation[k] = l;
            }
            let frac = T::of((i + 1) as f64 / size as f64);
            steps.push(SeriesStep {
                members,
                block,
                time_label: dt * T::of(block as f64),
                effective_time: dt * (T::of((block - 1) as f64) + frac),
                proper: i + 1 == size,
            });
        }
    }
    Ok(TimeSeriesSequence { n_qubits: h.n_qubits(), dt, primitives, activation, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hamiltonian::{build_ising, case_study_family};

    #[test]
    fn single_step_is_three_layers() {
        let h = build_ising::<f64>(4, 1.0, 0.5, 0.2, true).unwrap();
        let c = trotter2_circuit(&h, 0.25, 0.25).unwrap();
        // A/2 has bonds (0,1),(2,3); B has (1,2)
        assert_eq!(c.len(), 5);
        assert_eq!(c.moments().len(), 3);
        assert!(matches!(trotter2_circuit(&h, 0.3, 0.25), Err(Error::NotMultipleOfStep { .. })));
    }

    #[test]
    fn case_study_sequence_length() {
        let h = case_study_family::<f64>(19, 0.5).unwrap();
        let seq = time_series_sequence(&h, 10.0, 0.25).unwrap();
        assert_eq!(seq.len(), 720);
        assert_eq!(seq.proper_steps().len(), 40);
    }

    #[test]
    fn time_labels_for_small_chain() {
        let h = case_study_family::<f64>(6, 0.5).unwrap();
        let seq = time_series_sequence(&h, 1.0, 0.25).unwrap();
        let mut labels: Vec<f64> = seq.steps().iter().map(|s| s.time_label).collect();
        labels.dedup();
        assert_eq!(labels, vec![0.25, 0.5, 0.75, 1.0]);
        let unmerged = trotter2_unmerged(&h, 0.25, 4).unwrap().len();
        assert!(seq.len() < unmerged);
    }
}
