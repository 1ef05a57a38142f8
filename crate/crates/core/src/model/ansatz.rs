use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::NelderMead;
use crate::qsim::{Circuit, Gate, State};
use crate::rng::RngSeed;
use crate::scalar::Real;

use super::hamiltonian::{build_ising, PauliSumHamiltonian};
use super::trotter::trotter2_unmerged;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    /// `R_y(θ_o)` on sites 0, 2, 4, … and `R_y(θ_e)` on sites 1, 3, …
    Product,
    /// Three rotation layers interleaved with two `exp(-i β H_Ising(1.5, 0, 1))`
    /// layers; parameters `[θo1, θe1, β1, θo2, θe2, β2, θo3, θe3]`.
    Depth2,
}

impl AnsatzKind {
    pub fn n_params(self) -> usize {
        match self {
            AnsatzKind::Product => 2,
            AnsatzKind::Depth2 => 8,
        }
    }

    fn name(self) -> &'static str {
        match self {
            AnsatzKind::Product => "product",
            AnsatzKind::Depth2 => "depth2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub kind: AnsatzKind,
    pub params: Vec<f64>,
}

impl AnsatzSpec {
    pub fn new(kind: AnsatzKind, params: Vec<f64>) -> Result<Self> {
        let spec = AnsatzSpec { kind, params };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.kind.n_params() {
            return Err(Error::ParameterCount {
                kind: self.kind.name(),
                expected: self.kind.n_params(),
                got: self.params.len(),
            });
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite ansatz parameter".into()));
        }
        Ok(())
    }
}

fn rotation_layer<T: Real>(c: &mut Circuit<T>, n: usize, odd: f64, even: f64) -> Result<()> {
    for q in 0..n {
        let theta = if q % 2 == 0 { odd } else { even };
        if theta != 0.0 {
            c.push(Gate::ry(q, T::of(theta)))?;
        }
    }
    Ok(())
}

/// The commuting `ZZ + Z` entangler; one symmetric step is exact.
fn entangling_layer<T: Real>(c: &mut Circuit<T>, n: usize, beta: f64) -> Result<()> {
    if beta == 0.0 {
        return Ok(());
    }
    let h = build_ising::<T>(n, T::of(1.5), T::zero(), T::one(), true)?;
    c.extend(&trotter2_unmerged(&h, T::of(beta), 1)?.merged())
}

pub fn prepare_ansatz<T: Real>(spec: &AnsatzSpec, n: usize) -> Result<Circuit<T>> {
    spec.validate()?;
    let p = &spec.params;
    let mut c = Circuit::new(n);
    match spec.kind {
        AnsatzKind::Product => rotation_layer(&mut c, n, p[0], p[1])?,
        AnsatzKind::Depth2 => {
            rotation_layer(&mut c, n, p[0], p[1])?;
            entangling_layer(&mut c, n, p[2])?;
            rotation_layer(&mut c, n, p[3], p[4])?;
            entangling_layer(&mut c, n, p[5])?;
            rotation_layer(&mut c, n, p[6], p[7])?;
        }
    }
    Ok(c)
}

pub fn ansatz_energy<T: Real>(h: &PauliSumHamiltonian<T>, spec: &AnsatzSpec) -> Result<f64> {
    let mut s = State::<T>::zero(h.n_qubits());
    s.apply_circuit(&prepare_ansatz(spec, h.n_qubits())?)?;
    Ok(h.expectation(&s)?.as_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedAnsatz {
    pub spec: AnsatzSpec,
    pub energy: f64,
}

/// Minimise the variational energy from `restarts` random starting points.
pub fn optimize_ansatz<T: Real>(
    h: &PauliSumHamiltonian<T>,
    kind: AnsatzKind,
    restarts: usize,
    seed: RngSeed,
) -> Result<OptimizedAnsatz> {
    let n = h.n_qubits();
    let k = kind.n_params();
    let nm = NelderMead { max_evals: 600 * k, ..NelderMead::default() };
    let runs: Vec<Result<(Vec<f64>, f64)>> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.derive(r as u64).rng();
            let x0: Vec<f64> = (0..k)
                .map(|i| {
                    let entangler = kind == AnsatzKind::Depth2 && (i == 2 || i == 5);
                    if entangler {
                        rng.random_range(-1.0..1.0)
                    } else {
                        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)
                    }
                })
                .collect();
            let mut failure = None;
            let m = nm.minimize(
                |x| match ansatz_energy(h, &AnsatzSpec { kind, params: x.to_vec() }) {
                    Ok(e) => e,
                    Err(e) => {
                        failure = Some(e);
                        f64::INFINITY
                    }
                },
                &x0,
            );
            match failure {
                Some(e) => Err(e),
                None => Ok((m.x, m.value)),
            }
        })
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for r in runs {
        let (x, v) = r?;
        if best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
    }
    let (params, _) = best.expect("at least one restart");
    let spec = AnsatzSpec::new(kind, params)?;
    let energy = ansatz_energy(h, &spec)?;
    let _ = n;
    Ok(OptimizedAnsatz { spec, energy })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_examples() {
        let zero = prepare_ansatz::<f64>(&AnsatzSpec::new(AnsatzKind::Product, vec![0.0, 0.0]).unwrap(), 3).unwrap();
        assert!(zero.is_empty());
        let c = prepare_ansatz::<f64>(
            &AnsatzSpec::new(AnsatzKind::Product, vec![std::f64::consts::PI, 0.0]).unwrap(),
            3,
        )
        .unwrap();
        let mut s = State::zero(3);
        s.apply_circuit(&c).unwrap();
        assert!((s.probability(0b101) - 1.0).abs() < 1e-15);
        assert!(matches!(
            AnsatzSpec::new(AnsatzKind::Depth2, vec![0.0; 2]),
            Err(Error::ParameterCount { expected: 8, got: 2, .. })
        ));
    }

    #[test]
    fn classical_optima() {
        let h = build_ising::<f64>(4, 0.0, 0.0, -1.0, true).unwrap();
        let o = optimize_ansatz(&h, AnsatzKind::Product, 4, RngSeed(1)).unwrap();
        assert!((o.energy + 4.0).abs() < 1e-9, "{o:?}");
        let h = build_ising::<f64>(4, 0.0, 1.0, 0.0, true).unwrap();
        let o = optimize_ansatz(&h, AnsatzKind::Product, 4, RngSeed(2)).unwrap();
        assert!((o.energy + 4.0).abs() < 1e-9, "{o:?}");
        for th in &o.spec.params {
            let r = th.rem_euclid(2.0 * std::f64::consts::PI);
            assert!((r - 1.5 * std::f64::consts::PI).abs() < 1e-4, "{th}");
        }
    }
}
