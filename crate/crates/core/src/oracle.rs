//! Exact references on small systems from a dense eigendecomposition. Always
//! double precision; states from other scalar types are cast on the way in.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::analysis::LdosSpectrum;
use crate::error::{Error, Result};
use crate::model::PauliSumHamiltonian;
use crate::protocols::Sign;
use crate::qsim::{Circuit, State};
use crate::scalar::Real;

pub const MAX_ORACLE_QUBITS: usize = 14;

/// `H = V Λ V†` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    n_qubits: usize,
    eigenvalues: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl SpectralDecomposition {
    pub fn new(h: &PauliSumHamiltonian<f64>) -> Result<Self> {
        let n = h.n_qubits();
        if n > MAX_ORACLE_QUBITS {
            return Err(Error::SystemTooLarge { n_qubits: n, cap: MAX_ORACLE_QUBITS });
        }
        let dim = 1usize << n;
        let dense = h.to_dense();
        let real = dense.iter().all(|z| z.im == 0.0);
        let (values, vectors) = if real {
            let m = DMatrix::from_fn(dim, dim, |i, j| dense[i * dim + j].re);
            let e = SymmetricEigen::new(m);
            (e.eigenvalues.iter().copied().collect::<Vec<f64>>(), e.eigenvectors.map(|x| Complex64::new(x, 0.0)))
        } else {
            let m = DMatrix::from_fn(dim, dim, |i, j| dense[i * dim + j]);
            let e = SymmetricEigen::new(m);
            (e.eigenvalues.iter().copied().collect::<Vec<f64>>(), e.eigenvectors)
        };
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let eigenvalues = order.iter().map(|&k| values[k]).collect();
        let vectors = DMatrix::from_fn(dim, dim, |i, j| vectors[(i, order[j])]);
        Ok(SpectralDecomposition { n_qubits: n, eigenvalues, vectors })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `max |H − VΛV†| / max |H|`
    pub fn reconstruction_residual(&self, h: &PauliSumHamiltonian<f64>) -> f64 {
        let dim = 1usize << self.n_qubits;
        let dense = h.to_dense();
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(
            dim,
            self.eigenvalues.iter().map(|&e| Complex64::new(e, 0.0)),
        ));
        let rec = &self.vectors * lam * self.vectors.adjoint();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                worst = worst.max((rec[(i, j)] - dense[i * dim + j]).norm());
                scale = scale.max(dense[i * dim + j].norm());
            }
        }
        worst / scale.max(f64::MIN_POSITIVE)
    }

    /// `V†|ψ⟩`
    pub fn coefficients<T: Real>(&self, state: &State<T>) -> Result<DVector<Complex64>> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.n_qubits, got: state.n_qubits() });
        }
        let psi = DVector::from_iterator(
            1 << self.n_qubits,
            state.amplitudes().iter().map(|z| Complex64::new(z.re.as_f64(), z.im.as_f64())),
        );
        Ok(self.vectors.adjoint() * psi)
    }

    fn synthesize<T: Real>(&self, c: DVector<Complex64>) -> State<T> {
        let v = &self.vectors * c;
        let amps = v.iter().map(|z| crate::scalar::cplx(T::of(z.re), T::of(z.im))).collect();
        State::from_amplitudes(self.n_qubits, amps).expect("matching dimension")
    }

    /// `f(H)|ψ⟩` for a scalar function of the energy.
    pub fn apply_function<T: Real>(&self, state: &State<T>, f: impl Fn(f64) -> Complex64) -> Result<State<T>> {
        let mut c = self.coefficients(state)?;
        for (ck, &e) in c.iter_mut().zip(&self.eigenvalues) {
            *ck *= f(e);
        }
        Ok(self.synthesize(c))
    }

    /// `e^{-iHt}|ψ⟩`
    pub fn evolve<T: Real>(&self, state: &State<T>, t: f64) -> Result<State<T>> {
        self.apply_function(state, |e| Complex64::cis(-e * t))
    }
}

/// Cached reference data for one Hamiltonian and initial state.
#[derive(Debug, Clone)]
pub struct Oracle {
    h: PauliSumHamiltonian<f64>,
    spectrum: SpectralDecomposition,
    psi: State<f64>,
    /// `|⟨v_k|ψ⟩|²`
    weights: Vec<f64>,
}

impl Oracle {
    pub fn new(h: &PauliSumHamiltonian<f64>, prep: &Circuit<f64>) -> Result<Self> {
        let spectrum = SpectralDecomposition::new(h)?;
        Self::with_spectrum(h, spectrum, prep)
    }

    pub fn with_spectrum(h: &PauliSumHamiltonian<f64>, spectrum: SpectralDecomposition, prep: &Circuit<f64>) -> Result<Self> {
        let mut psi = State::zero(h.n_qubits());
        psi.apply_circuit(prep)?;
        let weights = spectrum.coefficients(&psi)?.iter().map(|c| c.norm_sqr()).collect();
        Ok(Oracle { h: h.clone(), spectrum, psi, weights })
    }

    pub fn hamiltonian(&self) -> &PauliSumHamiltonian<f64> {
        &self.h
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    pub fn state(&self) -> &State<f64> {
        &self.psi
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Σ_k w_k f(E_k)`
    fn spectral_sum(&self, f: impl Fn(f64) -> Complex64) -> Complex64 {
        self.weights.iter().zip(self.spectrum.eigenvalues()).map(|(&w, &e)| w * f(e)).sum()
    }

    /// `g(t) = ⟨ψ|e^{-iHt}|ψ⟩`
    pub fn echo(&self, t: f64) -> Complex64 {
        self.spectral_sum(|e| Complex64::cis(-e * t))
    }

    /// `|g(t ∓ iτ)|²`, the survival after imaginary-time evolution
    /// `e^{±Hτ}` (sign `+` gives `t + iτ`).
    pub fn complex_time_survival(&self, t: f64, tau: f64, sign: Sign) -> f64 {
        let s = sign.value();
        self.spectral_sum(|e| Complex64::cis(-e * t) * (s * e * tau).exp()).norm_sqr()
    }

    /// `dφ/dt = −Re(g* ⟨ψ|H e^{-iHt}|ψ⟩) / |g|²`
    pub fn gradient(&self, t: f64) -> Result<f64> {
        let g = self.echo(t);
        if g.norm() < 1e-8 {
            return Err(Error::VanishingEcho { t, magnitude: g.norm() });
        }
        let hg = self.spectral_sum(|e| e * Complex64::cis(-e * t));
        Ok(-(g.conj() * hg).re / g.norm_sqr())
    }

    pub fn energy(&self) -> f64 {
        self.spectral_sum(|e| Complex64::new(e, 0.0)).re
    }

    /// Unwrapped phase of `g` on a grid starting at 0, by continuity.
    pub fn unwrapped_phases(&self, times: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(times.len());
        let mut prev: Option<f64> = None;
        for &t in times {
            let a = self.echo(t).arg();
            let phi = match prev {
                None => a,
                Some(p) => p + wrap(a - p),
            };
            out.push(phi);
            prev = Some(phi);
        }
        out
    }

    /// Ordered product `Π_j e^{±λ_jτP_j}|ψ⟩` (first term applied first) and
    /// its norm.
    pub fn ite_state(&self, tau: f64, sign: Sign, term_order: Option<&[usize]>) -> Result<(State<f64>, f64)> {
        let default: Vec<usize> = (0..self.h.terms().len()).collect();
        let order = term_order.unwrap_or(&default);
        let mut s = self.psi.clone();
        for &j in order {
            let term = self
                .h
                .terms()
                .get(j)
                .ok_or_else(|| Error::InvalidArgument(format!("term index {j} out of range")))?;
            let x = term.coefficient * tau;
            let mut p = s.clone();
            p.apply_pauli(&term.string)?;
            s.scale(Complex64::new(x.cosh(), 0.0));
            s.add_scaled(&p, Complex64::new(sign.value() * x.sinh(), 0.0))?;
        }
        let norm = s.norm_squared().sqrt();
        Ok((s, norm))
    }

    /// Un-Trotterized `e^{±Hτ}|ψ⟩` and its norm.
    pub fn imaginary_state(&self, tau: f64, sign: Sign) -> Result<(State<f64>, f64)> {
        let s = self.spectrum.apply_function(&self.psi, |e| Complex64::new((sign.value() * e * tau).exp(), 0.0))?;
        let norm = s.norm_squared().sqrt();
        Ok((s, norm))
    }

    pub fn ldos(&self, delta: f64, e_grid: &[f64]) -> LdosSpectrum {
        let density = e_grid
            .iter()
            .map(|&e| {
                self.weights
                    .iter()
                    .zip(self.spectrum.eigenvalues())
                    .map(|(&w, &ek)| w * (-(ek - e).powi(2) / (2.0 * delta * delta)).exp())
                    .sum()
            })
            .collect();
        LdosSpectrum {
            energies: e_grid.to_vec(),
            density,
            uncertainty: vec![0.0; e_grid.len()],
            delta,
            r: 0,
            t_max: f64::INFINITY,
            imag_max: 0.0,
        }
    }
}

/// Map an angle difference into `(−π, π]`.
pub fn wrap(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y - two_pi
    } else {
        y
    }
}

pub fn exact_echo(h: &PauliSumHamiltonian<f64>, prep: &Circuit<f64>, t: f64) -> Result<Complex64> {
    Ok(Oracle::new(h, prep)?.echo(t))
}

/// `⟨ψ|C|ψ⟩` with `|ψ⟩ = prep|0…0⟩`.
pub fn exact_circuit_echo<T: Real>(circuit: &Circuit<T>, prep: &Circuit<T>) -> Result<Complex64> {
    let mut psi = State::<T>::zero(prep.n_qubits());
    psi.apply_circuit(prep)?;
    let mut out = psi.clone();
    out.apply_circuit(circuit)?;
    let z = psi.inner(&out)?;
    Ok(Complex64::new(z.re.as_f64(), z.im.as_f64()))
}

pub fn exact_gradient(h: &PauliSumHamiltonian<f64>, prep: &Circuit<f64>, t: f64) -> Result<f64> {
    Oracle::new(h, prep)?.gradient(t)
}

pub fn exact_ite_state(
    h: &PauliSumHamiltonian<f64>,
    prep: &Circuit<f64>,
    tau: f64,
    sign: Sign,
    term_order: Option<&[usize]>,
) -> Result<(State<f64>, f64)> {
    Oracle::new(h, prep)?.ite_state(tau, sign, term_order)
}

pub fn exact_ldos(h: &PauliSumHamiltonian<f64>, prep: &Circuit<f64>, delta: f64, e_grid: &[f64]) -> Result<LdosSpectrum> {
    Ok(Oracle::new(h, prep)?.ldos(delta, e_grid))
}

/// Spectral-norm distance `‖A − B‖₂` of two dense square matrices.
pub fn operator_distance(a: &[Complex64], b: &[Complex64], dim: usize) -> f64 {
    let d = DMatrix::from_fn(dim, dim, |i, j| a[i * dim + j] - b[i * dim + j]);
    d.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Dense `e^{-iHt}`.
pub fn dense_propagator(spectrum: &SpectralDecomposition, t: f64) -> Vec<Complex64> {
    let dim = 1usize << spectrum.n_qubits;
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        spectrum.eigenvalues.iter().map(|&e| Complex64::cis(-e * t)),
    ));
    let u = &spectrum.vectors * phases * spectrum.vectors.adjoint();
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] = u[(i, j)];
        }
    }
    out
}
