//! Depolarizing gate noise by trajectory sampling, echo calibration of the
//! resulting amplitude decay, and its removal from measured series.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{trotter2_circuit, PauliSumHamiltonian};
use crate::qsim::{Circuit, Pauli, PauliString, Readout, State};
use crate::rng::{categorical, multinomial, RngSeed};
use crate::scalar::Real;
use crate::series::EchoSeries;

/// How a noisy gate's error is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    /// One of the `4^k − 1` non-identity Paulis on the whole support, with
    /// total probability `γ`.
    #[default]
    Joint,
    /// Each qubit of the support independently receives X, Y or Z with
    /// probability `γ`.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub gamma: f64,
    /// Gates touching fewer qubits (control included) are noiseless.
    #[serde(default = "default_min_arity")]
    pub min_arity: usize,
    #[serde(default)]
    pub channel: Channel,
}

fn default_min_arity() -> usize {
    2
}

impl NoiseModel {
    pub fn new(gamma: f64) -> Result<Self> {
        let m = NoiseModel { gamma, min_arity: 2, channel: Channel::Joint };
        m.validate()?;
        Ok(m)
    }

    pub fn with_channel(mut self, channel: Channel) -> Self {
        self.channel = channel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.min_arity == 0 {
            return Err(Error::InvalidArgument("min_arity must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.gamma == 0.0
    }
}

/// Uniformly random non-identity Pauli on `qubits`.
fn random_pauli<R: Rng + ?Sized>(rng: &mut R, n_qubits: usize, qubits: &[usize]) -> PauliString {
    let k = qubits.len() as u32;
    let mut idx: u64 = rng.random_range(1..4u64.pow(k));
    let mut factors = Vec::with_capacity(qubits.len());
    for &q in qubits.iter().rev() {
        match idx % 4 {
            1 => factors.push((q, Pauli::X)),
            2 => factors.push((q, Pauli::Y)),
            3 => factors.push((q, Pauli::Z)),
            _ => {}
        }
        idx /= 4;
    }
    PauliString::new(n_qubits, factors).expect("distinct in-range qubits")
}

/// One trajectory of the depolarizing channel on `qubits`: with probability
/// `γ` a uniformly drawn non-identity Pauli is applied. Returns the applied
/// Pauli, if any.
pub fn depolarize_after_gate<T: Real, R: Rng + ?Sized>(
    state: &mut State<T>,
    qubits: &[usize],
    gamma: f64,
    rng: &mut R,
) -> Result<Option<PauliString>> {
    if let Some(&q) = qubits.iter().find(|&&q| q >= state.n_qubits()) {
        return Err(Error::QubitOutOfRange { index: q, n_qubits: state.n_qubits() });
    }
    if qubits.is_empty() || gamma <= 0.0 || rng.random::<f64>() >= gamma {
        return Ok(None);
    }
    let p = random_pauli(rng, state.n_qubits(), qubits);
    state.apply_pauli(&p)?;
    Ok(Some(p))
}

/// Error location: after gate `gate`, on `qubits`.
#[derive(Debug, Clone)]
struct Slot {
    gate: usize,
    qubits: Vec<usize>,
}

/// Cached states are dropped above this many bytes and errored shots are
/// re-simulated from the start instead.
const CACHE_BUDGET_BYTES: usize = 1 << 30;
const CHUNK_SHOTS: u64 = 512;

/// Shot sampler for one noisy circuit from a fixed input state. Shots without
/// any error are drawn together from the ideal outcome probabilities; an
/// errored shot starts from the cached ideal state just after its first
/// error, runs to its last error and is closed by an inner product with the
/// cached back-propagated readout state.
pub struct NoisySampler<'a, T: Real> {
    circuit: &'a Circuit<T>,
    noise: NoiseModel,
    initial: State<T>,
    slots: Vec<Slot>,
    forward: Option<Vec<State<T>>>,
    last: State<T>,
}

impl<'a, T: Real> NoisySampler<'a, T> {
    pub fn new(circuit: &'a Circuit<T>, initial: State<T>, noise: NoiseModel) -> Result<Self> {
        noise.validate()?;
        if initial.n_qubits() != circuit.n_qubits() {
            return Err(Error::DimensionMismatch { expected: circuit.n_qubits(), got: initial.n_qubits() });
        }
        let mut slots = Vec::new();
        for (i, g) in circuit.gates().iter().enumerate() {
            if g.arity() < noise.min_arity {
                continue;
            }
            let support = g.support();
            match noise.channel {
                Channel::Joint => slots.push(Slot { gate: i, qubits: support }),
                Channel::Independent => {
                    slots.extend(support.into_iter().map(|q| Slot { gate: i, qubits: vec![q] }));
                }
            }
        }
        let bytes = (circuit.len() + 1) * 3 * (1usize << circuit.n_qubits()) * 2 * std::mem::size_of::<T>();
        let cache = !noise.is_noiseless() && bytes <= CACHE_BUDGET_BYTES;
        let mut s = initial.clone();
        let mut forward = if cache { Some(Vec::with_capacity(circuit.len() + 1)) } else { None };
        if let Some(f) = forward.as_mut() {
            f.push(s.clone());
        }
        for g in circuit.gates() {
            s.apply_gate(g)?;
            if let Some(f) = forward.as_mut() {
                f.push(s.clone());
            }
        }
        Ok(NoisySampler { circuit, noise, initial, slots, forward, last: s })
    }

    /// Noiseless output state.
    pub fn ideal_state(&self) -> &State<T> {
        &self.last
    }

    pub fn noisy_locations(&self) -> usize {
        self.slots.len()
    }

    /// `⟨bra|U_ideal|ψ_0⟩` probabilities for each bra.
    pub fn ideal_probabilities(&self, bras: &[State<T>]) -> Result<Vec<f64>> {
        bras.iter().map(|b| Ok(b.inner(&self.last)?.norm_sqr().as_f64())).collect()
    }

    /// Counts of outcomes projecting onto each of the orthogonal `bras`; the
    /// remaining probability is an implicit "other" outcome.
    pub fn sample(&self, bras: &[State<T>], shots: u64, seed: RngSeed) -> Result<Vec<u64>> {
        if shots == 0 {
            return Err(Error::ZeroShots);
        }
        let ideal = self.ideal_probabilities(bras)?;
        if self.noise.is_noiseless() || self.slots.is_empty() {
            return Ok(multinomial(&mut seed.rng(), shots, &ideal));
        }
        let backward = if self.forward.is_some() { Some(self.backward_states(bras)?) } else { None };
        let geometric = Geometric::new(self.noise.gamma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let chunks = shots.div_ceil(CHUNK_SHOTS);
        let partial: Vec<Result<(u64, Vec<u64>)>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let n = CHUNK_SHOTS.min(shots - c * CHUNK_SHOTS);
                let mut rng = seed.derive(c).rng();
                let mut clean = 0u64;
                let mut counts = vec![0u64; bras.len()];
                let mut errors: Vec<(usize, PauliString)> = Vec::new();
                for _ in 0..n {
                    errors.clear();
                    let mut pos = 0usize;
                    loop {
                        let skip = geometric.sample(&mut rng);
                        pos = pos.saturating_add(usize::try_from(skip).unwrap_or(usize::MAX));
                        if pos >= self.slots.len() {
                            break;
                        }
                        let slot = &self.slots[pos];
                        errors.push((slot.gate, random_pauli(&mut rng, self.circuit.n_qubits(), &slot.qubits)));
                        pos += 1;
                    }
                    if errors.is_empty() {
                        clean += 1;
                        continue;
                    }
                    let probs = self.errored_probabilities(&errors, bras, backward.as_deref())?;
                    let k = categorical(&mut rng, &probs);
                    if k < counts.len() {
                        counts[k] += 1;
                    }
                }
                Ok((clean, counts))
            })
            .collect();
        let mut clean = 0u64;
        let mut counts = vec![0u64; bras.len()];
        for p in partial {
            let (c, k) = p?;
            clean += c;
            for (a, b) in counts.iter_mut().zip(k) {
                *a += b;
            }
        }
        let ideal_counts = multinomial(&mut seed.derive(u64::MAX).rng(), clean, &ideal);
        for (a, b) in counts.iter_mut().zip(ideal_counts) {
            *a += b;
        }
        Ok(counts)
    }

    /// `backward[b][i] = (g_{L−1} ⋯ g_i)† |bra_b⟩`, so the amplitude of a
    /// state `φ` taken after gate `i − 1` is `⟨backward[b][i]|φ⟩`.
    fn backward_states(&self, bras: &[State<T>]) -> Result<Vec<Vec<State<T>>>> {
        let gates = self.circuit.gates();
        bras.iter()
            .map(|bra| {
                let mut out = vec![bra.clone(); gates.len() + 1];
                let mut s = bra.clone();
                for i in (0..gates.len()).rev() {
                    s.apply_gate(&gates[i].dagger())?;
                    out[i] = s.clone();
                }
                Ok(out)
            })
            .collect()
    }

    fn errored_probabilities(
        &self,
        errors: &[(usize, PauliString)],
        bras: &[State<T>],
        backward: Option<&[Vec<State<T>>]>,
    ) -> Result<Vec<f64>> {
        let gates = self.circuit.gates();
        let (mut phi, start) = match &self.forward {
            Some(f) => (f[errors[0].0 + 1].clone(), errors[0].0 + 1),
            None => (self.initial.clone(), 0),
        };
        let stop = match backward {
            Some(_) => errors[errors.len() - 1].0 + 1,
            None => gates.len(),
        };
        let mut next = 0usize;
        if self.forward.is_some() {
            // errors on the first error's gate act on the cached state
            while next < errors.len() && errors[next].0 + 1 == start {
                phi.apply_pauli(&errors[next].1)?;
                next += 1;
            }
        }
        for (i, g) in gates.iter().enumerate().take(stop).skip(start) {
            phi.apply_gate(g)?;
            while next < errors.len() && errors[next].0 == i {
                phi.apply_pauli(&errors[next].1)?;
                next += 1;
            }
        }
        match backward {
            Some(b) => b.iter().map(|chi| Ok(chi[stop].inner(&phi)?.norm_sqr().as_f64())).collect(),
            None => bras.iter().map(|bra| Ok(bra.inner(&phi)?.norm_sqr().as_f64())).collect(),
        }
    }
}

/// Computational basis states for the tracked outcomes of a readout.
pub fn readout_bras<T: Real>(n_qubits: usize, readout: Readout) -> Vec<State<T>> {
    readout.targets().iter().map(|&i| State::basis(n_qubits, i)).collect()
}

/// Outcome counts of `circuit` applied to `|0…0⟩` and read out with
/// `readout`, with or without noise.
pub fn run_counts<T: Real>(
    circuit: &Circuit<T>,
    readout: Readout,
    shots: u64,
    noise: Option<&NoiseModel>,
    seed: RngSeed,
) -> Result<Vec<u64>> {
    let n = circuit.n_qubits();
    let noise = noise.copied().unwrap_or(NoiseModel { gamma: 0.0, min_arity: 2, channel: Channel::Joint });
    let sampler = NoisySampler::new(circuit, State::zero(n), noise)?;
    sampler.sample(&readout_bras(n, readout), shots, seed)
}

/// Forward-then-backward circuit `prep · U_k · U_k† · prep†` for label
/// `t = 2k·dt`. The meeting half steps merge into one identity-valued gate
/// that is kept (and stays noisy), so the gate count matches the forward
/// circuit of duration `t`.
pub fn calibration_circuit<T: Real>(
    prep: &Circuit<T>,
    h: &PauliSumHamiltonian<T>,
    t: f64,
    dt: f64,
) -> Result<Circuit<T>> {
    let k2 = crate::model::step_count(t, dt)?;
    if k2 % 2 == 1 {
        return Err(Error::NotMultipleOfStep { t, dt: 2.0 * dt });
    }
    let mut c = prep.clone();
    if k2 > 0 {
        let u = trotter2_circuit(h, T::of(t / 2.0), T::of(dt))?;
        let mut echo = u.clone();
        echo.extend(&u.inverse())?;
        c.extend(&echo.merged())?;
    }
    c.extend(&prep.inverse())?;
    Ok(c)
}

/// Least-squares fit of `p(t) = A² e^{−2Γt}` on `ln p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Amplitude decay rate `Γ`.
    pub gamma: f64,
    /// Amplitude prefactor `A`.
    pub amplitude: f64,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// Reduced weighted residual sum of squares.
    pub residual: f64,
    pub r_squared: f64,
    pub gamma_std: f64,
    pub ln_amplitude_std: f64,
    pub cov_gamma_ln_amplitude: f64,
    /// Γ < 0 or A > 1 from the raw fit were clamped to the physical range.
    pub clamped: bool,
}

impl DecayFit {
    /// The identity correction.
    pub fn none() -> Self {
        DecayFit {
            gamma: 0.0,
            amplitude: 1.0,
            times: Vec::new(),
            survival: Vec::new(),
            residual: 0.0,
            r_squared: 1.0,
            gamma_std: 0.0,
            ln_amplitude_std: 0.0,
            cov_gamma_ln_amplitude: 0.0,
            clamped: false,
        }
    }
}

/// Weighted fit with `Var(ln p̂) ≈ (1 − p̂)/(p̂·M)`; points with
/// `p̂ < 5/M` are dropped.
pub fn fit_decay(times: &[f64], survival: &[f64], shots: u64) -> Result<DecayFit> {
    if times.len() != survival.len() {
        return Err(Error::Fit("times and survival differ in length".into()));
    }
    let m = shots.max(1) as f64;
    let mut pts = Vec::new();
    for (&t, &p) in times.iter().zip(survival) {
        if p.is_finite() && p > 0.0 && p >= 5.0 / m {
            let var = (1.0 - p).max(1.0 / m) / (p * m);
            pts.push((t, p.ln(), 1.0 / var));
        }
    }
    if pts.len() < 2 {
        return Err(Error::Fit(format!("{} usable points, need at least 2", pts.len())));
    }
    let s: f64 = pts.iter().map(|p| p.2).sum();
    let st: f64 = pts.iter().map(|p| p.2 * p.0).sum();
    let stt: f64 = pts.iter().map(|p| p.2 * p.0 * p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.2 * p.1).sum();
    let sty: f64 = pts.iter().map(|p| p.2 * p.0 * p.1).sum();
    let det = s * stt - st * st;
    if det.abs() < 1e-300 {
        return Err(Error::Fit("all usable points share one time".into()));
    }
    let slope = (s * sty - st * sy) / det;
    let intercept = (stt * sy - st * sty) / det;
    let var_slope = s / det;
    let var_intercept = stt / det;
    let cov = -st / det;
    let ybar = sy / s;
    let rss: f64 = pts.iter().map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2)).sum();
    let tss: f64 = pts.iter().map(|p| p.2 * (p.1 - ybar).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let dof = (pts.len() as f64 - 2.0).max(1.0);

    let mut gamma = -slope / 2.0;
    let mut amplitude = (intercept / 2.0).exp();
    let mut clamped = false;
    if gamma < 0.0 {
        gamma = 0.0;
        clamped = true;
    }
    if amplitude > 1.0 {
        amplitude = 1.0;
        clamped = true;
    }
    Ok(DecayFit {
        gamma,
        amplitude,
        times: times.to_vec(),
        survival: survival.to_vec(),
        residual: rss / dof,
        r_squared,
        gamma_std: var_slope.sqrt() / 2.0,
        ln_amplitude_std: var_intercept.sqrt() / 2.0,
        // Γ = −b/2, ln A = a/2
        cov_gamma_ln_amplitude: -cov / 4.0,
        clamped,
    })
}

/// Survival of the forward-backward circuits under noise, then
/// [`fit_decay`].
pub fn echo_calibration<T: Real>(
    prep: &Circuit<T>,
    h: &PauliSumHamiltonian<T>,
    t_grid: &[f64],
    dt: f64,
    noise: &NoiseModel,
    shots: u64,
    seed: RngSeed,
) -> Result<DecayFit> {
    if t_grid.is_empty() {
        return Err(Error::Fit("empty calibration grid".into()));
    }
    let survival = t_grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let c = calibration_circuit(prep, h, t, dt)?;
            let counts = run_counts(&c, Readout::Projection, shots, Some(noise), seed.derive(i as u64))?;
            Ok(counts[0] as f64 / shots as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    fit_decay(t_grid, &survival, shots)
}

/// `r ↦ r·e^{Γt}/A`, uncertainties scaled alike and, if requested, the fit
/// uncertainty added in quadrature. Phases are left alone.
pub fn mitigate_series(series: &EchoSeries, fit: &DecayFit, include_fit_uncertainty: bool) -> Result<EchoSeries> {
    let times: Vec<f64> = series.entries.iter().map(|e| e.t).collect();
    mitigate_series_at(series, fit, include_fit_uncertainty, &times)
}

/// As [`mitigate_series`], but entry `i` is corrected for the decay at
/// `noise_times[i]` instead of its own time.
pub fn mitigate_series_at(
    series: &EchoSeries,
    fit: &DecayFit,
    include_fit_uncertainty: bool,
    noise_times: &[f64],
) -> Result<EchoSeries> {
    if !fit.gamma.is_finite() || !(fit.amplitude > 0.0) {
        return Err(Error::Fit(format!("unusable fit: Γ = {}, A = {}", fit.gamma, fit.amplitude)));
    }
    if noise_times.len() != series.entries.len() {
        return Err(Error::InvalidArgument(format!(
            "{} noise times for {} entries",
            noise_times.len(),
            series.entries.len()
        )));
    }
    let mut out = series.clone();
    let mut over = false;
    for (e, &t) in out.entries.iter_mut().zip(noise_times).skip(1) {
        let factor = (fit.gamma * t).exp() / fit.amplitude;
        e.r *= factor;
        e.dr *= factor;
        if include_fit_uncertainty {
            let var_log =
                (t * fit.gamma_std).powi(2) + fit.ln_amplitude_std.powi(2) - 2.0 * t * fit.cov_gamma_ln_amplitude;
            e.dr = (e.dr * e.dr + e.r * e.r * var_log.max(0.0)).sqrt();
        }
        over |= e.r > 1.5;
    }
    if over {
        out.warnings.push("mitigated amplitude exceeds 1.5 (over-mitigation)".into());
    }
    Ok(out)
}

/// Copy of the series with amplitudes capped at 1, as used for spectra.
pub fn clamp_amplitudes(series: &EchoSeries) -> EchoSeries {
    let mut out = series.clone();
    for e in out.entries.iter_mut() {
        e.r = e.r.min(1.0);
    }
    out
}

/// Average of `|ψ⟩⟨ψ|` over trajectories, for channel checks on small
/// registers.
pub fn trajectory_density_matrix<T: Real>(
    state: &State<T>,
    qubits: &[usize],
    gamma: f64,
    trajectories: usize,
    seed: RngSeed,
) -> Result<Vec<num_complex::Complex64>> {
    let dim = state.amplitudes().len();
    let mut rho = vec![num_complex::Complex64::new(0.0, 0.0); dim * dim];
    let mut rng = seed.rng();
    for _ in 0..trajectories {
        let mut s = state.clone();
        depolarize_after_gate(&mut s, qubits, gamma, &mut rng)?;
        let a: Vec<num_complex::Complex64> =
            s.amplitudes().iter().map(|z| num_complex::Complex64::new(z.re.as_f64(), z.im.as_f64())).collect();
        for i in 0..dim {
            for j in 0..dim {
                rho[i * dim + j] += a[i] * a[j].conj();
            }
        }
    }
    let w = 1.0 / trajectories as f64;
    rho.iter_mut().for_each(|x| *x *= w);
    Ok(rho)
}
