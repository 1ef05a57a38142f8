use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::EchoSeries;

/// Gaussian-filtered local density of states on an energy grid. The density
/// is `Σ_k w_k exp(−(E − E_k)²/2δ²)`, so it integrates to `δ√(2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdosSpectrum {
    pub energies: Vec<f64>,
    pub density: Vec<f64>,
    pub uncertainty: Vec<f64>,
    pub delta: f64,
    pub r: usize,
    pub t_max: f64,
    /// Largest `|Im D(E)|` before taking the real part.
    pub imag_max: f64,
}

impl LdosSpectrum {
    pub fn peak(&self) -> (f64, f64) {
        self.energies
            .iter()
            .zip(&self.density)
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, (&e, &d)| if d > acc.1 { (e, d) } else { acc })
    }

    /// `Σ D(E) ΔE / (δ√(2π))`, which approximates the state norm on a wide
    /// uniform grid.
    pub fn normalized_weight(&self) -> f64 {
        if self.energies.len() < 2 {
            return 0.0;
        }
        let de = (self.energies[self.energies.len() - 1] - self.energies[0]) / (self.energies.len() - 1) as f64;
        self.density.iter().sum::<f64>() * de / (self.delta * (2.0 * std::f64::consts::PI).sqrt())
    }
}

/// `(t_m, c_m)` for `m = −R..=R`, `t_m = m·t_max/R`,
/// `c_m = Δt·δ/√(2π)·exp(−t_m²δ²/2)`.
pub fn filter_coefficients(delta: f64, t_max: f64, r: usize) -> Result<Vec<(f64, f64)>> {
    if !(delta > 0.0) || r == 0 || !(t_max > 0.0) {
        return Err(Error::InvalidArgument(format!("need delta > 0, t_max > 0, R >= 1 (got {delta}, {t_max}, {r})")));
    }
    let dt = t_max / r as f64;
    let pref = dt * delta / (2.0 * std::f64::consts::PI).sqrt();
    let r = r as i64;
    Ok((-r..=r)
        .map(|m| {
            let t = m as f64 * dt;
            (t, pref * (-(t * delta).powi(2) / 2.0).exp())
        })
        .collect())
}

/// Uniform grid of `points` energies covering `[lo − 4δ, hi + 4δ]`.
pub fn energy_grid(lo: f64, hi: f64, delta: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo - 4.0 * delta, hi + 4.0 * delta);
    let n = points.max(2);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// `D(E) ≈ Σ_m c_m e^{i E t_m} g(t_m)` with `g(−t) = g(t)*`. Uncertainties
/// propagate independent amplitude errors and cumulative phase errors, whose
/// covariance is `Δφ²` at the earlier of the two times.
pub fn ldos(series: &EchoSeries, coeffs: &[(f64, f64)], e_grid: &[f64]) -> Result<LdosSpectrum> {
    if coeffs.len() < 3 || coeffs.len() % 2 == 0 {
        return Err(Error::InvalidArgument("need 2R+1 coefficients with R >= 1".into()));
    }
    let r = coeffs.len() / 2;
    let t_max = coeffs[coeffs.len() - 1].0;
    let dt = t_max / r as f64;
    let tol = 1e-9 * dt.max(1.0);
    // positive-time points in order m = 0..=R
    let mut points = Vec::with_capacity(r + 1);
    for m in 0..=r {
        let t = coeffs[r + m].0;
        match series.at_time(t, tol) {
            Some(p) => points.push(*p),
            None => {
                return Err(Error::SeriesTooShort { from: t, to: t_max });
            }
        }
    }
    let cs: Vec<f64> = coeffs[r..].iter().map(|&(_, c)| c).collect();

    let mut density = Vec::with_capacity(e_grid.len());
    let mut uncertainty = Vec::with_capacity(e_grid.len());
    let mut imag_max = 0.0f64;
    for &e in e_grid {
        let mut sum = Complex64::new(0.0, 0.0);
        for (m, (p, &c)) in points.iter().zip(&cs).enumerate() {
            let g = p.g();
            sum += c * Complex64::cis(e * p.t) * g;
            if m > 0 {
                sum += c * Complex64::cis(-e * p.t) * g.conj();
            }
        }
        imag_max = imag_max.max(sum.im.abs());
        density.push(sum.re);

        // D = c_0 r_0 cos φ_0 + Σ_{m>0} 2 c_m r_m cos(E t_m + φ_m)
        let mult = |m: usize| if m == 0 { 1.0 } else { 2.0 };
        let mut var = 0.0;
        let mut du_phi = Vec::with_capacity(points.len());
        for (m, (p, &c)) in points.iter().zip(&cs).enumerate() {
            let arg = e * p.t + p.phi;
            let d_r = mult(m) * c * arg.cos();
            var += (d_r * p.dr).powi(2);
            du_phi.push(-mult(m) * c * p.r * arg.sin());
        }
        // Σ_{a,b} u_a u_b v_{min(a,b)} = Σ_k (v_k − v_{k−1}) (Σ_{a≥k} u_a)²
        let mut tail = 0.0;
        let mut tails = vec![0.0; points.len()];
        for k in (0..points.len()).rev() {
            tail += du_phi[k];
            tails[k] = tail;
        }
        let mut v_prev = 0.0f64;
        for (k, p) in points.iter().enumerate() {
            let v = (p.dphi * p.dphi).max(v_prev);
            var += (v - v_prev) * tails[k] * tails[k];
            v_prev = v;
        }
        uncertainty.push(var.sqrt());
    }
    Ok(LdosSpectrum { energies: e_grid.to_vec(), density, uncertainty, delta: delta_of(coeffs, dt), r, t_max, imag_max })
}

fn delta_of(coeffs: &[(f64, f64)], dt: f64) -> f64 {
    // c_0 = Δt·δ/√(2π)
    let r = coeffs.len() / 2;
    coeffs[r].1 * (2.0 * std::f64::consts::PI).sqrt() / dt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::EchoPoint;

    fn eigen_series(e0: f64, dt: f64, steps: usize) -> EchoSeries {
        let mut s = EchoSeries::new("test", 0);
        for m in 1..=steps {
            let t = m as f64 * dt;
            s.entries.push(EchoPoint { label: m, t, r: 1.0, phi: -e0 * t, dr: 0.0, dphi: 0.0, proper: true });
        }
        s
    }

    #[test]
    fn coefficient_shape() {
        let c = filter_coefficients(0.25, 24.0, 96).unwrap();
        assert_eq!(c.len(), 193);
        assert!((c[96].1 - 0.25 * 0.25 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-16);
        for m in 0..96 {
            assert_eq!(c[m].1, c[192 - m].1);
        }
    }

    #[test]
    fn single_line_spectrum() {
        let delta = 0.25;
        let series = eigen_series(-1.3, 0.25, 96);
        let coeffs = filter_coefficients(delta, 24.0, 96).unwrap();
        let grid = energy_grid(-3.0, 1.0, delta, 801);
        let d = ldos(&series, &coeffs, &grid).unwrap();
        assert!(d.imag_max < 1e-12);
        assert!((d.delta - delta).abs() < 1e-12);
        for (e, v) in grid.iter().zip(&d.density) {
            let want = (-(e + 1.3).powi(2) / (2.0 * delta * delta)).exp();
            assert!((v - want).abs() < 1e-6, "{e} {v} {want}");
        }
        assert!((d.normalized_weight() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn short_series_is_reported() {
        let series = eigen_series(0.0, 0.25, 10);
        let coeffs = filter_coefficients(0.25, 6.0, 24).unwrap();
        assert!(matches!(ldos(&series, &coeffs, &[0.0]), Err(Error::SeriesTooShort { .. })));
    }
}
