use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Composite Newton–Cotes rule; `order()` is the exponent `2s` of the
/// global error `O(h^{2s})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Trapezoid,
    Simpson,
}

impl Method {
    pub fn s(self) -> u32 {
        match self {
            Method::Trapezoid => 1,
            Method::Simpson => 2,
        }
    }

    pub fn order(self) -> u32 {
        2 * self.s()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationScheme {
    pub method: Method,
    /// Number of intervals; the grid has `n_intervals + 1` points.
    pub n_intervals: usize,
}

impl IntegrationScheme {
    pub fn new(method: Method, n_intervals: usize) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::Grid("need at least one interval".into()));
        }
        if method == Method::Simpson && n_intervals % 2 == 1 {
            return Err(Error::Grid(format!("Simpson's rule needs an even interval count, got {n_intervals}")));
        }
        Ok(IntegrationScheme { method, n_intervals })
    }

    /// Equally spaced grid on `[0, t]`.
    pub fn grid<T: Real>(&self, t: T) -> Vec<T> {
        let n = self.n_intervals;
        (0..=n).map(|k| t * T::of(k as f64) / T::of(n as f64)).collect()
    }
}

/// Grid size and per-point statistical target for a total phase error
/// `epsilon` at time `t`: `N = ceil((n t/ε)^{1/2s} · t)` intervals (even for
/// Simpson, at least 2) and `η = ε/√N`.
pub fn choose_grid(n: usize, t: f64, epsilon: f64, method: Method) -> Result<(usize, f64)> {
    if !(epsilon > 0.0) || !(t >= 0.0) {
        return Err(Error::Grid(format!("need epsilon > 0 and t >= 0, got {epsilon}, {t}")));
    }
    let s = method.s() as f64;
    let raw = (n as f64 * t / epsilon).powf(1.0 / (2.0 * s)) * t;
    let mut intervals = (raw.ceil() as usize).max(2);
    if method == Method::Simpson && intervals % 2 == 1 {
        intervals += 1;
    }
    Ok((intervals, epsilon / (intervals as f64).sqrt()))
}

/// Weight rows `w[k][i]` with `∫_0^{t_k} f ≈ Σ_i w[k][i] f_i`. Simpson
/// points at odd `k > 1` close the last interval with the three-point rule
/// `h/12 (−f_{k−2} + 8 f_{k−1} + 5 f_k)`.
pub fn cumulative_weights(n_points: usize, h: f64, method: Method) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(n_points);
    for k in 0..n_points {
        let mut w = vec![0.0; k + 1];
        match method {
            Method::Trapezoid => {
                for i in 0..k {
                    w[i] += h / 2.0;
                    w[i + 1] += h / 2.0;
                }
            }
            Method::Simpson => {
                if k == 1 {
                    w[0] += h / 2.0;
                    w[1] += h / 2.0;
                } else {
                    let even = k - k % 2;
                    for i in (0..even).step_by(2) {
                        w[i] += h / 3.0;
                        w[i + 1] += 4.0 * h / 3.0;
                        w[i + 2] += h / 3.0;
                    }
                    if k % 2 == 1 {
                        w[k - 2] -= h / 12.0;
                        w[k - 1] += 8.0 * h / 12.0;
                        w[k] += 5.0 * h / 12.0;
                    }
                }
            }
        }
        rows.push(w);
    }
    rows
}

/// Cumulative integral of sampled gradients from `φ(0) = 0` with
/// root-sum-square propagation of independent per-point uncertainties.
pub fn integrate_gradient(
    times: &[f64],
    gradients: &[f64],
    uncertainties: &[f64],
    method: Method,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = times.len();
    if n == 0 || gradients.len() != n || uncertainties.len() != n {
        return Err(Error::Grid("times, gradients and uncertainties must have equal non-zero length".into()));
    }
    if times[0].abs() > 1e-12 {
        return Err(Error::Grid(format!("grid must start at 0, starts at {}", times[0])));
    }
    if n == 1 {
        return Ok((vec![0.0], vec![0.0]));
    }
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    for (k, t) in times.iter().enumerate() {
        if (t - k as f64 * h).abs() > 1e-9 * h.max(1.0) * (n as f64) {
            return Err(Error::Grid(format!("unequal spacing at point {k}")));
        }
    }
    if method == Method::Simpson && (n - 1) % 2 == 1 {
        return Err(Error::Grid(format!("Simpson's rule needs an even interval count, got {}", n - 1)));
    }
    let rows = cumulative_weights(n, h, method);
    let phi = rows.iter().map(|w| w.iter().zip(gradients).map(|(a, b)| a * b).sum()).collect();
    let dphi = rows
        .iter()
        .map(|w| w.iter().zip(uncertainties).map(|(a, s)| (a * s).powi(2)).sum::<f64>().sqrt())
        .collect();
    Ok((phi, dphi))
}
