//! Echo time series shared by the protocols, mitigation and spectroscopy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One measured point `g = r·e^{iφ}` with standard uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoPoint {
    /// Gate index for the sequential test, grid index for gradient methods.
    pub label: usize,
    pub t: f64,
    pub r: f64,
    pub phi: f64,
    pub dr: f64,
    pub dphi: f64,
    /// The underlying circuit is a whole number of Trotter steps (always
    /// true for gradient methods).
    pub proper: bool,
}

impl EchoPoint {
    pub fn origin() -> Self {
        EchoPoint { label: 0, t: 0.0, r: 1.0, phi: 0.0, dr: 0.0, dphi: 0.0, proper: true }
    }

    pub fn g(&self) -> num_complex::Complex64 {
        num_complex::Complex64::from_polar(self.r, self.phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Label of the first point that could not be produced.
    pub label: usize,
    pub t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotTotals {
    /// Circuit repetitions, including pilot runs and restarted trajectories.
    pub total: u64,
    pub pilot: u64,
    /// Failed postselections in the imaginary-time method.
    pub restarts: u64,
    /// Number of distinct circuits executed.
    pub circuits: u64,
}

impl ShotTotals {
    pub fn add(&mut self, other: ShotTotals) {
        self.total += other.total;
        self.pilot += other.pilot;
        self.restarts += other.restarts;
        self.circuits += other.circuits;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoSeries {
    pub protocol: String,
    pub seed: u64,
    pub entries: Vec<EchoPoint>,
    pub truncated: Option<Truncation>,
    pub shots: ShotTotals,
    pub warnings: Vec<String>,
}

impl EchoSeries {
    pub fn new(protocol: impl Into<String>, seed: u64) -> Self {
        EchoSeries {
            protocol: protocol.into(),
            seed,
            entries: vec![EchoPoint::origin()],
            truncated: None,
            shots: ShotTotals::default(),
            warnings: Vec::new(),
        }
    }

    pub fn last(&self) -> &EchoPoint {
        self.entries.last().expect("series holds the origin")
    }

    /// Largest time covered without a gap from the truncation.
    pub fn t_max(&self) -> f64 {
        self.last().t
    }

    /// Points at whole Trotter steps.
    pub fn proper(&self) -> impl Iterator<Item = &EchoPoint> {
        self.entries.iter().filter(|e| e.proper)
    }

    /// Proper point at time `t` (within `tol`).
    pub fn at_time(&self, t: f64, tol: f64) -> Option<&EchoPoint> {
        self.proper().find(|e| (e.t - t).abs() <= tol)
    }

    /// Check the structural invariants: origin, non-negative uncertainties,
    /// and phase continuity.
    pub fn validate(&self) -> Result<()> {
        let first = self.entries.first().ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
        if first.r != 1.0 || first.phi != 0.0 {
            return Err(Error::InvalidArgument("series must start at g = 1".into()));
        }
        for w in self.entries.windows(2) {
            if (w[1].phi - w[0].phi).abs() >= std::f64::consts::PI {
                return Err(Error::InvalidArgument(format!("phase jump at label {}", w[1].label)));
            }
        }
        if self.entries.iter().any(|e| e.dr < 0.0 || e.dphi < 0.0 || e.dr.is_nan() || e.dphi.is_nan()) {
            return Err(Error::InvalidArgument("negative or NaN uncertainty".into()));
        }
        Ok(())
    }
}
