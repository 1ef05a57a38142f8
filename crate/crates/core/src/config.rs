//! Experiment description read from TOML. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::Method;
use crate::error::{Error, Result};
use crate::model::{build_ising, case_study_family, AnsatzKind, PauliSumHamiltonian};
use crate::noise::NoiseModel;
use crate::protocols::{Evolution, Protocol, TauRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub protocol: Protocol,
    pub model: ModelConfig,
    pub ansatz: AnsatzConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub shots: ShotsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<MitigationConfig>,
    #[serde(default)]
    pub gradient: GradientConfig,
    #[serde(default)]
    pub ite: IteConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ldos: Option<LdosConfig>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingParams {
    pub j: f64,
    pub bx: f64,
    pub bz: f64,
}

/// Either the interpolated family `(1 − λ) H_0 + λ H_1` or explicit Ising
/// couplings; open boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_qubits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ising: Option<IsingParams>,
}

impl ModelConfig {
    pub fn hamiltonian(&self) -> Result<PauliSumHamiltonian<f64>> {
        match (self.lambda, self.ising) {
            (Some(l), None) => case_study_family(self.n_qubits, l),
            (None, Some(p)) => build_ising(self.n_qubits, p.j, p.bx, p.bz, true),
            _ => Err(Error::Config("model: give exactly one of `lambda` or `ising`".into())),
        }
    }
}

/// Explicit parameters, or a variational ground-state search when `params`
/// is absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzConfig {
    pub kind: AnsatzKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max: f64,
    /// Trotter step.
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", tag = "mode", deny_unknown_fields)]
pub enum ShotsConfig {
    /// Infinite-shot expectations.
    #[default]
    Exact,
    /// The same count for every measured quantity.
    Fixed { count: u64 },
    /// Counts from the variance bounds for a phase target `epsilon`, using a
    /// pilot run of `pilot` shots per circuit.
    Allocated {
        epsilon: f64,
        #[serde(default = "default_pilot")]
        pilot: u64,
    },
}

fn default_pilot() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Forward-backward durations; multiples of `2·dt`. Defaults to every
    /// multiple up to `t_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Shots per calibration circuit; defaults to the run's count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    /// Add the fit's own uncertainty to the mitigated amplitudes.
    #[serde(default = "yes")]
    pub include_fit_uncertainty: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolutionKind {
    Trotter,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientConfig {
    #[serde(default = "default_evolution")]
    pub evolution: EvolutionKind,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Explicit interval count; otherwise chosen from `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_intervals: Option<usize>,
    #[serde(default = "default_grid_epsilon")]
    pub epsilon: f64,
}

fn default_evolution() -> EvolutionKind {
    EvolutionKind::Trotter
}

fn default_method() -> Method {
    Method::Simpson
}

fn default_grid_epsilon() -> f64 {
    1e-2
}

impl Default for GradientConfig {
    fn default() -> Self {
        GradientConfig {
            evolution: default_evolution(),
            method: default_method(),
            n_intervals: None,
            epsilon: default_grid_epsilon(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IteConfig {
    #[serde(default)]
    pub tau: TauRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdosConfig {
    pub delta: f64,
    /// Positive-time filter points `R`; defaults to one per grid point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Defaults to `time.t_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_max: Option<f64>,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_points() -> usize {
    400
}

/// What the `oracle` protocol reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OracleReference {
    /// `⟨ψ|e^{-iHt}|ψ⟩` at multiples of `dt`.
    #[default]
    Exact,
    /// `⟨ψ|U_l|ψ⟩` for every circuit of the sequential test's gate sequence.
    Circuit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub reference: OracleReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate; a relative output directory is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.output.dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.output.dir = parent.join(&cfg.output.dir);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn evolution(&self) -> Evolution {
        match self.gradient.evolution {
            EvolutionKind::Trotter => Evolution::Trotter { dt: self.time.dt },
            EvolutionKind::Exact => Evolution::Exact,
        }
    }

    pub fn noise_model(&self) -> Option<&NoiseModel> {
        self.noise.as_ref().filter(|m| !m.is_noiseless())
    }

    /// Checks that cross several sections; each message names the key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::Config(format!("{key}: {msg}")));
        if self.model.n_qubits < 2 {
            return bad("model.n_qubits", format!("need at least 2, got {}", self.model.n_qubits));
        }
        if self.model.lambda.is_some() == self.model.ising.is_some() {
            return bad("model", "give exactly one of `lambda` or `ising`".into());
        }
        if let Some(l) = self.model.lambda {
            if !(0.0..=1.0).contains(&l) {
                return bad("model.lambda", format!("must lie in [0, 1], got {l}"));
            }
        }
        if let Some(p) = &self.ansatz.params {
            if p.len() != self.ansatz.kind.n_params() {
                return bad(
                    "ansatz.params",
                    format!("{:?} takes {} parameters, got {}", self.ansatz.kind, self.ansatz.kind.n_params(), p.len()),
                );
            }
        } else if self.ansatz.restarts == 0 {
            return bad("ansatz.restarts", "need at least one restart to optimize".into());
        }
        if !(self.time.t_max >= 0.0) || !self.time.t_max.is_finite() {
            return bad("time.t_max", format!("must be finite and non-negative, got {}", self.time.t_max));
        }
        if !(self.time.dt > 0.0) {
            return bad("time.dt", format!("must be positive, got {}", self.time.dt));
        }
        let steps = self.time.t_max / self.time.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return bad("time.t_max", format!("{} is not a multiple of dt = {}", self.time.t_max, self.time.dt));
        }
        match self.shots {
            ShotsConfig::Fixed { count: 0 } => return bad("shots.count", "must be at least 1".into()),
            ShotsConfig::Allocated { epsilon, pilot } => {
                if !(epsilon > 0.0) {
                    return bad("shots.epsilon", format!("must be positive, got {epsilon}"));
                }
                if pilot == 0 {
                    return bad("shots.pilot", "must be at least 1".into());
                }
            }
            _ => {}
        }
        if let Some(n) = &self.noise {
            if !(0.0..=1.0).contains(&n.gamma) {
                return bad("noise.gamma", format!("must lie in [0, 1], got {}", n.gamma));
            }
            if n.min_arity == 0 {
                return bad("noise.min_arity", "must be at least 1".into());
            }
        }
        if self.noise_model().is_some() {
            if self.shots == ShotsConfig::Exact {
                return bad("shots.mode", "noisy runs need a finite shot count".into());
            }
            if self.protocol == Protocol::Oracle {
                return bad("noise", "the oracle protocol is noiseless".into());
            }
            if self.gradient.evolution == EvolutionKind::Exact && matches!(self.protocol, Protocol::Dpg | Protocol::Ite)
            {
                return bad("gradient.evolution", "noisy runs need Trotter circuits".into());
            }
        }
        if let Some(m) = &self.mitigation {
            if m.enabled && self.noise_model().is_none() {
                return bad("mitigation.enabled", "mitigation needs a noise model".into());
            }
            if m.shots == Some(0) {
                return bad("mitigation.shots", "must be at least 1".into());
            }
            if let Some(ts) = &m.times {
                for &t in ts {
                    let k = t / (2.0 * self.time.dt);
                    if !(t >= 0.0) || (k - k.round()).abs() > 1e-9 * k.max(1.0) {
                        return bad("mitigation.times", format!("{t} is not a multiple of 2·dt"));
                    }
                }
            }
        }
        if let Some(n) = self.gradient.n_intervals {
            if n == 0 || (self.gradient.method == Method::Simpson && n % 2 == 1) {
                return bad("gradient.n_intervals", format!("{n} is not a valid interval count for {:?}", self.gradient.method));
            }
        }
        if !(self.gradient.epsilon > 0.0) {
            return bad("gradient.epsilon", format!("must be positive, got {}", self.gradient.epsilon));
        }
        match self.ite.tau {
            TauRule::Fixed { tau } if !(tau > 0.0) => return bad("ite.tau.tau", format!("must be positive, got {tau}")),
            TauRule::Accuracy { epsilon } if !(epsilon > 0.0) => {
                return bad("ite.tau.epsilon", format!("must be positive, got {epsilon}"))
            }
            _ => {}
        }
        if let Some(l) = &self.ldos {
            if !(l.delta > 0.0) {
                return bad("ldos.delta", format!("must be positive, got {}", l.delta));
            }
            if l.r == Some(0) {
                return bad("ldos.r", "must be at least 1".into());
            }
            if l.points < 2 {
                return bad("ldos.points", "need at least 2".into());
            }
            if let Some(t) = l.t_max {
                if !(t > 0.0) || t > self.time.t_max + 1e-9 {
                    return bad("ldos.t_max", format!("must lie in (0, time.t_max], got {t}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
protocol = "sht"
[model]
n_qubits = 4
lambda = 0.5
[ansatz]
kind = "product"
params = [0.1, 0.2]
[time]
t_max = 1.0
dt = 0.25
"#;

    #[test]
    fn minimal_config_round_trips() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.shots, ShotsConfig::Exact);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let e = ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1\n")).unwrap_err();
        assert!(e.to_string().contains("bogus"), "{e}");
        let e = ExperimentConfig::from_toml(&MINIMAL.replace("dt = 0.25", "dt = 0.3")).unwrap_err();
        assert!(e.to_string().contains("time.t_max"), "{e}");
        let noisy = format!("{MINIMAL}\n[noise]\ngamma = 0.002\n");
        let e = ExperimentConfig::from_toml(&noisy).unwrap_err();
        assert!(e.to_string().contains("shots.mode"), "{e}");
        let tagged = format!("{MINIMAL}\n[shots]\nmode = \"fixed\"\ncount = 10\nextra = 1\n");
        assert!(ExperimentConfig::from_toml(&tagged).is_err());
    }
}
