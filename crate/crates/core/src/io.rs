//! Result files: echo and spectrum CSVs with fixed column order and
//! 17-significant-digit reals, and the JSON run manifest.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::LdosSpectrum;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::protocols::RunOutput;
use crate::series::{EchoSeries, ShotTotals, Truncation};

pub const ECHO_FILE: &str = "echo.csv";
pub const RAW_ECHO_FILE: &str = "echo_raw.csv";
pub const LDOS_FILE: &str = "ldos.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const ECHO_COLUMNS: [&str; 8] = ["label", "t", "r", "phi", "dr", "dphi", "truncated", "proper"];

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Write via a temporary sibling and rename, so readers never see a partial
/// file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// One row per entry; `truncated` is 1 on the last row when the series
/// stopped early.
pub fn echo_csv(series: &EchoSeries) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ECHO_COLUMNS).map_err(csv_err)?;
    let last = series.entries.len() - 1;
    for (i, e) in series.entries.iter().enumerate() {
        let flag = if i == last && series.truncated.is_some() { "1" } else { "0" };
        w.write_record([
            e.label.to_string(),
            real(e.t),
            real(e.r),
            real(e.phi),
            real(e.dr),
            real(e.dphi),
            flag.to_string(),
            (e.proper as u8).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

pub fn ldos_csv(spectrum: &LdosSpectrum) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["E", "D", "dD"]).map_err(csv_err)?;
    for ((e, d), s) in spectrum.energies.iter().zip(&spectrum.density).zip(&spectrum.uncertainty) {
        w.write_record([real(*e), real(*d), real(*s)]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct EchoRow {
    pub label: usize,
    pub t: f64,
    pub r: f64,
    pub phi: f64,
    pub dr: f64,
    pub dphi: f64,
    pub truncated: u8,
    #[serde(default = "one")]
    pub proper: u8,
}

fn one() -> u8 {
    1
}

pub fn read_echo_csv(path: &Path) -> Result<Vec<EchoRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    r.deserialize().map(|row| row.map_err(|e| Error::Io(format!("{}: {e}", path.display())))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub protocol: String,
    pub seed: u64,
    /// The configuration with the ansatz parameters filled in, enough to
    /// regenerate every CSV.
    pub config: ExperimentConfig,
    pub ansatz_energy: f64,
    pub shots: ShotTotals,
    pub sequence_length: Option<usize>,
    /// Gate-sequence length times shots per measurement, for fixed-shot
    /// sequential runs.
    pub sequence_samples: Option<u64>,
    pub tau: Option<f64>,
    pub grid: Option<crate::analysis::IntegrationScheme>,
    pub eta: Option<f64>,
    pub shot_plan_total: Option<u64>,
    pub fit: Option<crate::noise::DecayFit>,
    pub truncated: Option<Truncation>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

pub fn manifest(cfg: &ExperimentConfig, out: &RunOutput, files: Vec<String>, wall_time_s: f64) -> Manifest {
    let mut resolved = cfg.clone();
    resolved.ansatz.params = Some(out.ansatz.params.clone());
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        protocol: out.series.protocol.clone(),
        seed: cfg.seed,
        config: resolved,
        ansatz_energy: out.ansatz_energy,
        shots: out.series.shots,
        sequence_length: out.sequence_length,
        sequence_samples: match (out.sequence_length, &cfg.shots) {
            (Some(l), crate::config::ShotsConfig::Fixed { count }) => Some(l as u64 * count),
            _ => None,
        },
        tau: out.tau,
        grid: out.grid,
        eta: out.eta,
        shot_plan_total: out.shot_plan.as_ref().map(|p| p.total),
        fit: out.fit.clone(),
        truncated: out.series.truncated.clone(),
        warnings: out.series.warnings.clone(),
        files,
        wall_time_s,
    }
}

/// Write every artifact of a run into `dir`; returns the file names.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, out: &RunOutput, wall_time_s: f64) -> Result<Vec<String>> {
    let mut files = vec![ECHO_FILE.to_string()];
    write_atomic(&dir.join(ECHO_FILE), &echo_csv(&out.series)?)?;
    if let Some(raw) = &out.raw {
        write_atomic(&dir.join(RAW_ECHO_FILE), &echo_csv(raw)?)?;
        files.push(RAW_ECHO_FILE.into());
    }
    if let Some(l) = &out.ldos {
        write_atomic(&dir.join(LDOS_FILE), &ldos_csv(l)?)?;
        files.push(LDOS_FILE.into());
    }
    files.push(MANIFEST_FILE.into());
    let m = manifest(cfg, out, files.clone(), wall_time_s);
    let json = serde_json::to_vec_pretty(&m).map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(&dir.join(MANIFEST_FILE), &json)?;
    Ok(files)
}

/// Row-by-row comparison of two echo files, matched on `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<RowDiff>,
    pub max_abs_r: f64,
    pub max_abs_phi: f64,
    pub rms_r: f64,
    pub rms_phi: f64,
    /// Largest σ-normalized deviation over rows passing the `r` filter.
    pub max_sigma: f64,
    pub min_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowDiff {
    pub t: f64,
    pub label_a: usize,
    pub label_b: usize,
    pub d_r: f64,
    pub d_phi: f64,
    pub sigma_r: f64,
    pub sigma_phi: f64,
    /// Both amplitudes reach `min_r`.
    pub checked: bool,
}

/// `|Δ|/sqrt(σa² + σb²)`; with no uncertainty on either side any difference
/// above 1e-9 counts as infinitely significant.
fn normalized(delta: f64, sa: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    if s > 0.0 {
        delta.abs() / s
    } else if delta.abs() <= 1e-9 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn compare_rows(a: &[EchoRow], b: &[EchoRow], min_r: f64) -> Result<Comparison> {
    let mut rows = Vec::new();
    for x in a {
        if let Some(y) = b.iter().find(|y| (y.t - x.t).abs() <= 1e-9) {
            let d_r = x.r - y.r;
            let d_phi = crate::oracle::wrap(x.phi - y.phi);
            rows.push(RowDiff {
                t: x.t,
                label_a: x.label,
                label_b: y.label,
                d_r,
                d_phi,
                sigma_r: normalized(d_r, x.dr, y.dr),
                sigma_phi: normalized(d_phi, x.dphi, y.dphi),
                checked: x.r >= min_r && y.r >= min_r,
            });
        }
    }
    // the shared origin carries no information
    if rows.iter().all(|r| r.t == 0.0) {
        return Err(Error::InvalidArgument("the two runs share no time points beyond t = 0".into()));
    }
    let k = rows.len() as f64;
    let fold = |f: &dyn Fn(&RowDiff) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(Comparison {
        max_abs_r: fold(&|r| r.d_r.abs()),
        max_abs_phi: fold(&|r| r.d_phi.abs()),
        rms_r: (rows.iter().map(|r| r.d_r * r.d_r).sum::<f64>() / k).sqrt(),
        rms_phi: (rows.iter().map(|r| r.d_phi * r.d_phi).sum::<f64>() / k).sqrt(),
        max_sigma: fold(&|r| if r.checked { r.sigma_r.max(r.sigma_phi) } else { 0.0 }),
        min_r,
        rows,
    })
}

pub fn compare_dirs(a: &Path, b: &Path, min_r: f64) -> Result<Comparison> {
    compare_rows(&read_echo_csv(&a.join(ECHO_FILE))?, &read_echo_csv(&b.join(ECHO_FILE))?, min_r)
}
