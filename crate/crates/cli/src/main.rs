use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use loschmidt::analysis::energy_grid;
use loschmidt::config::ExperimentConfig;
use loschmidt::io::{compare_dirs, ldos_csv, write_atomic, write_run, Comparison};
use loschmidt::model::{prepare_ansatz, AnsatzSpec};
use loschmidt::oracle::Oracle;
use loschmidt::protocols::{default_window, run_protocol, Protocol};
use loschmidt::Error;

const THREADS_ENV: &str = "LOSCHMIDT_THREADS";

#[derive(Parser)]
#[command(name = "loschmidt", version, about = "Loschmidt echo experiments on a statevector simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured protocol and write echo.csv, ldos.csv and manifest.json.
    Run {
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact reference for the configured system: echo, spectrum and weights.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the echo series of two result directories.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        /// Exit with status 1 if any σ-normalized deviation exceeds this.
        #[arg(long, default_value_t = 3.0)]
        sigma_threshold: f64,
        /// Only rows where both amplitudes reach this value count towards the
        /// threshold.
        #[arg(long, default_value_t = 0.0)]
        min_r: f64,
        /// Print every matched row.
        #[arg(long)]
        rows: bool,
    },
}

/// Exit status 2 for unusable input, 3 for failures while simulating.
struct Failure {
    code: u8,
    message: String,
}

fn schema(e: Error) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

fn simulation(e: Error) -> Failure {
    Failure { code: 3, message: e.to_string() }
}

fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path).map_err(schema)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    Ok(cfg)
}

fn run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(config, seed, out)?;
    let start = Instant::now();
    let result = run_protocol(&cfg).map_err(simulation)?;
    let wall = start.elapsed().as_secs_f64();
    let files = write_run(&cfg.output.dir, &cfg, &result, wall).map_err(simulation)?;
    let s = &result.series;
    println!(
        "{}: {} points to t = {:.4}, {} shots, {:.2} s",
        s.protocol,
        s.entries.len(),
        s.t_max(),
        s.shots.total,
        wall
    );
    if let Some(t) = &s.truncated {
        println!("truncated at label {} (t = {:.4}): {}", t.label, t.t, t.reason);
    }
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} to {}", files.join(", "), cfg.output.dir.display());
    Ok(())
}

#[derive(Serialize)]
struct OracleDump {
    n_qubits: usize,
    ground_energy: f64,
    state_energy: f64,
    ansatz: AnsatzSpec,
    eigenvalues: Vec<f64>,
    /// `|⟨E_k|ψ⟩|²` per eigenvalue.
    weights: Vec<f64>,
}

fn oracle(config: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = load(config, None, out)?;
    cfg.protocol = Protocol::Oracle;
    let start = Instant::now();
    let result = run_protocol(&cfg).map_err(simulation)?;
    let h = cfg.model.hamiltonian().map_err(schema)?;
    let n = h.n_qubits();
    let prep = prepare_ansatz::<f64>(&result.ansatz, n).map_err(simulation)?;
    let o = Oracle::new(&h, &prep).map_err(simulation)?;
    let dir = &cfg.output.dir;
    let wall = start.elapsed().as_secs_f64();
    write_run(dir, &cfg, &result, wall).map_err(simulation)?;
    if let Some(l) = &cfg.ldos {
        let t_l = l.t_max.unwrap_or(cfg.time.t_max);
        let spacing = l.r.map_or(cfg.time.dt, |r| t_l / r.max(1) as f64);
        let (lo, hi) = default_window(h.one_norm(), result.ansatz_energy, spacing);
        let grid = energy_grid(l.e_min.unwrap_or(lo), l.e_max.unwrap_or(hi), l.delta, l.points);
        let bytes = ldos_csv(&o.ldos(l.delta, &grid)).map_err(simulation)?;
        write_atomic(&dir.join("ldos_exact.csv"), &bytes).map_err(simulation)?;
    }
    let dump = OracleDump {
        n_qubits: n,
        ground_energy: o.spectrum().ground_energy(),
        state_energy: o.energy(),
        ansatz: result.ansatz.clone(),
        eigenvalues: o.spectrum().eigenvalues().to_vec(),
        weights: o.weights().to_vec(),
    };
    let json = serde_json::to_vec_pretty(&dump).map_err(|e| simulation(Error::Io(e.to_string())))?;
    write_atomic(&dir.join("spectrum.json"), &json).map_err(simulation)?;
    println!(
        "oracle: n = {n}, E0 = {:.6}, <H> = {:.6}; wrote {}",
        dump.ground_energy,
        dump.state_energy,
        dir.display()
    );
    Ok(())
}

fn report(c: &Comparison, rows: bool) {
    println!("matched points: {}", c.rows.len());
    println!("max |dr|   = {:.3e}   rms {:.3e}", c.max_abs_r, c.rms_r);
    println!("max |dphi| = {:.3e}   rms {:.3e}", c.max_abs_phi, c.rms_phi);
    println!("max sigma-normalized deviation (r >= {}) = {:.3}", c.min_r, c.max_sigma);
    if rows {
        println!("t,label_a,label_b,dr,dphi,sigma_r,sigma_phi,checked");
        for r in &c.rows {
            println!(
                "{:.16e},{},{},{:.16e},{:.16e},{:.6e},{:.6e},{}",
                r.t, r.label_a, r.label_b, r.d_r, r.d_phi, r.sigma_r, r.sigma_phi, r.checked as u8
            );
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
                    eprintln!("warning: could not set thread count: {e}");
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let outcome = match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, out),
        Command::Oracle { config, out } => oracle(&config, out),
        Command::Compare { dir_a, dir_b, sigma_threshold, min_r, rows } => {
            match compare_dirs(&dir_a, &dir_b, min_r) {
                Ok(c) => {
                    report(&c, rows);
                    if c.max_sigma > sigma_threshold {
                        println!("deviation exceeds threshold {sigma_threshold}");
                        return ExitCode::from(1);
                    }
                    Ok(())
                }
                Err(e) => Err(schema(e)),
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
