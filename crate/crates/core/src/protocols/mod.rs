//! The three echo-measurement protocols and their orchestration.

mod common;
mod dpg;
mod ite;
mod run;
mod sht;

pub use common::{apply_noisy, ancilla_probabilities, Estimate, Evolution, Shots, Sign};
pub use dpg::{allocate_shots_dpg, dpg_gradient, dpg_point, dpg_term, DpgPoint, DpgShotPlan};
pub use ite::{apply_ite_trajectory, IteTrajectory, default_tau, ite_gradient, ite_plan, ItePlan, IteResult, TauRule};
pub use run::{default_window, run_protocol, Protocol, RunOutput};
pub use sht::{
    allocate_shots_sht, amplitude_estimate, recursive_magnitudes, sht_reconstruct, sht_step, ShotPlan, ShtMeasurement,
};
