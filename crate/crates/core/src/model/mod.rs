//! Hamiltonians, Trotter compilation and state-preparation ansätze.

mod ansatz;
mod hamiltonian;
mod trotter;

pub use ansatz::{ansatz_energy, optimize_ansatz, prepare_ansatz, AnsatzKind, AnsatzSpec, OptimizedAnsatz};
pub use hamiltonian::{build_ising, case_study_family, interpolate, Layer, PauliSumHamiltonian, Term};
pub use trotter::{
    bond_generators, max_gate_phase, step_count, time_series_sequence, trotter2_circuit, trotter2_evolution,
    trotter2_unmerged, BondGenerator, SeriesEntry, SeriesStep, TimeSeriesSequence,
};
