//! Dense statevector engine.

mod circuit;
mod gate;
pub mod measure;
mod pauli;
mod state;

pub use circuit::Circuit;
pub use gate::{Gate, MAX_TARGETS};
pub use measure::{Basis, Readout};
pub use pauli::{Pauli, PauliString};
pub use state::State;
