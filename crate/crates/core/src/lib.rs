//! Local-control measurement of the complex Loschmidt echo
//! `g(t) = ⟨ψ|e^{-iHt}|ψ⟩` on a dense statevector simulator.
//!
//! Three protocols are provided: the sequential Hadamard test, which grows
//! the Trotter circuit one controlled local gate at a time, and two phase
//! gradient methods (direct and imaginary-time) whose gradients are
//! integrated on a time grid. Around them sit a depolarizing-noise
//! trajectory sampler with echo-based amplitude mitigation, local density of
//! states reconstruction and an exact oracle for small systems.
//!
//! The numeric core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix it to double precision.

pub mod analysis;
pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod optimize;
pub mod oracle;
pub mod protocols;
pub mod qsim;
pub mod rng;
pub mod scalar;
pub mod series;

pub use error::{Error, Result};

pub type Complex = scalar::C<f64>;
pub type StateVector = qsim::State<f64>;
pub type Gate = qsim::Gate<f64>;
pub type Circuit = qsim::Circuit<f64>;
pub type Hamiltonian = model::PauliSumHamiltonian<f64>;
pub type TimeSeriesSequence = model::TimeSeriesSequence<f64>;
