use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("dimension mismatch: expected {expected} qubits, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("gate matrix is not unitary (deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("shot count must be at least 1")]
    ZeroShots,

    #[error("register has no ancilla qubit")]
    MissingAncilla,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("t_final = {t} is not an integer multiple of dt = {dt}")]
    NotMultipleOfStep { t: f64, dt: f64 },

    #[error("Hamiltonian term is not geometrically local: {0}")]
    NonLocalTerm(String),

    #[error("wrong parameter count for {kind} ansatz: expected {expected}, got {got}")]
    ParameterCount { kind: &'static str, expected: usize, got: usize },

    #[error("system of {n_qubits} qubits exceeds the exact-oracle cap of {cap}")]
    SystemTooLarge { n_qubits: usize, cap: usize },

    #[error("Loschmidt echo vanishes at t = {t} (|g| = {magnitude:.3e})")]
    VanishingEcho { t: f64, magnitude: f64 },

    #[error("amplitude lost at step {step}: {detail}")]
    AmplitudeLost { step: usize, detail: String },

    #[error("unresolvable phase at step {step}: |x+iy| = {magnitude:.3e} below {threshold:.3e}")]
    UnresolvablePhase { step: usize, magnitude: f64, threshold: f64 },

    #[error("per-gate phase advance {advance:.3} rad exceeds pi/2; reduce dt")]
    StepTooLarge { advance: f64 },

    #[error("integration grid: {0}")]
    Grid(String),

    #[error("decay fit: {0}")]
    Fit(String),

    #[error("echo series does not cover t in [{from}, {to}]")]
    SeriesTooShort { from: f64, to: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
