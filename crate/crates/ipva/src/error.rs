//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("6x6 mass-matrix solve residual {residual:e} exceeds tolerance (corrupt parameters?)")]
    LinearSolveFailure { residual: f64 },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state became non-finite at t = {t} s (instability)")]
    NonFiniteState { t: f64 },
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("signal too short for PSD estimation: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum RoadError {
    #[error("preview window [{start}, {end}) exceeds realization length {len}")]
    IndexOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed road CSV at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("design point violates the dimensionless constraint box: {reason}")]
    ConstraintViolation { reason: String },
    #[error("division by zero: ce + R^2 cm = 0 in the closed-form power")]
    DivisionByZero,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Error)]
pub enum SlinError {
    #[error("equivalent-matrix entry ({i},{j}) standard error {se:e} exceeds tolerance {tol:e} at {n} samples")]
    NotConverged {
        i: usize,
        j: usize,
        se: f64,
        tol: f64,
        n: usize,
    },
    #[error("Ml + Me is singular or ill-conditioned (rcond = {rcond:e})")]
    SingularInertia { rcond: f64 },
    #[error(
        "stabilizability repair did not converge in {iters} iterations (best objective {best:e})"
    )]
    RepairNotConverged { iters: usize, best: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("rollout produced a non-finite state at horizon step {k}")]
    NonFiniteRollout { k: usize },
    #[error("solver stalled after {iters} iterations (best cost {cost:e})")]
    SolverStalled { iters: usize, cost: f64 },
    #[error("convexified subproblem failed: {reason}")]
    SubproblemFailure { reason: String },
    #[error("closed-loop failure at step {step}: {source}")]
    ClosedLoop {
        step: usize,
        #[source]
        source: Box<MpcError>,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Road(#[from] RoadError),
}

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("observer gains not Hurwitz: {reason}")]
    NotHurwitz { reason: String },
    #[error("observer estimate invalid: {reason}")]
    NonFiniteEstimate { reason: String },
    #[error("disturbance inversion degenerate: |b2| = {b2:e} below guard")]
    DegenerateInversion { b2: f64 },
}

/// Umbrella error for the experiment runner; the CLI maps `Config` to
/// exit code 2 and everything else to 3.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Slin(#[from] SlinError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("key `{key}`: expected {expected}, got `{got}`")]
    BadValue {
        key: String,
        expected: &'static str,
        got: String,
    },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
