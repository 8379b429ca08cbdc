//! Simulation and learning stack for configuration control of modular soft arms.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`plant`] — a deterministic surrogate simulator of a chain of bending
//!    modules with gravity coupling between them.
//! 2. [`datagen`] — random-walk excitation, the phased collection schedule
//!    that drives the arm away from its resting state, and dataset files.
//! 3. [`nn`] — from-scratch LSTM machinery: a bidirectional controller that
//!    recurs over the module chain (so one network serves any module count),
//!    two time-recurrent baselines, backpropagation, and Adam.
//! 4. [`control`] — closed-form reference trajectories, the closed-loop
//!    runner, and per-module error tables.
//!
//! [`geom`] holds the shared domain types: module configurations as end unit
//! vectors, actuation pairs, cable activations, and chain labels.
//!
//! Everything is seeded and single-threaded by default: a given configuration
//! reproduces its outputs byte for byte.

pub mod control;
pub mod datagen;
pub mod geom;
pub mod nn;
pub mod plant;

pub use geom::{
    action_to_cables, angle_error_deg, config_error_pct, config_from_bend, module_label,
    CableActs, Dim, ModuleAction, ModuleConfig, ModuleLabel, RobotConfig,
};
pub use plant::{PlantMode, PlantParams, PlantState};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("module index {index} out of range 1..={n_sum}")]
    IndexOutOfRange { index: usize, n_sum: usize },

    #[error("bend magnitude {magnitude} outside [0, pi)")]
    BendOutOfRange { magnitude: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("module {module} saturated (bend reached pi) at step {step}")]
    Saturated { module: usize, step: u64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset too short: {len} records, need more than {min}")]
    ShortDataset { len: usize, min: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-finite value in {context} (batch index {index})")]
    NonFinite { context: &'static str, index: usize },

    #[error("training diverged at epoch {epoch}: loss {loss} > 10x initial {initial}")]
    Divergence { epoch: usize, loss: f64, initial: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// 64-bit FNV-1a, used for parameter digests in file headers.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// One splitmix64 round, used to derive per-sequence seeds from a base seed.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Formats a float with enough digits to round-trip exactly through text.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
