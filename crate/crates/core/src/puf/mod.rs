//! Statistical simulators for heterogeneous PUF devices.
//!
//! Two device families are modeled: delay-based strong PUFs (arbiter chains
//! driven through an LFSR challenge expander) and memory-based weak PUFs
//! (2D cell arrays with per-cell power-up bias). Both expose configurable
//! instability so repeated evaluations produce realistically noisy readouts,
//! and every random draw flows from seeded, per-device RNG streams so whole
//! fleets are reproducible.

pub mod arbiter;
pub mod files;
pub mod fleet;
pub mod lfsr;
pub mod memory;

pub use arbiter::{expected_flip_rate, noise_sigma_for_flip_rate, response_vector, ArbiterPuf};
pub use fleet::{
    build_device, build_fleet, derive_rng, Device, DeviceKind, DeviceSpec, FleetConfig,
    LfsrConfig, PufInstance,
};
pub use lfsr::{lfsr_expand, Challenge, Lfsr};
pub use memory::{device_instability, flip_prob_for_instability, BiasMixture, BitMatrix, MemoryPuf};

use thiserror::Error;

/// Errors raised by the PUF simulators.
#[derive(Debug, Error, PartialEq)]
pub enum PufError {
    /// The all-zero LFSR state is a fixed point and cannot seed expansion.
    #[error("all-zero LFSR seed is degenerate")]
    DegenerateSeed,
    #[error("challenge width {got} does not match expected width {expected}")]
    ChallengeWidthMismatch { expected: usize, got: usize },
    #[error("readout shapes differ: {rows_a}x{cols_a} vs {rows_b}x{cols_b}")]
    ShapeMismatch {
        rows_a: usize,
        cols_a: usize,
        rows_b: usize,
        cols_b: usize,
    },
    #[error("invalid LFSR configuration: {0}")]
    InvalidLfsr(String),
    #[error("response length {0} is not divisible by 8")]
    InvalidResponseLength(usize),
    #[error("instability needs at least two readouts")]
    InsufficientReadouts,
    #[error("invalid cell parameters: {0}")]
    InvalidCellParams(String),
    #[error("invalid fleet: {0}")]
    InvalidFleet(String),
}

/// A bit vector of PUF response bits as produced by a strong device.
///
/// The length is always divisible by 8 so the vector packs exactly into
/// grayscale pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseVector {
    bits: Vec<u8>,
}

impl ResponseVector {
    pub fn new(bits: Vec<u8>) -> Result<Self, PufError> {
        if bits.len() % 8 != 0 {
            return Err(PufError::InvalidResponseLength(bits.len()));
        }
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Ok(Self { bits })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Fraction of positions at which the two vectors disagree.
    pub fn normalized_hamming(&self, other: &Self) -> Result<f64, PufError> {
        if self.len() != other.len() {
            return Err(PufError::ChallengeWidthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let diff = self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count();
        Ok(diff as f64 / self.len() as f64)
    }
}
