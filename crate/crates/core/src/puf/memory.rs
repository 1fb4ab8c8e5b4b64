//! Cell-array model of a memory-based weak PUF.
//!
//! Each cell has a fixed power-up bias (probability of reading 1) drawn once
//! per device from a bimodal distribution, plus a per-cell flip probability
//! applied independently at every readout. Repeated readouts model repeated
//! power-ups.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::PufError;

/// A binary cell matrix, row-major, one byte per cell (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn from_bits(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self, PufError> {
        if bits.len() != rows * cols {
            return Err(PufError::InvalidCellParams(format!(
                "expected {} cells, got {}",
                rows * cols,
                bits.len()
            )));
        }
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Ok(Self { rows, cols, bits })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.cols + col]
    }

    pub fn complement(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }

    /// Count of differing cells between equal-shape matrices.
    pub fn hamming(&self, other: &Self) -> Result<usize, PufError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(PufError::ShapeMismatch {
                rows_a: self.rows,
                cols_a: self.cols,
                rows_b: other.rows,
                cols_b: other.cols,
            });
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count())
    }
}

/// Mixture distribution for per-cell power-up bias: two Beta lobes pinned
/// near 0 and 1 for mostly-stable cells plus a uniform metastable component.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BiasMixture {
    /// Weight of the Beta(a, b) lobe concentrated near 0.
    pub low_weight: f64,
    /// Weight of the Beta(b, a) lobe concentrated near 1.
    pub high_weight: f64,
    /// First Beta shape parameter (the small one).
    pub beta_a: f64,
    /// Second Beta shape parameter (the large one).
    pub beta_b: f64,
}

impl Default for BiasMixture {
    fn default() -> Self {
        Self {
            low_weight: 0.475,
            high_weight: 0.475,
            beta_a: 1.0,
            beta_b: 20.0,
        }
    }
}

impl BiasMixture {
    pub fn validate(&self) -> Result<(), PufError> {
        let uniform = 1.0 - self.low_weight - self.high_weight;
        if !(0.0..=1.0).contains(&self.low_weight)
            || !(0.0..=1.0).contains(&self.high_weight)
            || uniform < -1e-12
        {
            return Err(PufError::InvalidCellParams(
                "mixture weights must be non-negative and sum to at most 1".into(),
            ));
        }
        if self.beta_a <= 0.0 || self.beta_b <= 0.0 {
            return Err(PufError::InvalidCellParams(
                "Beta shape parameters must be positive".into(),
            ));
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        if u < self.low_weight {
            Beta::new(self.beta_a, self.beta_b).expect("valid shapes").sample(rng)
        } else if u < self.low_weight + self.high_weight {
            Beta::new(self.beta_b, self.beta_a).expect("valid shapes").sample(rng)
        } else {
            rng.gen()
        }
    }
}

/// A simulated memory-array weak PUF instance.
#[derive(Debug, Clone)]
pub struct MemoryPuf {
    rows: usize,
    cols: usize,
    bias: Vec<f64>,
    flip_prob: Vec<f64>,
}

impl MemoryPuf {
    /// Draws a fresh device: biases from the mixture, uniform flip
    /// probability for every cell.
    pub fn sample<R: Rng>(
        rows: usize,
        cols: usize,
        mixture: &BiasMixture,
        flip_prob: f64,
        rng: &mut R,
    ) -> Result<Self, PufError> {
        mixture.validate()?;
        let bias = (0..rows * cols).map(|_| mixture.sample(rng)).collect();
        Self::from_parts(rows, cols, bias, vec![flip_prob; rows * cols])
    }

    pub fn from_parts(
        rows: usize,
        cols: usize,
        bias: Vec<f64>,
        flip_prob: Vec<f64>,
    ) -> Result<Self, PufError> {
        if bias.len() != rows * cols || flip_prob.len() != rows * cols {
            return Err(PufError::InvalidCellParams(format!(
                "expected {} cells",
                rows * cols
            )));
        }
        if bias.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(PufError::InvalidCellParams("bias outside [0, 1]".into()));
        }
        if flip_prob.iter().any(|f| !(0.0..0.5).contains(f)) {
            return Err(PufError::InvalidCellParams(
                "flip probability outside [0, 0.5)".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            bias,
            flip_prob,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// One simulated power-up: Bernoulli(bias) per cell, then an independent
    /// flip with the cell's instability probability.
    pub fn readout<R: Rng>(&self, rng: &mut R) -> BitMatrix {
        let bits = self
            .bias
            .iter()
            .zip(&self.flip_prob)
            .map(|(&b, &f)| {
                let cell = u8::from(rng.gen::<f64>() < b);
                let flip = u8::from(f > 0.0 && rng.gen::<f64>() < f);
                cell ^ flip
            })
            .collect();
        BitMatrix {
            rows: self.rows,
            cols: self.cols,
            bits,
        }
    }
}

/// Flip probability whose two-readout disagreement rate 2f(1-f) equals the
/// target instability. Valid for targets below 0.5.
pub fn flip_prob_for_instability(target: f64) -> f64 {
    assert!(
        (0.0..0.5).contains(&target),
        "instability target must lie in [0, 0.5)"
    );
    0.5 * (1.0 - (1.0 - 2.0 * target).sqrt())
}

/// Mean pairwise normalized Hamming distance across readouts of one device.
pub fn device_instability(readouts: &[BitMatrix]) -> Result<f64, PufError> {
    if readouts.len() < 2 {
        return Err(PufError::InsufficientReadouts);
    }
    let cells = (readouts[0].rows * readouts[0].cols) as f64;
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..readouts.len() {
        for j in i + 1..readouts.len() {
            sum += readouts[i].hamming(&readouts[j])? as f64 / cells;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}
