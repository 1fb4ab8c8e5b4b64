//! Linear additive-delay model of an arbiter PUF.
//!
//! The accumulated delay difference for a challenge is the dot product of a
//! fixed per-device weight vector with the challenge's parity feature vector;
//! the response bit is its sign. Per-evaluation Gaussian noise on the delay
//! sum models measurement instability, and [`noise_sigma_for_flip_rate`]
//! calibrates that noise to a target bit-flip rate.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::lfsr::{lfsr_expand, Challenge, Lfsr};
use super::{PufError, ResponseVector};

/// A simulated arbiter PUF instance. Weights are drawn once at creation and
/// stay fixed for the lifetime of the instance.
#[derive(Debug, Clone)]
pub struct ArbiterPuf {
    stages: usize,
    weights: Vec<f64>,
    noise_sigma: f64,
}

impl ArbiterPuf {
    /// Draws a fresh instance with `stages + 1` standard-normal delay weights.
    pub fn sample<R: Rng>(stages: usize, noise_sigma: f64, rng: &mut R) -> Self {
        let weights = (0..stages + 1)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self {
            stages,
            weights,
            noise_sigma,
        }
    }

    /// Builds an instance from explicit weights (length `stages + 1`).
    pub fn from_weights(weights: Vec<f64>, noise_sigma: f64) -> Self {
        assert!(!weights.is_empty());
        Self {
            stages: weights.len() - 1,
            weights,
            noise_sigma,
        }
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Noise-free accumulated delay difference for a challenge.
    ///
    /// The parity feature of stage i is the product of (1 - 2c_j) over all
    /// stages j >= i, with a constant 1 feature appended; it is evaluated as
    /// a running suffix product from the last stage backwards.
    pub fn delay(&self, c: &Challenge) -> Result<f64, PufError> {
        if c.width() != self.stages {
            return Err(PufError::ChallengeWidthMismatch {
                expected: self.stages,
                got: c.width(),
            });
        }
        let mut sum = self.weights[self.stages]; // constant feature
        let mut suffix = 1.0f64;
        for stage in (1..=self.stages).rev() {
            suffix *= 1.0 - 2.0 * f64::from(c.stage_bit(stage));
            sum += self.weights[stage - 1] * suffix;
        }
        Ok(sum)
    }

    /// One noisy evaluation: 1 iff delay + noise exceeds zero.
    pub fn respond<R: Rng>(&self, c: &Challenge, rng: &mut R) -> Result<u8, PufError> {
        let mut delta = self.delay(c)?;
        if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.noise_sigma).expect("valid sigma");
            delta += noise.sample(rng);
        }
        Ok(u8::from(delta > 0.0))
    }
}

/// Expands `seed` through an LFSR with the given taps and evaluates the PUF
/// on each of the `n` expanded challenges. `n` must be divisible by 8.
pub fn response_vector<R: Rng>(
    puf: &ArbiterPuf,
    taps: &[u8],
    seed: Challenge,
    n: usize,
    rng: &mut R,
) -> Result<ResponseVector, PufError> {
    if n % 8 != 0 {
        return Err(PufError::InvalidResponseLength(n));
    }
    let mut lfsr = Lfsr::new(puf.stages(), taps, seed)?;
    let challenges = lfsr_expand(&mut lfsr, n);
    let mut bits = Vec::with_capacity(n);
    for c in &challenges {
        bits.push(puf.respond(c, rng)?);
    }
    ResponseVector::new(bits)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64, sigma: f64) -> f64 {
    let z = x / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Expected per-bit disagreement rate between two independent noisy
/// evaluations of random challenges, for a population of devices with
/// standard-normal weights.
///
/// The delay sum is N(0, stages + 1) over (device, challenge) pairs; a fixed
/// delay d flips against its nominal sign with probability q = Phi(-|d|/sigma)
/// per evaluation, so two evaluations disagree with probability 2q(1 - q).
/// The expectation over d is taken by composite Simpson quadrature on a
/// domain wide enough for both the q-peak (width ~sigma) and the Gaussian
/// weight (width ~s).
pub fn expected_flip_rate(stages: usize, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let s = ((stages + 1) as f64).sqrt();
    let upper = (20.0 * sigma).min(13.0 * s);
    let intervals = 20_000usize; // even
    let h = upper / intervals as f64;
    let f = |d: f64| {
        let q = normal_cdf(-d / sigma);
        2.0 * q * (1.0 - q) * normal_pdf(d, s)
    };
    let mut acc = f(0.0) + f(upper);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    // Integrand is symmetric in d; double the half-line integral.
    2.0 * acc * h / 3.0
}

/// Noise sigma that produces the target expected flip rate (bisection on
/// [`expected_flip_rate`]). Target must lie in (0, 0.5).
pub fn noise_sigma_for_flip_rate(stages: usize, target: f64) -> f64 {
    assert!(
        target > 0.0 && target < 0.5,
        "flip-rate target must lie in (0, 0.5)"
    );
    let s = ((stages + 1) as f64).sqrt();
    let mut lo = 1e-9 * s;
    let mut hi = s;
    while expected_flip_rate(stages, hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_flip_rate(stages, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * s {
            break;
        }
    }
    0.5 * (lo + hi)
}
