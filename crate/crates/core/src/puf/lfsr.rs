//! Fibonacci LFSR used to expand one challenge into a response-length
//! sequence of challenges for strong PUFs.
//!
//! Stages are numbered 1..=width with stage 1 the most significant bit of
//! the state word. One step XORs the tapped stages into a feedback bit,
//! shifts every stage down by one, and loads the feedback into stage 1.

use rand::Rng;

use super::PufError;

/// A challenge word for a strong PUF, `width` bits wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Challenge {
    width: usize,
    bits: u64,
}

impl Challenge {
    pub fn new(width: usize, bits: u64) -> Result<Self, PufError> {
        if width == 0 || width > 64 {
            return Err(PufError::InvalidLfsr(format!(
                "challenge width {width} out of range 1..=64"
            )));
        }
        if width < 64 && bits >> width != 0 {
            return Err(PufError::InvalidLfsr(format!(
                "challenge value 0x{bits:x} does not fit in {width} bits"
            )));
        }
        Ok(Self { width, bits })
    }

    /// Draws a uniformly random non-zero challenge (valid as an LFSR seed).
    pub fn random<R: Rng>(width: usize, rng: &mut R) -> Self {
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        loop {
            let bits = rng.gen::<u64>() & mask;
            if bits != 0 {
                return Self { width, bits };
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    /// Bit of the given stage (1-based, stage 1 = MSB). Returns 0 or 1.
    pub fn stage_bit(&self, stage: usize) -> u8 {
        debug_assert!(stage >= 1 && stage <= self.width);
        ((self.bits >> (self.width - stage)) & 1) as u8
    }
}

/// Fibonacci linear feedback shift register with configurable taps.
#[derive(Debug, Clone)]
pub struct Lfsr {
    width: usize,
    taps: Vec<u8>,
    state: u64,
}

impl Lfsr {
    /// Builds an LFSR seeded with `seed`. Tap positions are 1-based stage
    /// numbers and must include the final stage `width` (the constant term
    /// of the feedback polynomial); without it a one-hot state would decay
    /// to the degenerate all-zero state.
    pub fn new(width: usize, taps: &[u8], seed: Challenge) -> Result<Self, PufError> {
        if width == 0 || width > 64 {
            return Err(PufError::InvalidLfsr(format!(
                "width {width} out of range 1..=64"
            )));
        }
        if seed.width() != width {
            return Err(PufError::ChallengeWidthMismatch {
                expected: width,
                got: seed.width(),
            });
        }
        if seed.is_zero() {
            return Err(PufError::DegenerateSeed);
        }
        if taps.is_empty() {
            return Err(PufError::InvalidLfsr("empty tap set".into()));
        }
        let mut taps: Vec<u8> = taps.to_vec();
        taps.sort_unstable();
        taps.dedup();
        if taps.iter().any(|&t| t == 0 || t as usize > width) {
            return Err(PufError::InvalidLfsr(format!(
                "tap positions must lie in 1..={width}"
            )));
        }
        if taps.last() != Some(&(width as u8)) {
            return Err(PufError::InvalidLfsr(format!(
                "tap set must include the final stage {width}"
            )));
        }
        Ok(Self {
            width,
            taps,
            state: seed.bits(),
        })
    }

    /// Maximal-length tap sets for common widths. Positions follow the
    /// classic shift-register tables (primitive polynomials over GF(2));
    /// each set was verified by brute-force cycle detection where feasible
    /// and polynomial primitivity otherwise.
    pub fn maximal_taps(width: usize) -> Option<&'static [u8]> {
        match width {
            4 => Some(&[4, 3]),
            8 => Some(&[8, 6, 5, 4]),
            16 => Some(&[16, 15, 13, 4]),
            24 => Some(&[24, 23, 22, 17]),
            32 => Some(&[32, 22, 2, 1]),
            64 => Some(&[64, 63, 61, 60]),
            _ => None,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn taps(&self) -> &[u8] {
        &self.taps
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    /// Advances one step and returns the new state as a challenge.
    pub fn step(&mut self) -> Challenge {
        let mut feedback = 0u64;
        for &tap in &self.taps {
            feedback ^= (self.state >> (self.width - tap as usize)) & 1;
        }
        self.state = (self.state >> 1) | (feedback << (self.width - 1));
        Challenge {
            width: self.width,
            bits: self.state,
        }
    }
}

/// Clocks the LFSR `n` times and returns the successive states
/// C_1..C_n. Deterministic in (taps, seed).
pub fn lfsr_expand(lfsr: &mut Lfsr, n: usize) -> Vec<Challenge> {
    (0..n).map(|_| lfsr.step()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn seed(width: usize, bits: u64) -> Challenge {
        Challenge::new(width, bits).unwrap()
    }

    #[test]
    fn zero_seed_is_degenerate() {
        let err = Lfsr::new(4, &[4, 3], seed(4, 0)).unwrap_err();
        assert_eq!(err, PufError::DegenerateSeed);
    }

    #[test]
    fn width_mismatch_rejected() {
        let err = Lfsr::new(4, &[4, 3], seed(8, 1)).unwrap_err();
        assert!(matches!(err, PufError::ChallengeWidthMismatch { .. }));
    }

    #[test]
    fn four_bit_first_step_and_full_cycle() {
        // Brute-force enumeration: taps {4,3} from seed 0b0001 must visit all
        // 15 non-zero states before repeating.
        let mut lfsr = Lfsr::new(4, &[4, 3], seed(4, 0b0001)).unwrap();
        // First step: feedback = stage4 ^ stage3 = 1 ^ 0 = 1, shifted in at MSB.
        let first = lfsr.step();
        assert_eq!(first.bits(), 0b1000);

        let mut lfsr = Lfsr::new(4, &[4, 3], seed(4, 0b0001)).unwrap();
        let states = lfsr_expand(&mut lfsr, 15);
        let distinct: HashSet<u64> = states.iter().map(|c| c.bits()).collect();
        assert_eq!(distinct.len(), 15);
        assert_eq!(states[14].bits(), 0b0001, "cycle returns to the seed");
    }

    #[test]
    fn maximal_widths_visit_all_nonzero_states() {
        // Exhaustive cycle detection for the small table entries.
        for width in [4usize, 8, 16] {
            let taps = Lfsr::maximal_taps(width).unwrap();
            let mut lfsr = Lfsr::new(width, taps, seed(width, 1)).unwrap();
            let period = (1u64 << width) - 1;
            let mut count = 0u64;
            loop {
                let c = lfsr.step();
                count += 1;
                assert!(!c.is_zero(), "LFSR must never reach the zero state");
                if c.bits() == 1 {
                    break;
                }
                assert!(count <= period, "period exceeded 2^width - 1");
            }
            assert_eq!(count, period, "width {width} is not maximal");
        }
    }

    #[test]
    fn expansion_is_deterministic() {
        let taps = Lfsr::maximal_taps(32).unwrap();
        let c = seed(32, 0xdead_beef);
        let mut a = Lfsr::new(32, taps, c).unwrap();
        let mut b = Lfsr::new(32, taps, c).unwrap();
        assert_eq!(lfsr_expand(&mut a, 1000), lfsr_expand(&mut b, 1000));
    }

    #[test]
    fn taps_must_include_final_stage() {
        let err = Lfsr::new(4, &[3, 2], seed(4, 1)).unwrap_err();
        assert!(matches!(err, PufError::InvalidLfsr(_)));
    }

    #[test]
    fn stage_bit_is_msb_first() {
        let c = seed(4, 0b1010);
        assert_eq!(c.stage_bit(1), 1);
        assert_eq!(c.stage_bit(2), 0);
        assert_eq!(c.stage_bit(3), 1);
        assert_eq!(c.stage_bit(4), 0);
    }
}
