//! Bloom filter for replay detection of encrypted key blobs.
//!
//! Double hashing generates the k probe positions from two independently
//! seeded 64-bit hashes: h_i(x) = h1(x) + i * h2(x) (mod m), with h2 forced
//! odd so the probe sequence cannot collapse into a short cycle when m is
//! even. No false negatives, ever; the false-positive rate is set by the
//! analytic sizing rule.

use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BloomError {
    #[error("target false-positive rate must lie strictly between 0 and 1")]
    InvalidTarget,
    #[error("expected insertions must be at least 1")]
    InvalidCapacity,
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
}

/// Optimal (m, k) for n expected insertions at target false-positive rate p:
/// m = ceil(-n ln p / (ln 2)^2), k = round(m/n * ln 2), at least 1.
pub fn size_for(n: u64, p: f64) -> Result<(u64, u32), BloomError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(BloomError::InvalidTarget);
    }
    if n == 0 {
        return Err(BloomError::InvalidCapacity);
    }
    let ln2 = std::f64::consts::LN_2;
    let m = (-(n as f64) * p.ln() / (ln2 * ln2)).ceil() as u64;
    let k = ((m as f64 / n as f64) * ln2).round().max(1.0) as u32;
    Ok((m, k))
}

/// Analytic false-positive probability (1 - e^{-kn/m})^k after n insertions.
pub fn analytic_fpr(m: u64, k: u32, n: u64) -> f64 {
    (1.0 - (-(k as f64) * n as f64 / m as f64).exp()).powi(k as i32)
}

/// Seeded 64-bit non-cryptographic hash (Murmur-style finalizer over 8-byte
/// chunks). Uniformity over bit positions is verified by a chi-square test.
fn hash64(data: &[u8], seed: u64) -> u64 {
    const M: u64 = 0xc6a4_a793_5bd1_e995;
    const R: u32 = 47;
    let mut h = seed ^ (data.len() as u64).wrapping_mul(M);
    let mut chunks = data.chunks_exact(8);
    for chunk in &mut chunks {
        let mut k = u64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        k = k.wrapping_mul(M);
        k ^= k >> R;
        k = k.wrapping_mul(M);
        h ^= k;
        h = h.wrapping_mul(M);
    }
    let rest = chunks.remainder();
    if !rest.is_empty() {
        let mut tail = [0u8; 8];
        tail[..rest.len()].copy_from_slice(rest);
        h ^= u64::from_le_bytes(tail);
        h = h.wrapping_mul(M);
    }
    h ^= h >> R;
    h = h.wrapping_mul(M);
    h ^ (h >> R)
}

/// An m-bit Bloom filter with k double-hashed probe positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: u64,
    k: u32,
    seed1: u64,
    seed2: u64,
    n_inserted: u64,
}

impl BloomFilter {
    /// Filter with explicit geometry and hash seeds.
    pub fn new(m: u64, k: u32, seed1: u64, seed2: u64) -> Result<Self, BloomError> {
        if m == 0 || k == 0 {
            return Err(BloomError::InvalidCapacity);
        }
        Ok(Self {
            bits: vec![0u64; m.div_ceil(64) as usize],
            m,
            k,
            seed1,
            seed2,
            n_inserted: 0,
        })
    }

    /// Filter sized for n insertions at target false-positive rate p.
    pub fn with_capacity(n: u64, p: f64, seed1: u64, seed2: u64) -> Result<Self, BloomError> {
        let (m, k) = size_for(n, p)?;
        Self::new(m, k, seed1, seed2)
    }

    pub fn m_bits(&self) -> u64 {
        self.m
    }

    pub fn k_hashes(&self) -> u32 {
        self.k
    }

    pub fn n_inserted(&self) -> u64 {
        self.n_inserted
    }

    /// Count of set bits; never exceeds k * n_inserted.
    pub fn popcount(&self) -> u64 {
        self.bits.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    fn positions(&self, x: &[u8]) -> impl Iterator<Item = u64> + '_ {
        let h1 = hash64(x, self.seed1);
        let h2 = hash64(x, self.seed2) | 1;
        let m = self.m;
        (0..self.k as u64).map(move |i| h1.wrapping_add(i.wrapping_mul(h2)) % m)
    }

    /// Sets all k positions for x. Idempotent in the bit array.
    pub fn insert(&mut self, x: &[u8]) {
        let positions: Vec<u64> = self.positions(x).collect();
        for pos in positions {
            self.bits[(pos / 64) as usize] |= 1u64 << (pos % 64);
        }
        self.n_inserted += 1;
    }

    /// True iff all k positions are set. False means x was never inserted.
    pub fn query(&self, x: &[u8]) -> bool {
        self.positions(x)
            .all(|pos| self.bits[(pos / 64) as usize] >> (pos % 64) & 1 == 1)
    }

    /// Fill fraction of the bit array.
    pub fn load(&self) -> f64 {
        self.popcount() as f64 / self.m as f64
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"PUFB";
const SNAPSHOT_VERSION: u16 = 1;

/// Snapshot layout (little-endian): magic "PUFB", version u16, m u64,
/// k u32, seed1 u64, seed2 u64, n_inserted u64, packed bit words.
pub fn write_snapshot<W: Write>(w: &mut W, f: &BloomFilter) -> io::Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&f.m.to_le_bytes())?;
    w.write_all(&f.k.to_le_bytes())?;
    w.write_all(&f.seed1.to_le_bytes())?;
    w.write_all(&f.seed2.to_le_bytes())?;
    w.write_all(&f.n_inserted.to_le_bytes())?;
    for word in &f.bits {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<BloomFilter, BloomError> {
    let io_err = |e: io::Error| BloomError::InvalidSnapshot(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(BloomError::InvalidSnapshot("bad magic".into()));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2).map_err(io_err)?;
    if u16::from_le_bytes(b2) != SNAPSHOT_VERSION {
        return Err(BloomError::InvalidSnapshot("unsupported version".into()));
    }
    let mut b8 = [0u8; 8];
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b8).map_err(io_err)?;
    let m = u64::from_le_bytes(b8);
    r.read_exact(&mut b4).map_err(io_err)?;
    let k = u32::from_le_bytes(b4);
    r.read_exact(&mut b8).map_err(io_err)?;
    let seed1 = u64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(io_err)?;
    let seed2 = u64::from_le_bytes(b8);
    r.read_exact(&mut b8).map_err(io_err)?;
    let n_inserted = u64::from_le_bytes(b8);
    let mut filter = BloomFilter::new(m, k, seed1, seed2)
        .map_err(|e| BloomError::InvalidSnapshot(e.to_string()))?;
    for word in &mut filter.bits {
        r.read_exact(&mut b8).map_err(io_err)?;
        *word = u64::from_le_bytes(b8);
    }
    filter.n_inserted = n_inserted;
    Ok(filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn sizing_matches_prototype_deployment() {
        // 10^6 sessions at 0.01% false positives: 13 hashes, ~2.4 MB.
        let (m, k) = size_for(1_000_000, 1e-4).unwrap();
        assert_eq!(k, 13);
        assert!((m as f64 - 19.17e6).abs() / 19.17e6 < 0.01, "m = {m}");
        assert_eq!(m, 19_170_117);
        let mb = m as f64 / 8.0 / 1e6;
        assert!((mb - 2.4).abs() < 0.01, "{mb} MB");
    }

    #[test]
    fn sizing_tiny_case() {
        assert_eq!(size_for(1, 0.5).unwrap(), (2, 1));
    }

    #[test]
    fn invalid_targets_rejected() {
        assert_eq!(size_for(10, 1.5).unwrap_err(), BloomError::InvalidTarget);
        assert_eq!(size_for(10, 0.0).unwrap_err(), BloomError::InvalidTarget);
        assert_eq!(size_for(0, 0.01).unwrap_err(), BloomError::InvalidCapacity);
    }

    #[test]
    fn no_false_negatives() {
        let mut f = BloomFilter::with_capacity(2_000, 0.01, 1, 2).unwrap();
        let keys: Vec<Vec<u8>> = (0..2_000u32).map(|i| i.to_le_bytes().to_vec()).collect();
        for k in &keys {
            f.insert(k);
        }
        for k in &keys {
            assert!(f.query(k), "inserted key must always be found");
        }
    }

    #[test]
    fn empty_filter_rejects_everything() {
        let f = BloomFilter::with_capacity(100, 0.01, 3, 4).unwrap();
        for i in 0..1000u32 {
            assert!(!f.query(&i.to_le_bytes()));
        }
    }

    #[test]
    fn saturated_filter_accepts_everything() {
        let mut f = BloomFilter::new(64, 4, 5, 6).unwrap();
        f.bits.iter_mut().for_each(|w| *w = u64::MAX);
        for i in 0..1000u32 {
            assert!(f.query(&i.to_le_bytes()));
        }
    }

    #[test]
    fn double_insert_is_idempotent() {
        let mut f = BloomFilter::with_capacity(100, 0.01, 7, 8).unwrap();
        f.insert(b"x");
        let pop = f.popcount();
        f.insert(b"x");
        assert_eq!(f.popcount(), pop);
        assert!(f.popcount() <= f.k_hashes() as u64 * f.n_inserted());
    }

    #[test]
    fn empirical_fpr_tracks_design_target() {
        let p = 0.01;
        let n = 10_000u64;
        let mut f = BloomFilter::with_capacity(n, p, 11, 12).unwrap();
        for i in 0..n {
            f.insert(format!("member-{i}").as_bytes());
        }
        let probes = 100_000u64;
        let mut fp = 0u64;
        for i in 0..probes {
            if f.query(format!("fresh-{i}").as_bytes()) {
                fp += 1;
            }
        }
        let rate = fp as f64 / probes as f64;
        assert!(
            rate >= p / 2.0 && rate <= 2.0 * p,
            "empirical FPR {rate} outside [{}, {}]",
            p / 2.0,
            2.0 * p
        );
        // And within a factor of two of the analytic value at this load.
        let expected = analytic_fpr(f.m_bits(), f.k_hashes(), n);
        assert!(rate / expected < 2.0 && expected / rate < 2.0);
    }

    #[test]
    fn probe_positions_uniform_chi_square() {
        // Bucket the first probe position of 1e5 random keys into 64 cells;
        // chi-square at alpha = 0.01 with 63 dof has critical value 92.0.
        let f = BloomFilter::new(1 << 20, 1, 1234, 5678).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(90);
        const CELLS: usize = 64;
        let mut counts = [0u64; CELLS];
        let n = 100_000;
        for _ in 0..n {
            let key: [u8; 16] = rng.gen();
            let pos = f.positions(&key).next().unwrap();
            counts[(pos * CELLS as u64 / f.m_bits()) as usize] += 1;
        }
        let expected = n as f64 / CELLS as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 92.0, "chi-square {chi2} exceeds the 1% critical value");
    }

    #[test]
    fn snapshot_round_trips() {
        let mut f = BloomFilter::with_capacity(500, 0.02, 21, 22).unwrap();
        for i in 0..300u32 {
            f.insert(&i.to_le_bytes());
        }
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f).unwrap();
        let g = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(f, g);
        for i in 0..300u32 {
            assert!(g.query(&i.to_le_bytes()));
        }
    }

    #[test]
    fn snapshot_rejects_garbage() {
        assert!(read_snapshot(&mut &b"nope"[..]).is_err());
    }
}
