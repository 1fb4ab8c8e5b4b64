//! Fleet construction: reproducible populations of simulated devices.
//!
//! Every device derives two private RNG streams (one consumed at creation to
//! draw the physical parameters, one consumed per evaluation) from the fleet
//! master seed and its device id, so a fleet description file pins the whole
//! population bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arbiter::{noise_sigma_for_flip_rate, ArbiterPuf};
use super::memory::{flip_prob_for_instability, BiasMixture, BitMatrix, MemoryPuf};
use super::PufError;

/// Stream tag for the parameter draw at device creation.
pub const STREAM_INIT: &[u8] = b"init";
/// Stream tag for the evaluation noise stream.
pub const STREAM_EVAL: &[u8] = b"eval";

/// Derives an independent ChaCha stream from (master seed, device id, tag).
pub fn derive_rng(master_seed: u64, device_id: u32, tag: &[u8]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(device_id.to_le_bytes());
    hasher.update(tag);
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// LFSR parameters shared by a fleet (device and server must agree).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LfsrConfig {
    pub width: usize,
    pub taps: Vec<u8>,
}

impl Default for LfsrConfig {
    fn default() -> Self {
        Self {
            width: 32,
            taps: vec![32, 22, 2, 1],
        }
    }
}

/// Per-device configuration inside a fleet description file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeviceKind {
    Arbiter {
        stages: usize,
        /// Target per-bit flip rate between repeated evaluations; converted
        /// to a delay-noise sigma at build time.
        flip_rate: f64,
    },
    Memory {
        rows: usize,
        cols: usize,
        /// Per-cell flip probability applied at every readout.
        flip_prob: f64,
        #[serde(default)]
        bias: BiasMixture,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DeviceSpec {
    pub id: u32,
    #[serde(flatten)]
    pub kind: DeviceKind,
}

/// Fleet description file: master seed, LFSR parameters, device list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FleetConfig {
    pub master_seed: u64,
    #[serde(default)]
    pub lfsr: LfsrConfig,
    pub devices: Vec<DeviceSpec>,
}

impl FleetConfig {
    pub fn from_toml(text: &str) -> Result<Self, PufError> {
        toml::from_str(text).map_err(|e| PufError::InvalidFleet(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("fleet config serializes")
    }
}

/// The physical instance behind a device.
#[derive(Debug, Clone)]
pub enum PufInstance {
    Arbiter(ArbiterPuf),
    Memory(MemoryPuf),
}

/// A simulated device: immutable physics plus a private evaluation RNG.
#[derive(Debug, Clone)]
pub struct Device {
    pub id: u32,
    pub instance: PufInstance,
    eval_rng: ChaCha12Rng,
}

impl Device {
    pub fn new(id: u32, instance: PufInstance, eval_rng: ChaCha12Rng) -> Self {
        Self {
            id,
            instance,
            eval_rng,
        }
    }

    pub fn eval_rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.eval_rng
    }

    /// Re-seeds the evaluation stream, e.g. to model evaluations at a
    /// different point in time than enrollment.
    pub fn reseed_eval(&mut self, master_seed: u64, tag: &[u8]) {
        self.eval_rng = derive_rng(master_seed, self.id, tag);
    }

    /// One raw readout for memory devices.
    pub fn memory_readout(&mut self) -> Option<BitMatrix> {
        match &self.instance {
            PufInstance::Memory(puf) => Some(puf.readout(&mut self.eval_rng)),
            PufInstance::Arbiter(_) => None,
        }
    }
}

/// Materializes one device from its spec.
pub fn build_device(master_seed: u64, spec: &DeviceSpec) -> Result<Device, PufError> {
    let mut init_rng = derive_rng(master_seed, spec.id, STREAM_INIT);
    let instance = match &spec.kind {
        DeviceKind::Arbiter { stages, flip_rate } => {
            if *stages == 0 || *stages > 64 {
                return Err(PufError::InvalidFleet(format!(
                    "device {}: stages {} out of range 1..=64",
                    spec.id, stages
                )));
            }
            let sigma = if *flip_rate > 0.0 {
                noise_sigma_for_flip_rate(*stages, *flip_rate)
            } else {
                0.0
            };
            PufInstance::Arbiter(ArbiterPuf::sample(*stages, sigma, &mut init_rng))
        }
        DeviceKind::Memory {
            rows,
            cols,
            flip_prob,
            bias,
        } => PufInstance::Memory(MemoryPuf::sample(*rows, *cols, bias, *flip_prob, &mut init_rng)?),
    };
    Ok(Device::new(
        spec.id,
        instance,
        derive_rng(master_seed, spec.id, STREAM_EVAL),
    ))
}

/// Builds every device in the fleet; device ids must be unique.
pub fn build_fleet(cfg: &FleetConfig) -> Result<Vec<Device>, PufError> {
    let mut seen = std::collections::BTreeSet::new();
    for spec in &cfg.devices {
        if !seen.insert(spec.id) {
            return Err(PufError::InvalidFleet(format!(
                "duplicate device id {}",
                spec.id
            )));
        }
    }
    cfg.devices
        .iter()
        .map(|spec| build_device(cfg.master_seed, spec))
        .collect()
}

/// The flip-probability knob matching a target mean instability for memory
/// devices whose bias pattern is effectively deterministic.
pub fn memory_flip_prob(target_instability: f64) -> f64 {
    flip_prob_for_instability(target_instability)
}
