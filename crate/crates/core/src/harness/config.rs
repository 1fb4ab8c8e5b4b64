//! Experiment configuration with field-path validation.

use serde::{Deserialize, Serialize};

use crate::imaging::Normalization;
use crate::openset::Hyperparameters;
use crate::puf::{BiasMixture, DeviceKind, DeviceSpec, LfsrConfig};

use super::HarnessError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct ArbiterParams {
    pub stages: usize,
    /// Target per-bit flip rate between repeated evaluations.
    pub flip_rate: f64,
}

impl Default for ArbiterParams {
    fn default() -> Self {
        Self {
            stages: 32,
            flip_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MemoryParams {
    pub rows: usize,
    pub cols: usize,
    /// Per-cell readout flip probability.
    pub flip_prob: f64,
    #[serde(default)]
    pub bias: BiasMixture,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            rows: 220,
            cols: 200,
            // 2f(1-f) ~ 5.85% pairwise instability from flips alone.
            flip_prob: 0.0301,
            bias: BiasMixture::default(),
        }
    }
}

/// A mixed population of simulated devices with a contiguous id range.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FleetMix {
    pub arbiters: usize,
    pub memories: usize,
    pub id_base: u32,
    #[serde(default)]
    pub arbiter: ArbiterParams,
    #[serde(default)]
    pub memory: MemoryParams,
}

impl FleetMix {
    pub fn count(&self) -> usize {
        self.arbiters + self.memories
    }

    pub fn id_range(&self) -> (u32, u32) {
        (self.id_base, self.id_base + self.count() as u32)
    }

    /// Device specs, arbiters first, ids assigned contiguously.
    pub fn device_specs(&self) -> Vec<DeviceSpec> {
        let mut specs = Vec::with_capacity(self.count());
        let mut id = self.id_base;
        for _ in 0..self.arbiters {
            specs.push(DeviceSpec {
                id,
                kind: DeviceKind::Arbiter {
                    stages: self.arbiter.stages,
                    flip_rate: self.arbiter.flip_rate,
                },
            });
            id += 1;
        }
        for _ in 0..self.memories {
            specs.push(DeviceSpec {
                id,
                kind: DeviceKind::Memory {
                    rows: self.memory.rows,
                    cols: self.memory.cols,
                    flip_prob: self.memory.flip_prob,
                    bias: self.memory.bias,
                },
            });
            id += 1;
        }
        specs
    }

    /// Rescales the total device count, preserving the arbiter/memory mix.
    pub fn with_count(&self, count: usize) -> Self {
        let total = self.count().max(1);
        let arbiters = (count as f64 * self.arbiters as f64 / total as f64).round() as usize;
        Self {
            arbiters: arbiters.min(count),
            memories: count - arbiters.min(count),
            ..self.clone()
        }
    }
}

/// One axis of the ablation grid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    /// Square image side length.
    ImageSize,
    /// Discriminator hidden width.
    NdHidden,
    /// Total number of legitimate devices.
    DeviceCount,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Seeds run: master_seed, master_seed + 1, ...
    pub repeats: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub images_per_device: usize,
    /// Train : val : test, per device; train takes the remainder.
    pub split_ratio: [u32; 3],
    #[serde(default)]
    pub lfsr: LfsrConfig,
    pub legit: FleetMix,
    pub impostor_val: FleetMix,
    pub impostor_test: FleetMix,
    #[serde(default = "default_channels")]
    pub backbone_channels: Vec<usize>,
    #[serde(default)]
    pub hp: Hyperparameters,
    #[serde(default)]
    pub norm: Normalization,
}

fn default_channels() -> Vec<usize> {
    vec![16, 32, 64]
}

impl Default for ExperimentConfig {
    /// Desk-scale defaults: a heterogeneous ten-device fleet with five
    /// held-out impostors, sized to train in seconds per seed.
    fn default() -> Self {
        Self {
            master_seed: 2024,
            repeats: 5,
            image_width: 50,
            image_height: 50,
            images_per_device: 100,
            split_ratio: [3, 1, 1],
            lfsr: LfsrConfig::default(),
            legit: FleetMix {
                arbiters: 5,
                memories: 5,
                id_base: 0,
                arbiter: ArbiterParams::default(),
                memory: MemoryParams::default(),
            },
            impostor_val: FleetMix {
                arbiters: 1,
                memories: 1,
                id_base: 1000,
                arbiter: ArbiterParams::default(),
                memory: MemoryParams::default(),
            },
            impostor_test: FleetMix {
                arbiters: 2,
                memories: 1,
                id_base: 2000,
                arbiter: ArbiterParams::default(),
                memory: MemoryParams::default(),
            },
            backbone_channels: default_channels(),
            hp: Hyperparameters::default(),
            norm: Normalization::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| HarnessError::config("<file>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Images per device in each split; train takes the remainder.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let total: u32 = self.split_ratio.iter().sum();
        let n = self.images_per_device;
        let val = n * self.split_ratio[1] as usize / total as usize;
        let test = n * self.split_ratio[2] as usize / total as usize;
        (n - val - test, val, test)
    }

    fn validate_mix(&self, field: &str, mix: &FleetMix) -> Result<(), HarnessError> {
        if mix.arbiters > 0 {
            if mix.arbiter.stages == 0 || mix.arbiter.stages > 64 {
                return Err(HarnessError::config(
                    &format!("{field}.arbiter.stages"),
                    "must lie in 1..=64",
                ));
            }
            if !(0.0..0.5).contains(&mix.arbiter.flip_rate) {
                return Err(HarnessError::config(
                    &format!("{field}.arbiter.flip_rate"),
                    "must lie in [0, 0.5)",
                ));
            }
            if self.lfsr.width != mix.arbiter.stages {
                return Err(HarnessError::config(
                    &format!("{field}.arbiter.stages"),
                    format!("must equal lfsr.width ({})", self.lfsr.width),
                ));
            }
        }
        if mix.memories > 0 {
            if !(0.0..0.5).contains(&mix.memory.flip_prob) {
                return Err(HarnessError::config(
                    &format!("{field}.memory.flip_prob"),
                    "must lie in [0, 0.5)",
                ));
            }
            let needed = 8 * self.image_width * self.image_height;
            let available = mix.memory.rows * mix.memory.cols;
            if needed > available {
                return Err(HarnessError::config(
                    &format!("{field}.memory"),
                    format!(
                        "image of {}x{} needs {needed} cells but the array has {available}",
                        self.image_width, self.image_height
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repeats == 0 {
            return Err(HarnessError::config("repeats", "must be at least 1"));
        }
        if self.image_width < 8 || self.image_height < 8 {
            return Err(HarnessError::config(
                "image_width/image_height",
                "must be at least 8 pixels",
            ));
        }
        if self.split_ratio[0] == 0 {
            return Err(HarnessError::config(
                "split_ratio",
                "train share must be positive",
            ));
        }
        let (train_n, val_n, test_n) = self.split_counts();
        if train_n == 0 || val_n == 0 || test_n == 0 {
            return Err(HarnessError::config(
                "images_per_device",
                format!(
                    "split {}:{}:{} of {} images leaves an empty split",
                    self.split_ratio[0],
                    self.split_ratio[1],
                    self.split_ratio[2],
                    self.images_per_device
                ),
            ));
        }
        if self.images_per_device < 5 {
            return Err(HarnessError::config(
                "images_per_device",
                "enrollment requires at least 5 images per device",
            ));
        }
        if self.legit.count() < 2 {
            return Err(HarnessError::config(
                "legit",
                "need at least two legitimate devices",
            ));
        }
        if self.impostor_val.count() == 0 {
            return Err(HarnessError::config(
                "impostor_val",
                "threshold calibration needs at least one impostor device",
            ));
        }
        if self.impostor_test.count() == 0 {
            return Err(HarnessError::config(
                "impostor_test",
                "evaluation needs at least one impostor device",
            ));
        }
        for (field, mix) in [
            ("legit", &self.legit),
            ("impostor_val", &self.impostor_val),
            ("impostor_test", &self.impostor_test),
        ] {
            self.validate_mix(field, mix)?;
        }
        // Device id ranges must be pairwise disjoint.
        let ranges = [
            ("legit", self.legit.id_range()),
            ("impostor_val", self.impostor_val.id_range()),
            ("impostor_test", self.impostor_test.id_range()),
        ];
        for i in 0..ranges.len() {
            for j in i + 1..ranges.len() {
                let (a, b) = (ranges[i].1, ranges[j].1);
                if a.0 < b.1 && b.0 < a.1 {
                    return Err(HarnessError::config(
                        &format!("{}.id_base", ranges[j].0),
                        format!(
                            "id range [{}, {}) overlaps {} range [{}, {})",
                            b.0, b.1, ranges[i].0, a.0, a.1
                        ),
                    ));
                }
            }
        }
        if self.backbone_channels.is_empty() {
            return Err(HarnessError::config(
                "backbone_channels",
                "need at least one conv block",
            ));
        }
        if self.hp.closed_epochs == 0 || self.hp.gan_epochs == 0 {
            return Err(HarnessError::config("hp", "epoch counts must be positive"));
        }
        if self.hp.closed_batch == 0 || self.hp.gan_batch == 0 {
            return Err(HarnessError::config("hp", "batch sizes must be positive"));
        }
        Ok(())
    }
}
