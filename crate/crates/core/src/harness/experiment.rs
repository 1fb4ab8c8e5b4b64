//! The per-seed pipeline and aggregation across seeds.
//!
//! One seed: build fleets -> enroll with a shared challenge -> split each
//! device's images 3:1:1 in generation order -> train the closed-set
//! backbone -> train the feature-space GAN -> calibrate the threshold on
//! validation impostors -> evaluate on held-out test impostors. Within a
//! seed everything is sequential and seeded, so identical configs produce
//! identical reports.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::imaging::{device_image, to_model_input, ModelInput};
use crate::openset::{
    calibrate_threshold, evaluate, train_closed_set, train_open_gan, BackboneConfig, Dataset,
    MetricsReport, OpenSetModel, Split,
};
use crate::protocol::enroll_fleet;
use crate::puf::{build_fleet, Challenge, FleetConfig};

use super::config::{AblationAxis, ExperimentConfig};
use super::HarnessError;

/// Everything recorded for one seed of one experiment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub metrics: MetricsReport,
    pub tau: f32,
    pub selected_epoch: usize,
    pub val_f1: f64,
    pub final_train_loss: f64,
}

fn stream_rng(seed: u64, tag: &[u8]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag);
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// Generates all images for one fleet from the shared challenge.
fn impostor_images(
    cfg: &ExperimentConfig,
    fleet_cfg: &FleetConfig,
    challenge: Challenge,
) -> Result<Vec<ModelInput>, HarnessError> {
    let mut devices = build_fleet(fleet_cfg)?;
    let mut inputs = Vec::with_capacity(devices.len() * cfg.images_per_device);
    for device in &mut devices {
        for _ in 0..cfg.images_per_device {
            let img = device_image(
                device,
                &cfg.lfsr.taps,
                challenge,
                cfg.image_width,
                cfg.image_height,
            )?;
            inputs.push(to_model_input(&img, &cfg.norm)?);
        }
    }
    Ok(inputs)
}

/// Runs the full pipeline for one seed, returning the outcome and the
/// calibrated model.
pub fn run_seed(
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(SeedOutcome, OpenSetModel), HarnessError> {
    cfg.validate()?;

    let legit_cfg = FleetConfig {
        master_seed: seed,
        lfsr: cfg.lfsr.clone(),
        devices: cfg.legit.device_specs(),
    };
    let val_imp_cfg = FleetConfig {
        master_seed: seed,
        lfsr: cfg.lfsr.clone(),
        devices: cfg.impostor_val.device_specs(),
    };
    let test_imp_cfg = FleetConfig {
        master_seed: seed,
        lfsr: cfg.lfsr.clone(),
        devices: cfg.impostor_test.device_specs(),
    };

    let mut challenge_rng = stream_rng(seed, b"challenge");
    let challenge = Challenge::random(cfg.lfsr.width, &mut challenge_rng);

    // Enrollment in a trusted context: label by fleet position.
    let mut legit_devices = build_fleet(&legit_cfg)?;
    let (images, _registry) = enroll_fleet(
        &mut legit_devices,
        &cfg.lfsr,
        challenge,
        cfg.images_per_device,
        cfg.image_width,
        cfg.image_height,
    )?;

    // Per-device 3:1:1 split in generation order (train takes the
    // remainder). Images arrive grouped by device.
    let (train_n, val_n, _test_n) = cfg.split_counts();
    let k = cfg.legit.count();
    let mut split_sets: [(Vec<ModelInput>, Vec<usize>); 3] = Default::default();
    for (dev, block) in images.chunks(cfg.images_per_device).enumerate() {
        for (i, (img, label)) in block.iter().enumerate() {
            debug_assert_eq!(*label, dev);
            let which = if i < train_n {
                0
            } else if i < train_n + val_n {
                1
            } else {
                2
            };
            split_sets[which].0.push(to_model_input(img, &cfg.norm)?);
            split_sets[which].1.push(*label);
        }
    }
    let [train_parts, val_parts, test_parts] = split_sets;
    let train_ds = Dataset::new(train_parts.0, train_parts.1, Split::Train);
    let val_ds = Dataset::new(val_parts.0, val_parts.1, Split::Val);
    let test_ds = Dataset::new(test_parts.0, test_parts.1, Split::Test);

    // Impostor images: validation impostors feed calibration only, test
    // impostors feed evaluation only.
    let val_imp = impostor_images(cfg, &val_imp_cfg, challenge)?;
    let test_imp = impostor_images(cfg, &test_imp_cfg, challenge)?;

    let backbone_cfg = BackboneConfig {
        channels: cfg.backbone_channels.clone(),
        num_classes: k,
        input_hw: (cfg.image_height, cfg.image_width),
        ..BackboneConfig::compact(k, (cfg.image_height, cfg.image_width))
    };
    let mut train_rng = stream_rng(seed, b"train");
    let (backbone, final_train_loss) =
        train_closed_set(&train_ds, backbone_cfg, &cfg.hp, &mut train_rng)?;
    let (_pair, checkpoints) = train_open_gan(&backbone, &train_ds, &cfg.hp, &mut train_rng)?;
    let model = calibrate_threshold(
        &checkpoints,
        backbone,
        &val_ds,
        &val_imp,
        cfg.norm,
        cfg.lfsr.clone(),
        cfg.hp.clone(),
        final_train_loss,
    )?;
    let metrics = evaluate(&model, &test_ds, &test_imp)?;

    Ok((
        SeedOutcome {
            seed,
            metrics,
            tau: model.tau,
            selected_epoch: model.calibration.epoch,
            val_f1: model.calibration.val_f1,
            final_train_loss,
        },
        model,
    ))
}

/// Runs every seed of the experiment: master_seed, master_seed + 1, ...
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>, HarnessError> {
    cfg.validate()?;
    let mut outcomes = Vec::with_capacity(cfg.repeats);
    for i in 0..cfg.repeats {
        let seed = cfg.master_seed + i as u64;
        let (outcome, _) = run_seed(cfg, seed)?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

/// Derives the config for one ablation point.
pub fn ablation_config(
    cfg: &ExperimentConfig,
    axis: AblationAxis,
    value: usize,
) -> Result<ExperimentConfig, HarnessError> {
    let mut derived = cfg.clone();
    match axis {
        AblationAxis::ImageSize => {
            derived.image_width = value;
            derived.image_height = value;
        }
        AblationAxis::NdHidden => {
            derived.hp.hidden_d = value;
        }
        AblationAxis::DeviceCount => {
            derived.legit = derived.legit.with_count(value);
        }
    }
    derived.validate()?;
    Ok(derived)
}

/// Re-runs the experiment once per axis value, holding everything else
/// fixed.
pub fn run_ablation(
    cfg: &ExperimentConfig,
    axis: AblationAxis,
    values: &[usize],
) -> Result<Vec<(usize, Vec<SeedOutcome>)>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::config("ablation.values", "empty value list"));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let derived = ablation_config(cfg, axis, value)?;
        rows.push((value, run_experiment(&derived)?));
    }
    Ok(rows)
}

/// Reproducibility helper used by tests: identical legitimate devices under
/// identical seeds yield identical enrollment images.
pub fn enrollment_digest(cfg: &ExperimentConfig, seed: u64) -> Result<[u8; 32], HarnessError> {
    let legit_cfg = FleetConfig {
        master_seed: seed,
        lfsr: cfg.lfsr.clone(),
        devices: cfg.legit.device_specs(),
    };
    let mut challenge_rng = stream_rng(seed, b"challenge");
    let challenge = Challenge::random(cfg.lfsr.width, &mut challenge_rng);
    let mut devices = build_fleet(&legit_cfg)?;
    let (images, _) = enroll_fleet(
        &mut devices,
        &cfg.lfsr,
        challenge,
        cfg.images_per_device,
        cfg.image_width,
        cfg.image_height,
    )?;
    let mut hasher = Sha256::new();
    for (img, label) in &images {
        hasher.update((*label as u64).to_le_bytes());
        hasher.update(img.pixels());
    }
    Ok(hasher.finalize().into())
}

/// A deterministic challenge for out-of-band tooling (provisioning files).
pub fn derive_challenge(cfg: &ExperimentConfig, seed: u64) -> Challenge {
    let mut challenge_rng = stream_rng(seed, b"challenge");
    Challenge::random(cfg.lfsr.width, &mut challenge_rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::FleetMix;

    /// Tiny config that trains in well under a second.
    pub(crate) fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.master_seed = 9000;
        cfg.repeats = 1;
        cfg.image_width = 16;
        cfg.image_height = 16;
        cfg.images_per_device = 10;
        cfg.legit = FleetMix {
            arbiters: 1,
            memories: 1,
            id_base: 0,
            ..cfg.legit
        };
        cfg.impostor_val = FleetMix {
            arbiters: 1,
            memories: 1,
            id_base: 100,
            ..cfg.impostor_val
        };
        cfg.impostor_test = FleetMix {
            arbiters: 1,
            memories: 1,
            id_base: 200,
            ..cfg.impostor_test
        };
        cfg.hp.closed_epochs = 30;
        cfg.hp.closed_lr = 1e-3;
        cfg.hp.closed_batch = 4;
        cfg.hp.gan_epochs = 200;
        cfg.hp.gan_batch = 8;
        cfg.hp.gan_lr_d = 1e-3;
        cfg.hp.gan_lr_g = 1e-3;
        cfg
    }

    #[test]
    fn zero_noise_two_device_run_is_perfect() {
        let mut cfg = tiny_config();
        cfg.legit.arbiter.flip_rate = 0.0;
        cfg.legit.memory.flip_prob = 0.0;
        // Hard 0/1 bias cells so the memory device is fully deterministic.
        cfg.legit.memory.bias = crate::puf::BiasMixture {
            low_weight: 0.5,
            high_weight: 0.5,
            beta_a: 1e-3,
            beta_b: 1e6,
        };
        let (outcome, _model) = run_seed(&cfg, cfg.master_seed).unwrap();
        assert_eq!(outcome.metrics.closed_set_accuracy, 1.0);
        assert_eq!(outcome.metrics.far, 0.0);
        assert_eq!(outcome.metrics.frr, 0.0);
        assert_eq!(outcome.metrics.f1, 1.0);
    }

    #[test]
    fn split_sizes_and_impostor_hygiene() {
        let cfg = tiny_config();
        let (train_n, val_n, test_n) = cfg.split_counts();
        assert_eq!(train_n + val_n + test_n, cfg.images_per_device);
        // 10 images at 3:1:1 -> 6/2/2.
        assert_eq!((train_n, val_n, test_n), (6, 2, 2));
    }

    #[test]
    fn identical_seeds_reproduce_enrollment_bytes() {
        let cfg = tiny_config();
        let a = enrollment_digest(&cfg, 42).unwrap();
        let b = enrollment_digest(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = enrollment_digest(&cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ablation_rejects_empty_values() {
        let cfg = tiny_config();
        assert!(run_ablation(&cfg, AblationAxis::NdHidden, &[]).is_err());
    }

    #[test]
    fn ablation_image_size_must_fit_memory_array() {
        let mut cfg = tiny_config();
        cfg.legit.memories = 1;
        let err = ablation_config(&cfg, AblationAxis::ImageSize, 120).unwrap_err();
        assert!(err.to_string().contains("memory"), "{err}");
    }
}
