//! Enrollment and authentication message flow over a byte-stream transport.
//!
//! A device authenticates by regenerating its fingerprint image from the
//! stored challenge, sealing it under a fresh session key (authenticated
//! symmetric cipher), and sending its plaintext identity together with the
//! sealed image (M1) and the asymmetrically encrypted session key (M2). The
//! server replay-checks M2 against a Bloom filter before doing any
//! decryption work, then recovers the image, classifies it, and accepts only
//! if the open-set confidence clears the threshold and the predicted class
//! matches the registered identity of the claimed device.

pub mod client;
pub mod crypto;
pub mod server;
pub mod wire;

pub use client::{build_auth_request, run_device, DeviceProvision};
pub use crypto::{AeadScheme, Aes256GcmScheme, AsymmetricScheme, RsaOaepScheme, SecureRng};
pub use server::{handle_connection, serve, ServerConfig, ServerState};
pub use wire::{
    read_frame, write_frame, AuthRequest, AuthResponse, RejectReason, Verdict, MAX_FRAME_DEFAULT,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{device_image, ImagingError, PufImage};
use crate::puf::{Challenge, Device, LfsrConfig, PufError};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("frame of {len} bytes exceeds the configured maximum {max}")]
    FrameTooLarge { len: usize, max: usize },
    #[error("cryptographic failure: {0}")]
    Crypto(String),
    #[error("decryption or authentication-tag failure")]
    DecryptFail,
    #[error("device id {0} already enrolled")]
    RegistryConflict(u32),
    #[error("invalid enrollment: {0}")]
    InvalidEnrollment(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Puf(#[from] PufError),
}

/// Maps enrolled device ids to classifier class labels.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DeviceRegistry {
    map: BTreeMap<u32, usize>,
}

#[derive(Serialize, Deserialize)]
struct RegistryEntry {
    id: u32,
    class: usize,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    devices: Vec<RegistryEntry>,
}

impl DeviceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, device_id: u32, class: usize) -> Result<(), ProtocolError> {
        if self.map.contains_key(&device_id) {
            return Err(ProtocolError::RegistryConflict(device_id));
        }
        self.map.insert(device_id, class);
        Ok(())
    }

    pub fn class_of(&self, device_id: u32) -> Option<usize> {
        self.map.get(&device_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.map.iter().map(|(&id, &class)| (id, class))
    }

    pub fn to_toml(&self) -> String {
        let file = RegistryFile {
            devices: self
                .iter()
                .map(|(id, class)| RegistryEntry { id, class })
                .collect(),
        };
        toml::to_string_pretty(&file).expect("registry serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ProtocolError> {
        let file: RegistryFile =
            toml::from_str(text).map_err(|e| ProtocolError::InvalidEnrollment(e.to_string()))?;
        let mut registry = Self::new();
        for entry in file.devices {
            registry.insert(entry.id, entry.class)?;
        }
        Ok(registry)
    }
}

/// Runs the enrollment ceremony in a trusted context: every device evaluates
/// the shared challenge `images_per_device` times at simulated distinct
/// instants. Returns the labeled images (class = position in the fleet) and
/// the identity registry.
pub fn enroll_fleet(
    devices: &mut [Device],
    lfsr: &LfsrConfig,
    challenge: Challenge,
    images_per_device: usize,
    width: usize,
    height: usize,
) -> Result<(Vec<(PufImage, usize)>, DeviceRegistry), ProtocolError> {
    if images_per_device < 5 {
        return Err(ProtocolError::InvalidEnrollment(format!(
            "images_per_device must be at least 5, got {images_per_device}"
        )));
    }
    let mut registry = DeviceRegistry::new();
    let mut images = Vec::with_capacity(devices.len() * images_per_device);
    for (class, device) in devices.iter_mut().enumerate() {
        registry.insert(device.id, class)?;
        for _ in 0..images_per_device {
            let img = device_image(device, &lfsr.taps, challenge, width, height)?;
            images.push((img, class));
        }
    }
    Ok((images, registry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puf::{build_fleet, DeviceKind, DeviceSpec, FleetConfig};

    fn small_fleet(n: usize, flip_rate: f64) -> (Vec<Device>, LfsrConfig) {
        let cfg = FleetConfig {
            master_seed: 7,
            lfsr: LfsrConfig::default(),
            devices: (0..n as u32)
                .map(|id| DeviceSpec {
                    id,
                    kind: DeviceKind::Arbiter {
                        stages: 32,
                        flip_rate,
                    },
                })
                .collect(),
        };
        (build_fleet(&cfg).unwrap(), cfg.lfsr)
    }

    #[test]
    fn enrollment_counts_and_labels() {
        let (mut fleet, lfsr) = small_fleet(3, 0.0);
        let challenge = Challenge::new(32, 0xabcd_1234).unwrap();
        let (images, registry) = enroll_fleet(&mut fleet, &lfsr, challenge, 5, 10, 10).unwrap();
        assert_eq!(images.len(), 15);
        assert_eq!(registry.len(), 3);
        assert_eq!(registry.class_of(1), Some(1));
        assert_eq!(registry.class_of(9), None);
    }

    #[test]
    fn zero_noise_enrollment_images_are_identical() {
        let (mut fleet, lfsr) = small_fleet(1, 0.0);
        let challenge = Challenge::new(32, 0x1357).unwrap();
        let (images, _) = enroll_fleet(&mut fleet, &lfsr, challenge, 5, 10, 10).unwrap();
        for (img, _) in &images[1..] {
            assert_eq!(img, &images[0].0);
        }
    }

    #[test]
    fn too_few_images_rejected() {
        let (mut fleet, lfsr) = small_fleet(1, 0.0);
        let challenge = Challenge::new(32, 1).unwrap();
        assert!(matches!(
            enroll_fleet(&mut fleet, &lfsr, challenge, 0, 10, 10),
            Err(ProtocolError::InvalidEnrollment(_))
        ));
    }

    #[test]
    fn duplicate_ids_conflict() {
        let (mut fleet, lfsr) = small_fleet(2, 0.0);
        fleet[1].id = fleet[0].id;
        let challenge = Challenge::new(32, 1).unwrap();
        assert!(matches!(
            enroll_fleet(&mut fleet, &lfsr, challenge, 5, 10, 10),
            Err(ProtocolError::RegistryConflict(_))
        ));
    }

    #[test]
    fn registry_round_trips_through_toml() {
        let mut r = DeviceRegistry::new();
        r.insert(4, 0).unwrap();
        r.insert(9, 1).unwrap();
        let text = r.to_toml();
        assert_eq!(DeviceRegistry::from_toml(&text).unwrap(), r);
    }
}
