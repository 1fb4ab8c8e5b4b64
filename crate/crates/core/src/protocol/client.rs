//! Device-side protocol: the provisioning record (ROM analog) and request
//! construction with hybrid encryption.

use std::io::{BufReader, BufWriter};
use std::net::TcpStream;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::imaging::device_image;
use crate::puf::{build_device, derive_rng, Challenge, Device, DeviceSpec};

use super::crypto::{AeadScheme, AsymmetricScheme, SecureRng};
use super::wire::{read_frame, write_frame, AuthRequest, AuthResponse, MAX_FRAME_DEFAULT};
use super::ProtocolError;

/// Read-only provisioning record a device receives at enrollment: the
/// server's public key, the enrolled challenge, LFSR taps, image geometry,
/// and the simulation parameters standing in for the physical PUF.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeviceProvision {
    pub device_id: u32,
    pub challenge_width: usize,
    /// Challenge bits, hex.
    pub challenge: String,
    pub lfsr_taps: Vec<u8>,
    pub image_width: usize,
    pub image_height: usize,
    /// Server public key, DER, base64.
    pub server_pk: String,
    /// Master seed the simulated fleet was built from.
    pub master_seed: u64,
    /// Simulated device parameters (physical PUF stand-in).
    pub spec: DeviceSpec,
}

impl DeviceProvision {
    pub fn challenge_value(&self) -> Result<Challenge, ProtocolError> {
        let bits = u64::from_str_radix(&self.challenge, 16)
            .map_err(|e| ProtocolError::InvalidEnrollment(e.to_string()))?;
        Challenge::new(self.challenge_width, bits).map_err(ProtocolError::from)
    }

    pub fn server_pk_der(&self) -> Result<Vec<u8>, ProtocolError> {
        BASE64
            .decode(&self.server_pk)
            .map_err(|e| ProtocolError::InvalidEnrollment(e.to_string()))
    }

    /// Rebuilds the simulated device instance from the provisioned
    /// parameters.
    pub fn build_device(&self) -> Result<Device, ProtocolError> {
        build_device(self.master_seed, &self.spec).map_err(ProtocolError::from)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("provision serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, ProtocolError> {
        toml::from_str(text).map_err(|e| ProtocolError::InvalidEnrollment(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ProtocolError> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProtocolError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Builds one authentication request: regenerate the fingerprint image from
/// the stored challenge, seal it under a fresh 32-byte session key with the
/// device id bound as associated data, and encrypt the session key under the
/// server's public key.
pub fn build_auth_request(
    prov: &DeviceProvision,
    device: &mut Device,
    asym: &dyn AsymmetricScheme,
    aead: &dyn AeadScheme,
    rng: &mut dyn SecureRng,
) -> Result<AuthRequest, ProtocolError> {
    let challenge = prov.challenge_value()?;
    let image = device_image(
        device,
        &prov.lfsr_taps,
        challenge,
        prov.image_width,
        prov.image_height,
    )?;

    let mut session_key = [0u8; 32];
    rng.fill_bytes(&mut session_key);
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);

    let aad = prov.device_id.to_be_bytes();
    let sealed = aead.seal(&session_key, &nonce, &aad, image.pixels())?;
    let mut m1 = Vec::with_capacity(12 + sealed.len());
    m1.extend_from_slice(&nonce);
    m1.extend_from_slice(&sealed);

    let m2 = asym.encrypt(&prov.server_pk_der()?, &session_key, rng)?;

    Ok(AuthRequest {
        device_id: prov.device_id,
        m1,
        m2,
    })
}

/// Behavior switches for the device CLI.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeviceRunOptions {
    /// Send the identical request twice; the second copy must be rejected.
    pub replay: bool,
    /// Substitute a physically different device (fresh parameter draw) while
    /// claiming the provisioned identity.
    pub impostor: bool,
    /// Seed tag for the evaluation noise stream, so field evaluations differ
    /// from the enrollment-time stream.
    pub eval_seed: u64,
}

/// Connects to the server, sends one request (twice under `replay`), and
/// returns the responses in order.
pub fn run_device(
    prov: &DeviceProvision,
    target: &str,
    asym: &dyn AsymmetricScheme,
    aead: &dyn AeadScheme,
    rng: &mut dyn SecureRng,
    opts: DeviceRunOptions,
) -> Result<Vec<AuthResponse>, ProtocolError> {
    let mut device = if opts.impostor {
        // A forgery device: same geometry, different manufacturing draw.
        let mut spec = prov.spec.clone();
        spec.id = prov.device_id;
        build_device(prov.master_seed ^ 0xdead_beef_cafe_f00d, &spec)?
    } else {
        prov.build_device()?
    };
    let mut tag = Vec::from(&b"auth"[..]);
    tag.extend_from_slice(&opts.eval_seed.to_le_bytes());
    device.reseed_eval(prov.master_seed, &tag);
    // Impostor hardware keeps its own noise stream.
    if opts.impostor {
        let rng2 = derive_rng(prov.master_seed ^ 0xdead_beef_cafe_f00d, prov.device_id, &tag);
        *device.eval_rng() = rng2;
    }

    let request = build_auth_request(prov, &mut device, asym, aead, rng)?;
    let frame = request.encode();

    let stream = TcpStream::connect(target)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut responses = Vec::new();
    let sends = if opts.replay { 2 } else { 1 };
    for _ in 0..sends {
        write_frame(&mut writer, &frame)?;
        use std::io::Write;
        writer.flush()?;
        let payload = read_frame(&mut reader, MAX_FRAME_DEFAULT)?;
        responses.push(AuthResponse::decode(&payload)?);
    }
    Ok(responses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::crypto::{Aes256GcmScheme, RsaOaepScheme};
    use crate::puf::DeviceKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_provision(pk_der: &[u8]) -> DeviceProvision {
        DeviceProvision {
            device_id: 3,
            challenge_width: 32,
            challenge: format!("{:x}", 0xfeed_1234u32),
            lfsr_taps: vec![32, 22, 2, 1],
            image_width: 16,
            image_height: 16,
            server_pk: BASE64.encode(pk_der),
            master_seed: 55,
            spec: DeviceSpec {
                id: 3,
                kind: DeviceKind::Arbiter {
                    stages: 32,
                    flip_rate: 0.05,
                },
            },
        }
    }

    #[test]
    fn consecutive_requests_have_fresh_key_material() {
        let mut rng = ChaCha12Rng::seed_from_u64(111);
        let asym = RsaOaepScheme::default();
        let aead = Aes256GcmScheme;
        let (pk, _) = asym.keygen(&mut rng).unwrap();
        let prov = sample_provision(&pk);
        let mut device = prov.build_device().unwrap();
        let a = build_auth_request(&prov, &mut device, &asym, &aead, &mut rng).unwrap();
        let b = build_auth_request(&prov, &mut device, &asym, &aead, &mut rng).unwrap();
        assert_ne!(a.m2, b.m2, "fresh session keys and randomized encryption");
        assert_ne!(a.m1, b.m1, "fresh nonces");
    }

    #[test]
    fn request_size_matches_hybrid_envelope_arithmetic() {
        let mut rng = ChaCha12Rng::seed_from_u64(112);
        let asym = RsaOaepScheme::default();
        let aead = Aes256GcmScheme;
        let (pk, _) = asym.keygen(&mut rng).unwrap();
        let prov = sample_provision(&pk);
        let mut device = prov.build_device().unwrap();
        let req = build_auth_request(&prov, &mut device, &asym, &aead, &mut rng).unwrap();
        // m1 = nonce(12) + image(256) + tag(16); m2 = RSA-2048 block (256).
        assert_eq!(req.m1.len(), 12 + 256 + 16);
        assert_eq!(req.m2.len(), 256);
        // Payload framing: version(1) + id(4) + len(2) + m2 + len(4) + m1.
        assert_eq!(req.encode().len(), 1 + 4 + 2 + 256 + 4 + 284);
    }

    #[test]
    fn wrong_key_fails_authentication_tag() {
        let mut rng = ChaCha12Rng::seed_from_u64(113);
        let aead = Aes256GcmScheme;
        let key = [1u8; 32];
        let nonce = [2u8; 12];
        let sealed = aead.seal(&key, &nonce, b"\x00\x00\x00\x03", b"image").unwrap();
        let wrong = [9u8; 32];
        assert!(aead.open(&wrong, &nonce, b"\x00\x00\x00\x03", &sealed).is_err());
    }

    #[test]
    fn provision_round_trips_through_toml() {
        let prov = sample_provision(&[1, 2, 3]);
        let text = prov.to_toml();
        let back = DeviceProvision::from_toml(&text).unwrap();
        assert_eq!(back.device_id, prov.device_id);
        assert_eq!(back.challenge_value().unwrap().bits(), 0xfeed_1234);
        assert_eq!(back.server_pk_der().unwrap(), vec![1, 2, 3]);
    }
}
