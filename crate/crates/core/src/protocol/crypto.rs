//! Cipher-suite abstraction for the hybrid encryption layer.
//!
//! Concrete algorithms sit behind two small interfaces so the protocol stays
//! algorithm-agnostic. The reference binding is RSA-OAEP (SHA-256) for the
//! session-key exchange and AES-256-GCM for the image envelope, both from
//! vetted implementations; no primitive is hand-rolled here. Keys cross the
//! interface as DER bytes so they can live in provisioning files.

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use rsa::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey};
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;

use super::ProtocolError;

/// Object-safe view of a cryptographically secure RNG. Blanket-implemented
/// for every `RngCore + CryptoRng` type; [`RngBridge`] adapts it back into a
/// sized `RngCore + CryptoRng` for APIs that need one.
pub trait SecureRng {
    fn next_u32(&mut self) -> u32;
    fn next_u64(&mut self) -> u64;
    fn fill_bytes(&mut self, dest: &mut [u8]);
}

impl<T: rand::RngCore + rand::CryptoRng> SecureRng for T {
    fn next_u32(&mut self) -> u32 {
        rand::RngCore::next_u32(self)
    }

    fn next_u64(&mut self) -> u64 {
        rand::RngCore::next_u64(self)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        rand::RngCore::fill_bytes(self, dest)
    }
}

/// Sized adapter from `&mut dyn SecureRng` to `RngCore + CryptoRng`.
pub struct RngBridge<'a>(pub &'a mut dyn SecureRng);

impl rand::RngCore for RngBridge<'_> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.fill_bytes(dest);
        Ok(())
    }
}

impl rand::CryptoRng for RngBridge<'_> {}

/// Randomized public-key encryption with DER-encoded key material.
pub trait AsymmetricScheme: Send + Sync {
    /// Returns (public key DER, private key DER).
    fn keygen(&self, rng: &mut dyn SecureRng) -> Result<(Vec<u8>, Vec<u8>), ProtocolError>;
    fn encrypt(
        &self,
        pk_der: &[u8],
        plaintext: &[u8],
        rng: &mut dyn SecureRng,
    ) -> Result<Vec<u8>, ProtocolError>;
    fn decrypt(&self, sk_der: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, ProtocolError>;
}

/// Authenticated symmetric cipher with a 32-byte key and 12-byte nonce.
pub trait AeadScheme: Send + Sync {
    /// Returns ciphertext with the authentication tag appended.
    fn seal(
        &self,
        key: &[u8; 32],
        nonce: &[u8; 12],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, ProtocolError>;
    fn open(
        &self,
        key: &[u8; 32],
        nonce: &[u8; 12],
        aad: &[u8],
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, ProtocolError>;
}

/// RSA-OAEP with SHA-256. 2048-bit keys yield 256-byte ciphertexts.
#[derive(Debug, Clone, Copy)]
pub struct RsaOaepScheme {
    pub bits: usize,
}

impl Default for RsaOaepScheme {
    fn default() -> Self {
        Self { bits: 2048 }
    }
}

impl AsymmetricScheme for RsaOaepScheme {
    fn keygen(&self, rng: &mut dyn SecureRng) -> Result<(Vec<u8>, Vec<u8>), ProtocolError> {
        let sk = RsaPrivateKey::new(&mut RngBridge(rng), self.bits)
            .map_err(|e| ProtocolError::Crypto(e.to_string()))?;
        let pk = RsaPublicKey::from(&sk);
        let sk_der = sk
            .to_pkcs8_der()
            .map_err(|e| ProtocolError::Crypto(e.to_string()))?;
        let pk_der = pk
            .to_public_key_der()
            .map_err(|e| ProtocolError::Crypto(e.to_string()))?;
        Ok((pk_der.as_bytes().to_vec(), sk_der.as_bytes().to_vec()))
    }

    fn encrypt(
        &self,
        pk_der: &[u8],
        plaintext: &[u8],
        rng: &mut dyn SecureRng,
    ) -> Result<Vec<u8>, ProtocolError> {
        let pk = RsaPublicKey::from_public_key_der(pk_der)
            .map_err(|e| ProtocolError::Crypto(e.to_string()))?;
        pk.encrypt(&mut RngBridge(rng), Oaep::new::<Sha256>(), plaintext)
            .map_err(|e| ProtocolError::Crypto(e.to_string()))
    }

    fn decrypt(&self, sk_der: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        let sk = RsaPrivateKey::from_pkcs8_der(sk_der)
            .map_err(|e| ProtocolError::Crypto(e.to_string()))?;
        sk.decrypt(Oaep::new::<Sha256>(), ciphertext)
            .map_err(|_| ProtocolError::DecryptFail)
    }
}

/// AES-256-GCM: 12-byte nonce, 16-byte tag appended to the ciphertext.
#[derive(Debug, Clone, Copy, Default)]
pub struct Aes256GcmScheme;

impl AeadScheme for Aes256GcmScheme {
    fn seal(
        &self,
        key: &[u8; 32],
        nonce: &[u8; 12],
        aad: &[u8],
        plaintext: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        let cipher = Aes256Gcm::new_from_slice(key).expect("32-byte key");
        cipher
            .encrypt(
                Nonce::from_slice(nonce),
                Payload {
                    msg: plaintext,
                    aad,
                },
            )
            .map_err(|_| ProtocolError::Crypto("seal failed".into()))
    }

    fn open(
        &self,
        key: &[u8; 32],
        nonce: &[u8; 12],
        aad: &[u8],
        ciphertext: &[u8],
    ) -> Result<Vec<u8>, ProtocolError> {
        let cipher = Aes256Gcm::new_from_slice(key).expect("32-byte key");
        cipher
            .decrypt(
                Nonce::from_slice(nonce),
                Payload {
                    msg: ciphertext,
                    aad,
                },
            )
            .map_err(|_| ProtocolError::DecryptFail)
    }
}
