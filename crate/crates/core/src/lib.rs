//! Open-set authentication for heterogeneous PUF-equipped devices.
//!
//! The pipeline: simulated PUF devices ([`puf`]) produce noisy responses that
//! are encoded as grayscale fingerprint images ([`imaging`]), classified by a
//! K-way CNN with a GAN-based open-set head ([`openset`], [`nn`]), and carried
//! over a replay-protected hybrid-encryption protocol ([`protocol`]) using a
//! Bloom filter for replay detection ([`bloom`]). The [`harness`] module runs
//! end-to-end experiments and ablations.

pub mod bloom;
pub mod harness;
pub mod imaging;
pub mod nn;
pub mod openset;
pub mod protocol;
pub mod puf;
