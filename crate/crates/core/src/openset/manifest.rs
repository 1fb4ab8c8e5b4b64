//! Versioned binary model manifest.
//!
//! Serializes everything the authentication server needs: backbone and
//! discriminator parameters, the calibrated threshold, normalization
//! constants, LFSR taps, and the training metadata. The encoding is fully
//! deterministic (fixed field order, little-endian, f32 parameters), so
//! byte-identical manifests load to models that make identical decisions,
//! and saving a loaded manifest reproduces its bytes exactly.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::imaging::Normalization;
use crate::nn::{Conv2d, Linear, Param};
use crate::puf::LfsrConfig;

use super::backbone::{Backbone, BackboneConfig};
use super::gan::Discriminator;
use super::{CalibrationRecord, Hyperparameters, OpenSetModel, OpensetError, ThresholdRule};

const MAGIC: &[u8; 4] = b"PUFM";
const VERSION: u16 = 1;

fn w_u16<W: Write>(w: &mut W, v: u16) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn w_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn w_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn w_f32<W: Write>(w: &mut W, v: f32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn w_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn r_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}
fn r_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
fn r_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
fn r_f32<R: Read>(r: &mut R) -> io::Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}
fn r_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn write_tensor<W: Write>(w: &mut W, t: &[f32]) -> io::Result<()> {
    w_u64(w, t.len() as u64)?;
    for &v in t {
        w_f32(w, v)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R, expected: usize) -> Result<Vec<f32>, OpensetError> {
    let len = r_u64(r)? as usize;
    if len != expected {
        return Err(OpensetError::Manifest(format!(
            "tensor length {len}, expected {expected}"
        )));
    }
    let mut t = Vec::with_capacity(len);
    for _ in 0..len {
        t.push(r_f32(r)?);
    }
    Ok(t)
}

/// Writes the model manifest to a stream.
pub fn write_manifest<W: Write>(w: &mut W, model: &OpenSetModel) -> Result<(), OpensetError> {
    let cfg = &model.backbone.cfg;
    w.write_all(MAGIC)?;
    w_u16(w, VERSION)?;
    w_u32(w, cfg.num_classes as u32)?;
    w_u32(w, cfg.feature_dim() as u32)?;
    w_u16(w, cfg.input_hw.0 as u16)?;
    w_u16(w, cfg.input_hw.1 as u16)?;
    for m in model.norm.mean {
        w_f32(w, m)?;
    }
    for s in model.norm.std {
        w_f32(w, s)?;
    }
    w.write_all(&[model.lfsr.width as u8, model.lfsr.taps.len() as u8])?;
    w.write_all(&model.lfsr.taps)?;
    w_f32(w, model.tau)?;

    w_u32(w, cfg.in_channels as u32)?;
    w_u32(w, cfg.channels.len() as u32)?;
    for &c in &cfg.channels {
        w_u32(w, c as u32)?;
    }
    w_u32(w, cfg.kernel as u32)?;
    w_u32(w, cfg.stride as u32)?;
    w_u32(w, cfg.pad as u32)?;
    for conv in &model.backbone.convs {
        write_tensor(w, &conv.weight.value)?;
        write_tensor(w, &conv.bias.value)?;
    }
    write_tensor(w, &model.backbone.head.weight.value)?;
    write_tensor(w, &model.backbone.head.bias.value)?;

    let disc = &model.discriminator;
    w_u32(w, disc.in_dim() as u32)?;
    w_u32(w, disc.hidden_dim() as u32)?;
    write_tensor(w, &disc.l1.weight.value)?;
    write_tensor(w, &disc.l1.bias.value)?;
    write_tensor(w, &disc.l2.weight.value)?;
    write_tensor(w, &disc.l2.bias.value)?;

    w_u32(w, model.calibration.epoch as u32)?;
    w_f64(w, model.calibration.val_f1)?;
    w.write_all(&[
        u8::from(model.calibration.low_separation),
        match model.calibration.rule {
            ThresholdRule::MaxF1 => 0,
            ThresholdRule::EqualErrorRate => 1,
        },
    ])?;
    w_f64(w, model.final_train_loss)?;

    let hp = serde_json::to_vec(&model.hp)
        .map_err(|e| OpensetError::Manifest(e.to_string()))?;
    w_u32(w, hp.len() as u32)?;
    w.write_all(&hp)?;
    Ok(())
}

/// Reads and validates a model manifest.
pub fn read_manifest<R: Read>(r: &mut R) -> Result<OpenSetModel, OpensetError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(OpensetError::Manifest("bad magic".into()));
    }
    let version = r_u16(r)?;
    if version != VERSION {
        return Err(OpensetError::Manifest(format!(
            "unsupported manifest version {version}"
        )));
    }
    let num_classes = r_u32(r)? as usize;
    let feat_dim = r_u32(r)? as usize;
    let input_h = r_u16(r)? as usize;
    let input_w = r_u16(r)? as usize;
    let mut norm = Normalization::default();
    for m in &mut norm.mean {
        *m = r_f32(r)?;
    }
    for s in &mut norm.std {
        *s = r_f32(r)?;
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2)?;
    let mut taps = vec![0u8; b2[1] as usize];
    r.read_exact(&mut taps)?;
    let lfsr = LfsrConfig {
        width: b2[0] as usize,
        taps,
    };
    let tau = r_f32(r)?;

    let in_channels = r_u32(r)? as usize;
    let n_blocks = r_u32(r)? as usize;
    let mut channels = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        channels.push(r_u32(r)? as usize);
    }
    let kernel = r_u32(r)? as usize;
    let stride = r_u32(r)? as usize;
    let pad = r_u32(r)? as usize;
    let cfg = BackboneConfig {
        in_channels,
        channels: channels.clone(),
        kernel,
        stride,
        pad,
        num_classes,
        input_hw: (input_h, input_w),
    };
    if cfg.feature_dim() != feat_dim {
        return Err(OpensetError::Manifest(
            "feature dimension disagrees with backbone config".into(),
        ));
    }

    let mut convs = Vec::with_capacity(n_blocks);
    let mut prev = in_channels;
    for &out_ch in &channels {
        let weight = read_tensor(r, out_ch * prev * kernel * kernel)?;
        let bias = read_tensor(r, out_ch)?;
        convs.push(Conv2d {
            in_ch: prev,
            out_ch,
            kernel,
            stride,
            pad,
            weight: Param::new(weight),
            bias: Param::new(bias),
        });
        prev = out_ch;
    }
    let head_w = read_tensor(r, num_classes * feat_dim)?;
    let head_b = read_tensor(r, num_classes)?;
    let backbone = Backbone {
        cfg,
        convs,
        head: Linear {
            in_dim: feat_dim,
            out_dim: num_classes,
            weight: Param::new(head_w),
            bias: Param::new(head_b),
        },
    };

    let d_in = r_u32(r)? as usize;
    let d_hidden = r_u32(r)? as usize;
    if d_in != feat_dim {
        return Err(OpensetError::Manifest(
            "discriminator input dimension disagrees with feature dimension".into(),
        ));
    }
    let l1w = read_tensor(r, d_hidden * d_in)?;
    let l1b = read_tensor(r, d_hidden)?;
    let l2w = read_tensor(r, d_hidden)?;
    let l2b = read_tensor(r, 1)?;
    let discriminator = Discriminator {
        l1: Linear {
            in_dim: d_in,
            out_dim: d_hidden,
            weight: Param::new(l1w),
            bias: Param::new(l1b),
        },
        l2: Linear {
            in_dim: d_hidden,
            out_dim: 1,
            weight: Param::new(l2w),
            bias: Param::new(l2b),
        },
    };

    let epoch = r_u32(r)? as usize;
    let val_f1 = r_f64(r)?;
    r.read_exact(&mut b2)?;
    let low_separation = b2[0] != 0;
    let rule = match b2[1] {
        0 => ThresholdRule::MaxF1,
        1 => ThresholdRule::EqualErrorRate,
        x => {
            return Err(OpensetError::Manifest(format!(
                "unknown threshold rule {x}"
            )))
        }
    };
    let final_train_loss = r_f64(r)?;

    let hp_len = r_u32(r)? as usize;
    let mut hp_bytes = vec![0u8; hp_len];
    r.read_exact(&mut hp_bytes)?;
    let hp: Hyperparameters = serde_json::from_slice(&hp_bytes)
        .map_err(|e| OpensetError::Manifest(e.to_string()))?;

    Ok(OpenSetModel {
        backbone,
        discriminator,
        tau,
        norm,
        lfsr,
        hp,
        calibration: CalibrationRecord {
            epoch,
            tau,
            val_f1,
            low_separation,
            rule,
        },
        final_train_loss,
    })
}

impl OpenSetModel {
    pub fn save(&self, path: &Path) -> Result<(), OpensetError> {
        let mut w = BufWriter::new(File::create(path)?);
        write_manifest(&mut w, self)
    }

    pub fn load(path: &Path) -> Result<Self, OpensetError> {
        let mut r = BufReader::new(File::open(path)?);
        read_manifest(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ModelInput;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn sample_model() -> OpenSetModel {
        let mut rng = ChaCha12Rng::seed_from_u64(71);
        let cfg = BackboneConfig {
            channels: vec![4, 6],
            ..BackboneConfig::compact(3, (8, 8))
        };
        OpenSetModel {
            backbone: Backbone::init(cfg, &mut rng),
            discriminator: Discriminator::init(6, 16, &mut rng),
            tau: 0.42,
            norm: Normalization::default(),
            lfsr: LfsrConfig::default(),
            hp: Hyperparameters::default(),
            calibration: CalibrationRecord {
                epoch: 17,
                tau: 0.42,
                val_f1: 0.987,
                low_separation: false,
                rule: ThresholdRule::MaxF1,
            },
            final_train_loss: 0.0123,
        }
    }

    #[test]
    fn manifest_round_trip_is_byte_identical() {
        let model = sample_model();
        let mut bytes = Vec::new();
        write_manifest(&mut bytes, &model).unwrap();
        let loaded = read_manifest(&mut bytes.as_slice()).unwrap();
        let mut bytes2 = Vec::new();
        write_manifest(&mut bytes2, &loaded).unwrap();
        assert_eq!(bytes, bytes2, "save(load(m)) must reproduce the bytes");
    }

    #[test]
    fn loaded_model_makes_identical_decisions() {
        let model = sample_model();
        let mut bytes = Vec::new();
        write_manifest(&mut bytes, &model).unwrap();
        let loaded = read_manifest(&mut bytes.as_slice()).unwrap();
        let x = ModelInput {
            height: 8,
            width: 8,
            data: (0..192).map(|i| (i as f32 / 96.0) - 1.0).collect(),
        };
        for claimed in 0..3 {
            let a = model.authenticate_image(&x, claimed).unwrap();
            let b = loaded.authenticate_image(&x, claimed).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn bad_magic_and_version_rejected() {
        let model = sample_model();
        let mut bytes = Vec::new();
        write_manifest(&mut bytes, &model).unwrap();
        let mut corrupted = bytes.clone();
        corrupted[0] = b'X';
        assert!(read_manifest(&mut corrupted.as_slice()).is_err());
        let mut wrong_version = bytes;
        wrong_version[4] = 99;
        assert!(read_manifest(&mut wrong_version.as_slice()).is_err());
    }
}
