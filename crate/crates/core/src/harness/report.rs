//! Report emission: a machine-readable JSON file (byte-identical across
//! identical-config runs) plus a human-readable table.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::protocol::{build_auth_request, AsymmetricScheme, DeviceProvision};
use crate::protocol::crypto::{Aes256GcmScheme, RsaOaepScheme};
use crate::puf::build_device;

use super::config::{AblationAxis, ExperimentConfig};
use super::experiment::{derive_challenge, SeedOutcome};
use super::HarnessError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation (n - 1); zero for a single value.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AggregateMetrics {
    pub closed_set_accuracy: MeanStd,
    pub far: MeanStd,
    pub frr: MeanStd,
    pub auroc: MeanStd,
    pub f1: MeanStd,
}

impl AggregateMetrics {
    pub fn from_outcomes(outcomes: &[SeedOutcome]) -> Self {
        let pick = |f: fn(&SeedOutcome) -> f64| {
            MeanStd::from_values(&outcomes.iter().map(f).collect::<Vec<_>>())
        };
        Self {
            closed_set_accuracy: pick(|o| o.metrics.closed_set_accuracy),
            far: pick(|o| o.metrics.far),
            frr: pick(|o| o.metrics.frr),
            auroc: pick(|o| o.metrics.auroc),
            f1: pick(|o| o.metrics.f1),
        }
    }
}

/// One experiment's full audit trail.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: AggregateMetrics,
    /// Serialized size in bytes of one framed authentication request built
    /// under this config.
    pub wire_overhead_bytes: usize,
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, seeds: Vec<SeedOutcome>) -> Result<Self, HarnessError> {
        let wire_overhead_bytes = measure_wire_overhead(&config)?;
        let aggregate = AggregateMetrics::from_outcomes(&seeds);
        Ok(Self {
            config,
            seeds,
            aggregate,
            wire_overhead_bytes,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let a = &self.aggregate;
        let mut out = String::new();
        out.push_str(&format!(
            "seeds: {} (master {})\n",
            self.seeds.len(),
            self.config.master_seed
        ));
        out.push_str(&format!(
            "devices: {} legit / {} val imp / {} test imp, image {}x{}\n",
            self.config.legit.count(),
            self.config.impostor_val.count(),
            self.config.impostor_test.count(),
            self.config.image_width,
            self.config.image_height
        ));
        out.push_str(&format!("wire overhead: {} bytes per request\n", self.wire_overhead_bytes));
        out.push_str("metric                mean      std\n");
        for (name, m) in [
            ("closed-set accuracy", a.closed_set_accuracy),
            ("FAR", a.far),
            ("FRR", a.frr),
            ("AUROC", a.auroc),
            ("F1", a.f1),
        ] {
            out.push_str(&format!("{name:<20}  {:.4}    {:.4}\n", m.mean, m.std));
        }
        out
    }
}

/// Ablation results: one experiment report per axis value.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AblationReport {
    pub axis: AblationAxis,
    pub entries: Vec<AblationEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AblationEntry {
    pub value: usize,
    pub report: ExperimentReport,
}

impl AblationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("ablation over {:?}\n", self.axis);
        out.push_str("value     FRR(mean+-std)      FAR(mean+-std)      AUROC       F1\n");
        for e in &self.entries {
            let a = &e.report.aggregate;
            out.push_str(&format!(
                "{:<8}  {:.4}+-{:.4}     {:.4}+-{:.4}     {:.4}     {:.4}\n",
                e.value, a.frr.mean, a.frr.std, a.far.mean, a.far.std, a.auroc.mean, a.f1.mean
            ));
        }
        out
    }
}

/// Hex SHA-256 of the canonical config serialization; names run directories.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
}

/// Builds one authentication request under this config (deterministic key
/// material derived from the config) and returns its framed size in bytes.
pub fn measure_wire_overhead(cfg: &ExperimentConfig) -> Result<usize, HarnessError> {
    use base64::engine::general_purpose::STANDARD as BASE64;
    use base64::Engine;

    let mut rng = {
        let mut hasher = Sha256::new();
        hasher.update(config_hash(cfg).as_bytes());
        hasher.update(b"wire-overhead");
        ChaCha12Rng::from_seed(hasher.finalize().into())
    };
    let asym = RsaOaepScheme::default();
    let (pk, _sk) = asym.keygen(&mut rng)?;
    let specs = cfg.legit.device_specs();
    let spec = specs
        .first()
        .ok_or_else(|| HarnessError::config("legit", "no devices"))?;
    let challenge = derive_challenge(cfg, cfg.master_seed);
    let prov = DeviceProvision {
        device_id: spec.id,
        challenge_width: cfg.lfsr.width,
        challenge: format!("{:x}", challenge.bits()),
        lfsr_taps: cfg.lfsr.taps.clone(),
        image_width: cfg.image_width,
        image_height: cfg.image_height,
        server_pk: BASE64.encode(&pk),
        master_seed: cfg.master_seed,
        spec: spec.clone(),
    };
    let mut device = build_device(cfg.master_seed, spec)?;
    let request = build_auth_request(&prov, &mut device, &asym, &Aes256GcmScheme, &mut rng)?;
    // Four bytes of frame length prefix precede the payload on the wire.
    Ok(4 + request.encode().len())
}

/// Writes report.json and report.txt under `dir` (created if needed) and
/// returns the paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir)?;
    let json_path = dir.join("report.json");
    let txt_path = dir.join("report.txt");
    fs::write(&json_path, report.to_json())?;
    fs::write(&txt_path, report.to_table())?;
    Ok(vec![json_path, txt_path])
}
