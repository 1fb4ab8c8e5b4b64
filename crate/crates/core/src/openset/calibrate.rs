//! Checkpoint and threshold selection on validation data, and the calibrated
//! open-set model used for inference.

use serde::{Deserialize, Serialize};

use crate::imaging::{ModelInput, Normalization};
use crate::nn::argmax_row;
use crate::puf::LfsrConfig;

use super::gan::Discriminator;
use super::metrics::confusion_at_tau;
use super::train::{extract_features, predict_labels};
use super::{Backbone, Dataset, Hyperparameters, OpensetError, ThresholdRule};

/// How the deployed checkpoint and threshold were chosen.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CalibrationRecord {
    /// Index of the selected per-epoch discriminator checkpoint.
    pub epoch: usize,
    pub tau: f32,
    /// Validation open-set F1 at the selected operating point.
    pub val_f1: f64,
    /// Set when legitimate and impostor validation scores are inseparable
    /// (the best threshold does no better than accepting everything).
    pub low_separation: bool,
    pub rule: ThresholdRule,
}

/// The verdict for one image against one claimed identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthDecision {
    pub accept: bool,
    pub predicted: usize,
    pub p_open: f32,
}

/// A frozen backbone, the selected discriminator checkpoint, and the
/// calibrated acceptance threshold, bundled with everything the server
/// needs to reproduce preprocessing exactly.
#[derive(Debug, Clone)]
pub struct OpenSetModel {
    pub backbone: Backbone<f32>,
    pub discriminator: Discriminator<f32>,
    pub tau: f32,
    pub norm: Normalization,
    pub lfsr: LfsrConfig,
    pub hp: Hyperparameters,
    pub calibration: CalibrationRecord,
    /// Mean training loss of the backbone's final epoch.
    pub final_train_loss: f64,
}

impl OpenSetModel {
    /// Single-pass open-set decision: predict the class, score the feature,
    /// accept iff the score strictly exceeds tau and the prediction matches
    /// the claimed identity.
    pub fn authenticate_image(
        &self,
        x: &ModelInput,
        claimed: usize,
    ) -> Result<AuthDecision, OpensetError> {
        if x.data.len() != self.backbone.cfg.input_len() {
            return Err(OpensetError::ShapeMismatch {
                expected: self.backbone.cfg.input_len(),
                got: x.data.len(),
            });
        }
        let acts = self.backbone.forward(&x.data, 1);
        let predicted = argmax_row(&acts.logits);
        let p_open = self.discriminator.scores(&acts.features, 1)[0];
        Ok(AuthDecision {
            accept: p_open > self.tau && predicted == claimed,
            predicted,
            p_open,
        })
    }
}

/// Candidate thresholds for a set of scores: below the minimum (accept
/// everything), midpoints between adjacent distinct values, and the maximum
/// (reject everything, since acceptance is strict).
fn candidate_taus(scores: &mut Vec<f32>) -> Vec<f32> {
    scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    scores.dedup();
    let mut taus = Vec::with_capacity(scores.len() + 1);
    taus.push(scores.first().map_or(0.0, |s| s - 1.0));
    for w in scores.windows(2) {
        taus.push(0.5 * (w[0] + w[1]));
    }
    if let Some(&max) = scores.last() {
        taus.push(max);
    }
    taus
}

/// Sweeps every (checkpoint, tau) pair on validation data and returns the
/// calibrated model. Selection maximizes open-set F1 (or equalizes error
/// rates under [`ThresholdRule::EqualErrorRate`]); ties break toward the
/// earliest epoch, then the lowest threshold, so calibration is
/// deterministic.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_threshold(
    checkpoints: &[Discriminator<f32>],
    backbone: Backbone<f32>,
    val_legit: &Dataset,
    val_impostor: &[ModelInput],
    norm: Normalization,
    lfsr: LfsrConfig,
    hp: Hyperparameters,
    final_train_loss: f64,
) -> Result<OpenSetModel, OpensetError> {
    if val_impostor.is_empty() || checkpoints.is_empty() {
        return Err(OpensetError::CalibrationImpossible);
    }
    let legit_feats = extract_features(&backbone, &val_legit.inputs)?;
    let imp_feats = extract_features(&backbone, val_impostor)?;
    let preds = predict_labels(&backbone, &val_legit.inputs)?;
    let correct: Vec<bool> = preds
        .iter()
        .zip(&val_legit.labels)
        .map(|(a, b)| a == b)
        .collect();

    let n_legit = val_legit.len();
    let n_imp = val_impostor.len();
    // (objective, margin, epoch, tau, f1); objective ties break toward the
    // widest score margin around tau (a better-separated operating point
    // generalizes past the validation impostors), then toward the earliest
    // epoch and lowest tau for determinism.
    let mut best: Option<(f64, f32, usize, f32, f64)> = None;
    let mut best_accept_all_f1 = 0.0f64;

    for (epoch, disc) in checkpoints.iter().enumerate() {
        let s_legit = disc.scores(&legit_feats, n_legit);
        let s_imp = disc.scores(&imp_feats, n_imp);
        let mut pool: Vec<f32> = s_legit.iter().chain(&s_imp).copied().collect();
        let taus = candidate_taus(&mut pool);
        for &tau in &taus {
            let c = confusion_at_tau(&s_legit, &correct, &s_imp, tau);
            let objective = match hp.threshold_rule {
                ThresholdRule::MaxF1 => c.f1(),
                // Negated absolute FAR/FRR gap so "higher is better" holds
                // for both rules.
                ThresholdRule::EqualErrorRate => -(c.far() - c.frr()).abs(),
            };
            let margin = s_legit
                .iter()
                .chain(&s_imp)
                .map(|s| (s - tau).abs())
                .fold(f32::INFINITY, f32::min);
            let better = match &best {
                None => true,
                Some((obj, mg, ep, t, _)) => {
                    objective > *obj + 1e-12
                        || ((objective - *obj).abs() <= 1e-12
                            && (margin > *mg
                                || (margin == *mg && (epoch < *ep || (epoch == *ep && tau < *t)))))
                }
            };
            if better {
                best = Some((objective, margin, epoch, tau, c.f1()));
            }
        }
        // Accept-everything operating point, used to detect non-separation.
        let accept_all = confusion_at_tau(&s_legit, &correct, &s_imp, taus[0]);
        best_accept_all_f1 = best_accept_all_f1.max(accept_all.f1());
    }

    let (_, _, epoch, tau, val_f1) = best.expect("at least one candidate");
    let low_separation = val_f1 <= best_accept_all_f1 + 1e-12;
    Ok(OpenSetModel {
        backbone,
        discriminator: checkpoints[epoch].clone(),
        tau,
        norm,
        lfsr,
        calibration: CalibrationRecord {
            epoch,
            tau,
            val_f1,
            low_separation,
            rule: hp.threshold_rule,
        },
        hp,
        final_train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::openset::{BackboneConfig, Split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn make_parts(
        rng: &mut ChaCha12Rng,
    ) -> (Backbone<f32>, Vec<Discriminator<f32>>, Dataset, Vec<ModelInput>) {
        let cfg = BackboneConfig {
            channels: vec![4],
            ..BackboneConfig::compact(2, (4, 4))
        };
        let backbone = Backbone::init(cfg, rng);
        let disc = Discriminator::init(4, 8, rng);
        let mk = |v: f32| ModelInput {
            height: 4,
            width: 4,
            data: vec![v; 48],
        };
        let legit = Dataset::new(vec![mk(0.5), mk(-0.5)], vec![0, 1], Split::Val);
        let imp = vec![mk(0.1), mk(-0.9)];
        (backbone, vec![disc], legit, imp)
    }

    #[test]
    fn empty_impostor_set_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(61);
        let (backbone, ckpts, legit, _) = make_parts(&mut rng);
        let err = calibrate_threshold(
            &ckpts,
            backbone,
            &legit,
            &[],
            Normalization::default(),
            LfsrConfig::default(),
            Hyperparameters::default(),
            0.0,
        )
        .unwrap_err();
        assert!(matches!(err, OpensetError::CalibrationImpossible));
    }

    #[test]
    fn perfectly_separated_scores_reach_f1_one() {
        // Direct sweep check on synthetic scores through confusion_at_tau:
        // any tau in the gap gives F1 = 1.
        let legit = [0.9f32, 0.8];
        let imp = [0.2f32, 0.1];
        let c = confusion_at_tau(&legit, &[true, true], &imp, 0.5);
        assert_eq!(c.f1(), 1.0);
    }

    #[test]
    fn degenerate_identical_scores_flag_low_separation() {
        let mut rng = ChaCha12Rng::seed_from_u64(62);
        let (backbone, _, legit, imp) = make_parts(&mut rng);
        // A discriminator with zero weights scores every input identically.
        let mut disc: Discriminator<f32> = Discriminator::init(4, 8, &mut rng);
        for p in disc.params_mut() {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
        let model = calibrate_threshold(
            &[disc],
            backbone,
            &legit,
            &imp,
            Normalization::default(),
            LfsrConfig::default(),
            Hyperparameters::default(),
            0.0,
        )
        .unwrap();
        assert!(model.calibration.low_separation);
    }

    #[test]
    fn calibration_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(63);
        let (backbone, ckpts, legit, imp) = make_parts(&mut rng);
        let run = |b: Backbone<f32>| {
            calibrate_threshold(
                &ckpts,
                b,
                &legit,
                &imp,
                Normalization::default(),
                LfsrConfig::default(),
                Hyperparameters::default(),
                0.0,
            )
            .unwrap()
        };
        let a = run(backbone.clone());
        let b = run(backbone);
        assert_eq!(a.tau, b.tau);
        assert_eq!(a.calibration, b.calibration);
    }
}
