//! Open-set evaluation: confusion counts at a threshold, FAR/FRR/F1, and
//! rank-based AUROC.

use serde::{Deserialize, Serialize};

use crate::imaging::ModelInput;

use super::calibrate::OpenSetModel;
use super::train::predict_labels;
use super::{Dataset, OpensetError};

/// Evaluation metrics over one test pass.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    /// Argmax-only K-way accuracy over legitimate samples.
    pub closed_set_accuracy: f64,
    /// Accepted impostors / impostors.
    pub far: f64,
    /// Rejected-or-misidentified legitimate samples / legitimate samples.
    pub frr: f64,
    /// Rank AUROC of the open-set score, legitimate class positive.
    pub auroc: f64,
    /// F1 of the accept decision at the calibrated threshold,
    /// legit-accept positive.
    pub f1: f64,
    pub n_legit: usize,
    pub n_impostor: usize,
}

/// Accept/reject confusion at a threshold. A legitimate sample counts as
/// accepted only if its score clears tau AND its predicted class is correct;
/// an impostor counts as accepted if its score clears tau (a forger would
/// claim whatever identity the classifier predicts).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn far(&self) -> f64 {
        let imp = self.fp + self.tn;
        if imp == 0 {
            0.0
        } else {
            self.fp as f64 / imp as f64
        }
    }

    pub fn frr(&self) -> f64 {
        let legit = self.tp + self.fn_;
        if legit == 0 {
            0.0
        } else {
            self.fn_ as f64 / legit as f64
        }
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

/// Confusion counts for score sets at a threshold (strict `score > tau`
/// accepts). `legit_correct[i]` records whether sample i's predicted class
/// matched its label.
pub fn confusion_at_tau(
    legit_scores: &[f32],
    legit_correct: &[bool],
    impostor_scores: &[f32],
    tau: f32,
) -> Confusion {
    assert_eq!(legit_scores.len(), legit_correct.len());
    let tp = legit_scores
        .iter()
        .zip(legit_correct)
        .filter(|(&s, &c)| s > tau && c)
        .count();
    let fp = impostor_scores.iter().filter(|&&s| s > tau).count();
    Confusion {
        tp,
        fn_: legit_scores.len() - tp,
        fp,
        tn: impostor_scores.len() - fp,
    }
}

/// Rank AUROC with midrank tie handling; positives are legitimate scores.
pub fn auroc(legit_scores: &[f32], impostor_scores: &[f32]) -> f64 {
    let n_pos = legit_scores.len();
    let n_neg = impostor_scores.len();
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut all: Vec<(f32, bool)> = legit_scores
        .iter()
        .map(|&s| (s, true))
        .chain(impostor_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Midrank of the tie group spanning ranks i+1..=j+1.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    u / (n_pos as f64 * n_neg as f64)
}

/// Scores and correctness for a legitimate dataset under a calibrated model.
pub(crate) fn score_legit(
    model: &OpenSetModel,
    data: &Dataset,
) -> Result<(Vec<f32>, Vec<bool>), OpensetError> {
    let feats = super::train::extract_features(&model.backbone, &data.inputs)?;
    let scores = model
        .discriminator
        .scores(&feats, data.len());
    let preds = predict_labels(&model.backbone, &data.inputs)?;
    let correct = preds
        .iter()
        .zip(&data.labels)
        .map(|(a, b)| a == b)
        .collect();
    Ok((scores, correct))
}

pub(crate) fn score_inputs(
    model: &OpenSetModel,
    inputs: &[ModelInput],
) -> Result<Vec<f32>, OpensetError> {
    let feats = super::train::extract_features(&model.backbone, inputs)?;
    Ok(model.discriminator.scores(&feats, inputs.len()))
}

/// Full open-set evaluation of a calibrated model.
pub fn evaluate(
    model: &OpenSetModel,
    test_legit: &Dataset,
    test_impostor: &[ModelInput],
) -> Result<MetricsReport, OpensetError> {
    if test_legit.is_empty() || test_impostor.is_empty() {
        return Err(OpensetError::EvaluationImpossible);
    }
    let (legit_scores, legit_correct) = score_legit(model, test_legit)?;
    let impostor_scores = score_inputs(model, test_impostor)?;
    let closed = legit_correct.iter().filter(|&&c| c).count() as f64
        / legit_correct.len() as f64;
    let confusion = confusion_at_tau(&legit_scores, &legit_correct, &impostor_scores, model.tau);
    Ok(MetricsReport {
        closed_set_accuracy: closed,
        far: confusion.far(),
        frr: confusion.frr(),
        auroc: auroc(&legit_scores, &impostor_scores),
        f1: confusion.f1(),
        n_legit: test_legit.len(),
        n_impostor: test_impostor.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_confusion() {
        // legit {0.9, 0.8} both correctly classified, impostor {0.2, 0.1},
        // tau = 0.5: perfect separation.
        let c = confusion_at_tau(&[0.9, 0.8], &[true, true], &[0.2, 0.1], 0.5);
        assert_eq!(
            c,
            Confusion {
                tp: 2,
                fn_: 0,
                fp: 0,
                tn: 2
            }
        );
        assert_eq!(c.far(), 0.0);
        assert_eq!(c.frr(), 0.0);
        assert_eq!(c.f1(), 1.0);
        assert_eq!(auroc(&[0.9, 0.8], &[0.2, 0.1]), 1.0);
    }

    #[test]
    fn accept_all_and_reject_all() {
        let legit = [0.9f32, 0.8];
        let correct = [true, false]; // one misidentified
        let imp = [0.7f32, 0.6];

        // tau below every score accepts everything: FAR 1, FRR = misid rate.
        let c = confusion_at_tau(&legit, &correct, &imp, 0.0);
        assert_eq!(c.far(), 1.0);
        assert_eq!(c.frr(), 0.5);

        // tau at the max rejects everything (strict >): FAR 0, FRR 1.
        let c = confusion_at_tau(&legit, &correct, &imp, 0.9);
        assert_eq!(c.far(), 0.0);
        assert_eq!(c.frr(), 1.0);
    }

    #[test]
    fn tau_monotonicity_on_random_scores() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(55);
        for _ in 0..50 {
            let legit: Vec<f32> = (0..40).map(|_| rng.gen()).collect();
            let correct: Vec<bool> = (0..40).map(|_| rng.gen_bool(0.9)).collect();
            let imp: Vec<f32> = (0..40).map(|_| rng.gen()).collect();
            let mut taus: Vec<f32> = legit.iter().chain(&imp).copied().collect();
            taus.push(-0.1);
            taus.push(1.1);
            taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut prev_far = f64::INFINITY;
            let mut prev_frr = -1.0f64;
            for &t in &taus {
                let c = confusion_at_tau(&legit, &correct, &imp, t);
                assert!(c.far() <= prev_far + 1e-12, "FAR must not increase");
                assert!(c.frr() >= prev_frr - 1e-12, "FRR must not decrease");
                prev_far = c.far();
                prev_frr = c.frr();
            }
        }
    }

    #[test]
    fn auroc_handles_ties_and_overlap() {
        // Fully overlapping identical scores: AUROC = 0.5 by midranks.
        assert_eq!(auroc(&[0.5, 0.5], &[0.5, 0.5]), 0.5);
        // Reversed separation: AUROC 0.
        assert_eq!(auroc(&[0.1, 0.2], &[0.8, 0.9]), 0.0);
    }
}
