//! Closed-set backbone training, feature extraction, and feature-space GAN
//! training with per-epoch discriminator checkpoints.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::imaging::ModelInput;
use crate::nn::{bce_with_logits_grad, cross_entropy_grad, AdamW, AdamWConfig};

use super::gan::{Discriminator, GanPair, Generator};
use super::{Backbone, BackboneConfig, Dataset, Hyperparameters, OpensetError};

fn gather_batch(inputs: &[ModelInput], idx: &[usize], input_len: usize) -> Vec<f32> {
    let mut x = Vec::with_capacity(idx.len() * input_len);
    for &i in idx {
        debug_assert_eq!(inputs[i].data.len(), input_len);
        x.extend_from_slice(&inputs[i].data);
    }
    x
}

/// Trains the K-way backbone on legitimate-device images with cross-entropy
/// and decoupled weight decay. Returns the trained model and the final
/// epoch's mean training loss.
pub fn train_closed_set<R: Rng>(
    train: &Dataset,
    cfg: BackboneConfig,
    hp: &Hyperparameters,
    rng: &mut R,
) -> Result<(Backbone<f32>, f64), OpensetError> {
    let k = cfg.num_classes;
    let mut present = vec![false; k];
    for &y in &train.labels {
        if y >= k {
            return Err(OpensetError::ShapeMismatch {
                expected: k,
                got: y + 1,
            });
        }
        present[y] = true;
    }
    if let Some(missing) = present.iter().position(|p| !p) {
        return Err(OpensetError::EmptyClass(missing));
    }
    if let Some(x) = train.inputs.first() {
        if x.data.len() != cfg.input_len() {
            return Err(OpensetError::ShapeMismatch {
                expected: cfg.input_len(),
                got: x.data.len(),
            });
        }
    }

    let mut net: Backbone<f32> = Backbone::init(cfg, rng);
    let mut opt = AdamW::new(AdamWConfig::new(hp.closed_lr, hp.closed_weight_decay));
    let input_len = net.cfg.input_len();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut final_loss = 0.0;

    for epoch in 0..hp.closed_epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(hp.closed_batch) {
            let x = gather_batch(&train.inputs, chunk, input_len);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels[i]).collect();
            let acts = net.forward(&x, chunk.len());
            let (loss, dlogits) = cross_entropy_grad(&acts.logits, &labels, chunk.len(), k);
            if !loss.is_finite() {
                return Err(OpensetError::TrainingDiverged { epoch });
            }
            for p in net.params_mut() {
                p.zero_grad();
            }
            net.backward(&acts, &dlogits);
            opt.step(&mut net.params_mut());
            epoch_loss += loss;
            batches += 1;
        }
        final_loss = epoch_loss / batches.max(1) as f64;
    }
    Ok((net, final_loss))
}

/// Pre-logit feature of a single input; deterministic in (model, input).
pub fn extract_feature(model: &Backbone<f32>, x: &ModelInput) -> Result<Vec<f32>, OpensetError> {
    if x.data.len() != model.cfg.input_len() {
        return Err(OpensetError::ShapeMismatch {
            expected: model.cfg.input_len(),
            got: x.data.len(),
        });
    }
    Ok(model.forward(&x.data, 1).features)
}

/// Batched feature extraction; returns a row-major [n, d] matrix.
pub fn extract_features(
    model: &Backbone<f32>,
    inputs: &[ModelInput],
) -> Result<Vec<f32>, OpensetError> {
    let input_len = model.cfg.input_len();
    let d = model.feature_dim();
    let mut out = Vec::with_capacity(inputs.len() * d);
    for chunk in inputs.chunks(64) {
        for x in chunk {
            if x.data.len() != input_len {
                return Err(OpensetError::ShapeMismatch {
                    expected: input_len,
                    got: x.data.len(),
                });
            }
        }
        let idx: Vec<usize> = (0..chunk.len()).collect();
        let x = gather_batch(chunk, &idx, input_len);
        out.extend(model.forward(&x, chunk.len()).features);
    }
    Ok(out)
}

/// Batched class predictions (argmax of logits).
pub fn predict_labels(
    model: &Backbone<f32>,
    inputs: &[ModelInput],
) -> Result<Vec<usize>, OpensetError> {
    let input_len = model.cfg.input_len();
    let k = model.cfg.num_classes;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(64) {
        let idx: Vec<usize> = (0..chunk.len()).collect();
        let x = gather_batch(chunk, &idx, input_len);
        let acts = model.forward(&x, chunk.len());
        for row in acts.logits.chunks_exact(k) {
            out.push(crate::nn::argmax_row(row));
        }
    }
    Ok(out)
}

/// Per-dimension mean and standard deviation of a row-major [n, d] feature
/// matrix; the deviation is floored so constant dimensions stay finite.
fn feature_stats(feats: &[f32], n: usize, d: usize) -> (Vec<f32>, Vec<f32>) {
    let mut mean = vec![0f32; d];
    for row in feats.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f32);
    let mut var = vec![0f32; d];
    for row in feats.chunks_exact(d) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            let diff = v - m;
            *s += diff * diff;
        }
    }
    let std = var
        .into_iter()
        .map(|s| (s / n as f32).sqrt().max(1e-4))
        .collect();
    (mean, std)
}

/// Rewrites the discriminator's first layer so that D'(x) = D((x - mean) /
/// std): the GAN trains in standardized feature space (raw pre-logit
/// features have norms that dwarf the generator's initial output, letting
/// the discriminator win on scale alone), while the deployed discriminator
/// consumes raw features directly.
fn fold_scaler_into_discriminator(disc: &mut Discriminator<f32>, mean: &[f32], std: &[f32]) {
    let (out_dim, in_dim) = (disc.l1.out_dim, disc.l1.in_dim);
    for j in 0..out_dim {
        let row = &mut disc.l1.weight.value[j * in_dim..(j + 1) * in_dim];
        let mut shift = 0f32;
        for i in 0..in_dim {
            row[i] /= std[i];
            shift += row[i] * mean[i];
        }
        disc.l1.bias.value[j] -= shift;
    }
}

/// Rewrites the generator's output layer so G'(z) = G(z) * std + mean,
/// mapping standardized-space fakes back to raw feature space.
fn fold_scaler_into_generator(gen: &mut Generator<f32>, mean: &[f32], std: &[f32]) {
    let (out_dim, in_dim) = (gen.l2.out_dim, gen.l2.in_dim);
    for j in 0..out_dim {
        for i in 0..in_dim {
            gen.l2.weight.value[j * in_dim + i] *= std[j];
        }
        gen.l2.bias.value[j] = gen.l2.bias.value[j] * std[j] + mean[j];
    }
}

/// Trains the feature-space GAN against the frozen backbone. The backbone is
/// taken by shared reference — its parameters cannot change. Returns the
/// final pair and one discriminator checkpoint per epoch, all operating on
/// raw (unstandardized) features.
pub fn train_open_gan<R: Rng>(
    backbone: &Backbone<f32>,
    train: &Dataset,
    hp: &Hyperparameters,
    rng: &mut R,
) -> Result<(GanPair<f32>, Vec<Discriminator<f32>>), OpensetError> {
    let d = backbone.feature_dim();
    let mut feats = extract_features(backbone, &train.inputs)?;
    let n = train.len();
    let (f_mean, f_std) = feature_stats(&feats, n, d);
    for row in feats.chunks_exact_mut(d) {
        for ((v, m), s) in row.iter_mut().zip(&f_mean).zip(&f_std) {
            *v = (*v - m) / s;
        }
    }

    let mut gen: Generator<f32> = Generator::init(hp.z_dim, hp.hidden_g, d, rng);
    let mut disc: Discriminator<f32> = Discriminator::init(d, hp.hidden_d, rng);
    let mut opt_g = AdamW::new(AdamWConfig::new(hp.gan_lr_g, hp.gan_weight_decay));
    let mut opt_d = AdamW::new(AdamWConfig::new(hp.gan_lr_d, hp.gan_weight_decay));

    let mut order: Vec<usize> = (0..n).collect();
    let mut checkpoints = Vec::with_capacity(hp.gan_epochs);

    for epoch in 0..hp.gan_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(hp.gan_batch) {
            let b = chunk.len();
            let mut real = Vec::with_capacity(b * d);
            for &i in chunk {
                real.extend_from_slice(&feats[i * d..(i + 1) * d]);
            }

            // Discriminator step: push real features toward the smoothed
            // real label, generated features toward the fake label.
            let z = gen.sample_noise(b, rng);
            let fake = gen.forward(&z, b).output;
            let real_acts = disc.forward(&real, b);
            let fake_acts = disc.forward(&fake, b);
            let (loss_r, dz_r) =
                bce_with_logits_grad(&real_acts.logits, &vec![hp.label_real; b]);
            let (loss_f, dz_f) =
                bce_with_logits_grad(&fake_acts.logits, &vec![hp.label_fake; b]);
            if !(loss_r.is_finite() && loss_f.is_finite()) {
                return Err(OpensetError::TrainingDiverged { epoch });
            }
            disc.zero_grads();
            disc.backward(&real, &real_acts, &dz_r, b);
            let lambda = hp.lambda_g;
            let dz_f_weighted: Vec<f32> = dz_f.iter().map(|g| g * lambda).collect();
            disc.backward(&fake, &fake_acts, &dz_f_weighted, b);
            opt_d.step(&mut disc.params_mut());

            // Generator step: make generated features score as real. The
            // gradient flows through the discriminator without updating it.
            let z = gen.sample_noise(b, rng);
            let g_acts = gen.forward(&z, b);
            let d_acts = disc.forward(&g_acts.output, b);
            let (loss_g, dz_g) =
                bce_with_logits_grad(&d_acts.logits, &vec![hp.label_real; b]);
            if !loss_g.is_finite() {
                return Err(OpensetError::TrainingDiverged { epoch });
            }
            disc.zero_grads();
            let dfake = disc.backward(&g_acts.output, &d_acts, &dz_g, b);
            disc.zero_grads();
            for p in gen.params_mut() {
                p.zero_grad();
            }
            gen.backward(&z, &g_acts, &dfake, b);
            opt_g.step(&mut gen.params_mut());
        }
        let mut snapshot = disc.clone();
        fold_scaler_into_discriminator(&mut snapshot, &f_mean, &f_std);
        checkpoints.push(snapshot);
    }

    fold_scaler_into_discriminator(&mut disc, &f_mean, &f_std);
    fold_scaler_into_generator(&mut gen, &f_mean, &f_std);
    Ok((
        GanPair {
            generator: gen,
            discriminator: disc,
        },
        checkpoints,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ModelInput;
    use crate::openset::Split;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Two synthetic device classes with distinct mean patterns.
    fn toy_dataset(n_per_class: usize, noise: f32, rng: &mut ChaCha12Rng) -> Dataset {
        let (h, w) = (8, 8);
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2usize {
            for _ in 0..n_per_class {
                let data: Vec<f32> = (0..3 * h * w)
                    .map(|i| {
                        let base = if class == 0 {
                            ((i % 7) as f32) / 7.0 - 0.5
                        } else {
                            ((i % 5) as f32) / 5.0 - 0.5
                        };
                        base + noise * (rng.gen::<f32>() - 0.5)
                    })
                    .collect();
                inputs.push(ModelInput {
                    height: h,
                    width: w,
                    data,
                });
                labels.push(class);
            }
        }
        Dataset::new(inputs, labels, Split::Train)
    }

    fn fast_hp() -> Hyperparameters {
        Hyperparameters {
            closed_lr: 1e-3,
            closed_epochs: 20,
            gan_epochs: 60,
            gan_batch: 16,
            gan_lr_d: 1e-3,
            gan_lr_g: 1e-3,
            z_dim: 8,
            hidden_g: 16,
            hidden_d: 16,
            ..Hyperparameters::default()
        }
    }

    #[test]
    fn separable_toy_problem_reaches_full_train_accuracy() {
        let mut rng = ChaCha12Rng::seed_from_u64(41);
        let data = toy_dataset(30, 0.0, &mut rng);
        let hp = fast_hp();
        let cfg = BackboneConfig {
            channels: vec![8, 16],
            ..BackboneConfig::compact(2, (8, 8))
        };
        let (net, loss) = train_closed_set(&data, cfg, &hp, &mut rng).unwrap();
        assert!(loss.is_finite());
        let preds = predict_labels(&net, &data.inputs).unwrap();
        let correct = preds
            .iter()
            .zip(&data.labels)
            .filter(|(a, b)| a == b)
            .count();
        assert_eq!(correct, data.len(), "toy problem must be fully separable");
    }

    #[test]
    fn missing_class_is_rejected() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut data = toy_dataset(10, 0.0, &mut rng);
        // Relabel everything to class 0; class 1 becomes empty.
        data.labels.iter_mut().for_each(|y| *y = 0);
        let cfg = BackboneConfig {
            channels: vec![4],
            ..BackboneConfig::compact(2, (8, 8))
        };
        match train_closed_set(&data, cfg, &fast_hp(), &mut rng) {
            Err(OpensetError::EmptyClass(1)) => {}
            other => panic!("expected EmptyClass(1), got {other:?}"),
        }
    }

    #[test]
    fn features_are_deterministic_with_expected_dim() {
        let mut rng = ChaCha12Rng::seed_from_u64(43);
        let data = toy_dataset(5, 0.0, &mut rng);
        let cfg = BackboneConfig {
            channels: vec![4, 6],
            ..BackboneConfig::compact(2, (8, 8))
        };
        let hp = Hyperparameters {
            closed_epochs: 1,
            ..fast_hp()
        };
        let (net, _) = train_closed_set(&data, cfg, &hp, &mut rng).unwrap();
        let f1 = extract_feature(&net, &data.inputs[0]).unwrap();
        let f2 = extract_feature(&net, &data.inputs[0]).unwrap();
        assert_eq!(f1.len(), 6);
        assert_eq!(f1, f2, "identical input must give bit-identical features");
    }

    #[test]
    fn gan_training_contract() {
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let data = toy_dataset(40, 0.1, &mut rng);
        let hp = fast_hp();
        let cfg = BackboneConfig {
            channels: vec![8, 16],
            ..BackboneConfig::compact(2, (8, 8))
        };
        let (net, _) = train_closed_set(&data, cfg, &hp, &mut rng).unwrap();

        let before = net.param_bytes();
        let (pair, checkpoints) = train_open_gan(&net, &data, &hp, &mut rng).unwrap();
        assert_eq!(
            before,
            net.param_bytes(),
            "backbone must stay frozen during open-set training"
        );
        assert_eq!(checkpoints.len(), hp.gan_epochs);

        // After training, enrolled features score higher than generated ones.
        let feats = extract_features(&net, &data.inputs).unwrap();
        let n = data.len();
        let real_scores = pair.discriminator.scores(&feats, n);
        let z = pair.generator.sample_noise(n, &mut rng);
        let fake = pair.generator.forward(&z, n).output;
        let fake_scores = pair.discriminator.scores(&fake, n);
        let mean_real: f32 = real_scores.iter().sum::<f32>() / n as f32;
        let mean_fake: f32 = fake_scores.iter().sum::<f32>() / n as f32;
        assert!(
            mean_real > mean_fake,
            "mean D(real) {mean_real} must exceed mean D(fake) {mean_fake}"
        );
        for s in real_scores.iter().chain(&fake_scores) {
            assert!(*s > 0.0 && *s < 1.0);
        }
    }
}
