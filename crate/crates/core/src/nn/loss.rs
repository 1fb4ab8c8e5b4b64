//! Loss functions with fused gradients, numerically stable formulations.

use super::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: Scalar>(logits: &[F], batch: usize, classes: usize) -> Vec<F> {
    assert_eq!(logits.len(), batch * classes);
    let mut p = vec![F::zero(); logits.len()];
    for (row_in, row_out) in logits
        .chunks_exact(classes)
        .zip(p.chunks_exact_mut(classes))
    {
        let max = row_in
            .iter()
            .copied()
            .fold(F::neg_infinity(), |a, b| a.max(b));
        let mut sum = F::zero();
        for (o, &z) in row_out.iter_mut().zip(row_in) {
            *o = (z - max).exp();
            sum += *o;
        }
        for o in row_out.iter_mut() {
            *o = *o / sum;
        }
    }
    p
}

/// Mean cross-entropy over the batch plus its gradient w.r.t. the logits,
/// dlogits = (softmax - onehot) / batch.
pub fn cross_entropy_grad<F: Scalar>(
    logits: &[F],
    labels: &[usize],
    batch: usize,
    classes: usize,
) -> (f64, Vec<F>) {
    assert_eq!(labels.len(), batch);
    let mut dlogits = softmax_rows(logits, batch, classes);
    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        debug_assert!(y < classes);
        let p = dlogits[i * classes + y].to_f64_();
        loss -= p.max(1e-300).ln() * inv_b;
        dlogits[i * classes + y] -= F::one();
    }
    let scale = F::from_f64(inv_b);
    for d in &mut dlogits {
        *d = *d * scale;
    }
    (loss, dlogits)
}

/// Logistic function clamped into the open interval (0, 1) so saturated
/// scores remain valid probabilities in finite precision.
pub fn sigmoid<F: Scalar>(z: F) -> F {
    let two = F::one() + F::one();
    let p = F::one() / (F::one() + (-z).exp());
    p.max(F::min_positive_value())
        .min(F::one() - F::epsilon() / two)
}

/// Mean binary cross-entropy on logits with per-element targets (which may
/// be smoothed labels), plus the gradient dL/dz = (sigmoid(z) - t) / n.
/// Stable form: l = max(z, 0) - z*t + ln(1 + exp(-|z|)).
pub fn bce_with_logits_grad<F: Scalar>(z: &[F], targets: &[F]) -> (f64, Vec<F>) {
    assert_eq!(z.len(), targets.len());
    let n = z.len() as f64;
    let mut loss = 0.0;
    let mut dz = vec![F::zero(); z.len()];
    let scale = F::from_f64(1.0 / n);
    for i in 0..z.len() {
        let zf = z[i].to_f64_();
        let t = targets[i].to_f64_();
        loss += (zf.max(0.0) - zf * t + (-zf.abs()).exp().ln_1p()) / n;
        dz[i] = (sigmoid(z[i]) - targets[i]) * scale;
    }
    (loss, dz)
}

/// Index of the row maximum; ties break to the lowest index.
pub fn argmax_row<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = vec![1.0f32, 2.0, 3.0, -5.0, 0.0, 5.0];
        let p = softmax_rows(&logits, 2, 3);
        for row in p.chunks_exact(3) {
            let sum: f32 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn perfect_prediction_has_near_zero_loss() {
        let logits = vec![30.0f64, 0.0, 0.0];
        let (loss, _) = cross_entropy_grad(&logits, &[0], 1, 3);
        assert!(loss.abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn cross_entropy_uniform_case() {
        // Equal logits over K classes: loss = ln K.
        let logits = vec![0.7f64; 4];
        let (loss, d) = cross_entropy_grad(&logits, &[2], 1, 4);
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        // Gradient rows sum to zero.
        let sum: f64 = d.iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn bce_matches_direct_formula() {
        let z = vec![0.3f64, -1.2, 2.0];
        let t = vec![0.95f64, 0.05, 0.95];
        let (loss, _) = bce_with_logits_grad(&z, &t);
        let direct: f64 = z
            .iter()
            .zip(&t)
            .map(|(&z, &t)| {
                let p = 1.0 / (1.0 + (-z).exp());
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 3.0;
        assert!((loss - direct).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_stays_in_open_unit_interval() {
        for z in [-80.0f32, -5.0, 0.0, 5.0, 80.0] {
            let p = sigmoid(z);
            assert!(p > 0.0 && p < 1.0, "sigmoid({z}) = {p}");
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_row(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_row(&[5.0f32, 5.0]), 0);
    }
}
