//! Feature-space generator and discriminator.
//!
//! Both are single-hidden-layer MLPs: the generator maps Gaussian noise to
//! synthetic pre-logit features, the discriminator maps a feature vector to
//! one logit whose sigmoid is the open-set confidence.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::layers::{relu_backward, relu_forward};
use crate::nn::{sigmoid, Linear, Param, Scalar};

#[derive(Debug, Clone)]
pub struct Generator<F: Scalar> {
    pub z_dim: usize,
    pub l1: Linear<F>,
    pub l2: Linear<F>,
}

pub struct GenActs<F: Scalar> {
    relu_out: Vec<F>,
    /// Synthetic features, [batch, out_dim].
    pub output: Vec<F>,
}

impl<F: Scalar> Generator<F> {
    pub fn init<R: Rng>(z_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            z_dim,
            l1: Linear::init(z_dim, hidden, rng),
            l2: Linear::init_head(hidden, out_dim, rng),
        }
    }

    pub fn sample_noise<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<F> {
        (0..batch * self.z_dim)
            .map(|_| {
                let x: f64 = StandardNormal.sample(rng);
                F::from_f64(x)
            })
            .collect()
    }

    pub fn forward(&self, z: &[F], batch: usize) -> GenActs<F> {
        let relu_out = relu_forward(&self.l1.forward(z, batch));
        let output = self.l2.forward(&relu_out, batch);
        GenActs { relu_out, output }
    }

    /// Accumulates gradients given dL/d(output).
    pub fn backward(&mut self, z: &[F], acts: &GenActs<F>, dout: &[F], batch: usize) {
        let dh = self.l2.backward(&acts.relu_out, dout, batch);
        let dh = relu_backward(&acts.relu_out, &dh);
        self.l1.backward(z, &dh, batch);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut p = self.l1.params_mut();
        p.extend(self.l2.params_mut());
        p
    }
}

#[derive(Debug, Clone)]
pub struct Discriminator<F: Scalar> {
    pub l1: Linear<F>,
    pub l2: Linear<F>,
}

pub struct DiscActs<F: Scalar> {
    relu_out: Vec<F>,
    /// Raw logits, [batch]; sigmoid gives the open-set confidence.
    pub logits: Vec<F>,
}

impl<F: Scalar> Discriminator<F> {
    pub fn init<R: Rng>(in_dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            l1: Linear::init(in_dim, hidden, rng),
            l2: Linear::init_head(hidden, 1, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.l1.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.l1.out_dim
    }

    pub fn forward(&self, features: &[F], batch: usize) -> DiscActs<F> {
        let relu_out = relu_forward(&self.l1.forward(features, batch));
        let logits = self.l2.forward(&relu_out, batch);
        DiscActs { relu_out, logits }
    }

    /// Sigmoid confidence scores in (0, 1), one per row of `features`.
    pub fn scores(&self, features: &[F], batch: usize) -> Vec<F> {
        self.forward(features, batch)
            .logits
            .into_iter()
            .map(sigmoid)
            .collect()
    }

    /// Accumulates gradients and returns dL/d(features), which feeds the
    /// generator's backward pass during its update step.
    pub fn backward(
        &mut self,
        features: &[F],
        acts: &DiscActs<F>,
        dlogits: &[F],
        batch: usize,
    ) -> Vec<F> {
        let dh = self.l2.backward(&acts.relu_out, dlogits, batch);
        let dh = relu_backward(&acts.relu_out, &dh);
        self.l1.backward(features, &dh, batch)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut p = self.l1.params_mut();
        p.extend(self.l2.params_mut());
        p
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Raw little-endian parameter bytes, for manifests and equality checks.
    pub fn param_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        for v in [
            &self.l1.weight.value,
            &self.l1.bias.value,
            &self.l2.weight.value,
            &self.l2.bias.value,
        ] {
            for x in v.iter() {
                bytes.extend_from_slice(&x.to_f64_().to_le_bytes());
            }
        }
        bytes
    }
}

/// The generator/discriminator pair produced by open-set training.
#[derive(Debug, Clone)]
pub struct GanPair<F: Scalar> {
    pub generator: Generator<F>,
    pub discriminator: Discriminator<F>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::bce_with_logits_grad;
    use crate::nn::gradcheck::check_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn discriminator_scores_in_open_interval() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let d: Discriminator<f32> = Discriminator::init(8, 16, &mut rng);
        let f: Vec<f32> = (0..8 * 4).map(|i| (i as f32 - 16.0) * 10.0).collect();
        for s in d.scores(&f, 4) {
            assert!(s > 0.0 && s < 1.0, "score {s}");
        }
    }

    #[test]
    fn discriminator_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        let mut d: Discriminator<f64> = Discriminator::init(5, 7, &mut rng);
        let batch = 3;
        let feats: Vec<f64> = (0..batch * 5).map(|i| ((i * 17 % 31) as f64 - 15.0) / 15.0).collect();
        let targets = vec![0.95f64, 0.05, 0.95];

        let acts = d.forward(&feats, batch);
        let (_, dz) = bce_with_logits_grad(&acts.logits, &targets);
        d.zero_grads();
        d.backward(&feats, &acts, &dz, batch);

        let n_params = d.params_mut().len();
        for pi in 0..n_params {
            let analytic = d.params_mut()[pi].grad.clone();
            let mut value = d.params_mut()[pi].value.clone();
            let mut f = |v: &[f64]| {
                let mut probe = d.clone();
                probe.params_mut()[pi].value.copy_from_slice(v);
                let acts = probe.forward(&feats, batch);
                bce_with_logits_grad(&acts.logits, &targets).0
            };
            let worst = check_grad(&mut f, &mut value, &analytic, 10, &mut rng);
            assert!(worst < 1e-6, "param {pi}: worst {worst}");
        }
    }

    #[test]
    fn generator_gradients_through_discriminator() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let mut g: Generator<f64> = Generator::init(4, 6, 5, &mut rng);
        let d: Discriminator<f64> = Discriminator::init(5, 7, &mut rng);
        let batch = 2;
        let z = g.sample_noise(batch, &mut rng);
        let targets = vec![0.95f64; batch];

        let g_acts = g.forward(&z, batch);
        let d_acts = d.forward(&g_acts.output, batch);
        let (_, dz_logits) = bce_with_logits_grad(&d_acts.logits, &targets);
        let mut d_probe = d.clone();
        let dfake = d_probe.backward(&g_acts.output, &d_acts, &dz_logits, batch);
        for p in g.params_mut() {
            p.zero_grad();
        }
        g.backward(&z, &g_acts, &dfake, batch);

        let n_params = g.params_mut().len();
        for pi in 0..n_params {
            let analytic = g.params_mut()[pi].grad.clone();
            let mut value = g.params_mut()[pi].value.clone();
            let mut f = |v: &[f64]| {
                let mut probe = g.clone();
                probe.params_mut()[pi].value.copy_from_slice(v);
                let g_acts = probe.forward(&z, batch);
                let d_acts = d.forward(&g_acts.output, batch);
                bce_with_logits_grad(&d_acts.logits, &targets).0
            };
            let worst = check_grad(&mut f, &mut value, &analytic, 10, &mut rng);
            assert!(worst < 1e-6, "generator param {pi}: worst {worst}");
        }
    }
}
