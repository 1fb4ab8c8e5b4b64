//! Compact convolutional backbone: stride-2 conv blocks with ReLU, global
//! average pooling to the pre-logit feature vector, and a linear class head.
//!
//! The backbone is deliberately an interface-sized component — any feature
//! extractor with the same (logits, features) contract can replace it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::layers::{gap_backward, gap_forward, relu_backward, relu_forward, ConvCache};
use crate::nn::{Conv2d, Linear, Param, Scalar};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BackboneConfig {
    pub in_channels: usize,
    /// Output channels of each conv block; the last entry is the feature
    /// dimension after global average pooling.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub num_classes: usize,
    pub input_hw: (usize, usize),
}

impl BackboneConfig {
    pub fn compact(num_classes: usize, input_hw: (usize, usize)) -> Self {
        Self {
            in_channels: 3,
            channels: vec![16, 32, 64],
            kernel: 3,
            stride: 2,
            pad: 1,
            num_classes,
            input_hw,
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.channels.last().expect("at least one block")
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.input_hw.0 * self.input_hw.1
    }
}

/// Activation caches from one forward pass, consumed by `backward`.
pub struct BackboneActs<F: Scalar> {
    relu_outs: Vec<Vec<F>>,
    conv_caches: Vec<ConvCache<F>>,
    /// Spatial size after each conv block.
    spatial: Vec<(usize, usize)>,
    batch: usize,
    /// Pre-logit features, [batch, d].
    pub features: Vec<F>,
    /// Class logits, [batch, K].
    pub logits: Vec<F>,
}

#[derive(Debug, Clone)]
pub struct Backbone<F: Scalar> {
    pub cfg: BackboneConfig,
    pub convs: Vec<Conv2d<F>>,
    pub head: Linear<F>,
}

impl<F: Scalar> Backbone<F> {
    pub fn init<R: Rng>(cfg: BackboneConfig, rng: &mut R) -> Self {
        let mut convs = Vec::with_capacity(cfg.channels.len());
        let mut in_ch = cfg.in_channels;
        for &out_ch in &cfg.channels {
            convs.push(Conv2d::init(in_ch, out_ch, cfg.kernel, cfg.stride, cfg.pad, rng));
            in_ch = out_ch;
        }
        let head = Linear::init_head(cfg.feature_dim(), cfg.num_classes, rng);
        Self { cfg, convs, head }
    }

    pub fn feature_dim(&self) -> usize {
        self.cfg.feature_dim()
    }

    /// x: [batch, in_channels, H, W] flattened. Returns logits, pre-logit
    /// features, and the caches needed for a backward pass.
    pub fn forward(&self, x: &[F], batch: usize) -> BackboneActs<F> {
        assert_eq!(x.len(), batch * self.cfg.input_len());
        let (mut h, mut w) = self.cfg.input_hw;
        let mut relu_outs: Vec<Vec<F>> = Vec::with_capacity(self.convs.len());
        let mut conv_caches = Vec::with_capacity(self.convs.len());
        let mut spatial = Vec::with_capacity(self.convs.len());

        for (i, conv) in self.convs.iter().enumerate() {
            let (y, cache) = if i == 0 {
                conv.forward(x, batch, h, w)
            } else {
                conv.forward(&relu_outs[i - 1], batch, h, w)
            };
            let (oh, ow) = conv.out_hw(h, w);
            relu_outs.push(relu_forward(&y));
            conv_caches.push(cache);
            spatial.push((oh, ow));
            h = oh;
            w = ow;
        }

        let d = self.feature_dim();
        let features = gap_forward(relu_outs.last().expect("blocks"), batch, d, h, w);
        let logits = self.head.forward(&features, batch);
        BackboneActs {
            relu_outs,
            conv_caches,
            spatial,
            batch,
            features,
            logits,
        }
    }

    /// Accumulates gradients for all parameters from dL/dlogits.
    pub fn backward(&mut self, acts: &BackboneActs<F>, dlogits: &[F]) {
        let batch = acts.batch;
        let dfeat = self.head.backward(&acts.features, dlogits, batch);
        let (h, w) = *acts.spatial.last().expect("blocks");
        let mut dcur = gap_backward(&dfeat, batch, self.feature_dim(), h, w);
        for i in (0..self.convs.len()).rev() {
            let drelu = relu_backward(&acts.relu_outs[i], &dcur);
            dcur = self.convs[i].backward(&acts.conv_caches[i], &drelu);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut params = Vec::new();
        for conv in &mut self.convs {
            params.extend(conv.params_mut());
        }
        params.extend(self.head.params_mut());
        params
    }

    /// Raw little-endian bytes of every parameter, in traversal order. Used
    /// to verify the freezing contract.
    pub fn param_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        let mut push = |v: &[F]| {
            for x in v {
                bytes.extend_from_slice(&x.to_f64_().to_le_bytes());
            }
        };
        for conv in &self.convs {
            push(&conv.weight.value);
            push(&conv.bias.value);
        }
        push(&self.head.weight.value);
        push(&self.head.bias.value);
        bytes
    }
}
