//! Layers with explicit forward/backward passes: 2D convolution (im2col +
//! GEMM), fully connected, ReLU, and global average pooling.
//!
//! Backward passes accumulate into each parameter's `grad` buffer; callers
//! zero gradients between steps. Activations needed for the backward pass
//! travel in cache structs returned by `forward`, so layers themselves stay
//! immutable during inference and are safe to share across threads.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{matmul, matmul_a_bt, matmul_at_b, Param, Scalar};

fn sample_normal<F: Scalar, R: Rng>(rng: &mut R, std: f64) -> F {
    let x: f64 = StandardNormal.sample(rng);
    F::from_f64(x * std)
}

/// 2D convolution, square kernel, same padding semantics as
/// out = floor((in + 2*pad - kernel) / stride) + 1.
#[derive(Debug, Clone)]
pub struct Conv2d<F: Scalar> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// [out_ch, in_ch * kernel * kernel]
    pub weight: Param<F>,
    /// [out_ch]
    pub bias: Param<F>,
}

/// Per-batch activation cache for the convolution backward pass.
pub struct ConvCache<F: Scalar> {
    cols: Vec<F>,
    batch: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

impl<F: Scalar> Conv2d<F> {
    /// Kaiming-normal initialization (ReLU gain), zero bias.
    pub fn init<R: Rng>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = (0..out_ch * fan_in)
            .map(|_| sample_normal(rng, std))
            .collect();
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            weight: Param::new(weight),
            bias: Param::new(vec![F::zero(); out_ch]),
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    fn im2col(&self, x: &[F], h: usize, w: usize, out_h: usize, out_w: usize, col: &mut [F]) {
        let positions = out_h * out_w;
        for c in 0..self.in_ch {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let out = &mut col[row * positions..(row + 1) * positions];
                    for oy in 0..out_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..out_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                out[oy * out_w + ox] = plane[iy as usize * w + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[F], h: usize, w: usize, out_h: usize, out_w: usize, dx: &mut [F]) {
        let positions = out_h * out_w;
        for c in 0..self.in_ch {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let src = &col[row * positions..(row + 1) * positions];
                    for oy in 0..out_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..out_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                plane[iy as usize * w + ix as usize] += src[oy * out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    /// x: [batch, in_ch, h, w] -> y: [batch, out_ch, out_h, out_w].
    pub fn forward(&self, x: &[F], batch: usize, h: usize, w: usize) -> (Vec<F>, ConvCache<F>) {
        assert_eq!(x.len(), batch * self.in_ch * h * w);
        let (out_h, out_w) = self.out_hw(h, w);
        let positions = out_h * out_w;
        let patch = self.patch_len();
        let mut cols = vec![F::zero(); batch * patch * positions];
        let mut y = vec![F::zero(); batch * self.out_ch * positions];
        for s in 0..batch {
            let col = &mut cols[s * patch * positions..(s + 1) * patch * positions];
            self.im2col(&x[s * self.in_ch * h * w..(s + 1) * self.in_ch * h * w], h, w, out_h, out_w, col);
            let y_s = &mut y[s * self.out_ch * positions..(s + 1) * self.out_ch * positions];
            matmul(self.out_ch, patch, positions, &self.weight.value, col, F::zero(), y_s);
            for oc in 0..self.out_ch {
                let b = self.bias.value[oc];
                for v in &mut y_s[oc * positions..(oc + 1) * positions] {
                    *v += b;
                }
            }
        }
        (
            y,
            ConvCache {
                cols,
                batch,
                in_h: h,
                in_w: w,
                out_h,
                out_w,
            },
        )
    }

    /// Accumulates weight/bias gradients and returns dx.
    pub fn backward(&mut self, cache: &ConvCache<F>, dy: &[F]) -> Vec<F> {
        let positions = cache.out_h * cache.out_w;
        let patch = self.patch_len();
        assert_eq!(dy.len(), cache.batch * self.out_ch * positions);
        let mut dx = vec![F::zero(); cache.batch * self.in_ch * cache.in_h * cache.in_w];
        let mut dcol = vec![F::zero(); patch * positions];
        for s in 0..cache.batch {
            let col = &cache.cols[s * patch * positions..(s + 1) * patch * positions];
            let dy_s = &dy[s * self.out_ch * positions..(s + 1) * self.out_ch * positions];
            // dW += dY_s * col^T
            matmul_a_bt(
                self.out_ch,
                positions,
                patch,
                dy_s,
                col,
                F::one(),
                &mut self.weight.grad,
            );
            for oc in 0..self.out_ch {
                self.bias.grad[oc] += dy_s[oc * positions..(oc + 1) * positions]
                    .iter()
                    .copied()
                    .sum::<F>();
            }
            // dcol = W^T * dY_s
            matmul_at_b(patch, self.out_ch, positions, &self.weight.value, dy_s, F::zero(), &mut dcol);
            self.col2im(
                &dcol,
                cache.in_h,
                cache.in_w,
                cache.out_h,
                cache.out_w,
                &mut dx[s * self.in_ch * cache.in_h * cache.in_w..(s + 1) * self.in_ch * cache.in_h * cache.in_w],
            );
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Fully connected layer, weight [out_dim, in_dim].
#[derive(Debug, Clone)]
pub struct Linear<F: Scalar> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param<F>,
    pub bias: Param<F>,
}

impl<F: Scalar> Linear<F> {
    /// Kaiming-normal initialization for hidden layers.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self::init_with_std(in_dim, out_dim, (2.0 / in_dim as f64).sqrt(), rng)
    }

    /// Smaller-variance initialization for output heads.
    pub fn init_head<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self::init_with_std(in_dim, out_dim, (1.0 / in_dim as f64).sqrt(), rng)
    }

    fn init_with_std<R: Rng>(in_dim: usize, out_dim: usize, std: f64, rng: &mut R) -> Self {
        let weight = (0..out_dim * in_dim)
            .map(|_| sample_normal(rng, std))
            .collect();
        Self {
            in_dim,
            out_dim,
            weight: Param::new(weight),
            bias: Param::new(vec![F::zero(); out_dim]),
        }
    }

    /// x: [batch, in_dim] -> y: [batch, out_dim].
    pub fn forward(&self, x: &[F], batch: usize) -> Vec<F> {
        assert_eq!(x.len(), batch * self.in_dim);
        let mut y = vec![F::zero(); batch * self.out_dim];
        matmul_a_bt(batch, self.in_dim, self.out_dim, x, &self.weight.value, F::zero(), &mut y);
        for row in y.chunks_exact_mut(self.out_dim) {
            for (v, b) in row.iter_mut().zip(&self.bias.value) {
                *v += *b;
            }
        }
        y
    }

    /// Accumulates gradients and returns dx. `x` is the forward input.
    pub fn backward(&mut self, x: &[F], dy: &[F], batch: usize) -> Vec<F> {
        assert_eq!(x.len(), batch * self.in_dim);
        assert_eq!(dy.len(), batch * self.out_dim);
        // dW += dY^T * X
        matmul_at_b(
            self.out_dim,
            batch,
            self.in_dim,
            dy,
            x,
            F::one(),
            &mut self.weight.grad,
        );
        for row in dy.chunks_exact(self.out_dim) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g += *d;
            }
        }
        let mut dx = vec![F::zero(); batch * self.in_dim];
        matmul(batch, self.out_dim, self.in_dim, dy, &self.weight.value, F::zero(), &mut dx);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn relu_forward<F: Scalar>(x: &[F]) -> Vec<F> {
    x.iter().map(|&v| v.max(F::zero())).collect()
}

/// dx = dy where the forward output was positive, else 0.
pub fn relu_backward<F: Scalar>(y: &[F], dy: &[F]) -> Vec<F> {
    y.iter()
        .zip(dy)
        .map(|(&v, &d)| if v > F::zero() { d } else { F::zero() })
        .collect()
}

/// [batch, ch, h, w] -> [batch, ch] spatial mean.
pub fn gap_forward<F: Scalar>(x: &[F], batch: usize, ch: usize, h: usize, w: usize) -> Vec<F> {
    let hw = h * w;
    let scale = F::from_f64(1.0 / hw as f64);
    let mut y = vec![F::zero(); batch * ch];
    for s in 0..batch {
        for c in 0..ch {
            let sum: F = x[(s * ch + c) * hw..(s * ch + c + 1) * hw]
                .iter()
                .copied()
                .sum();
            y[s * ch + c] = sum * scale;
        }
    }
    y
}

pub fn gap_backward<F: Scalar>(dy: &[F], batch: usize, ch: usize, h: usize, w: usize) -> Vec<F> {
    let hw = h * w;
    let scale = F::from_f64(1.0 / hw as f64);
    let mut dx = vec![F::zero(); batch * ch * hw];
    for s in 0..batch {
        for c in 0..ch {
            let g = dy[s * ch + c] * scale;
            for v in &mut dx[(s * ch + c) * hw..(s * ch + c + 1) * hw] {
                *v = g;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Direct convolution used as an independent oracle for the
    /// im2col + GEMM path.
    fn conv_naive(
        conv: &Conv2d<f64>,
        x: &[f64],
        batch: usize,
        h: usize,
        w: usize,
    ) -> Vec<f64> {
        let (oh, ow) = conv.out_hw(h, w);
        let mut y = vec![0.0; batch * conv.out_ch * oh * ow];
        for s in 0..batch {
            for oc in 0..conv.out_ch {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = conv.bias.value[oc];
                        for ic in 0..conv.in_ch {
                            for ky in 0..conv.kernel {
                                for kx in 0..conv.kernel {
                                    let iy = (oy * conv.stride + ky) as isize - conv.pad as isize;
                                    let ix = (ox * conv.stride + kx) as isize - conv.pad as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        let xv = x[((s * conv.in_ch + ic) * h + iy as usize) * w
                                            + ix as usize];
                                        let wv = conv.weight.value
                                            [(oc * conv.in_ch + ic) * conv.kernel * conv.kernel
                                                + ky * conv.kernel
                                                + kx];
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        y[((s * conv.out_ch + oc) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_forward_matches_direct_convolution() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let conv: Conv2d<f64> = Conv2d::init(3, 4, 3, 2, 1, &mut rng);
        let (batch, h, w) = (2, 7, 6);
        let x: Vec<f64> = (0..batch * 3 * h * w)
            .map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0)
            .collect();
        let (y, _) = conv.forward(&x, batch, h, w);
        let want = conv_naive(&conv, &x, batch, h, w);
        assert_eq!(y.len(), want.len());
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn linear_forward_hand_example() {
        let mut l: Linear<f64> = Linear::init(2, 2, &mut ChaCha12Rng::seed_from_u64(0));
        l.weight.value = vec![1.0, 2.0, 3.0, 4.0]; // rows: outputs
        l.bias.value = vec![0.5, -0.5];
        let y = l.forward(&[1.0, 1.0], 1);
        assert_eq!(y, vec![3.5, 6.5]);
    }

    #[test]
    fn gap_is_spatial_mean() {
        let x = vec![1.0f32, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0];
        let y = gap_forward(&x, 1, 2, 2, 2);
        assert_eq!(y, vec![2.5, 25.0]);
        let dx = gap_backward(&[4.0, 8.0], 1, 2, 2, 2);
        assert_eq!(dx, vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn relu_masks_negatives() {
        let y = relu_forward(&[-1.0f32, 0.0, 2.0]);
        assert_eq!(y, vec![0.0, 0.0, 2.0]);
        let dx = relu_backward(&y, &[5.0, 5.0, 5.0]);
        assert_eq!(dx, vec![0.0, 0.0, 5.0]);
    }
}
