//! 1-D convolution over the time axis, max pooling, flatten, dense layers, and
//! ReLU — each as a (forward, backward) pair with exact analytic gradients.
//! Inputs are `[time x channels]` tensors; convolution stride is fixed at 1
//! and downsampling is left to pooling.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero-pad so the output time-length equals the input time-length.
    Same,
    /// No padding; output length is `T - kernel_len + 1`.
    Valid,
}

/// 1-D convolution layer: weights `[out_ch x in_ch x kernel_len]`, bias `[out_ch]`.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub padding: Padding,
}

impl ConvLayer {
    /// Glorot-initialized layer; fan sizes count the kernel taps.
    pub fn glorot(
        out_ch: usize,
        in_ch: usize,
        kernel_len: usize,
        padding: Padding,
        rng: &mut RngStream,
    ) -> Self {
        let weights = rng.glorot(
            in_ch * kernel_len,
            out_ch * kernel_len,
            &[out_ch, in_ch, kernel_len],
        );
        ConvLayer {
            weights,
            bias: Tensor::zeros(&[out_ch]),
            padding,
        }
    }

    pub fn from_parts(weights: Tensor, bias: Tensor, padding: Padding) -> Result<Self> {
        if weights.rank() != 3 || bias.rank() != 1 || weights.shape()[0] != bias.shape()[0] {
            return Err(Error::ShapeMismatch {
                context: "conv layer weights/bias".into(),
                lhs: weights.shape().to_vec(),
                rhs: bias.shape().to_vec(),
            });
        }
        Ok(ConvLayer {
            weights,
            bias,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel_len(&self) -> usize {
        self.weights.shape()[2]
    }

    fn pad_left(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel_len() - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn out_len(&self, in_len: usize) -> Result<usize> {
        match self.padding {
            Padding::Same => Ok(in_len),
            Padding::Valid => {
                if in_len < self.kernel_len() {
                    Err(Error::ShapeMismatch {
                        context: "conv1d valid padding needs T >= kernel_len".into(),
                        lhs: vec![in_len],
                        rhs: vec![self.kernel_len()],
                    })
                } else {
                    Ok(in_len - self.kernel_len() + 1)
                }
            }
        }
    }
}

/// Retains the forward input for the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Tensor,
}

/// `z[t,o] = b[o] + sum_{c,k} W[o,c,k] * x_pad[t+k-pad_left, c]`
pub fn conv1d_forward(layer: &ConvLayer, x: &Tensor) -> Result<(Tensor, ConvCache)> {
    if x.rank() != 2 || x.shape()[1] != layer.in_channels() {
        return Err(Error::ShapeMismatch {
            context: "conv1d input".into(),
            lhs: x.shape().to_vec(),
            rhs: vec![layer.in_channels()],
        });
    }
    let t_in = x.shape()[0];
    let t_out = layer.out_len(t_in)?;
    let (out_ch, in_ch, klen) = (
        layer.out_channels(),
        layer.in_channels(),
        layer.kernel_len(),
    );
    let pad = layer.pad_left() as isize;

    let mut z = Tensor::zeros(&[t_out, out_ch]);
    for t in 0..t_out {
        for o in 0..out_ch {
            let mut acc = layer.bias.data()[o];
            for k in 0..klen {
                let src = t as isize + k as isize - pad;
                if src < 0 || src >= t_in as isize {
                    continue;
                }
                let src = src as usize;
                for c in 0..in_ch {
                    acc += layer.weights.at3(o, c, k) * x.at2(src, c);
                }
            }
            *z.at2_mut(t, o) = acc;
        }
    }
    Ok((z, ConvCache { input: x.clone() }))
}

/// Exact gradients of `conv1d_forward`: returns `(grad_x, grad_w, grad_b)`.
pub fn conv1d_backward(
    layer: &ConvLayer,
    cache: &ConvCache,
    grad_z: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let x = &cache.input;
    let t_in = x.shape()[0];
    let t_out = layer.out_len(t_in)?;
    if grad_z.rank() != 2 || grad_z.shape() != [t_out, layer.out_channels()] {
        return Err(Error::ShapeMismatch {
            context: "conv1d_backward grad".into(),
            lhs: grad_z.shape().to_vec(),
            rhs: vec![t_out, layer.out_channels()],
        });
    }
    let (out_ch, in_ch, klen) = (
        layer.out_channels(),
        layer.in_channels(),
        layer.kernel_len(),
    );
    let pad = layer.pad_left() as isize;

    let mut grad_x = Tensor::zeros(&[t_in, in_ch]);
    let mut grad_w = Tensor::zeros(&[out_ch, in_ch, klen]);
    let mut grad_b = Tensor::zeros(&[out_ch]);

    for t in 0..t_out {
        for o in 0..out_ch {
            let g = grad_z.at2(t, o);
            if g == 0.0 {
                continue;
            }
            grad_b.data_mut()[o] += g;
            for k in 0..klen {
                let src = t as isize + k as isize - pad;
                if src < 0 || src >= t_in as isize {
                    continue;
                }
                let src = src as usize;
                for c in 0..in_ch {
                    *grad_w.at3_mut(o, c, k) += g * x.at2(src, c);
                    *grad_x.at2_mut(src, c) += g * layer.weights.at3(o, c, k);
                }
            }
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

/// Max-pool window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub filter: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn out_len(&self, in_len: usize) -> Result<usize> {
        if in_len < self.filter {
            return Err(Error::ShapeMismatch {
                context: "maxpool needs T >= filter".into(),
                lhs: vec![in_len],
                rhs: vec![self.filter],
            });
        }
        Ok((in_len - self.filter) / self.stride + 1)
    }
}

/// Winning input indices per pooled cell, for backward routing.
#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<usize>,
    in_shape: [usize; 2],
}

pub fn maxpool_forward(spec: &PoolSpec, x: &Tensor) -> Result<(Tensor, PoolCache)> {
    if x.rank() != 2 {
        return Err(Error::ShapeMismatch {
            context: "maxpool input".into(),
            lhs: x.shape().to_vec(),
            rhs: vec![2],
        });
    }
    let (t_in, ch) = (x.shape()[0], x.shape()[1]);
    let t_out = spec.out_len(t_in)?;
    let mut y = Tensor::zeros(&[t_out, ch]);
    let mut argmax = vec![0usize; t_out * ch];
    for t in 0..t_out {
        let start = t * spec.stride;
        for c in 0..ch {
            let mut best = x.at2(start, c);
            let mut best_idx = start;
            // Strict > keeps the earliest index on ties.
            for dt in 1..spec.filter {
                let v = x.at2(start + dt, c);
                if v > best {
                    best = v;
                    best_idx = start + dt;
                }
            }
            *y.at2_mut(t, c) = best;
            argmax[t * ch + c] = best_idx;
        }
    }
    Ok((
        y,
        PoolCache {
            argmax,
            in_shape: [t_in, ch],
        },
    ))
}

/// Routes each pooled gradient to its argmax position; everything else is zero.
pub fn maxpool_backward(cache: &PoolCache, grad_y: &Tensor) -> Result<Tensor> {
    let ch = cache.in_shape[1];
    if grad_y.rank() != 2 || grad_y.shape()[1] != ch || grad_y.len() != cache.argmax.len() {
        return Err(Error::ShapeMismatch {
            context: "maxpool_backward grad".into(),
            lhs: grad_y.shape().to_vec(),
            rhs: cache.in_shape.to_vec(),
        });
    }
    let mut grad_x = Tensor::zeros(&cache.in_shape);
    let t_out = grad_y.shape()[0];
    for t in 0..t_out {
        for c in 0..ch {
            let src = cache.argmax[t * ch + c];
            *grad_x.at2_mut(src, c) += grad_y.at2(t, c);
        }
    }
    Ok(grad_x)
}

/// Smallest margin between a pooling winner and a runner-up across all
/// windows; gradient checks skip configurations where this is near zero.
pub fn maxpool_tie_margin(spec: &PoolSpec, x: &Tensor) -> Result<f64> {
    let (t_in, ch) = (x.shape()[0], x.shape()[1]);
    let t_out = spec.out_len(t_in)?;
    let mut margin = f64::INFINITY;
    for t in 0..t_out {
        let start = t * spec.stride;
        for c in 0..ch {
            let mut best = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for dt in 0..spec.filter {
                let v = x.at2(start + dt, c);
                if v > best {
                    second = best;
                    best = v;
                } else if v > second {
                    second = v;
                }
            }
            if second.is_finite() {
                margin = margin.min(best - second);
            }
        }
    }
    Ok(margin)
}

/// Row-major flattening of a `[T x ch]` map into a vector of length `T*ch`.
pub fn flatten(x: &Tensor) -> Tensor {
    Tensor::from_vec(x.data().to_vec())
}

/// Inverse of `flatten` for the stated geometry.
pub fn unflatten(x: &Tensor, time: usize, channels: usize) -> Result<Tensor> {
    Tensor::new(vec![time, channels], x.data().to_vec())
}

/// Fully connected layer: weights `[out x in]`, bias `[out]`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl DenseLayer {
    pub fn glorot(out_dim: usize, in_dim: usize, rng: &mut RngStream) -> Self {
        DenseLayer {
            weights: rng.glorot(in_dim, out_dim, &[out_dim, in_dim]),
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Tensor,
}

/// `z = Wx + b`
pub fn dense_forward(layer: &DenseLayer, x: &Tensor) -> Result<(Tensor, DenseCache)> {
    if x.rank() != 1 || x.len() != layer.in_dim() {
        return Err(Error::ShapeMismatch {
            context: "dense input".into(),
            lhs: x.shape().to_vec(),
            rhs: vec![layer.in_dim()],
        });
    }
    let z = crate::tensor::matvec(&layer.weights, x.data());
    let z: Vec<f64> = z
        .into_iter()
        .zip(layer.bias.data())
        .map(|(v, b)| v + b)
        .collect();
    Ok((Tensor::from_vec(z), DenseCache { input: x.clone() }))
}

/// Exact gradients of `dense_forward`: returns `(grad_x, grad_w, grad_b)`.
pub fn dense_backward(
    layer: &DenseLayer,
    cache: &DenseCache,
    grad_z: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    if grad_z.rank() != 1 || grad_z.len() != layer.out_dim() {
        return Err(Error::ShapeMismatch {
            context: "dense_backward grad".into(),
            lhs: grad_z.shape().to_vec(),
            rhs: vec![layer.out_dim()],
        });
    }
    let mut grad_x = vec![0.0; layer.in_dim()];
    crate::tensor::matvec_t_accum(&layer.weights, grad_z.data(), &mut grad_x);
    let mut grad_w = Tensor::zeros(&[layer.out_dim(), layer.in_dim()]);
    crate::tensor::outer_accum(&mut grad_w, grad_z.data(), cache.input.data());
    Ok((Tensor::from_vec(grad_x), grad_w, grad_z.clone()))
}

#[derive(Debug, Clone)]
pub struct ReluCache {
    pre_activation: Tensor,
}

pub fn relu_forward(x: &Tensor) -> (Tensor, ReluCache) {
    (
        crate::tensor::relu(x),
        ReluCache {
            pre_activation: x.clone(),
        },
    )
}

/// Multiplies by the indicator `z > 0`; the gradient at exactly 0 is 0.
pub fn relu_backward(cache: &ReluCache, grad: &Tensor) -> Result<Tensor> {
    if grad.shape() != cache.pre_activation.shape() {
        return Err(Error::ShapeMismatch {
            context: "relu_backward grad".into(),
            lhs: grad.shape().to_vec(),
            rhs: cache.pre_activation.shape().to_vec(),
        });
    }
    let data: Vec<f64> = cache
        .pre_activation
        .data()
        .iter()
        .zip(grad.data())
        .map(|(&z, &g)| if z > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(grad.shape().to_vec(), data)
}

/// Smallest |pre-activation| seen by a ReLU; gradient checks skip
/// configurations where this is near the kink.
pub fn relu_kink_margin(cache: &ReluCache) -> f64 {
    cache
        .pre_activation
        .data()
        .iter()
        .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_channel(xs: &[f64]) -> Tensor {
        Tensor::new(vec![xs.len(), 1], xs.to_vec()).unwrap()
    }

    #[test]
    fn conv_zero_weights_emit_bias() {
        let layer = ConvLayer::from_parts(
            Tensor::zeros(&[2, 1, 3]),
            Tensor::from_vec(vec![1.5, -0.5]),
            Padding::Same,
        )
        .unwrap();
        let x = single_channel(&[1.0, 2.0, 3.0, 4.0]);
        let (z, _) = conv1d_forward(&layer, &x).unwrap();
        for t in 0..4 {
            assert_eq!(z.at2(t, 0), 1.5);
            assert_eq!(z.at2(t, 1), -0.5);
        }
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let layer = ConvLayer::from_parts(
            Tensor::new(vec![1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap(),
            Tensor::zeros(&[1]),
            Padding::Same,
        )
        .unwrap();
        let x = single_channel(&[0.3, -1.2, 4.5, 2.0, 0.0]);
        let (z, _) = conv1d_forward(&layer, &x).unwrap();
        assert_eq!(z.data(), x.data());
    }

    #[test]
    fn conv_valid_hand_sum() {
        let layer = ConvLayer::from_parts(
            Tensor::new(vec![1, 1, 2], vec![1.0, 1.0]).unwrap(),
            Tensor::zeros(&[1]),
            Padding::Valid,
        )
        .unwrap();
        let x = single_channel(&[1.0, 2.0, 3.0, 4.0]);
        let (z, _) = conv1d_forward(&layer, &x).unwrap();
        assert_eq!(z.shape(), &[3, 1]);
        assert_eq!(z.data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn conv_valid_rejects_short_input() {
        let layer = ConvLayer::from_parts(
            Tensor::zeros(&[1, 1, 3]),
            Tensor::zeros(&[1]),
            Padding::Valid,
        )
        .unwrap();
        let x = single_channel(&[1.0, 2.0]);
        assert!(conv1d_forward(&layer, &x).is_err());
    }

    #[test]
    fn conv_same_padding_preserves_length() {
        let mut rng = RngStream::new(3);
        for klen in 1..=5 {
            let layer = ConvLayer::glorot(3, 2, klen, Padding::Same, &mut rng);
            let x = rng.uniform(-1.0, 1.0, &[9, 2]).unwrap();
            let (z, _) = conv1d_forward(&layer, &x).unwrap();
            assert_eq!(z.shape(), &[9, 3], "kernel {klen}");
        }
    }

    #[test]
    fn conv_backward_zero_grad_and_bias_identity() {
        let mut rng = RngStream::new(5);
        let layer = ConvLayer::glorot(2, 3, 3, Padding::Same, &mut rng);
        let x = rng.uniform(-1.0, 1.0, &[6, 3]).unwrap();
        let (z, cache) = conv1d_forward(&layer, &x).unwrap();

        let zero = Tensor::zeros(z.shape());
        let (gx, gw, gb) = conv1d_backward(&layer, &cache, &zero).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gw.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));

        let mut rng2 = RngStream::new(6);
        let gz = rng2.uniform(-1.0, 1.0, z.shape()).unwrap();
        let (_, _, gb) = conv1d_backward(&layer, &cache, &gz).unwrap();
        for o in 0..2 {
            let expect: f64 = (0..z.shape()[0]).map(|t| gz.at2(t, o)).sum();
            assert!((gb.data()[o] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_is_linear_in_input_with_zero_bias() {
        let mut rng = RngStream::new(8);
        let layer = ConvLayer::glorot(2, 2, 3, Padding::Same, &mut rng);
        let x1 = rng.uniform(-1.0, 1.0, &[7, 2]).unwrap();
        let x2 = rng.uniform(-1.0, 1.0, &[7, 2]).unwrap();
        let (alpha, beta) = (0.7, -1.3);
        let combo = Tensor::new(
            vec![7, 2],
            x1.data()
                .iter()
                .zip(x2.data())
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        )
        .unwrap();
        let (z1, _) = conv1d_forward(&layer, &x1).unwrap();
        let (z2, _) = conv1d_forward(&layer, &x2).unwrap();
        let (zc, _) = conv1d_forward(&layer, &combo).unwrap();
        for ((a, b), c) in z1.data().iter().zip(z2.data()).zip(zc.data()) {
            assert!((alpha * a + beta * b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_constant_and_enumeration() {
        let spec = PoolSpec { filter: 2, stride: 2 };
        let constant = single_channel(&[4.0; 6]);
        let (y, _) = maxpool_forward(&spec, &constant).unwrap();
        assert!(y.data().iter().all(|&v| v == 4.0));

        let x = single_channel(&[1.0, 3.0, 2.0, 5.0]);
        let (y, _) = maxpool_forward(&spec, &x).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
    }

    #[test]
    fn pool_output_length() {
        let spec = PoolSpec { filter: 2, stride: 2 };
        assert_eq!(spec.out_len(30).unwrap(), 15);
        assert!(spec.out_len(1).is_err());
    }

    #[test]
    fn pool_backward_routing_and_conservation() {
        let spec = PoolSpec { filter: 2, stride: 2 };
        let x = single_channel(&[1.0, 3.0, 2.0, 5.0]);
        let (y, cache) = maxpool_forward(&spec, &x).unwrap();
        let ones = Tensor::filled(y.shape(), 1.0);
        let gx = maxpool_backward(&cache, &ones).unwrap();
        assert_eq!(gx.data(), &[0.0, 1.0, 0.0, 1.0]);
        let sum_in: f64 = gx.data().iter().sum();
        let sum_out: f64 = ones.data().iter().sum();
        assert_eq!(sum_in, sum_out);
    }

    #[test]
    fn pool_ties_break_to_earliest() {
        let spec = PoolSpec { filter: 3, stride: 3 };
        let x = single_channel(&[2.0, 2.0, 1.0]);
        let (_, cache) = maxpool_forward(&spec, &x).unwrap();
        let g = Tensor::from_rows(&[vec![1.0]]).unwrap();
        let gx = maxpool_backward(&cache, &g).unwrap();
        assert_eq!(gx.data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn flatten_row_major_and_bijection() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let f = flatten(&x);
        assert_eq!(f.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unflatten(&f, 2, 2).unwrap(), x);
        assert_eq!(flatten(&Tensor::zeros(&[7, 128])).len(), 896);
    }

    #[test]
    fn dense_zero_and_identity() {
        let zero = DenseLayer {
            weights: Tensor::zeros(&[2, 3]),
            bias: Tensor::from_vec(vec![1.0, -1.0]),
        };
        let x = Tensor::from_vec(vec![5.0, 6.0, 7.0]);
        let (z, _) = dense_forward(&zero, &x).unwrap();
        assert_eq!(z.data(), zero.bias.data());

        let eye = DenseLayer {
            weights: Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            bias: Tensor::zeros(&[2]),
        };
        let x = Tensor::from_vec(vec![3.0, 4.0]);
        let (z, _) = dense_forward(&eye, &x).unwrap();
        assert_eq!(z.data(), x.data());
    }

    #[test]
    fn relu_backward_masking() {
        let (_, cache) = relu_forward(&Tensor::from_vec(vec![-1.0, 2.0]));
        let g = relu_backward(&cache, &Tensor::from_vec(vec![5.0, 5.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 5.0]);

        let (_, cache) = relu_forward(&Tensor::from_vec(vec![0.0]));
        let g = relu_backward(&cache, &Tensor::from_vec(vec![7.0])).unwrap();
        assert_eq!(g.data(), &[0.0]);
    }

    // Central finite differences for every layer's gradients, against a scalar
    // loss L = sum(w_out .* output). Independent of the analytic path.
    fn fd_check(analytic: &[f64], numeric: &[f64], tol: f64, what: &str) {
        assert_eq!(analytic.len(), numeric.len());
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let denom = a.abs().max(n.abs());
            if denom < 1e-7 {
                assert!((a - n).abs() < 1e-6, "{what}[{i}]: {a} vs {n}");
            } else {
                assert!(
                    (a - n).abs() / denom < tol,
                    "{what}[{i}]: analytic {a} vs numeric {n}"
                );
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = RngStream::new(13);
        let layer = ConvLayer::glorot(2, 2, 3, Padding::Same, &mut rng);
        let x = rng.uniform(-1.0, 1.0, &[5, 2]).unwrap();
        let weight_loss = rng.uniform(-1.0, 1.0, &[5, 2]).unwrap();

        let loss = |layer: &ConvLayer, x: &Tensor| -> f64 {
            let (z, _) = conv1d_forward(layer, x).unwrap();
            z.data()
                .iter()
                .zip(weight_loss.data())
                .map(|(a, b)| a * b)
                .sum()
        };

        let (_, cache) = conv1d_forward(&layer, &x).unwrap();
        let (gx, gw, gb) = conv1d_backward(&layer, &cache, &weight_loss).unwrap();

        let h = 1e-5;
        let mut num_w = Vec::new();
        for i in 0..layer.weights.len() {
            let mut lp = layer.clone();
            lp.weights.data_mut()[i] += h;
            let mut lm = layer.clone();
            lm.weights.data_mut()[i] -= h;
            num_w.push((loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h));
        }
        fd_check(gw.data(), &num_w, 1e-4, "grad_w");

        let mut num_b = Vec::new();
        for i in 0..layer.bias.len() {
            let mut lp = layer.clone();
            lp.bias.data_mut()[i] += h;
            let mut lm = layer.clone();
            lm.bias.data_mut()[i] -= h;
            num_b.push((loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h));
        }
        fd_check(gb.data(), &num_b, 1e-4, "grad_b");

        let mut num_x = Vec::new();
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            num_x.push((loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h));
        }
        fd_check(gx.data(), &num_x, 1e-4, "grad_x");
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = RngStream::new(17);
        let layer = DenseLayer::glorot(3, 4, &mut rng);
        let x = rng.uniform(-1.0, 1.0, &[4]).unwrap();
        let lw = rng.uniform(-1.0, 1.0, &[3]).unwrap();

        let loss = |layer: &DenseLayer, x: &Tensor| -> f64 {
            let (z, _) = dense_forward(layer, x).unwrap();
            z.data().iter().zip(lw.data()).map(|(a, b)| a * b).sum()
        };

        let (_, cache) = dense_forward(&layer, &x).unwrap();
        let (gx, gw, gb) = dense_backward(&layer, &cache, &lw).unwrap();

        let h = 1e-5;
        let mut num = Vec::new();
        for i in 0..layer.weights.len() {
            let mut lp = layer.clone();
            lp.weights.data_mut()[i] += h;
            let mut lm = layer.clone();
            lm.weights.data_mut()[i] -= h;
            num.push((loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h));
        }
        fd_check(gw.data(), &num, 1e-4, "dense grad_w");

        num.clear();
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            num.push((loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h));
        }
        fd_check(gx.data(), &num, 1e-4, "dense grad_x");
        assert_eq!(gb.data(), lw.data());
    }

    #[test]
    fn pool_gradient_matches_finite_differences_away_from_ties() {
        let spec = PoolSpec { filter: 2, stride: 2 };
        let x = single_channel(&[0.1, 0.9, -0.4, 0.6, 0.3, -0.2]);
        assert!(maxpool_tie_margin(&spec, &x).unwrap() > 1e-3);
        let (y, cache) = maxpool_forward(&spec, &x).unwrap();
        let lw = Tensor::filled(y.shape(), 1.0);
        let gx = maxpool_backward(&cache, &lw).unwrap();

        let loss = |x: &Tensor| -> f64 {
            let (y, _) = maxpool_forward(&spec, x).unwrap();
            y.data().iter().sum()
        };
        let h = 1e-5;
        let mut num = Vec::new();
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            num.push((loss(&xp) - loss(&xm)) / (2.0 * h));
        }
        fd_check(gx.data(), &num, 1e-4, "pool grad_x");
    }

    #[test]
    fn relu_gradient_matches_finite_differences_away_from_kink() {
        let x = Tensor::from_vec(vec![-0.8, 0.5, 1.2, -0.3]);
        let (_, cache) = relu_forward(&x);
        assert!(relu_kink_margin(&cache) > 1e-3);
        let lw = Tensor::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let g = relu_backward(&cache, &lw).unwrap();

        let loss = |x: &Tensor| -> f64 {
            crate::tensor::relu(x)
                .data()
                .iter()
                .zip(lw.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-5;
        let mut num = Vec::new();
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            num.push((loss(&xp) - loss(&xm)) / (2.0 * h));
        }
        fd_check(g.data(), &num, 1e-4, "relu grad");
    }
}
