//! Gated recurrent unit cell, multi-layer bidirectional sequence processing,
//! and full backpropagation through time.
//!
//! Cell recurrence, per timestep t:
//!   r = sigmoid(W_r x + U_r h_prev + b_r)
//!   z = sigmoid(W_z x + U_z h_prev + b_z)
//!   candidate = tanh(W x + U (r .* h_prev) + b)
//!   h = (1 - z) .* h_prev + z .* candidate

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{matvec, matvec_t_accum, outer_accum, sigmoid_scalar, tanh_scalar, Tensor};

/// The nine parameter tensors of one GRU cell. Doubles as the gradient
/// accumulator for the same cell, since shapes match one to one.
#[derive(Debug, Clone)]
pub struct GruCellParams {
    pub w_reset: Tensor,
    pub w_update: Tensor,
    pub w_cand: Tensor,
    pub u_reset: Tensor,
    pub u_update: Tensor,
    pub u_cand: Tensor,
    pub b_reset: Tensor,
    pub b_update: Tensor,
    pub b_cand: Tensor,
}

impl GruCellParams {
    pub fn glorot(input_dim: usize, hidden_dim: usize, rng: &mut RngStream) -> Self {
        let w = |rng: &mut RngStream| rng.glorot(input_dim, hidden_dim, &[hidden_dim, input_dim]);
        let u = |rng: &mut RngStream| rng.glorot(hidden_dim, hidden_dim, &[hidden_dim, hidden_dim]);
        GruCellParams {
            w_reset: w(rng),
            w_update: w(rng),
            w_cand: w(rng),
            u_reset: u(rng),
            u_update: u(rng),
            u_cand: u(rng),
            b_reset: Tensor::zeros(&[hidden_dim]),
            b_update: Tensor::zeros(&[hidden_dim]),
            b_cand: Tensor::zeros(&[hidden_dim]),
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GruCellParams {
            w_reset: Tensor::zeros(&[hidden_dim, input_dim]),
            w_update: Tensor::zeros(&[hidden_dim, input_dim]),
            w_cand: Tensor::zeros(&[hidden_dim, input_dim]),
            u_reset: Tensor::zeros(&[hidden_dim, hidden_dim]),
            u_update: Tensor::zeros(&[hidden_dim, hidden_dim]),
            u_cand: Tensor::zeros(&[hidden_dim, hidden_dim]),
            b_reset: Tensor::zeros(&[hidden_dim]),
            b_update: Tensor::zeros(&[hidden_dim]),
            b_cand: Tensor::zeros(&[hidden_dim]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_reset.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_reset.shape()[0]
    }

    /// Gradient-accumulator view: tensor name paired with a reference.
    pub fn tensors(&self) -> [(&'static str, &Tensor); 9] {
        [
            ("w_reset", &self.w_reset),
            ("w_update", &self.w_update),
            ("w_cand", &self.w_cand),
            ("u_reset", &self.u_reset),
            ("u_update", &self.u_update),
            ("u_cand", &self.u_cand),
            ("b_reset", &self.b_reset),
            ("b_update", &self.b_update),
            ("b_cand", &self.b_cand),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 9] {
        [
            ("w_reset", &mut self.w_reset),
            ("w_update", &mut self.w_update),
            ("w_cand", &mut self.w_cand),
            ("u_reset", &mut self.u_reset),
            ("u_update", &mut self.u_update),
            ("u_cand", &mut self.u_cand),
            ("b_reset", &mut self.b_reset),
            ("b_update", &mut self.b_update),
            ("b_cand", &mut self.b_cand),
        ]
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &GruCellParams, scale: f64) {
        for ((_, dst), (_, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += s * scale;
            }
        }
    }
}

/// Per-timestep intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct GruCellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    reset: Vec<f64>,
    update: Vec<f64>,
    candidate: Vec<f64>,
}

/// One step of the recurrence. Returns the new hidden state and the cache.
pub fn gru_cell_forward(
    params: &GruCellParams,
    x_t: &[f64],
    h_prev: &[f64],
) -> Result<(Vec<f64>, GruCellCache)> {
    let (input_dim, hidden_dim) = (params.input_dim(), params.hidden_dim());
    if x_t.len() != input_dim || h_prev.len() != hidden_dim {
        return Err(Error::ShapeMismatch {
            context: "gru_cell_forward".into(),
            lhs: vec![x_t.len(), h_prev.len()],
            rhs: vec![input_dim, hidden_dim],
        });
    }

    let gate = |w: &Tensor, u: &Tensor, b: &Tensor| -> Vec<f64> {
        let mut a = matvec(w, x_t);
        let uh = matvec(u, h_prev);
        for ((av, uv), bv) in a.iter_mut().zip(uh).zip(b.data()) {
            *av = sigmoid_scalar(*av + uv + bv);
        }
        a
    };
    let reset = gate(&params.w_reset, &params.u_reset, &params.b_reset);
    let update = gate(&params.w_update, &params.u_update, &params.b_update);

    let gated_prev: Vec<f64> = reset.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let mut candidate = matvec(&params.w_cand, x_t);
    let ugp = matvec(&params.u_cand, &gated_prev);
    for ((cv, uv), bv) in candidate.iter_mut().zip(ugp).zip(params.b_cand.data()) {
        *cv = tanh_scalar(*cv + uv + bv);
    }

    let h: Vec<f64> = update
        .iter()
        .zip(h_prev)
        .zip(&candidate)
        .map(|((z, hp), c)| (1.0 - z) * hp + z * c)
        .collect();

    Ok((
        h,
        GruCellCache {
            x: x_t.to_vec(),
            h_prev: h_prev.to_vec(),
            reset,
            update,
            candidate,
        },
    ))
}

/// One step of BPTT. Accumulates parameter gradients into `grads` and returns
/// `(grad_x, grad_h_prev)`.
pub fn gru_cell_backward(
    params: &GruCellParams,
    cache: &GruCellCache,
    grad_h: &[f64],
    grads: &mut GruCellParams,
) -> (Vec<f64>, Vec<f64>) {
    let hidden = params.hidden_dim();
    debug_assert_eq!(grad_h.len(), hidden);

    let (r, z, c, hp) = (&cache.reset, &cache.update, &cache.candidate, &cache.h_prev);

    // h = (1-z).*hp + z.*c
    let mut grad_hp: Vec<f64> = grad_h.iter().zip(z).map(|(g, z)| g * (1.0 - z)).collect();
    let d_cand: Vec<f64> = grad_h.iter().zip(z).map(|(g, z)| g * z).collect();
    let d_update: Vec<f64> = grad_h
        .iter()
        .zip(c.iter().zip(hp))
        .map(|(g, (c, hp))| g * (c - hp))
        .collect();

    // candidate = tanh(a_c)
    let da_cand: Vec<f64> = d_cand.iter().zip(c).map(|(d, c)| d * (1.0 - c * c)).collect();
    let gated_prev: Vec<f64> = r.iter().zip(hp).map(|(r, h)| r * h).collect();
    outer_accum(&mut grads.w_cand, &da_cand, &cache.x);
    outer_accum(&mut grads.u_cand, &da_cand, &gated_prev);
    for (b, d) in grads.b_cand.data_mut().iter_mut().zip(&da_cand) {
        *b += d;
    }

    // through U (r .* hp)
    let mut d_gated = vec![0.0; hidden];
    matvec_t_accum(&params.u_cand, &da_cand, &mut d_gated);
    let d_reset: Vec<f64> = d_gated.iter().zip(hp).map(|(d, h)| d * h).collect();
    for ((g, d), rv) in grad_hp.iter_mut().zip(&d_gated).zip(r) {
        *g += d * rv;
    }

    // sigmoid gates
    let da_reset: Vec<f64> = d_reset.iter().zip(r).map(|(d, r)| d * r * (1.0 - r)).collect();
    let da_update: Vec<f64> = d_update.iter().zip(z).map(|(d, z)| d * z * (1.0 - z)).collect();

    outer_accum(&mut grads.w_reset, &da_reset, &cache.x);
    outer_accum(&mut grads.u_reset, &da_reset, hp);
    for (b, d) in grads.b_reset.data_mut().iter_mut().zip(&da_reset) {
        *b += d;
    }
    outer_accum(&mut grads.w_update, &da_update, &cache.x);
    outer_accum(&mut grads.u_update, &da_update, hp);
    for (b, d) in grads.b_update.data_mut().iter_mut().zip(&da_update) {
        *b += d;
    }

    matvec_t_accum(&params.u_reset, &da_reset, &mut grad_hp);
    matvec_t_accum(&params.u_update, &da_update, &mut grad_hp);

    let mut grad_x = vec![0.0; params.input_dim()];
    matvec_t_accum(&params.w_reset, &da_reset, &mut grad_x);
    matvec_t_accum(&params.w_update, &da_update, &mut grad_x);
    matvec_t_accum(&params.w_cand, &da_cand, &mut grad_x);

    (grad_x, grad_hp)
}

/// Chained cell application over a `[T x input]` sequence. `h0` defaults to
/// the zero vector.
pub fn gru_sequence_forward(
    params: &GruCellParams,
    xs: &Tensor,
    h0: Option<&[f64]>,
) -> Result<(Tensor, Vec<GruCellCache>)> {
    if xs.rank() != 2 || xs.shape()[0] == 0 {
        return Err(Error::InvalidArgument(
            "gru_sequence_forward needs a nonempty [T x input] sequence".into(),
        ));
    }
    let (t_len, hidden) = (xs.shape()[0], params.hidden_dim());
    let mut h: Vec<f64> = match h0 {
        Some(h0) => h0.to_vec(),
        None => vec![0.0; hidden],
    };
    let mut hs = Tensor::zeros(&[t_len, hidden]);
    let mut caches = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (h_new, cache) = gru_cell_forward(params, xs.row(t), &h)?;
        hs.data_mut()[t * hidden..(t + 1) * hidden].copy_from_slice(&h_new);
        caches.push(cache);
        h = h_new;
    }
    Ok((hs, caches))
}

/// BPTT over a whole sequence. `grad_hs` is `[T x hidden]`; returns the input
/// gradient and the accumulated parameter gradients.
pub fn gru_sequence_backward(
    params: &GruCellParams,
    caches: &[GruCellCache],
    grad_hs: &Tensor,
) -> Result<(Tensor, GruCellParams)> {
    let t_len = caches.len();
    let hidden = params.hidden_dim();
    if grad_hs.rank() != 2 || grad_hs.shape() != [t_len, hidden] {
        return Err(Error::ShapeMismatch {
            context: "gru_sequence_backward grad".into(),
            lhs: grad_hs.shape().to_vec(),
            rhs: vec![t_len, hidden],
        });
    }
    let mut grads = GruCellParams::zeros(params.input_dim(), params.hidden_dim());
    let mut grad_xs = Tensor::zeros(&[t_len, params.input_dim()]);
    let mut carry = vec![0.0; hidden];
    for t in (0..t_len).rev() {
        let mut gh = grad_hs.row(t).to_vec();
        for (g, c) in gh.iter_mut().zip(&carry) {
            *g += c;
        }
        let (gx, ghp) = gru_cell_backward(params, &caches[t], &gh, &mut grads);
        let input_dim = params.input_dim();
        grad_xs.data_mut()[t * input_dim..(t + 1) * input_dim].copy_from_slice(&gx);
        carry = ghp;
    }
    Ok((grad_xs, grads))
}

/// One bidirectional layer: independent forward and backward cells of equal
/// dimensions. `backward` is absent in the unidirectional ablation.
#[derive(Debug, Clone)]
pub struct GruLayer {
    pub forward: GruCellParams,
    pub backward: Option<GruCellParams>,
}

impl GruLayer {
    pub fn output_dim(&self) -> usize {
        let h = self.forward.hidden_dim();
        if self.backward.is_some() {
            2 * h
        } else {
            h
        }
    }
}

/// Stacked (bi)directional GRU layers merged by concatenation per timestep.
#[derive(Debug, Clone)]
pub struct BiGruStack {
    pub layers: Vec<GruLayer>,
}

impl BiGruStack {
    /// Build a stack where layer 0 consumes `input_dim` features and each
    /// later layer consumes the previous layer's merged output.
    pub fn glorot(
        input_dim: usize,
        hidden_dim: usize,
        num_layers: usize,
        bidirectional: bool,
        rng: &RngStream,
    ) -> Self {
        let mut layers = Vec::with_capacity(num_layers);
        let mut in_dim = input_dim;
        for l in 0..num_layers {
            let mut fw_rng = rng.child(&format!("gru/{l}/fw"));
            let forward = GruCellParams::glorot(in_dim, hidden_dim, &mut fw_rng);
            let backward = bidirectional.then(|| {
                let mut bw_rng = rng.child(&format!("gru/{l}/bw"));
                GruCellParams::glorot(in_dim, hidden_dim, &mut bw_rng)
            });
            let layer = GruLayer { forward, backward };
            in_dim = layer.output_dim();
            layers.push(layer);
        }
        BiGruStack { layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim())
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.forward.input_dim())
    }

    /// Zero-valued gradient accumulator with this stack's geometry.
    pub fn zeros_like(&self) -> BiGruStack {
        BiGruStack {
            layers: self
                .layers
                .iter()
                .map(|l| GruLayer {
                    forward: GruCellParams::zeros(
                        l.forward.input_dim(),
                        l.forward.hidden_dim(),
                    ),
                    backward: l.backward.as_ref().map(|b| {
                        GruCellParams::zeros(b.input_dim(), b.hidden_dim())
                    }),
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &BiGruStack, scale: f64) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.forward.add_scaled(&src.forward, scale);
            if let (Some(d), Some(s)) = (dst.backward.as_mut(), src.backward.as_ref()) {
                d.add_scaled(s, scale);
            }
        }
    }
}

fn reverse_rows(x: &Tensor) -> Tensor {
    let (t_len, dim) = (x.shape()[0], x.shape()[1]);
    let mut out = Tensor::zeros(&[t_len, dim]);
    for t in 0..t_len {
        out.data_mut()[t * dim..(t + 1) * dim].copy_from_slice(x.row(t_len - 1 - t));
    }
    out
}

/// Per-layer caches for the stack backward pass.
#[derive(Debug)]
pub struct BiGruCache {
    layers: Vec<LayerCache>,
}

#[derive(Debug)]
struct LayerCache {
    fw: Vec<GruCellCache>,
    bw: Option<Vec<GruCellCache>>,
}

/// Runs the whole stack: forward direction over `xs`, backward direction over
/// reversed `xs` (re-reversed on output), concatenated per timestep.
pub fn bigru_forward(stack: &BiGruStack, xs: &Tensor) -> Result<(Tensor, BiGruCache)> {
    if xs.rank() != 2 || xs.shape()[0] == 0 {
        return Err(Error::InvalidArgument(
            "bigru_forward needs a nonempty [T x input] sequence".into(),
        ));
    }
    let mut current = xs.clone();
    let mut layer_caches = Vec::with_capacity(stack.layers.len());
    for layer in &stack.layers {
        let t_len = current.shape()[0];
        let hidden = layer.forward.hidden_dim();
        let (fw_out, fw_cache) = gru_sequence_forward(&layer.forward, &current, None)?;
        match &layer.backward {
            Some(bw_params) => {
                let reversed = reverse_rows(&current);
                let (bw_out_rev, bw_cache) = gru_sequence_forward(bw_params, &reversed, None)?;
                let bw_out = reverse_rows(&bw_out_rev);
                let mut merged = Tensor::zeros(&[t_len, 2 * hidden]);
                for t in 0..t_len {
                    merged.data_mut()[t * 2 * hidden..t * 2 * hidden + hidden]
                        .copy_from_slice(fw_out.row(t));
                    merged.data_mut()[t * 2 * hidden + hidden..(t + 1) * 2 * hidden]
                        .copy_from_slice(bw_out.row(t));
                }
                layer_caches.push(LayerCache {
                    fw: fw_cache,
                    bw: Some(bw_cache),
                });
                current = merged;
            }
            None => {
                layer_caches.push(LayerCache {
                    fw: fw_cache,
                    bw: None,
                });
                current = fw_out;
            }
        }
    }
    Ok((
        current,
        BiGruCache {
            layers: layer_caches,
        },
    ))
}

/// BPTT through the whole stack. Returns the gradient on `xs` and a gradient
/// stack mirroring the parameter stack.
pub fn bigru_backward(
    stack: &BiGruStack,
    cache: &BiGruCache,
    grad_ys: &Tensor,
) -> Result<(Tensor, BiGruStack)> {
    let mut grad_stack = stack.zeros_like();
    let mut grad_current = grad_ys.clone();
    for (idx, layer) in stack.layers.iter().enumerate().rev() {
        let lc = &cache.layers[idx];
        let t_len = grad_current.shape()[0];
        let hidden = layer.forward.hidden_dim();
        let expected = layer.output_dim();
        if grad_current.shape() != [t_len, expected] {
            return Err(Error::ShapeMismatch {
                context: "bigru_backward grad".into(),
                lhs: grad_current.shape().to_vec(),
                rhs: vec![t_len, expected],
            });
        }
        match (&layer.backward, &lc.bw) {
            (Some(bw_params), Some(bw_cache)) => {
                let mut grad_fw = Tensor::zeros(&[t_len, hidden]);
                let mut grad_bw = Tensor::zeros(&[t_len, hidden]);
                for t in 0..t_len {
                    let row = grad_current.row(t);
                    grad_fw.data_mut()[t * hidden..(t + 1) * hidden]
                        .copy_from_slice(&row[..hidden]);
                    grad_bw.data_mut()[t * hidden..(t + 1) * hidden]
                        .copy_from_slice(&row[hidden..]);
                }
                let (gx_fw, g_fw) =
                    gru_sequence_backward(&layer.forward, &lc.fw, &grad_fw)?;
                let grad_bw_rev = reverse_rows(&grad_bw);
                let (gx_bw_rev, g_bw) =
                    gru_sequence_backward(bw_params, bw_cache, &grad_bw_rev)?;
                let gx_bw = reverse_rows(&gx_bw_rev);
                let mut gx = gx_fw;
                for (a, b) in gx.data_mut().iter_mut().zip(gx_bw.data()) {
                    *a += b;
                }
                grad_stack.layers[idx].forward = g_fw;
                grad_stack.layers[idx].backward = Some(g_bw);
                grad_current = gx;
            }
            (None, None) => {
                let (gx, g_fw) =
                    gru_sequence_backward(&layer.forward, &lc.fw, &grad_current)?;
                grad_stack.layers[idx].forward = g_fw;
                grad_current = gx;
            }
            _ => unreachable!("cache direction always matches layer direction"),
        }
    }
    Ok((grad_current, grad_stack))
}

/// Output activation selector for the affine head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadActivation {
    /// Regression: y = Vh + c.
    Identity,
    /// y = softmax(Vh + c).
    Softmax,
}

/// Affine output map with a selectable activation.
#[derive(Debug, Clone)]
pub struct OutputHead {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: HeadActivation,
}

pub fn output_head_forward(head: &OutputHead, features: &Tensor) -> Result<Tensor> {
    if features.rank() != 1 || features.len() != head.weights.shape()[1] {
        return Err(Error::ShapeMismatch {
            context: "output head".into(),
            lhs: features.shape().to_vec(),
            rhs: head.weights.shape().to_vec(),
        });
    }
    let z = matvec(&head.weights, features.data());
    let affine = Tensor::from_vec(
        z.into_iter()
            .zip(head.bias.data())
            .map(|(v, b)| v + b)
            .collect(),
    );
    match head.activation {
        HeadActivation::Identity => Ok(affine),
        HeadActivation::Softmax => crate::tensor::softmax(&affine),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_halve_previous_state() {
        let params = GruCellParams::zeros(2, 3);
        let v = vec![2.0, -4.0, 6.0];
        let (h, cache) = gru_cell_forward(&params, &[1.0, 1.0], &v).unwrap();
        assert!(cache.reset.iter().all(|&r| r == 0.5));
        assert!(cache.update.iter().all(|&z| z == 0.5));
        assert!(cache.candidate.iter().all(|&c| c == 0.0));
        assert_eq!(h, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn zero_previous_state_gives_update_times_candidate() {
        let mut rng = RngStream::new(2);
        let params = GruCellParams::glorot(3, 4, &mut rng);
        let x = vec![0.4, -0.2, 0.9];
        let (h, cache) = gru_cell_forward(&params, &x, &[0.0; 4]).unwrap();
        for ((h, z), c) in h.iter().zip(&cache.update).zip(&cache.candidate) {
            assert!((h - z * c).abs() < 1e-15);
        }
    }

    #[test]
    fn gates_stay_in_open_unit_interval() {
        let mut rng = RngStream::new(21);
        for _ in 0..20 {
            let params = GruCellParams::glorot(3, 5, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.uniform_scalar(-10.0, 10.0)).collect();
            let h: Vec<f64> = (0..5).map(|_| rng.uniform_scalar(-3.0, 3.0)).collect();
            let (h_new, cache) = gru_cell_forward(&params, &x, &h).unwrap();
            assert!(cache.reset.iter().all(|&r| r > 0.0 && r < 1.0));
            assert!(cache.update.iter().all(|&z| z > 0.0 && z < 1.0));
            assert!(cache.candidate.iter().all(|&c| c > -1.0 && c < 1.0));
            // Convex combination: h between h_prev and candidate, componentwise.
            for ((hn, hp), c) in h_new.iter().zip(&h).zip(&cache.candidate) {
                let (lo, hi) = if hp <= c { (hp, c) } else { (c, hp) };
                assert!(*hn >= *lo - 1e-12 && *hn <= *hi + 1e-12);
            }
        }
    }

    #[test]
    fn sequence_of_one_reduces_to_cell() {
        let mut rng = RngStream::new(4);
        let params = GruCellParams::glorot(2, 3, &mut rng);
        let xs = rng.uniform(-1.0, 1.0, &[1, 2]).unwrap();
        let (hs, _) = gru_sequence_forward(&params, &xs, None).unwrap();
        let (h, _) = gru_cell_forward(&params, xs.row(0), &[0.0; 3]).unwrap();
        assert_eq!(hs.row(0), &h[..]);
    }

    #[test]
    fn zero_params_zero_state_stay_zero() {
        let params = GruCellParams::zeros(2, 3);
        let xs = Tensor::filled(&[4, 2], 0.7);
        let (hs, _) = gru_sequence_forward(&params, &xs, None).unwrap();
        assert!(hs.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sequence_is_causal() {
        let mut rng = RngStream::new(30);
        let params = GruCellParams::glorot(2, 3, &mut rng);
        let xs = rng.uniform(-1.0, 1.0, &[5, 2]).unwrap();
        let (hs, _) = gru_sequence_forward(&params, &xs, None).unwrap();
        let mut perturbed = xs.clone();
        *perturbed.at2_mut(3, 1) += 10.0;
        let (hs2, _) = gru_sequence_forward(&params, &perturbed, None).unwrap();
        for t in 0..3 {
            assert_eq!(hs.row(t), hs2.row(t), "hs[{t}] must ignore xs[3]");
        }
        assert_ne!(hs.row(3), hs2.row(3));
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let params = GruCellParams::zeros(2, 3);
        assert!(gru_sequence_forward(&params, &Tensor::zeros(&[1, 2]), None).is_ok());
        assert!(gru_sequence_forward(&params, &Tensor::zeros(&[0, 2]), None).is_err());
    }

    #[test]
    fn bigru_output_width_and_dead_direction() {
        let mut rng = RngStream::new(7);
        let mut stack = BiGruStack::glorot(3, 4, 1, true, &rng);
        let xs = rng.uniform(-1.0, 1.0, &[6, 3]).unwrap();
        let (ys, _) = bigru_forward(&stack, &xs).unwrap();
        assert_eq!(ys.shape(), &[6, 8]);

        // Zero the backward cell: the second half of every timestep dies.
        stack.layers[0].backward = Some(GruCellParams::zeros(3, 4));
        let (ys, _) = bigru_forward(&stack, &xs).unwrap();
        for t in 0..6 {
            assert!(ys.row(t)[4..].iter().all(|&v| v == 0.0));
            assert!(ys.row(t)[..4].iter().any(|&v| v != 0.0));
        }
    }

    #[test]
    fn bigru_reversal_symmetry() {
        let mut rng = RngStream::new(9);
        let stack = BiGruStack::glorot(2, 3, 1, true, &rng);
        let xs = rng.uniform(-1.0, 1.0, &[5, 2]).unwrap();
        let (ys, _) = bigru_forward(&stack, &xs).unwrap();

        // Swap the directions' parameters and feed the reversed sequence:
        // the output must be the reverse of the original with halves swapped.
        let swapped = BiGruStack {
            layers: vec![GruLayer {
                forward: stack.layers[0].backward.clone().unwrap(),
                backward: Some(stack.layers[0].forward.clone()),
            }],
        };
        let (ys_rev, _) = bigru_forward(&swapped, &reverse_rows(&xs)).unwrap();
        let hidden = 3;
        for t in 0..5 {
            let orig = ys.row(t);
            let mirrored = ys_rev.row(4 - t);
            for k in 0..hidden {
                assert!((orig[k] - mirrored[hidden + k]).abs() < 1e-12);
                assert!((orig[hidden + k] - mirrored[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn head_variants() {
        let head = OutputHead {
            weights: Tensor::zeros(&[2, 3]),
            bias: Tensor::from_vec(vec![0.5, -0.5]),
            activation: HeadActivation::Identity,
        };
        let f = Tensor::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(output_head_forward(&head, &f).unwrap().data(), &[0.5, -0.5]);

        let eye = OutputHead {
            weights: Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            bias: Tensor::zeros(&[2]),
            activation: HeadActivation::Identity,
        };
        let f = Tensor::from_vec(vec![4.0, -2.0]);
        assert_eq!(output_head_forward(&eye, &f).unwrap().data(), f.data());

        let soft = OutputHead {
            weights: Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            bias: Tensor::zeros(&[2]),
            activation: HeadActivation::Softmax,
        };
        let y = output_head_forward(&soft, &f).unwrap();
        assert!((y.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_zero_grad_gives_zero() {
        let mut rng = RngStream::new(14);
        let stack = BiGruStack::glorot(2, 3, 2, true, &rng);
        let xs = rng.uniform(-1.0, 1.0, &[4, 2]).unwrap();
        let (ys, cache) = bigru_forward(&stack, &xs).unwrap();
        let (gx, gs) = bigru_backward(&stack, &cache, &Tensor::zeros(ys.shape())).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        for layer in &gs.layers {
            for (_, t) in layer.forward.tensors() {
                assert!(t.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn single_step_bptt_matches_cell_gradients() {
        let mut rng = RngStream::new(15);
        let params = GruCellParams::glorot(2, 3, &mut rng);
        let xs = rng.uniform(-1.0, 1.0, &[1, 2]).unwrap();
        let grad = rng.uniform(-1.0, 1.0, &[1, 3]).unwrap();

        let (_, caches) = gru_sequence_forward(&params, &xs, None).unwrap();
        let (gx_seq, gs_seq) = gru_sequence_backward(&params, &caches, &grad).unwrap();

        let (_, cell_cache) = gru_cell_forward(&params, xs.row(0), &[0.0; 3]).unwrap();
        let mut gs_cell = GruCellParams::zeros(2, 3);
        let (gx_cell, _) =
            gru_cell_backward(&params, &cell_cache, grad.row(0), &mut gs_cell);

        assert_eq!(gx_seq.row(0), &gx_cell[..]);
        for ((_, a), (_, b)) in gs_seq.tensors().into_iter().zip(gs_cell.tensors()) {
            assert_eq!(a.data(), b.data());
        }
    }

    // Finite-difference check of BPTT over all nine tensors plus the input,
    // on a (input=3, hidden=4, T=5) instance.
    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = RngStream::new(99);
        let stack = BiGruStack::glorot(3, 4, 1, true, &rng);
        let xs = rng.uniform(-1.0, 1.0, &[5, 3]).unwrap();
        let loss_weights = rng.uniform(-1.0, 1.0, &[5, 8]).unwrap();

        let loss = |stack: &BiGruStack, xs: &Tensor| -> f64 {
            let (ys, _) = bigru_forward(stack, xs).unwrap();
            ys.data()
                .iter()
                .zip(loss_weights.data())
                .map(|(a, b)| a * b)
                .sum()
        };

        let (_, cache) = bigru_forward(&stack, &xs).unwrap();
        let (gx, gs) = bigru_backward(&stack, &cache, &loss_weights).unwrap();

        let h = 1e-5;
        let tol = 1e-4;
        let check = |analytic: f64, numeric: f64, what: &str| {
            let denom = analytic.abs().max(numeric.abs());
            if denom < 1e-7 {
                assert!((analytic - numeric).abs() < 1e-6, "{what}");
            } else {
                assert!(
                    (analytic - numeric).abs() / denom < tol,
                    "{what}: analytic {analytic} vs numeric {numeric}"
                );
            }
        };

        for dir in 0..2 {
            for tensor_idx in 0..9 {
                let n = {
                    let layer = &stack.layers[0];
                    let cell = if dir == 0 {
                        &layer.forward
                    } else {
                        layer.backward.as_ref().unwrap()
                    };
                    cell.tensors()[tensor_idx].1.len()
                };
                for i in 0..n {
                    let perturb = |delta: f64| -> f64 {
                        let mut s = stack.clone();
                        {
                            let layer = &mut s.layers[0];
                            let cell = if dir == 0 {
                                &mut layer.forward
                            } else {
                                layer.backward.as_mut().unwrap()
                            };
                            cell.tensors_mut()[tensor_idx].1.data_mut()[i] += delta;
                        }
                        loss(&s, &xs)
                    };
                    let numeric = (perturb(h) - perturb(-h)) / (2.0 * h);
                    let analytic = {
                        let layer = &gs.layers[0];
                        let cell = if dir == 0 {
                            &layer.forward
                        } else {
                            layer.backward.as_ref().unwrap()
                        };
                        cell.tensors()[tensor_idx].1.data()[i]
                    };
                    check(
                        analytic,
                        numeric,
                        &format!("dir {dir} tensor {tensor_idx} [{i}]"),
                    );
                }
            }
        }

        for i in 0..xs.len() {
            let mut xp = xs.clone();
            xp.data_mut()[i] += h;
            let mut xm = xs.clone();
            xm.data_mut()[i] -= h;
            let numeric = (loss(&stack, &xp) - loss(&stack, &xm)) / (2.0 * h);
            check(gx.data()[i], numeric, &format!("input [{i}]"));
        }
    }

    #[test]
    fn bounded_state_over_random_rollouts() {
        let mut rng = RngStream::new(77);
        let params = GruCellParams::glorot(2, 4, &mut rng);
        let xs = rng.uniform(-5.0, 5.0, &[50, 2]).unwrap();
        let (hs, _) = gru_sequence_forward(&params, &xs, None).unwrap();
        // |h_t| <= max(|h_0|_inf, 1) = 1 since h_0 = 0 and candidates are in (-1,1).
        assert!(hs.data().iter().all(|&v| v.abs() <= 1.0));
    }

    #[test]
    fn deterministic_forward() {
        let mut rng = RngStream::new(55);
        let stack = BiGruStack::glorot(2, 3, 2, true, &rng);
        let xs = rng.uniform(-1.0, 1.0, &[6, 2]).unwrap();
        let (a, _) = bigru_forward(&stack, &xs).unwrap();
        let (b, _) = bigru_forward(&stack, &xs).unwrap();
        assert_eq!(a, b);
    }
}
