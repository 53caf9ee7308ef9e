//! Network assembly and training: a three-stage 1-D conv stack feeding a
//! stacked (bi)directional GRU, flattened into one dense output layer that
//! emits the whole forecast horizon at once. Training is plain SGD on MSE
//! with validation-monitored early stopping.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bigru::{bigru_backward, bigru_forward, BiGruCache, BiGruStack};
use crate::cnn::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, flatten, maxpool_backward,
    maxpool_forward, relu_backward, relu_forward, unflatten, ConvCache, ConvLayer, DenseCache,
    DenseLayer, Padding, PoolCache, PoolSpec, ReluCache,
};
use crate::error::{Error, Result};
use crate::preprocess::{MinMaxScaler, TimeSeriesFrame, WindowedDataset};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Fixed chunk size for deterministic parallel gradient reduction: chunks are
/// summed internally and then folded in index order, so results never depend
/// on thread scheduling.
const REDUCE_CHUNK: usize = 8;

/// Training and architecture configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub conv_channels: (usize, usize, usize),
    pub kernel_len: usize,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub window_len: usize,
    pub horizon: usize,
    pub bidirectional: bool,
    pub patience: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.001,
            batch_size: 64,
            max_epochs: 100,
            conv_channels: (16, 32, 64),
            kernel_len: 3,
            gru_hidden: 64,
            gru_layers: 2,
            window_len: 30,
            horizon: 7,
            bidirectional: true,
            patience: 10,
            seed: 42,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("kernel_len", self.kernel_len),
            ("gru_hidden", self.gru_hidden),
            ("gru_layers", self.gru_layers),
            ("window_len", self.window_len),
            ("horizon", self.horizon),
            ("patience", self.patience),
            ("conv_channels.0", self.conv_channels.0),
            ("conv_channels.1", self.conv_channels.1),
            ("conv_channels.2", self.conv_channels.2),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.kernel_len > self.window_len {
            return Err(Error::Config(format!(
                "kernel_len {} exceeds window_len {}",
                self.kernel_len, self.window_len
            )));
        }
        Ok(())
    }
}

/// Full network parameterization plus the hyperparameters that shaped it.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub conv1: ConvLayer,
    pub conv2: ConvLayer,
    pub conv3: ConvLayer,
    pub pool: PoolSpec,
    pub bigru: BiGruStack,
    pub head: DenseLayer,
    pub hp: HyperParams,
    pub feature_dim: usize,
}

/// Sequence length after the conv/pool pipeline for a given window length:
/// same-padded convs preserve length, each of the two pools halves it.
pub fn sequence_len_after_conv(window_len: usize, pool: &PoolSpec) -> Result<usize> {
    let t1 = pool.out_len(window_len)?;
    pool.out_len(t1)
}

/// Builds a Glorot-initialized model. Deterministic for a given seed;
/// `bidirectional = false` builds the unidirectional ablation.
pub fn build_model(hp: &HyperParams, feature_dim: usize, rng: &RngStream) -> Result<ModelState> {
    hp.validate()?;
    if feature_dim == 0 {
        return Err(Error::Config("feature_dim must be at least 1".into()));
    }
    let pool = PoolSpec { filter: 2, stride: 2 };
    let seq_len = sequence_len_after_conv(hp.window_len, &pool).map_err(|_| {
        Error::Config(format!(
            "window_len {} is too short for two pooling stages",
            hp.window_len
        ))
    })?;
    let (c1, c2, c3) = hp.conv_channels;
    let mut conv_rng = rng.child("conv");
    let conv1 = ConvLayer::glorot(c1, feature_dim, hp.kernel_len, Padding::Same, &mut conv_rng);
    let conv2 = ConvLayer::glorot(c2, c1, hp.kernel_len, Padding::Same, &mut conv_rng);
    let conv3 = ConvLayer::glorot(c3, c2, hp.kernel_len, Padding::Same, &mut conv_rng);
    let bigru = BiGruStack::glorot(
        c3,
        hp.gru_hidden,
        hp.gru_layers,
        hp.bidirectional,
        &rng.child("gru"),
    );
    let head_in = seq_len * bigru.output_dim();
    let mut head_rng = rng.child("head");
    let head = DenseLayer::glorot(hp.horizon, head_in, &mut head_rng);
    Ok(ModelState {
        conv1,
        conv2,
        conv3,
        pool,
        bigru,
        head,
        hp: hp.clone(),
        feature_dim,
    })
}

impl ModelState {
    /// All parameter tensors with stable dotted names, in a fixed order shared
    /// with `ModelGrads`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("conv1.weights".into(), &self.conv1.weights),
            ("conv1.bias".into(), &self.conv1.bias),
            ("conv2.weights".into(), &self.conv2.weights),
            ("conv2.bias".into(), &self.conv2.bias),
            ("conv3.weights".into(), &self.conv3.weights),
            ("conv3.bias".into(), &self.conv3.bias),
        ];
        for (l, layer) in self.bigru.layers.iter().enumerate() {
            for (name, t) in layer.forward.tensors() {
                out.push((format!("gru.{l}.fw.{name}"), t));
            }
            if let Some(bw) = &layer.backward {
                for (name, t) in bw.tensors() {
                    out.push((format!("gru.{l}.bw.{name}"), t));
                }
            }
        }
        out.push(("head.weights".into(), &self.head.weights));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("conv1.weights".into(), &mut self.conv1.weights),
            ("conv1.bias".into(), &mut self.conv1.bias),
            ("conv2.weights".into(), &mut self.conv2.weights),
            ("conv2.bias".into(), &mut self.conv2.bias),
            ("conv3.weights".into(), &mut self.conv3.weights),
            ("conv3.bias".into(), &mut self.conv3.bias),
        ];
        for (l, layer) in self.bigru.layers.iter_mut().enumerate() {
            for (name, t) in layer.forward.tensors_mut() {
                out.push((format!("gru.{l}.fw.{name}"), t));
            }
            if let Some(bw) = layer.backward.as_mut() {
                for (name, t) in bw.tensors_mut() {
                    out.push((format!("gru.{l}.bw.{name}"), t));
                }
            }
        }
        out.push(("head.weights".into(), &mut self.head.weights));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }

    /// Forward pass over one `[window_len x features]` window; emits the
    /// horizon-length prediction in scaled space.
    pub fn forward(&self, window: &Tensor) -> Result<(Tensor, ForwardCache)> {
        if window.rank() != 2
            || window.shape() != [self.hp.window_len, self.feature_dim]
        {
            return Err(Error::ShapeMismatch {
                context: "model forward input".into(),
                lhs: window.shape().to_vec(),
                rhs: vec![self.hp.window_len, self.feature_dim],
            });
        }
        let (z1, conv1_cache) = conv1d_forward(&self.conv1, window)?;
        let (a1, relu1_cache) = relu_forward(&z1);
        let (p1, pool1_cache) = maxpool_forward(&self.pool, &a1)?;

        let (z2, conv2_cache) = conv1d_forward(&self.conv2, &p1)?;
        let (a2, relu2_cache) = relu_forward(&z2);
        let (p2, pool2_cache) = maxpool_forward(&self.pool, &a2)?;

        let (z3, conv3_cache) = conv1d_forward(&self.conv3, &p2)?;
        let (a3, relu3_cache) = relu_forward(&z3);

        let (ys, bigru_cache) = bigru_forward(&self.bigru, &a3)?;
        let seq_len = ys.shape()[0];
        let seq_width = ys.shape()[1];
        let flat = flatten(&ys);
        let (pred, dense_cache) = dense_forward(&self.head, &flat)?;

        Ok((
            pred,
            ForwardCache {
                conv1: conv1_cache,
                relu1: relu1_cache,
                pool1: pool1_cache,
                conv2: conv2_cache,
                relu2: relu2_cache,
                pool2: pool2_cache,
                conv3: conv3_cache,
                relu3: relu3_cache,
                bigru: bigru_cache,
                dense: dense_cache,
                seq_len,
                seq_width,
            },
        ))
    }

    /// Backward pass producing gradients for every parameter tensor.
    pub fn backward(&self, cache: &ForwardCache, grad_pred: &Tensor) -> Result<ModelGrads> {
        let (grad_flat, head_w, head_b) = dense_backward(&self.head, &cache.dense, grad_pred)?;
        let grad_ys = unflatten(&grad_flat, cache.seq_len, cache.seq_width)?;
        let (grad_a3, bigru_grads) = bigru_backward(&self.bigru, &cache.bigru, &grad_ys)?;

        let grad_z3 = relu_backward(&cache.relu3, &grad_a3)?;
        let (grad_p2, conv3_w, conv3_b) = conv1d_backward(&self.conv3, &cache.conv3, &grad_z3)?;
        let grad_a2 = maxpool_backward(&cache.pool2, &grad_p2)?;
        let grad_z2 = relu_backward(&cache.relu2, &grad_a2)?;
        let (grad_p1, conv2_w, conv2_b) = conv1d_backward(&self.conv2, &cache.conv2, &grad_z2)?;
        let grad_a1 = maxpool_backward(&cache.pool1, &grad_p1)?;
        let grad_z1 = relu_backward(&cache.relu1, &grad_a1)?;
        let (_, conv1_w, conv1_b) = conv1d_backward(&self.conv1, &cache.conv1, &grad_z1)?;

        Ok(ModelGrads {
            conv: [(conv1_w, conv1_b), (conv2_w, conv2_b), (conv3_w, conv3_b)],
            bigru: bigru_grads,
            head: (head_w, head_b),
        })
    }

    /// Smallest ReLU pre-activation magnitude and pooling tie margin seen on
    /// one window; gradient checks resample configurations where either is
    /// within the exclusion radius of a kink or tie.
    pub fn kink_margins(&self, window: &Tensor) -> Result<(f64, f64)> {
        let (z1, _) = conv1d_forward(&self.conv1, window)?;
        let (a1, r1) = relu_forward(&z1);
        let (p1, _) = maxpool_forward(&self.pool, &a1)?;
        let (z2, _) = conv1d_forward(&self.conv2, &p1)?;
        let (a2, r2) = relu_forward(&z2);
        let (p2, _) = maxpool_forward(&self.pool, &a2)?;
        let (z3, _) = conv1d_forward(&self.conv3, &p2)?;
        let (_, r3) = relu_forward(&z3);
        let relu_margin = crate::cnn::relu_kink_margin(&r1)
            .min(crate::cnn::relu_kink_margin(&r2))
            .min(crate::cnn::relu_kink_margin(&r3));
        let tie_margin = crate::cnn::maxpool_tie_margin(&self.pool, &a1)?
            .min(crate::cnn::maxpool_tie_margin(&self.pool, &a2)?);
        Ok((relu_margin, tie_margin))
    }
}

/// Forward intermediates for one window, consumed by `ModelState::backward`.
pub struct ForwardCache {
    conv1: ConvCache,
    relu1: ReluCache,
    pool1: PoolCache,
    conv2: ConvCache,
    relu2: ReluCache,
    pool2: PoolCache,
    conv3: ConvCache,
    relu3: ReluCache,
    bigru: BiGruCache,
    dense: DenseCache,
    seq_len: usize,
    seq_width: usize,
}

/// Gradients for every parameter tensor, mirroring `ModelState`.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub conv: [(Tensor, Tensor); 3],
    pub bigru: BiGruStack,
    pub head: (Tensor, Tensor),
}

impl ModelGrads {
    pub fn zeros_like(model: &ModelState) -> ModelGrads {
        ModelGrads {
            conv: [
                (
                    Tensor::zeros(model.conv1.weights.shape()),
                    Tensor::zeros(model.conv1.bias.shape()),
                ),
                (
                    Tensor::zeros(model.conv2.weights.shape()),
                    Tensor::zeros(model.conv2.bias.shape()),
                ),
                (
                    Tensor::zeros(model.conv3.weights.shape()),
                    Tensor::zeros(model.conv3.bias.shape()),
                ),
            ],
            bigru: model.bigru.zeros_like(),
            head: (
                Tensor::zeros(model.head.weights.shape()),
                Tensor::zeros(model.head.bias.shape()),
            ),
        }
    }

    pub fn add_scaled(&mut self, other: &ModelGrads, scale: f64) {
        for (dst, src) in self.conv.iter_mut().zip(&other.conv) {
            for (d, s) in dst.0.data_mut().iter_mut().zip(src.0.data()) {
                *d += s * scale;
            }
            for (d, s) in dst.1.data_mut().iter_mut().zip(src.1.data()) {
                *d += s * scale;
            }
        }
        self.bigru.add_scaled(&other.bigru, scale);
        for (d, s) in self.head.0.data_mut().iter_mut().zip(other.head.0.data()) {
            *d += s * scale;
        }
        for (d, s) in self.head.1.data_mut().iter_mut().zip(other.head.1.data()) {
            *d += s * scale;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in self.conv.iter_mut() {
            w.data_mut().iter_mut().for_each(|v| *v *= factor);
            b.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
        for layer in self.bigru.layers.iter_mut() {
            for (_, t) in layer.forward.tensors_mut() {
                t.data_mut().iter_mut().for_each(|v| *v *= factor);
            }
            if let Some(bw) = layer.backward.as_mut() {
                for (_, t) in bw.tensors_mut() {
                    t.data_mut().iter_mut().for_each(|v| *v *= factor);
                }
            }
        }
        self.head.0.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.head.1.data_mut().iter_mut().for_each(|v| *v *= factor);
    }

    /// Gradient tensors in the same order and naming as
    /// `ModelState::named_tensors`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("conv1.weights".into(), &self.conv[0].0),
            ("conv1.bias".into(), &self.conv[0].1),
            ("conv2.weights".into(), &self.conv[1].0),
            ("conv2.bias".into(), &self.conv[1].1),
            ("conv3.weights".into(), &self.conv[2].0),
            ("conv3.bias".into(), &self.conv[2].1),
        ];
        for (l, layer) in self.bigru.layers.iter().enumerate() {
            for (name, t) in layer.forward.tensors() {
                out.push((format!("gru.{l}.fw.{name}"), t));
            }
            if let Some(bw) = &layer.backward {
                for (name, t) in bw.tensors() {
                    out.push((format!("gru.{l}.bw.{name}"), t));
                }
            }
        }
        out.push(("head.weights".into(), &self.head.0));
        out.push(("head.bias".into(), &self.head.1));
        out
    }
}

/// Mean squared error and its gradient with respect to the prediction:
/// `loss = mean((pred - target)^2)`, `grad = 2(pred - target)/n`.
pub fn mse_loss(pred: &Tensor, target: &[f64]) -> Result<(f64, Tensor)> {
    if pred.rank() != 1 || pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            context: "mse_loss".into(),
            lhs: pred.shape().to_vec(),
            rhs: vec![target.len()],
        });
    }
    let n = target.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(target.len());
    for (p, t) in pred.data().iter().zip(target) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((loss / n, Tensor::from_vec(grad)))
}

/// In-place SGD update `theta <- theta - lr * grad` over every parameter.
/// No momentum, no weight decay. A non-finite gradient aborts with the
/// offending tensor's name.
pub fn sgd_step(model: &mut ModelState, grads: &ModelGrads, lr: f64) -> Result<()> {
    let grad_tensors = grads.named_tensors();
    for ((pname, param), (gname, grad)) in
        model.named_tensors_mut().into_iter().zip(grad_tensors)
    {
        debug_assert_eq!(pname, gname);
        if !grad.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient in parameter '{pname}'"
            )));
        }
        for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
            *p -= lr * g;
        }
    }
    Ok(())
}

/// Validation-improvement tracker: `observe` returns whether the value
/// improved on the best seen by more than `min_delta`; `should_stop` fires
/// after `patience` consecutive non-improvements.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    pub fn observe(&mut self, value: f64) -> bool {
        if value < self.best - self.min_delta {
            self.best = value;
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }
}

/// Per-epoch loss curves and the outcome of one training run. Wall time is
/// kept out of serialized reports so identical seeds produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose snapshot is returned; it has the minimal recorded
    /// validation loss.
    pub best_epoch: usize,
    pub stopped_early: bool,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.val_loss.len()
    }

    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch - 1]
    }
}

fn batch_loss_and_grads(
    model: &ModelState,
    ds: &WindowedDataset,
    indices: &[usize],
) -> Result<(f64, ModelGrads)> {
    // Fixed-size chunks, each reduced sequentially, folded in chunk order:
    // deterministic regardless of rayon's scheduling.
    let chunks: Vec<&[usize]> = indices.chunks(REDUCE_CHUNK).collect();
    let partials: Result<Vec<(f64, ModelGrads)>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut acc = ModelGrads::zeros_like(model);
            let mut loss_sum = 0.0;
            for &i in *chunk {
                let window = ds.window(i);
                let (pred, cache) = model.forward(&window)?;
                let (loss, grad_pred) = mse_loss(&pred, ds.target(i))?;
                let grads = model.backward(&cache, &grad_pred)?;
                acc.add_scaled(&grads, 1.0);
                loss_sum += loss;
            }
            Ok((loss_sum, acc))
        })
        .collect();
    let partials = partials?;
    let mut total = ModelGrads::zeros_like(model);
    let mut loss_sum = 0.0;
    for (l, g) in &partials {
        total.add_scaled(g, 1.0);
        loss_sum += l;
    }
    Ok((loss_sum, total))
}

/// Mean MSE over a whole dataset, forward passes only.
pub fn dataset_loss(model: &ModelState, ds: &WindowedDataset) -> Result<f64> {
    let indices: Vec<usize> = (0..ds.count()).collect();
    let chunks: Vec<&[usize]> = indices.chunks(REDUCE_CHUNK).collect();
    let partials: Result<Vec<f64>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut sum = 0.0;
            for &i in *chunk {
                let (pred, _) = model.forward(&ds.window(i))?;
                let (loss, _) = mse_loss(&pred, ds.target(i))?;
                sum += loss;
            }
            Ok(sum)
        })
        .collect();
    Ok(partials?.iter().sum::<f64>() / ds.count() as f64)
}

/// Trains with seed-shuffled minibatch SGD, evaluating validation MSE after
/// every epoch. Stops at `max_epochs` or when validation fails to improve for
/// `patience` consecutive epochs, and returns the snapshot with the minimal
/// recorded validation loss.
pub fn train(
    model: &ModelState,
    train_ds: &WindowedDataset,
    val_ds: &WindowedDataset,
) -> Result<(ModelState, TrainReport)> {
    let hp = model.hp.clone();
    hp.validate()?;
    for (name, ds) in [("training", train_ds), ("validation", val_ds)] {
        if ds.is_empty() {
            return Err(Error::Data(format!("{name} dataset has no windows")));
        }
        if ds.window_len() != hp.window_len
            || ds.horizon() != hp.horizon
            || ds.feature_dim() != model.feature_dim
        {
            return Err(Error::ShapeMismatch {
                context: format!("{name} dataset geometry"),
                lhs: vec![ds.window_len(), ds.horizon(), ds.feature_dim()],
                rhs: vec![hp.window_len, hp.horizon, model.feature_dim],
            });
        }
    }

    let started = std::time::Instant::now();
    let mut current = model.clone();
    let mut best = current.clone();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut stopper = EarlyStopping::new(hp.patience, 1e-9);
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut stopped_early = false;
    let shuffle_root = RngStream::new(hp.seed).child("shuffle");

    for epoch in 1..=hp.max_epochs {
        let mut order: Vec<usize> = (0..train_ds.count()).collect();
        shuffle_root
            .child(&format!("epoch/{epoch}"))
            .shuffle(&mut order);

        let mut epoch_loss_sum = 0.0;
        for batch in order.chunks(hp.batch_size) {
            let (loss_sum, mut grads) = batch_loss_and_grads(&current, train_ds, batch)?;
            if !loss_sum.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite training loss in epoch {epoch}"
                )));
            }
            epoch_loss_sum += loss_sum;
            grads.scale(1.0 / batch.len() as f64);
            sgd_step(&mut current, &grads, hp.learning_rate)?;
        }
        let train_loss = epoch_loss_sum / train_ds.count() as f64;

        let val_loss = dataset_loss(&current, val_ds)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite validation loss in epoch {epoch}"
            )));
        }
        train_curve.push(train_loss);
        val_curve.push(val_loss);

        if val_loss < best_val {
            best_val = val_loss;
            best = current.clone();
            best_epoch = epoch;
        }
        stopper.observe(val_loss);
        if stopper.should_stop() {
            stopped_early = true;
            break;
        }
    }

    Ok((
        best,
        TrainReport {
            train_loss: train_curve,
            val_loss: val_curve,
            best_epoch,
            stopped_early,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// Inference on the last `window_len` rows of an already-encoded frame in
/// original units: scales features, runs the forward pass, and inverse-scales
/// the target column back to original units.
pub fn predict(
    model: &ModelState,
    scaler: &MinMaxScaler,
    tail: &TimeSeriesFrame,
) -> Result<Vec<f64>> {
    if tail.rows() != model.hp.window_len {
        return Err(Error::Schema(format!(
            "predict needs exactly {} rows, got {}",
            model.hp.window_len,
            tail.rows()
        )));
    }
    if tail.numeric_columns().len() != model.feature_dim {
        return Err(Error::Schema(format!(
            "predict needs {} feature columns, got {}",
            model.feature_dim,
            tail.numeric_columns().len()
        )));
    }
    let scaled = scaler.transform(tail)?;
    let mut window = Tensor::zeros(&[model.hp.window_len, model.feature_dim]);
    for (f, col) in scaled.numeric_columns().iter().enumerate() {
        for t in 0..model.hp.window_len {
            *window.at2_mut(t, f) = col.values[t];
        }
    }
    let (pred, _) = model.forward(&window)?;
    pred.data()
        .iter()
        .map(|&v| scaler.inverse_value(tail.target_name(), v))
        .collect()
}
