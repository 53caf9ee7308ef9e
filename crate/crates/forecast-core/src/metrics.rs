//! Regression metrics over predictions in original units, plus chronological
//! expanding-window cross-validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_model, train, HyperParams};
use crate::preprocess::WindowedDataset;
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Near-zero guard for the MAPE denominator.
pub const MAPE_ZERO_GUARD: f64 = 1e-8;

/// Paired actual/predicted values, both in original (inverse-scaled) units.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    y: Vec<f64>,
    y_hat: Vec<f64>,
}

impl PredictionSet {
    pub fn new(y: Vec<f64>, y_hat: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != y_hat.len() {
            return Err(Error::InvalidArgument(format!(
                "prediction set needs equal nonzero lengths, got {} and {}",
                y.len(),
                y_hat.len()
            )));
        }
        Ok(PredictionSet { y, y_hat })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn actuals(&self) -> &[f64] {
        &self.y
    }

    pub fn predictions(&self) -> &[f64] {
        &self.y_hat
    }
}

/// Mean absolute error, `(1/n) sum |y - y_hat|`.
pub fn mae(ps: &PredictionSet) -> f64 {
    ps.y.iter()
        .zip(&ps.y_hat)
        .map(|(a, p)| (a - p).abs())
        .sum::<f64>()
        / ps.len() as f64
}

/// Root mean squared error, `sqrt((1/n) sum (y - y_hat)^2)`.
pub fn rmse(ps: &PredictionSet) -> f64 {
    let mse = ps
        .y
        .iter()
        .zip(&ps.y_hat)
        .map(|(a, p)| (a - p) * (a - p))
        .sum::<f64>()
        / ps.len() as f64;
    mse.sqrt()
}

/// Mean absolute percentage error over samples whose actual value clears the
/// zero guard; returns the percentage and how many samples were excluded.
/// Errors if every sample is excluded.
pub fn mape(ps: &PredictionSet) -> Result<(f64, usize)> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for (a, p) in ps.y.iter().zip(&ps.y_hat) {
        if a.abs() >= MAPE_ZERO_GUARD {
            sum += ((a - p) / a).abs();
            used += 1;
        }
    }
    let excluded = ps.len() - used;
    if used == 0 {
        return Err(Error::Numeric(
            "MAPE undefined: every actual value is within the zero guard".into(),
        ));
    }
    Ok((100.0 * sum / used as f64, excluded))
}

/// Coefficient of determination, `1 - SSE/SST`. Errors when the actuals are
/// (numerically) constant, where the ratio is undefined.
pub fn r2(ps: &PredictionSet) -> Result<f64> {
    let n = ps.len() as f64;
    let mean = ps.y.iter().sum::<f64>() / n;
    let sst: f64 = ps.y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst < 1e-12 {
        return Err(Error::Numeric(
            "R^2 undefined: actual values are constant".into(),
        ));
    }
    let sse: f64 = ps
        .y
        .iter()
        .zip(&ps.y_hat)
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(1.0 - sse / sst)
}

/// Metrics for one horizon step across all windows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mape_percent: Option<f64>,
    pub mape_excluded: usize,
    pub r2: Option<f64>,
}

/// Pooled metrics over all (window, step) pairs plus a per-step breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub mape_percent: f64,
    pub mape_excluded: usize,
    pub r2: f64,
    pub samples: usize,
    pub per_step: Vec<StepMetrics>,
}

/// Builds the full report from `[count x horizon]` actual and predicted
/// tensors. Pooled metrics follow the per-metric error contracts; per-step
/// MAPE and R^2 fall back to None where undefined.
pub fn metrics_report(actuals: &Tensor, predictions: &Tensor) -> Result<MetricsReport> {
    if actuals.shape() != predictions.shape() || actuals.rank() != 2 {
        return Err(Error::ShapeMismatch {
            context: "metrics_report".into(),
            lhs: actuals.shape().to_vec(),
            rhs: predictions.shape().to_vec(),
        });
    }
    let (count, horizon) = (actuals.shape()[0], actuals.shape()[1]);
    let pooled = PredictionSet::new(actuals.data().to_vec(), predictions.data().to_vec())?;
    let (mape_percent, mape_excluded) = mape(&pooled)?;
    let mut per_step = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let y: Vec<f64> = (0..count).map(|i| actuals.at2(i, h)).collect();
        let y_hat: Vec<f64> = (0..count).map(|i| predictions.at2(i, h)).collect();
        let ps = PredictionSet::new(y, y_hat)?;
        let (step_mape, step_excluded) = match mape(&ps) {
            Ok((m, e)) => (Some(m), e),
            Err(_) => (None, ps.len()),
        };
        per_step.push(StepMetrics {
            step: h,
            mae: mae(&ps),
            rmse: rmse(&ps),
            mape_percent: step_mape,
            mape_excluded: step_excluded,
            r2: r2(&ps).ok(),
        });
    }
    Ok(MetricsReport {
        mae: mae(&pooled),
        rmse: rmse(&pooled),
        mape_percent,
        mape_excluded,
        r2: r2(&pooled)?,
        samples: pooled.len(),
        per_step,
    })
}

/// Contiguous chronological blocks for expanding-window cross-validation over
/// `n` windows: `k` blocks, sizes `n/k` with the remainder spread over the
/// leading blocks. Returns `[start, end)` pairs.
pub fn kfold_blocks(n: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    if k < 2 {
        return Err(Error::Config(format!("K-fold needs K >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::Data(format!(
            "K-fold needs at least K={k} windows, have {n}"
        )));
    }
    let base = n / k;
    let extra = n % k;
    let mut blocks = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        blocks.push((start, start + len));
        start += len;
    }
    Ok(blocks)
}

/// Predictions over every window of a dataset, with actuals, both mapped to
/// original units by `inverse`.
pub fn predict_dataset(
    model: &crate::model::ModelState,
    ds: &WindowedDataset,
    inverse: &(impl Fn(f64) -> Result<f64> + Sync),
) -> Result<(Tensor, Tensor)> {
    let mut actuals = Tensor::zeros(&[ds.count(), ds.horizon()]);
    let mut predictions = Tensor::zeros(&[ds.count(), ds.horizon()]);
    for i in 0..ds.count() {
        let (pred, _) = model.forward(&ds.window(i))?;
        for h in 0..ds.horizon() {
            *actuals.at2_mut(i, h) = inverse(ds.target(i)[h])?;
            *predictions.at2_mut(i, h) = inverse(pred.data()[h])?;
        }
    }
    Ok((actuals, predictions))
}

/// Aggregate over the evaluated folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KfoldSummary {
    pub k: usize,
    pub evaluations: usize,
    pub mean_mae: f64,
    pub std_mae: f64,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub mean_mape_percent: f64,
    pub std_mape_percent: f64,
    pub mean_r2: f64,
    pub std_r2: f64,
    /// Standard shuffled K-fold leaks future data in a time series; folds
    /// here are chronological blocks and each one trains only on strictly
    /// earlier blocks, so K blocks yield K-1 evaluations.
    pub scheme: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KfoldOutcome {
    pub folds: Vec<MetricsReport>,
    pub summary: KfoldSummary,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Expanding-window cross-validation: the dataset's windows are cut into `k`
/// chronological blocks; block `j` (j = 1..k-1) is validated by a model
/// trained on blocks `0..j`. Each fold trains fresh with a fold-derived seed;
/// metrics are computed in original units via `inverse`.
pub fn kfold_cv(
    ds: &WindowedDataset,
    k: usize,
    hp: &HyperParams,
    inverse: &(impl Fn(f64) -> Result<f64> + Sync),
) -> Result<KfoldOutcome> {
    let blocks = kfold_blocks(ds.count(), k)?;
    let seed_root = RngStream::new(hp.seed).child("kfold");
    let mut folds = Vec::with_capacity(k - 1);
    for j in 1..k {
        let (val_start, val_end) = blocks[j];
        let train_windows = ds.slice(0, val_start);
        let val_windows = ds.slice(val_start, val_end);
        let stream = seed_root.child(&format!("fold/{j}"));
        let mut fold_hp = hp.clone();
        fold_hp.seed = stream.seed();
        let model = build_model(&fold_hp, ds.feature_dim(), &stream)?;
        let (best, _) = train(&model, &train_windows, &val_windows)?;
        let (actuals, predictions) = predict_dataset(&best, &val_windows, inverse)?;
        folds.push(metrics_report(&actuals, &predictions)?);
    }
    let (mean_mae, std_mae) = mean_std(&folds.iter().map(|f| f.mae).collect::<Vec<_>>());
    let (mean_rmse, std_rmse) = mean_std(&folds.iter().map(|f| f.rmse).collect::<Vec<_>>());
    let (mean_mape, std_mape) =
        mean_std(&folds.iter().map(|f| f.mape_percent).collect::<Vec<_>>());
    let (mean_r2, std_r2) = mean_std(&folds.iter().map(|f| f.r2).collect::<Vec<_>>());
    Ok(KfoldOutcome {
        summary: KfoldSummary {
            k,
            evaluations: folds.len(),
            mean_mae,
            std_mae,
            mean_rmse,
            std_rmse,
            mean_mape_percent: mean_mape,
            std_mape_percent: std_mape,
            mean_r2,
            std_r2,
            scheme: "expanding-window chronological blocks".into(),
        },
        folds,
    })
}
