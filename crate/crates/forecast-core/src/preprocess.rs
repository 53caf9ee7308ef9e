//! Data preparation pipeline: cleaning (missing-row drop, forward fill, 3-sigma
//! outlier correction), min-max scaling, one-hot encoding, chronological
//! splitting, and sliding-window supervision.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A numeric column; missing cells are NaN until `clean` fills them.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// A declared categorical column; missing cells are None until `clean`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalColumn {
    pub name: String,
    pub values: Vec<Option<String>>,
}

/// Timestamped tabular series: a strictly increasing date index, numeric
/// feature columns, declared categorical columns, and one numeric target.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesFrame {
    dates: Vec<NaiveDate>,
    numeric: Vec<NumericColumn>,
    categorical: Vec<CategoricalColumn>,
    target: String,
}

impl TimeSeriesFrame {
    pub fn new(
        dates: Vec<NaiveDate>,
        numeric: Vec<NumericColumn>,
        categorical: Vec<CategoricalColumn>,
        target: impl Into<String>,
    ) -> Result<Self> {
        let target = target.into();
        let rows = dates.len();
        if rows == 0 {
            return Err(Error::Data("frame has no rows".into()));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("dates must be strictly increasing".into()));
        }
        for c in &numeric {
            if c.values.len() != rows {
                return Err(Error::Data(format!(
                    "column '{}' has {} rows, date index has {rows}",
                    c.name,
                    c.values.len()
                )));
            }
        }
        for c in &categorical {
            if c.values.len() != rows {
                return Err(Error::Data(format!(
                    "column '{}' has {} rows, date index has {rows}",
                    c.name,
                    c.values.len()
                )));
            }
        }
        if !numeric.iter().any(|c| c.name == target) {
            return Err(Error::Schema(format!(
                "target column '{target}' missing or not numeric"
            )));
        }
        Ok(TimeSeriesFrame {
            dates,
            numeric,
            categorical,
            target,
        })
    }

    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn target_name(&self) -> &str {
        &self.target
    }

    pub fn numeric_columns(&self) -> &[NumericColumn] {
        &self.numeric
    }

    pub fn categorical_columns(&self) -> &[CategoricalColumn] {
        &self.categorical
    }

    pub fn numeric(&self, name: &str) -> Result<&NumericColumn> {
        self.numeric
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown numeric column '{name}'")))
    }

    /// Names of numeric columns in frame order; this is the feature order
    /// used by windowing.
    pub fn numeric_names(&self) -> Vec<String> {
        self.numeric.iter().map(|c| c.name.clone()).collect()
    }

    /// Contiguous row slice as a new frame.
    fn slice(&self, range: std::ops::Range<usize>) -> TimeSeriesFrame {
        TimeSeriesFrame {
            dates: self.dates[range.clone()].to_vec(),
            numeric: self
                .numeric
                .iter()
                .map(|c| NumericColumn {
                    name: c.name.clone(),
                    values: c.values[range.clone()].to_vec(),
                })
                .collect(),
            categorical: self
                .categorical
                .iter()
                .map(|c| CategoricalColumn {
                    name: c.name.clone(),
                    values: c.values[range.clone()].to_vec(),
                })
                .collect(),
            target: self.target.clone(),
        }
    }
}

/// One corrected outlier: where, what it was, what replaced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierFix {
    pub column: String,
    pub date: NaiveDate,
    pub original: f64,
    pub replacement: f64,
}

/// Machine-readable account of everything `clean` changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub rows_in: usize,
    pub rows_dropped: usize,
    pub dropped_dates: Vec<NaiveDate>,
    pub cells_filled: usize,
    pub outliers_corrected: usize,
    pub outlier_fixes: Vec<OutlierFix>,
}

impl CleaningReport {
    pub fn rows_out(&self) -> usize {
        self.rows_in - self.rows_dropped
    }
}

/// Cleans a frame: drops rows whose missing-cell fraction exceeds
/// `missing_row_threshold`, forward-fills remaining gaps (leading gaps are
/// back-filled), then corrects per-column 3-sigma outliers by the nearest
/// preceding non-outlier value. Outlier statistics are computed once, after
/// fills. Columns with zero variance are never flagged.
pub fn clean(
    frame: &TimeSeriesFrame,
    missing_row_threshold: f64,
    sigma_k: f64,
) -> Result<(TimeSeriesFrame, CleaningReport)> {
    let rows = frame.rows();
    let total_cells = frame.numeric.len() + frame.categorical.len();
    let mut report = CleaningReport {
        rows_in: rows,
        ..CleaningReport::default()
    };

    // Pass 1: drop rows with too many missing cells.
    let mut keep = Vec::with_capacity(rows);
    for r in 0..rows {
        let missing = frame
            .numeric
            .iter()
            .filter(|c| c.values[r].is_nan())
            .count()
            + frame
                .categorical
                .iter()
                .filter(|c| c.values[r].is_none())
                .count();
        let fraction = missing as f64 / total_cells as f64;
        if fraction > missing_row_threshold {
            report.rows_dropped += 1;
            report.dropped_dates.push(frame.dates[r]);
        } else {
            keep.push(r);
        }
    }
    if keep.is_empty() {
        return Err(Error::Data(
            "cleaning dropped every row; missing-cell threshold leaves no data".into(),
        ));
    }

    let dates: Vec<NaiveDate> = keep.iter().map(|&r| frame.dates[r]).collect();

    // Pass 2: forward-fill numeric gaps (back-fill a leading run).
    let mut numeric = Vec::with_capacity(frame.numeric.len());
    for col in &frame.numeric {
        let mut values: Vec<f64> = keep.iter().map(|&r| col.values[r]).collect();
        let first_valid = values.iter().position(|v| !v.is_nan()).ok_or_else(|| {
            Error::Data(format!("column '{}' has no observed values", col.name))
        })?;
        for i in 0..first_valid {
            values[i] = values[first_valid];
            report.cells_filled += 1;
        }
        for i in first_valid + 1..values.len() {
            if values[i].is_nan() {
                values[i] = values[i - 1];
                report.cells_filled += 1;
            }
        }
        numeric.push(NumericColumn {
            name: col.name.clone(),
            values,
        });
    }

    let mut categorical = Vec::with_capacity(frame.categorical.len());
    for col in &frame.categorical {
        let mut values: Vec<Option<String>> = keep.iter().map(|&r| col.values[r].clone()).collect();
        let first_valid = values.iter().position(|v| v.is_some()).ok_or_else(|| {
            Error::Data(format!("column '{}' has no observed values", col.name))
        })?;
        for i in 0..first_valid {
            values[i] = values[first_valid].clone();
            report.cells_filled += 1;
        }
        for i in first_valid + 1..values.len() {
            if values[i].is_none() {
                values[i] = values[i - 1].clone();
                report.cells_filled += 1;
            }
        }
        categorical.push(CategoricalColumn {
            name: col.name.clone(),
            values,
        });
    }

    // Pass 3: 3-sigma outlier correction per numeric column.
    for col in &mut numeric {
        let n = col.values.len() as f64;
        let mean = col.values.iter().sum::<f64>() / n;
        let var = col.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std == 0.0 {
            continue;
        }
        let bound = sigma_k * std;
        let flagged: Vec<bool> = col.values.iter().map(|v| (v - mean).abs() > bound).collect();
        for i in 0..col.values.len() {
            if !flagged[i] {
                continue;
            }
            let replacement = (0..i)
                .rev()
                .find(|&j| !flagged[j])
                .or_else(|| (i + 1..col.values.len()).find(|&j| !flagged[j]))
                .map(|j| col.values[j]);
            if let Some(replacement) = replacement {
                report.outlier_fixes.push(OutlierFix {
                    column: col.name.clone(),
                    date: dates[i],
                    original: col.values[i],
                    replacement,
                });
                col.values[i] = replacement;
                report.outliers_corrected += 1;
            }
        }
    }

    let cleaned = TimeSeriesFrame::new(dates, numeric, categorical, frame.target.clone())?;
    Ok((cleaned, report))
}

/// Per-column min/max statistics mapping observed ranges onto a fixed
/// feature range. Fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub columns: Vec<ColumnStats>,
    pub range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl MinMaxScaler {
    /// Records per-column extrema from the provided frame's numeric columns.
    pub fn fit(frame: &TimeSeriesFrame, range: (f64, f64)) -> Result<MinMaxScaler> {
        if !(range.0 < range.1) {
            return Err(Error::Config(format!(
                "scaler range requires lo < hi, got ({}, {})",
                range.0, range.1
            )));
        }
        let columns = frame
            .numeric
            .iter()
            .map(|c| {
                let min = c.values.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = c.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                ColumnStats {
                    name: c.name.clone(),
                    min,
                    max,
                }
            })
            .collect();
        Ok(MinMaxScaler { columns, range })
    }

    /// Columns whose fitted min equals max; they transform to the range floor.
    pub fn degenerate_columns(&self) -> Vec<&str> {
        self.columns
            .iter()
            .filter(|c| c.min == c.max)
            .map(|c| c.name.as_str())
            .collect()
    }

    fn stats(&self, name: &str) -> Result<&ColumnStats> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("scaler knows no column '{name}'")))
    }

    pub fn transform_value(&self, name: &str, v: f64) -> Result<f64> {
        let s = self.stats(name)?;
        let (lo, hi) = self.range;
        if s.min == s.max {
            return Ok(lo);
        }
        Ok(lo + (v - s.min) * (hi - lo) / (s.max - s.min))
    }

    pub fn inverse_value(&self, name: &str, v: f64) -> Result<f64> {
        let s = self.stats(name)?;
        let (lo, hi) = self.range;
        if s.min == s.max {
            return Ok(s.min);
        }
        Ok(s.min + (v - lo) * (s.max - s.min) / (hi - lo))
    }

    /// `x' = lo + (x - min)(hi - lo)/(max - min)` per column; degenerate
    /// columns map to `lo`.
    pub fn transform(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.apply(frame, true)
    }

    /// Exact algebraic inverse of `transform`; degenerate columns invert to
    /// the stored minimum.
    pub fn inverse(&self, frame: &TimeSeriesFrame) -> Result<TimeSeriesFrame> {
        self.apply(frame, false)
    }

    fn apply(&self, frame: &TimeSeriesFrame, forward: bool) -> Result<TimeSeriesFrame> {
        let mut numeric = Vec::with_capacity(frame.numeric.len());
        for col in &frame.numeric {
            let values = col
                .values
                .iter()
                .map(|&v| {
                    if forward {
                        self.transform_value(&col.name, v)
                    } else {
                        self.inverse_value(&col.name, v)
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            numeric.push(NumericColumn {
                name: col.name.clone(),
                values,
            });
        }
        TimeSeriesFrame::new(
            frame.dates.clone(),
            numeric,
            frame.categorical.clone(),
            frame.target.clone(),
        )
    }
}

/// Ordered category vocabularies for declared categorical columns, fit once
/// and reused at transform time. Unknown categories encode to all-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneHotEncoder {
    pub columns: Vec<Vocabulary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub name: String,
    pub categories: Vec<String>,
}

impl OneHotEncoder {
    /// Learns lexicographically sorted vocabularies and expands the frame in
    /// one pass. Indicator columns are named `column=category` and appended
    /// after the numeric columns, category-column order preserved.
    pub fn fit_transform(frame: &TimeSeriesFrame) -> Result<(OneHotEncoder, TimeSeriesFrame)> {
        let mut columns = Vec::with_capacity(frame.categorical.len());
        for col in &frame.categorical {
            let mut categories: Vec<String> = col
                .values
                .iter()
                .filter_map(|v| v.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            categories.sort();
            if categories.is_empty() {
                return Err(Error::Data(format!(
                    "categorical column '{}' has an empty vocabulary",
                    col.name
                )));
            }
            columns.push(Vocabulary {
                name: col.name.clone(),
                categories,
            });
        }
        let encoder = OneHotEncoder { columns };
        let (expanded, unknown) = encoder.transform(frame)?;
        debug_assert_eq!(unknown, 0, "fit data cannot contain unknown categories");
        Ok((encoder, expanded))
    }

    /// Applies stored vocabularies; returns the expanded frame and the count
    /// of cells that held a category unseen at fit time.
    pub fn transform(&self, frame: &TimeSeriesFrame) -> Result<(TimeSeriesFrame, usize)> {
        if self.columns.len() != frame.categorical.len()
            || self
                .columns
                .iter()
                .zip(&frame.categorical)
                .any(|(v, c)| v.name != c.name)
        {
            return Err(Error::Schema(format!(
                "encoder columns {:?} do not match frame categorical columns {:?}",
                self.columns.iter().map(|v| &v.name).collect::<Vec<_>>(),
                frame.categorical.iter().map(|c| &c.name).collect::<Vec<_>>()
            )));
        }
        let mut numeric = frame.numeric.clone();
        let mut unknown = 0usize;
        for (vocab, col) in self.columns.iter().zip(&frame.categorical) {
            let mut indicators: Vec<Vec<f64>> =
                vec![vec![0.0; frame.rows()]; vocab.categories.len()];
            for (r, value) in col.values.iter().enumerate() {
                match value
                    .as_ref()
                    .and_then(|v| vocab.categories.iter().position(|c| c == v))
                {
                    Some(k) => indicators[k][r] = 1.0,
                    None => unknown += 1,
                }
            }
            for (k, values) in indicators.into_iter().enumerate() {
                numeric.push(NumericColumn {
                    name: format!("{}={}", vocab.name, vocab.categories[k]),
                    values,
                });
            }
        }
        let expanded = TimeSeriesFrame::new(
            frame.dates.clone(),
            numeric,
            Vec::new(),
            frame.target.clone(),
        )?;
        Ok((expanded, unknown))
    }
}

/// Contiguous chronological split: train takes the first `floor(r0*N)` rows,
/// validation the next `floor(r1*N)`, test the remainder. No shuffling.
pub fn chrono_split(
    frame: &TimeSeriesFrame,
    ratios: (f64, f64, f64),
) -> Result<(TimeSeriesFrame, TimeSeriesFrame, TimeSeriesFrame)> {
    let (r0, r1, r2) = ratios;
    if r0 <= 0.0 || r1 <= 0.0 || r2 <= 0.0 {
        return Err(Error::Config(format!(
            "split ratios must be positive, got ({r0}, {r1}, {r2})"
        )));
    }
    if (r0 + r1 + r2 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios must sum to 1, got {}",
            r0 + r1 + r2
        )));
    }
    let n = frame.rows();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 rows to split, have {n}")));
    }
    let n_train = (r0 * n as f64).floor() as usize;
    let n_val = (r1 * n as f64).floor() as usize;
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Data(format!(
            "split produced an empty segment: {n_train}/{n_val}/{n_test} of {n} rows"
        )));
    }
    Ok((
        frame.slice(0..n_train),
        frame.slice(n_train..n_train + n_val),
        frame.slice(n_train + n_val..n),
    ))
}

/// Supervised sliding-window view of one split segment: inputs
/// `[count x window_len x features]`, targets `[count x horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    inputs: Tensor,
    targets: Tensor,
    count: usize,
    window_len: usize,
    horizon: usize,
    feature_dim: usize,
}

impl WindowedDataset {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Window `i` as a `[window_len x features]` tensor.
    pub fn window(&self, i: usize) -> Tensor {
        let stride = self.window_len * self.feature_dim;
        Tensor::new(
            vec![self.window_len, self.feature_dim],
            self.inputs.data()[i * stride..(i + 1) * stride].to_vec(),
        )
        .expect("window geometry is consistent")
    }

    /// Target horizon `i` as a slice of length `horizon`.
    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets.data()[i * self.horizon..(i + 1) * self.horizon]
    }

    /// Contiguous subset of windows `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> WindowedDataset {
        let in_stride = self.window_len * self.feature_dim;
        let inputs = if end > start {
            Tensor::new(
                vec![end - start, self.window_len, self.feature_dim],
                self.inputs.data()[start * in_stride..end * in_stride].to_vec(),
            )
            .expect("slice geometry")
        } else {
            Tensor::zeros(&[0, self.window_len, self.feature_dim])
        };
        let targets = if end > start {
            Tensor::new(
                vec![end - start, self.horizon],
                self.targets.data()[start * self.horizon..end * self.horizon].to_vec(),
            )
            .expect("slice geometry")
        } else {
            Tensor::zeros(&[0, self.horizon])
        };
        WindowedDataset {
            inputs,
            targets,
            count: end - start,
            window_len: self.window_len,
            horizon: self.horizon,
            feature_dim: self.feature_dim,
        }
    }
}

/// Builds windows strictly inside one segment: window `i` covers rows
/// `[i, i+window_len)` of every numeric column, target `i` covers target rows
/// `[i+window_len, i+window_len+horizon)`. A segment shorter than
/// `window_len + horizon` yields an empty dataset.
pub fn make_windows(
    segment: &TimeSeriesFrame,
    window_len: usize,
    horizon: usize,
) -> Result<WindowedDataset> {
    if window_len == 0 || horizon == 0 {
        return Err(Error::Config(
            "window_len and horizon must be at least 1".into(),
        ));
    }
    let n = segment.rows();
    let feature_dim = segment.numeric.len();
    let count = if n >= window_len + horizon {
        n - window_len - horizon + 1
    } else {
        0
    };

    let mut inputs = Tensor::zeros(&[count, window_len, feature_dim]);
    let mut targets = Tensor::zeros(&[count, horizon]);
    let target_col = segment.numeric(segment.target_name())?;
    for i in 0..count {
        for t in 0..window_len {
            for (f, col) in segment.numeric.iter().enumerate() {
                *inputs.at3_mut(i, t, f) = col.values[i + t];
            }
        }
        for h in 0..horizon {
            *targets.at2_mut(i, h) = target_col.values[i + window_len + h];
        }
    }
    Ok(WindowedDataset {
        inputs,
        targets,
        count,
        window_len,
        horizon,
        feature_dim,
    })
}
