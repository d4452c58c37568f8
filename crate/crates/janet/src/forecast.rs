//! Point forecasters and error-scale models fit on the training split.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::series::TimeSeries;

/// Lower clamp applied to every estimated scale so the scaled-residual
/// denominators never reach zero.
pub const DEFAULT_SCALE_FLOOR: f64 = 1e-8;

/// Default number of lagged history values fed to the conditional scale
/// regression.
pub const DEFAULT_SCALE_FEATURES: usize = 6;

/// A fitted point predictor mapping a `T x p` history to an `H x p`
/// forecast. Predictions must be deterministic given the fitted state.
pub trait Forecaster {
    fn predict(&self, history: &Array2<f64>, horizon: usize) -> Result<Array2<f64>>;
}

/// Which scale family produced a [`ScaleModel`]; recorded in calibration
/// output metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleKind {
    GlobalScale,
    ConditionalScale,
    Other,
}

/// Per-step error-scale estimates, optionally conditional on the history.
pub trait ScaleModel {
    /// An `H x p` matrix of strictly positive scales for a forecast
    /// anchored at `history`.
    fn scales(&self, history: &Array2<f64>, horizon: usize) -> Result<Array2<f64>>;

    fn kind(&self) -> ScaleKind {
        ScaleKind::Other
    }
}

/// Autoregressive model `z_t = c + phi_1 z_{t-1} + ... + phi_P z_{t-P} + e_t`
/// fitted by conditional least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// `phi_1..phi_P`; `phi_1` multiplies the most recent lag.
    coefficients: Vec<f64>,
    intercept: f64,
    /// Root mean square of the in-sample one-step residuals.
    innovation_sd: f64,
}

impl ArModel {
    /// Assembles a model from known parameters (mainly for tests and
    /// deserialization paths).
    pub fn new(coefficients: Vec<f64>, intercept: f64, innovation_sd: f64) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite())
            || !intercept.is_finite()
            || !innovation_sd.is_finite()
            || innovation_sd < 0.0
        {
            return Err(Error::InvalidSpec {
                reason: "AR parameters must be finite with non-negative innovation sd".into(),
            });
        }
        Ok(Self {
            coefficients,
            intercept,
            innovation_sd,
        })
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn innovation_sd(&self) -> f64 {
        self.innovation_sd
    }

    /// One-step in-sample residuals on a univariate series.
    pub fn residuals(&self, series: &TimeSeries) -> Result<Vec<f64>> {
        let z = series.column()?;
        let p = self.order();
        if z.len() < p + 1 {
            return Err(Error::SeriesTooShort {
                have: z.len(),
                need: p + 1,
            });
        }
        Ok((p..z.len())
            .map(|t| {
                let mut pred = self.intercept;
                for (i, phi) in self.coefficients.iter().enumerate() {
                    pred += phi * z[t - 1 - i];
                }
                z[t] - pred
            })
            .collect())
    }
}

impl Forecaster for ArModel {
    fn predict(&self, history: &Array2<f64>, horizon: usize) -> Result<Array2<f64>> {
        predict_iterated(self, history, horizon)
    }
}

/// Fits an AR(`order`) model by least squares of `z_t` on its lags plus an
/// intercept. The innovation sd is the RMS of the in-sample residuals.
pub fn fit_ar(train: &TimeSeries, order: usize) -> Result<ArModel> {
    let z = train.column()?;
    if order == 0 {
        return Err(Error::InvalidSpec {
            reason: "AR order must be at least 1".into(),
        });
    }
    if z.len() < order + 2 {
        return Err(Error::SeriesTooShort {
            have: z.len(),
            need: order + 2,
        });
    }
    let n = z.len() - order;
    let k = order + 1;
    let mut x = Array2::zeros((n, k));
    let mut y = vec![0.0; n];
    for (row, t) in (order..z.len()).enumerate() {
        for lag in 0..order {
            x[[row, lag]] = z[t - 1 - lag];
        }
        x[[row, order]] = 1.0;
        y[row] = z[t];
    }
    let beta = least_squares(&x, &y, "AR lag design")?;
    let mut sq = 0.0;
    for (row, &yt) in y.iter().enumerate() {
        let mut pred = beta[order];
        for lag in 0..order {
            pred += beta[lag] * x[[row, lag]];
        }
        sq += (yt - pred) * (yt - pred);
    }
    ArModel::new(
        beta[..order].to_vec(),
        beta[order],
        (sq / n as f64).sqrt(),
    )
}

/// Applies the AR recursion `horizon` times, feeding each prediction back
/// in as a lag. The history is oldest-first.
pub fn predict_iterated(
    model: &ArModel,
    history: &Array2<f64>,
    horizon: usize,
) -> Result<Array2<f64>> {
    if history.ncols() != 1 {
        return Err(Error::MultivariateUnsupported {
            channels: history.ncols(),
        });
    }
    let t = history.nrows();
    let p = model.order();
    if t < p {
        return Err(Error::HistoryTooShort { have: t, need: p });
    }
    // lags[0] is the most recent value.
    let mut lags: Vec<f64> = (0..p).map(|i| history[[t - 1 - i, 0]]).collect();
    let mut out = Array2::zeros((horizon, 1));
    for h in 0..horizon {
        let mut next = model.intercept;
        for (i, phi) in model.coefficients.iter().enumerate() {
            next += phi * lags[i];
        }
        out[[h, 0]] = next;
        lags.rotate_right(1);
        lags[0] = next;
    }
    Ok(out)
}

/// Per-horizon error scales that do not depend on the history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalScale {
    sigmas: Vec<f64>,
    floor: f64,
}

impl GlobalScale {
    pub fn new(sigmas: Vec<f64>, floor: f64) -> Result<Self> {
        if sigmas.is_empty() || sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidSpec {
                reason: "global scales must be finite and strictly positive".into(),
            });
        }
        Ok(Self { sigmas, floor })
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }
}

impl ScaleModel for GlobalScale {
    fn scales(&self, _history: &Array2<f64>, horizon: usize) -> Result<Array2<f64>> {
        if horizon != self.sigmas.len() {
            return Err(Error::ShapeMismatch {
                expected_rows: self.sigmas.len(),
                expected_cols: 1,
                rows: horizon,
                cols: 1,
            });
        }
        Ok(Array2::from_shape_vec((horizon, 1), self.sigmas.clone()).expect("length matches"))
    }

    fn kind(&self) -> ScaleKind {
        ScaleKind::GlobalScale
    }
}

/// One per-horizon linear model of the absolute prediction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearScaleStep {
    /// Weights over the last `n_features` history values, oldest first.
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Per-horizon error scales regressed on the most recent history values;
/// predictions are clamped below at `floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalScale {
    per_step: Vec<LinearScaleStep>,
    n_features: usize,
    floor: f64,
}

impl ConditionalScale {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn per_step(&self) -> &[LinearScaleStep] {
        &self.per_step
    }
}

impl ScaleModel for ConditionalScale {
    fn scales(&self, history: &Array2<f64>, horizon: usize) -> Result<Array2<f64>> {
        if history.ncols() != 1 {
            return Err(Error::MultivariateUnsupported {
                channels: history.ncols(),
            });
        }
        if horizon != self.per_step.len() {
            return Err(Error::ShapeMismatch {
                expected_rows: self.per_step.len(),
                expected_cols: 1,
                rows: horizon,
                cols: 1,
            });
        }
        let t = history.nrows();
        if t < self.n_features {
            return Err(Error::HistoryTooShort {
                have: t,
                need: self.n_features,
            });
        }
        let mut out = Array2::zeros((horizon, 1));
        for (h, step) in self.per_step.iter().enumerate() {
            let mut pred = step.intercept;
            for (f, w) in step.weights.iter().enumerate() {
                pred += w * history[[t - self.n_features + f, 0]];
            }
            out[[h, 0]] = pred.max(self.floor);
        }
        Ok(out)
    }

    fn kind(&self) -> ScaleKind {
        ScaleKind::ConditionalScale
    }
}

/// Step-`j` prediction errors over all stride-1 in-sample windows of the
/// training series: `errors[i][j]` is the step-`j+1` error of window `i`.
fn window_errors<F: Forecaster + ?Sized>(
    forecaster: &F,
    train: &TimeSeries,
    t: usize,
    h: usize,
) -> Result<Vec<Vec<f64>>> {
    let z = train.column()?;
    let len = z.len();
    if len < t + h + 1 {
        return Err(Error::InsufficientWindows {
            have: if len >= t + h { 1 } else { 0 },
            need: 2,
        });
    }
    let n_windows = len - (t + h) + 1;
    let mut errors = Vec::with_capacity(n_windows);
    for i in 0..n_windows {
        let history = Array2::from_shape_vec((t, 1), z[i..i + t].to_vec()).expect("window fits");
        let pred = forecaster.predict(&history, h)?;
        let mut row = Vec::with_capacity(h);
        for j in 0..h {
            row.push(z[i + t + j] - pred[[j, 0]]);
        }
        errors.push(row);
    }
    Ok(errors)
}

/// Fits the global per-horizon scales: the sample standard deviation of the
/// step-`j` error over all stride-1 training windows, clamped at `floor`.
pub fn fit_global_scale<F: Forecaster + ?Sized>(
    forecaster: &F,
    train: &TimeSeries,
    t: usize,
    h: usize,
    floor: f64,
) -> Result<GlobalScale> {
    let errors = window_errors(forecaster, train, t, h)?;
    let n = errors.len() as f64;
    let mut sigmas = Vec::with_capacity(h);
    for j in 0..h {
        let mean = errors.iter().map(|e| e[j]).sum::<f64>() / n;
        let ss = errors.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>();
        sigmas.push((ss / (n - 1.0)).sqrt().max(floor));
    }
    GlobalScale::new(sigmas, floor)
}

/// Fits the conditional per-horizon scales: for each step `j`, least squares
/// of the absolute step-`j` error on the last `n_features` history values
/// plus an intercept.
pub fn fit_conditional_scale<F: Forecaster + ?Sized>(
    forecaster: &F,
    train: &TimeSeries,
    t: usize,
    h: usize,
    n_features: usize,
    floor: f64,
) -> Result<ConditionalScale> {
    if n_features == 0 || n_features > t {
        return Err(Error::InvalidSpec {
            reason: format!("scale features {n_features} must be in 1..={t}"),
        });
    }
    let errors = window_errors(forecaster, train, t, h)?;
    let z = train.column()?;
    let n = errors.len();
    let k = n_features + 1;
    let mut x = Array2::zeros((n, k));
    for (i, row) in x.rows_mut().into_iter().enumerate() {
        let row = row.into_slice().expect("contiguous row");
        // Last n_features values of window i's history, oldest first.
        let start = i + t - n_features;
        row[..n_features].copy_from_slice(&z[start..i + t]);
        row[n_features] = 1.0;
    }
    let mut per_step = Vec::with_capacity(h);
    for j in 0..h {
        let y: Vec<f64> = errors.iter().map(|e| e[j].abs()).collect();
        let beta = least_squares(&x, &y, "conditional scale design")?;
        per_step.push(LinearScaleStep {
            weights: beta[..n_features].to_vec(),
            intercept: beta[n_features],
        });
    }
    Ok(ConditionalScale {
        per_step,
        n_features,
        floor,
    })
}
