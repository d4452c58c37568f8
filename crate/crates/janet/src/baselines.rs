//! Bonferroni, Scheffe, and bootstrap reference methods for the
//! comparison harness.
//!
//! All three wrap the same residual-bootstrap error paths: the fitted AR
//! recursion is replayed forward with resampled in-sample residuals,
//! giving simulated multi-step forecast-error paths whose spread feeds the
//! corrections.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{JointPredictionRegion, RegionMeta, Sidedness};
use crate::error::{Error, Result};
use crate::forecast::{predict_iterated, ArModel};
use crate::series::TimeSeries;
use crate::stats::{chi_square_quantile, normal_quantile};

/// How bootstrap replays draw innovations from the residual pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResampleScheme {
    /// Independent draws with replacement.
    ResidualIid,
    /// Contiguous overlapping blocks of the given length.
    MovingBlock { block_len: usize },
}

/// Bootstrap configuration shared by the baseline constructors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of replays `B`.
    pub n_boot: usize,
    pub seed: u64,
    pub scheme: ResampleScheme,
}

impl BootstrapConfig {
    pub fn new(n_boot: usize, seed: u64) -> Self {
        Self {
            n_boot,
            seed,
            scheme: ResampleScheme::ResidualIid,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_boot == 0 {
            return Err(Error::InvalidSpec {
                reason: "bootstrap needs at least one replay".into(),
            });
        }
        if let ResampleScheme::MovingBlock { block_len } = self.scheme {
            if block_len == 0 {
                return Err(Error::InvalidSpec {
                    reason: "moving-block length must be at least 1".into(),
                });
            }
        }
        Ok(())
    }
}

/// splitmix64 step, used to derive independent per-replay RNG streams from
/// `(seed, replay index)` so results do not depend on execution order.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_innovations(
    pool: &[f64],
    count: usize,
    scheme: ResampleScheme,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut innov = Vec::with_capacity(count);
    match scheme {
        ResampleScheme::ResidualIid => {
            for _ in 0..count {
                innov.push(pool[rng.gen_range(0..pool.len())]);
            }
        }
        ResampleScheme::MovingBlock { block_len } => {
            let starts = pool.len().saturating_sub(block_len) + 1;
            while innov.len() < count {
                let s = rng.gen_range(0..starts);
                let take = block_len.min(pool.len() - s).min(count - innov.len());
                innov.extend_from_slice(&pool[s..s + take]);
            }
        }
    }
    innov
}

/// Simulated H-step forecast-error paths anchored at the last `t` rows of
/// the training series.
///
/// Each replay regenerates a training-length bootstrap series from the
/// fitted recursion with resampled residuals, refits the model on it, and
/// then contrasts a fresh future path under the original fit with the
/// refitted model's forecast. The refit step carries parameter-estimation
/// error into the paths; without it the intervals run systematically
/// narrow.
pub fn bootstrap_error_paths(
    model: &ArModel,
    train: &TimeSeries,
    t: usize,
    horizon: usize,
    cfg: &BootstrapConfig,
) -> Result<Vec<Vec<f64>>> {
    let z = train.column()?;
    if t < model.order() || t > z.len() {
        return Err(Error::HistoryTooShort {
            have: t.min(z.len()),
            need: model.order(),
        });
    }
    let anchor = Array2::from_shape_vec((t, 1), z[z.len() - t..].to_vec()).expect("anchor fits");
    bootstrap_error_paths_at(model, train, &anchor, horizon, cfg)
}

/// As [`bootstrap_error_paths`], anchored at an explicit history.
fn bootstrap_error_paths_at(
    model: &ArModel,
    train: &TimeSeries,
    anchor: &Array2<f64>,
    horizon: usize,
    cfg: &BootstrapConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let z = train.column()?;
    let pool = model.residuals(train)?;
    if pool.len() < 2 {
        return Err(Error::InsufficientWindows {
            have: pool.len(),
            need: 2,
        });
    }
    let order = model.order();
    let t = anchor.nrows();
    if t < order {
        return Err(Error::HistoryTooShort {
            have: t,
            need: order,
        });
    }
    let phi = model.coefficients();

    let mut paths = Vec::with_capacity(cfg.n_boot);
    for b in 0..cfg.n_boot {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, b as u64));

        // Bootstrap training series: observed initial lags, then the fitted
        // recursion driven by resampled residuals.
        let series_innov = draw_innovations(&pool, z.len() - order, cfg.scheme, &mut rng);
        let mut boot_series = Vec::with_capacity(z.len());
        boot_series.extend_from_slice(&z[..order]);
        for (i, e) in series_innov.iter().enumerate() {
            let mut next = model.intercept() + e;
            for (m, p) in phi.iter().enumerate() {
                next += p * boot_series[order + i - 1 - m];
            }
            boot_series.push(next);
        }
        let refit = TimeSeries::univariate(&boot_series)
            .and_then(|s| crate::forecast::fit_ar(&s, order))
            .unwrap_or_else(|_| model.clone());

        // Future truth under the original fit, forecast under the refit.
        let future_innov = draw_innovations(&pool, horizon, cfg.scheme, &mut rng);
        let mut truth = Vec::with_capacity(horizon);
        let mut lags: Vec<f64> = (0..order).map(|i| anchor[[t - 1 - i, 0]]).collect();
        for e in &future_innov {
            let mut next = model.intercept() + e;
            for (m, p) in phi.iter().enumerate() {
                next += p * lags[m];
            }
            truth.push(next);
            lags.rotate_right(1);
            lags[0] = next;
        }
        let forecast = predict_iterated(&refit, &anchor, horizon)?;
        paths.push(
            (0..horizon)
                .map(|h| truth[h] - forecast[[h, 0]])
                .collect(),
        );
    }
    Ok(paths)
}

/// Per-step root-mean-square of the bootstrap error paths (spread about
/// zero, so a single replay reports its own absolute deviations).
pub fn bootstrap_error_sd(
    model: &ArModel,
    train: &TimeSeries,
    t: usize,
    horizon: usize,
    cfg: &BootstrapConfig,
) -> Result<Vec<f64>> {
    let paths = bootstrap_error_paths(model, train, t, horizon, cfg)?;
    Ok(paths_rms(&paths, horizon))
}

/// The H x H covariance (about zero) of the bootstrap error paths; feeds
/// the Scheffe band.
pub fn bootstrap_error_covariance(
    model: &ArModel,
    train: &TimeSeries,
    t: usize,
    horizon: usize,
    cfg: &BootstrapConfig,
) -> Result<Array2<f64>> {
    let paths = bootstrap_error_paths(model, train, t, horizon, cfg)?;
    let b = paths.len() as f64;
    let mut cov = Array2::zeros((horizon, horizon));
    for p in &paths {
        for i in 0..horizon {
            for j in i..horizon {
                cov[[i, j]] += p[i] * p[j] / b;
            }
        }
    }
    for i in 0..horizon {
        for j in 0..i {
            cov[[i, j]] = cov[[j, i]];
        }
    }
    Ok(cov)
}

fn paths_rms(paths: &[Vec<f64>], horizon: usize) -> Vec<f64> {
    let b = paths.len() as f64;
    (0..horizon)
        .map(|h| (paths.iter().map(|p| p[h] * p[h]).sum::<f64>() / b).sqrt())
        .collect()
}

fn region_from_half_widths(
    center: &Array2<f64>,
    half: &[f64],
    epsilon: f64,
    k: usize,
    q: f64,
) -> JointPredictionRegion {
    let h = center.nrows();
    let mut lower = center.clone();
    let mut upper = center.clone();
    for i in 0..h {
        lower[[i, 0]] -= half[i];
        upper[[i, 0]] += half[i];
    }
    JointPredictionRegion {
        lower,
        center: center.clone(),
        upper,
        meta: RegionMeta {
            epsilon,
            k,
            sidedness: Sidedness::TwoSided,
            q_lower: q,
            q_upper: q,
        },
    }
}

/// Bonferroni-corrected per-step Gaussian intervals:
/// `center_h +- z_{1 - eps/(2H)} * sd_h`.
pub fn bonferroni_jpr(
    center: &Array2<f64>,
    per_step_sd: &[f64],
    epsilon: f64,
) -> Result<JointPredictionRegion> {
    let h = center.nrows();
    if per_step_sd.len() != h || center.ncols() != 1 {
        return Err(Error::ShapeMismatch {
            expected_rows: h,
            expected_cols: 1,
            rows: per_step_sd.len(),
            cols: center.ncols(),
        });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange { epsilon });
    }
    if per_step_sd.iter().any(|s| *s < 0.0 || !s.is_finite()) {
        return Err(Error::InvalidSpec {
            reason: "per-step sds must be finite and non-negative".into(),
        });
    }
    let z = normal_quantile(1.0 - epsilon / (2.0 * h as f64));
    let half: Vec<f64> = per_step_sd.iter().map(|s| z * s).collect();
    Ok(region_from_half_widths(center, &half, epsilon, 1, z))
}

/// Scheffe path band: the step-`h` half-width is
/// `sqrt(chi2_{h, 1-eps} * cov[h][h])`, the Cauchy-Schwarz projection of
/// the first `h` whitened error coordinates. Each step then carries at
/// least `1 - eps` marginal coverage (exactly at `h = 1`, where the band
/// coincides with the Gaussian interval).
pub fn scheffe_jpr(
    center: &Array2<f64>,
    error_covariance: &Array2<f64>,
    epsilon: f64,
) -> Result<JointPredictionRegion> {
    let h = center.nrows();
    if error_covariance.dim() != (h, h) || center.ncols() != 1 {
        return Err(Error::ShapeMismatch {
            expected_rows: h,
            expected_cols: h,
            rows: error_covariance.nrows(),
            cols: error_covariance.ncols(),
        });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange { epsilon });
    }
    check_positive_semidefinite(error_covariance)?;
    let mut half = Vec::with_capacity(h);
    for step in 0..h {
        let chi = chi_square_quantile(1.0 - epsilon, step + 1);
        half.push((chi * error_covariance[[step, step]]).sqrt());
    }
    let q = chi_square_quantile(1.0 - epsilon, h).sqrt();
    Ok(region_from_half_widths(center, &half, epsilon, 1, q))
}

/// Symmetry plus a tolerant Cholesky factorization.
fn check_positive_semidefinite(m: &Array2<f64>) -> Result<()> {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[[i, i]].abs()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-8 * scale.max(1e-300) {
                return Err(Error::NotPositiveSemidefinite);
            }
        }
    }
    if scale == 0.0 {
        return Ok(()); // the zero matrix is PSD
    }
    let mut a = m.clone();
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in i..n {
            let mut sum = a[[i, j]];
            for k in 0..i {
                sum -= a[[k, i]] * a[[k, j]];
            }
            if i == j {
                if sum < -tol {
                    return Err(Error::NotPositiveSemidefinite);
                }
                a[[i, i]] = sum.max(0.0).sqrt();
            } else if a[[i, i]] > tol.sqrt() {
                a[[i, j]] = sum / a[[i, i]];
            } else {
                // Zero pivot: remaining entries in this row must vanish too.
                if sum.abs() > tol.sqrt() * scale.sqrt() {
                    return Err(Error::NotPositiveSemidefinite);
                }
                a[[i, j]] = 0.0;
            }
        }
    }
    Ok(())
}

/// Bootstrap joint prediction region: each replay's absolute error path is
/// scaled by the per-step bootstrap sds and reduced by K-max; the
/// `ceil((1-eps) B)`-th smallest score scales the region.
pub fn bootstrap_jpr(
    model: &ArModel,
    train: &TimeSeries,
    history: &Array2<f64>,
    horizon: usize,
    epsilon: f64,
    k: usize,
    cfg: &BootstrapConfig,
) -> Result<JointPredictionRegion> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange { epsilon });
    }
    if k == 0 || k > horizon {
        return Err(Error::KOutOfRange { k, len: horizon });
    }
    let paths = bootstrap_error_paths_at(model, train, history, horizon, cfg)?;
    let sds = paths_rms(&paths, horizon);
    let mut scores = Vec::with_capacity(paths.len());
    for p in &paths {
        let scaled: Vec<f64> = p
            .iter()
            .zip(&sds)
            .map(|(d, s)| if *s > 0.0 { d.abs() / s } else { 0.0 })
            .collect();
        scores.push(crate::conformal::k_max(&scaled, k)?);
    }
    let b = scores.len();
    let rank = (((1.0 - epsilon) * b as f64).ceil() as usize).clamp(1, b);
    scores.sort_by(f64::total_cmp);
    let q = scores[rank - 1];

    let center = predict_iterated(model, history, horizon)?;
    let half: Vec<f64> = sds.iter().map(|s| q * s).collect();
    Ok(region_from_half_widths(&center, &half, epsilon, k, q))
}
