//! Monte Carlo data generation, experiment orchestration, and
//! coverage/width metrics.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    bonferroni_jpr, bootstrap_error_covariance, bootstrap_error_sd, bootstrap_jpr,
    derive_seed, BootstrapConfig, ResampleScheme,
};
use crate::conformal::{
    build_jpr, calibrate_single, check_coverage, CalibrationSettings, JointPredictionRegion,
};
use crate::error::{Error, Result};
use crate::forecast::{
    fit_ar, fit_conditional_scale, fit_global_scale, predict_iterated, ScaleModel,
    DEFAULT_SCALE_FEATURES, DEFAULT_SCALE_FLOOR,
};
use crate::permute::nob_group;
use crate::series::{rolling_windows, split_series, SeriesSplit, TimeSeries};

/// AR(2) data-generating process `z_t = phi1 z_{t-1} + phi2 z_{t-2} + e_t`
/// with Gaussian innovations; the first `burn_in` draws are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar2Dgp {
    pub phi1: f64,
    pub phi2: f64,
    pub innovation_sd: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for Ar2Dgp {
    fn default() -> Self {
        Self {
            phi1: 1.25,
            phi2: -0.75,
            innovation_sd: 1.0,
            burn_in: 200,
            seed: 0,
        }
    }
}

impl Ar2Dgp {
    /// Checks the AR(2) stationarity triangle.
    pub fn validate(&self) -> Result<()> {
        let (p1, p2) = (self.phi1, self.phi2);
        if !(p2 > -1.0 && p1 + p2 < 1.0 && p2 - p1 < 1.0) {
            return Err(Error::NonStationaryParameters { phi1: p1, phi2: p2 });
        }
        if !(self.innovation_sd >= 0.0 && self.innovation_sd.is_finite()) {
            return Err(Error::InvalidSpec {
                reason: format!("innovation sd {} must be finite and >= 0", self.innovation_sd),
            });
        }
        Ok(())
    }
}

/// Simulates the AR(2) process, fully determined by the seed.
pub fn simulate_ar2(dgp: &Ar2Dgp, length: usize) -> Result<TimeSeries> {
    dgp.validate()?;
    if length == 0 {
        return Err(Error::InvalidSpec {
            reason: "simulated length must be at least 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(dgp.seed);
    let (mut z1, mut z2) = (0.0, 0.0);
    let mut out = Vec::with_capacity(length);
    for i in 0..dgp.burn_in + length {
        let e: f64 = rng.sample::<f64, _>(StandardNormal) * dgp.innovation_sd;
        let z = dgp.phi1 * z1 + dgp.phi2 * z2 + e;
        z2 = z1;
        z1 = z;
        if i >= dgp.burn_in {
            out.push(z);
        }
    }
    TimeSeries::univariate(&out)
}

/// Region construction method under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Conditional (history-dependent) scaling.
    Janet,
    /// Global per-horizon scaling.
    JanetStar,
    Bootstrap,
    Bonferroni,
    Scheffe,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Bonferroni,
        Method::Scheffe,
        Method::Bootstrap,
        Method::JanetStar,
        Method::Janet,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Janet => "janet",
            Method::JanetStar => "janet_star",
            Method::Bootstrap => "bootstrap",
            Method::Bonferroni => "bonferroni",
            Method::Scheffe => "scheffe",
        }
    }

    /// Whether the method supports tolerances K > 1.
    pub fn supports_k(&self) -> bool {
        matches!(self, Method::Janet | Method::JanetStar | Method::Bootstrap)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "janet" => Ok(Method::Janet),
            "janet_star" | "janet*" => Ok(Method::JanetStar),
            "bootstrap" => Ok(Method::Bootstrap),
            "bonferroni" => Ok(Method::Bonferroni),
            "scheffe" => Ok(Method::Scheffe),
            other => Err(Error::InvalidSpec {
                reason: format!(
                    "unknown method {other:?}; valid: janet, janet_star, bootstrap, bonferroni, scheffe"
                ),
            }),
        }
    }
}

/// One Monte Carlo experiment: a method evaluated over `n_sims` simulated
/// series at fixed `(epsilon, K, H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub method: Method,
    pub epsilon: f64,
    pub k: usize,
    pub horizon: usize,
    /// History length `T` fed to the forecaster.
    pub history_len: usize,
    pub ar_order: usize,
    pub n_scale_features: usize,
    /// Total simulated length including the held-out final `(T, H)` window.
    pub series_length: usize,
    /// Fraction of the pre-test body assigned to training.
    pub split_fraction: f64,
    pub block_size: usize,
    pub n_sims: usize,
    pub n_boot: usize,
    pub seed: u64,
    pub phi1: f64,
    pub phi2: f64,
    pub innovation_sd: f64,
    pub burn_in: usize,
    pub exclude_wrap: bool,
}

impl ExperimentSpec {
    /// A spec with the default DGP and split settings.
    pub fn new(
        method: Method,
        epsilon: f64,
        k: usize,
        horizon: usize,
        n_sims: usize,
        seed: u64,
    ) -> Self {
        let history_len = DEFAULT_SCALE_FEATURES;
        Self {
            method,
            epsilon,
            k,
            horizon,
            history_len,
            ar_order: 2,
            n_scale_features: DEFAULT_SCALE_FEATURES,
            series_length: 600 + history_len + horizon,
            split_fraction: 0.5,
            block_size: 1,
            n_sims,
            n_boot: 1000,
            seed,
            phi1: 1.25,
            phi2: -0.75,
            innovation_sd: 1.0,
            burn_in: 200,
            exclude_wrap: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_sims == 0 {
            return Err(Error::EmptySpec);
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::EpsilonOutOfRange {
                epsilon: self.epsilon,
            });
        }
        if self.k == 0 || self.k > self.horizon {
            return Err(Error::KOutOfRange {
                k: self.k,
                len: self.horizon,
            });
        }
        if !self.method.supports_k() && self.k != 1 {
            return Err(Error::InvalidSpec {
                reason: format!("{} only controls K = 1", self.method.as_str()),
            });
        }
        if self.history_len < self.ar_order {
            return Err(Error::InvalidSpec {
                reason: format!(
                    "history length {} is shorter than the AR order {}",
                    self.history_len, self.ar_order
                ),
            });
        }
        if self.series_length <= self.history_len + self.horizon {
            return Err(Error::InvalidSpec {
                reason: "series length leaves no room before the test window".into(),
            });
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidSpec {
                reason: format!("split fraction {} must be in (0, 1)", self.split_fraction),
            });
        }
        self.dgp(self.seed).validate()
    }

    fn dgp(&self, seed: u64) -> Ar2Dgp {
        Ar2Dgp {
            phi1: self.phi1,
            phi2: self.phi2,
            innovation_sd: self.innovation_sd,
            burn_in: self.burn_in,
            seed,
        }
    }

    fn method_params(&self) -> MethodParams {
        MethodParams {
            method: self.method,
            epsilon: self.epsilon,
            k: self.k,
            horizon: self.horizon,
            history_len: self.history_len,
            ar_order: self.ar_order,
            n_scale_features: self.n_scale_features,
            block_size: self.block_size,
            n_boot: self.n_boot,
            exclude_wrap: self.exclude_wrap,
        }
    }
}

/// Per-simulation verdict and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub covered: bool,
    pub misses: usize,
    pub geo_width: f64,
}

/// Aggregated experiment output. Wall time is informational and excluded
/// from equality so that identical specs compare equal.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub empirical_coverage: f64,
    pub mean_geo_width: f64,
    pub outcomes: Vec<SimOutcome>,
    pub wall_time_secs: f64,
}

impl PartialEq for ExperimentResult {
    fn eq(&self, other: &Self) -> bool {
        self.empirical_coverage == other.empirical_coverage
            && self.mean_geo_width == other.mean_geo_width
            && self.outcomes == other.outcomes
    }
}

/// Method parameters shared by the Monte Carlo and windowed evaluations.
struct MethodParams {
    method: Method,
    epsilon: f64,
    k: usize,
    horizon: usize,
    history_len: usize,
    ar_order: usize,
    n_scale_features: usize,
    block_size: usize,
    n_boot: usize,
    exclude_wrap: bool,
}

/// Fits, calibrates, and builds the region for one split/test-history pair.
fn build_region(
    p: &MethodParams,
    split: &SeriesSplit,
    test_history: &Array2<f64>,
    boot_seed: u64,
) -> Result<JointPredictionRegion> {
    let model = fit_ar(&split.train, p.ar_order)?;
    let center = predict_iterated(&model, test_history, p.horizon)?;
    let settings = CalibrationSettings::new(p.epsilon, p.k).with_exclude_wrap(p.exclude_wrap);
    match p.method {
        Method::JanetStar => {
            let scale = fit_global_scale(
                &model,
                &split.train,
                p.history_len,
                p.horizon,
                DEFAULT_SCALE_FLOOR,
            )?;
            let group = nob_group(split.calibration.len(), p.block_size)?;
            let cal = calibrate_single(
                split, &group, &model, &scale, p.history_len, p.horizon, &settings,
            )?;
            let sigma = scale.scales(test_history, p.horizon)?;
            build_jpr(&center, &sigma, &cal)
        }
        Method::Janet => {
            let scale = fit_conditional_scale(
                &model,
                &split.train,
                p.history_len,
                p.horizon,
                p.n_scale_features,
                DEFAULT_SCALE_FLOOR,
            )?;
            let group = nob_group(split.calibration.len(), p.block_size)?;
            let cal = calibrate_single(
                split, &group, &model, &scale, p.history_len, p.horizon, &settings,
            )?;
            let sigma = scale.scales(test_history, p.horizon)?;
            build_jpr(&center, &sigma, &cal)
        }
        Method::Bootstrap => {
            let cfg = BootstrapConfig {
                n_boot: p.n_boot,
                seed: boot_seed,
                scheme: ResampleScheme::ResidualIid,
            };
            bootstrap_jpr(
                &model,
                &split.train,
                test_history,
                p.horizon,
                p.epsilon,
                p.k,
                &cfg,
            )
        }
        Method::Bonferroni => {
            let cfg = BootstrapConfig::new(p.n_boot, boot_seed);
            let sds = bootstrap_error_sd(&model, &split.train, p.history_len, p.horizon, &cfg)?;
            bonferroni_jpr(&center, &sds, p.epsilon)
        }
        Method::Scheffe => {
            let cfg = BootstrapConfig::new(p.n_boot, boot_seed);
            let cov = bootstrap_error_covariance(&model, &split.train, p.history_len, p.horizon, &cfg)?;
            crate::baselines::scheffe_jpr(&center, &cov, p.epsilon)
        }
    }
}

/// Runs one Monte Carlo experiment. Per-simulation RNG streams derive from
/// `(seed, sim index)`, so results are independent of scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    let params = spec.method_params();
    let t = spec.history_len;
    let h = spec.horizon;
    let body_len = spec.series_length - (t + h);
    let l_tr = (spec.split_fraction * body_len as f64).round() as usize;

    let mut outcomes = Vec::with_capacity(spec.n_sims);
    for sim in 0..spec.n_sims {
        let sim_seed = derive_seed(spec.seed, sim as u64);
        let run = || -> Result<SimOutcome> {
            let series = simulate_ar2(&spec.dgp(sim_seed), spec.series_length)?;
            let body = series.slice_rows(0, body_len)?;
            let split = split_series(&body, l_tr, t, h)?;
            let test_history = series
                .values()
                .slice(ndarray::s![body_len..body_len + t, ..])
                .to_owned();
            let truth = series
                .values()
                .slice(ndarray::s![body_len + t.., ..])
                .to_owned();
            let region = build_region(&params, &split, &test_history, derive_seed(sim_seed, 1))?;
            let verdict = check_coverage(&region, &truth)?;
            Ok(SimOutcome {
                covered: verdict.covered_at_k,
                misses: verdict.misses,
                geo_width: region.geometric_mean_width(),
            })
        };
        outcomes.push(run().map_err(|e| Error::SimulationFailed {
            sim,
            seed: sim_seed,
            source: Box::new(e),
        })?);
    }

    let n = outcomes.len() as f64;
    let coverage = outcomes.iter().filter(|o| o.covered).count() as f64 / n;
    let mean_width = outcomes.iter().map(|o| o.geo_width).sum::<f64>() / n;
    Ok(ExperimentResult {
        empirical_coverage: coverage,
        mean_geo_width: mean_width,
        outcomes,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Maps [`run_experiment`] over the specs, optionally on a worker pool.
/// Results are collected in spec order, so output is identical for any
/// worker count; per-spec failures are recorded and the grid continues.
pub fn run_grid(specs: &[ExperimentSpec], workers: usize) -> Vec<Result<ExperimentResult>> {
    if workers <= 1 || specs.len() <= 1 {
        return specs.iter().map(run_experiment).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool construction");
    pool.install(|| {
        use rayon::prelude::*;
        specs.par_iter().map(run_experiment).collect()
    })
}

/// The full comparison grid behind the `paper-mc` preset: three
/// significance levels, five methods, horizons {6, 12, 18, 24}, K in
/// {1, 2, 3} where the method supports it (132 specs in total). All specs
/// share the master seed so simulations pair across cells.
pub fn paper_grid(n_sims: usize, seed: u64) -> Vec<ExperimentSpec> {
    let mut specs = Vec::new();
    for &epsilon in &[0.1, 0.2, 0.3] {
        for method in Method::ALL {
            let ks: &[usize] = if method.supports_k() { &[1, 2, 3] } else { &[1] };
            for &k in ks {
                for &h in &[6usize, 12, 18, 24] {
                    specs.push(ExperimentSpec::new(method, epsilon, k, h, n_sims, seed));
                }
            }
        }
    }
    specs
}

/// Renders grid results as CSV. Failed cells are skipped (callers get them
/// from the result vector); successful rows appear in spec order.
pub fn grid_results_csv(specs: &[ExperimentSpec], results: &[Result<ExperimentResult>]) -> String {
    let mut out = String::from("method,epsilon,k,h,coverage,mean_geo_width,n_sims,seed\n");
    for (spec, result) in specs.iter().zip(results) {
        if let Ok(r) = result {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                spec.method.as_str(),
                spec.epsilon,
                spec.k,
                spec.horizon,
                r.empirical_coverage,
                r.mean_geo_width,
                spec.n_sims,
                spec.seed
            ));
        }
    }
    out
}

/// Configuration for the rolling real-data protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedEvalConfig {
    pub method: Method,
    pub epsilon: f64,
    pub k: usize,
    /// Forecast horizon checked at the end of each window.
    pub horizon: usize,
    /// Total rows per evaluation window, including the `horizon` truth rows.
    pub window: usize,
    pub history_len: usize,
    pub ar_order: usize,
    pub n_scale_features: usize,
    pub split_fraction: f64,
    pub block_size: usize,
    pub n_boot: usize,
    pub seed: u64,
    pub exclude_wrap: bool,
}

impl WindowedEvalConfig {
    pub fn new(method: Method, epsilon: f64, k: usize, window: usize, horizon: usize) -> Self {
        Self {
            method,
            epsilon,
            k,
            horizon,
            window,
            history_len: DEFAULT_SCALE_FEATURES,
            ar_order: 2,
            n_scale_features: DEFAULT_SCALE_FEATURES,
            split_fraction: 0.5,
            block_size: 1,
            n_boot: 1000,
            seed: 0,
            exclude_wrap: false,
        }
    }
}

/// Rolling evaluation on real data: stride-1 windows of `window` rows; the
/// prefix (all but the final `horizon` rows) is split train/calibration, a
/// region is built for the next `horizon` values, and coverage is checked
/// against them.
pub fn windowed_real_data_eval(
    series: &TimeSeries,
    cfg: &WindowedEvalConfig,
) -> Result<ExperimentResult> {
    if cfg.window <= cfg.horizon {
        return Err(Error::InvalidSpec {
            reason: format!(
                "window {} must exceed the horizon {}",
                cfg.window, cfg.horizon
            ),
        });
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange {
            epsilon: cfg.epsilon,
        });
    }
    let start = Instant::now();
    let t = cfg.history_len;
    let h = cfg.horizon;
    let prefix_len = cfg.window - h;
    let l_tr = (cfg.split_fraction * prefix_len as f64).round() as usize;
    let params = MethodParams {
        method: cfg.method,
        epsilon: cfg.epsilon,
        k: cfg.k,
        horizon: h,
        history_len: t,
        ar_order: cfg.ar_order,
        n_scale_features: cfg.n_scale_features,
        block_size: cfg.block_size,
        n_boot: cfg.n_boot,
        exclude_wrap: cfg.exclude_wrap,
    };

    let windows = rolling_windows(series, cfg.window, 1)?;
    let mut outcomes = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        let prefix = w.slice_rows(0, prefix_len)?;
        let split = split_series(&prefix, l_tr, t, h)?;
        let test_history = prefix
            .values()
            .slice(ndarray::s![prefix_len - t.., ..])
            .to_owned();
        let truth = w.values().slice(ndarray::s![prefix_len.., ..]).to_owned();
        let region = build_region(&params, &split, &test_history, derive_seed(cfg.seed, i as u64))?;
        let verdict = check_coverage(&region, &truth)?;
        outcomes.push(SimOutcome {
            covered: verdict.covered_at_k,
            misses: verdict.misses,
            geo_width: region.geometric_mean_width(),
        });
    }

    let n = outcomes.len() as f64;
    let coverage = outcomes.iter().filter(|o| o.covered).count() as f64 / n;
    let mean_width = outcomes.iter().map(|o| o.geo_width).sum::<f64>() / n;
    Ok(ExperimentResult {
        empirical_coverage: coverage,
        mean_geo_width: mean_width,
        outcomes,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
