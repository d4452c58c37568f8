//! Non-conformity scores, quantile inversion, randomized p-values, and
//! joint prediction region construction.
//!
//! Units (panel members or block rotations of a single calibration series)
//! are reduced to one scalar score each: the K-th largest scaled residual
//! across the horizon and channels. Inverting the empirical quantile of
//! those scores yields the multiplier that scales per-step intervals into a
//! region controlling the K-familywise error at the requested level.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{Forecaster, ScaleKind, ScaleModel};
use crate::permute::PermutationGroup;
use crate::series::{HistoryTargetPair, SeriesSplit, TimeSeries};

/// How a residual enters the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreVariant {
    /// `|y - yhat| / sigma`
    Abs,
    /// `(y - yhat) / sigma` — large when the truth exceeds the forecast.
    SignedPlus,
    /// `(yhat - y) / sigma` — large when the truth falls below the forecast.
    SignedMinus,
}

/// Which sides of the region are bounded.
///
/// Lower-bounded regions calibrate on [`ScoreVariant::SignedMinus`] scores
/// (they fail when the truth drops below the bound) and upper-bounded
/// regions on [`ScoreVariant::SignedPlus`]; asymmetric regions run both
/// calibrations with `epsilon_plus + epsilon_minus = epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Sidedness {
    TwoSided,
    Lower,
    Upper,
    Asymmetric { epsilon_plus: f64, epsilon_minus: f64 },
}

/// Calibration parameters shared by the panel and single-series paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub epsilon: f64,
    pub k: usize,
    pub sidedness: Sidedness,
    /// Drop rotation windows that cross the rotation seam.
    pub exclude_wrap: bool,
}

impl CalibrationSettings {
    pub fn new(epsilon: f64, k: usize) -> Self {
        Self {
            epsilon,
            k,
            sidedness: Sidedness::TwoSided,
            exclude_wrap: false,
        }
    }

    pub fn with_sidedness(mut self, sidedness: Sidedness) -> Self {
        self.sidedness = sidedness;
        self
    }

    pub fn with_exclude_wrap(mut self, exclude_wrap: bool) -> Self {
        self.exclude_wrap = exclude_wrap;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::EpsilonOutOfRange {
                epsilon: self.epsilon,
            });
        }
        if let Sidedness::Asymmetric {
            epsilon_plus,
            epsilon_minus,
        } = self.sidedness
        {
            if epsilon_plus <= 0.0
                || epsilon_minus <= 0.0
                || (epsilon_plus + epsilon_minus - self.epsilon).abs() > 1e-9
            {
                return Err(Error::AsymmetricSplitMismatch {
                    eps_plus: epsilon_plus,
                    eps_minus: epsilon_minus,
                    epsilon: self.epsilon,
                });
            }
        }
        Ok(())
    }
}

/// One unit's scalar non-conformity score plus the per-step scaled
/// residuals it summarizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonconformityRecord {
    /// The K-th largest entry of `per_step`.
    pub score: f64,
    /// Scaled residuals, horizon-major (all channels of step 1, then
    /// step 2, ...), already transformed by `variant`.
    pub per_step: Vec<f64>,
    /// Permutation index `j` or panel unit index.
    pub unit_id: usize,
    pub variant: ScoreVariant,
}

/// Result of a calibration pass: the score records and the inverted
/// quantile multipliers for each bounded side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutput {
    pub records: Vec<NonconformityRecord>,
    pub epsilon: f64,
    pub k: usize,
    pub sidedness: Sidedness,
    pub scale_kind: ScaleKind,
    /// Multiplier for the lower offsets; `+inf` leaves the side unbounded.
    #[serde(with = "serde_extended_f64")]
    pub q_lower: f64,
    /// Multiplier for the upper offsets; `+inf` leaves the side unbounded.
    #[serde(with = "serde_extended_f64")]
    pub q_upper: f64,
}

impl CalibrationOutput {
    /// Number of calibration units scored (permutations or panel units).
    pub fn n_units(&self) -> usize {
        match self.sidedness {
            // Asymmetric runs keep one plus and one minus record per unit.
            Sidedness::Asymmetric { .. } => self.records.len() / 2,
            _ => self.records.len(),
        }
    }

    /// The shared quantile of a symmetric calibration.
    pub fn q(&self) -> f64 {
        match self.sidedness {
            Sidedness::TwoSided => self.q_lower,
            Sidedness::Lower => self.q_lower,
            Sidedness::Upper => self.q_upper,
            Sidedness::Asymmetric { .. } => f64::max(self.q_lower, self.q_upper),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration output serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ParseError {
            row: 0,
            col: 0,
            message: format!("calibration JSON: {e}"),
        })
    }
}

/// Serializes possibly infinite quantiles as the strings "inf"/"-inf"
/// (JSON numbers cannot carry infinities).
mod serde_extended_f64 {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            ser.serialize_f64(*v)
        } else if *v > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(D::Error::custom(format!("not a float token: {other}"))),
            },
        }
    }
}

/// Region metadata carried alongside the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionMeta {
    pub epsilon: f64,
    pub k: usize,
    pub sidedness: Sidedness,
    #[serde(with = "serde_extended_f64")]
    pub q_lower: f64,
    #[serde(with = "serde_extended_f64")]
    pub q_upper: f64,
}

/// A Cartesian product of per-step intervals around the point forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPredictionRegion {
    pub lower: Array2<f64>,
    pub center: Array2<f64>,
    pub upper: Array2<f64>,
    pub meta: RegionMeta,
}

impl JointPredictionRegion {
    pub fn horizon(&self) -> usize {
        self.center.nrows()
    }

    pub fn channels(&self) -> usize {
        self.center.ncols()
    }

    /// Geometric mean of the interval widths across all steps and channels.
    pub fn geometric_mean_width(&self) -> f64 {
        let n = (self.horizon() * self.channels()) as f64;
        let log_sum: f64 = self
            .lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| (u - l).ln())
            .sum();
        (log_sum / n).exp()
    }

    /// CSV rows `step,channel,lower,center,upper` (1-based indices,
    /// infinities as `inf`/`-inf`).
    pub fn to_csv_string(&self) -> String {
        use crate::series::fmt_f64;
        let mut out = String::from("step,channel,lower,center,upper\n");
        for h in 0..self.horizon() {
            for c in 0..self.channels() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    h + 1,
                    c + 1,
                    fmt_f64(self.lower[[h, c]]),
                    fmt_f64(self.center[[h, c]]),
                    fmt_f64(self.upper[[h, c]])
                ));
            }
        }
        out
    }
}

/// Outcome of checking a region against a realized trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageVerdict {
    /// Entries strictly outside `[lower, upper]`.
    pub misses: usize,
    /// True when fewer than K entries miss.
    pub covered_at_k: bool,
}

/// The k-th largest element (duplicates counted with multiplicity).
pub fn k_max(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::KOutOfRange {
            k,
            len: values.len(),
        });
    }
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    Ok(*kth)
}

/// The floor(eps * (m + 1))-th largest score, or `+inf` when that index
/// is zero (the maximally conservative region).
pub fn invert_quantile(scores: &[f64], epsilon: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange { epsilon });
    }
    let m = scores.len();
    let r = (epsilon * (m + 1) as f64).floor() as usize;
    if r == 0 {
        return Ok(f64::INFINITY);
    }
    k_max(scores, r)
}

/// Fraction of group scores at least as large as the identity-permutation
/// score. The score list must include the identity term itself.
pub fn randomized_p_value(test_score: f64, permuted_scores: &[f64]) -> f64 {
    assert!(
        !permuted_scores.is_empty(),
        "p-value needs at least one score"
    );
    let hits = permuted_scores
        .iter()
        .filter(|s| **s >= test_score)
        .count();
    hits as f64 / permuted_scores.len() as f64
}

/// Signed scaled residuals `(y - yhat) / sigma` of one unit, flattened
/// horizon-major.
fn scaled_signed_residuals<F, S>(
    pair: &HistoryTargetPair,
    forecaster: &F,
    scale: &S,
) -> Result<Vec<f64>>
where
    F: Forecaster + ?Sized,
    S: ScaleModel + ?Sized,
{
    let h = pair.horizon();
    let p = pair.channels();
    let center = forecaster.predict(&pair.history, h)?;
    if center.dim() != (h, p) {
        return Err(Error::ShapeMismatch {
            expected_rows: h,
            expected_cols: p,
            rows: center.nrows(),
            cols: center.ncols(),
        });
    }
    let sigma = scale.scales(&pair.history, h)?;
    if sigma.dim() != (h, p) {
        return Err(Error::ShapeMismatch {
            expected_rows: h,
            expected_cols: p,
            rows: sigma.nrows(),
            cols: sigma.ncols(),
        });
    }
    let mut out = Vec::with_capacity(h * p);
    for step in 0..h {
        for chan in 0..p {
            out.push((pair.target[[step, chan]] - center[[step, chan]]) / sigma[[step, chan]]);
        }
    }
    Ok(out)
}

fn apply_variant(signed: &[f64], variant: ScoreVariant) -> Vec<f64> {
    signed
        .iter()
        .map(|r| match variant {
            ScoreVariant::Abs => r.abs(),
            ScoreVariant::SignedPlus => *r,
            ScoreVariant::SignedMinus => -r,
        })
        .collect()
}

/// Scores one unit under the given variant.
pub fn score_unit<F, S>(
    pair: &HistoryTargetPair,
    forecaster: &F,
    scale: &S,
    k: usize,
    variant: ScoreVariant,
    unit_id: usize,
) -> Result<NonconformityRecord>
where
    F: Forecaster + ?Sized,
    S: ScaleModel + ?Sized,
{
    let signed = scaled_signed_residuals(pair, forecaster, scale)?;
    let per_step = apply_variant(&signed, variant);
    let score = k_max(&per_step, k)?;
    Ok(NonconformityRecord {
        score,
        per_step,
        unit_id,
        variant,
    })
}

/// Shared reduction from per-unit signed residuals to a calibration output.
fn calibrate_from_signed(
    signed_units: Vec<(usize, Vec<f64>)>,
    settings: &CalibrationSettings,
    scale_kind: ScaleKind,
) -> Result<CalibrationOutput> {
    settings.validate()?;
    if signed_units.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let k = settings.k;
    let make = |variant: ScoreVariant| -> Result<Vec<NonconformityRecord>> {
        signed_units
            .iter()
            .map(|(unit_id, signed)| {
                let per_step = apply_variant(signed, variant);
                let score = k_max(&per_step, k)?;
                Ok(NonconformityRecord {
                    score,
                    per_step,
                    unit_id: *unit_id,
                    variant,
                })
            })
            .collect()
    };
    let scores = |records: &[NonconformityRecord]| -> Vec<f64> {
        records.iter().map(|r| r.score).collect()
    };

    let (records, q_lower, q_upper) = match settings.sidedness {
        Sidedness::TwoSided => {
            let records = make(ScoreVariant::Abs)?;
            let q = invert_quantile(&scores(&records), settings.epsilon)?;
            (records, q, q)
        }
        Sidedness::Lower => {
            let records = make(ScoreVariant::SignedMinus)?;
            let q = invert_quantile(&scores(&records), settings.epsilon)?;
            (records, q, f64::INFINITY)
        }
        Sidedness::Upper => {
            let records = make(ScoreVariant::SignedPlus)?;
            let q = invert_quantile(&scores(&records), settings.epsilon)?;
            (records, f64::INFINITY, q)
        }
        Sidedness::Asymmetric {
            epsilon_plus,
            epsilon_minus,
        } => {
            let plus = make(ScoreVariant::SignedPlus)?;
            let minus = make(ScoreVariant::SignedMinus)?;
            let q_upper = invert_quantile(&scores(&plus), epsilon_plus)?;
            let q_lower = invert_quantile(&scores(&minus), epsilon_minus)?;
            let mut records = plus;
            records.extend(minus);
            (records, q_lower, q_upper)
        }
    };
    Ok(CalibrationOutput {
        records,
        epsilon: settings.epsilon,
        k: settings.k,
        sidedness: settings.sidedness,
        scale_kind,
        q_lower,
        q_upper,
    })
}

/// Calibrates on exchangeable panel units: one score per unit, then
/// quantile inversion.
pub fn calibrate_panel<F, S>(
    units: &[HistoryTargetPair],
    forecaster: &F,
    scale: &S,
    settings: &CalibrationSettings,
) -> Result<CalibrationOutput>
where
    F: Forecaster + ?Sized,
    S: ScaleModel + ?Sized,
{
    settings.validate()?;
    if units.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let signed = units
        .iter()
        .enumerate()
        .map(|(i, u)| Ok((i, scaled_signed_residuals(u, forecaster, scale)?)))
        .collect::<Result<Vec<_>>>()?;
    calibrate_from_signed(signed, settings, scale.kind())
}

/// The first `(t, h)` window of a block rotation, read directly from the
/// original series by cyclic indexing. Identical to rotating the whole
/// series and taking its first window.
fn cyclic_window(
    series: &TimeSeries,
    offset: usize,
    t: usize,
    h: usize,
) -> Result<HistoryTargetPair> {
    let len = series.len();
    if len < t + h {
        return Err(Error::SeriesTooShort {
            have: len,
            need: t + h,
        });
    }
    let p = series.channels();
    let mut history = Array2::zeros((t, p));
    let mut target = Array2::zeros((h, p));
    for i in 0..t + h {
        let src = (offset + i) % len;
        for c in 0..p {
            if i < t {
                history[[i, c]] = series.values()[[src, c]];
            } else {
                target[[i - t, c]] = series.values()[[src, c]];
            }
        }
    }
    HistoryTargetPair::new(history, target)
}

/// Calibrates on a single series: each group rotation contributes the score
/// of its first `(t, h)` window. With NOB rotations these windows are the
/// cyclic windows of the calibration series at the block offsets.
pub fn calibrate_single<F, S>(
    split: &SeriesSplit,
    group: &PermutationGroup,
    forecaster: &F,
    scale: &S,
    t: usize,
    h: usize,
    settings: &CalibrationSettings,
) -> Result<CalibrationOutput>
where
    F: Forecaster + ?Sized,
    S: ScaleModel + ?Sized,
{
    settings.validate()?;
    let cal = &split.calibration;
    if group.len() != cal.len() {
        return Err(Error::LengthMismatch {
            expected: group.len(),
            found: cal.len(),
        });
    }
    if cal.len() < t + h {
        return Err(Error::SeriesTooShort {
            have: cal.len(),
            need: t + h,
        });
    }
    let members: Vec<_> = group
        .members()
        .iter()
        .filter(|m| !settings.exclude_wrap || m.offset() + t + h <= cal.len())
        .collect();
    if members.is_empty() {
        return Err(Error::WrapExcludedEmpty {
            removed: group.order(),
        });
    }
    let signed = members
        .iter()
        .map(|m| {
            let window = cyclic_window(cal, m.offset(), t, h)?;
            Ok((
                m.shift_blocks(),
                scaled_signed_residuals(&window, forecaster, scale)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    calibrate_from_signed(signed, settings, scale.kind())
}

/// Builds the region around a point forecast: per-step bounds
/// `[center - q_lower * sigma, center + q_upper * sigma]`, with infinite
/// multipliers leaving that side unbounded.
pub fn build_jpr(
    center: &Array2<f64>,
    sigma: &Array2<f64>,
    calibration: &CalibrationOutput,
) -> Result<JointPredictionRegion> {
    if center.dim() != sigma.dim() {
        return Err(Error::ShapeMismatch {
            expected_rows: center.nrows(),
            expected_cols: center.ncols(),
            rows: sigma.nrows(),
            cols: sigma.ncols(),
        });
    }
    if matches!(calibration.sidedness, Sidedness::TwoSided) && calibration.q_lower < 0.0 {
        return Err(Error::NegativeQuantile {
            q: calibration.q_lower,
        });
    }
    let lower = center - &(sigma * calibration.q_lower);
    let upper = center + &(sigma * calibration.q_upper);
    Ok(JointPredictionRegion {
        lower,
        center: center.clone(),
        upper,
        meta: RegionMeta {
            epsilon: calibration.epsilon,
            k: calibration.k,
            sidedness: calibration.sidedness,
            q_lower: calibration.q_lower,
            q_upper: calibration.q_upper,
        },
    })
}

/// Counts how many realized entries fall strictly outside the region.
pub fn check_coverage(
    region: &JointPredictionRegion,
    truth: &Array2<f64>,
) -> Result<CoverageVerdict> {
    if truth.dim() != region.center.dim() {
        return Err(Error::ShapeMismatch {
            expected_rows: region.center.nrows(),
            expected_cols: region.center.ncols(),
            rows: truth.nrows(),
            cols: truth.ncols(),
        });
    }
    let mut misses = 0;
    for ((r, c), y) in truth.indexed_iter() {
        if *y < region.lower[[r, c]] || *y > region.upper[[r, c]] {
            misses += 1;
        }
    }
    Ok(CoverageVerdict {
        misses,
        covered_at_k: misses < region.meta.k,
    })
}
