//! Time-series container, train/calibration splitting, windowing,
//! preprocessing, and CSV ingestion/emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{s, Array2};

use crate::error::{Error, Result};

/// An `L x p` matrix of observations with an optional per-row time label.
///
/// Invariants enforced at construction: at least one row and one channel,
/// every entry finite, and labels (when present) match the length exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Array2<f64>,
    labels: Option<Vec<String>>,
}

impl TimeSeries {
    /// Builds a series from an `L x p` matrix, validating the invariants.
    pub fn new(values: Array2<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptySeries);
        }
        for ((r, c), v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteValue { row: r, col: c });
            }
        }
        if let Some(ref l) = labels {
            if l.len() != rows {
                return Err(Error::LabelMismatch {
                    labels: l.len(),
                    len: rows,
                });
            }
        }
        Ok(Self { values, labels })
    }

    /// Builds an unlabeled univariate series from a slice of values.
    pub fn univariate(values: &[f64]) -> Result<Self> {
        let arr = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .expect("shape matches input length");
        Self::new(arr, None)
    }

    /// Number of time steps `L`.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// Always false: a valid series has at least one row.
    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of channels `p`.
    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// The underlying `L x p` matrix.
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Per-row labels, if any.
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// The univariate column as a slice view helper.
    ///
    /// Errors with [`Error::MultivariateUnsupported`] for `p > 1`.
    pub fn column(&self) -> Result<Vec<f64>> {
        if self.channels() != 1 {
            return Err(Error::MultivariateUnsupported {
                channels: self.channels(),
            });
        }
        Ok(self.values.column(0).to_vec())
    }

    /// Contiguous sub-series over rows `start..end` (labels carried along).
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::SeriesTooShort {
                have: self.len(),
                need: end,
            });
        }
        let values = self.values.slice(s![start..end, ..]).to_owned();
        let labels = self.labels.as_ref().map(|l| l[start..end].to_vec());
        Self::new(values, labels)
    }
}

/// Origin metadata for a [`SeriesSplit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitOrigin {
    /// Length of the parent series.
    pub parent_len: usize,
    /// 1-based index of the last training row (equals `L_tr`).
    pub split_index: usize,
}

/// A contiguous prefix/suffix split of one series into train and calibration
/// parts; train strictly precedes calibration in time.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSplit {
    pub train: TimeSeries,
    pub calibration: TimeSeries,
    pub origin: SplitOrigin,
}

/// One forecasting unit: `T` rows of history immediately followed by `H`
/// rows of target in the source ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTargetPair {
    pub history: Array2<f64>,
    pub target: Array2<f64>,
}

impl HistoryTargetPair {
    /// Pairs a history and target sharing the channel count.
    pub fn new(history: Array2<f64>, target: Array2<f64>) -> Result<Self> {
        if history.ncols() != target.ncols() {
            return Err(Error::ShapeMismatch {
                expected_rows: target.nrows(),
                expected_cols: history.ncols(),
                rows: target.nrows(),
                cols: target.ncols(),
            });
        }
        Ok(Self { history, target })
    }

    /// History length `T`.
    pub fn history_len(&self) -> usize {
        self.history.nrows()
    }

    /// Target length `H`.
    pub fn horizon(&self) -> usize {
        self.target.nrows()
    }

    /// Channel count `p`.
    pub fn channels(&self) -> usize {
        self.history.ncols()
    }
}

/// A panel of `n` mutually independent units split into train and
/// calibration halves; all units share `(T, H, p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<HistoryTargetPair>,
    n_train: usize,
}

impl PanelDataset {
    /// Builds a panel, checking that every unit shares `(T, H, p)` and that
    /// the training count does not exceed the unit count.
    pub fn new(units: Vec<HistoryTargetPair>, n_train: usize) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::EmptySeries);
        }
        if n_train > units.len() {
            return Err(Error::SplitTooSmall {
                side: "calibration",
                have: 0,
                need: 1,
            });
        }
        let (t, h, p) = (
            units[0].history_len(),
            units[0].horizon(),
            units[0].channels(),
        );
        for u in &units[1..] {
            if u.history_len() != t || u.horizon() != h || u.channels() != p {
                return Err(Error::ShapeMismatch {
                    expected_rows: t + h,
                    expected_cols: p,
                    rows: u.history_len() + u.horizon(),
                    cols: u.channels(),
                });
            }
        }
        Ok(Self { units, n_train })
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_calibration(&self) -> usize {
        self.units.len() - self.n_train
    }

    pub fn train_units(&self) -> &[HistoryTargetPair] {
        &self.units[..self.n_train]
    }

    pub fn calibration_units(&self) -> &[HistoryTargetPair] {
        &self.units[self.n_train..]
    }
}

/// Splits a series into a training prefix of `l_tr` rows and a calibration
/// suffix, requiring both sides to hold at least one `(t, h)` window.
pub fn split_series(series: &TimeSeries, l_tr: usize, t: usize, h: usize) -> Result<SeriesSplit> {
    let len = series.len();
    let need = t + h;
    if l_tr < need {
        return Err(Error::SplitTooSmall {
            side: "train",
            have: l_tr,
            need,
        });
    }
    if len < l_tr || len - l_tr < need {
        return Err(Error::SplitTooSmall {
            side: "calibration",
            have: len.saturating_sub(l_tr),
            need,
        });
    }
    Ok(SeriesSplit {
        train: series.slice_rows(0, l_tr)?,
        calibration: series.slice_rows(l_tr, len)?,
        origin: SplitOrigin {
            parent_len: len,
            split_index: l_tr,
        },
    })
}

/// Extracts the first `(t, h)` window of a series: history = rows `1..t`,
/// target = rows `t+1..t+h` (1-based).
pub fn first_window(series: &TimeSeries, t: usize, h: usize) -> Result<HistoryTargetPair> {
    if series.len() < t + h {
        return Err(Error::SeriesTooShort {
            have: series.len(),
            need: t + h,
        });
    }
    let history = series.values().slice(s![0..t, ..]).to_owned();
    let target = series.values().slice(s![t..t + h, ..]).to_owned();
    HistoryTargetPair::new(history, target)
}

/// Log-transforms and first-differences a strictly positive univariate
/// series: output entry `i` is `log(z[i+1]) - log(z[i])`, length `L - 1`.
pub fn log_diff_preprocess(series: &TimeSeries) -> Result<TimeSeries> {
    let col = series.column()?;
    if col.len() < 2 {
        return Err(Error::SeriesTooShort {
            have: col.len(),
            need: 2,
        });
    }
    for (i, &v) in col.iter().enumerate() {
        if v <= 0.0 {
            return Err(Error::NonPositiveValue { row: i, value: v });
        }
    }
    let diffs: Vec<f64> = col.windows(2).map(|w| w[1].ln() - w[0].ln()).collect();
    let labels = series.labels().map(|l| l[1..].to_vec());
    TimeSeries::new(
        Array2::from_shape_vec((diffs.len(), 1), diffs).expect("length matches"),
        labels,
    )
}

/// Contiguous windows of `window` rows at the given stride, in time order.
/// Returns `floor((L - window) / stride) + 1` windows.
pub fn rolling_windows(
    series: &TimeSeries,
    window: usize,
    stride: usize,
) -> Result<Vec<TimeSeries>> {
    if window == 0 || stride == 0 {
        return Err(Error::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    if window > series.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: series.len(),
        });
    }
    let count = (series.len() - window) / stride + 1;
    (0..count)
        .map(|i| series.slice_rows(i * stride, i * stride + window))
        .collect()
}

/// Formats a float with 17 significant digits so that parsing recovers the
/// exact bit pattern; infinities use the `inf`/`-inf` tokens.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:.16e}", v)
}

/// Reads a `label,v1,...,vp` CSV with a one-line header into a series.
pub fn read_csv(path: &Path) -> Result<TimeSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_csv_str(&text)
}

/// Parses CSV text (see [`read_csv`]); exposed for in-memory round trips.
pub fn read_csv_str(text: &str) -> Result<TimeSeries> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::ParseError {
        row: 0,
        col: 0,
        message: "missing header line".into(),
    })?;
    let n_cols = header.split(',').count();
    if n_cols < 2 {
        return Err(Error::ParseError {
            row: 0,
            col: 0,
            message: "header must be label,c1[,c2,...]".into(),
        });
    }
    let p = n_cols - 1;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (row, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::RaggedRows {
                row,
                expected: p,
                found: fields.len().saturating_sub(1),
            });
        }
        labels.push(fields[0].to_string());
        for (col, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.trim().parse().map_err(|e| Error::ParseError {
                row,
                col: col + 1,
                message: format!("{e}: {f:?}"),
            })?;
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptySeries);
    }
    let values = Array2::from_shape_vec((labels.len(), p), data).expect("row-major fill");
    TimeSeries::new(values, Some(labels))
}

/// Serializes a series as CSV (see [`read_csv`] for the schema). Unlabeled
/// series get their 0-based row index as the label.
pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    fs::write(path, write_csv_string(series)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Renders the CSV for [`write_csv`] as a string.
pub fn write_csv_string(series: &TimeSeries) -> String {
    let p = series.channels();
    let mut out = String::from("label");
    for c in 1..=p {
        let _ = write!(out, ",c{c}");
    }
    out.push('\n');
    for r in 0..series.len() {
        match series.labels() {
            Some(l) => out.push_str(&l[r]),
            None => {
                let _ = write!(out, "{r}");
            }
        }
        for c in 0..p {
            let _ = write!(out, ",{}", fmt_f64(series.values()[[r, c]]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn series(vals: &[f64]) -> TimeSeries {
        TimeSeries::univariate(vals).unwrap()
    }

    #[test]
    fn split_matches_block_layout() {
        // L = 16 = 10 + 6, as in the rotation diagram.
        let s = series(&(1..=16).map(f64::from).collect::<Vec<_>>());
        let split = split_series(&s, 10, 3, 2).unwrap();
        assert_eq!(split.train.len(), 10);
        assert_eq!(split.calibration.len(), 6);
        assert_eq!(split.train.values()[[0, 0]], 1.0);
        assert_eq!(split.train.values()[[9, 0]], 10.0);
        assert_eq!(split.calibration.values()[[0, 0]], 11.0);
        assert_eq!(split.calibration.values()[[5, 0]], 16.0);
        assert_eq!(split.origin.split_index, 10);
    }

    #[test]
    fn split_minimal_legal() {
        // Smallest split satisfying the window precondition at T = H = 1:
        // both sides must hold a full (T, H) window.
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        let split = split_series(&s, 2, 1, 1).unwrap();
        assert_eq!(split.train.len(), 2);
        assert_eq!(split.calibration.len(), 2);
        assert!(matches!(
            split_series(&series(&[1.0, 2.0]), 1, 1, 1),
            Err(Error::SplitTooSmall { .. })
        ));
    }

    #[test]
    fn split_too_small_calibration_side() {
        let s = series(&(1..=16).map(f64::from).collect::<Vec<_>>());
        let err = split_series(&s, 14, 2, 2).unwrap_err();
        assert!(matches!(
            err,
            Error::SplitTooSmall {
                side: "calibration",
                have: 2,
                need: 4
            }
        ));
    }

    #[test]
    fn first_window_basic() {
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let pair = first_window(&s, 3, 2).unwrap();
        assert_eq!(pair.history, array![[1.0], [2.0], [3.0]]);
        assert_eq!(pair.target, array![[4.0], [5.0]]);
    }

    #[test]
    fn first_window_consumes_whole_series() {
        let s = series(&[1.0, 2.0, 3.0]);
        let pair = first_window(&s, 2, 1).unwrap();
        assert_eq!(pair.history.nrows() + pair.target.nrows(), 3);
    }

    #[test]
    fn first_window_too_short() {
        let s = series(&[1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            first_window(&s, 3, 2),
            Err(Error::SeriesTooShort { have: 4, need: 5 })
        ));
    }

    #[test]
    fn log_diff_exponential() {
        let e = std::f64::consts::E;
        let s = series(&[1.0, e, e * e]);
        let out = log_diff_preprocess(&s).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out.values()[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((out.values()[[1, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_diff_constant_is_zero() {
        let s = series(&[3.5, 3.5, 3.5]);
        let out = log_diff_preprocess(&s).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn log_diff_rejects_non_positive() {
        let s = series(&[1.0, -1.0]);
        assert!(matches!(
            log_diff_preprocess(&s),
            Err(Error::NonPositiveValue { row: 1, .. })
        ));
    }

    #[test]
    fn rolling_window_counts() {
        let s = series(&(0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(rolling_windows(&s, 5, 1).unwrap().len(), 6);
        let w = series(&(0..52).map(f64::from).collect::<Vec<_>>());
        assert_eq!(rolling_windows(&w, 52, 1).unwrap().len(), 1);
        assert!(matches!(
            rolling_windows(&s, 11, 1),
            Err(Error::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn csv_small_file_round_trip() {
        let text = "label,c1\n2020Q1,1.5\n2020Q2,2.5\n2020Q3,-3.5\n";
        let s = read_csv_str(text).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.channels(), 1);
        assert_eq!(s.labels().unwrap()[2], "2020Q3");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        write_csv(&s, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_ragged_rows_detected() {
        let text = "label,c1,c2\nr0,1.0,2.0\nr1,3.0\n";
        assert!(matches!(
            read_csv_str(text),
            Err(Error::RaggedRows {
                row: 2,
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn csv_parse_error_locates_cell() {
        let text = "label,c1\nr0,oops\n";
        match read_csv_str(text) {
            Err(Error::ParseError { row: 1, col: 1, .. }) => {}
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn csv_infinities_round_trip() {
        let s = TimeSeries::new(array![[1.0], [2.0]], None).unwrap();
        // Infinities are not valid TimeSeries entries, but the formatter is
        // shared with the JPR writer which does emit them.
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(write_csv_string(&s).lines().count(), 3);
    }

    #[test]
    fn panel_dataset_splits_units() {
        let unit = |offset: f64| {
            HistoryTargetPair::new(
                array![[offset], [offset + 1.0]],
                array![[offset + 2.0]],
            )
            .unwrap()
        };
        let panel =
            PanelDataset::new((0..5).map(|i| unit(i as f64)).collect(), 2).unwrap();
        assert_eq!(panel.n_units(), 5);
        assert_eq!(panel.n_train(), 2);
        assert_eq!(panel.n_calibration(), 3);
        assert_eq!(panel.train_units().len(), 2);
        assert_eq!(panel.calibration_units()[0].history[[0, 0]], 2.0);

        // Mixed shapes are rejected.
        let bad = vec![unit(0.0), HistoryTargetPair::new(array![[1.0]], array![[2.0]]).unwrap()];
        assert!(matches!(
            PanelDataset::new(bad, 1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            TimeSeries::new(array![[1.0], [f64::NAN]], None),
            Err(Error::NonFiniteValue { row: 1, col: 0 })
        ));
    }

    proptest! {
        #[test]
        fn split_then_concat_is_identity(
            len in 4usize..40,
            vals in proptest::collection::vec(-1e6f64..1e6, 40),
            frac in 0.2f64..0.8,
        ) {
            let s = series(&vals[..len]);
            let l_tr = ((len as f64 * frac) as usize).clamp(1, len - 1);
            if let Ok(split) = split_series(&s, l_tr, 1, 1) {
                let mut joined: Vec<f64> = split.train.column().unwrap();
                joined.extend(split.calibration.column().unwrap());
                prop_assert_eq!(joined, s.column().unwrap());
            }
        }

        #[test]
        fn rolling_stride1_first_rows_match(
            len in 3usize..30,
            window in 1usize..10,
            vals in proptest::collection::vec(-1e3f64..1e3, 30),
        ) {
            prop_assume!(window <= len);
            let s = series(&vals[..len]);
            let wins = rolling_windows(&s, window, 1).unwrap();
            prop_assert_eq!(wins.len(), len - window + 1);
            for (i, w) in wins.iter().enumerate() {
                prop_assert_eq!(w.values()[[0, 0]], s.values()[[i, 0]]);
            }
        }

        #[test]
        fn log_diff_geometric_is_constant(
            c in 0.1f64..10.0,
            r in 0.2f64..5.0,
            len in 2usize..20,
        ) {
            let vals: Vec<f64> = (0..len).map(|i| c * r.powi(i as i32)).collect();
            let s = series(&vals);
            let out = log_diff_preprocess(&s).unwrap();
            for v in out.values() {
                prop_assert!((v - r.ln()).abs() < 1e-9);
            }
        }

        #[test]
        fn csv_round_trip_identity(
            len in 1usize..20,
            p in 1usize..4,
            raw in proptest::collection::vec(-1e12f64..1e12, 60),
        ) {
            let data: Vec<f64> = raw[..len * p].to_vec();
            let labels: Vec<String> = (0..len).map(|i| format!("t{i}")).collect();
            let s = TimeSeries::new(
                Array2::from_shape_vec((len, p), data).unwrap(),
                Some(labels),
            ).unwrap();
            let back = read_csv_str(&write_csv_string(&s)).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
