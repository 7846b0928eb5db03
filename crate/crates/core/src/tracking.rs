//! Sliding-window feature construction, measurement schedules, and
//! autoregressive rollouts that substitute model predictions for real beam
//! measurements.
//!
//! A rollout walks a receiver's scene series slot by slot. The first
//! `window_len` slots are always measured (warm start). From then on the
//! model predicts every slot from its current window; the schedule decides
//! whether the slot is then truly measured (window gets real features) or
//! skipped (the model's own prediction is substituted). With the regression
//! head the predicted RSRP vector is fed back; with the classification head
//! the predicted index drives the one-hot channel while the RSRP channels
//! hold the last measured values.

use std::collections::VecDeque;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::channel::BeamGainVector;
use crate::dataset::{ReceiverSeries, GAIN_DB_FLOOR};
use crate::error::{Error, Result};
use crate::metrics::argmax;
use crate::model::{predict, Head, ModelSpec, Parameters, SequenceBatch, Targets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Normalized per-beam RSRP values.
    RsrpVector,
    /// Normalized RSRP values followed by a one-hot best-index channel.
    RsrpPlusOnehotIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RsrpNormalization {
    MinmaxDb,
    ZscoreDb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_len: usize,
    pub feature_mode: FeatureMode,
    pub rsrp_normalization: RsrpNormalization,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len: 4,
            feature_mode: FeatureMode::RsrpVector,
            rsrp_normalization: RsrpNormalization::MinmaxDb,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::InvalidInput("window length must be >= 1".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self, num_beams: usize) -> usize {
        match self.feature_mode {
            FeatureMode::RsrpVector => num_beams,
            FeatureMode::RsrpPlusOnehotIndex => 2 * num_beams,
        }
    }
}

/// Normalization statistics, frozen from the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NormStats {
    /// Degenerate ranges map everything to 0.
    Minmax { lo: f64, hi: f64 },
    Zscore { mean: f64, sd: f64 },
}

impl NormStats {
    /// Fit over all RSRP dB values of the given datasets' scenes.
    pub fn fit<'a>(
        mode: RsrpNormalization,
        series: impl Iterator<Item = &'a ReceiverSeries>,
    ) -> Result<Self> {
        let mut values = Vec::new();
        for s in series {
            for scene in &s.scenes {
                values.extend(rsrp_db(scene.gains()?));
            }
        }
        if values.is_empty() {
            return Err(Error::InvalidInput("no gains to fit normalization".into()));
        }
        Ok(match mode {
            RsrpNormalization::MinmaxDb => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                NormStats::Minmax { lo, hi }
            }
            RsrpNormalization::ZscoreDb => {
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let var =
                    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
                NormStats::Zscore {
                    mean,
                    sd: var.sqrt(),
                }
            }
        })
    }

    pub fn apply(&self, db: f64) -> f64 {
        match *self {
            NormStats::Minmax { lo, hi } => {
                if hi > lo {
                    (db - lo) / (hi - lo)
                } else {
                    0.0
                }
            }
            NormStats::Zscore { mean, sd } => {
                if sd > 0.0 {
                    (db - mean) / sd
                } else {
                    0.0
                }
            }
        }
    }
}

/// Per-beam RSRP in dB (noiseless), floored at [`GAIN_DB_FLOOR`] so zero
/// gains stay finite.
pub fn rsrp_db(gains: &BeamGainVector) -> Vec<f64> {
    gains
        .gains
        .iter()
        .map(|&g| {
            if g > 0.0 {
                (20.0 * g.log10()).max(GAIN_DB_FLOOR)
            } else {
                GAIN_DB_FLOOR
            }
        })
        .collect()
}

fn feature_vector(
    wcfg: &WindowConfig,
    rsrp_norm: &[f64],
    best: usize,
    num_beams: usize,
) -> Vec<f64> {
    match wcfg.feature_mode {
        FeatureMode::RsrpVector => rsrp_norm.to_vec(),
        FeatureMode::RsrpPlusOnehotIndex => {
            let mut f = Vec::with_capacity(2 * num_beams);
            f.extend_from_slice(rsrp_norm);
            let mut onehot = vec![0.0; num_beams];
            onehot[best] = 1.0;
            f.extend(onehot);
            f
        }
    }
}

/// Per-slot view of a receiver series: normalized features, linear power
/// gains, and the true best beam.
#[derive(Debug, Clone)]
pub struct SeriesView {
    pub features: Vec<Vec<f64>>,
    pub gains_pow: Vec<Vec<f64>>,
    pub rsrp_norm: Vec<Vec<f64>>,
    pub best: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
    pub num_beams: usize,
}

impl SeriesView {
    pub fn build(series: &ReceiverSeries, wcfg: &WindowConfig, stats: &NormStats) -> Result<Self> {
        wcfg.validate()?;
        let mut features = Vec::with_capacity(series.scenes.len());
        let mut gains_pow = Vec::with_capacity(series.scenes.len());
        let mut rsrp_norm = Vec::with_capacity(series.scenes.len());
        let mut best = Vec::with_capacity(series.scenes.len());
        let mut positions = Vec::with_capacity(series.scenes.len());
        let mut num_beams = 0;
        for scene in &series.scenes {
            let g = scene.gains()?;
            num_beams = g.len();
            let norm: Vec<f64> = rsrp_db(g).into_iter().map(|db| stats.apply(db)).collect();
            let b = argmax(&g.gains);
            features.push(feature_vector(wcfg, &norm, b, num_beams));
            gains_pow.push(g.gains.iter().map(|&v| v * v).collect());
            rsrp_norm.push(norm);
            best.push(b);
            positions.push(scene.rx_position);
        }
        Ok(Self {
            features,
            gains_pow,
            rsrp_norm,
            best,
            positions,
            num_beams,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// One training sample: a feature window plus both target kinds for the
/// following slot.
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// `window_len x feature_dim`.
    pub features: Array2<f64>,
    pub class_target: usize,
    pub reg_target: Vec<f64>,
}

/// Slice a series into `(window, next-slot target)` pairs: window `t` covers
/// slots `[t, t + W)` and targets slot `t + W`. Yields `S - W` samples.
pub fn build_windows(
    series: &ReceiverSeries,
    wcfg: &WindowConfig,
    stats: &NormStats,
) -> Result<Vec<WindowSample>> {
    wcfg.validate()?;
    let view = SeriesView::build(series, wcfg, stats)?;
    let w = wcfg.window_len;
    let s = view.len();
    if s <= w {
        return Err(Error::InvalidInput(format!(
            "series of {s} scenes is too short for window length {w}"
        )));
    }
    let d = wcfg.feature_dim(view.num_beams);
    let mut samples = Vec::with_capacity(s - w);
    for t in 0..s - w {
        let mut features = Array2::zeros((w, d));
        for (row, slot) in (t..t + w).enumerate() {
            for (col, &v) in view.features[slot].iter().enumerate() {
                features[[row, col]] = v;
            }
        }
        samples.push(WindowSample {
            features,
            class_target: view.best[t + w],
            reg_target: view.rsrp_norm[t + w].clone(),
        });
    }
    Ok(samples)
}

/// Assemble window samples into a training batch for the given head.
pub fn to_batch(samples: &[WindowSample], head: &Head) -> Result<SequenceBatch> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no window samples".into()));
    }
    let (w, d) = samples[0].features.dim();
    let n = samples.len();
    let mut inputs = Array3::zeros((n, w, d));
    for (i, s) in samples.iter().enumerate() {
        if s.features.dim() != (w, d) {
            return Err(Error::Shape("ragged window samples".into()));
        }
        inputs
            .index_axis_mut(ndarray::Axis(0), i)
            .assign(&s.features);
    }
    let targets = match head {
        Head::Classification { .. } => {
            Targets::Classes(samples.iter().map(|s| s.class_target).collect())
        }
        Head::Regression { num_beams } => {
            let mut gains = Array2::zeros((n, *num_beams));
            for (i, s) in samples.iter().enumerate() {
                if s.reg_target.len() != *num_beams {
                    return Err(Error::Shape("regression target length mismatch".into()));
                }
                for (j, &v) in s.reg_target.iter().enumerate() {
                    gains[[i, j]] = v;
                }
            }
            Targets::Gains(gains)
        }
    };
    SequenceBatch::new(inputs, targets)
}

/// Measurement schedule: one measured slot followed by `p` predicted slots,
/// repeating. `p = 0` measures every slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub predictions_per_measurement: usize,
    pub slot_interval_ms: f64,
}

impl Schedule {
    pub fn new(predictions_per_measurement: usize) -> Result<Self> {
        Self::with_interval(predictions_per_measurement, 80.0)
    }

    pub fn with_interval(p: usize, slot_interval_ms: f64) -> Result<Self> {
        if p > 3 {
            return Err(Error::InvalidInput(format!(
                "predictions per measurement must be in 0..=3, got {p}"
            )));
        }
        if !slot_interval_ms.is_finite() || slot_interval_ms <= 0.0 {
            return Err(Error::InvalidInput("slot interval must be positive".into()));
        }
        Ok(Self {
            predictions_per_measurement: p,
            slot_interval_ms,
        })
    }

    /// Interval between real measurements; 240 ms for p = 2 at the default
    /// 80 ms slot.
    pub fn measurement_interval_ms(&self) -> f64 {
        self.slot_interval_ms * (self.predictions_per_measurement + 1) as f64
    }

    /// Whether the `idx`-th rollout slot is truly measured. The pattern
    /// starts with a measurement.
    pub fn is_measured(&self, idx: usize) -> bool {
        idx.is_multiple_of(self.predictions_per_measurement + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Measured,
    Predicted,
}

/// Everything recorded about one rollout slot; metrics are recomputable
/// from these records alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub kind: SlotKind,
    /// First slot of the input window (window covers `[window_start, slot)`).
    pub window_start: usize,
    /// Provenance of each window entry: true if it holds measured features.
    pub window_measured: Vec<bool>,
    /// Model scores for this slot: logits (classification) or predicted
    /// normalized RSRP (regression).
    pub predicted_scores: Vec<f64>,
    /// Beam subset the choice was restricted to, when a pre-filter ran.
    pub subset: Option<Vec<usize>>,
    pub chosen: usize,
    pub true_best: usize,
    /// Linear power gain of the chosen beam.
    pub chosen_gain_pow: f64,
    /// Linear power gains of all beams.
    pub true_gains_pow: Vec<f64>,
}

/// Trace of one rollout over one receiver series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub schedule_p: usize,
    pub window_len: usize,
    pub num_beams: usize,
    pub slots: Vec<SlotRecord>,
}

impl TrackRecord {
    pub fn n_measured(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| s.kind == SlotKind::Measured)
            .count()
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }
}

/// A per-slot beam scorer driving a rollout.
pub trait BeamPredictor {
    fn head(&self) -> Head;

    /// Score all beams for `target_slot` from the feature window covering
    /// the preceding `window_len` slots.
    fn predict_scores(&self, window: &Array2<f64>, target_slot: usize) -> Result<Vec<f64>>;
}

/// Trained LSTM model as a rollout predictor.
pub struct LstmPredictor<'a> {
    pub params: &'a Parameters,
    pub spec: &'a ModelSpec,
}

impl BeamPredictor for LstmPredictor<'_> {
    fn head(&self) -> Head {
        self.spec.head
    }

    fn predict_scores(&self, window: &Array2<f64>, _target_slot: usize) -> Result<Vec<f64>> {
        predict(self.params, self.spec, window)
    }
}

/// Perfect predictor: returns the true normalized RSRP of the target slot.
/// Under any schedule its rollouts match full measurement exactly.
pub struct OraclePredictor<'a> {
    pub view: &'a SeriesView,
}

impl BeamPredictor for OraclePredictor<'_> {
    fn head(&self) -> Head {
        Head::Regression {
            num_beams: self.view.num_beams,
        }
    }

    fn predict_scores(&self, _window: &Array2<f64>, target_slot: usize) -> Result<Vec<f64>> {
        Ok(self.view.rsrp_norm[target_slot].clone())
    }
}

/// Walk a series under a measurement schedule, predicting every slot from
/// slot `window_len` on and substituting predictions into the window at
/// unmeasured slots. `subsets`, when given, restricts the chosen beam at
/// each slot to the listed indices (one subset per slot of the series).
pub fn rollout(
    predictor: &dyn BeamPredictor,
    schedule: &Schedule,
    view: &SeriesView,
    wcfg: &WindowConfig,
    subsets: Option<&[Vec<usize>]>,
) -> Result<TrackRecord> {
    wcfg.validate()?;
    let w = wcfg.window_len;
    let s = view.len();
    let m = view.num_beams;
    if s <= w {
        return Err(Error::InvalidInput(format!(
            "series of {s} slots is too short for window length {w}"
        )));
    }
    if let Some(list) = subsets {
        if list.len() != s {
            return Err(Error::InvalidInput(
                "need one beam subset per slot".into(),
            ));
        }
        if list
            .iter()
            .any(|sub| sub.is_empty() || sub.iter().any(|&i| i >= m))
        {
            return Err(Error::InvalidInput("bad beam subset".into()));
        }
    }
    let d = wcfg.feature_dim(m);

    // Warm start: the first window is fully measured.
    let mut window: VecDeque<Vec<f64>> = view.features[..w].iter().cloned().collect();
    let mut measured_flags: VecDeque<bool> = std::iter::repeat_n(true, w).collect();
    let mut last_measured_rsrp = view.rsrp_norm[w - 1].clone();
    let mut slots = Vec::with_capacity(s - w);

    for slot in w..s {
        let mut arr = Array2::zeros((w, d));
        for (row, feat) in window.iter().enumerate() {
            for (col, &v) in feat.iter().enumerate() {
                arr[[row, col]] = v;
            }
        }
        let scores = predictor.predict_scores(&arr, slot)?;
        if scores.len() != m {
            return Err(Error::Shape(format!(
                "predictor returned {} scores for {m} beams",
                scores.len()
            )));
        }
        let slot_subset = subsets.map(|list| list[slot].as_slice());
        let chosen = match slot_subset {
            None => argmax(&scores),
            Some(sub) => {
                let mut best = sub[0];
                for &i in sub {
                    if scores[i] > scores[best] {
                        best = i;
                    }
                }
                best
            }
        };
        let kind = if schedule.is_measured(slot - w) {
            SlotKind::Measured
        } else {
            SlotKind::Predicted
        };
        slots.push(SlotRecord {
            slot,
            kind,
            window_start: slot - w,
            window_measured: measured_flags.iter().cloned().collect(),
            predicted_scores: scores.clone(),
            subset: slot_subset.map(|s| s.to_vec()),
            chosen,
            true_best: view.best[slot],
            chosen_gain_pow: view.gains_pow[slot][chosen],
            true_gains_pow: view.gains_pow[slot].clone(),
        });

        let (next_feat, was_measured) = match kind {
            SlotKind::Measured => {
                last_measured_rsrp = view.rsrp_norm[slot].clone();
                (view.features[slot].clone(), true)
            }
            SlotKind::Predicted => {
                let feat = match predictor.head() {
                    Head::Regression { .. } => {
                        feature_vector(wcfg, &scores, argmax(&scores), m)
                    }
                    Head::Classification { .. } => {
                        feature_vector(wcfg, &last_measured_rsrp, chosen, m)
                    }
                };
                (feat, false)
            }
        };
        window.pop_front();
        window.push_back(next_feat);
        measured_flags.pop_front();
        measured_flags.push_back(was_measured);
    }

    Ok(TrackRecord {
        schedule_p: schedule.predictions_per_measurement,
        window_len: w,
        num_beams: m,
        slots,
    })
}

/// Predict each slot's best beam as the previous slot's true best.
/// Returns predictions for slots `1..S`.
pub fn persistence_baseline(best_sequence: &[usize]) -> Result<Vec<usize>> {
    if best_sequence.len() < 2 {
        return Err(Error::InvalidInput(
            "persistence baseline needs at least 2 slots".into(),
        ));
    }
    Ok(best_sequence[..best_sequence.len() - 1].to_vec())
}

/// Where rollouts read receiver positions from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UePositionSource {
    /// Ground-truth scene positions.
    Scene,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrefilterConfig {
    pub enabled: bool,
    /// Transmit beams kept per slot.
    pub subset_size: usize,
    pub bs_position: [f64; 2],
    pub ue_position_source: UePositionSource,
}

impl Default for PrefilterConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            subset_size: 4,
            bs_position: [-15.0, 100.0],
            ue_position_source: UePositionSource::Scene,
        }
    }
}

/// Pick the `subset_size` transmit beams whose boresight azimuth is closest
/// (circularly) to the base-station-to-receiver azimuth. Returns sorted
/// beam indices; angular ties go to the lower index.
pub fn prefilter(
    ue_position: [f64; 3],
    pcfg: &PrefilterConfig,
    boresights_deg: &[f64],
) -> Result<Vec<usize>> {
    let m = boresights_deg.len();
    if pcfg.subset_size == 0 || pcfg.subset_size > m {
        return Err(Error::InvalidInput(format!(
            "subset size {} outside [1, {m}]",
            pcfg.subset_size
        )));
    }
    let az = (ue_position[1] - pcfg.bs_position[1])
        .atan2(ue_position[0] - pcfg.bs_position[0])
        .to_degrees();
    let mut by_distance: Vec<(f64, usize)> = boresights_deg
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let diff = (b - az).rem_euclid(360.0);
            (diff.min(360.0 - diff), i)
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut subset: Vec<usize> = by_distance[..pcfg.subset_size]
        .iter()
        .map(|&(_, i)| i)
        .collect();
    subset.sort_unstable();
    Ok(subset)
}

/// Expand transmit-beam indices to flat pair indices for `n_rx_beams`
/// combiners per precoder.
pub fn expand_tx_subset(tx_subset: &[usize], n_rx_beams: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(tx_subset.len() * n_rx_beams);
    for &t in tx_subset {
        for r in 0..n_rx_beams {
            out.push(crate::channel::pair_index(t, r, n_rx_beams));
        }
    }
    out.sort_unstable();
    out
}
