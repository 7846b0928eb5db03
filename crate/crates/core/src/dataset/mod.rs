//! Episode/scene dataset model, the scene-records file format, a synthetic
//! vehicular generator with a blockage model, and dataset statistics.
//!
//! A dataset is a set of episodes; each episode holds one scene series per
//! receiver, sampled at a fixed interval. A scene carries either raw
//! multipath components (gains are computed on ingest) or precomputed
//! beam-gain magnitudes.

mod records;
mod synth;

pub use records::{ingest, write_records, RecordFormat};
pub use synth::{synth_generate, SynthConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{best_beam, BeamGainVector, MultipathComponent};
use crate::error::{Error, Result};
use crate::metrics::mafd;

/// Fallback dB value for zero gains, keeping statistics finite.
pub const GAIN_DB_FLOOR: f64 = -300.0;

/// One time sample of one receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub episode_id: usize,
    /// Time index within the episode; scenes are `scene_interval_ms` apart.
    pub scene_id: usize,
    pub receiver_id: usize,
    /// Receiver position in meters.
    pub rx_position: [f64; 3],
    pub los: bool,
    /// Raw multipath components, when the scene was built from ray data.
    pub mpcs: Option<Vec<MultipathComponent>>,
    /// Beam gains; always present after ingest or generation.
    pub gains: Option<BeamGainVector>,
    pub timestamp_ms: f64,
}

impl Scene {
    pub fn gains(&self) -> Result<&BeamGainVector> {
        self.gains
            .as_ref()
            .ok_or_else(|| Error::Validation("scene is missing beam gains".into()))
    }
}

/// Scene series of a single receiver within one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverSeries {
    pub receiver_id: usize,
    pub scenes: Vec<Scene>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub id: usize,
    pub scene_interval_ms: f64,
    pub receivers: Vec<ReceiverSeries>,
}

impl Episode {
    /// Scenes per receiver; series lengths are validated equal.
    pub fn scenes_per_receiver(&self) -> usize {
        self.receivers.first().map_or(0, |r| r.scenes.len())
    }
}

/// A full dataset plus the array/codebook metadata from its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_tx: usize,
    pub n_rx: usize,
    pub scene_interval_ms: f64,
    /// Total beam pairs, `n_tx * n_rx`.
    pub num_beams: usize,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn total_scenes(&self) -> usize {
        self.episodes
            .iter()
            .flat_map(|e| e.receivers.iter())
            .map(|r| r.scenes.len())
            .sum()
    }

    /// All receiver series ordered by (episode id, receiver id).
    pub fn series(&self) -> impl Iterator<Item = &ReceiverSeries> {
        self.episodes.iter().flat_map(|e| e.receivers.iter())
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_beams != self.n_tx * self.n_rx {
            return Err(Error::Validation(format!(
                "M={} but n_tx*n_rx={}",
                self.num_beams,
                self.n_tx * self.n_rx
            )));
        }
        for ep in &self.episodes {
            let s = ep.scenes_per_receiver();
            if s < 2 {
                return Err(Error::Validation(format!(
                    "episode {} has series shorter than 2 scenes",
                    ep.id
                )));
            }
            for rcv in &ep.receivers {
                if rcv.scenes.len() != s {
                    return Err(Error::Validation(format!(
                        "episode {} receiver {} series length {} != {}",
                        ep.id,
                        rcv.receiver_id,
                        rcv.scenes.len(),
                        s
                    )));
                }
                let mut prev_ts = f64::NEG_INFINITY;
                for (i, scene) in rcv.scenes.iter().enumerate() {
                    if scene.scene_id != i {
                        return Err(Error::Validation(format!(
                            "episode {} receiver {} scene ids are not consecutive from 0",
                            ep.id, rcv.receiver_id
                        )));
                    }
                    if scene.mpcs.is_none() && scene.gains.is_none() {
                        return Err(Error::Validation(
                            "scene carries neither mpcs nor gains".into(),
                        ));
                    }
                    if let Some(g) = &scene.gains {
                        if g.len() != self.num_beams {
                            return Err(Error::Validation(format!(
                                "scene gain vector length {} != M={}",
                                g.len(),
                                self.num_beams
                            )));
                        }
                    }
                    if scene.timestamp_ms <= prev_ts {
                        return Err(Error::Validation(
                            "timestamps must strictly increase within a series".into(),
                        ));
                    }
                    prev_ts = scene.timestamp_ms;
                }
            }
        }
        Ok(())
    }
}

/// Aggregate propagation statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub los_count: usize,
    pub nlos_count: usize,
    /// Mean absolute first difference of best-beam sequences (circular).
    pub mafd: f64,
    /// Variance of per-scene best-beam gain in dB.
    pub beam_gain_variance_db: f64,
}

/// Best-beam index of every scene in a series. Requires gains.
pub fn best_beam_sequence(series: &ReceiverSeries) -> Result<Vec<usize>> {
    series
        .scenes
        .iter()
        .map(|s| best_beam(s.gains()?))
        .collect()
}

/// LOS/NLOS counts, MAFD over best-beam sequences, and best-beam gain
/// variance in dB. Pure function of the dataset.
pub fn stats(ds: &Dataset, n_total: usize) -> Result<ScenarioStats> {
    let mut los = 0usize;
    let mut nlos = 0usize;
    let mut sequences = Vec::new();
    let mut gains_db = Vec::new();
    for series in ds.series() {
        sequences.push(best_beam_sequence(series)?);
        for scene in &series.scenes {
            if scene.los {
                los += 1;
            } else {
                nlos += 1;
            }
            let g = scene.gains()?;
            let best = g.gains[best_beam(g)?];
            gains_db.push(if best > 0.0 {
                20.0 * best.log10()
            } else {
                GAIN_DB_FLOOR
            });
        }
    }
    let mafd_value = mafd(&sequences, n_total)?;
    let mean = gains_db.iter().sum::<f64>() / gains_db.len() as f64;
    let variance = gains_db.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / gains_db.len() as f64;
    Ok(ScenarioStats {
        los_count: los,
        nlos_count: nlos,
        mafd: mafd_value,
        beam_gain_variance_db: variance,
    })
}

/// Split at episode granularity: no episode straddles the boundary. The
/// test side gets `max(1, floor(n * test_fraction))` episodes, always
/// leaving at least one for training. Deterministic per seed.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let fraction_ok = test_fraction > 0.0 && test_fraction < 1.0;
    if !fraction_ok {
        return Err(Error::InvalidInput(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = ds.episodes.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 episodes to split".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_test = ((n as f64 * test_fraction).floor() as usize).clamp(1, n - 1);
    let mut test_idx: Vec<usize> = idx[..n_test].to_vec();
    let mut train_idx: Vec<usize> = idx[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |indices: &[usize]| Dataset {
        n_tx: ds.n_tx,
        n_rx: ds.n_rx,
        scene_interval_ms: ds.scene_interval_ms,
        num_beams: ds.num_beams,
        episodes: indices.iter().map(|&i| ds.episodes[i].clone()).collect(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}
