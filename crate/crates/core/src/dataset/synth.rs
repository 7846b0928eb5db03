//! Synthetic vehicular episode generator.
//!
//! Receivers drive straight along a street (the y axis segment from 0 to
//! `street_length_m` at x = 0) at a constant per-receiver speed while a
//! roadside base station watches from `bs_position_m`. Every scene gets a
//! line-of-sight path with geometric angles and free-space gain (unit
//! reference power at 1 m). Blockages arrive as contiguous intervals driven
//! by a two-state chain whose stationary blocked fraction equals
//! `target_nlos_fraction`; while blocked, the LOS gain is suppressed by
//! `nlos_gain_penalty_db` and random reflected paths are added.
//!
//! Multipath angles are stored in each array's broadside frame, so the
//! emitted records reproduce identical gains when re-ingested with the
//! default orientation-0 arrays.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{beam_gains, channel_matrix, ArrayConfig, Codebook, MultipathComponent};
use crate::error::{Error, Result};

use super::{Dataset, Episode, ReceiverSeries, Scene};

/// Receiver antenna height in meters.
const UE_HEIGHT_M: f64 = 1.5;
/// Mean blockage interval length in scenes.
const BLOCKAGE_MEAN_SCENES: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_episodes: usize,
    pub receivers_per_episode: usize,
    pub scenes_per_episode: usize,
    pub street_length_m: f64,
    /// Base-station ground position (x, y) in meters. Keep x negative so the
    /// whole street stays in front of the array broadside.
    pub bs_position_m: [f64; 2],
    pub bs_height_m: f64,
    /// Uniform speed range (min, max) in m/s.
    pub speed_range_mps: [f64; 2],
    /// Stationary fraction of blocked (NLOS) scenes.
    pub target_nlos_fraction: f64,
    /// Reflected paths added while blocked.
    pub nlos_paths: usize,
    /// LOS suppression while blocked, in dB.
    pub nlos_gain_penalty_db: f64,
    pub scene_interval_ms: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_episodes: 50,
            receivers_per_episode: 1,
            scenes_per_episode: 24,
            street_length_m: 200.0,
            bs_position_m: [-15.0, 100.0],
            bs_height_m: 10.0,
            speed_range_mps: [8.0, 16.0],
            target_nlos_fraction: 0.1,
            nlos_paths: 3,
            nlos_gain_penalty_db: 10.0,
            scene_interval_ms: 80.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_episodes == 0
            || self.receivers_per_episode == 0
            || self.scenes_per_episode < 2
        {
            return Err(Error::InvalidInput(
                "episode/receiver counts must be positive and scenes_per_episode >= 2".into(),
            ));
        }
        if !self.street_length_m.is_finite() || self.street_length_m <= 0.0 {
            return Err(Error::InvalidInput("street length must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.target_nlos_fraction) {
            return Err(Error::InvalidInput(format!(
                "target NLOS fraction {} outside [0, 1]",
                self.target_nlos_fraction
            )));
        }
        let speeds_ok = self.speed_range_mps[0] > 0.0
            && self.speed_range_mps[1] >= self.speed_range_mps[0]
            && self.speed_range_mps[1].is_finite();
        if !speeds_ok {
            return Err(Error::InvalidInput("bad speed range".into()));
        }
        if !self.scene_interval_ms.is_finite() || self.scene_interval_ms <= 0.0 {
            return Err(Error::InvalidInput(
                "scene interval must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Two-state blockage chain with geometric sojourn times. Stationary blocked
/// fraction equals the target; mean blocked length is 3 scenes where the
/// target allows it.
struct BlockageChain {
    enter_prob: f64,
    exit_prob: f64,
    target: f64,
    blocked: bool,
}

impl BlockageChain {
    fn new(target: f64, rng: &mut ChaCha8Rng) -> Self {
        let (enter, exit) = if target <= 0.0 {
            (0.0, 1.0)
        } else if target >= 1.0 {
            (1.0, 0.0)
        } else {
            let mut blocked_mean = BLOCKAGE_MEAN_SCENES;
            let mut clear_mean = blocked_mean * (1.0 - target) / target;
            if clear_mean < 1.0 {
                clear_mean = 1.0;
                blocked_mean = target / (1.0 - target);
            }
            (1.0 / clear_mean, 1.0 / blocked_mean)
        };
        let blocked = rng.random::<f64>() < target;
        Self {
            enter_prob: enter,
            exit_prob: exit,
            target,
            blocked,
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> bool {
        let state = if self.target <= 0.0 {
            false
        } else if self.target >= 1.0 {
            true
        } else {
            self.blocked
        };
        // Transition after reporting, so the first scene is stationary.
        if self.blocked {
            if rng.random::<f64>() < self.exit_prob {
                self.blocked = false;
            }
        } else if rng.random::<f64>() < self.enter_prob {
            self.blocked = true;
        }
        state
    }
}

fn wrap_deg(a: f64) -> f64 {
    let mut w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        w = 180.0;
    }
    w
}

/// Generate a dataset. Deterministic for a fixed config (the seed drives a
/// single ChaCha8 stream consumed in episode/receiver/scene order). The
/// provided arrays should use orientation 0; stored angles are already in
/// each array's broadside frame.
pub fn synth_generate(cfg: &SynthConfig, tx: &ArrayConfig, rx: &ArrayConfig) -> Result<Dataset> {
    cfg.validate()?;
    let ct = Codebook::dft(tx.num_elements)?;
    let cr = Codebook::dft(rx.num_elements)?;
    let num_beams = tx.num_elements * rx.num_elements;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt_s = cfg.scene_interval_ms / 1000.0;
    let (bs_x, bs_y) = (cfg.bs_position_m[0], cfg.bs_position_m[1]);
    let suppression = 10f64.powf(-cfg.nlos_gain_penalty_db / 20.0);

    let mut episodes = Vec::with_capacity(cfg.num_episodes);
    for episode_id in 0..cfg.num_episodes {
        let mut receivers = Vec::with_capacity(cfg.receivers_per_episode);
        for receiver_id in 0..cfg.receivers_per_episode {
            let speed = rng.random_range(cfg.speed_range_mps[0]..=cfg.speed_range_mps[1]);
            let travel = speed * dt_s * (cfg.scenes_per_episode - 1) as f64;
            let dir: f64 = if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
            let start = if travel < cfg.street_length_m {
                let lo = if dir > 0.0 { 0.0 } else { travel };
                let hi = if dir > 0.0 {
                    cfg.street_length_m - travel
                } else {
                    cfg.street_length_m
                };
                rng.random_range(lo..=hi)
            } else if dir > 0.0 {
                0.0
            } else {
                cfg.street_length_m
            };
            let mut chain = BlockageChain::new(cfg.target_nlos_fraction, &mut rng);

            let mut scenes = Vec::with_capacity(cfg.scenes_per_episode);
            for scene_id in 0..cfg.scenes_per_episode {
                let y = start + dir * speed * dt_s * scene_id as f64;
                let pos = [0.0, y, UE_HEIGHT_M];
                let blocked = chain.step(&mut rng);

                let dx = -bs_x;
                let dy = y - bs_y;
                let d_xy = (dx * dx + dy * dy).sqrt();
                let dz = UE_HEIGHT_M - cfg.bs_height_m;
                let d3 = (d_xy * d_xy + dz * dz).sqrt().max(1.0);

                // Departure/arrival azimuths in the respective array frames
                // (BS broadside faces +x, UE broadside faces the BS side).
                let aod_az = wrap_deg(dy.atan2(dx).to_degrees());
                let aoa_az = wrap_deg((-dy).atan2(bs_x).to_degrees() - 180.0);
                let aod_el = (dz / d_xy).atan().to_degrees();
                let aoa_el = (-dz / d_xy).atan().to_degrees();

                let los_amp = 1.0 / d3;
                let mut mpcs = Vec::with_capacity(1 + cfg.nlos_paths);
                let amp = if blocked {
                    los_amp * suppression
                } else {
                    los_amp
                };
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                mpcs.push(MultipathComponent::new(
                    Complex64::from_polar(amp, phase),
                    aod_az,
                    aod_el,
                    aoa_az,
                    aoa_el,
                )?);
                if blocked {
                    for _ in 0..cfg.nlos_paths {
                        let r_amp = los_amp * suppression * rng.random_range(0.5..1.2);
                        let r_phase = rng.random_range(0.0..std::f64::consts::TAU);
                        mpcs.push(MultipathComponent::new(
                            Complex64::from_polar(r_amp, r_phase),
                            rng.random_range(-80.0..80.0),
                            rng.random_range(-10.0..10.0),
                            rng.random_range(-80.0..80.0),
                            rng.random_range(-10.0..10.0),
                        )?);
                    }
                }

                let h = channel_matrix(&mpcs, tx, rx)?;
                let gains = beam_gains(&h, &ct, &cr)?;
                scenes.push(Scene {
                    episode_id,
                    scene_id,
                    receiver_id,
                    rx_position: pos,
                    los: !blocked,
                    mpcs: Some(mpcs),
                    gains: Some(gains),
                    timestamp_ms: scene_id as f64 * cfg.scene_interval_ms,
                });
            }
            receivers.push(ReceiverSeries {
                receiver_id,
                scenes,
            });
        }
        episodes.push(Episode {
            id: episode_id,
            scene_interval_ms: cfg.scene_interval_ms,
            receivers,
        });
    }

    let ds = Dataset {
        n_tx: tx.num_elements,
        n_rx: rx.num_elements,
        scene_interval_ms: cfg.scene_interval_ms,
        num_beams,
        episodes,
    };
    ds.validate()?;
    Ok(ds)
}
