//! The scene-records file format: a header line followed by one scene per
//! line.
//!
//! Header: `scene-records n_tx=<int> n_rx=<int> scene_interval_ms=<real> M=<int>`
//!
//! Record: `<episode_id> <scene_id> <receiver_id> <x> <y> <z> <los 0/1>` then
//! either `mpc` followed by `6*L` reals (`gain_re gain_im aod_az aod_el
//! aoa_az aoa_el` per path) or `gains` followed by `M` linear magnitudes.
//! Blank lines and `#` comments are skipped. Floats are written with Rust's
//! shortest round-trip formatting, so write-then-ingest is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::channel::{beam_gains, channel_matrix, ArrayConfig, BeamGainVector, Codebook, MultipathComponent};
use crate::error::{Error, Result};

use super::{Dataset, Episode, ReceiverSeries, Scene};

/// Supported ingest formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    SceneRecords,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

struct Header {
    n_tx: usize,
    n_rx: usize,
    scene_interval_ms: f64,
    num_beams: usize,
}

fn parse_header(line: &str, line_no: usize) -> Result<Header> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("scene-records") {
        return Err(parse_err(line_no, "header must start with 'scene-records'"));
    }
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(line_no, format!("bad header token '{tok}'")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| parse_err(line_no, format!("header missing '{k}'")))
    };
    let n_tx: usize = get("n_tx")?
        .parse()
        .map_err(|_| parse_err(line_no, "bad n_tx"))?;
    let n_rx: usize = get("n_rx")?
        .parse()
        .map_err(|_| parse_err(line_no, "bad n_rx"))?;
    let scene_interval_ms: f64 = get("scene_interval_ms")?
        .parse()
        .map_err(|_| parse_err(line_no, "bad scene_interval_ms"))?;
    let num_beams: usize = get("M")?
        .parse()
        .map_err(|_| parse_err(line_no, "bad M"))?;
    if n_tx == 0 || n_rx == 0 || num_beams == 0 {
        return Err(parse_err(line_no, "header counts must be positive"));
    }
    if !scene_interval_ms.is_finite() || scene_interval_ms <= 0.0 {
        return Err(parse_err(line_no, "scene_interval_ms must be positive"));
    }
    if num_beams != n_tx * n_rx {
        return Err(Error::Validation(format!(
            "header M={num_beams} does not equal n_tx*n_rx={}",
            n_tx * n_rx
        )));
    }
    Ok(Header {
        n_tx,
        n_rx,
        scene_interval_ms,
        num_beams,
    })
}

/// Read and validate a scene-records file. When records carry raw multipath
/// components, per-scene gains are computed with matched DFT codebooks on
/// half-wavelength uniform linear arrays sized from the header.
pub fn ingest(path: &Path, format: RecordFormat) -> Result<Dataset> {
    let RecordFormat::SceneRecords = format;
    let text = fs::read_to_string(path)?;
    ingest_str(&text)
}

fn ingest_str(text: &str) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        });
    let (hline_no, hline) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file, expected header"))?;
    let header = parse_header(hline, hline_no)?;

    let tx = ArrayConfig::ula(header.n_tx)?;
    let rx = ArrayConfig::ula(header.n_rx)?;
    let ct = Codebook::dft(header.n_tx)?;
    let cr = Codebook::dft(header.n_rx)?;

    // (episode, receiver) -> scene series, in scene order.
    let mut series: BTreeMap<(usize, usize), Vec<Scene>> = BTreeMap::new();

    for (line_no, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 8 {
            return Err(parse_err(line_no, "record needs at least 8 fields"));
        }
        let episode_id: usize = toks[0]
            .parse()
            .map_err(|_| parse_err(line_no, "bad episode_id"))?;
        let scene_id: usize = toks[1]
            .parse()
            .map_err(|_| parse_err(line_no, "bad scene_id"))?;
        let receiver_id: usize = toks[2]
            .parse()
            .map_err(|_| parse_err(line_no, "bad receiver_id"))?;
        let mut pos = [0.0f64; 3];
        for (i, p) in pos.iter_mut().enumerate() {
            *p = toks[3 + i]
                .parse()
                .map_err(|_| parse_err(line_no, "bad position coordinate"))?;
        }
        let los = match toks[6] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line_no, format!("bad los flag '{other}'"))),
        };
        let tag = toks[7];
        let rest = &toks[8..];
        if rest.contains(&"mpc") || rest.contains(&"gains") {
            return Err(Error::Validation(format!(
                "line {line_no}: record mixes mpc and gains payloads"
            )));
        }
        let reals: Vec<f64> = rest
            .iter()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| parse_err(line_no, format!("bad real '{t}'")))
            })
            .collect::<Result<_>>()?;

        let (mpcs, gains) = match tag {
            "mpc" => {
                if reals.is_empty() || !reals.len().is_multiple_of(6) {
                    return Err(parse_err(
                        line_no,
                        format!("mpc payload must be 6*L reals, got {}", reals.len()),
                    ));
                }
                let mpcs: Vec<MultipathComponent> = reals
                    .chunks(6)
                    .map(|c| {
                        MultipathComponent::new(
                            Complex64::new(c[0], c[1]),
                            c[2],
                            c[3],
                            c[4],
                            c[5],
                        )
                    })
                    .collect::<Result<_>>()
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                let h = channel_matrix(&mpcs, &tx, &rx)?;
                let gains = beam_gains(&h, &ct, &cr)?;
                (Some(mpcs), Some(gains))
            }
            "gains" => {
                if reals.len() != header.num_beams {
                    return Err(parse_err(
                        line_no,
                        format!(
                            "gains payload must hold M={} reals, got {}",
                            header.num_beams,
                            reals.len()
                        ),
                    ));
                }
                let gains = BeamGainVector::from_magnitudes(reals)
                    .map_err(|e| parse_err(line_no, e.to_string()))?;
                (None, Some(gains))
            }
            other => {
                return Err(parse_err(
                    line_no,
                    format!("unknown payload tag '{other}', expected 'mpc' or 'gains'"),
                ))
            }
        };

        let entry = series.entry((episode_id, receiver_id)).or_default();
        if let Some(last) = entry.last() {
            if scene_id <= last.scene_id {
                return Err(Error::Validation(format!(
                    "line {line_no}: scene_id {scene_id} not increasing within episode {episode_id} receiver {receiver_id}"
                )));
            }
        }
        entry.push(Scene {
            episode_id,
            scene_id,
            receiver_id,
            rx_position: pos,
            los,
            mpcs,
            gains,
            timestamp_ms: scene_id as f64 * header.scene_interval_ms,
        });
    }

    if series.is_empty() {
        return Err(Error::Validation("file has no scene records".into()));
    }

    let mut episodes: BTreeMap<usize, Vec<ReceiverSeries>> = BTreeMap::new();
    for ((episode_id, receiver_id), scenes) in series {
        for (i, scene) in scenes.iter().enumerate() {
            if scene.scene_id != i {
                return Err(Error::Validation(format!(
                    "episode {episode_id} receiver {receiver_id}: scene ids skip a value at {}",
                    scene.scene_id
                )));
            }
        }
        episodes.entry(episode_id).or_default().push(ReceiverSeries {
            receiver_id,
            scenes,
        });
    }

    let ds = Dataset {
        n_tx: header.n_tx,
        n_rx: header.n_rx,
        scene_interval_ms: header.scene_interval_ms,
        num_beams: header.num_beams,
        episodes: episodes
            .into_iter()
            .map(|(id, receivers)| Episode {
                id,
                scene_interval_ms: header.scene_interval_ms,
                receivers,
            })
            .collect(),
    };
    ds.validate()?;
    Ok(ds)
}

/// Write a dataset in the scene-records format. Scenes with raw multipath
/// components are written as `mpc` records (gains are recomputed on ingest);
/// others as `gains` records.
pub fn write_records(ds: &Dataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut out = String::new();
    writeln!(
        out,
        "scene-records n_tx={} n_rx={} scene_interval_ms={} M={}",
        ds.n_tx, ds.n_rx, ds.scene_interval_ms, ds.num_beams
    )
    .unwrap();
    for ep in &ds.episodes {
        for rcv in &ep.receivers {
            for scene in &rcv.scenes {
                write!(
                    out,
                    "{} {} {} {} {} {} {}",
                    scene.episode_id,
                    scene.scene_id,
                    scene.receiver_id,
                    scene.rx_position[0],
                    scene.rx_position[1],
                    scene.rx_position[2],
                    if scene.los { 1 } else { 0 }
                )
                .unwrap();
                match (&scene.mpcs, &scene.gains) {
                    (Some(mpcs), _) => {
                        out.push_str(" mpc");
                        for m in mpcs {
                            write!(
                                out,
                                " {} {} {} {} {} {}",
                                m.gain.re,
                                m.gain.im,
                                m.aod_az_deg,
                                m.aod_el_deg,
                                m.aoa_az_deg,
                                m.aoa_el_deg
                            )
                            .unwrap();
                        }
                    }
                    (None, Some(g)) => {
                        out.push_str(" gains");
                        for v in &g.gains {
                            write!(out, " {v}").unwrap();
                        }
                    }
                    (None, None) => unreachable!("validated above"),
                }
                out.push('\n');
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
