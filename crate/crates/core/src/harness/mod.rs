//! End-to-end experiment pipeline: dataset -> split -> train both heads ->
//! rollouts per schedule -> metrics -> report and plot tables.
//!
//! Every stage persists its artifacts under the output directory and reads
//! its inputs back from there, so stages are independently invocable and a
//! full `run` equals running the stages one by one. All randomness derives
//! from the master seed through [`stage_seed`].

mod config;
mod report;

pub use config::{
    stage_seed, ArraysConfig, ExperimentConfig, ModelConfig, ScenarioConfig, ScenarioKind,
};
pub use report::{
    emit_plot_data, metrics_from_records, DatasetSummary, Report, ReportEntry, RuntimeInfo,
    SplitSummary,
};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{
    ingest, split, stats, synth_generate, write_records, Dataset, RecordFormat, ScenarioStats,
};
use crate::error::{Error, Result};
use crate::model::{
    load_checkpoint, save_checkpoint, train, Head, ModelSpec, Parameters, TrainConfig,
};
use crate::tracking::{
    build_windows, expand_tx_subset, prefilter, rollout, to_batch, LstmPredictor, NormStats,
    Schedule, SeriesView, TrackRecord, WindowSample,
};

/// File layout under the output directory.
pub struct OutputLayout {
    root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.scenerecords")
    }

    pub fn stats(&self) -> PathBuf {
        self.root.join("stats.json")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn norm(&self) -> PathBuf {
        self.root.join("norm.json")
    }

    pub fn checkpoint(&self, head: &Head) -> PathBuf {
        self.root.join(format!("{}.ckpt", head.label()))
    }

    pub fn curves(&self) -> PathBuf {
        self.root.join("curves.json")
    }

    pub fn records_dir(&self) -> PathBuf {
        self.root.join("records")
    }

    pub fn records(&self, head: &Head, p: usize) -> PathBuf {
        self.records_dir()
            .join(format!("{}_p{p}.json", head.label()))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn heads(cfg: &ExperimentConfig) -> [Head; 2] {
    let m = cfg.arrays.num_beams();
    [
        Head::Classification { num_beams: m },
        Head::Regression { num_beams: m },
    ]
}

fn model_spec(cfg: &ExperimentConfig, head: Head) -> Result<ModelSpec> {
    ModelSpec::new(
        cfg.window.feature_dim(cfg.arrays.num_beams()),
        cfg.model.hidden_dims.clone(),
        cfg.model.dropout_rate,
        head,
    )
}

fn load_dataset(layout: &OutputLayout) -> Result<Dataset> {
    ingest(&layout.dataset(), RecordFormat::SceneRecords)
}

fn dataset_subset(ds: &Dataset, episode_ids: &[usize]) -> Dataset {
    Dataset {
        n_tx: ds.n_tx,
        n_rx: ds.n_rx,
        scene_interval_ms: ds.scene_interval_ms,
        num_beams: ds.num_beams,
        episodes: ds
            .episodes
            .iter()
            .filter(|e| episode_ids.contains(&e.id))
            .cloned()
            .collect(),
    }
}

/// Build or ingest the dataset, persist it in scene-records form, and write
/// its statistics. The synthetic generator's seed is the configured seed
/// folded with the data-stage sub-seed.
pub fn stage_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let layout = OutputLayout::new(&cfg.out_dir);
    std::fs::create_dir_all(&cfg.out_dir)?;
    let ds = match cfg.scenario.kind {
        ScenarioKind::Synth => {
            let mut sc = cfg.scenario.synth.clone();
            sc.seed ^= stage_seed(cfg.master_seed, "data");
            synth_generate(&sc, &cfg.arrays.tx()?, &cfg.arrays.rx()?)?
        }
        ScenarioKind::Ingest => {
            let path = cfg.scenario.path.as_ref().ok_or_else(|| {
                Error::Validation("ingest scenario needs a path".into())
            })?;
            let ds = ingest(path, RecordFormat::SceneRecords)?;
            if ds.num_beams != cfg.arrays.num_beams() {
                return Err(Error::Validation(format!(
                    "ingested dataset has M={} but arrays give {}",
                    ds.num_beams,
                    cfg.arrays.num_beams()
                )));
            }
            ds
        }
    };
    write_records(&ds, &layout.dataset())?;
    let st = stats(&ds, ds.num_beams)?;
    write_json(&layout.stats(), &st)?;
    Ok(ds)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Curves {
    classification: Vec<f64>,
    regression: Vec<f64>,
}

fn train_windows(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    norm: &NormStats,
) -> Result<Vec<WindowSample>> {
    let mut samples = Vec::new();
    for series in ds.series() {
        samples.extend(build_windows(series, &cfg.window, norm)?);
    }
    Ok(samples)
}

/// Split the dataset, fit normalization on the training side, and train both
/// heads. Persists the split, the normalization statistics, checkpoints, and
/// loss curves.
pub fn stage_train(cfg: &ExperimentConfig) -> Result<()> {
    let layout = OutputLayout::new(&cfg.out_dir);
    let ds = load_dataset(&layout)?;
    let (train_ds, test_ds) = split(&ds, cfg.test_fraction, stage_seed(cfg.master_seed, "split"))?;
    write_json(
        &layout.split(),
        &SplitSummary {
            train_episodes: train_ds.episodes.iter().map(|e| e.id).collect(),
            test_episodes: test_ds.episodes.iter().map(|e| e.id).collect(),
        },
    )?;
    let norm = NormStats::fit(cfg.window.rsrp_normalization, train_ds.series())?;
    write_json(&layout.norm(), &norm)?;

    let samples = train_windows(&train_ds, cfg, &norm)?;
    let mut curves = Curves {
        classification: Vec::new(),
        regression: Vec::new(),
    };
    for head in heads(cfg) {
        let spec = model_spec(cfg, head)?;
        let batch = to_batch(&samples, &head)?;
        let label = head.label();
        let init_seed = stage_seed(cfg.master_seed, &format!("init-{label}"));
        let params = Parameters::init(&spec, init_seed)?;
        let train_cfg = TrainConfig {
            seed: stage_seed(cfg.master_seed, &format!("train-{label}")),
            ..cfg.train.clone()
        };
        let outcome = train(params, &spec, &train_cfg, &batch)?;
        save_checkpoint(
            &layout.checkpoint(&head),
            &spec,
            &outcome.params,
            train_cfg.seed,
            train_cfg.epochs as u64,
        )?;
        match head {
            Head::Classification { .. } => curves.classification = outcome.loss_curve,
            Head::Regression { .. } => curves.regression = outcome.loss_curve,
        }
    }
    write_json(&layout.curves(), &curves)?;
    Ok(())
}

fn test_views(cfg: &ExperimentConfig, layout: &OutputLayout) -> Result<Vec<SeriesView>> {
    let ds = load_dataset(layout)?;
    let split: SplitSummary = read_json(&layout.split())?;
    let test_ds = dataset_subset(&ds, &split.test_episodes);
    let norm: NormStats = read_json(&layout.norm())?;
    test_ds
        .series()
        .map(|s| SeriesView::build(s, &cfg.window, &norm))
        .collect()
}

/// Roll out every configured schedule for both heads over the test episodes
/// and persist the track records, ordered by (episode, receiver).
pub fn stage_track(cfg: &ExperimentConfig) -> Result<()> {
    let layout = OutputLayout::new(&cfg.out_dir);
    let slot_interval_ms = load_dataset(&layout)?.scene_interval_ms;
    let views = test_views(cfg, &layout)?;
    std::fs::create_dir_all(layout.records_dir())?;

    let boresights = crate::channel::Codebook::dft(cfg.arrays.n_tx)?
        .boresight_azimuths_deg(cfg.arrays.element_spacing);

    for head in heads(cfg) {
        let (spec, params, _, _) = load_checkpoint(&layout.checkpoint(&head))?;
        let predictor = LstmPredictor {
            params: &params,
            spec: &spec,
        };
        for &p in &cfg.schedules {
            let schedule = Schedule::with_interval(p, slot_interval_ms)?;
            let mut records: Vec<TrackRecord> = Vec::with_capacity(views.len());
            for view in &views {
                let subsets = if cfg.prefilter.enabled {
                    let per_slot: Vec<Vec<usize>> = view
                        .positions
                        .iter()
                        .map(|&pos| {
                            let tx_subset = prefilter(pos, &cfg.prefilter, &boresights)?;
                            Ok(expand_tx_subset(&tx_subset, cfg.arrays.n_rx))
                        })
                        .collect::<Result<_>>()?;
                    Some(per_slot)
                } else {
                    None
                };
                records.push(rollout(
                    &predictor,
                    &schedule,
                    view,
                    &cfg.window,
                    subsets.as_deref(),
                )?);
            }
            write_json(&layout.records(&head, p), &records)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MetricsFile {
    baseline_top1: f64,
    entries: Vec<ReportEntry>,
}

/// Persistence-baseline Top-1 over the rollout slots of the given views.
fn baseline_top1(views: &[SeriesView], window_len: usize) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for view in views {
        if view.len() <= window_len {
            return Err(Error::InvalidInput(
                "series too short for baseline".into(),
            ));
        }
        let preds = crate::tracking::persistence_baseline(&view.best)?;
        for slot in window_len..view.len() {
            if preds[slot - 1] == view.best[slot] {
                hits += 1;
            }
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Recompute all metrics from the persisted track records.
pub fn stage_eval(cfg: &ExperimentConfig) -> Result<(f64, Vec<ReportEntry>)> {
    let layout = OutputLayout::new(&cfg.out_dir);
    let views = test_views(cfg, &layout)?;
    let baseline = baseline_top1(&views, cfg.window.window_len)?;
    let mut entries = Vec::new();
    for head in heads(cfg) {
        for &p in &cfg.schedules {
            let records: Vec<TrackRecord> = read_json(&layout.records(&head, p))?;
            entries.push(metrics_from_records(&records, &head, p, &cfg.top_k)?);
        }
    }
    write_json(
        &layout.metrics(),
        &MetricsFile {
            baseline_top1: baseline,
            entries: entries.clone(),
        },
    )?;
    Ok((baseline, entries))
}

/// Assemble the report from persisted artifacts and emit the plot tables.
pub fn stage_report(cfg: &ExperimentConfig) -> Result<Report> {
    let layout = OutputLayout::new(&cfg.out_dir);
    let ds = load_dataset(&layout)?;
    let st: ScenarioStats = read_json(&layout.stats())?;
    let split: SplitSummary = read_json(&layout.split())?;
    let metrics: MetricsFile = read_json(&layout.metrics())?;
    let report = Report {
        config_digest: cfg.digest(),
        master_seed: cfg.master_seed,
        dataset: DatasetSummary {
            episodes: ds.episodes.len(),
            total_scenes: ds.total_scenes(),
            n_tx: ds.n_tx,
            n_rx: ds.n_rx,
            num_beams: ds.num_beams,
            stats: st,
        },
        split,
        baseline_top1: metrics.baseline_top1,
        entries: metrics.entries,
        runtime: RuntimeInfo::default(),
    };
    write_json(&layout.report(), &report)?;
    emit_plot_data(&report, &layout.plots_dir())?;
    Ok(report)
}

/// Run the full pipeline. Deterministic for a fixed config and master seed;
/// the runtime field is the only volatile part of the report.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let started = Instant::now();
    stage_data(cfg).map_err(|e| e.in_stage("data"))?;
    stage_train(cfg).map_err(|e| e.in_stage("train"))?;
    stage_track(cfg).map_err(|e| e.in_stage("track"))?;
    stage_eval(cfg).map_err(|e| e.in_stage("eval"))?;
    let mut report = stage_report(cfg).map_err(|e| e.in_stage("report"))?;
    report.runtime.total_seconds = started.elapsed().as_secs_f64();
    let layout = OutputLayout::new(&cfg.out_dir);
    write_json(&layout.report(), &report)?;
    Ok(report)
}
