//! Experiment report: per (head, schedule) metrics recomputable from the
//! persisted track records, plus plot-data emission.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ScenarioStats;
use crate::error::{Error, Result};
use crate::metrics::{mor, throughput_ratio, topk_accuracy, topk_regression, TopKResult};
use crate::model::Head;
use crate::tracking::TrackRecord;

/// Finite stand-in for masked-out scores (JSON cannot carry -inf).
const MASKED_SCORE: f64 = -1e300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub episodes: usize,
    pub total_scenes: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub num_beams: usize,
    pub stats: ScenarioStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train_episodes: Vec<usize>,
    pub test_episodes: Vec<usize>,
}

/// Metrics of one (head, schedule) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub head: String,
    pub schedule_p: usize,
    pub mor_percent: f64,
    pub throughput_ratio: f64,
    pub n_slots: usize,
    pub n_measured: usize,
    pub top_k: Vec<TopKResult>,
}

/// Wall-clock info; excluded from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RuntimeInfo {
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_digest: String,
    pub master_seed: u64,
    pub dataset: DatasetSummary,
    pub split: SplitSummary,
    /// Top-1 accuracy of the persistence baseline over the same test slots.
    pub baseline_top1: f64,
    pub entries: Vec<ReportEntry>,
    pub runtime: RuntimeInfo,
}

impl Report {
    pub fn entry(&self, head: &str, p: usize) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.head == head && e.schedule_p == p)
    }

    /// Copy with volatile fields zeroed, for determinism comparisons.
    pub fn stable(&self) -> Report {
        Report {
            runtime: RuntimeInfo::default(),
            ..self.clone()
        }
    }
}

/// Aggregate metrics over all rollout records of one (head, schedule) pair.
/// Pure function of the records, so a report can be reproduced from the
/// persisted artifacts alone.
pub fn metrics_from_records(
    records: &[TrackRecord],
    head: &Head,
    schedule_p: usize,
    top_k: &[usize],
) -> Result<ReportEntry> {
    if records.is_empty() {
        return Err(Error::Validation("no track records".into()));
    }
    let mut scores: Vec<Vec<f64>> = Vec::new();
    let mut true_best: Vec<usize> = Vec::new();
    let mut true_gains: Vec<Vec<f64>> = Vec::new();
    let mut chosen_gain: Vec<f64> = Vec::new();
    let mut best_gain: Vec<f64> = Vec::new();
    let mut n_measured = 0usize;
    for rec in records {
        if rec.schedule_p != schedule_p {
            return Err(Error::Validation(format!(
                "record for p={} mixed into p={schedule_p} evaluation",
                rec.schedule_p
            )));
        }
        n_measured += rec.n_measured();
        for slot in &rec.slots {
            let masked = match &slot.subset {
                None => slot.predicted_scores.clone(),
                Some(subset) => {
                    let mut v = vec![MASKED_SCORE; slot.predicted_scores.len()];
                    for &i in subset {
                        v[i] = slot.predicted_scores[i];
                    }
                    v
                }
            };
            scores.push(masked);
            true_best.push(slot.true_best);
            true_gains.push(slot.true_gains_pow.clone());
            chosen_gain.push(slot.chosen_gain_pow);
            best_gain.push(slot.true_gains_pow[slot.true_best]);
        }
    }
    let n_slots = scores.len();
    let mut top_k_results = Vec::with_capacity(top_k.len());
    for &k in top_k {
        let r = match head {
            Head::Classification { .. } => topk_accuracy(&scores, &true_best, k)?,
            Head::Regression { .. } => topk_regression(&scores, &true_gains, k)?,
        };
        top_k_results.push(r);
    }
    let tr = throughput_ratio(&chosen_gain, &best_gain)?;
    Ok(ReportEntry {
        head: head.label().to_string(),
        schedule_p,
        mor_percent: mor(n_measured, n_slots)?,
        throughput_ratio: tr.ratio,
        n_slots,
        n_measured,
        top_k: top_k_results,
    })
}

fn push_float(line: &mut String, v: f64) {
    // Shortest round-trip formatting keeps emitted values bit-equal to the
    // report's.
    write!(line, ",{v}").unwrap();
}

/// Write the plot tables behind the report: Top-K accuracy per schedule,
/// throughput ratio and MOR per model, and the dataset's beam-dynamics
/// summary. One CSV per family, header row included, values copied from the
/// report without recomputation.
pub fn emit_plot_data(report: &Report, dir: &Path) -> Result<()> {
    if report.entries.is_empty() {
        return Err(Error::Validation(
            "report has no entries to plot".into(),
        ));
    }
    if report.entries.iter().any(|e| e.top_k.is_empty()) {
        return Err(Error::Validation("report entry without top-k table".into()));
    }
    std::fs::create_dir_all(dir)?;

    let mut topk = String::from("head,schedule_p,k,accuracy,hits,total\n");
    for e in &report.entries {
        for r in &e.top_k {
            let mut line = format!("{},{},{}", e.head, e.schedule_p, r.k);
            push_float(&mut line, r.accuracy);
            write!(line, ",{},{}", r.hits, r.total).unwrap();
            topk.push_str(&line);
            topk.push('\n');
        }
    }
    std::fs::write(dir.join("topk.csv"), topk)?;

    let mut tr = String::from("head,schedule_p,throughput_ratio,mor_percent,n_slots,n_measured\n");
    for e in &report.entries {
        let mut line = format!("{},{}", e.head, e.schedule_p);
        push_float(&mut line, e.throughput_ratio);
        push_float(&mut line, e.mor_percent);
        write!(line, ",{},{}", e.n_slots, e.n_measured).unwrap();
        tr.push_str(&line);
        tr.push('\n');
    }
    std::fs::write(dir.join("throughput.csv"), tr)?;

    let mut mafd = String::from(
        "episodes,total_scenes,los_count,nlos_count,mafd,beam_gain_variance_db\n",
    );
    let d = &report.dataset;
    let mut line = format!(
        "{},{},{},{}",
        d.episodes, d.total_scenes, d.stats.los_count, d.stats.nlos_count
    );
    push_float(&mut line, d.stats.mafd);
    push_float(&mut line, d.stats.beam_gain_variance_db);
    mafd.push_str(&line);
    mafd.push('\n');
    std::fs::write(dir.join("mafd.csv"), mafd)?;
    Ok(())
}
