//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and prints one pass/fail line (visible with `--nocapture`).
//!
//! Criterion 11 needs externally converted scene-records files and is
//! ignored by default; point BEAMTRACK_R50_RECORDS / BEAMTRACK_M10_RECORDS /
//! BEAMTRACK_R10_RECORDS at the converted files to run it.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use beamtrack_core::channel::{
    beam_gains, ArrayConfig, BeamGainVector, ChannelMatrix, Codebook,
};
use beamtrack_core::dataset::{
    ingest, split, stats, synth_generate, RecordFormat, SynthConfig,
};
use beamtrack_core::harness::{self, metrics_from_records, stage_seed, ExperimentConfig};
use beamtrack_core::metrics::{circular_diff, mafd, mor, topk_accuracy};
use beamtrack_core::model::{
    backward, forward, loss, train, Head, ModelSpec, Parameters, SequenceBatch, TrainConfig,
    Targets,
};
use beamtrack_core::tracking::{
    build_windows, rollout, to_batch, FeatureMode, LstmPredictor, NormStats, OraclePredictor,
    Schedule, SeriesView, SlotKind, WindowConfig,
};

fn pass(n: usize, name: &str) {
    println!("acceptance {n} ({name}): PASS");
}

/// Criterion 1: the circular-difference sequence of 1,1,0,2,1,2,0 with three
/// beams is exactly 0,1,1,1,1,1 and its mean is exactly 5/6.
#[test]
fn criterion_01_mafd_worked_example() {
    let seq = [1usize, 1, 0, 2, 1, 2, 0];
    let diffs: Vec<usize> = seq
        .windows(2)
        .map(|w| circular_diff(w[0], w[1], 3).unwrap())
        .collect();
    assert_eq!(diffs, vec![0, 1, 1, 1, 1, 1]);
    let m = mafd(&[seq.to_vec()], 3).unwrap();
    assert_eq!(m, 5.0 / 6.0);
    pass(1, "mafd worked example");
}

fn toy_view(scenes: usize) -> SeriesView {
    use beamtrack_core::dataset::{ReceiverSeries, Scene};
    let series = ReceiverSeries {
        receiver_id: 0,
        scenes: (0..scenes)
            .map(|i| Scene {
                episode_id: 0,
                scene_id: i,
                receiver_id: 0,
                rx_position: [0.0, i as f64, 1.5],
                los: true,
                mpcs: None,
                gains: Some(
                    BeamGainVector::from_magnitudes(vec![1.0 + (i % 5) as f64, 0.5, 0.25])
                        .unwrap(),
                ),
                timestamp_ms: i as f64 * 80.0,
            })
            .collect(),
    };
    let wcfg = WindowConfig::default();
    let norm = NormStats::Zscore { mean: 0.0, sd: 1.0 };
    SeriesView::build(&series, &wcfg, &norm).unwrap()
}

/// Criterion 2: rollout provenance for p = 1, 2, 3 over >= 100 slots gives
/// MOR of 50%, 66.7%, 75% within one percentage point.
#[test]
fn criterion_02_mor_schedule_values() {
    let wcfg = WindowConfig::default();
    let view = toy_view(124); // 120 rollout slots
    let oracle = OraclePredictor { view: &view };
    for (p, expect) in [(1usize, 50.0), (2, 200.0 / 3.0), (3, 75.0)] {
        let rec = rollout(&oracle, &Schedule::new(p).unwrap(), &view, &wcfg, None).unwrap();
        assert!(rec.n_slots() >= 100);
        let got = mor(rec.n_measured(), rec.n_slots()).unwrap();
        assert!(
            (got - expect).abs() <= 1.0,
            "p={p}: MOR {got} vs {expect}"
        );
    }
    pass(2, "MOR schedule values");
}

/// Criterion 3: DFT codebook Gram matrices equal identity within 1e-9 for
/// every size from 1 to 64.
#[test]
fn criterion_03_codebook_unitarity() {
    for n in 1..=64usize {
        let c = Codebook::dft(n).unwrap();
        let (off, diag) = c.gram_defect();
        assert!(off <= 1e-9, "n={n}: off-diagonal {off}");
        assert!(diag <= 1e-9, "n={n}: diagonal defect {diag}");
    }
    pass(3, "codebook unitarity");
}

/// Criterion 4: beam gains match an independent scalar double-loop
/// evaluation of the combined channel within 1e-10 relative, over 100
/// random channels up to 8x8.
#[test]
fn criterion_04_channel_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..100 {
        let n_tx = rng.random_range(1..=8usize);
        let n_rx = rng.random_range(1..=8usize);
        let entries = Array2::from_shape_fn((n_rx, n_tx), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let h = ChannelMatrix { entries };
        let ct = Codebook::dft(n_tx).unwrap();
        let cr = Codebook::dft(n_rx).unwrap();
        let got = beam_gains(&h, &ct, &cr).unwrap();
        for t in 0..n_tx {
            for r in 0..n_rx {
                let mut y = Complex64::new(0.0, 0.0);
                for a in 0..n_rx {
                    for b in 0..n_tx {
                        y += cr.vector(r)[a].conj() * h.entries[[a, b]] * ct.vector(t)[b];
                    }
                }
                let i = t * n_rx + r;
                let expect = y.norm();
                assert!(
                    (got.gains[i] - expect).abs() <= 1e-10 * expect.max(1.0),
                    "trial {trial} beam {i}: {} vs {expect}",
                    got.gains[i]
                );
            }
        }
    }
    pass(4, "channel oracle equivalence");
}

fn loss_of(spec: &ModelSpec, params: &Parameters, batch: &SequenceBatch) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (out, _) = forward(params, spec, &batch.inputs, false, &mut rng).unwrap();
    loss(&out, &batch.targets, &spec.head).unwrap()
}

/// Criterion 5: analytic gradients match central finite differences
/// (step 1e-5) within 1e-4 relative on every parameter, 20 random trials.
#[test]
fn criterion_05_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for trial in 0..20 {
        let input_dim = rng.random_range(2..=5usize);
        let n_layers = rng.random_range(1..=2usize);
        let hidden: Vec<usize> = (0..n_layers).map(|_| rng.random_range(2..=8)).collect();
        let window = rng.random_range(1..=4usize);
        let batch_n = rng.random_range(1..=4usize);
        let m = rng.random_range(2..=6usize);
        let head = if trial % 2 == 0 {
            Head::Classification { num_beams: m }
        } else {
            Head::Regression { num_beams: m }
        };
        let spec = ModelSpec::new(input_dim, hidden, 0.0, head).unwrap();
        let params = Parameters::init(&spec, 1000 + trial as u64).unwrap();
        let inputs = ndarray::Array3::from_shape_fn((batch_n, window, input_dim), |_| {
            rng.random_range(-1.0..1.0)
        });
        let targets = match head {
            Head::Classification { .. } => {
                Targets::Classes((0..batch_n).map(|_| rng.random_range(0..m)).collect())
            }
            Head::Regression { .. } => Targets::Gains(Array2::from_shape_fn(
                (batch_n, m),
                |_| rng.random_range(-1.0..1.0),
            )),
        };
        let batch = SequenceBatch::new(inputs, targets).unwrap();
        let (_, cache) = forward(
            &params,
            &spec,
            &batch.inputs,
            false,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let analytic = backward(&params, &spec, &batch, &cache).unwrap().to_flat();

        let base = params.to_flat();
        let step = 1e-5;
        for k in 0..base.len() {
            let mut plus = base.clone();
            plus[k] += step;
            let mut minus = base.clone();
            minus[k] -= step;
            let lp = loss_of(&spec, &Parameters::from_flat(&spec, &plus).unwrap(), &batch);
            let lm = loss_of(&spec, &Parameters::from_flat(&spec, &minus).unwrap(), &batch);
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(
                rel <= 1e-4,
                "trial {trial} param {k}: analytic {a} vs numeric {numeric} (rel {rel})"
            );
        }
    }
    pass(5, "gradient check");
}

/// Criterion 6: predictions fixed to the true argmax beam give a throughput
/// ratio of exactly 1.0.
#[test]
fn criterion_06_oracle_throughput_ratio() {
    let synth = SynthConfig {
        num_episodes: 6,
        scenes_per_episode: 20,
        target_nlos_fraction: 0.3,
        seed: 606,
        ..SynthConfig::default()
    };
    let tx = ArrayConfig::ula(8).unwrap();
    let rx = ArrayConfig::ula(1).unwrap();
    let ds = synth_generate(&synth, &tx, &rx).unwrap();
    let wcfg = WindowConfig::default();
    let norm = NormStats::fit(wcfg.rsrp_normalization, ds.series()).unwrap();
    let mut records = Vec::new();
    for series in ds.series() {
        let view = SeriesView::build(series, &wcfg, &norm).unwrap();
        let oracle = OraclePredictor { view: &view };
        records.push(rollout(&oracle, &Schedule::new(0).unwrap(), &view, &wcfg, None).unwrap());
    }
    let entry = metrics_from_records(
        &records,
        &Head::Regression { num_beams: 8 },
        0,
        &[1],
    )
    .unwrap();
    assert_eq!(entry.throughput_ratio, 1.0);
    assert_eq!(entry.top_k[0].accuracy, 1.0);
    pass(6, "oracle throughput ratio");
}

/// Criterion 7: on 10^4 random score/truth pairs, Top-K accuracy is
/// non-decreasing in K, equals 1 at K = M, and matches a full-sort oracle
/// exactly.
#[test]
fn criterion_07_topk_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let m = 16usize;
    let n = 10_000usize;
    let scores: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..1.0)).collect())
        .collect();
    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    let mut prev = 0.0;
    for k in 1..=m {
        let got = topk_accuracy(&scores, &truth, k).unwrap();
        assert!(got.accuracy >= prev, "k={k} not monotone");
        prev = got.accuracy;

        let mut oracle_hits = 0usize;
        for (s, &t) in scores.iter().zip(truth.iter()) {
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
            if idx[..k].contains(&t) {
                oracle_hits += 1;
            }
        }
        assert_eq!(got.hits, oracle_hits, "k={k} differs from sort oracle");
    }
    assert_eq!(prev, 1.0);
    pass(7, "top-k laws");
}

/// Shared desk-scale experiment: 200 episodes, M = 16, 10% NLOS.
fn desk_scale_config(out_dir: std::path::PathBuf) -> ExperimentConfig {
    use beamtrack_core::harness::{ArraysConfig, ModelConfig, ScenarioConfig};
    use beamtrack_core::model::TrainConfig;
    ExperimentConfig {
        master_seed: 7,
        out_dir,
        scenario: ScenarioConfig {
            synth: SynthConfig {
                num_episodes: 200,
                receivers_per_episode: 1,
                scenes_per_episode: 30,
                target_nlos_fraction: 0.1,
                seed: 1234,
                ..SynthConfig::default()
            },
            ..ScenarioConfig::default()
        },
        arrays: ArraysConfig {
            n_tx: 16,
            n_rx: 1,
            ..ArraysConfig::default()
        },
        window: WindowConfig {
            feature_mode: FeatureMode::RsrpPlusOnehotIndex,
            ..WindowConfig::default()
        },
        model: ModelConfig {
            hidden_dims: vec![64],
            dropout_rate: 0.05,
        },
        train: TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        },
        schedules: vec![0],
        top_k: vec![1, 5],
        ..ExperimentConfig::default()
    }
}

/// Criterion 8: on a LOS-dominant synthetic set (10% NLOS, 200 episodes,
/// M = 16) the trained classifier reaches Top-5 >= 0.85 under full
/// measurement and its Top-1 strictly exceeds the persistence baseline.
#[test]
fn criterion_08_desk_scale_end_to_end() {
    let started = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_scale_config(dir.path().join("out"));
    let report = harness::run(&cfg).unwrap();
    let entry = report.entry("classification", 0).unwrap();
    let top1 = entry.top_k[0].accuracy;
    let top5 = entry.top_k[1].accuracy;
    assert!(top5 >= 0.85, "classification top-5 {top5} below 0.85");
    assert!(
        top1 > report.baseline_top1,
        "classification top-1 {top1} does not beat persistence {}",
        report.baseline_top1
    );
    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 300.0, "end-to-end run took {secs:.0}s");
    pass(8, "desk-scale end-to-end");
}

/// Criterion 9: mean regression Top-5 over three training seeds declines
/// gradually: full >= p=1 >= p=2 >= p=3 within a two-percentage-point
/// allowance per adjacent pair.
#[test]
fn criterion_09_autoregressive_degradation_trend() {
    let synth = SynthConfig {
        num_episodes: 200,
        receivers_per_episode: 1,
        scenes_per_episode: 30,
        target_nlos_fraction: 0.1,
        seed: 1234,
        ..SynthConfig::default()
    };
    let tx = ArrayConfig::ula(16).unwrap();
    let rx = ArrayConfig::ula(1).unwrap();
    let ds = synth_generate(&synth, &tx, &rx).unwrap();
    let (train_ds, test_ds) = split(&ds, 0.2, stage_seed(7, "split")).unwrap();
    let wcfg = WindowConfig {
        feature_mode: FeatureMode::RsrpPlusOnehotIndex,
        ..WindowConfig::default()
    };
    let norm = NormStats::fit(wcfg.rsrp_normalization, train_ds.series()).unwrap();
    let mut samples = Vec::new();
    for s in train_ds.series() {
        samples.extend(build_windows(s, &wcfg, &norm).unwrap());
    }
    let head = Head::Regression { num_beams: 16 };
    let spec = ModelSpec::new(32, vec![64], 0.05, head).unwrap();
    let batch = to_batch(&samples, &head).unwrap();
    let views: Vec<SeriesView> = test_ds
        .series()
        .map(|s| SeriesView::build(s, &wcfg, &norm).unwrap())
        .collect();

    let mut mean_top5 = [0.0f64; 4];
    let seeds = [11u64, 22, 33];
    for &seed in &seeds {
        let params = Parameters::init(&spec, seed).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            seed: seed.wrapping_add(1),
            ..TrainConfig::default()
        };
        let outcome = train(params, &spec, &cfg, &batch).unwrap();
        let predictor = LstmPredictor {
            params: &outcome.params,
            spec: &spec,
        };
        for (p, mean) in mean_top5.iter_mut().enumerate() {
            let sched = Schedule::new(p).unwrap();
            let records: Vec<_> = views
                .iter()
                .map(|v| rollout(&predictor, &sched, v, &wcfg, None).unwrap())
                .collect();
            let entry = metrics_from_records(&records, &head, p, &[5]).unwrap();
            *mean += entry.top_k[0].accuracy / seeds.len() as f64;
        }
    }
    println!(
        "mean regression top-5 by p: {:.4} {:.4} {:.4} {:.4}",
        mean_top5[0], mean_top5[1], mean_top5[2], mean_top5[3]
    );
    for (p, pair) in mean_top5.windows(2).enumerate() {
        assert!(
            pair[0] >= pair[1] - 0.02,
            "top-5 rose by more than 2pp from p={p} ({}) to p={} ({})",
            pair[0],
            p + 1,
            pair[1]
        );
    }
    pass(9, "autoregressive degradation trend");
}

/// Criterion 10: a perfect predictor makes rollouts at any p reproduce the
/// p = 0 results exactly.
#[test]
fn criterion_10_perfect_predictor_equivalence() {
    let synth = SynthConfig {
        num_episodes: 4,
        scenes_per_episode: 40,
        target_nlos_fraction: 0.4,
        seed: 1010,
        ..SynthConfig::default()
    };
    let tx = ArrayConfig::ula(8).unwrap();
    let rx = ArrayConfig::ula(2).unwrap();
    let ds = synth_generate(&synth, &tx, &rx).unwrap();
    let norm = NormStats::fit(
        beamtrack_core::tracking::RsrpNormalization::MinmaxDb,
        ds.series(),
    )
    .unwrap();
    for mode in [FeatureMode::RsrpVector, FeatureMode::RsrpPlusOnehotIndex] {
        let wcfg = WindowConfig {
            feature_mode: mode,
            ..WindowConfig::default()
        };
        for series in ds.series() {
            let view = SeriesView::build(series, &wcfg, &norm).unwrap();
            let oracle = OraclePredictor { view: &view };
            let base =
                rollout(&oracle, &Schedule::new(0).unwrap(), &view, &wcfg, None).unwrap();
            for p in 1..=3usize {
                let rec =
                    rollout(&oracle, &Schedule::new(p).unwrap(), &view, &wcfg, None).unwrap();
                assert_eq!(base.slots.len(), rec.slots.len());
                for (a, b) in base.slots.iter().zip(rec.slots.iter()) {
                    assert_eq!(a.predicted_scores, b.predicted_scores);
                    assert_eq!(a.chosen, b.chosen);
                    assert_eq!(a.true_best, b.true_best);
                    assert_eq!(a.chosen_gain_pow, b.chosen_gain_pow);
                }
            }
        }
    }
    pass(10, "perfect predictor equivalence");
}

/// Criterion 11 (optional, external data): converted public ray-tracing
/// records reproduce the reference LOS/NLOS counts and MAFD values of
/// those captures.
#[test]
#[ignore = "needs externally converted scene-records files"]
fn criterion_11_external_dataset_statistics() {
    let cases = [
        ("BEAMTRACK_R50_RECORDS", 14_982usize, 13_306usize, 2.04f64),
        ("BEAMTRACK_M10_RECORDS", 27_800, 2_200, 0.92),
        ("BEAMTRACK_R10_RECORDS", 27_899, 2_101, 1.97),
    ];
    let mut checked = 0;
    for (var, los, nlos, mafd_expect) in cases {
        let Ok(path) = std::env::var(var) else {
            continue;
        };
        let ds = ingest(std::path::Path::new(&path), RecordFormat::SceneRecords).unwrap();
        let st = stats(&ds, ds.num_beams).unwrap();
        assert_eq!(st.los_count, los, "{var}: LOS count");
        assert_eq!(st.nlos_count, nlos, "{var}: NLOS count");
        assert!(
            (st.mafd - mafd_expect).abs() <= 0.01,
            "{var}: MAFD {} vs {mafd_expect}",
            st.mafd
        );
        checked += 1;
    }
    assert!(checked > 0, "no BEAMTRACK_*_RECORDS environment variables set");
    pass(11, "external dataset statistics");
}

/// Sanity companion to criterion 2: the slot kinds behind the MOR numbers.
#[test]
fn criterion_02_companion_slot_kinds() {
    let wcfg = WindowConfig::default();
    let view = toy_view(13);
    let oracle = OraclePredictor { view: &view };
    let rec = rollout(&oracle, &Schedule::new(2).unwrap(), &view, &wcfg, None).unwrap();
    let kinds: Vec<SlotKind> = rec.slots.iter().map(|s| s.kind).collect();
    use SlotKind::*;
    assert_eq!(
        kinds,
        [Measured, Predicted, Predicted, Measured, Predicted, Predicted, Measured, Predicted, Predicted]
    );
    let got = mor(rec.n_measured(), rec.n_slots()).unwrap();
    assert!((got - 200.0 / 3.0).abs() < 1e-9);
}
