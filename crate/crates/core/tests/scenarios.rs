use std::path::{Path, PathBuf};

use accessq_core::metrics::histogram;
use accessq_core::qos::{self, EModelInput};
use accessq_core::scenario::{
    mos_report, report, run_experiment, sweep, ExperimentOptions, ScenarioConfig, ScenarioError,
    SweepParameter, Validated,
};
use accessq_core::traffic::{gen_synthetic_video, SyntheticVideoParams, Trace};
use accessq_core::SimTime;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn load(name: &str, overrides: &[&str]) -> Validated {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ScenarioConfig::load(&bundled(name), &o).unwrap().validate().unwrap()
}

fn from_text(text: &str, base: &Path) -> Validated {
    ScenarioConfig::from_toml_str(text, base, &[]).unwrap().validate().unwrap()
}

fn opts() -> ExperimentOptions {
    ExperimentOptions::default()
}

#[test]
fn every_bundled_scenario_validates() {
    let dir = bundled("");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "scn") {
            ScenarioConfig::load(&path, &[]).unwrap().validate().unwrap();
            n += 1;
        }
    }
    assert_eq!(n, 9);
}

#[test]
fn advisory_utilization_follows_burst_parameters() {
    // 26 x 1500 B every 0.278 s per camera
    let camera = 26.0 * 1500.0 * 8.0 / 0.278;
    let three = load("chapter5_3cams_100mbps.scn", &[]);
    assert!((three.advisory_utilization - 3.0 * camera / 3.5e6).abs() < 1e-9);
    let mixed = load("chapter6_mixed.scn", &[]);
    let offered = 2.0 * camera + 1.5e6 + 2.0 * 24e3;
    assert!((mixed.offered_rate - offered).abs() < 1e-6);
    assert!((mixed.advisory_utilization - offered / 5e6).abs() < 1e-9);
}

#[test]
fn flow_order_does_not_change_results() {
    let v = load("chapter6_mixed.scn", &["run.repetitions=4"]);
    let mut reversed = v.config.clone();
    reversed.flows.reverse();
    let reversed = reversed.validate().unwrap();
    let a = run_experiment(&v, opts()).unwrap();
    let b = run_experiment(&reversed, opts()).unwrap();
    let mut ra = a.records.clone();
    let mut rb = b.records.clone();
    ra.sort_by_key(|r| (r.repetition, r.flow_id));
    rb.sort_by_key(|r| (r.repetition, r.flow_id));
    assert_eq!(ra, rb);
}

#[test]
fn cbr_offered_load_matches_measured() {
    let text = r#"
        [link]
        r_in = "100Mbps"
        r_out = "2Mbps"
        [buffer]
        discipline = "drop_tail"
        capacity = 20
        [[flows]]
        id = 1
        kind = "cbr"
        packet_size = "200B"
        interval = "5ms"
        [[flows]]
        id = 2
        kind = "cbr"
        packet_size = "1000B"
        interval = "10ms"
        [run]
        duration = "30s"
        repetitions = 3
    "#;
    let v = from_text(text, Path::new("."));
    let r = run_experiment(&v, opts()).unwrap();
    let bits: f64 = r
        .records
        .iter()
        .filter(|x| x.repetition == 0)
        .map(|x| {
            let size = if x.flow_id == 1 { 200.0 } else { 1000.0 };
            (x.delivered + x.dropped) as f64 * size * 8.0
        })
        .sum();
    let measured = bits / 30.0;
    assert!((measured - v.offered_rate).abs() / v.offered_rate < 0.05);
    assert_eq!(r.mean_loss(), Some(0.0));
}

#[test]
fn faster_internal_network_never_loses_less() {
    for cams in [2, 3] {
        for buffer in [30, 45, 60] {
            let set = format!("buffer.capacity={buffer}");
            let loss = |rate: u32| {
                let v = load(
                    &format!("chapter5_{cams}cams_{rate}mbps.scn"),
                    &[&set, "run.repetitions=10"],
                );
                run_experiment(&v, opts()).unwrap().mean_loss().unwrap()
            };
            assert!(loss(100) >= loss(10), "{cams} cams, buffer {buffer}");
        }
    }
}

#[test]
fn same_seed_gives_identical_output() {
    let v = load("chapter5_2cams_100mbps.scn", &["run.repetitions=6"]);
    let a = run_experiment(&v, opts()).unwrap();
    let b = run_experiment(&v, ExperimentOptions { threads: Some(2) }).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

    let da = tempfile::tempdir().unwrap();
    let db = tempfile::tempdir().unwrap();
    let files = report::write_experiment(&a, da.path()).unwrap();
    report::write_experiment(&b, db.path()).unwrap();
    for f in files {
        let name = f.file_name().unwrap();
        assert_eq!(std::fs::read(&f).unwrap(), std::fs::read(db.path().join(name)).unwrap());
    }
}

#[test]
fn different_seeds_differ() {
    let a = run_experiment(&load("chapter5_2cams_100mbps.scn", &["run.repetitions=3"]), opts()).unwrap();
    let b = run_experiment(
        &load("chapter5_2cams_100mbps.scn", &["run.repetitions=3", "run.seed=2"]),
        opts(),
    )
    .unwrap();
    assert_ne!(a.records, b.records);
    assert_ne!(a.provenance.config_hash, b.provenance.config_hash);
}

#[test]
fn summaries_recompute_from_records() {
    let r = run_experiment(&load("chapter6_mixed.scn", &["run.repetitions=5"]), opts()).unwrap();
    assert_eq!(r.records.len(), 5 * 5);
    let (summaries, histograms) = accessq_core::scenario::aggregate(&r.config, &r.records);
    assert_eq!(summaries, r.summaries);
    assert_eq!(histograms, r.histograms);
    // combined loss per repetition is drop-weighted over flows
    for (rep, loss) in r.repetition_losses().iter().enumerate() {
        let (s, d) = r
            .records
            .iter()
            .filter(|x| x.repetition == rep as u32)
            .fold((0, 0), |(s, d), x| (s + x.sent, d + x.dropped));
        assert_eq!(*loss, d as f64 / s as f64);
    }
    let h = r.histogram("loss", "combined").unwrap();
    assert!((h.fraction_sum() - 1.0).abs() < 1e-9);
}

#[test]
fn single_value_sweep_matches_plain_run() {
    let v = load("chapter5_2cams_10mbps.scn", &["run.repetitions=3", "buffer.capacity=45"]);
    let points = sweep(&v, SweepParameter::BufferSize, &[45.0], opts()).unwrap();
    assert_eq!(points.len(), 1);
    let plain = run_experiment(&v, opts()).unwrap();
    assert_eq!(points[0].result.records, plain.records);
    assert_eq!(points[0].result.summaries, plain.summaries);
}

#[test]
fn buffer_sweep_has_eight_points() {
    let v = load("chapter5_2cams_100mbps.scn", &["run.repetitions=2"]);
    let s = v.config.sweep.clone().unwrap();
    let points = sweep(&v, s.parameter, &s.values(), opts()).unwrap();
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    assert_eq!(values, [30.0, 35.0, 40.0, 45.0, 50.0, 55.0, 60.0, 65.0]);
    assert!(points.iter().all(|p| p.result.config.buffer.capacity as f64 == p.value));
}

#[test]
fn utilization_sweep_spans_half_to_ninety_percent() {
    let v = load("chapter6_util_sweep.scn", &[]);
    let s = v.config.sweep.clone().unwrap();
    let utils: Vec<f64> = s
        .values()
        .iter()
        .map(|&r| {
            v.config
                .with_parameter(s.parameter, r)
                .validate()
                .unwrap()
                .advisory_utilization
        })
        .collect();
    for (u, want) in utils.iter().zip([0.5, 0.6, 0.7, 0.8, 0.9]) {
        assert!((u - want).abs() < 1e-3, "{u} vs {want}");
    }
}

#[test]
fn mos_report_for_lossless_calls() {
    let text = r#"
        [link]
        r_in = "100Mbps"
        r_out = "5Mbps"
        [buffer]
        discipline = "drop_tail"
        capacity = 40
        [[flows]]
        id = 7
        service = "voip"
        kind = "cbr"
        packet_size = "60B"
        interval = "20ms"
        [run]
        duration = "10s"
        repetitions = 4
    "#;
    let r = run_experiment(&from_text(text, Path::new(".")), opts()).unwrap();
    let report = mos_report(&r, &[20.0]).unwrap();
    assert_eq!(report.calls, 4);
    let d = &report.per_delay[0];
    assert_eq!(d.total_delay_ms, 116.0);
    // hand evaluation: R = 94.2 - 0.024 * 116 - 11 = 80.416
    let r_hand: f64 = 80.416;
    let mos_hand = 1.0 + 0.035 * r_hand + 7e-6 * r_hand * (r_hand - 60.0) * (100.0 - r_hand);
    assert!(d.values.iter().all(|&m| (m - mos_hand).abs() < 1e-12));
    assert!((mos_hand - 4.04).abs() < 0.005);
    assert_eq!(d.histogram.bins.iter().filter(|b| b.count > 0).count(), 1);

    let empty = accessq_core::ExperimentResult {
        records: Vec::new(),
        ..r.clone()
    };
    let e = mos_report(&empty, &[20.0]).unwrap();
    assert_eq!(e.calls, 0);
    assert!(e.per_delay[0].histogram.bins.is_empty());
}

#[test]
fn mos_report_needs_voip() {
    let r = run_experiment(&load("chapter5_1cams_10mbps.scn", &["run.repetitions=1"]), opts()).unwrap();
    assert!(matches!(mos_report(&r, &[20.0]), Err(ScenarioError::NoVoip)));
}

#[test]
fn mos_shifts_left_with_network_delay() {
    let r = run_experiment(&load("chapter6_mixed.scn", &["run.repetitions=10"]), opts()).unwrap();
    let report = mos_report(&r, &[20.0, 40.0, 60.0, 100.0, 120.0, 140.0]).unwrap();
    assert_eq!(report.calls, 20);
    for w in report.per_delay.windows(2) {
        for (a, b) in w[0].values.iter().zip(&w[1].values) {
            assert!(b < a);
        }
    }
    // the per-call MOS uses the call's own loss
    let first = r.records.iter().find(|x| x.service == "voip").unwrap();
    let expect = qos::mos(EModelInput {
        delay_total: 116.0,
        loss: first.loss.unwrap(),
    });
    assert_eq!(report.per_delay[0].values[0], expect);
}

#[test]
fn trace_paths_resolve_against_the_scenario_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("traces")).unwrap();
    std::fs::write(
        dir.path().join("traces/video.txt"),
        "# two packets per 100 ms\n0.0 1500\n0.05 500 2\n0.1 1500\n",
    )
    .unwrap();
    let text = r#"
        [link]
        r_in = "100Mbps"
        r_out = "5Mbps"
        [buffer]
        discipline = "fifo_fast"
        capacity = 40
        [[flows]]
        id = 3
        kind = "trace"
        path = "traces/video.txt"
        start_offset = "0s"
        [run]
        duration = "10s"
        warmup = "0s"
        repetitions = 1
    "#;
    std::fs::write(dir.path().join("s.scn"), text).unwrap();
    let v = ScenarioConfig::load(&dir.path().join("s.scn"), &[]).unwrap().validate().unwrap();
    // three records over a 0.15 s period
    assert!((v.offered_rate - 3500.0 * 8.0 / 0.15).abs() < 1e-6);
    let r = run_experiment(&v, opts()).unwrap();
    assert_eq!(r.records[0].sent, 200);
    assert_eq!(r.records[0].dropped, 0);

    let missing = text.replace("video.txt", "absent.txt");
    let err = ScenarioConfig::from_toml_str(&missing, dir.path(), &[]).unwrap().validate().unwrap_err();
    assert!(err.is_io());
}

#[test]
fn synthetic_video_round_trips_through_a_trace() {
    let p = SyntheticVideoParams {
        mean_bitrate: 1.5e6,
        frame_interval: 1.0 / 30.0,
        frame_size_cv: 0.5,
        max_packet_size: 1500,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let packets = gen_synthetic_video(&p, SimTime::from_secs_f64(60.0), SimTime::ZERO, 1, &mut rng);
    let trace = Trace::parse(&Trace::from_packets(&packets, SimTime::ZERO).to_text()).unwrap();
    let rate = trace.mean_rate().unwrap();
    assert!((rate - 1.5e6).abs() / 1.5e6 < 0.05, "{rate}");
}

#[test]
fn loss_histogram_bins_are_half_points() {
    let r = run_experiment(&load("chapter5_3cams_100mbps.scn", &["run.repetitions=8"]), opts()).unwrap();
    let h = r.histogram("loss", "combined").unwrap();
    assert_eq!(h.bin_width, 0.5);
    let pct: Vec<f64> = r.repetition_losses().iter().map(|l| l * 100.0).collect();
    assert_eq!(h, &histogram(&pct, 0.5));
}
