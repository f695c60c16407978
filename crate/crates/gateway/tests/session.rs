mod common;

use std::io::Write;
use std::net::TcpListener;
use std::time::Duration;

use bodynet_core::metrics::SessionSummary;
use bodynet_core::sim::{gen_hxm, gen_shimmer, Burst, EmgProfile, HrProfile};
use bodynet_core::{Protocol, Session};
use bodynet_gateway::persist::{BATCH, MANIFEST, RECEIPT, SUMMARY};
use bodynet_gateway::{
    format_status, replay_session, run_session, GatewayError, SessionOptions, SourceConfig, UploadPolicy,
};
use common::{dead_addr, write, CountingEndpoint};
use uuid::Uuid;

const USER: Uuid = Uuid::from_u128(0x5eed);

fn options(dir: &std::path::Path) -> SessionOptions {
    SessionOptions { data_dir: dir.join("data"), started_at: Some(1_700_000_000_000), max_duration: None }
}

#[test]
fn file_source_in_manual_mode_matches_truth_and_stays_offline() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = HrProfile::steady(72.0, 120.0);
    p.speed_mps = 2.5;
    p.jitter_ms = 25.0;
    p.seed = 3;
    let (bytes, truth) = gen_hxm(&p, 120.0).unwrap();
    let path = write(tmp.path(), "hr.bin", &bytes);
    let endpoint = CountingEndpoint::start();
    let policy = UploadPolicy::manual(endpoint.url(), "t");

    let report = run_session(&[SourceConfig::file(path, Protocol::Hxm)], &policy, USER, &options(tmp.path())).unwrap();
    let s = &report.summary;

    let first = truth.frame_times_ms[0];
    let last = *truth.frame_times_ms.last().unwrap();
    assert_eq!(s.beats_total as usize, truth.beats_between(first, last));
    assert_eq!(s.beats_unrecovered, 0);
    assert_eq!(s.duration_s, 120.0);
    let dist = truth.total_distance_m - p.distance_sixteenths(first) as f64 / 16.0;
    assert!((s.distance_m - dist).abs() <= 1.0 / 16.0 + 1e-9);
    assert!((s.avg_hr_bpm.unwrap() - 72.0).abs() < 1.5);
    assert_eq!(s, &Session::from_stream(Protocol::Hxm, &bytes).summary());

    assert!(report.upload.is_none());
    assert_eq!(report.sources[0].bytes, bytes.len() as u64);
    for f in [MANIFEST, SUMMARY, BATCH] {
        assert!(report.session_dir.join(f).exists(), "{f}");
    }
    assert!(!report.session_dir.join(RECEIPT).exists());
    std::thread::sleep(Duration::from_millis(100));
    assert_eq!(endpoint.hits(), 0);
}

#[test]
fn hxm_and_shimmer_fold_into_one_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let (hr, _) = gen_hxm(&HrProfile::steady(90.0, 10.0), 10.0).unwrap();
    let mut e = EmgProfile::quiet();
    e.noise_rms_mv = 5.0;
    e.bursts.push(Burst { onset_s: 3.0, duration_s: 2.0, amplitude_mv: 400.0 });
    let (emg, _) = gen_shimmer(&e, 8.0).unwrap();
    let sources = [
        SourceConfig::file(write(tmp.path(), "hr.bin", &hr), Protocol::Hxm),
        SourceConfig::file(write(tmp.path(), "emg.bin", &emg), Protocol::Shimmer),
    ];
    let report = run_session(&sources, &UploadPolicy::manual("", ""), USER, &options(tmp.path())).unwrap();
    let s = &report.summary;
    // Beat times are whole milliseconds, so 90 bpm is only approximate.
    assert!((s.avg_hr_bpm.unwrap() - 90.0).abs() < 0.1);
    let emg_report = s.emg.as_ref().expect("EMG report");
    assert!(emg_report.rms > 0.0);
    assert_eq!(emg_report.activations.len(), 1);
    assert_eq!(s.duration_s, 10.0);
    assert_eq!(s.diagnostics.frames_rejected, 0);
}

#[test]
fn empty_stream_gives_empty_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write(tmp.path(), "empty.bin", &[]);
    let report =
        run_session(&[SourceConfig::file(path, Protocol::Hxm)], &UploadPolicy::manual("", ""), USER, &options(tmp.path()))
            .unwrap();
    assert_eq!(report.summary.beats_total, 0);
    assert_eq!(report.summary.avg_hr_bpm, None);
    assert_eq!(format_status(&report.summary, None), "Workout: 0.0 min");
}

#[test]
fn duplicate_protocol_and_no_sources_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let policy = UploadPolicy::manual("", "");
    assert!(matches!(run_session(&[], &policy, USER, &options(tmp.path())), Err(GatewayError::NoSources)));
    let s = SourceConfig::file("x", Protocol::Shimmer);
    assert!(matches!(
        run_session(&[s.clone(), s], &policy, USER, &options(tmp.path())),
        Err(GatewayError::DuplicateProtocol(Protocol::Shimmer))
    ));
}

#[test]
fn tcp_source_reconnects_after_a_drop() {
    let tmp = tempfile::tempdir().unwrap();
    let (bytes, _) = gen_hxm(&HrProfile::steady(65.0, 40.0), 40.0).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    // Split mid-frame so the framer has to carry state across connections.
    let cut = 20 * Protocol::Hxm.frame_len() + 11;
    let halves = [bytes[..cut].to_vec(), bytes[cut..].to_vec()];
    let sensor = std::thread::spawn(move || {
        for half in halves {
            let (mut s, _) = listener.accept().unwrap();
            s.write_all(&half).unwrap();
        }
    });
    let mut src = SourceConfig::tcp(addr, Protocol::Hxm);
    src.reconnect_max_attempts = 2;
    src.reconnect_backoff_ms = 20;
    let report = run_session(&[src], &UploadPolicy::manual("", ""), USER, &options(tmp.path())).unwrap();
    sensor.join().unwrap();

    assert_eq!(report.summary, Session::from_stream(Protocol::Hxm, &bytes).summary());
    let r = &report.sources[0];
    assert_eq!((r.connects, r.disconnects), (2, 2));
    assert_eq!(r.bytes, bytes.len() as u64);
    assert_eq!(r.error, None);
}

#[test]
fn unreachable_source_gives_up() {
    let tmp = tempfile::tempdir().unwrap();
    let mut src = SourceConfig::tcp(dead_addr(), Protocol::Hxm);
    src.reconnect_max_attempts = 2;
    src.reconnect_backoff_ms = 10;
    let err = run_session(&[src], &UploadPolicy::manual("", ""), USER, &options(tmp.path())).unwrap_err();
    assert!(matches!(err, GatewayError::SourceUnreachable(_)), "{err}");
}

#[test]
fn one_reachable_source_is_enough() {
    let tmp = tempfile::tempdir().unwrap();
    let (hr, _) = gen_hxm(&HrProfile::steady(60.0, 5.0), 5.0).unwrap();
    let mut dead = SourceConfig::tcp(dead_addr(), Protocol::Shimmer);
    dead.reconnect_max_attempts = 1;
    dead.reconnect_backoff_ms = 10;
    let sources = [SourceConfig::file(write(tmp.path(), "hr.bin", &hr), Protocol::Hxm), dead];
    let report = run_session(&sources, &UploadPolicy::manual("", ""), USER, &options(tmp.path())).unwrap();
    assert!(report.sources[0].error.is_none());
    assert!(report.sources[1].error.is_some());
    assert_eq!(report.summary.avg_hr_bpm, Some(60.0));
}

#[test]
fn max_duration_stops_a_live_source() {
    let tmp = tempfile::tempdir().unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let (bytes, _) = gen_hxm(&HrProfile::steady(60.0, 3.0), 3.0).unwrap();
    let sensor = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        s.write_all(&bytes).unwrap();
        // Hold the link open well past the session limit.
        std::thread::sleep(Duration::from_secs(2));
    });
    let mut opts = options(tmp.path());
    opts.max_duration = Some(Duration::from_millis(300));
    let t0 = std::time::Instant::now();
    let report =
        run_session(&[SourceConfig::tcp(addr, Protocol::Hxm)], &UploadPolicy::manual("", ""), USER, &opts).unwrap();
    assert!(t0.elapsed() < Duration::from_secs(2));
    assert_eq!(report.summary.duration_s, 3.0);
    sensor.join().unwrap();
}

#[test]
fn replay_reproduces_the_live_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut p = HrProfile::steady(110.0, 90.0);
    p.jitter_ms = 40.0;
    p.seed = 11;
    p.drop_messages = vec![10, 11, 40];
    let (hr, _) = gen_hxm(&p, 90.0).unwrap();
    let mut e = EmgProfile::quiet();
    e.noise_rms_mv = 4.0;
    e.bursts.push(Burst { onset_s: 1.0, duration_s: 1.0, amplitude_mv: 300.0 });
    let (emg, _) = gen_shimmer(&e, 4.0).unwrap();
    let sources = [
        SourceConfig::file(write(tmp.path(), "hr.bin", &hr), Protocol::Hxm),
        SourceConfig::file(write(tmp.path(), "emg.bin", &emg), Protocol::Shimmer),
    ];
    let report = run_session(&sources, &UploadPolicy::manual("", ""), USER, &options(tmp.path())).unwrap();
    let replayed = replay_session(&report.session_dir).unwrap();
    assert_eq!(replayed, report.summary);
    let stored: SessionSummary =
        serde_json::from_slice(&std::fs::read(report.session_dir.join(SUMMARY)).unwrap()).unwrap();
    assert_eq!(stored, report.summary);
}

#[test]
fn steady_session_status_text() {
    let tmp = tempfile::tempdir().unwrap();
    let (hr, _) = gen_hxm(&HrProfile::steady(60.0, 600.0), 600.0).unwrap();
    let src = SourceConfig::file(write(tmp.path(), "hr.bin", &hr), Protocol::Hxm);
    let report = run_session(&[src], &UploadPolicy::manual("", ""), USER, &options(tmp.path())).unwrap();
    assert_eq!(format_status(&report.summary, None), "Workout: 10.0 min, avg HR 60 bpm, 0.0 m");
}
