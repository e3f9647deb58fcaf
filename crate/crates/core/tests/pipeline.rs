use std::io::Write;

use mvsparse::detector::DetectorConfig;
use mvsparse::geometry::{BlockGrid, CalibrationRecord, GroundPoint};
use mvsparse::runtime::config::default_rig;
use mvsparse::runtime::traffic::TrafficModel;
use mvsparse::runtime::{run_sim, Mode, RunConfig, RunReport};
use mvsparse::scene::cylinder_bbox;

fn config(mode: Mode, frames: u64, seed: u64) -> RunConfig {
    RunConfig {
        mode,
        frames,
        seed,
        ..RunConfig::default()
    }
}

fn still(mut cfg: RunConfig) -> RunConfig {
    cfg.scene.min_speed = 0.0;
    cfg.scene.max_speed = 0.0;
    cfg
}

/// Mean processed blocks per camera-frame over the last `n` frames.
fn tail_blocks(report: &RunReport, n: usize) -> f64 {
    let tail = &report.series[report.series.len() - n..];
    let total: u32 = tail.iter().flat_map(|f| f.blocks.iter()).sum();
    f64::from(total) / (tail.len() * report.cameras.len()) as f64
}

#[test]
fn same_config_gives_byte_identical_reports() {
    let cfg = config(Mode::Mvsparse, 150, 9);
    assert_eq!(
        run_sim(&cfg).unwrap().to_json(),
        run_sim(&cfg).unwrap().to_json()
    );
    let other = run_sim(&config(Mode::Mvsparse, 150, 10)).unwrap();
    assert_ne!(run_sim(&cfg).unwrap().series, other.series);
}

#[test]
fn saturated_policy_with_every_camera_selected_matches_full() {
    let full = run_sim(&config(Mode::Full, 120, 4)).unwrap();
    let mut cfg = config(Mode::Mvsparse, 120, 4);
    cfg.k = 4;
    cfg.policy.initial_bias = 30.0;
    cfg.policy.p_floor = 0.0;
    let sparse = run_sim(&cfg).unwrap();
    assert_eq!(sparse.scores, full.scores);
    assert_eq!(sparse.series, full.series);
}

#[test]
fn oracle_keeps_only_the_best_view_of_a_lone_pedestrian() {
    let rig: Vec<_> = default_rig().into_iter().take(3).collect();
    let spot = GroundPoint::new(10.5, 3.5);
    let mut cfg = config(Mode::Oracle, 5, 0);
    cfg.k = 1;
    cfg.detector = DetectorConfig::perfect();
    cfg.cameras = rig.iter().map(CalibrationRecord::from).collect();

    // With exact detections every view ties and the lowest camera id wins.
    let grid = BlockGrid::new(1152, 640, 128);
    let bbox = cylinder_bbox(
        &rig[0],
        spot,
        cfg.scene.person_height,
        cfg.scene.person_radius,
    )
    .unwrap();
    let expected = grid.blocks_for_bbox(&bbox).len();
    assert_eq!(expected, 2);
    assert!(rig[1..].iter().all(|c| cylinder_bbox(
        c,
        spot,
        cfg.scene.person_height,
        cfg.scene.person_radius
    )
    .is_some()));

    let mut file = tempfile::NamedTempFile::new().unwrap();
    for frame in 0..5 {
        writeln!(file, "{frame} 1 {} {}", spot.x, spot.y).unwrap();
    }
    cfg.trajectories = Some(file.path().to_path_buf());
    let report = run_sim(&cfg).unwrap();
    for f in &report.series {
        assert_eq!(f.blocks, vec![expected as u32, 0, 0]);
    }
    assert_eq!(report.scores.total_blocks_per_frame, expected as f64);
}

#[test]
fn mode_lattice_on_a_stationary_crowd() {
    let mut oracle = still(config(Mode::Oracle, 1000, 0));
    oracle.k = 1;
    let oracle = tail_blocks(&run_sim(&oracle).unwrap(), 200);
    let sparse = tail_blocks(
        &run_sim(&still(config(Mode::Mvsparse, 1000, 0))).unwrap(),
        200,
    );
    let copy = tail_blocks(
        &run_sim(&still(config(Mode::Blockcopy, 1000, 0))).unwrap(),
        200,
    );
    assert!(
        oracle <= sparse && sparse <= copy && copy <= 45.0,
        "{oracle} {sparse} {copy}"
    );
}

#[test]
fn static_mask_is_frozen_after_profiling() {
    let mut cfg = config(Mode::StaticMask, 60, 2);
    cfg.profile_frames = 30;
    let report = run_sim(&cfg).unwrap();
    let first = &report.series[0].blocks;
    assert!(report.series.iter().all(|f| &f.blocks == first));
    assert!(first.iter().all(|&b| b <= 45));
    assert!(first.iter().sum::<u32>() < 4 * 45);
}

#[test]
fn transmission_time_follows_the_link_model() {
    let cfg = config(Mode::Full, 60, 1);
    let full = run_sim(&cfg).unwrap();
    let model = TrafficModel::from_config(&cfg);
    // Full frames: every camera sends the same amount, detections aside.
    let per_camera = 45.0 * 128.0 * 128.0 * 3.0 / 3.3;
    for f in &full.series {
        let floor = model.transmission_ms(per_camera);
        assert!(f.transmission_ms > floor && f.transmission_ms < floor + 1.0);
        assert_eq!(f.compute_ms, model.compute_ms(45));
    }
    let sparse = run_sim(&config(Mode::Mvsparse, 60, 1)).unwrap();
    assert!(sparse.mean_transmission_ms() < full.mean_transmission_ms());
    assert!(sparse.mean_compute_ms() < full.mean_compute_ms());
}
