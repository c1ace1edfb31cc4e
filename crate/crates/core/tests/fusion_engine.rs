mod common;

use posefuse::fusion::*;
use posefuse::geometry::{apply_transform, Pose};
use posefuse::synth::{AprNoiseModel, Scenario, TrajectoryKind, VioDriftModel};

use common::{pose_gap, random_case, reference_run};

fn assert_same(a: &FusionOutput, b: &FusionOutput) {
    assert_eq!(a.frame_id, b.frame_id);
    assert_eq!(a.category, b.category, "frame {}", a.frame_id);
    assert_eq!(a.stage, b.stage, "frame {}", a.frame_id);
    match (&a.pose, &b.pose) {
        (Some(p), Some(q)) => {
            let (dt, dr) = pose_gap(p, q);
            assert!(dt <= 1e-12 && dr <= 1e-9, "frame {}: {dt} m {dr} deg", a.frame_id);
        }
        (None, None) => {}
        _ => panic!("frame {}: pose presence differs", a.frame_id),
    }
    match (a.similarity, b.similarity) {
        (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-12),
        (None, None) => {}
        _ => panic!("frame {}: similarity presence differs", a.frame_id),
    }
}

#[test]
fn engine_matches_prefix_reference() {
    let mut realignments = 0;
    let mut seen = std::collections::HashSet::new();
    for seed in 0..30 {
        let (config, stream) = random_case(seed, 120);
        let mut engine = FusionEngine::new(config).unwrap();
        let got = engine.run(&stream).unwrap();
        let want = reference_run(&config, &stream);
        for (g, w) in got.iter().zip(&want) {
            assert_same(g, w);
            seen.insert(g.category);
        }
        realignments += engine.telemetry().realignments;
    }
    assert!(realignments > 0);
    assert_eq!(seen.len(), Category::ALL.len());
}

/// Replays random streams frame by frame and checks every stage change
/// against the outputs that led to it.
#[test]
fn stage_transitions_are_sound() {
    for seed in 0..1000 {
        let (config, stream) = random_case(seed, 150);
        let mut engine = FusionEngine::new(config).unwrap();
        let mut outputs: Vec<FusionOutput> = Vec::new();
        let mut window_start = 0usize;
        let mut since_alignment = 0usize;
        for (k, obs) in stream.iter().enumerate() {
            let before = engine.stage();
            let out = engine.step(obs).unwrap();
            outputs.push(out);
            let after = engine.stage();
            let pass = |j: usize| {
                j > 0
                    && odometry_consistent(
                        &config,
                        &stream[j - 1].apr,
                        &stream[j - 1].vio,
                        &stream[j].apr,
                        &stream[j].vio,
                    )
            };
            match (before, after) {
                (Stage::Alignment, Stage::PoseOptimization) => {
                    let n = config.n_pairs;
                    assert!(k >= n && k - n >= window_start);
                    assert!((k + 1 - n..=k).all(pass));
                    assert_eq!(out.category, Category::ReliableDirect);
                    since_alignment = k + 1;
                }
                (Stage::PoseOptimization, Stage::Alignment) => {
                    let reliable: Vec<_> = outputs[since_alignment..]
                        .iter()
                        .filter(|o| o.category == Category::ReliableDirect)
                        .collect();
                    assert!(reliable.len() >= config.drift_streak);
                    let tail = &reliable[reliable.len() - config.drift_streak..];
                    assert!(tail.iter().all(|o| o.similarity.unwrap() <= config.gamma));
                    window_start = k;
                }
                (Stage::Alignment, Stage::Alignment) => {
                    assert!(matches!(
                        out.category,
                        Category::AlignmentBridge | Category::AlignmentPending
                    ));
                }
                (Stage::PoseOptimization, Stage::PoseOptimization) => {
                    assert!(matches!(
                        out.category,
                        Category::ReliableDirect | Category::OptimizedFromVio
                    ));
                    assert_eq!(out.category == Category::ReliableDirect, pass(k));
                }
            }
        }
        assert_eq!(outputs.len(), stream.len());
    }
}

#[test]
fn reference_consistency_after_each_alignment() {
    for seed in 0..50 {
        let (config, stream) = random_case(seed, 200);
        let mut engine = FusionEngine::new(config).unwrap();
        engine.run(&stream).unwrap();
        for ev in engine.alignment_log() {
            let (dt, dr) = pose_gap(&apply_transform(&ev.transform, &ev.reference_vio), &ev.reference_apr);
            assert!(dt < 1e-9 && dr < 1e-7);
        }
    }
}

fn noiseless(kind: TrajectoryKind, frames: usize) -> Vec<FrameObservation> {
    let mut s = Scenario::benchmark(frames, 11);
    s.trajectory.kind = kind;
    s.apr = AprNoiseModel::noiseless();
    s.vio = VioDriftModel::noiseless();
    s.generate().unwrap()
}

#[test]
fn noiseless_passthrough() {
    for kind in [
        TrajectoryKind::RandomWaypoint,
        TrajectoryKind::CircularArc,
        TrajectoryKind::StraightLine,
    ] {
        let stream = noiseless(kind, 100);
        let config = FusionConfig::default();
        let out = run_stream(config, &stream).unwrap();
        for (k, (o, obs)) in out.iter().zip(&stream).enumerate() {
            if k < config.n_pairs {
                assert_eq!(o.category, Category::AlignmentPending);
            } else {
                assert_eq!(o.category, Category::ReliableDirect);
                assert_eq!(o.pose, Some(obs.apr));
            }
        }
    }
}

#[test]
fn runs_are_bit_identical() {
    let (config, stream) = random_case(99, 200);
    let a = run_stream(config, &stream).unwrap();
    let b = run_stream(config, &stream).unwrap();
    assert_eq!(a, b);
}

#[test]
fn interior_outlier_breaks_two_pairs() {
    // one bad APR frame fails the pair into it and the pair out of it
    let mut stream = noiseless(TrajectoryKind::StraightLine, 20);
    let p = stream[10].apr;
    stream[10].apr = Pose::new(p.translation() + nalgebra::Vector3::new(0.0, 3.0, 0.0), *p.rotation()).unwrap();
    let out = run_stream(FusionConfig::default(), &stream).unwrap();
    let optimized: Vec<_> = out
        .iter()
        .filter(|o| o.category == Category::OptimizedFromVio)
        .map(|o| o.frame_id)
        .collect();
    assert_eq!(optimized, vec![10, 11]);
    assert_eq!(out, reference_run(&FusionConfig::default(), &stream));
}

#[test]
fn errors_carry_stream_position() {
    let mut stream = noiseless(TrajectoryKind::StraightLine, 5);
    stream[3].frame_id = 1;
    let err = run_stream(FusionConfig::default(), &stream).unwrap_err();
    assert!(matches!(err, FusionError::InStream { index: 3, .. }));
}
