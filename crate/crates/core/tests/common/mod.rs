#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::Vector3;
use posefuse::fusion::{
    odometry_consistent, Category, FrameObservation, FusionConfig, FusionOutput, Stage,
};
use posefuse::geometry::{self, average_pose, compute_rigid_transform, RigidTransform};
use posefuse::synth::{AprNoiseModel, Scenario, SimRng, TrajectoryKind, VioDriftModel};

/// Sum of distances from `y` to `points`.
pub fn objective(points: &[Vector3<f64>], y: &Vector3<f64>) -> f64 {
    points.iter().map(|p| (y - p).norm()).sum()
}

/// Geometric median by nested grid search, refined by gradient descent with
/// a backtracking line search and polished by Newton steps.
pub fn median_oracle(points: &[Vector3<f64>]) -> Vector3<f64> {
    const CELLS: i32 = 10;
    let mut lo = points.iter().fold(Vector3::repeat(f64::INFINITY), |a, p| a.inf(p));
    let mut hi = points.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    let mut best = (lo + hi) / 2.0;
    let mut best_f = objective(points, &best);
    while (hi - lo).max() > 1e-6 {
        let cell = (hi - lo) / CELLS as f64;
        for i in 0..=CELLS {
            for j in 0..=CELLS {
                for k in 0..=CELLS {
                    let y = lo + Vector3::new(
                        cell.x * i as f64,
                        cell.y * j as f64,
                        cell.z * k as f64,
                    );
                    let f = objective(points, &y);
                    if f < best_f {
                        best_f = f;
                        best = y;
                    }
                }
            }
        }
        lo = best - cell * 2.0;
        hi = best + cell * 2.0;
    }

    let mut y = best;
    let mut f = best_f;
    let mut t = 1e-3;
    while t > 1e-16 {
        let mut g = Vector3::zeros();
        for p in points {
            let d = (y - p).norm();
            if d > 1e-300 {
                g += (y - p) / d;
            }
        }
        if g.norm() == 0.0 {
            break;
        }
        let candidate = y - g * t;
        let fc = objective(points, &candidate);
        if fc < f - 1e-4 * t * g.norm_squared() {
            y = candidate;
            f = fc;
            t *= 2.0;
        } else {
            t /= 2.0;
        }
    }

    // the objective is too flat near the optimum to resolve the last digits,
    // so finish with Newton steps on the gradient
    let gradient = |y: &Vector3<f64>| {
        let mut g = Vector3::zeros();
        let mut h = nalgebra::Matrix3::zeros();
        for p in points {
            let r = y - p;
            let d = r.norm();
            if d > 1e-12 {
                let u = r / d;
                g += u;
                h += (nalgebra::Matrix3::identity() - u * u.transpose()) / d;
            }
        }
        (g, h)
    };
    for _ in 0..50 {
        let (g, h) = gradient(&y);
        let Some(step) = h.lu().solve(&g) else { break };
        let candidate = y - step;
        let f = objective(points, &y);
        if gradient(&candidate).0.norm() >= g.norm()
            || objective(points, &candidate) > f + 1e-14 * f
        {
            break;
        }
        y = candidate;
    }
    y
}

pub fn random_points(rng: &mut SimRng, n: usize, half_width: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            Vector3::new(
                rng.uniform_in(-half_width, half_width),
                rng.uniform_in(-half_width, half_width),
                rng.uniform_in(-half_width, half_width),
            )
        })
        .collect()
}

/// Engine output for frame `k`, recomputed from `stream[..=k]` alone.
///
/// An alignment window opened at frame `s` completes at the first `c` for
/// which the `n_pairs` pairs ending at `c` all pass and the first frame of
/// those pairs is not before `s - 1`. Loopback happens at the first reliable
/// frame whose trailing run of reliable frames with `S <= gamma` reaches
/// `drift_streak`.
///
/// `passes[j]` is the odometry check of the pair ending at `j`, and
/// `transforms` memoises the transform averaged over the run ending at a
/// given frame; both are pure functions of the stream.
pub fn reference_frame(
    config: &FusionConfig,
    stream: &[FrameObservation],
    passes: &[bool],
    transforms: &mut HashMap<usize, RigidTransform>,
    k: usize,
) -> FusionOutput {
    let n = config.n_pairs;
    let pass = |j: usize| passes[j];
    let id = stream[k].frame_id;

    let mut start = 0usize;
    let mut transform: Option<RigidTransform> = None;
    loop {
        let lower = start.saturating_sub(1);
        let completion = (lower + n..=k).find(|&c| (c + 1 - n..=c).all(pass));
        let Some(c) = completion else {
            return FusionOutput {
                frame_id: id,
                pose: transform.map(|t| geometry::apply_transform(&t, &stream[k].vio)),
                category: if transform.is_some() {
                    Category::AlignmentBridge
                } else {
                    Category::AlignmentPending
                },
                similarity: None,
                stage: Stage::Alignment,
            };
        };
        let t = *transforms.entry(c).or_insert_with(|| {
            let run = &stream[c - n..=c];
            let ref_apr = average_pose(&run.iter().map(|o| o.apr).collect::<Vec<_>>()).unwrap();
            let ref_vio = average_pose(&run.iter().map(|o| o.vio).collect::<Vec<_>>()).unwrap();
            compute_rigid_transform(&ref_apr, &ref_vio)
        });
        transform = Some(t);
        if c == k {
            return FusionOutput {
                frame_id: id,
                pose: Some(stream[k].apr),
                category: Category::ReliableDirect,
                similarity: None,
                stage: Stage::Alignment,
            };
        }

        let score = |j: usize| {
            geometry::similarity(&stream[j].apr, &geometry::apply_transform(&t, &stream[j].vio))
        };
        let low_run = |j: usize| {
            // reliable frames in (c, j], newest first, until one is above gamma
            (c + 1..=j)
                .rev()
                .filter(|&i| pass(i))
                .take_while(|&i| score(i) <= config.gamma)
                .take(config.drift_streak)
                .count()
        };
        let loopback = (c + 1..k).find(|&j| pass(j) && low_run(j) >= config.drift_streak);
        match loopback {
            Some(j) => start = j + 1,
            None => {
                let v2w = geometry::apply_transform(&t, &stream[k].vio);
                return if pass(k) {
                    FusionOutput {
                        frame_id: id,
                        pose: Some(stream[k].apr),
                        category: Category::ReliableDirect,
                        similarity: Some(score(k)),
                        stage: Stage::PoseOptimization,
                    }
                } else {
                    FusionOutput {
                        frame_id: id,
                        pose: Some(v2w),
                        category: Category::OptimizedFromVio,
                        similarity: None,
                        stage: Stage::PoseOptimization,
                    }
                };
            }
        }
    }
}

pub fn pair_checks(config: &FusionConfig, stream: &[FrameObservation]) -> Vec<bool> {
    (0..stream.len())
        .map(|j| {
            j > 0
                && odometry_consistent(
                    config,
                    &stream[j - 1].apr,
                    &stream[j - 1].vio,
                    &stream[j].apr,
                    &stream[j].vio,
                )
        })
        .collect()
}

pub fn reference_run(config: &FusionConfig, stream: &[FrameObservation]) -> Vec<FusionOutput> {
    let passes = pair_checks(config, stream);
    let mut transforms = HashMap::new();
    (0..stream.len())
        .map(|k| reference_frame(config, stream, &passes, &mut transforms, k))
        .collect()
}

/// Scenario and fusion config drawn at random, covering calm and strongly
/// drifting regimes.
pub fn random_case(seed: u64, frames: usize) -> (FusionConfig, Vec<FrameObservation>) {
    let mut rng = SimRng::new(seed ^ 0x5eed_cafe);
    let kind = match rng.next_u64() % 3 {
        0 => TrajectoryKind::RandomWaypoint,
        1 => TrajectoryKind::CircularArc,
        _ => TrajectoryKind::StraightLine,
    };
    let mut scenario = Scenario::benchmark(frames, seed);
    scenario.trajectory.kind = kind;
    scenario.trajectory.speed = rng.uniform_in(0.2, 1.0);
    scenario.apr = AprNoiseModel {
        trans_sigma: rng.uniform_in(0.0, 0.4),
        rot_sigma: rng.uniform_in(0.0, 2.0),
        outlier_prob: rng.uniform_in(0.0, 0.5),
        ..AprNoiseModel::default()
    };
    scenario.vio = VioDriftModel {
        trans_bias_walk_sigma: rng.uniform_in(0.0, 0.02),
        rot_bias_walk_sigma: rng.uniform_in(0.0, 0.2),
        ..VioDriftModel::default()
    };
    let n_pairs = 1 + (rng.next_u64() % 3) as usize;
    let config = FusionConfig {
        d_th: rng.uniform_in(0.2, 0.8),
        o_th: rng.uniform_in(2.0, 8.0),
        n_pairs,
        gamma: rng.uniform_in(0.9, 0.999),
        drift_streak: 1 + (rng.next_u64() % 3) as usize,
    };
    let mut stream = scenario.generate().expect("valid scenario");
    // irregular frame ids
    let mut id = rng.next_u64() % 5;
    for o in &mut stream {
        o.frame_id = id;
        id += 1 + rng.next_u64() % 3;
    }
    (config, stream)
}

/// Pose distance as (metres, degrees).
pub fn pose_gap(a: &posefuse::geometry::Pose, b: &posefuse::geometry::Pose) -> (f64, f64) {
    (
        geometry::relative_translation(a, b),
        geometry::relative_rotation_deg(a, b),
    )
}

/// Mean APE of `outputs[range]` against ground truth.
pub fn window_ape(
    outputs: &[FusionOutput],
    stream: &[FrameObservation],
    range: std::ops::Range<usize>,
) -> f64 {
    let n = range.len() as f64;
    range
        .map(|i| {
            let pose = outputs[i].pose.expect("estimate present");
            geometry::relative_translation(&pose, &stream[i].gt.expect("gt present"))
        })
        .sum::<f64>()
        / n
}
