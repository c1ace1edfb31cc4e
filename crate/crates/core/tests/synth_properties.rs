use nalgebra::Vector3;
use posefuse::fusion::FrameObservation;
use posefuse::geometry::{relative_translation, rpe, Odometry};
use posefuse::synth::*;

fn straight(frames: usize) -> Vec<posefuse::geometry::Pose> {
    generate_gt(&TrajectorySpec {
        kind: TrajectoryKind::StraightLine,
        frames,
        ..TrajectorySpec::default()
    })
    .unwrap()
}

/// Mean norm of an isotropic 3-D Gaussian, estimated with a generator that
/// shares nothing with `SimRng`.
fn monte_carlo_mean_norm(sigma: f64, samples: usize) -> f64 {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut unit = || {
        // 64-bit LCG (Knuth MMIX constants), top 53 bits
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    };
    let mut gauss = || {
        let (u, v) = (unit(), unit());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    };
    let mut total = 0.0;
    for _ in 0..samples {
        let (x, y, z) = (gauss(), gauss(), gauss());
        total += sigma * (x * x + y * y + z * z).sqrt();
    }
    total / samples as f64
}

#[test]
fn apr_gaussian_scale() {
    let sigma = 0.8;
    let closed_form = sigma * (8.0 / std::f64::consts::PI).sqrt();
    let mc = monte_carlo_mean_norm(sigma, 200_000);
    assert!((mc - closed_form).abs() / closed_form < 0.01, "mc {mc} vs {closed_form}");

    let gt = straight(10_000);
    let model = AprNoiseModel {
        trans_sigma: sigma,
        rot_sigma: 0.0,
        outlier_prob: 0.0,
        ..AprNoiseModel::default()
    };
    let apr = corrupt_apr(&gt, &model, 3).unwrap();
    let mean = gt
        .iter()
        .zip(&apr)
        .map(|(g, a)| relative_translation(a, g))
        .sum::<f64>()
        / gt.len() as f64;
    assert!(mean >= 0.75 * closed_form && mean <= 1.25 * closed_form, "{mean}");
    // far tighter in practice
    assert!((mean - closed_form).abs() / closed_form < 0.03);
}

#[test]
fn apr_outlier_fraction() {
    let gt = straight(10_000);
    let p = AprNoiseModel::default().outlier_prob;
    let model = AprNoiseModel {
        trans_sigma: 0.0,
        rot_sigma: 0.0,
        ..AprNoiseModel::default()
    };
    let apr = corrupt_apr(&gt, &model, 17).unwrap();
    let n = gt.len() as f64;
    let outliers = gt
        .iter()
        .zip(&apr)
        .filter(|(g, a)| relative_translation(a, g) >= model.outlier_trans_range[0] - 1e-9)
        .count() as f64;
    let se = (p * (1.0 - p) / n).sqrt();
    assert!((outliers / n - p).abs() <= 3.0 * se, "{} vs {p}", outliers / n);
}

#[test]
fn bias_walk_accumulates() {
    let gt = straight(200);
    let model = VioDriftModel {
        trans_noise_sigma: 0.0,
        rot_noise_sigma: 0.0,
        trans_bias_walk_sigma: 0.01,
        rot_bias_walk_sigma: 0.0,
        ..VioDriftModel::default()
    };
    let trace = corrupt_vio_traced(&gt, &model, 5).unwrap();
    let world: Vec<_> = trace
        .poses
        .iter()
        .map(|p| model.initial_offset.apply(p))
        .collect();

    let mut accumulated = Vector3::zeros();
    for k in 1..gt.len() {
        let vio_step = world[k].translation() - world[k - 1].translation();
        let gt_step = gt[k].translation() - gt[k - 1].translation();
        let bias = trace.trans_bias[k];
        assert!((vio_step - gt_step - bias).norm() < 1e-9);
        // scalar RPE can only see the bias component along the motion
        let e = rpe(&Odometry::between(&world[k - 1], &world[k]), &Odometry::between(&gt[k - 1], &gt[k]));
        assert!(e <= bias.norm() + 1e-9);
        accumulated += bias;
        let offset = world[k].translation() - gt[k].translation();
        assert!((offset - accumulated).norm() < 1e-9);
    }
    assert!(accumulated.norm() > 0.0);
}

fn mean_vio_rpe(stream: &[FrameObservation]) -> f64 {
    let n = stream.len() - 1;
    stream
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            rpe(
                &Odometry::between(&a.vio, &b.vio),
                &Odometry::between(&a.gt.unwrap(), &b.gt.unwrap()),
            )
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn default_models_drift_regime() {
    let d_th = posefuse::fusion::FusionConfig::default().d_th;
    for seed in 0..10 {
        let scenario = Scenario::benchmark(300, seed);
        let stream = scenario.generate().unwrap();
        assert!(mean_vio_rpe(&stream) < d_th / 4.0);
        let last = stream.last().unwrap();
        let world = scenario.vio.initial_offset.apply(&last.vio);
        assert!(relative_translation(&world, &last.gt.unwrap()) > 1.0, "seed {seed}");
    }
}

#[test]
fn default_raw_apr_scale() {
    for seed in 0..10 {
        let stream = Scenario::benchmark(300, seed).generate().unwrap();
        let mean = stream
            .iter()
            .map(|o| relative_translation(&o.apr, &o.gt.unwrap()))
            .sum::<f64>()
            / 300.0;
        assert!((1.4..=2.3).contains(&mean), "seed {seed}: {mean}");
    }
}

#[test]
fn scenario_is_deterministic() {
    let s = Scenario::benchmark(100, 42);
    assert_eq!(s.generate().unwrap(), s.generate().unwrap());
    let other = Scenario::benchmark(100, 43).generate().unwrap();
    assert_ne!(s.generate().unwrap(), other);
}

#[test]
fn sub_streams_are_independent() {
    // changing the APR model leaves ground truth and VIO untouched
    let a = Scenario::benchmark(50, 8);
    let mut b = a;
    b.apr.trans_sigma = 0.1;
    let (sa, sb) = (a.generate().unwrap(), b.generate().unwrap());
    for (x, y) in sa.iter().zip(&sb) {
        assert_eq!(x.gt, y.gt);
        assert_eq!(x.vio, y.vio);
    }
}
