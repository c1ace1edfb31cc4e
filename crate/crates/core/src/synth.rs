//! Seeded synthetic benchmark streams.
//!
//! Ground truth is a smooth walking trajectory; APR predictions are the
//! ground truth plus independent per-frame noise with occasional gross
//! outliers (noisy but drift-free); VIO poses integrate the ground-truth
//! increments through a random-walk bias in an arbitrarily offset frame
//! (smooth but drifting).
//!
//! Randomness is bit-reproducible across implementations:
//!
//! * generator: xoshiro256++, state expanded from the 64-bit seed with
//!   SplitMix64 (the reference seeding procedure);
//! * uniform: `(next_u64 >> 11) · 2⁻⁵³`, in `[0, 1)`;
//! * normal: Box–Muller cosine branch, `sqrt(-2 ln(1 - u1)) · cos(2π u2)`;
//! * direction: three normals, normalised (redrawn if the norm is below 1e-12).
//!
//! Sub-streams of a scenario use [`derive_seed`].

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FrameObservation;
use crate::geometry::{Pose, RigidTransform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid {model} parameter {field} = {value}: {reason}")]
    InvalidParameter {
        model: &'static str,
        field: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("sequence lengths differ: gt {gt}, apr {apr}, vio {vio}")]
    LengthMismatch { gt: usize, apr: usize, vio: usize },
}

fn invalid(
    model: &'static str,
    field: &'static str,
    value: impl ToString,
    reason: &'static str,
) -> SynthError {
    SynthError::InvalidParameter {
        model,
        field,
        value: value.to_string(),
        reason,
    }
}

/// Deterministic random source with a documented sampling procedure.
#[derive(Debug, Clone)]
pub struct SimRng(Xoshiro256PlusPlus);

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    pub fn normal_vec(&mut self, sigma: f64) -> Vector3<f64> {
        let x = self.normal();
        let y = self.normal();
        let z = self.normal();
        Vector3::new(x, y, z) * sigma
    }

    pub fn direction(&mut self) -> Vector3<f64> {
        loop {
            let v = self.normal_vec(1.0);
            let n = v.norm();
            if n >= 1e-12 {
                return v / n;
            }
        }
    }

    /// Rotation by `angle_deg` about a uniformly random axis.
    pub fn rotation(&mut self, angle_deg: f64) -> UnitQuaternion<f64> {
        let axis = nalgebra::Unit::new_unchecked(self.direction());
        UnitQuaternion::from_axis_angle(&axis, angle_deg.to_radians())
    }
}

/// SplitMix64 finaliser over `seed + (tag + 1)·φ`; used to give each
/// sub-stream of a scenario its own seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed.wrapping_add(tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const TAG_GT: u64 = 0;
pub const TAG_APR: u64 = 1;
pub const TAG_VIO: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    RandomWaypoint,
    CircularArc,
    StraightLine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub frames: usize,
    /// Seconds between frames.
    pub interval: f64,
    /// Side of the scene in metres. Random waypoints fill an
    /// `extent × 0.8·extent` box centred on the origin; arcs use radius
    /// `extent / 2`.
    pub extent: f64,
    /// Walking speed in m/s.
    pub speed: f64,
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            kind: TrajectoryKind::RandomWaypoint,
            frames: 300,
            interval: 1.0,
            extent: 50.0,
            speed: 1.0,
            seed: 0,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let m = "trajectory";
        if self.frames < 1 {
            return Err(invalid(m, "frames", self.frames, "must be at least 1"));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(invalid(m, "extent", self.extent, "must be positive"));
        }
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(invalid(m, "interval", self.interval, "must be positive"));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(invalid(m, "speed", self.speed, "must be non-negative"));
        }
        if self.step() > self.extent / 10.0 {
            return Err(invalid(
                m,
                "speed",
                self.speed,
                "per-frame motion exceeds extent / 10",
            ));
        }
        Ok(())
    }

    /// Distance travelled per frame.
    pub fn step(&self) -> f64 {
        self.speed * self.interval
    }
}

/// World-to-camera rotation of a camera whose forward axis points along
/// `yaw` in the ground plane.
fn heading(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw).inverse()
}

fn pose_at(position: Vector3<f64>, yaw: f64) -> Pose {
    Pose::new(position, heading(yaw)).expect("generated poses are finite")
}

pub fn generate_gt(spec: &TrajectorySpec) -> Result<Vec<Pose>, SynthError> {
    spec.validate()?;
    let step = spec.step();
    let n = spec.frames;
    Ok(match spec.kind {
        TrajectoryKind::StraightLine => (0..n)
            .map(|k| pose_at(Vector3::new(k as f64 * step, 0.0, 0.0), 0.0))
            .collect(),
        TrajectoryKind::CircularArc => {
            let mut rng = SimRng::new(spec.seed);
            let radius = spec.extent / 2.0;
            let phase = rng.uniform_in(0.0, 2.0 * PI);
            (0..n)
                .map(|k| {
                    let theta = phase + k as f64 * step / radius;
                    let p = Vector3::new(radius * theta.cos(), radius * theta.sin(), 0.0);
                    pose_at(p, theta + PI / 2.0)
                })
                .collect()
        }
        TrajectoryKind::RandomWaypoint => random_waypoint(spec),
    })
}

fn catmull_rom(p: [&Vector3<f64>; 4], t: f64) -> (Vector3<f64>, Vector3<f64>) {
    let [p0, p1, p2, p3] = p;
    let t2 = t * t;
    let t3 = t2 * t;
    let pos = 0.5
        * (2.0 * p1
            + (p2 - p0) * t
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3);
    let vel = 0.5
        * ((p2 - p0)
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * (2.0 * t)
            + (3.0 * p1 - p0 - 3.0 * p2 + p3) * (3.0 * t2));
    (pos, vel)
}

fn random_waypoint(spec: &TrajectorySpec) -> Vec<Pose> {
    const SAMPLES_PER_SEGMENT: usize = 256;
    let mut rng = SimRng::new(spec.seed);
    let (hx, hy, hz) = (spec.extent / 2.0, 0.4 * spec.extent, 0.5);
    let length = spec.step() * (spec.frames.saturating_sub(1)) as f64;
    let min_gap = spec.extent / 5.0;

    let draw = |rng: &mut SimRng| {
        Vector3::new(
            rng.uniform_in(-hx, hx),
            rng.uniform_in(-hy, hy),
            rng.uniform_in(-hz, hz),
        )
    };
    let mut waypoints = vec![draw(&mut rng)];
    let mut chord = 0.0;
    // chord length underestimates arc length, so this is enough path
    while waypoints.len() < 4 || chord < length + spec.extent {
        let next = draw(&mut rng);
        let gap = (next - waypoints[waypoints.len() - 1]).norm();
        if gap >= min_gap {
            chord += gap;
            waypoints.push(next);
        }
    }
    let last = waypoints.len() - 1;
    let mut padded = Vec::with_capacity(waypoints.len() + 2);
    padded.push(2.0 * waypoints[0] - waypoints[1]);
    padded.extend_from_slice(&waypoints);
    padded.push(2.0 * waypoints[last] - waypoints[last - 1]);

    // arc-length table over (segment, t)
    let segments = padded.len() - 3;
    let mut table: Vec<(f64, usize, f64)> = Vec::with_capacity(segments * SAMPLES_PER_SEGMENT + 1);
    let mut s = 0.0;
    let mut prev = padded[1];
    table.push((0.0, 0, 0.0));
    for seg in 0..segments {
        let ctrl = [&padded[seg], &padded[seg + 1], &padded[seg + 2], &padded[seg + 3]];
        for i in 1..=SAMPLES_PER_SEGMENT {
            let t = i as f64 / SAMPLES_PER_SEGMENT as f64;
            let (pos, _) = catmull_rom(ctrl, t);
            s += (pos - prev).norm();
            prev = pos;
            table.push((s, seg, t));
        }
    }

    let mut yaw = 0.0;
    let mut cursor = 0;
    (0..spec.frames)
        .map(|k| {
            let target = (k as f64 * spec.step()).min(s);
            while cursor + 2 < table.len() && table[cursor + 1].0 < target {
                cursor += 1;
            }
            let (s0, seg0, t0) = table[cursor];
            let (s1, seg1, t1) = table[(cursor + 1).min(table.len() - 1)];
            // samples straddle a segment boundary only at t1 = 1
            let (seg, t) = if s1 > s0 {
                let f = ((target - s0) / (s1 - s0)).clamp(0.0, 1.0);
                if seg1 == seg0 {
                    (seg0, t0 + f * (t1 - t0))
                } else {
                    (seg1, f * t1)
                }
            } else {
                (seg0, t0)
            };
            let ctrl = [&padded[seg], &padded[seg + 1], &padded[seg + 2], &padded[seg + 3]];
            let (pos, vel) = catmull_rom(ctrl, t);
            if vel.x.hypot(vel.y) > 1e-9 {
                yaw = vel.y.atan2(vel.x);
            }
            pose_at(pos, yaw)
        })
        .collect()
}

/// Per-frame APR corruption: Gaussian noise with gross outliers.
///
/// The defaults put the raw mean position error near 1.7 m, most of it from
/// the outliers, while inlier pairs usually pass a 0.4 m / 4° consistency
/// check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AprNoiseModel {
    /// Per-axis standard deviation of the position noise, metres.
    pub trans_sigma: f64,
    /// Standard deviation of the rotation angle about a random axis, degrees.
    pub rot_sigma: f64,
    pub outlier_prob: f64,
    /// Outlier displacement magnitude range, metres.
    pub outlier_trans_range: [f64; 2],
    /// Outlier rotation angle range, degrees.
    pub outlier_rot_range: [f64; 2],
}

impl Default for AprNoiseModel {
    fn default() -> Self {
        Self {
            trans_sigma: 0.3,
            rot_sigma: 1.5,
            outlier_prob: 0.2,
            outlier_trans_range: [3.0, 10.0],
            outlier_rot_range: [10.0, 40.0],
        }
    }
}

impl AprNoiseModel {
    pub fn noiseless() -> Self {
        Self {
            trans_sigma: 0.0,
            rot_sigma: 0.0,
            outlier_prob: 0.0,
            outlier_trans_range: [0.0, 0.0],
            outlier_rot_range: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let m = "apr";
        for (field, v) in [("trans_sigma", self.trans_sigma), ("rot_sigma", self.rot_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(m, field, v, "must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(invalid(m, "outlier_prob", self.outlier_prob, "must lie in [0, 1]"));
        }
        for (field, [lo, hi]) in [
            ("outlier_trans_range", self.outlier_trans_range),
            ("outlier_rot_range", self.outlier_rot_range),
        ] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return Err(invalid(m, field, format!("[{lo}, {hi}]"), "must be ordered and non-negative"));
            }
        }
        Ok(())
    }
}

pub fn corrupt_apr(
    gt: &[Pose],
    model: &AprNoiseModel,
    seed: u64,
) -> Result<Vec<Pose>, SynthError> {
    model.validate()?;
    let mut rng = SimRng::new(seed);
    Ok(gt
        .iter()
        .map(|p| {
            let (offset, rot) = if rng.uniform() < model.outlier_prob {
                let dir = rng.direction();
                let [tlo, thi] = model.outlier_trans_range;
                let mag = rng.uniform_in(tlo, thi);
                let axis = nalgebra::Unit::new_unchecked(rng.direction());
                let [rlo, rhi] = model.outlier_rot_range;
                let angle = rng.uniform_in(rlo, rhi);
                (
                    dir * mag,
                    UnitQuaternion::from_axis_angle(&axis, angle.to_radians()),
                )
            } else {
                let offset = rng.normal_vec(model.trans_sigma);
                let axis = nalgebra::Unit::new_unchecked(rng.direction());
                let angle = rng.normal() * model.rot_sigma;
                (
                    offset,
                    UnitQuaternion::from_axis_angle(&axis, angle.to_radians()),
                )
            };
            Pose::new(p.translation() + offset, rot * p.rotation()).expect("finite noise")
        })
        .collect())
}

/// VIO drift: noisy increments plus a random-walk bias, in an offset frame.
///
/// The defaults drift a few metres and a few degrees over 300 one-metre
/// steps while each per-frame increment stays within about a centimetre of
/// the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VioDriftModel {
    /// Per-axis white noise on each position increment, metres per frame.
    pub trans_noise_sigma: f64,
    /// White rotation noise per frame about a random axis, degrees.
    pub rot_noise_sigma: f64,
    /// Per-axis random-walk step of the position-increment bias, metres per
    /// frame.
    pub trans_bias_walk_sigma: f64,
    /// Random-walk step of the yaw-rate bias, degrees per frame.
    pub rot_bias_walk_sigma: f64,
    /// Maps VIO coordinates to world coordinates at the first frame.
    pub initial_offset: RigidTransform,
}

impl Default for VioDriftModel {
    fn default() -> Self {
        Self {
            trans_noise_sigma: 0.01,
            rot_noise_sigma: 0.1,
            trans_bias_walk_sigma: 0.0005,
            rot_bias_walk_sigma: 0.002,
            initial_offset: default_vio_offset(),
        }
    }
}

/// Yaw of 35° and a (12, −7, 0.5) m shift.
pub fn default_vio_offset() -> RigidTransform {
    RigidTransform::new(
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 35f64.to_radians()),
        Vector3::new(12.0, -7.0, 0.5),
    )
}

impl VioDriftModel {
    pub fn noiseless() -> Self {
        Self {
            trans_noise_sigma: 0.0,
            rot_noise_sigma: 0.0,
            trans_bias_walk_sigma: 0.0,
            rot_bias_walk_sigma: 0.0,
            initial_offset: RigidTransform::identity(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (field, v) in [
            ("trans_noise_sigma", self.trans_noise_sigma),
            ("rot_noise_sigma", self.rot_noise_sigma),
            ("trans_bias_walk_sigma", self.trans_bias_walk_sigma),
            ("rot_bias_walk_sigma", self.rot_bias_walk_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("vio", field, v, "must be non-negative"));
            }
        }
        Ok(())
    }
}

/// VIO poses together with the drift state that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct VioTrace {
    pub poses: Vec<Pose>,
    /// Position-increment bias applied at each frame (zero at frame 0),
    /// world-aligned axes.
    pub trans_bias: Vec<Vector3<f64>>,
    /// Accumulated rotation drift, world side, at each frame.
    pub drift_rotation: Vec<UnitQuaternion<f64>>,
}

pub fn corrupt_vio(
    gt: &[Pose],
    model: &VioDriftModel,
    seed: u64,
) -> Result<Vec<Pose>, SynthError> {
    corrupt_vio_traced(gt, model, seed).map(|t| t.poses)
}

/// Integrates ground-truth increments through the drift model.
///
/// With `D_k` the accumulated world-side rotation drift and `b_k` the
/// position-increment bias, the drifted world-frame pose follows
/// `x'_k = x'_{k-1} + D_k (x_k − x_{k-1}) + b_k + n_k` and
/// `q'_k = q_k D_k⁻¹`; the VIO pose is that pose expressed in the offset
/// frame, `initial_offset⁻¹ · (x', q')`.
pub fn corrupt_vio_traced(
    gt: &[Pose],
    model: &VioDriftModel,
    seed: u64,
) -> Result<VioTrace, SynthError> {
    model.validate()?;
    let mut rng = SimRng::new(seed);
    let to_vio = model.initial_offset.inverse();
    let mut trace = VioTrace {
        poses: Vec::with_capacity(gt.len()),
        trans_bias: Vec::with_capacity(gt.len()),
        drift_rotation: Vec::with_capacity(gt.len()),
    };
    let Some(first) = gt.first() else {
        return Ok(trace);
    };

    let mut position = *first.translation();
    let mut drift = UnitQuaternion::identity();
    let mut bias = Vector3::zeros();
    let mut yaw_rate_bias = 0.0;
    let drifted = |position: Vector3<f64>, drift: &UnitQuaternion<f64>, gt: &Pose| {
        let p = Pose::new(position, gt.rotation() * drift.inverse()).expect("finite drift");
        to_vio.apply(&p)
    };
    trace.poses.push(drifted(position, &drift, first));
    trace.trans_bias.push(bias);
    trace.drift_rotation.push(drift);

    for pair in gt.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        bias += rng.normal_vec(model.trans_bias_walk_sigma);
        yaw_rate_bias += rng.normal() * model.rot_bias_walk_sigma;
        let noise = rng.normal_vec(model.trans_noise_sigma);
        let angle = rng.normal() * model.rot_noise_sigma;
        let rot_noise = rng.rotation(angle);
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_rate_bias.to_radians());
        drift = UnitQuaternion::new_normalize((yaw * rot_noise * drift).into_inner());

        position += drift * (cur.translation() - prev.translation()) + bias + noise;
        trace.poses.push(drifted(position, &drift, cur));
        trace.trans_bias.push(bias);
        trace.drift_rotation.push(drift);
    }
    Ok(trace)
}

pub fn make_stream(
    gt: &[Pose],
    apr: &[Pose],
    vio: &[Pose],
    interval: f64,
) -> Result<Vec<FrameObservation>, SynthError> {
    if gt.len() != apr.len() || gt.len() != vio.len() {
        return Err(SynthError::LengthMismatch {
            gt: gt.len(),
            apr: apr.len(),
            vio: vio.len(),
        });
    }
    Ok(gt
        .iter()
        .zip(apr)
        .zip(vio)
        .enumerate()
        .map(|(i, ((gt, apr), vio))| FrameObservation {
            frame_id: i as u64,
            timestamp: i as f64 * interval,
            apr: *apr,
            vio: *vio,
            gt: Some(*gt),
        })
        .collect())
}

/// Everything needed to regenerate a benchmark stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub trajectory: TrajectorySpec,
    pub apr: AprNoiseModel,
    pub vio: VioDriftModel,
}

impl Scenario {
    /// Default benchmark models on `frames` frames, seeded by `seed`.
    pub fn benchmark(frames: usize, seed: u64) -> Self {
        Self {
            trajectory: TrajectorySpec {
                frames,
                seed,
                ..Default::default()
            },
            apr: AprNoiseModel::default(),
            vio: VioDriftModel::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.trajectory.validate()?;
        self.apr.validate()?;
        self.vio.validate()
    }

    /// Generates the observation stream. The trajectory seed drives all
    /// three sub-streams through [`derive_seed`].
    pub fn generate(&self) -> Result<Vec<FrameObservation>, SynthError> {
        self.validate()?;
        let seed = self.trajectory.seed;
        let gt = generate_gt(&TrajectorySpec {
            seed: derive_seed(seed, TAG_GT),
            ..self.trajectory
        })?;
        let apr = corrupt_apr(&gt, &self.apr, derive_seed(seed, TAG_APR))?;
        let vio = corrupt_vio(&gt, &self.vio, derive_seed(seed, TAG_VIO))?;
        make_stream(&gt, &apr, &vio, self.trajectory.interval)
    }
}
