//! Two-stage streaming fusion of absolute pose predictions with VIO.
//!
//! The engine alternates between an alignment stage, which looks for a run of
//! `n_pairs` consecutive frame pairs whose APR odometry agrees with the VIO
//! odometry and anchors a VIO-to-world transform on their averaged poses, and
//! a pose-optimisation stage, which passes consistent predictions through and
//! replaces inconsistent ones with the transformed VIO pose. A streak of
//! reliable predictions that disagree with their transformed VIO counterpart
//! sends the engine back to alignment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    self, average_pose, compute_rigid_transform, GeometryError, Odometry, Pose, RigidTransform,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("invalid config: {field} = {value} ({reason})")]
    InvalidConfig {
        field: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("frame {frame_id} does not follow frame {previous}")]
    NonMonotonicFrame { frame_id: u64, previous: u64 },
    #[error("timestamp {timestamp} of frame {frame_id} precedes {previous}")]
    NonMonotonicTimestamp {
        frame_id: u64,
        timestamp: f64,
        previous: f64,
    },
    #[error("frame {frame_id}: reference pose averaging failed: {source}")]
    Averaging {
        frame_id: u64,
        #[source]
        source: GeometryError,
    },
    #[error("frame {frame_id} (stream index {index}): {source}")]
    InStream {
        index: usize,
        frame_id: u64,
        #[source]
        source: Box<FusionError>,
    },
}

/// Thresholds of the relative pose checker and drift detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// RPE threshold in metres.
    pub d_th: f64,
    /// ROE threshold in degrees.
    pub o_th: f64,
    /// Consecutive passing pairs needed to complete an alignment.
    pub n_pairs: usize,
    /// Similarity at or below which a reliable prediction counts towards drift.
    pub gamma: f64,
    /// Consecutive low-similarity reliable predictions that trigger
    /// realignment. `usize::MAX` disables realignment.
    pub drift_streak: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            d_th: 0.4,
            o_th: 4.0,
            n_pairs: 2,
            gamma: 0.99,
            drift_streak: 2,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        fn bad(field: &'static str, value: impl ToString, reason: &'static str) -> FusionError {
            FusionError::InvalidConfig {
                field,
                value: value.to_string(),
                reason,
            }
        }
        if !(self.d_th > 0.0 && self.d_th.is_finite()) {
            return Err(bad("d_th", self.d_th, "must be positive and finite"));
        }
        if !(self.o_th > 0.0 && self.o_th.is_finite()) {
            return Err(bad("o_th", self.o_th, "must be positive and finite"));
        }
        if self.n_pairs < 1 {
            return Err(bad("n_pairs", self.n_pairs, "must be at least 1"));
        }
        if !(-0.5..=1.0).contains(&self.gamma) {
            return Err(bad("gamma", self.gamma, "must lie in [-0.5, 1]"));
        }
        if self.drift_streak < 1 {
            return Err(bad("drift_streak", self.drift_streak, "must be at least 1"));
        }
        Ok(())
    }

    /// Same thresholds, drift detection switched off.
    pub fn without_realignment(mut self) -> Self {
        self.drift_streak = usize::MAX;
        self
    }

    pub fn realignment_enabled(&self) -> bool {
        self.drift_streak != usize::MAX
    }
}

/// One frame of input: the APR prediction, the VIO pose and, for evaluation,
/// ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameObservation {
    pub frame_id: u64,
    pub timestamp: f64,
    pub apr: Pose,
    pub vio: Pose,
    pub gt: Option<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// APR prediction consistent with VIO, output as is.
    ReliableDirect,
    /// Inconsistent prediction replaced by the transformed VIO pose.
    OptimizedFromVio,
    /// Realigning; VIO tracked through the previous transform.
    AlignmentBridge,
    /// No transform has been computed yet; no estimate.
    AlignmentPending,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::ReliableDirect,
        Category::OptimizedFromVio,
        Category::AlignmentBridge,
        Category::AlignmentPending,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::ReliableDirect => "reliable",
            Category::OptimizedFromVio => "optimized",
            Category::AlignmentBridge => "bridge",
            Category::AlignmentPending => "pending",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Alignment,
    PoseOptimization,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Alignment => "alignment",
            Stage::PoseOptimization => "optimization",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Stage::Alignment, Stage::PoseOptimization]
            .into_iter()
            .find(|c| c.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionOutput {
    pub frame_id: u64,
    /// `None` only for [`Category::AlignmentPending`].
    pub pose: Option<Pose>,
    pub category: Category,
    /// Drift similarity, reported on reliable frames of the optimisation stage.
    pub similarity: Option<f64>,
    /// Stage the frame was processed in.
    pub stage: Stage,
}

/// Record of one completed alignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentEvent {
    pub frame_id: u64,
    pub reference_apr: Pose,
    pub reference_vio: Pose,
    pub transform: RigidTransform,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Telemetry {
    pub alignments: usize,
    pub realignments: usize,
    /// Similarity evaluations where a translation sat at the world origin.
    pub degenerate_similarity: usize,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    frame_id: u64,
    timestamp: f64,
    apr: Pose,
    vio: Pose,
}

impl From<&FrameObservation> for Frame {
    fn from(o: &FrameObservation) -> Self {
        Self {
            frame_id: o.frame_id,
            timestamp: o.timestamp,
            apr: o.apr,
            vio: o.vio,
        }
    }
}

/// Whether the APR and VIO odometry between two frames agree within the
/// configured thresholds.
pub fn odometry_consistent(
    config: &FusionConfig,
    prev_apr: &Pose,
    prev_vio: &Pose,
    apr: &Pose,
    vio: &Pose,
) -> bool {
    let u_apr = Odometry::between(prev_apr, apr);
    let u_vio = Odometry::between(prev_vio, vio);
    geometry::rpe(&u_apr, &u_vio) <= config.d_th && geometry::roe(&u_apr, &u_vio) <= config.o_th
}

#[derive(Debug, Clone)]
pub struct FusionEngine {
    config: FusionConfig,
    stage: Stage,
    candidates: Vec<Frame>,
    reference: Option<(Pose, Pose)>,
    transform: Option<RigidTransform>,
    streak: usize,
    previous: Option<Frame>,
    log: Vec<AlignmentEvent>,
    telemetry: Telemetry,
}

impl FusionEngine {
    pub fn new(config: FusionConfig) -> Result<Self, FusionError> {
        config.validate()?;
        Ok(Self {
            config,
            stage: Stage::Alignment,
            candidates: Vec::with_capacity(config.n_pairs + 1),
            reference: None,
            transform: None,
            streak: 0,
            previous: None,
            log: Vec::new(),
            telemetry: Telemetry::default(),
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn transform(&self) -> Option<&RigidTransform> {
        self.transform.as_ref()
    }

    /// Reference poses `(apr, vio)` of the most recent alignment.
    pub fn reference(&self) -> Option<&(Pose, Pose)> {
        self.reference.as_ref()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn streak(&self) -> usize {
        self.streak
    }

    /// Every alignment completed so far, oldest first.
    pub fn alignment_log(&self) -> &[AlignmentEvent] {
        &self.log
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn step(&mut self, obs: &FrameObservation) -> Result<FusionOutput, FusionError> {
        if let Some(prev) = &self.previous {
            if obs.frame_id <= prev.frame_id {
                return Err(FusionError::NonMonotonicFrame {
                    frame_id: obs.frame_id,
                    previous: prev.frame_id,
                });
            }
            if obs.timestamp < prev.timestamp {
                return Err(FusionError::NonMonotonicTimestamp {
                    frame_id: obs.frame_id,
                    timestamp: obs.timestamp,
                    previous: prev.timestamp,
                });
            }
        }
        let frame = Frame::from(obs);
        let out = match self.stage {
            Stage::Alignment => self.align(frame)?,
            Stage::PoseOptimization => self.optimize(frame),
        };
        self.previous = Some(frame);
        Ok(out)
    }

    pub fn run<'a, I>(&mut self, stream: I) -> Result<Vec<FusionOutput>, FusionError>
    where
        I: IntoIterator<Item = &'a FrameObservation>,
    {
        stream
            .into_iter()
            .enumerate()
            .map(|(index, obs)| {
                self.step(obs).map_err(|e| FusionError::InStream {
                    index,
                    frame_id: obs.frame_id,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    fn consistent_with_previous(&self, frame: &Frame) -> bool {
        match &self.previous {
            Some(prev) => {
                odometry_consistent(&self.config, &prev.apr, &prev.vio, &frame.apr, &frame.vio)
            }
            None => false,
        }
    }

    fn align(&mut self, frame: Frame) -> Result<FusionOutput, FusionError> {
        if self.consistent_with_previous(&frame) {
            if self.candidates.is_empty() {
                // run restarted by a realignment: the previous frame opens it
                self.candidates.extend(self.previous);
            }
            self.candidates.push(frame);
        } else {
            self.candidates.clear();
            self.candidates.push(frame);
        }

        if self.candidates.len() == self.config.n_pairs + 1 {
            self.complete_alignment(frame.frame_id)?;
            return Ok(FusionOutput {
                frame_id: frame.frame_id,
                pose: Some(frame.apr),
                category: Category::ReliableDirect,
                similarity: None,
                stage: Stage::Alignment,
            });
        }

        let (pose, category) = match &self.transform {
            Some(t) => (Some(t.apply(&frame.vio)), Category::AlignmentBridge),
            None => (None, Category::AlignmentPending),
        };
        Ok(FusionOutput {
            frame_id: frame.frame_id,
            pose,
            category,
            similarity: None,
            stage: Stage::Alignment,
        })
    }

    fn complete_alignment(&mut self, frame_id: u64) -> Result<(), FusionError> {
        let apr: Vec<Pose> = self.candidates.iter().map(|f| f.apr).collect();
        let vio: Vec<Pose> = self.candidates.iter().map(|f| f.vio).collect();
        let averaging = |source| FusionError::Averaging { frame_id, source };
        let ref_apr = average_pose(&apr).map_err(averaging)?;
        let ref_vio = average_pose(&vio).map_err(averaging)?;
        let transform = compute_rigid_transform(&ref_apr, &ref_vio);

        if self.transform.is_some() {
            self.telemetry.realignments += 1;
        }
        self.telemetry.alignments += 1;
        self.reference = Some((ref_apr, ref_vio));
        self.transform = Some(transform);
        self.log.push(AlignmentEvent {
            frame_id,
            reference_apr: ref_apr,
            reference_vio: ref_vio,
            transform,
        });
        self.candidates.clear();
        self.streak = 0;
        self.stage = Stage::PoseOptimization;
        Ok(())
    }

    fn optimize(&mut self, frame: Frame) -> FusionOutput {
        let transform = self
            .transform
            .expect("optimisation stage is only entered after an alignment");
        let v2w = transform.apply(&frame.vio);

        if !self.consistent_with_previous(&frame) {
            return FusionOutput {
                frame_id: frame.frame_id,
                pose: Some(v2w),
                category: Category::OptimizedFromVio,
                similarity: None,
                stage: Stage::PoseOptimization,
            };
        }

        let sim = geometry::similarity_detailed(&frame.apr, &v2w);
        if sim.degenerate {
            self.telemetry.degenerate_similarity += 1;
        }
        if sim.score <= self.config.gamma {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak >= self.config.drift_streak {
            self.stage = Stage::Alignment;
            self.candidates.clear();
            self.streak = 0;
        }
        FusionOutput {
            frame_id: frame.frame_id,
            pose: Some(frame.apr),
            category: Category::ReliableDirect,
            similarity: Some(sim.score),
            stage: Stage::PoseOptimization,
        }
    }
}

/// Folds a fresh engine over `stream`.
pub fn run_stream(
    config: FusionConfig,
    stream: &[FrameObservation],
) -> Result<Vec<FusionOutput>, FusionError> {
    FusionEngine::new(config)?.run(stream)
}
