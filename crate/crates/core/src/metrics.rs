//! Absolute pose errors against ground truth, accuracy buckets, and the
//! per-partition summaries of an evaluation report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Category, FrameObservation, FusionOutput};
use crate::geometry::{relative_rotation_deg, relative_translation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no frames to aggregate")]
    Empty,
    #[error("frame {frame_id} has no ground truth")]
    MissingGroundTruth { frame_id: u64 },
    #[error("{outputs} outputs for {observations} observations")]
    LengthMismatch { outputs: usize, observations: usize },
    #[error("output {index} is frame {output} but observation is frame {observation}")]
    IdMismatch {
        index: usize,
        output: u64,
        observation: u64,
    },
}

/// Accuracy thresholds `(metres, degrees)`, finest first. Bounds inclusive.
pub const HIGH: (f64, f64) = (0.25, 2.0);
pub const MEDIUM: (f64, f64) = (0.5, 5.0);
pub const LOW: (f64, f64) = (5.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameError {
    pub frame_id: u64,
    /// Absolute position error, metres.
    pub ape: f64,
    /// Absolute orientation error, degrees.
    pub aoe: f64,
    /// `None` when the estimate is a raw input rather than a fusion output.
    pub category: Option<Category>,
}

/// Finest accuracy level an error reaches. Levels nest: a `High` frame is
/// also within the medium and low thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    High,
    Medium,
    Low,
    None,
}

fn within(e: &FrameError, (t, r): (f64, f64)) -> bool {
    e.ape <= t && e.aoe <= r
}

pub fn bucket(e: &FrameError) -> Bucket {
    if within(e, HIGH) {
        Bucket::High
    } else if within(e, MEDIUM) {
        Bucket::Medium
    } else if within(e, LOW) {
        Bucket::Low
    } else {
        Bucket::None
    }
}

/// Errors of every fusion output that carries a pose; pending frames are
/// skipped.
pub fn frame_errors(
    outputs: &[FusionOutput],
    observations: &[FrameObservation],
) -> Result<Vec<FrameError>, MetricsError> {
    if outputs.len() != observations.len() {
        return Err(MetricsError::LengthMismatch {
            outputs: outputs.len(),
            observations: observations.len(),
        });
    }
    let mut errors = Vec::with_capacity(outputs.len());
    for (index, (out, obs)) in outputs.iter().zip(observations).enumerate() {
        if out.frame_id != obs.frame_id {
            return Err(MetricsError::IdMismatch {
                index,
                output: out.frame_id,
                observation: obs.frame_id,
            });
        }
        let gt = obs.gt.ok_or(MetricsError::MissingGroundTruth {
            frame_id: obs.frame_id,
        })?;
        if let Some(pose) = &out.pose {
            errors.push(FrameError {
                frame_id: out.frame_id,
                ape: relative_translation(pose, &gt),
                aoe: relative_rotation_deg(pose, &gt),
                category: Some(out.category),
            });
        }
    }
    Ok(errors)
}

/// Errors of the raw APR predictions.
pub fn raw_errors(observations: &[FrameObservation]) -> Result<Vec<FrameError>, MetricsError> {
    observations
        .iter()
        .map(|obs| {
            let gt = obs.gt.ok_or(MetricsError::MissingGroundTruth {
                frame_id: obs.frame_id,
            })?;
            Ok(FrameError {
                frame_id: obs.frame_id,
                ape: relative_translation(&obs.apr, &gt),
                aoe: relative_rotation_deg(&obs.apr, &gt),
                category: None,
            })
        })
        .collect()
}

/// Mean, median and accuracy-level percentages of a set of frame errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub count: usize,
    pub mean_ape: f64,
    pub median_ape: f64,
    pub mean_aoe: f64,
    pub median_aoe: f64,
    /// Percent of frames within the high / medium / low thresholds.
    pub pct_high: f64,
    pub pct_medium: f64,
    pub pct_low: f64,
}

/// Lower-middle element for even counts.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

impl ErrorStats {
    /// `None` for an empty set.
    pub fn compute<'a, I>(errors: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a FrameError>,
    {
        let errors: Vec<&FrameError> = errors.into_iter().collect();
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mut ape: Vec<f64> = errors.iter().map(|e| e.ape).collect();
        let mut aoe: Vec<f64> = errors.iter().map(|e| e.aoe).collect();
        let pct = |t| 100.0 * errors.iter().filter(|e| within(e, t)).count() as f64 / n;
        Some(Self {
            count: errors.len(),
            mean_ape: ape.iter().sum::<f64>() / n,
            mean_aoe: aoe.iter().sum::<f64>() / n,
            median_ape: median(&mut ape),
            median_aoe: median(&mut aoe),
            pct_high: pct(HIGH),
            pct_medium: pct(MEDIUM),
            pct_low: pct(LOW),
        })
    }

    /// Percent of frames outside the low-accuracy thresholds.
    pub fn pct_miss(&self) -> f64 {
        100.0 - self.pct_low
    }
}

/// Share of frames per output category, in percent of all frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryRatios {
    pub reliable: f64,
    pub optimized: f64,
    pub bridge: f64,
    pub pending: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub frames_total: usize,
    pub frames_evaluated: usize,
    pub frames_pending: usize,
    /// Every emitted estimate.
    pub overall: ErrorStats,
    /// Reliable and optimised frames, alignment bridges excluded.
    pub rps_plus_opt: Option<ErrorStats>,
    pub only_rps: Option<ErrorStats>,
    pub only_opt: Option<ErrorStats>,
    pub bridge: Option<ErrorStats>,
    pub ratios: CategoryRatios,
}

fn with_category<'a>(
    errors: &'a [FrameError],
    keep: &'a [Category],
) -> impl Iterator<Item = &'a FrameError> + 'a {
    errors
        .iter()
        .filter(move |e| e.category.is_some_and(|c| keep.contains(&c)))
}

/// Summarises evaluated frames. Ratios treat the input as every frame; use
/// [`evaluate`] to account for pending frames.
pub fn aggregate(errors: &[FrameError]) -> Result<EvaluationReport, MetricsError> {
    let overall = ErrorStats::compute(errors).ok_or(MetricsError::Empty)?;
    let stats = |keep: &[Category]| ErrorStats::compute(with_category(errors, keep));
    let mut report = EvaluationReport {
        frames_total: errors.len(),
        frames_evaluated: errors.len(),
        frames_pending: 0,
        overall,
        rps_plus_opt: stats(&[Category::ReliableDirect, Category::OptimizedFromVio]),
        only_rps: stats(&[Category::ReliableDirect]),
        only_opt: stats(&[Category::OptimizedFromVio]),
        bridge: stats(&[Category::AlignmentBridge]),
        ratios: CategoryRatios::default(),
    };
    report.ratios = ratios(errors, 0);
    Ok(report)
}

fn ratios(errors: &[FrameError], pending: usize) -> CategoryRatios {
    let total = (errors.len() + pending) as f64;
    let share = |c: Category| {
        100.0 * errors.iter().filter(|e| e.category == Some(c)).count() as f64 / total
    };
    CategoryRatios {
        reliable: share(Category::ReliableDirect),
        optimized: share(Category::OptimizedFromVio),
        bridge: share(Category::AlignmentBridge),
        pending: 100.0 * pending as f64 / total,
    }
}

/// [`frame_errors`] followed by [`aggregate`], with pending frames counted in
/// the totals and ratios.
pub fn evaluate(
    outputs: &[FusionOutput],
    observations: &[FrameObservation],
) -> Result<EvaluationReport, MetricsError> {
    let errors = frame_errors(outputs, observations)?;
    let pending = outputs.len() - errors.len();
    let mut report = aggregate(&errors)?;
    report.frames_total = outputs.len();
    report.frames_pending = pending;
    report.ratios = ratios(&errors, pending);
    Ok(report)
}
