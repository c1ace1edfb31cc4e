//! On-disk formats.
//!
//! * Trajectory: whitespace-separated `timestamp tx ty tz qx qy qz qw`, one
//!   pose per line, `#` starts a comment line.
//! * Observations: CSV with an exact header, `frame_id,timestamp`, then
//!   `apr_*` and `vio_*` pose columns and optionally `gt_*` columns, each pose
//!   as `tx,ty,tz,qx,qy,qz,qw`.
//! * Fusion log: CSV `frame_id,timestamp,category,stage,similarity,tx,ty,tz,qx,qy,qz,qw`;
//!   pose and similarity fields are empty when absent.
//! * Report: JSON, every float written with 17 significant digits.
//!
//! Quaternions are stored `x, y, z, w` on disk. A parsed quaternion within
//! 1e-3 of unit norm is renormalised; anything further off is rejected.
//! Floats in the text formats are printed in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{Category, FrameObservation, FusionConfig, FusionOutput, Stage};
use crate::geometry::Pose;
use crate::metrics::{ErrorStats, EvaluationReport};

/// Largest accepted deviation of a stored quaternion from unit norm.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<FormatError>,
    },
    #[error("line {line}: {reason}: '{token}'")]
    Parse {
        line: usize,
        token: String,
        reason: String,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write observations: {0}")]
    Inconsistent(String),
}

fn parse_err(line: usize, token: &str, reason: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        token: token.to_string(),
        reason: reason.into(),
    }
}

fn read_file(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), FormatError> {
    fs::write(path, contents).map_err(|source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn in_file<T>(path: &Path, r: Result<T, FormatError>) -> Result<T, FormatError> {
    r.map_err(|e| FormatError::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn number(line: usize, token: &str) -> Result<f64, FormatError> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| parse_err(line, token, "malformed number"))?;
    if !v.is_finite() {
        return Err(parse_err(line, token, "non-finite number"));
    }
    Ok(v)
}

/// Parses `tx ty tz qx qy qz qw` tokens.
fn pose_fields(line: usize, tokens: &[&str]) -> Result<Pose, FormatError> {
    debug_assert_eq!(tokens.len(), 7);
    let mut v = [0.0; 7];
    for (slot, tok) in v.iter_mut().zip(tokens) {
        *slot = number(line, tok)?;
    }
    let [tx, ty, tz, qx, qy, qz, qw] = v;
    let norm = (qx * qx + qy * qy + qz * qz + qw * qw).sqrt();
    if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
        return Err(parse_err(
            line,
            &tokens[3..].join(" "),
            format!("quaternion norm {norm} is not unit"),
        ));
    }
    Pose::from_wxyz([tx, ty, tz], [qw, qx, qy, qz])
        .map_err(|e| parse_err(line, &tokens.join(" "), e.to_string()))
}

fn push_pose(out: &mut String, sep: char, pose: &Pose) {
    let t = pose.translation();
    let [w, x, y, z] = pose.wxyz();
    for (i, v) in [t.x, t.y, t.z, x, y, z, w].into_iter().enumerate() {
        if i > 0 {
            out.push(sep);
        }
        write!(out, "{v}").unwrap();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

pub fn parse_trajectory(text: &str) -> Result<Vec<StampedPose>, FormatError> {
    let mut out: Vec<StampedPose> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 8 {
            return Err(parse_err(
                line,
                trimmed,
                format!("expected 8 fields, found {}", tokens.len()),
            ));
        }
        let timestamp = number(line, tokens[0])?;
        if let Some(prev) = out.last() {
            if timestamp < prev.timestamp {
                return Err(parse_err(line, tokens[0], "timestamp decreases"));
            }
        }
        out.push(StampedPose {
            timestamp,
            pose: pose_fields(line, &tokens[1..])?,
        });
    }
    Ok(out)
}

pub fn format_trajectory(poses: &[StampedPose]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for p in poses {
        write!(out, "{} ", p.timestamp).unwrap();
        push_pose(&mut out, ' ', &p.pose);
        out.push('\n');
    }
    out
}

pub fn read_trajectory(path: &Path) -> Result<Vec<StampedPose>, FormatError> {
    in_file(path, parse_trajectory(&read_file(path)?))
}

pub fn write_trajectory(path: &Path, poses: &[StampedPose]) -> Result<(), FormatError> {
    write_file(path, &format_trajectory(poses))
}

const POSE_COLUMNS: [&str; 7] = ["tx", "ty", "tz", "qx", "qy", "qz", "qw"];

fn pose_header(prefix: &str) -> String {
    POSE_COLUMNS
        .iter()
        .map(|c| format!("{prefix}_{c}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Observation header without and with ground-truth columns.
pub fn observation_header(with_gt: bool) -> String {
    let mut h = format!("frame_id,timestamp,{},{}", pose_header("apr"), pose_header("vio"));
    if with_gt {
        h.push(',');
        h.push_str(&pose_header("gt"));
    }
    h
}

pub fn parse_observations(text: &str) -> Result<Vec<FrameObservation>, FormatError> {
    let mut lines = text.lines().enumerate();
    let (header_line, header) = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) => break (i + 1, l.trim()),
            None => return Err(parse_err(1, "", "missing header")),
        }
    };
    let with_gt = if header == observation_header(true) {
        true
    } else if header == observation_header(false) {
        false
    } else {
        return Err(parse_err(header_line, header, "unexpected header"));
    };
    let columns = if with_gt { 23 } else { 16 };

    let mut out: Vec<FrameObservation> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != columns {
            return Err(parse_err(
                line,
                trimmed,
                format!("expected {columns} fields, found {}", fields.len()),
            ));
        }
        let frame_id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, fields[0], "malformed frame id"))?;
        let timestamp = number(line, fields[1])?;
        if let Some(prev) = out.last() {
            if frame_id <= prev.frame_id {
                return Err(parse_err(line, fields[0], "frame id not increasing"));
            }
            if timestamp < prev.timestamp {
                return Err(parse_err(line, fields[1], "timestamp decreases"));
            }
        }
        out.push(FrameObservation {
            frame_id,
            timestamp,
            apr: pose_fields(line, &fields[2..9])?,
            vio: pose_fields(line, &fields[9..16])?,
            gt: if with_gt {
                Some(pose_fields(line, &fields[16..23])?)
            } else {
                None
            },
        });
    }
    Ok(out)
}

/// Writes ground-truth columns when every observation has ground truth; a
/// stream where only some frames do is rejected.
pub fn format_observations(observations: &[FrameObservation]) -> Result<String, FormatError> {
    let with_gt = observations.iter().all(|o| o.gt.is_some());
    if !with_gt && observations.iter().any(|o| o.gt.is_some()) {
        return Err(FormatError::Inconsistent(
            "ground truth present on some frames only".into(),
        ));
    }
    let mut out = observation_header(with_gt);
    out.push('\n');
    for o in observations {
        write!(out, "{},{},", o.frame_id, o.timestamp).unwrap();
        push_pose(&mut out, ',', &o.apr);
        out.push(',');
        push_pose(&mut out, ',', &o.vio);
        if let Some(gt) = &o.gt {
            out.push(',');
            push_pose(&mut out, ',', gt);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_observations(path: &Path) -> Result<Vec<FrameObservation>, FormatError> {
    in_file(path, parse_observations(&read_file(path)?))
}

pub fn write_observations(path: &Path, observations: &[FrameObservation]) -> Result<(), FormatError> {
    write_file(path, &format_observations(observations)?)
}

pub const FUSION_LOG_HEADER: &str =
    "frame_id,timestamp,category,stage,similarity,tx,ty,tz,qx,qy,qz,qw";

/// A fusion output together with the timestamp of its frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedOutput {
    pub timestamp: f64,
    pub output: FusionOutput,
}

pub fn format_fusion_log(entries: &[LoggedOutput]) -> String {
    let mut out = format!("{FUSION_LOG_HEADER}\n");
    for e in entries {
        let o = &e.output;
        write!(
            out,
            "{},{},{},{},",
            o.frame_id,
            e.timestamp,
            o.category.as_str(),
            o.stage.as_str()
        )
        .unwrap();
        if let Some(s) = o.similarity {
            write!(out, "{s}").unwrap();
        }
        out.push(',');
        match &o.pose {
            Some(p) => push_pose(&mut out, ',', p),
            None => out.push_str(",,,,,,"),
        }
        out.push('\n');
    }
    out
}

pub fn parse_fusion_log(text: &str) -> Result<Vec<LoggedOutput>, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == FUSION_LOG_HEADER => {}
        Some((i, h)) => return Err(parse_err(i + 1, h.trim(), "unexpected header")),
        None => return Err(parse_err(1, "", "missing header")),
    }
    let mut out: Vec<LoggedOutput> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let fields: Vec<&str> = raw.trim().split(',').collect();
        if fields.len() != 12 {
            return Err(parse_err(
                line,
                raw.trim(),
                format!("expected 12 fields, found {}", fields.len()),
            ));
        }
        let frame_id: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, fields[0], "malformed frame id"))?;
        let timestamp = number(line, fields[1])?;
        if let Some(prev) = out.last() {
            if frame_id <= prev.output.frame_id {
                return Err(parse_err(line, fields[0], "frame id not increasing"));
            }
            if timestamp < prev.timestamp {
                return Err(parse_err(line, fields[1], "timestamp decreases"));
            }
        }
        let category = Category::parse(fields[2].trim())
            .ok_or_else(|| parse_err(line, fields[2], "unknown category"))?;
        let stage = Stage::parse(fields[3].trim())
            .ok_or_else(|| parse_err(line, fields[3], "unknown stage"))?;
        let similarity = match fields[4].trim() {
            "" => None,
            s => Some(number(line, s)?),
        };
        let pose_tokens = &fields[5..12];
        let pose = if pose_tokens.iter().all(|t| t.trim().is_empty()) {
            None
        } else {
            Some(pose_fields(line, pose_tokens)?)
        };
        if pose.is_none() != (category == Category::AlignmentPending) {
            return Err(parse_err(
                line,
                fields[2],
                "pose must be absent exactly for pending frames",
            ));
        }
        out.push(LoggedOutput {
            timestamp,
            output: FusionOutput {
                frame_id,
                pose,
                category,
                similarity,
                stage,
            },
        });
    }
    Ok(out)
}

pub fn read_fusion_log(path: &Path) -> Result<Vec<LoggedOutput>, FormatError> {
    in_file(path, parse_fusion_log(&read_file(path)?))
}

pub fn write_fusion_log(path: &Path, entries: &[LoggedOutput]) -> Result<(), FormatError> {
    write_file(path, &format_fusion_log(entries))
}

/// Evaluation report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub version: String,
    /// Command line that reproduces the run.
    pub command: String,
    pub seed: Option<u64>,
    pub config: FusionConfig,
    /// Errors of the unfused APR predictions on the same frames.
    pub raw_apr: Option<ErrorStats>,
    pub report: EvaluationReport,
}

/// Pretty JSON with floats at 17 significant digits.
struct FixedDigits<'a>(serde_json::ser::PrettyFormatter<'a>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(
            fn $name<W: ?Sized + std::io::Write>(&mut self, writer: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
                self.0.$name(writer $(, $arg)*)
            }
        )*
    };
}

impl serde_json::ser::Formatter for FixedDigits<'_> {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        writer: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, FormatError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        FixedDigits(serde_json::ser::PrettyFormatter::new()),
    );
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes utf-8"))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, FormatError> {
    Ok(serde_json::from_str(text)?)
}

pub fn read_report(path: &Path) -> Result<ReportFile, FormatError> {
    in_file(path, from_json(&read_file(path)?))
}

pub fn write_report(path: &Path, report: &ReportFile) -> Result<(), FormatError> {
    write_file(path, &to_json(report)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    write_file(path, &to_json(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "1.5 1 2 3 0 0 0 1";

    #[test]
    fn trajectory_line() {
        let t = parse_trajectory(LINE).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].timestamp, 1.5);
        assert_eq!(t[0].pose.wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(t[0].pose.translation().y, 2.0);
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        let err = parse_trajectory("0.0 0 0 0 0 0 0 2").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("line 1:"), "{msg}");
        assert!(msg.contains("0 0 0 2"), "{msg}");
    }

    #[test]
    fn renormalises_near_unit_quaternion() {
        let t = parse_trajectory("0 0 0 0 0 0 0 1.0005").unwrap();
        assert!((t[0].pose.rotation().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn comments_only_is_empty() {
        assert!(parse_trajectory("# nothing\n\n# here\n").unwrap().is_empty());
    }

    #[test]
    fn trajectory_rejections_name_line_and_token() {
        let text = format!("# header\n{LINE}\n1.0 0 0 0 0 0 0 1\n");
        let msg = parse_trajectory(&text).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("'1.0'"), "{msg}");

        let msg = parse_trajectory("0 0 abc 0 0 0 0 1").unwrap_err().to_string();
        assert!(msg.contains("line 1") && msg.contains("'abc'"), "{msg}");

        let msg = parse_trajectory("0 0 0").unwrap_err().to_string();
        assert!(msg.contains("expected 8 fields"), "{msg}");
    }

    #[test]
    fn observation_header_checks() {
        let msg = parse_observations("").unwrap_err().to_string();
        assert!(msg.contains("missing header"));
        let msg = parse_observations("frame,timestamp\n").unwrap_err().to_string();
        assert!(msg.contains("unexpected header"));
        assert!(parse_observations(&observation_header(false)).unwrap().is_empty());
    }

    #[test]
    fn observation_ids_must_increase() {
        let row = |id: u64| format!("{id},0,0,0,0,0,0,0,1,0,0,0,0,0,0,1");
        let text = format!("{}\n{}\n{}\n", observation_header(false), row(3), row(3));
        let msg = parse_observations(&text).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("not increasing"), "{msg}");
    }

    #[test]
    fn fusion_log_pending_rows() {
        let text = format!("{FUSION_LOG_HEADER}\n0,0,pending,alignment,,,,,,,,\n");
        let log = parse_fusion_log(&text).unwrap();
        assert_eq!(log[0].output.category, Category::AlignmentPending);
        assert!(log[0].output.pose.is_none());
        assert_eq!(format_fusion_log(&log), text);

        let bad = format!("{FUSION_LOG_HEADER}\n0,0,reliable,alignment,,,,,,,,\n");
        assert!(parse_fusion_log(&bad).is_err());
    }

    #[test]
    fn json_floats_have_17_digits() {
        let s = to_json(&0.1f64).unwrap();
        assert_eq!(s.trim(), "1.0000000000000001e-1");
        let back: f64 = from_json(&s).unwrap();
        assert_eq!(back.to_bits(), 0.1f64.to_bits());
    }
}
