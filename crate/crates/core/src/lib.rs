//! Fusion of absolute pose regression with visual-inertial odometry.
//!
//! * [`geometry`]: pose algebra, averaging and the VIO-to-world transform.
//! * [`fusion`]: the alignment / pose-optimisation state machine.
//! * [`metrics`]: absolute errors, accuracy buckets and report aggregation.
//! * [`synth`]: seeded synthetic ground truth, APR noise and VIO drift.
//! * [`io`]: trajectory, observation and report file formats.
//! * [`cli`]: the `posefuse` command-line pipeline.

pub mod geometry;
pub mod fusion;
pub mod synth;
pub mod metrics;
pub mod io;
pub mod cli;
