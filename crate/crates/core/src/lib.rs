//! Flow-based samplers for paired data-to-data translation.
//!
//! Three Gaussian probability paths between a clean sample `x0` and a degraded
//! observation `y` are provided: a Schrödinger bridge with a variance-exploding
//! schedule (SB-VE), the same bridge mean with a static variance (SB-SV), and
//! independent conditional flow matching (ICFM). A predictor `F(x_t, y, t)` is
//! trained with a data-prediction or flow-matching loss and sampled either with
//! a reverse Euler recurrence or in one step by direct data prediction.
//!
//! See `examples/` for runnable walkthroughs of each capability.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod oracle;
pub mod paths;
pub mod sampler;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{PredictorModel, TrainConfig};
pub use paths::{PairedBatch, PathFamily, PathPoint, PathSpec};
pub use sampler::{ddp_infer, solve_ode, InferenceConfig, InferenceMode, LossKind, Predictor, Schedule};
