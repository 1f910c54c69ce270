//! Data-driven input shaping for flexible robot arms.
//!
//! The crate covers the whole tuning loop:
//!
//! * [`shaper`]: two-impulse zero-vibration shapers, cascading, frequency
//!   response and application to sampled trajectories.
//! * [`modal`]: mode-frequency identification from residual tip acceleration.
//! * [`freq_map`]: joint-space grids of mode frequencies with multilinear
//!   interpolation and bounded extrapolation.
//! * [`sim`]: a pose-dependent multi-mode plant used as ground truth, plus the
//!   residual-amplitude metrics.
//! * [`io`] and [`pipeline`]: file formats and the end-to-end commands behind
//!   the `shapemap` binary.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod freq_map;
pub mod io;
pub mod modal;
pub mod pipeline;
pub mod shaper;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
pub use freq_map::{FrequencyMap, JointPose, K0Policy};
pub use modal::{AccelTrace, FrequencySpectrum, IdentOptions, ModePeak};
pub use shaper::{Impulse, ImpulseSequence, ShaperParams};
pub use sim::{FreqFn, ModeSpec, SimConfig, SimResult};
pub use trajectory::Trajectory;
