//! Gaussian-process emulation of source-receptor matrix entries.

mod kernel;
mod matrix;
mod process;

pub use kernel::{kernel_eval, Kernel, KernelFamily};
pub use matrix::{emulate_matrix, EmulatedMatrix, EmulatedPrediction, EntryModel};
pub use process::{
    loocv, r_squared, GaussianProcess, LoocvRecord, Prediction, DESCENT_ROUNDS, GRID_POINTS,
    JITTER_MAX, JITTER_START, LOG_R1_RANGE, LOG_R2_RANGE,
};
