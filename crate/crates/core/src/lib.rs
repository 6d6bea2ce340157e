pub mod bayes;
pub mod doe;
pub mod error;
pub mod forward;
pub mod gp;
pub mod hexfloat;
pub mod noise_cal;
pub mod pipeline;
pub mod seed;
pub mod sensitivity;

pub use error::{Error, Result};
