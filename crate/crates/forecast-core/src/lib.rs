//! From-scratch time-series forecasting toolkit: a hybrid 1-D CNN + BiGRU
//! network trained with SGD on sliding-window supervision, a velocity-based
//! swarm optimizer for hyperparameter tuning, and the full preprocessing,
//! evaluation, and reporting pipeline around it.

pub mod bigru;
pub mod cnn;
pub mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod ssa;
pub mod tensor;

pub use error::{Error, Result};
