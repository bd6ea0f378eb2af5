//! Gradient descent and heavy-ball dynamics on small analytic models.
//!
//! The crate provides the models (a scalar ReLU network, a two-parameter
//! toy loss and a linear diagonal network on sparse regression data),
//! the optimizer with learning-rate schedules and mid-run switching,
//! sharpness estimation, the stabilization quantities and bounds, and the
//! experiment drivers built on top of them.
//!
//! With the default `parallel` feature, sweeps and batch computations run
//! on the rayon thread pool; without it they run sequentially with
//! identical results.

pub mod error;
pub mod experiments;
pub mod io;
pub mod models;
pub mod optim;
pub mod par;
pub mod spectral;
pub mod theory;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use models::{EvalResult, Model};
pub use trajectory::{Record, Trajectory, TrajectoryMeta};
