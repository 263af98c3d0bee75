//! Ridge regression under performative label shift.

pub mod dataset;
pub mod detequiv;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod population;
pub mod rng;
pub mod simulate;

pub use error::{PerfError, Result};
