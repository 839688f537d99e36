//! Loophole-free Bell tests with timetag data.

pub mod bell;
pub mod diagnostics;
pub mod distance;
pub mod error;
pub mod inference;
pub mod lrsource;
pub mod optim;
pub mod pipeline;
pub mod oracle;
pub mod simsrc;
pub mod trial;
pub mod tuples;
pub mod verify;

pub use error::{Error, Result};
