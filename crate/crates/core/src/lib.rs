pub mod accident;
pub mod agents;
pub mod bev;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
