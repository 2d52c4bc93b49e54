//! Grounded collaborative dialogue for the OneCommon reference game.

pub mod agent;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod harness;
pub mod neural;
pub mod pragmatics;
pub mod spans;
pub mod structcrf;
pub mod training;
pub mod world;

pub use error::{Error, Result};
