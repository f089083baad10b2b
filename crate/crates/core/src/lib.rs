pub mod cost;
pub mod error;
pub mod geometry;
pub mod mtw;
pub mod scenario;
pub mod transport;

pub use error::{Error, Result};
