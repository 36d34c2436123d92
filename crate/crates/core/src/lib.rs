pub mod diff;
pub mod error;
pub mod graph;
pub mod mesh;
pub mod models;
pub mod physics;
pub mod pipeline;
pub mod preprocess;
pub mod synthetic;

pub use error::{Error, Result};
