pub mod clustering;
pub mod error;
mod fixed_point;
pub mod gcl;
pub mod global;
pub mod graph;
pub mod io;
pub mod landmarks;
pub mod local;
pub mod report;
pub mod rng;
pub mod search;
pub mod synth;

pub use error::{Error, Result};
pub use graph::{Edge, Embedding, Graph, Partition};
