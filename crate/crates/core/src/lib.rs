pub mod config;
pub mod docs;
pub mod embed;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod net;
pub mod payload;
pub mod pipeline;
pub mod scheme;
pub mod store;

mod codec;

pub use error::{Error, Result};
