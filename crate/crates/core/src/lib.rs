pub mod cache;
pub mod config;
pub mod dense;
pub mod dtd;
pub mod error;
pub mod export;
pub mod fem;
pub mod floquet;
pub mod geometry;
pub mod halfspace;
pub mod interior;
pub mod medium;
pub mod oracle;
pub mod validation;

pub use error::{Error, Result};
