pub mod arcsine;
pub mod densities;
pub mod error;
pub mod features;
pub mod kae;
pub mod learn;
pub mod linalg;
pub mod lloyd;
pub mod quad;
pub mod quantizer;
pub mod rng;
pub mod sketch;
pub mod theory;

pub use error::{Error, Result};
pub use quantizer::{Quantizer, QuantizerKind};
