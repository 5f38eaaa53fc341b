pub mod bench;
pub mod calibration;
pub mod conformal;
pub mod datagen;
pub mod detectors;
pub mod error;
pub mod measures;
pub mod mmd;
pub mod ncd;
pub mod ordering;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
