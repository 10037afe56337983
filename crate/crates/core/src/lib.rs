//! Phonon modes, Huang–Rhys factors and vibronic emission lineshapes of point
//! defects, with formation-energy bookkeeping.

pub mod eigen;
pub mod energetics;
pub mod fcoracle;
pub mod io;
pub mod error;
pub mod model;
pub mod numeric;
pub mod phonons;
pub mod units;
pub mod vibronic;
pub mod voigt;

pub use error::{Error, Result};
pub use model::*;
