//! Shrinking needlets on the sphere, Poisson needlet fields, and normal
//! approximation bounds checked against Monte Carlo.

pub mod cltlab;
pub mod cubature;
pub mod error;
pub mod field;
pub mod harmonics;
pub mod poisson;
pub mod scaling;
pub mod weights;

pub use error::{Error, Result};
