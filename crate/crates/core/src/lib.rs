#![no_std]

extern crate alloc;

pub mod error;
pub mod estimator;
pub mod ions;
pub mod lattice;
pub mod linalg;
pub mod sensor;
pub mod state;

pub use error::{Error, Result};
