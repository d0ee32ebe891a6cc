#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assembly;
pub mod error;
pub mod exec;
pub mod filter;
pub mod forward;
pub mod geometry;
pub mod linsolve;
pub mod observation;

pub use error::{Error, Result};
