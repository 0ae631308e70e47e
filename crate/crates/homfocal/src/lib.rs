#![doc = include_str!("../README.md")]

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod parallel;
pub mod verify;

pub use error::{Error, Result};
