#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![doc = include_str!("../README.md")]

extern crate alloc;

pub mod constraints;
pub mod eigen;
pub mod error;
pub mod generators;
pub mod geometry;
pub mod metrics;
pub mod pencil;
pub mod poly;
pub mod pose;
pub mod ransac;
pub mod refine;
pub mod solvers;
pub mod synth;

pub use error::{Error, Result};
