//! Desk-scale relighting laboratory: synthetic Lambertian scenes, flow
//! matching with path consistency, geometric feedback and an attribute
//! benchmark.

pub mod annotation;
pub mod autodiff;
pub mod checkpoint;
pub mod container;
pub mod error;
pub mod evalbench;
pub mod flowcore;
pub mod geometry;
pub mod kvconfig;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scenes;
pub mod trainer;

pub use error::{Error, Result};
