//! Synthetic scenes, rendering, degradation and training-tuple assembly.

mod dataset;
mod degrade;
mod fill;
mod render;
mod sample;
mod shading;
mod tuple;
mod types;

pub use dataset::*;
pub use degrade::*;
pub use fill::*;
pub use render::*;
pub use sample::*;
pub use shading::*;
pub use tuple::*;
pub use types::*;
