//! Six-attribute lighting labels: rule-based labeling from light programs,
//! one-hot encoding, and a pixel-space classifier.

mod infer;
mod label;
mod rules;

pub use infer::*;
pub use label::*;
pub use rules::*;
