//! Singular-value-penalized and rank-constrained vector GLMs fitted by
//! matrix thresholding iterations, with supervised feature extraction,
//! progressive feature-space reduction, and projective cross-validation.

pub mod error;
pub mod glm;
pub mod io;
pub mod reduce;
pub mod linalg;
pub mod oracle;
pub mod solve;
pub mod textfmt;
pub mod threshold;
pub mod tune;

pub use error::{Error, Result};
