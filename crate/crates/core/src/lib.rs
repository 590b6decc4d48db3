//! Expectation Shapley value explanations for black-box models.
//!
//! A prediction `f(x)` is explained as `φ0 + Σ φ_i`, where `φ_i` is the
//! Shapley value of interpretable feature `i` in the game
//! `f_x(S) = E_b[f(x_S, b_{¬S})]` over a background set. See the
//! [`estimators`] module for the available ways of computing `φ`.

pub mod bench;
pub mod deeplift;
pub mod error;
pub mod estimators;
pub mod masking;
pub mod model;
pub mod viz;

pub use error::{Error, Result};
pub use estimators::Explanation;
pub use masking::{BackgroundSet, Coalition, FeatureGrouping, SetFunctionCache};
pub use model::{evaluate, load_model, FeatureVector, Model, Predict};
