//! Multi-class learning from complementary labels — labels naming a class
//! an example does *not* belong to.
//!
//! Under the one-versus-rest reduction, complementary-label learning
//! decomposes into one negative-unlabeled binary problem per class: the
//! rows flagged with class k are negatives for its scorer, everything else
//! is unlabeled. The [`risk`] module implements the resulting unbiased
//! risk estimator and its non-negative correction; [`train`] minimizes
//! either with Adam over the scorers in [`model`]; [`priors`] estimates
//! the class priors the risks need via best-bin mixture-proportion
//! estimation; [`data`] covers generation processes and decomposition;
//! [`reproduce`] bundles the desk-scale verification suite.

pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod priors;
pub mod reproduce;
pub mod risk;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
