//! Rater-effect measurement for ordinal ratings of AI outputs.
//!
//! Human judges score AI outputs on ordinal scales, and those scores mix the
//! true quality of the output with systematic rater behavior: severity
//! (scoring harsher or easier than peers) and centrality (favoring the middle
//! or the ends of the scale). This crate treats the ratings as measurements:
//! it models them with adjacent-logit Rasch-family models carrying output,
//! item, and rater facets, fits the models by joint maximum likelihood, and
//! exposes the pieces around that core — a validated rating-table data model,
//! linkage checks for the rater-output design, classical agreement statistics,
//! rater diagnostics, policy ranking views, and a simulator with known truth
//! for recovery studies.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats, and the CLI
//! live in the companion `raterfx` crate.

#![no_std]

extern crate alloc;

pub mod agreement;
pub mod data;
pub mod diagnostics;
pub mod fit;
pub mod linkage;
pub mod model;
pub mod ranking;
pub mod scale;
pub mod sim;

mod rng;

pub use data::{DataError, RatingDataset, RatingRecord};
pub use fit::{fit_mfrm, fit_pcm, FitConfig, FitError, FitResult, FitWarning, FittedParams};
pub use linkage::{check_linkage, LinkageReport};
pub use model::{category_probs, MfrmParams, PcmParams};
pub use scale::ScaleSpec;
