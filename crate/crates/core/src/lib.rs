//! Temporal action localization with enriched local and global context.
//!
//! Proposals are pooled from snippet features, refined by attention over
//! their own snippets (local context) and over an adapted video-level
//! representation (global context), related to each other by a proposal
//! network, and scored by classification, completeness and regression heads.

pub mod context_nets;
pub mod datamodel;
pub mod error;
pub mod eval;
pub mod heads;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod pnet;

pub use error::{Error, Result};
