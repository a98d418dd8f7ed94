//! Severity classification of health-forum posts.
//!
//! Lexicon-derived sentiment views (word-level and stative-verb targeted) are
//! fused with externally supplied dense views through weighted generalized
//! canonical correlation analysis; a softmax classifier is trained on the
//! fused representation. The [`evaluation`] module carries the k-fold,
//! ablation and significance-testing harness.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod lexicon;
pub mod pipeline;
pub mod sentiment_views;
mod serde_matrix;
pub mod view_ingest;

#[cfg(any(test, feature = "testing"))]
pub mod oracles;
#[cfg(any(test, feature = "testing"))]
pub mod synthetic;

pub use error::{Error, Result};
