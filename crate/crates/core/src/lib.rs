//! Single-trial P300 classification benchmark.
//!
//! The crate covers the whole path from continuous EEG to a comparison
//! report: epoch extraction and artifact rejection ([`preprocess`]),
//! windowed-means features ([`features`]), three classifiers ([`lda`],
//! [`svm`], [`cnn`]) and the Monte-Carlo cross-validation protocol with a
//! holdout set and trial averaging ([`eval`]).

pub mod cli;
pub mod cnn;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod lda;
pub mod linalg;
pub mod metrics;
pub mod preprocess;
pub mod rng;
pub mod svm;

pub use error::{Error, Result};
pub use ingest::EpochSet;
pub use linalg::Matrix;
pub use metrics::MetricSet;
pub use rng::SeededRng;
