//! Content-based image retrieval from bag-of-words histograms.
//!
//! Images are cut into dense patches and quantized against a k-means
//! visual codebook ([`codebook`]). The per-image histograms are factorized
//! with nonnegative matrix factorization ([`factorization`]), and queries
//! are ranked by diffusing similarity through a nearest-neighbor graph of
//! the NMF coefficients ([`context`]). [`eval`] runs k-fold
//! cross-validation with ROC curves against a pairwise cosine baseline.
//!
//! ```no_run
//! use histsim::{eval, PipelineConfig};
//!
//! let spec = eval::SyntheticSpec { classes: 4, per_class: 10, ..Default::default() };
//! let dataset = eval::synthetic_dataset(&spec)?;
//! let config = PipelineConfig { codebook_k: 50, nmf_rank: 10, folds: 5, ..Default::default() };
//! let cv = eval::run_cross_validation(&dataset, &config)?;
//! println!("{}", cv.to_csv());
//! # Ok::<(), histsim::Error>(())
//! ```

pub mod cli;
pub mod codebook;
pub mod config;
pub mod context;
pub mod error;
pub mod eval;
pub mod factorization;
pub mod ingest;
pub mod model;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use model::ModelContainer;
