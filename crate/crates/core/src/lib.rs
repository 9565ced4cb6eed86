//! Weighted k-nearest-neighbor taste recommendation on sparse rating data.
//!
//! The crate covers the whole pipeline: loading and z-scoring ratings,
//! Pearson similarities with an overlap threshold and mean fallback,
//! committee formation with completion search, repeated leave-n-out
//! pairwise-choice evaluation, advice networks (recommender potential and
//! influence) and the taste-homophily index.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod homophily;
pub mod network;
pub mod recommender;
pub mod rng;
pub mod similarity;
pub mod synthetic;

pub use dataset::{NormalizedRatings, RatingMatrix, RatingRecord};
pub use error::{Error, Result};
pub use evaluation::{EvaluationPlan, PerformanceReport, TargetSet};
pub use homophily::{GroupBaselines, HomophilyReport};
pub use network::{AdviceNetwork, InfluenceMode, NetworkScope};
pub use recommender::{AdviserPool, Committee, KnnConfig, Prediction};
pub use similarity::{Provenance, SimilarityMatrix};
pub use synthetic::{GroupSpec, SyntheticPopulation, SyntheticSpec};
