//! Troll-comment detection toolkit.
//!
//! The crate is organised as a staged pipeline:
//!
//! * [`corpus`]: comment ingestion, accusation mining, annotator agreement and
//!   balanced dataset construction.
//! * [`textproc`]: tokenisation, stemming, n-grams, affixes, emoticons and
//!   punctuation statistics.
//! * [`lexicons`]: term lists (sentiment, bad words, politician mentions,
//!   named-entity gazetteers) and their matching rules.
//! * [`embeddings`]: skip-gram training, vector loading, k-means clustering and
//!   cosine neighbours.
//! * [`features`]: group-tagged raw features, the train-fit column registry and
//!   min-max + L2 scaling.
//! * [`learn`]: L2-regularised logistic regression, metrics and stratified
//!   cross-validation.
//! * [`experiments`]: ablation tables, the user-level threshold study and the
//!   accusation detector.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common choices.

// `!(x > y)` comparisons deliberately treat NaN as failing the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod experiments;
pub mod features;
pub mod learn;
pub mod lexicons;
pub mod scalar;
pub mod textproc;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use corpus::{Comment, Example, Label, LabeledDataset, UserStats};
pub use features::{FeatureGroup, FeatureRegistry, GroupMask, RawFeatures};
pub use lexicons::Lexicon;

/// Sparse scaled feature vector in double precision.
pub type FeatureVector = features::FeatureVector<f64>;
/// Per-column min/max statistics in double precision.
pub type ScalerStats = features::ScalerStats<f64>;
/// Serialisable classifier in double precision.
pub type Model = learn::Model<f64>;
/// Trained weights and intercept in double precision.
pub type LogisticRegression = learn::LogisticRegression<f64>;
/// Word vectors stored in single precision, as word2vec tooling does.
pub type EmbeddingTable = embeddings::EmbeddingTable<f32>;
/// Double-precision embedding table.
pub type EmbeddingTable64 = embeddings::EmbeddingTable<f64>;
/// K-means model over single-precision word vectors.
pub type ClusterModel = embeddings::ClusterModel<f32>;
