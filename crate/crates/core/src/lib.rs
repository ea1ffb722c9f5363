//! Semantic hierarchy construction for image annotation.
//!
//! The pipeline ingests an annotated corpus (bag-of-features histograms plus
//! concept labels) and a small WordNet-style lexicon, scores every concept
//! pair on three channels — visual (SVM support-vector centroids), conceptual
//! (gloss-vector cosine over expanded glosses), and contextual (normalized
//! pointwise mutual information) — fuses the channels into a single weighted
//! similarity, and grows a concept hierarchy bottom-up by grouping the most
//! similar nodes under their least common subsumer. The resulting tree can
//! then back a set of one-vs-siblings classifiers whose ranking quality is
//! compared against flat one-vs-all classification.

pub mod classify;
pub mod conceptual;
pub mod contextual;
pub mod corpus;
pub mod fusion;
pub mod hierarchy;
pub mod lexicon;
pub mod pipeline;
pub mod visual;

pub use corpus::{Corpus, ImageRecord};
pub use fusion::{SimilarityMatrix, Weights};
pub use hierarchy::Hierarchy;
pub use lexicon::Lexicon;
