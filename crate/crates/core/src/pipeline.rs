//! Vocabulary-level pipeline: one-vs-all models per concept, their
//! centroids, and the assembled three-channel similarity matrix.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::classify::{balanced_pair, stream_seed};
use crate::conceptual::{self, ConceptualError, SensePair, SlotMatching};
use crate::contextual::{gamma_from_counts, PmiMode};
use crate::corpus::{compute_context_stats, Corpus, CorpusError};
use crate::fusion::{FusionError, SimilarityMatrix, SymMatrix, Weights};
use crate::lexicon::{Lexicon, LexiconError};
use crate::visual::{self, SigmaPolicy, SvmModel, VisualError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Conceptual(#[from] ConceptualError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("concept {concept} covers every image; cannot assemble negatives for its model")]
    NoNegatives { concept: String },
}

/// Settings shared by the similarity and construction stages.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub weights: Weights,
    pub pmi_mode: PmiMode,
    pub matching: SlotMatching,
    pub sigma: SigmaPolicy,
    pub svm_c: f64,
    pub svm_tol: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            weights: Weights::default(),
            pmi_mode: PmiMode::Standard,
            matching: SlotMatching::Aligned,
            sigma: SigmaPolicy::Median,
            svm_c: 10.0,
            svm_tol: 1e-3,
            seed: 42,
        }
    }
}

/// The similarity matrix over the vocabulary plus everything derived along
/// the way that later stages want back: per-concept models, centroids, and
/// the sense pair chosen for every conceptual score.
#[derive(Debug)]
pub struct VocabularySimilarity {
    pub matrix: SimilarityMatrix,
    pub models: BTreeMap<String, SvmModel>,
    pub centroids: BTreeMap<String, Vec<f64>>,
    /// Row-major over `matrix.concepts`.
    pub sense_choices: Vec<SensePair>,
}

/// Trains the per-concept one-vs-all models used for centroids. Negatives
/// are subsampled (seeded per concept) to match the positive count; the
/// kernel width follows the configured policy over the balanced sample.
pub fn train_concept_models(
    corpus: &Corpus,
    config: &PipelineConfig,
) -> Result<BTreeMap<String, SvmModel>, PipelineError> {
    let vocabulary = corpus.vocabulary().to_vec();
    let models: Result<Vec<(String, SvmModel)>, PipelineError> = vocabulary
        .par_iter()
        .map(|concept| {
            let positives: Vec<Vec<f64>> = corpus
                .images()
                .iter()
                .filter(|img| img.labels.contains(concept))
                .map(|img| img.features.clone())
                .collect();
            let negatives: Vec<Vec<f64>> = corpus
                .images()
                .iter()
                .filter(|img| !img.labels.contains(concept))
                .map(|img| img.features.clone())
                .collect();
            if negatives.is_empty() {
                return Err(PipelineError::NoNegatives {
                    concept: concept.clone(),
                });
            }
            let (positives, negatives) = balanced_pair(
                positives,
                negatives,
                stream_seed(config.seed, concept),
            );
            let sample: Vec<Vec<f64>> = positives.iter().chain(&negatives).cloned().collect();
            let kernel = config.sigma.resolve(&sample)?;
            let model =
                visual::train_svm(&positives, &negatives, &kernel, config.svm_c, config.svm_tol)?;
            Ok((concept.clone(), model))
        })
        .collect();
    Ok(models?.into_iter().collect())
}

/// Positive-class support-vector centroid per concept.
pub fn concept_centroids(
    models: &BTreeMap<String, SvmModel>,
) -> Result<BTreeMap<String, Vec<f64>>, PipelineError> {
    models
        .iter()
        .map(|(concept, model)| {
            let centroid = visual::centroid(model, concept)?;
            Ok((concept.clone(), centroid.vector))
        })
        .collect()
}

/// Computes all three raw channels over the vocabulary and fuses them.
pub fn compute_similarity(
    corpus: &Corpus,
    lexicon: &Lexicon,
    config: &PipelineConfig,
) -> Result<VocabularySimilarity, PipelineError> {
    let vocabulary = corpus.vocabulary().to_vec();
    for concept in &vocabulary {
        lexicon.senses(concept)?;
    }
    let n = vocabulary.len();

    let models = train_concept_models(corpus, config)?;
    let centroids = concept_centroids(&models)?;

    let mut raw_visual = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let a = &centroids[&vocabulary[i]];
            let b = &centroids[&vocabulary[j]];
            let distance = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            raw_visual.set(i, j, 1.0 / (1.0 + distance));
        }
    }

    let mut raw_conceptual = SymMatrix::zeros(n);
    let placeholder = SensePair {
        sense_a: String::new(),
        sense_b: String::new(),
        score: 0.0,
    };
    let mut sense_choices = vec![placeholder; n * n];
    for i in 0..n {
        for j in i..n {
            let (score, pair) = conceptual::conceptual_similarity_with(
                lexicon,
                &vocabulary[i],
                &vocabulary[j],
                config.matching,
            )?;
            raw_conceptual.set(i, j, score);
            sense_choices[j * n + i] = SensePair {
                sense_a: pair.sense_b.clone(),
                sense_b: pair.sense_a.clone(),
                score: pair.score,
            };
            sense_choices[i * n + j] = pair;
        }
    }

    let stats = compute_context_stats(corpus);
    let mut raw_contextual = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            raw_contextual.set(
                i,
                j,
                gamma_from_counts(
                    stats.total(),
                    stats.count(i),
                    stats.count(j),
                    stats.pair_count(i, j),
                    config.pmi_mode,
                ),
            );
        }
    }

    let matrix = SimilarityMatrix::from_raw_channels(
        vocabulary,
        raw_visual,
        raw_conceptual,
        raw_contextual,
        &config.weights,
    )?;
    Ok(VocabularySimilarity {
        matrix,
        models,
        centroids,
        sense_choices,
    })
}
