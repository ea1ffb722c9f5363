//! Conceptual similarity between concept names via gloss vectors.
//!
//! Two synsets are compared by the cosine of their expanded gloss vectors,
//! slot by slot (own gloss with own gloss, hypernym glosses with hypernym
//! glosses, ...), averaged over the five slots. Concept-level similarity
//! takes the best-scoring sense pair, which doubles as the disambiguation of
//! the two names.

use thiserror::Error;

use crate::lexicon::{GlossVector, Lexicon, LexiconError};

#[derive(Debug, Error)]
pub enum ConceptualError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

/// How the two expanded gloss sets are matched in `synset_similarity_with`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlotMatching {
    /// Compare slot k with slot k only; scores stay in [0,1].
    #[default]
    Aligned,
    /// Sum cosines over the full slot cross product (may exceed 1); kept for
    /// comparison runs.
    AllPairs,
}

/// The sense pair a concept-level score came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SensePair {
    pub sense_a: String,
    pub sense_b: String,
    pub score: f64,
}

/// Cosine of two sparse count vectors; empty vectors score 0 so missing
/// relations penalize both sides the same way.
pub fn cosine(u: &GlossVector, v: &GlossVector) -> f64 {
    if u.is_empty() || v.is_empty() {
        return 0.0;
    }
    u.dot(v) / (u.norm() * v.norm())
}

/// Mean slot-aligned cosine of the two expanded gloss sets.
pub fn synset_similarity(lexicon: &Lexicon, a: &str, b: &str) -> Result<f64, ConceptualError> {
    synset_similarity_with(lexicon, a, b, SlotMatching::Aligned)
}

pub fn synset_similarity_with(
    lexicon: &Lexicon,
    a: &str,
    b: &str,
    matching: SlotMatching,
) -> Result<f64, ConceptualError> {
    let set_a = lexicon.expanded_gloss_set(a)?;
    let set_b = lexicon.expanded_gloss_set(b)?;
    let arity = set_a.len() as f64;
    let sum = match matching {
        SlotMatching::Aligned => set_a
            .slots
            .iter()
            .zip(&set_b.slots)
            .map(|(u, v)| cosine(u, v))
            .sum::<f64>(),
        SlotMatching::AllPairs => set_a
            .slots
            .iter()
            .flat_map(|u| set_b.slots.iter().map(move |v| cosine(u, v)))
            .sum::<f64>(),
    };
    Ok(sum / arity)
}

/// Concept-level similarity: the maximum synset similarity over all sense
/// pairs of the two names, together with the maximizing pair. Symmetric by
/// construction; ties resolve to the earliest pair in sense-list order (of
/// the lexicographically smaller concept).
pub fn conceptual_similarity(
    lexicon: &Lexicon,
    ci: &str,
    cj: &str,
) -> Result<(f64, SensePair), ConceptualError> {
    conceptual_similarity_with(lexicon, ci, cj, SlotMatching::Aligned)
}

pub fn conceptual_similarity_with(
    lexicon: &Lexicon,
    ci: &str,
    cj: &str,
    matching: SlotMatching,
) -> Result<(f64, SensePair), ConceptualError> {
    let swapped = ci > cj;
    let (first, second) = if swapped { (cj, ci) } else { (ci, cj) };
    let (score, pair) = max_over_candidates(
        lexicon,
        lexicon.senses(first)?,
        lexicon.senses(second)?,
        matching,
    )?;
    let pair = if swapped {
        SensePair {
            sense_a: pair.sense_b,
            sense_b: pair.sense_a,
            score: pair.score,
        }
    } else {
        pair
    };
    Ok((score, pair))
}

/// Best-scoring pair over explicit candidate lists; used both for concept
/// names and for hierarchy nodes that carry their own candidate sets.
pub fn max_over_candidates(
    lexicon: &Lexicon,
    candidates_a: &[String],
    candidates_b: &[String],
    matching: SlotMatching,
) -> Result<(f64, SensePair), ConceptualError> {
    let mut best: Option<SensePair> = None;
    for sense_a in candidates_a {
        for sense_b in candidates_b {
            let score = synset_similarity_with(lexicon, sense_a, sense_b, matching)?;
            let better = match &best {
                None => true,
                Some(current) => score > current.score,
            };
            if better {
                best = Some(SensePair {
                    sense_a: sense_a.clone(),
                    sense_b: sense_b.clone(),
                    score,
                });
            }
        }
    }
    let best = best.expect("sense lists are validated non-empty");
    Ok((best.score, best))
}
