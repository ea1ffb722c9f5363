//! Contextual similarity from co-annotation statistics.
//!
//! Positive pointwise mutual information between two concepts, normalized
//! into [0,1] by the self-information of the more frequent one. Negative
//! dependence is clamped to zero, as is the never-co-annotated case.

use log::warn;
use thiserror::Error;

use crate::corpus::ContextStats;

#[derive(Debug, Error)]
pub enum ContextualError {
    #[error("unknown concept {0}")]
    UnknownConcept(String),
    #[error("concept {0} was never observed in the corpus")]
    NeverObserved(String),
}

/// PMI estimator variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PmiMode {
    /// `log(L * n_ij / (n_i * n_j))`, clamped at 0.
    #[default]
    Standard,
    /// Joint-probability-weighted PMI, `P_ij * log(P_ij / (P_i P_j))`,
    /// clamped at 0; damps the preference for rare concepts when the label
    /// distribution is skewed.
    Weighted,
}

/// Clamped PMI from raw counts. `pair == 0` scores 0 by convention: the
/// clamp already discards negative dependence, and log(0) would only ever
/// land below it.
pub fn pmi_from_counts(total: usize, n_i: usize, n_j: usize, pair: usize, mode: PmiMode) -> f64 {
    if pair == 0 {
        return 0.0;
    }
    let total = total as f64;
    let p_i = n_i as f64 / total;
    let p_j = n_j as f64 / total;
    let p_ij = pair as f64 / total;
    let ratio = (p_ij / (p_i * p_j)).ln();
    let value = match mode {
        PmiMode::Standard => ratio,
        PmiMode::Weighted => p_ij * ratio,
    };
    value.max(0.0)
}

/// Normalized contextual similarity from raw counts; see
/// `contextual_similarity` for the concept-name wrapper.
pub fn gamma_from_counts(total: usize, n_i: usize, n_j: usize, pair: usize, mode: PmiMode) -> f64 {
    let value = pmi_from_counts(total, n_i, n_j, pair, mode);
    if value == 0.0 {
        return 0.0;
    }
    let p_max = n_i.max(n_j) as f64 / total as f64;
    let divisor = -p_max.ln();
    if divisor <= 0.0 {
        // a concept present in every image: 0 by convention
        return 0.0;
    }
    value / divisor
}

fn lookup(stats: &ContextStats, concept: &str) -> Result<usize, ContextualError> {
    let index = stats
        .index_of(concept)
        .ok_or_else(|| ContextualError::UnknownConcept(concept.to_string()))?;
    if stats.count(index) == 0 {
        return Err(ContextualError::NeverObserved(concept.to_string()));
    }
    Ok(index)
}

/// Clamped PMI between two concepts.
pub fn pmi(
    stats: &ContextStats,
    ci: &str,
    cj: &str,
    mode: PmiMode,
) -> Result<f64, ContextualError> {
    let i = lookup(stats, ci)?;
    let j = lookup(stats, cj)?;
    Ok(pmi_from_counts(
        stats.total(),
        stats.count(i),
        stats.count(j),
        stats.pair_count(i, j),
        mode,
    ))
}

/// PMI normalized into [0,1] by `-log(max(P_i, P_j))`. When one concept
/// appears in every image the divisor vanishes; the score is then 0 and a
/// warning is emitted (positive dependence is impossible there anyway).
pub fn contextual_similarity(
    stats: &ContextStats,
    ci: &str,
    cj: &str,
    mode: PmiMode,
) -> Result<f64, ContextualError> {
    let i = lookup(stats, ci)?;
    let j = lookup(stats, cj)?;
    let n_max = stats.count(i).max(stats.count(j));
    if n_max == stats.total() {
        warn!(
            "contextual similarity of ({ci}, {cj}) degenerates: a concept covers every image; scoring 0"
        );
    }
    Ok(gamma_from_counts(
        stats.total(),
        stats.count(i),
        stats.count(j),
        stats.pair_count(i, j),
        mode,
    ))
}

/// Advisory check for the estimator choice: a strongly non-uniform label
/// distribution (max/min occurrence ratio above 10) is where the weighted
/// variant pays off. Never switches anything by itself.
pub fn recommend_weighted(stats: &ContextStats) -> bool {
    let counts: Vec<usize> = (0..stats.concepts().len())
        .map(|i| stats.count(i))
        .filter(|&c| c > 0)
        .collect();
    match (counts.iter().max(), counts.iter().min()) {
        (Some(&max), Some(&min)) if min > 0 => max as f64 / min as f64 > 10.0,
        _ => false,
    }
}
