//! Channel normalization and the fused similarity matrix.
//!
//! Each raw channel (visual, conceptual, contextual) is Min-Max normalized
//! over its off-diagonal entries, then the three are combined as a weighted
//! sum. Diagonal entries are stored as 1 by convention and never compete in
//! nearest-neighbor queries.

use log::warn;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("weights must be non-negative and sum to 1 (got {w1}, {w2}, {w3})")]
    InvalidWeights { w1: f64, w2: f64, w3: f64 },
    #[error("matrix shapes differ: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("similarity value at ({row}, {col}) is not finite")]
    NotFinite { row: usize, col: usize },
}

/// Channel weights for the fused measure; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Weights {
    pub visual: f64,
    pub conceptual: f64,
    pub contextual: f64,
}

impl Weights {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(visual: f64, conceptual: f64, contextual: f64) -> Result<Self, FusionError> {
        let sum = visual + conceptual + contextual;
        let valid = visual >= 0.0
            && conceptual >= 0.0
            && contextual >= 0.0
            && (sum - 1.0).abs() <= Self::SUM_TOLERANCE;
        if !valid {
            return Err(FusionError::InvalidWeights {
                w1: visual,
                w2: conceptual,
                w3: contextual,
            });
        }
        Ok(Weights {
            visual,
            conceptual,
            contextual,
        })
    }
}

impl Default for Weights {
    /// The weighting that favors visual correspondence while keeping both
    /// text channels in play.
    fn default() -> Self {
        Weights {
            visual: 0.4,
            conceptual: 0.3,
            contextual: 0.3,
        }
    }
}

/// Dense symmetric matrix with named rows; `set` mirrors automatically.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    fn off_diagonal(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n)
                .filter(move |&j| j != i)
                .map(move |j| self.get(i, j))
        })
    }
}

/// Min-Max normalizes the off-diagonal entries into [0,1]; the diagonal is
/// set to 1. A constant matrix has no spread to stretch, so it maps to all
/// zeros with a warning.
pub fn min_max_normalize(matrix: &SymMatrix) -> Result<SymMatrix, FusionError> {
    let n = matrix.size();
    for i in 0..n {
        for j in 0..n {
            if !matrix.get(i, j).is_finite() {
                return Err(FusionError::NotFinite { row: i, col: j });
            }
        }
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in matrix.off_diagonal() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        out.set(i, i, 1.0);
    }
    if hi <= lo {
        // empty off-diagonal set (n <= 1) or a constant matrix
        if n > 1 {
            warn!("all off-diagonal similarities equal ({lo}); normalized channel is all zeros");
        }
        return Ok(out);
    }
    let range = hi - lo;
    for i in 0..n {
        for j in (i + 1)..n {
            out.set(i, j, (matrix.get(i, j) - lo) / range);
        }
    }
    Ok(out)
}

/// Elementwise weighted sum of the three normalized channels.
pub fn fuse(
    visual: &SymMatrix,
    conceptual: &SymMatrix,
    contextual: &SymMatrix,
    weights: &Weights,
) -> Result<SymMatrix, FusionError> {
    let n = visual.size();
    if conceptual.size() != n {
        return Err(FusionError::ShapeMismatch(n, conceptual.size()));
    }
    if contextual.size() != n {
        return Err(FusionError::ShapeMismatch(n, contextual.size()));
    }
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let value = weights.visual * visual.get(i, j)
                + weights.conceptual * conceptual.get(i, j)
                + weights.contextual * contextual.get(i, j);
            out.data[i * n + j] = value;
        }
    }
    Ok(out)
}

/// Raw and normalized channels plus the fused similarity over a set of
/// concepts (or active hierarchy nodes). Row order matches `concepts`.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub concepts: Vec<String>,
    pub raw_visual: SymMatrix,
    pub raw_conceptual: SymMatrix,
    pub raw_contextual: SymMatrix,
    pub norm_visual: SymMatrix,
    pub norm_conceptual: SymMatrix,
    pub norm_contextual: SymMatrix,
    pub fused: SymMatrix,
}

impl SimilarityMatrix {
    /// Normalizes the three raw channels and fuses them.
    pub fn from_raw_channels(
        concepts: Vec<String>,
        raw_visual: SymMatrix,
        raw_conceptual: SymMatrix,
        raw_contextual: SymMatrix,
        weights: &Weights,
    ) -> Result<Self, FusionError> {
        let n = concepts.len();
        if raw_visual.size() != n {
            return Err(FusionError::ShapeMismatch(n, raw_visual.size()));
        }
        let norm_visual = min_max_normalize(&raw_visual)?;
        let norm_conceptual = min_max_normalize(&raw_conceptual)?;
        let norm_contextual = min_max_normalize(&raw_contextual)?;
        let mut fused = fuse(&norm_visual, &norm_conceptual, &norm_contextual, weights)?;
        for i in 0..n {
            // diagonal is 1 by convention and masked from neighbor queries
            fused.set(i, i, 1.0);
        }
        Ok(SimilarityMatrix {
            concepts,
            raw_visual,
            raw_conceptual,
            raw_contextual,
            norm_visual,
            norm_conceptual,
            norm_contextual,
            fused,
        })
    }

    pub fn index_of(&self, concept: &str) -> Option<usize> {
        self.concepts.iter().position(|c| c == concept)
    }

    pub fn size(&self) -> usize {
        self.concepts.len()
    }
}
