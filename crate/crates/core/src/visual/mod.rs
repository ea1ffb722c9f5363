//! Visual similarity: per-concept one-vs-all SVMs, support-vector centroids,
//! and the inverse-distance similarity between centroids.

pub mod smo;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub use smo::{max_kkt_violation, SmoSolution};

/// Iteration budget for one SMO run.
pub const MAX_SMO_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum VisualError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel width must be a positive finite number, got {0}")]
    InvalidSigma(f64),
    #[error("training needs at least one positive and one negative example")]
    EmptyClass,
    #[error("SMO did not converge within the iteration budget (residual KKT violation {violation})")]
    NonConvergence { violation: f64 },
    #[error("model has no positive-class support vectors")]
    NoPositiveSupportVectors,
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("failed to access model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// RBF kernel width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    sigma: f64,
}

impl KernelParams {
    pub fn new(sigma: f64) -> Result<Self, VisualError> {
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(VisualError::InvalidSigma(sigma));
        }
        Ok(KernelParams { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// How the kernel width is chosen for a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    /// Median pairwise distance of the training sample.
    Median,
    /// A user-supplied width.
    Fixed(f64),
}

impl SigmaPolicy {
    pub fn resolve(&self, points: &[Vec<f64>]) -> Result<KernelParams, VisualError> {
        match self {
            SigmaPolicy::Median => KernelParams::new(median_pairwise_distance(points)),
            SigmaPolicy::Fixed(v) => KernelParams::new(*v),
        }
    }
}

/// A trained binary classifier: only the support vectors (strictly positive
/// dual weights) are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub labels: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelParams,
}

/// Mean of a concept's positive-class support vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptCentroid {
    pub concept: String,
    pub vector: Vec<f64>,
}

pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn rbf_unchecked(x: &[f64], y: &[f64], k: &KernelParams) -> f64 {
    (-squared_distance(x, y) / (k.sigma * k.sigma)).exp()
}

/// RBF kernel `exp(-|x-y|^2 / sigma^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], k: &KernelParams) -> Result<f64, VisualError> {
    if x.len() != y.len() {
        return Err(VisualError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(rbf_unchecked(x, y, k))
}

/// Median pairwise Euclidean distance over a point set; the usual default
/// for the kernel width when none is configured. Falls back to 1.0 when the
/// set is too small or fully degenerate.
pub fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut distances = Vec::new();
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            distances.push(squared_distance(&points[i], &points[j]).sqrt());
        }
    }
    if distances.is_empty() {
        return 1.0;
    }
    distances.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let median = distances[distances.len() / 2];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// Trains a soft-margin binary SVM with SMO. Every returned alpha satisfies
/// `0 < alpha <= c` and the dual balance `sum alpha_k y_k = 0` holds to
/// rounding.
pub fn train_svm(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    kernel: &KernelParams,
    c: f64,
    tol: f64,
) -> Result<SvmModel, VisualError> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(VisualError::EmptyClass);
    }
    let dim = positives[0].len();
    for v in positives.iter().chain(negatives) {
        if v.len() != dim {
            return Err(VisualError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let mut points = Vec::with_capacity(positives.len() + negatives.len());
    let mut labels = Vec::with_capacity(points.capacity());
    points.extend(positives.iter().cloned());
    labels.extend(std::iter::repeat_n(1.0, positives.len()));
    points.extend(negatives.iter().cloned());
    labels.extend(std::iter::repeat_n(-1.0, negatives.len()));

    let solution = smo::solve(&points, &labels, kernel, c, tol, MAX_SMO_ITERATIONS)?;

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    let mut sv_labels = Vec::new();
    for (idx, &a) in solution.alphas.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(points[idx].clone());
            alphas.push(a);
            sv_labels.push(labels[idx]);
        }
    }
    Ok(SvmModel {
        support_vectors,
        alphas,
        labels: sv_labels,
        bias: solution.bias,
        kernel: *kernel,
    })
}

impl SvmModel {
    pub fn feature_dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    /// Writes the model as plain text: one header, then one `sv` line per
    /// support vector. Floats carry 17 significant digits so a reload is
    /// bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::from("svm-model v1\n");
        let _ = writeln!(out, "dim {}", self.feature_dim());
        let _ = writeln!(out, "sigma {}", fmt_f64(self.kernel.sigma));
        let _ = writeln!(out, "bias {}", fmt_f64(self.bias));
        let _ = writeln!(out, "count {}", self.support_vectors.len());
        for ((sv, &alpha), &label) in self.support_vectors.iter().zip(&self.alphas).zip(&self.labels)
        {
            let _ = write!(out, "sv {} {}", fmt_f64(alpha), if label > 0.0 { 1 } else { -1 });
            for &v in sv {
                let _ = write!(out, " {}", fmt_f64(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, VisualError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| VisualError::ModelFormat("empty file".into()))?;
        if header != "svm-model v1" {
            return Err(VisualError::ModelFormat(format!(
                "unexpected header `{header}`"
            )));
        }
        let dim: usize = parse_field(lines.next(), "dim")?;
        let sigma: f64 = parse_field(lines.next(), "sigma")?;
        let bias: f64 = parse_field(lines.next(), "bias")?;
        let count: usize = parse_field(lines.next(), "count")?;
        let mut support_vectors = Vec::with_capacity(count);
        let mut alphas = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            let line = lines
                .next()
                .ok_or_else(|| VisualError::ModelFormat("truncated sv list".into()))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("sv") {
                return Err(VisualError::ModelFormat(format!("expected sv line, got `{line}`")));
            }
            let alpha: f64 = parse_token(parts.next(), "alpha")?;
            let label: f64 = parse_token(parts.next(), "label")?;
            let features: Result<Vec<f64>, _> = parts.map(|t| t.parse::<f64>()).collect();
            let features =
                features.map_err(|e| VisualError::ModelFormat(format!("bad feature: {e}")))?;
            if features.len() != dim {
                return Err(VisualError::ModelFormat(format!(
                    "sv has {} features, expected {dim}",
                    features.len()
                )));
            }
            support_vectors.push(features);
            alphas.push(alpha);
            labels.push(label);
        }
        Ok(SvmModel {
            support_vectors,
            alphas,
            labels,
            bias,
            kernel: KernelParams::new(sigma)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), VisualError> {
        fs::write(path, self.to_text()).map_err(|source| VisualError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, VisualError> {
        let text = fs::read_to_string(path).map_err(|source| VisualError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_field<T: std::str::FromStr>(
    line: Option<&str>,
    name: &str,
) -> Result<T, VisualError> {
    let line = line.ok_or_else(|| VisualError::ModelFormat(format!("missing {name} line")))?;
    let value = line
        .strip_prefix(name)
        .map(str::trim)
        .ok_or_else(|| VisualError::ModelFormat(format!("expected `{name} ...`, got `{line}`")))?;
    value
        .parse()
        .map_err(|_| VisualError::ModelFormat(format!("bad {name} value `{value}`")))
}

fn parse_token<T: std::str::FromStr>(
    token: Option<&str>,
    name: &str,
) -> Result<T, VisualError> {
    token
        .ok_or_else(|| VisualError::ModelFormat(format!("missing {name}")))?
        .parse()
        .map_err(|_| VisualError::ModelFormat(format!("bad {name}")))
}

/// Decision function: weighted kernel sum over the support vectors plus bias.
pub fn decision(model: &SvmModel, x: &[f64]) -> Result<f64, VisualError> {
    let dim = model.feature_dim();
    if x.len() != dim {
        return Err(VisualError::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    let mut sum = model.bias;
    for ((sv, &alpha), &label) in model.support_vectors.iter().zip(&model.alphas).zip(&model.labels)
    {
        sum += alpha * label * rbf_unchecked(sv, x, &model.kernel);
    }
    Ok(sum)
}

/// Mean of the positive-class support vectors; that mean minimizes the
/// within-set sum of squared distances for the fixed support-vector set.
pub fn centroid(model: &SvmModel, concept: &str) -> Result<ConceptCentroid, VisualError> {
    let dim = model.feature_dim();
    let mut mean = vec![0.0; dim];
    let mut count = 0usize;
    for (sv, &label) in model.support_vectors.iter().zip(&model.labels) {
        if label > 0.0 {
            for (m, &v) in mean.iter_mut().zip(sv) {
                *m += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(VisualError::NoPositiveSupportVectors);
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    Ok(ConceptCentroid {
        concept: concept.to_string(),
        vector: mean,
    })
}

/// Similarity between centroids: `1 / (1 + d)` with `d` the Euclidean
/// distance, so identical centroids score 1 and the score decays toward 0.
pub fn visual_similarity(a: &ConceptCentroid, b: &ConceptCentroid) -> Result<f64, VisualError> {
    if a.vector.len() != b.vector.len() {
        return Err(VisualError::DimensionMismatch {
            expected: a.vector.len(),
            got: b.vector.len(),
        });
    }
    Ok(1.0 / (1.0 + squared_distance(&a.vector, &b.vector).sqrt()))
}
