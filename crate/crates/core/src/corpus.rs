//! Annotated corpus loading and the occurrence statistics derived from it.
//!
//! A corpus is a list of image records, each carrying a non-empty label set
//! and a fixed-length bag-of-features histogram. The vocabulary is the sorted
//! union of all labels; co-annotation counts over that vocabulary feed the
//! contextual similarity channel.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse corpus: {0}")]
    Parse(String),
    #[error("record {id}: labels must be non-empty")]
    EmptyLabels { id: String },
    #[error("record {id}: feature {index} must be a finite non-negative number")]
    BadFeature { id: String, index: usize },
    #[error("record {id}: feature vector has length {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        got: usize,
        expected: usize,
    },
    #[error("duplicate record id {id}")]
    DuplicateId { id: String },
    #[error("corpus is empty")]
    Empty,
    #[error("corpus vocabulary needs at least 2 concepts, found {found}")]
    TooFewConcepts { found: usize },
    #[error("unknown concept {0}")]
    UnknownConcept(String),
}

/// One annotated image: a unique id, its concept labels, and its
/// bag-of-features histogram. Duplicate labels collapse into the set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub labels: BTreeSet<String>,
    pub features: Vec<f64>,
}

/// A validated corpus: every label of every image appears in `vocabulary`
/// (sorted, no duplicates) and every feature vector has length `feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    images: Vec<ImageRecord>,
    vocabulary: Vec<String>,
    feature_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    feature_dim: usize,
    images: Vec<ImageRecord>,
}

impl Corpus {
    /// Validates and assembles a corpus from raw records. The vocabulary is
    /// derived as the sorted union of all labels. At least one image is
    /// required; a single-concept vocabulary is allowed here (the degenerate
    /// one-leaf hierarchy is defined), while file ingestion insists on two.
    pub fn from_parts(images: Vec<ImageRecord>, feature_dim: usize) -> Result<Self, CorpusError> {
        if images.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut vocabulary = BTreeSet::new();
        for rec in &images {
            if !seen.insert(rec.id.clone()) {
                return Err(CorpusError::DuplicateId { id: rec.id.clone() });
            }
            if rec.labels.is_empty() {
                return Err(CorpusError::EmptyLabels { id: rec.id.clone() });
            }
            if rec.features.len() != feature_dim {
                return Err(CorpusError::DimensionMismatch {
                    id: rec.id.clone(),
                    got: rec.features.len(),
                    expected: feature_dim,
                });
            }
            for (index, &v) in rec.features.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(CorpusError::BadFeature {
                        id: rec.id.clone(),
                        index,
                    });
                }
            }
            vocabulary.extend(rec.labels.iter().cloned());
        }
        Ok(Corpus {
            images,
            vocabulary: vocabulary.into_iter().collect(),
            feature_dim,
        })
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    /// Sorted annotation vocabulary.
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn contains_concept(&self, name: &str) -> bool {
        self.vocabulary.binary_search_by(|c| c.as_str().cmp(name)).is_ok()
    }

    /// Serializes to the same JSON schema `load_corpus` reads.
    pub fn to_json(&self) -> String {
        let file = CorpusFile {
            feature_dim: self.feature_dim,
            images: self.images.clone(),
        };
        serde_json::to_string_pretty(&file).expect("corpus serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let file = File::create(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_json().as_bytes())
            .map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })
    }
}

/// Loads a corpus from JSON (`.json`) or CSV (anything else; header
/// `id,labels,f0..fD-1` with `;`-separated labels). Validation failures name
/// the offending record.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let is_json = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false);
    let corpus = if is_json {
        load_json(path)?
    } else {
        load_csv(path)?
    };
    if corpus.vocabulary.len() < 2 {
        return Err(CorpusError::TooFewConcepts {
            found: corpus.vocabulary.len(),
        });
    }
    Ok(corpus)
}

fn load_json(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: CorpusFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CorpusError::Parse(e.to_string()))?;
    Corpus::from_parts(parsed.images, parsed.feature_dim)
}

fn load_csv(path: &Path) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Parse(e.to_string()))?
        .clone();
    if headers.len() < 3 || &headers[0] != "id" || &headers[1] != "labels" {
        return Err(CorpusError::Parse(
            "CSV header must be id,labels,f0..fD-1".into(),
        ));
    }
    let feature_dim = headers.len() - 2;
    let mut images = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CorpusError::Parse(e.to_string()))?;
        let id = row
            .get(0)
            .ok_or_else(|| CorpusError::Parse("missing id column".into()))?
            .to_string();
        let labels: BTreeSet<String> = row
            .get(1)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let mut features = Vec::with_capacity(feature_dim);
        for v in row.iter().skip(2) {
            let parsed: f64 = v.trim().parse().map_err(|_| {
                CorpusError::Parse(format!("record {id}: feature `{v}` is not a number"))
            })?;
            features.push(parsed);
        }
        images.push(ImageRecord {
            id,
            labels,
            features,
        });
    }
    Corpus::from_parts(images, feature_dim)
}

/// Per-concept and per-pair co-annotation counts over a corpus vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextStats {
    concepts: Vec<String>,
    index: BTreeMap<String, usize>,
    counts: Vec<usize>,
    pair_counts: Vec<usize>,
    total: usize,
}

impl ContextStats {
    /// Builds stats directly from counts. `pair_counts` is a full row-major
    /// n x n matrix; callers must keep it symmetric with the per-concept
    /// counts on the diagonal.
    pub fn from_counts(
        concepts: Vec<String>,
        counts: Vec<usize>,
        pair_counts: Vec<usize>,
        total: usize,
    ) -> Self {
        assert_eq!(counts.len(), concepts.len());
        assert_eq!(pair_counts.len(), concepts.len() * concepts.len());
        let index = concepts
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        ContextStats {
            concepts,
            index,
            counts,
            pair_counts,
            total,
        }
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn index_of(&self, concept: &str) -> Option<usize> {
        self.index.get(concept).copied()
    }

    /// Number of images annotated with the concept at `i`.
    pub fn count(&self, i: usize) -> usize {
        self.counts[i]
    }

    /// Number of images co-annotated with both concepts.
    pub fn pair_count(&self, i: usize, j: usize) -> usize {
        self.pair_counts[i * self.concepts.len() + j]
    }
}

/// Counts, for every concept and concept pair of the vocabulary, how many
/// images carry that annotation.
pub fn compute_context_stats(corpus: &Corpus) -> ContextStats {
    let concepts: Vec<String> = corpus.vocabulary().to_vec();
    let sets: Vec<BTreeSet<String>> = concepts
        .iter()
        .map(|c| std::iter::once(c.clone()).collect())
        .collect();
    let (counts, pair_counts) = co_annotation_counts(corpus, &sets);
    ContextStats::from_counts(concepts, counts, pair_counts, corpus.len())
}

/// Occurrence and co-occurrence counts for arbitrary label sets: an image
/// counts for set `i` when it carries at least one of the set's labels. Used
/// both for plain per-concept stats and for inferred hierarchy nodes, whose
/// label set is the union of their descendant leaves.
pub fn co_annotation_counts(
    corpus: &Corpus,
    label_sets: &[BTreeSet<String>],
) -> (Vec<usize>, Vec<usize>) {
    let n = label_sets.len();
    let mut counts = vec![0usize; n];
    let mut pairs = vec![0usize; n * n];
    let mut hit = vec![false; n];
    for image in corpus.images() {
        for (i, set) in label_sets.iter().enumerate() {
            hit[i] = image.labels.iter().any(|l| set.contains(l));
            if hit[i] {
                counts[i] += 1;
            }
        }
        for i in 0..n {
            if !hit[i] {
                continue;
            }
            for j in 0..n {
                if hit[j] {
                    pairs[i * n + j] += 1;
                }
            }
        }
    }
    (counts, pairs)
}

/// All images carrying at least one of the given concepts, in corpus order.
pub fn images_for<'a>(
    corpus: &'a Corpus,
    concepts: &BTreeSet<String>,
) -> Result<Vec<&'a ImageRecord>, CorpusError> {
    for c in concepts {
        if !corpus.contains_concept(c) {
            return Err(CorpusError::UnknownConcept(c.clone()));
        }
    }
    Ok(corpus
        .images()
        .iter()
        .filter(|img| img.labels.iter().any(|l| concepts.contains(l)))
        .collect())
}
