//! Flat and hierarchy-conformant classification with ranking evaluation.
//!
//! Flat: one balanced one-vs-all model per concept with a cross-validated
//! kernel width. Hierarchical: one one-vs-siblings model per non-root node
//! (positives = images under the node, negatives = images under its
//! siblings), applied root-to-leaf with multi-path descent. Both systems are
//! scored by per-concept average precision and precision/recall curves.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, ImageRecord};
use crate::fusion::Weights;
use crate::hierarchy::{Hierarchy, HierarchyError, NodeId};
use crate::visual::{self, SigmaPolicy, SvmModel, VisualError};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Visual(#[from] VisualError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("hierarchy leaf {0} is not in the corpus vocabulary")]
    LeafNotInVocabulary(String),
    #[error("cannot rank with zero positive examples")]
    ZeroPositives,
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    InvalidSplit(f64),
    #[error("need at least 2 images to split, got {0}")]
    CorpusTooSmall(usize),
}

/// Training settings shared by both classifier families.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub folds: usize,
    pub seed: u64,
    pub svm_c: f64,
    pub svm_tol: f64,
    pub sigma: SigmaPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            folds: 5,
            seed: 42,
            svm_c: 10.0,
            svm_tol: 1e-3,
            sigma: SigmaPolicy::Median,
        }
    }
}

/// Derives an independent RNG stream per named task so parallel training
/// draws identical samples no matter the schedule.
pub(crate) fn stream_seed(seed: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for byte in tag.as_bytes() {
        h = (h ^ u64::from(*byte)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}

/// Sorted index sample without replacement; the full range when `target`
/// covers it.
pub(crate) fn sample_indices(n: usize, target: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if target >= n {
        return (0..n).collect();
    }
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    indices.truncate(target);
    indices.sort_unstable();
    indices
}

/// Balances two pools to the size of the smaller one (uniform subsample of
/// the larger, original order kept).
pub(crate) fn balanced_pair(
    positives: Vec<Vec<f64>>,
    negatives: Vec<Vec<f64>>,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = positives.len().min(negatives.len());
    let pick = |pool: Vec<Vec<f64>>, rng: &mut ChaCha8Rng| {
        if pool.len() <= target {
            pool
        } else {
            sample_indices(pool.len(), target, rng)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect()
        }
    };
    let positives = pick(positives, &mut rng);
    let negatives = pick(negatives, &mut rng);
    (positives, negatives)
}

/// Fits one balanced binary model. With a `Median` sigma policy and enough
/// data, the width is picked by k-fold cross-validation over a small grid
/// around the median heuristic; otherwise the policy resolves directly.
fn fit_binary(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    config: &TrainConfig,
) -> Result<SvmModel, VisualError> {
    let sample: Vec<Vec<f64>> = positives.iter().chain(negatives).cloned().collect();
    let labels: Vec<f64> = std::iter::repeat_n(1.0, positives.len())
        .chain(std::iter::repeat_n(-1.0, negatives.len()))
        .collect();

    let kernel = match config.sigma {
        SigmaPolicy::Fixed(v) => visual::KernelParams::new(v)?,
        SigmaPolicy::Median => {
            let base = visual::median_pairwise_distance(&sample);
            let enough = config.folds >= 2
                && positives.len() >= config.folds
                && negatives.len() >= config.folds;
            if !enough {
                visual::KernelParams::new(base)?
            } else {
                let mut best: Option<(f64, f64)> = None; // (accuracy, sigma)
                for factor in [0.5, 1.0, 2.0] {
                    let sigma = base * factor;
                    let kernel = visual::KernelParams::new(sigma)?;
                    let mut correct = 0usize;
                    let mut total = 0usize;
                    for fold in 0..config.folds {
                        let mut train_pos = Vec::new();
                        let mut train_neg = Vec::new();
                        let mut held = Vec::new();
                        for (idx, point) in sample.iter().enumerate() {
                            if idx % config.folds == fold {
                                held.push((point, labels[idx]));
                            } else if labels[idx] > 0.0 {
                                train_pos.push(point.clone());
                            } else {
                                train_neg.push(point.clone());
                            }
                        }
                        if train_pos.is_empty() || train_neg.is_empty() {
                            continue;
                        }
                        let model = visual::train_svm(
                            &train_pos,
                            &train_neg,
                            &kernel,
                            config.svm_c,
                            config.svm_tol,
                        )?;
                        for (point, label) in held {
                            total += 1;
                            if visual::decision(&model, point)? * label > 0.0 {
                                correct += 1;
                            }
                        }
                    }
                    let accuracy = if total > 0 {
                        correct as f64 / total as f64
                    } else {
                        0.0
                    };
                    // strictly-better keeps the smallest winning width
                    if best.is_none_or(|(acc, _)| accuracy > acc) {
                        best = Some((accuracy, sigma));
                    }
                }
                visual::KernelParams::new(best.expect("non-empty grid").1)?
            }
        }
    };
    visual::train_svm(positives, negatives, &kernel, config.svm_c, config.svm_tol)
}

/// Flat one-vs-all classifiers keyed by concept, plus the concepts skipped
/// for lack of data.
#[derive(Debug)]
pub struct FlatClassifier {
    pub models: BTreeMap<String, SvmModel>,
    pub skipped: Vec<String>,
}

/// Trains one balanced one-vs-all model per concept. Concepts with fewer
/// positives than folds (or with no negatives at all) are skipped with a
/// warning rather than failing the whole run.
pub fn train_flat(corpus: &Corpus, config: &TrainConfig) -> Result<FlatClassifier, ClassifyError> {
    let vocabulary = corpus.vocabulary().to_vec();
    let outcomes: Result<Vec<(String, Option<SvmModel>)>, ClassifyError> = vocabulary
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
            if positives.len() < config.folds {
                warn!(
                    "skipping {concept}: {} positives < {} folds",
                    positives.len(),
                    config.folds
                );
                return Ok((concept.clone(), None));
            }
            if negatives.is_empty() {
                warn!("skipping {concept}: no negative images");
                return Ok((concept.clone(), None));
            }
            let (positives, negatives) =
                balanced_pair(positives, negatives, stream_seed(config.seed, concept));
            let model = fit_binary(&positives, &negatives, config)?;
            Ok((concept.clone(), Some(model)))
        })
        .collect();
    let mut models = BTreeMap::new();
    let mut skipped = Vec::new();
    for (concept, model) in outcomes? {
        match model {
            Some(model) => {
                models.insert(concept, model);
            }
            None => skipped.push(concept),
        }
    }
    Ok(FlatClassifier { models, skipped })
}

/// Per-node decision function of the hierarchical classifier. Nodes whose
/// training pool was empty accept unconditionally with an infinite margin,
/// which leaves path scores untouched.
#[derive(Debug)]
pub enum NodeModel {
    Svm(SvmModel),
    ConstantAccept,
}

impl NodeModel {
    fn margin(&self, x: &[f64]) -> Result<f64, VisualError> {
        match self {
            NodeModel::Svm(model) => visual::decision(model, x),
            NodeModel::ConstantAccept => Ok(f64::INFINITY),
        }
    }
}

/// One-vs-siblings models for every non-root hierarchy node.
#[derive(Debug)]
pub struct HierarchicalClassifier {
    pub hierarchy: Hierarchy,
    pub models: BTreeMap<NodeId, NodeModel>,
}

/// Training pools for one node: positives are the images under it,
/// negatives the images under its siblings (minus any overlap).
pub fn node_pools<'a>(
    corpus: &'a Corpus,
    hierarchy: &Hierarchy,
    node: NodeId,
) -> (Vec<&'a ImageRecord>, Vec<&'a ImageRecord>) {
    let parents = hierarchy.parents();
    let own = hierarchy.leaf_labels_under(node);
    let parent = match parents[node] {
        Some(p) => p,
        None => return (Vec::new(), Vec::new()),
    };
    let mut sibling_labels = BTreeSet::new();
    for &child in &hierarchy.node(parent).children {
        if child != node {
            sibling_labels.extend(hierarchy.leaf_labels_under(child));
        }
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for image in corpus.images() {
        let is_positive = image.labels.iter().any(|l| own.contains(l));
        if is_positive {
            positives.push(image);
        } else if image.labels.iter().any(|l| sibling_labels.contains(l)) {
            negatives.push(image);
        }
    }
    (positives, negatives)
}

/// Trains the one-vs-siblings model of every non-root node. Nodes with an
/// empty positive or negative pool fall back to constant acceptance (logged).
pub fn train_hierarchical(
    corpus: &Corpus,
    hierarchy: &Hierarchy,
    config: &TrainConfig,
) -> Result<HierarchicalClassifier, ClassifyError> {
    hierarchy.validate()?;
    for leaf in hierarchy.leaf_names() {
        if !corpus.contains_concept(&leaf) {
            return Err(ClassifyError::LeafNotInVocabulary(leaf));
        }
    }
    let node_ids: Vec<NodeId> = hierarchy
        .nodes()
        .iter()
        .filter(|n| n.id != hierarchy.root())
        .map(|n| n.id)
        .collect();
    let outcomes: Result<Vec<(NodeId, NodeModel)>, ClassifyError> = node_ids
        .par_iter()
        .map(|&node| {
            let (positives, negatives) = node_pools(corpus, hierarchy, node);
            let name = &hierarchy.node(node).name;
            if positives.is_empty() || negatives.is_empty() {
                warn!(
                    "node {name}: empty {} pool; using constant-accept",
                    if positives.is_empty() { "positive" } else { "negative" }
                );
                return Ok((node, NodeModel::ConstantAccept));
            }
            let positives: Vec<Vec<f64>> =
                positives.iter().map(|img| img.features.clone()).collect();
            let negatives: Vec<Vec<f64>> =
                negatives.iter().map(|img| img.features.clone()).collect();
            let (positives, negatives) =
                balanced_pair(positives, negatives, stream_seed(config.seed, name));
            let model = fit_binary(&positives, &negatives, config)?;
            Ok((node, NodeModel::Svm(model)))
        })
        .collect();
    Ok(HierarchicalClassifier {
        hierarchy: hierarchy.clone(),
        models: outcomes?.into_iter().collect(),
    })
}

/// How a root-to-leaf path turns into a leaf ranking score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafScore {
    /// Bottleneck: the smallest margin along the path.
    #[default]
    Min,
    /// Product of logistic-squashed margins along the path.
    Product,
}

/// Root-to-leaf multi-path inference. Every child with a positive margin is
/// entered; when none is, the single best child is entered so at least one
/// leaf is always reached. Unreached leaves score negative infinity.
pub fn infer(
    hc: &HierarchicalClassifier,
    x: &[f64],
    leaf_score: LeafScore,
) -> Result<BTreeMap<String, f64>, ClassifyError> {
    let hierarchy = &hc.hierarchy;
    let mut scores: BTreeMap<String, f64> = hierarchy
        .leaf_names()
        .into_iter()
        .map(|name| (name, f64::NEG_INFINITY))
        .collect();

    let root = hierarchy.node(hierarchy.root());
    if root.children.is_empty() {
        // degenerate single-node hierarchy: the root is the only leaf
        scores.insert(root.name.clone(), f64::INFINITY);
        return Ok(scores);
    }

    // accumulated path score so far, per entered node
    let mut queue: Vec<(NodeId, f64)> = vec![(
        hierarchy.root(),
        match leaf_score {
            LeafScore::Min => f64::INFINITY,
            LeafScore::Product => 1.0,
        },
    )];
    while let Some((node_id, path_score)) = queue.pop() {
        let node = hierarchy.node(node_id);
        if node.children.is_empty() {
            scores.insert(node.name.clone(), path_score);
            continue;
        }
        let mut margins = Vec::with_capacity(node.children.len());
        for &child in &node.children {
            margins.push((child, hc.models[&child].margin(x)?));
        }
        let entered: Vec<(NodeId, f64)> = margins
            .iter()
            .copied()
            .filter(|(_, margin)| *margin > 0.0)
            .collect();
        let entered = if entered.is_empty() {
            // max-margin fallback, ties to the smaller node id
            let best = margins
                .iter()
                .copied()
                .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite margins").then(b.0.cmp(&a.0)))
                .expect("internal nodes have children");
            vec![best]
        } else {
            entered
        };
        for (child, margin) in entered {
            let next = match leaf_score {
                LeafScore::Min => path_score.min(margin),
                LeafScore::Product => path_score * logistic(margin),
            };
            queue.push((child, next));
        }
    }
    Ok(scores)
}

fn logistic(margin: f64) -> f64 {
    1.0 / (1.0 + (-margin).exp())
}

/// Average precision of a ranking: items are ordered by descending score
/// (stable, so equal scores keep their input order) and precision is
/// averaged over the positive ranks.
pub fn average_precision(items: &[(f64, bool)]) -> Result<f64, ClassifyError> {
    let total_positives = items.iter().filter(|(_, p)| *p).count();
    if total_positives == 0 {
        return Err(ClassifyError::ZeroPositives);
    }
    let mut ranked: Vec<&(f64, bool)> = items.iter().collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut true_positives = 0usize;
    let mut sum = 0.0;
    for (rank, (_, positive)) in ranked.iter().enumerate() {
        if *positive {
            true_positives += 1;
            sum += true_positives as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / total_positives as f64)
}

/// Cumulative (recall, precision) points at every rank of the ordering used
/// by `average_precision`; recall never decreases along the curve.
pub fn pr_curve(items: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let total_positives = items.iter().filter(|(_, p)| *p).count();
    if total_positives == 0 {
        return Vec::new();
    }
    let mut ranked: Vec<&(f64, bool)> = items.iter().collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut true_positives = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    for (rank, (_, positive)) in ranked.iter().enumerate() {
        if *positive {
            true_positives += 1;
        }
        curve.push((
            true_positives as f64 / total_positives as f64,
            true_positives as f64 / (rank + 1) as f64,
        ));
    }
    curve
}

/// Settings echoed into every report so result files are self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub weights: Weights,
    pub seed: u64,
    pub folds: usize,
}

/// Ranking quality of one system over a test corpus.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub per_concept_ap: BTreeMap<String, f64>,
    pub mean_ap: f64,
    pub pr_curves: BTreeMap<String, Vec<(f64, f64)>>,
    pub config: ConfigEcho,
}

/// Evaluates both systems over the same test corpus: per-concept average
/// precision and PR curves for every test-vocabulary concept. Concepts some
/// system cannot score (skipped in training or missing from the hierarchy)
/// are ranked by a constant-reject scorer and warned about.
pub fn evaluate(
    flat: &FlatClassifier,
    hierarchical: &HierarchicalClassifier,
    test: &Corpus,
    leaf_score: LeafScore,
    config: ConfigEcho,
) -> Result<(EvalReport, EvalReport), ClassifyError> {
    // rank ties stay deterministic: images are scored in id order
    let mut images: Vec<&ImageRecord> = test.images().iter().collect();
    images.sort_by(|a, b| a.id.cmp(&b.id));

    let concepts = test.vocabulary().to_vec();

    let flat_scores: Result<Vec<Vec<f64>>, ClassifyError> = concepts
        .iter()
        .map(|concept| match flat.models.get(concept) {
            Some(model) => images
                .iter()
                .map(|img| visual::decision(model, &img.features).map_err(ClassifyError::from))
                .collect(),
            None => {
                warn!("flat system has no model for {concept}; scoring constant-reject");
                Ok(vec![f64::NEG_INFINITY; images.len()])
            }
        })
        .collect();
    let flat_scores = flat_scores?;

    let leaf_set: BTreeSet<String> = hierarchical.hierarchy.leaf_names().into_iter().collect();
    let per_image: Result<Vec<BTreeMap<String, f64>>, ClassifyError> = images
        .par_iter()
        .map(|img| infer(hierarchical, &img.features, leaf_score))
        .collect();
    let per_image = per_image?;
    let hier_scores: Vec<Vec<f64>> = concepts
        .iter()
        .map(|concept| {
            if !leaf_set.contains(concept) {
                warn!("hierarchy has no leaf for {concept}; scoring constant-reject");
                return vec![f64::NEG_INFINITY; images.len()];
            }
            per_image.iter().map(|scores| scores[concept]).collect()
        })
        .collect();

    let build_report = |scores: &[Vec<f64>]| -> Result<EvalReport, ClassifyError> {
        let mut per_concept_ap = BTreeMap::new();
        let mut pr_curves = BTreeMap::new();
        for (concept, concept_scores) in concepts.iter().zip(scores) {
            let items: Vec<(f64, bool)> = concept_scores
                .iter()
                .zip(&images)
                .map(|(&score, img)| (score, img.labels.contains(concept)))
                .collect();
            per_concept_ap.insert(concept.clone(), average_precision(&items)?);
            pr_curves.insert(concept.clone(), pr_curve(&items));
        }
        let mean_ap = per_concept_ap.values().sum::<f64>() / per_concept_ap.len() as f64;
        Ok(EvalReport {
            per_concept_ap,
            mean_ap,
            pr_curves,
            config: config.clone(),
        })
    };

    Ok((build_report(&flat_scores)?, build_report(&hier_scores)?))
}

/// Deterministic shuffled split into train and test halves; both sides keep
/// corpus order and re-derive their own vocabulary.
pub fn split_corpus(
    corpus: &Corpus,
    fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus), ClassifyError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ClassifyError::InvalidSplit(fraction));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(ClassifyError::CorpusTooSmall(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "train-test-split"));
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let train_size = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut train_idx = indices[..train_size].to_vec();
    let mut test_idx = indices[train_size..].to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let take = |idx: &[usize]| -> Result<Corpus, CorpusError> {
        Corpus::from_parts(
            idx.iter().map(|&i| corpus.images()[i].clone()).collect(),
            corpus.feature_dim(),
        )
    };
    Ok((take(&train_idx)?, take(&test_idx)?))
}
