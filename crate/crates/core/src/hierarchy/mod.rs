//! Bottom-up hierarchy construction over the fused similarity matrix.
//!
//! Starting from the leaf concepts, each iteration recomputes the three
//! similarity channels over the current active nodes, renormalizes and fuses
//! them, fires the grouping rules, and materializes the planned parents.
//! When no rule fires the globally closest pair is merged anyway, so the
//! loop always reaches a single root. Inferred nodes take their least
//! common subsumer's first lemma as a name (deduplicated with numeric
//! suffixes), carry the subsumer synset, and derive their channel inputs
//! from their children: mean centroid, union of leaf labels, and the
//! subsumer's gloss vectors.

mod export;
mod rules;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use export::to_dot;
pub use rules::{apply_rules, closest, hits3, MergeAction, MergeRule, PlannedChild, PlannedNode};

use crate::conceptual::{self, ConceptualError, SlotMatching};
use crate::contextual::{gamma_from_counts, PmiMode};
use crate::corpus::{co_annotation_counts, Corpus, CorpusError};
use crate::fusion::{FusionError, SimilarityMatrix, SymMatrix, Weights};
use crate::lexicon::{Lexicon, LexiconError};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Conceptual(#[from] ConceptualError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("similarity matrix has a single node; nothing to group")]
    SingletonMatrix,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("similarity matrix does not cover the corpus vocabulary: {0}")]
    MatrixMismatch(String),
    #[error("leaf concept {0} has no centroid")]
    MissingCentroid(String),
    #[error("malformed hierarchy: {0}")]
    Malformed(String),
    #[error("failed to parse hierarchy file: {0}")]
    Parse(String),
    #[error("failed to access hierarchy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Leaf,
    Inferred,
    Root,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: NodeId,
    pub name: String,
    pub synset: String,
    pub kind: NodeKind,
    pub children: Vec<NodeId>,
}

/// A rooted tree over the corpus vocabulary: leaves are exactly the
/// concepts, internal nodes are inferred groupings named by their subsumer.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    nodes: Vec<HierarchyNode>,
    root: NodeId,
}

/// Provenance of one merge: which rule fired in which iteration, the fused
/// similarity that triggered it, and which nodes were created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub iteration: usize,
    pub rule: MergeRule,
    pub score: f64,
    pub created: Vec<CreatedNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreatedNode {
    pub name: String,
    pub synset: String,
    pub children: Vec<String>,
}

/// A built hierarchy together with its merge log.
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub hierarchy: Hierarchy,
    pub merges: Vec<MergeRecord>,
}

/// Knobs of the construction loop.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub weights: Weights,
    pub pmi_mode: PmiMode,
    pub matching: SlotMatching,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            weights: Weights::default(),
            pmi_mode: PmiMode::Standard,
            matching: SlotMatching::Aligned,
        }
    }
}

impl Hierarchy {
    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &HierarchyNode {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).sum()
    }

    /// Nodes without children, sorted by name; for a valid hierarchy this is
    /// exactly the corpus vocabulary.
    pub fn leaf_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .nodes
            .iter()
            .filter(|n| n.children.is_empty())
            .map(|n| n.name.clone())
            .collect();
        names.sort();
        names
    }

    /// Parent lookup table; the root maps to None.
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut parents = vec![None; self.nodes.len()];
        for node in &self.nodes {
            for &child in &node.children {
                parents[child] = Some(node.id);
            }
        }
        parents
    }

    /// Leaf names in the subtree rooted at `id` (the node itself if a leaf).
    pub fn leaf_labels_under(&self, id: NodeId) -> BTreeSet<String> {
        let mut labels = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(current) = stack.pop() {
            let node = &self.nodes[current];
            if node.children.is_empty() {
                labels.insert(node.name.clone());
            } else {
                stack.extend(node.children.iter().copied());
            }
        }
        labels
    }

    /// Structural validation: ids match positions, one root, every non-root
    /// node has exactly one parent, everything is reachable, leaves carry no
    /// children and inferred nodes at least two.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        if self.nodes.is_empty() {
            return Err(HierarchyError::Malformed("no nodes".into()));
        }
        if self.root >= self.nodes.len() {
            return Err(HierarchyError::Malformed("root id out of range".into()));
        }
        let mut incoming = vec![0usize; self.nodes.len()];
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id != pos {
                return Err(HierarchyError::Malformed(format!(
                    "node at position {pos} carries id {}",
                    node.id
                )));
            }
            match node.kind {
                NodeKind::Leaf if !node.children.is_empty() => {
                    return Err(HierarchyError::Malformed(format!(
                        "leaf {} has children",
                        node.name
                    )));
                }
                NodeKind::Inferred if node.children.len() < 2 => {
                    return Err(HierarchyError::Malformed(format!(
                        "inferred node {} has fewer than 2 children",
                        node.name
                    )));
                }
                _ => {}
            }
            for &child in &node.children {
                if child >= self.nodes.len() {
                    return Err(HierarchyError::Malformed(format!(
                        "node {} references missing child {child}",
                        node.name
                    )));
                }
                incoming[child] += 1;
            }
        }
        for (id, &count) in incoming.iter().enumerate() {
            let expected = usize::from(id != self.root);
            if count != expected {
                return Err(HierarchyError::Malformed(format!(
                    "node {} has {count} parents, expected {expected}",
                    self.nodes[id].name
                )));
            }
        }
        // reachability doubles as the acyclicity check given the parent counts
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if seen[id] {
                return Err(HierarchyError::Malformed("cycle detected".into()));
            }
            seen[id] = true;
            stack.extend(self.nodes[id].children.iter().copied());
        }
        if seen.iter().any(|&s| !s) {
            return Err(HierarchyError::Malformed(
                "nodes unreachable from the root".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self, merges: &[MergeRecord]) -> String {
        export::to_json(self, merges)
    }

    pub fn from_json(text: &str) -> Result<(Self, Vec<MergeRecord>), HierarchyError> {
        export::from_json(text)
    }

    pub fn save(&self, path: &std::path::Path, merges: &[MergeRecord]) -> Result<(), HierarchyError> {
        std::fs::write(path, self.to_json(merges)).map_err(|source| HierarchyError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, Vec<MergeRecord>), HierarchyError> {
        let text = std::fs::read_to_string(path).map_err(|source| HierarchyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// One node of the construction loop's working set.
#[derive(Debug, Clone)]
struct ActiveNode {
    id: NodeId,
    name: String,
    synset: String,
    /// Sense candidates feeding the conceptual channel: the full sense list
    /// for a leaf, the subsumer synset alone for an inferred node.
    candidates: Vec<String>,
    centroid: Vec<f64>,
    leaf_labels: BTreeSet<String>,
}

/// Fixes one sense per leaf concept before construction starts: the sense
/// chosen when the concept is disambiguated against its conceptually closest
/// partner (ties to the lexicographically first partner).
fn disambiguate_leaves(
    lexicon: &Lexicon,
    vocabulary: &[String],
    matching: SlotMatching,
) -> Result<BTreeMap<String, String>, HierarchyError> {
    let mut chosen = BTreeMap::new();
    for concept in vocabulary {
        let senses = lexicon.senses(concept)?;
        if senses.len() == 1 || vocabulary.len() == 1 {
            chosen.insert(concept.clone(), senses[0].clone());
            continue;
        }
        let mut best: Option<(f64, String)> = None;
        for partner in vocabulary.iter().filter(|p| *p != concept) {
            let (score, pair) =
                conceptual::conceptual_similarity_with(lexicon, concept, partner, matching)?;
            if best.as_ref().is_none_or(|(bs, _)| score > *bs) {
                best = Some((score, pair.sense_a));
            }
        }
        chosen.insert(concept.clone(), best.expect("vocabulary has partners").1);
    }
    Ok(chosen)
}

/// Raw channel matrices over the active nodes.
fn compute_raw_channels(
    corpus: &Corpus,
    lexicon: &Lexicon,
    actives: &[ActiveNode],
    config: &BuildConfig,
) -> Result<(SymMatrix, SymMatrix, SymMatrix), HierarchyError> {
    let n = actives.len();
    let mut visual = SymMatrix::zeros(n);
    let mut conceptual_m = SymMatrix::zeros(n);
    let mut contextual_m = SymMatrix::zeros(n);

    let label_sets: Vec<BTreeSet<String>> =
        actives.iter().map(|a| a.leaf_labels.clone()).collect();
    let (counts, pair_counts) = co_annotation_counts(corpus, &label_sets);

    for i in 0..n {
        for j in i..n {
            let distance = actives[i]
                .centroid
                .iter()
                .zip(&actives[j].centroid)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            visual.set(i, j, 1.0 / (1.0 + distance));

            let (score, _) = conceptual::max_over_candidates(
                lexicon,
                &actives[i].candidates,
                &actives[j].candidates,
                config.matching,
            )?;
            conceptual_m.set(i, j, score);

            contextual_m.set(
                i,
                j,
                gamma_from_counts(
                    corpus.len(),
                    counts[i],
                    counts[j],
                    pair_counts[i * n + j],
                    config.pmi_mode,
                ),
            );
        }
    }
    Ok((visual, conceptual_m, contextual_m))
}

fn first_lemma(lexicon: &Lexicon, synset_id: &str) -> Result<String, HierarchyError> {
    let synset = lexicon.synset(synset_id)?;
    Ok(synset
        .lemmas
        .first()
        .cloned()
        .unwrap_or_else(|| synset_id.to_string()))
}

fn allocate_name(base: &str, used: &mut BTreeSet<String>) -> String {
    if used.insert(base.to_string()) {
        return base.to_string();
    }
    let mut suffix = 2usize;
    loop {
        let candidate = format!("{base}_{suffix}");
        if used.insert(candidate.clone()) {
            return candidate;
        }
        suffix += 1;
    }
}

/// Picks the globally most similar active pair for the forced-merge
/// fallback; ties resolve to the lexicographically smallest pair.
fn closest_global_pair(m: &SimilarityMatrix) -> (String, String, f64) {
    let mut best: Option<(f64, &str, &str)> = None;
    for i in 0..m.size() {
        for j in (i + 1)..m.size() {
            let (a, b) = (m.concepts[i].as_str(), m.concepts[j].as_str());
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let score = m.fused.get(i, j);
            let wins = match best {
                None => true,
                Some((bs, ba, bb)) => {
                    score > bs || (score == bs && (a, b) < (ba, bb))
                }
            };
            if wins {
                best = Some((score, a, b));
            }
        }
    }
    let (score, a, b) = best.expect("at least two nodes");
    (a.to_string(), b.to_string(), score)
}

/// Grows the hierarchy until a single root remains. `matrix` supplies the
/// first iteration's raw channels (it must cover exactly the corpus
/// vocabulary); later iterations recompute them over the shrinking active
/// set and renormalize. Deterministic for fixed inputs.
pub fn build_hierarchy(
    corpus: &Corpus,
    lexicon: &Lexicon,
    matrix: &SimilarityMatrix,
    centroids: &BTreeMap<String, Vec<f64>>,
    config: &BuildConfig,
) -> Result<BuildOutcome, HierarchyError> {
    let vocabulary: Vec<String> = corpus.vocabulary().to_vec();
    let mut matrix_concepts = matrix.concepts.clone();
    matrix_concepts.sort();
    if matrix_concepts != vocabulary {
        return Err(HierarchyError::MatrixMismatch(format!(
            "matrix nodes [{}] vs vocabulary [{}]",
            matrix_concepts.join(", "),
            vocabulary.join(", ")
        )));
    }

    let leaf_senses = disambiguate_leaves(lexicon, &vocabulary, config.matching)?;

    let mut nodes: Vec<HierarchyNode> = Vec::new();
    let mut used_names: BTreeSet<String> = vocabulary.iter().cloned().collect();
    let mut actives: Vec<ActiveNode> = Vec::new();
    for concept in &vocabulary {
        let id = nodes.len();
        let synset = leaf_senses[concept].clone();
        nodes.push(HierarchyNode {
            id,
            name: concept.clone(),
            synset: synset.clone(),
            kind: NodeKind::Leaf,
            children: Vec::new(),
        });
        let centroid = centroids
            .get(concept)
            .ok_or_else(|| HierarchyError::MissingCentroid(concept.clone()))?;
        actives.push(ActiveNode {
            id,
            name: concept.clone(),
            synset,
            candidates: lexicon.senses(concept)?.to_vec(),
            centroid: centroid.clone(),
            leaf_labels: std::iter::once(concept.clone()).collect(),
        });
    }

    let mut merges: Vec<MergeRecord> = Vec::new();
    let mut iteration = 0usize;

    while actives.len() > 1 {
        iteration += 1;
        actives.sort_by(|a, b| a.name.cmp(&b.name));
        let names: Vec<String> = actives.iter().map(|a| a.name.clone()).collect();

        let (raw_vis, raw_con, raw_ctx) = if iteration == 1 {
            (
                matrix.raw_visual.clone(),
                matrix.raw_conceptual.clone(),
                matrix.raw_contextual.clone(),
            )
        } else {
            compute_raw_channels(corpus, lexicon, &actives, config)?
        };
        let sim = SimilarityMatrix::from_raw_channels(
            names.clone(),
            raw_vis,
            raw_con,
            raw_ctx,
            &config.weights,
        )?;

        let synset_map: BTreeMap<String, String> = actives
            .iter()
            .map(|a| (a.name.clone(), a.synset.clone()))
            .collect();
        let mut actions = apply_rules(&sim, lexicon, &synset_map)?;
        if actions.is_empty() {
            let (a, b, score) = closest_global_pair(&sim);
            let subsumer = lexicon.lcs(&synset_map[&a], &synset_map[&b])?;
            actions.push(MergeAction {
                rule: MergeRule::Forced,
                score,
                nodes: vec![PlannedNode {
                    synset: subsumer,
                    children: vec![PlannedChild::Active(a), PlannedChild::Active(b)],
                }],
            });
        }

        for action in actions {
            let by_name: BTreeMap<String, usize> = actives
                .iter()
                .enumerate()
                .map(|(idx, a)| (a.name.clone(), idx))
                .collect();
            let mut created_ids: Vec<NodeId> = Vec::new();
            let mut created_actives: Vec<ActiveNode> = Vec::new();
            let mut record_nodes: Vec<CreatedNode> = Vec::new();

            for planned in &action.nodes {
                let id = nodes.len();
                let name = allocate_name(&first_lemma(lexicon, &planned.synset)?, &mut used_names);
                let mut child_ids = Vec::new();
                let mut child_names = Vec::new();
                let mut child_centroids: Vec<&Vec<f64>> = Vec::new();
                let mut leaf_labels = BTreeSet::new();
                for child in &planned.children {
                    match child {
                        PlannedChild::Active(child_name) => {
                            let active = &actives[by_name[child_name]];
                            child_ids.push(active.id);
                            child_names.push(active.name.clone());
                            child_centroids.push(&active.centroid);
                            leaf_labels.extend(active.leaf_labels.iter().cloned());
                        }
                        PlannedChild::Created(idx) => {
                            let earlier = &created_actives[*idx];
                            child_ids.push(earlier.id);
                            child_names.push(earlier.name.clone());
                            child_centroids.push(&earlier.centroid);
                            leaf_labels.extend(earlier.leaf_labels.iter().cloned());
                        }
                    }
                }
                let dim = child_centroids[0].len();
                let mut centroid = vec![0.0; dim];
                for c in &child_centroids {
                    for (acc, &v) in centroid.iter_mut().zip(c.iter()) {
                        *acc += v;
                    }
                }
                for v in &mut centroid {
                    *v /= child_centroids.len() as f64;
                }

                nodes.push(HierarchyNode {
                    id,
                    name: name.clone(),
                    synset: planned.synset.clone(),
                    kind: NodeKind::Inferred,
                    children: child_ids,
                });
                record_nodes.push(CreatedNode {
                    name: name.clone(),
                    synset: planned.synset.clone(),
                    children: child_names,
                });
                created_ids.push(id);
                created_actives.push(ActiveNode {
                    id,
                    name,
                    synset: planned.synset.clone(),
                    candidates: vec![planned.synset.clone()],
                    centroid,
                    leaf_labels,
                });
            }

            let consumed: BTreeSet<String> = action.consumed().into_iter().collect();
            actives.retain(|a| !consumed.contains(&a.name));
            // only the action's top node stays active; earlier planned nodes
            // are interior
            actives.push(created_actives.pop().expect("action plans >= 1 node"));

            merges.push(MergeRecord {
                iteration,
                rule: action.rule,
                score: action.score,
                created: record_nodes,
            });
        }
    }

    let root_id = actives[0].id;
    nodes[root_id].kind = NodeKind::Root;
    let hierarchy = Hierarchy {
        nodes,
        root: root_id,
    };
    hierarchy.validate()?;
    Ok(BuildOutcome { hierarchy, merges })
}
