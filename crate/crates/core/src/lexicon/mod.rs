//! WordNet-style lexicon: synsets with glosses and relations, hypernym
//! queries, and gloss vectors over a global word space.
//!
//! The lexicon file is a small JSON document (see `load_lexicon`); a full
//! WordNet conversion and a hand-built domain lexicon both fit the same
//! schema. All queries treat the hypernym graph as a rooted DAG: every
//! synset reaches the root, and the least common subsumer of two synsets is
//! the deepest ancestor they share.

mod stopwords;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

pub use stopwords::{is_stop_word, STOP_WORDS};

/// Relation slots of an expanded gloss set, in fixed order. Keeping the
/// arity constant makes expanded gloss sets position-comparable across
/// synsets.
pub const GLOSS_RELATIONS: [&str; 5] = ["self", "hypernym", "hyponym", "meronym", "holonym"];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse lexicon: {0}")]
    Parse(String),
    #[error("synset {from} references unknown synset {to}")]
    DanglingReference { from: String, to: String },
    #[error("sense list for concept {concept} references unknown synset {to}")]
    DanglingSense { concept: String, to: String },
    #[error("hypernym cycle involving synsets: {}", ids.join(", "))]
    HypernymCycle { ids: Vec<String> },
    #[error("synset {id} cannot reach the root via hypernyms")]
    UnreachableFromRoot { id: String },
    #[error("root synset {id} is missing from the synset table")]
    MissingRoot { id: String },
    #[error("concept {concept} has no candidate sense")]
    ConceptWithoutSense { concept: String },
    #[error("unknown synset {0}")]
    UnknownSynset(String),
    #[error("unknown concept {0}")]
    UnknownConcept(String),
}

/// An atomic sense node: lemmas, tokenized gloss, hypernym links, and any
/// other named relations (hyponym, meronym, holonym, ...).
#[derive(Debug, Clone)]
pub struct Synset {
    pub id: String,
    pub lemmas: Vec<String>,
    pub gloss: Vec<String>,
    pub hypernyms: Vec<String>,
    pub related: BTreeMap<String, Vec<String>>,
}

/// Sparse gloss-vector: word-space index -> occurrence count.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GlossVector {
    counts: BTreeMap<usize, u32>,
}

impl GlossVector {
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<usize, u32> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    fn add(&mut self, index: usize) {
        *self.counts.entry(index).or_insert(0) += 1;
    }

    fn merge(&mut self, other: &GlossVector) {
        for (&i, &c) in &other.counts {
            *self.counts.entry(i).or_insert(0) += c;
        }
    }

    pub fn norm(&self) -> f64 {
        self.counts
            .values()
            .map(|&c| f64::from(c) * f64::from(c))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &GlossVector) -> f64 {
        // iterate the smaller side
        let (small, big) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .filter_map(|(i, &c)| big.counts.get(i).map(|&d| f64::from(c) * f64::from(d)))
            .sum()
    }
}

/// The five position-aligned gloss vectors of a synset: its own gloss first,
/// then one merged vector per relation in `GLOSS_RELATIONS` order. Absent
/// relations hold an empty vector so the arity is always 5.
#[derive(Debug, Clone)]
pub struct ExpandedGlossSet {
    pub slots: [GlossVector; 5],
}

impl ExpandedGlossSet {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Loaded and validated lexicon.
#[derive(Debug, Clone)]
pub struct Lexicon {
    synsets: BTreeMap<String, Synset>,
    root_id: String,
    senses: BTreeMap<String, Vec<String>>,
    word_space: Vec<String>,
    word_index: HashMap<String, usize>,
    depth: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct LexiconFile {
    root: String,
    synsets: BTreeMap<String, SynsetEntry>,
    #[serde(default)]
    senses: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
struct SynsetEntry {
    #[serde(default)]
    lemmas: Vec<String>,
    #[serde(default)]
    gloss: String,
    #[serde(default)]
    hypernyms: Vec<String>,
    #[serde(default)]
    relations: BTreeMap<String, Vec<String>>,
}

/// Lowercases, strips punctuation, and splits a raw gloss into tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|ch: char| !ch.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Loads a lexicon from JSON:
///
/// ```json
/// {
///   "root": "entity",
///   "synsets": {
///     "dog.n.01": {
///       "lemmas": ["dog"],
///       "gloss": "a domesticated carnivore that barks",
///       "hypernyms": ["carnivore"],
///       "relations": {"hyponym": ["puppy.n.01"]}
///     }
///   },
///   "senses": {"dog": ["dog.n.01"]}
/// }
/// ```
///
/// Validation rejects dangling references, hypernym cycles (reported with
/// the cycle's ids), synsets that cannot reach the root, and concepts with
/// an empty sense list. The word space is the sorted set of all non-stop
/// gloss tokens.
pub fn load_lexicon(path: &Path) -> Result<Lexicon, LexiconError> {
    let file = File::open(path).map_err(|source| LexiconError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let parsed: LexiconFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| LexiconError::Parse(e.to_string()))?;
    Lexicon::from_file(parsed)
}

impl Lexicon {
    fn from_file(file: LexiconFile) -> Result<Self, LexiconError> {
        let mut synsets = BTreeMap::new();
        for (id, entry) in file.synsets {
            synsets.insert(
                id.clone(),
                Synset {
                    id,
                    lemmas: entry.lemmas,
                    gloss: tokenize(&entry.gloss),
                    hypernyms: entry.hypernyms,
                    related: entry.relations,
                },
            );
        }
        Lexicon::from_synsets(synsets, file.root, file.senses)
    }

    /// Assembles a lexicon from already-tokenized synsets, running the same
    /// validation as `load_lexicon`.
    pub fn from_synsets(
        synsets: BTreeMap<String, Synset>,
        root_id: String,
        senses: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, LexiconError> {
        if !synsets.contains_key(&root_id) {
            return Err(LexiconError::MissingRoot { id: root_id });
        }
        for synset in synsets.values() {
            for target in synset
                .hypernyms
                .iter()
                .chain(synset.related.values().flatten())
            {
                if !synsets.contains_key(target) {
                    return Err(LexiconError::DanglingReference {
                        from: synset.id.clone(),
                        to: target.clone(),
                    });
                }
            }
            if synset.hypernyms.iter().any(|h| h == &synset.id) {
                return Err(LexiconError::HypernymCycle {
                    ids: vec![synset.id.clone()],
                });
            }
        }
        for (concept, candidates) in &senses {
            if candidates.is_empty() {
                return Err(LexiconError::ConceptWithoutSense {
                    concept: concept.clone(),
                });
            }
            for id in candidates {
                if !synsets.contains_key(id) {
                    return Err(LexiconError::DanglingSense {
                        concept: concept.clone(),
                        to: id.clone(),
                    });
                }
            }
        }
        detect_cycle(&synsets)?;

        let depth = hypernym_depths(&synsets, &root_id);
        for id in synsets.keys() {
            if !depth.contains_key(id) {
                return Err(LexiconError::UnreachableFromRoot { id: id.clone() });
            }
        }

        let mut words = BTreeSet::new();
        for synset in synsets.values() {
            for token in &synset.gloss {
                if !is_stop_word(token) {
                    words.insert(token.clone());
                }
            }
        }
        let word_space: Vec<String> = words.into_iter().collect();
        let word_index = word_space
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();

        Ok(Lexicon {
            synsets,
            root_id,
            senses,
            word_space,
            word_index,
            depth,
        })
    }

    pub fn root_id(&self) -> &str {
        &self.root_id
    }

    pub fn synset(&self, id: &str) -> Result<&Synset, LexiconError> {
        self.synsets
            .get(id)
            .ok_or_else(|| LexiconError::UnknownSynset(id.to_string()))
    }

    pub fn synset_ids(&self) -> impl Iterator<Item = &String> {
        self.synsets.keys()
    }

    pub fn word_space(&self) -> &[String] {
        &self.word_space
    }

    /// Candidate senses for a concept name, in file order.
    pub fn senses(&self, concept: &str) -> Result<&[String], LexiconError> {
        self.senses
            .get(concept)
            .map(Vec::as_slice)
            .ok_or_else(|| LexiconError::UnknownConcept(concept.to_string()))
    }

    pub fn has_concept(&self, concept: &str) -> bool {
        self.senses.contains_key(concept)
    }

    /// Minimum hypernym-edge count from `id` up to the root (root itself: 0).
    pub fn path_len_to_root(&self, id: &str) -> Result<usize, LexiconError> {
        self.synset(id)?;
        Ok(self.depth[id])
    }

    /// Hypernym ancestors of `id`, including `id` itself.
    pub fn ancestors(&self, id: &str) -> Result<BTreeSet<String>, LexiconError> {
        self.synset(id)?;
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([id.to_string()]);
        while let Some(current) = queue.pop_front() {
            if !seen.insert(current.clone()) {
                continue;
            }
            for h in &self.synsets[&current].hypernyms {
                queue.push_back(h.clone());
            }
        }
        Ok(seen)
    }

    /// True when `ancestor` lies on some hypernym path from `id` (or equals it).
    pub fn is_ancestor(&self, ancestor: &str, id: &str) -> Result<bool, LexiconError> {
        Ok(self.ancestors(id)?.contains(ancestor))
    }

    /// Minimum hypernym-edge count from `from` up to `to`, when `to` is an
    /// ancestor of `from`.
    fn up_distance(&self, from: &str, to: &str) -> Option<usize> {
        let mut dist: HashMap<&str, usize> = HashMap::new();
        let mut queue = VecDeque::from([(from, 0usize)]);
        while let Some((current, d)) = queue.pop_front() {
            if current == to {
                return Some(d);
            }
            if dist.contains_key(current) {
                continue;
            }
            dist.insert(current, d);
            for h in &self.synsets[current].hypernyms {
                queue.push_back((h.as_str(), d + 1));
            }
        }
        None
    }

    /// Least common subsumer: the common hypernym-ancestor of `a` and `b`
    /// (a node counts among its own ancestors) that lies deepest below the
    /// root. Ties go to the candidate closest to the pair (smallest combined
    /// up-distance), then to the lexicographically smallest id.
    pub fn lcs(&self, a: &str, b: &str) -> Result<String, LexiconError> {
        let ancestors_a = self.ancestors(a)?;
        let ancestors_b = self.ancestors(b)?;
        let mut best: Option<(usize, usize, &str)> = None;
        for id in ancestors_a.intersection(&ancestors_b) {
            let depth = self.depth[id];
            let combined = self.up_distance(a, id).expect("ancestor of a")
                + self.up_distance(b, id).expect("ancestor of b");
            let candidate = (depth, combined, id.as_str());
            best = Some(match best {
                None => candidate,
                Some(current) => {
                    // deeper wins; then smaller combined distance; then id
                    let (cd, cc, cid) = current;
                    if depth > cd
                        || (depth == cd && combined < cc)
                        || (depth == cd && combined == cc && id.as_str() < cid)
                    {
                        candidate
                    } else {
                        current
                    }
                }
            });
        }
        Ok(best.expect("root is always a common ancestor").2.to_string())
    }

    /// Counts of each word-space word in the synset's own gloss.
    pub fn gloss_vector(&self, id: &str) -> Result<GlossVector, LexiconError> {
        let synset = self.synset(id)?;
        let mut vector = GlossVector::default();
        for token in &synset.gloss {
            if let Some(&index) = self.word_index.get(token) {
                vector.add(index);
            }
        }
        Ok(vector)
    }

    /// The five aligned gloss vectors for a synset: own gloss, then merged
    /// neighbor glosses per relation. A relation with several neighbors
    /// contributes the concatenation of their glosses as one vector.
    pub fn expanded_gloss_set(&self, id: &str) -> Result<ExpandedGlossSet, LexiconError> {
        let synset = self.synset(id)?;
        let mut slots: [GlossVector; 5] = Default::default();
        slots[0] = self.gloss_vector(id)?;
        for (slot, relation) in GLOSS_RELATIONS.iter().enumerate().skip(1) {
            let neighbors: &[String] = if *relation == "hypernym" {
                &synset.hypernyms
            } else {
                synset
                    .related
                    .get(*relation)
                    .map(Vec::as_slice)
                    .unwrap_or(&[])
            };
            let mut merged = GlossVector::default();
            for neighbor in neighbors {
                merged.merge(&self.gloss_vector(neighbor)?);
            }
            slots[slot] = merged;
        }
        Ok(ExpandedGlossSet { slots })
    }
}

fn hypernym_depths(
    synsets: &BTreeMap<String, Synset>,
    root_id: &str,
) -> HashMap<String, usize> {
    // reverse BFS from the root along hyponym direction of hypernym edges
    let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
    for synset in synsets.values() {
        for h in &synset.hypernyms {
            children.entry(h.as_str()).or_default().push(&synset.id);
        }
    }
    let mut depth = HashMap::new();
    let mut queue = VecDeque::from([(root_id.to_string(), 0usize)]);
    while let Some((id, d)) = queue.pop_front() {
        if depth.contains_key(&id) {
            continue;
        }
        depth.insert(id.clone(), d);
        for &child in children.get(id.as_str()).into_iter().flatten() {
            if !depth.contains_key(child) {
                queue.push_back((child.to_string(), d + 1));
            }
        }
    }
    depth
}

fn detect_cycle(synsets: &BTreeMap<String, Synset>) -> Result<(), LexiconError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        InProgress,
        Done,
    }
    let mut marks: HashMap<&str, Mark> = HashMap::new();
    let mut stack: Vec<&str> = Vec::new();

    fn visit<'a>(
        id: &'a str,
        synsets: &'a BTreeMap<String, Synset>,
        marks: &mut HashMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
    ) -> Result<(), LexiconError> {
        match marks.get(id) {
            Some(Mark::Done) => return Ok(()),
            Some(Mark::InProgress) => {
                let start = stack.iter().position(|&s| s == id).unwrap_or(0);
                let mut ids: Vec<String> =
                    stack[start..].iter().map(|s| s.to_string()).collect();
                ids.push(id.to_string());
                return Err(LexiconError::HypernymCycle { ids });
            }
            None => {}
        }
        marks.insert(id, Mark::InProgress);
        stack.push(id);
        for h in &synsets[id].hypernyms {
            visit(h, synsets, marks, stack)?;
        }
        stack.pop();
        marks.insert(id, Mark::Done);
        Ok(())
    }

    for id in synsets.keys() {
        visit(id, synsets, &mut marks, &mut stack)?;
    }
    Ok(())
}
