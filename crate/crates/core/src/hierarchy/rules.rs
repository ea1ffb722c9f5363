//! Neighbor queries over the fused matrix and the parenthood-inference
//! rules that drive one construction iteration.
//!
//! Rules are evaluated in a fixed order each iteration and a node joins at
//! most one action per iteration (first fired wins):
//!
//! 1. hub: a node that is the closest neighbor of two or more nodes, all of
//!    which sit in its own top-3 list, is grouped with them under their
//!    least common subsumers (one parent per distinct subsumer, with the
//!    shallowest subsumer on top when they differ);
//! 2. mutual pair: two nodes that are each other's closest neighbor join
//!    under their least common subsumer;
//! 3. chain: when a's closest is b but b's closest is some third node c,
//!    b and c join first and a attaches to that parent (directly when the
//!    parent's synset already subsumes a, under a grandparent otherwise).

use std::collections::{BTreeMap, BTreeSet};

use super::HierarchyError;
use crate::fusion::SimilarityMatrix;
use crate::lexicon::Lexicon;

/// Which rule produced a merge action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeRule {
    Hub,
    MutualPair,
    Chain,
    Forced,
}

/// A child of a node planned inside one action: either an existing active
/// node (by name) or an earlier planned node of the same action (by index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannedChild {
    Active(String),
    Created(usize),
}

/// One node to create; `children` never is empty and the last planned node
/// of an action is the one that survives into the next iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedNode {
    pub synset: String,
    pub children: Vec<PlannedChild>,
}

/// A grouping decision produced by one rule firing.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeAction {
    pub rule: MergeRule,
    pub score: f64,
    pub nodes: Vec<PlannedNode>,
}

impl MergeAction {
    /// Names of the active nodes this action consumes.
    pub fn consumed(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .nodes
            .iter()
            .flat_map(|node| {
                node.children.iter().filter_map(|child| match child {
                    PlannedChild::Active(name) => Some(name.clone()),
                    PlannedChild::Created(_) => None,
                })
            })
            .collect();
        names.sort();
        names
    }
}

fn index_of(m: &SimilarityMatrix, name: &str) -> Result<usize, HierarchyError> {
    m.index_of(name)
        .ok_or_else(|| HierarchyError::UnknownNode(name.to_string()))
}

/// The neighbor with the highest fused similarity; ties break to the
/// lexicographically smaller name. The diagonal never competes.
pub fn closest(m: &SimilarityMatrix, name: &str) -> Result<String, HierarchyError> {
    if m.size() < 2 {
        return Err(HierarchyError::SingletonMatrix);
    }
    let i = index_of(m, name)?;
    let mut best: Option<(f64, &str)> = None;
    for (j, other) in m.concepts.iter().enumerate() {
        if j == i {
            continue;
        }
        let score = m.fused.get(i, j);
        let wins = match best {
            None => true,
            Some((bs, bn)) => score > bs || (score == bs && other.as_str() < bn),
        };
        if wins {
            best = Some((score, other));
        }
    }
    Ok(best.expect("at least one neighbor").1.to_string())
}

/// Up to three highest-similarity neighbors, descending, ties lexicographic.
pub fn hits3(m: &SimilarityMatrix, name: &str) -> Result<Vec<String>, HierarchyError> {
    let i = index_of(m, name)?;
    let mut neighbors: Vec<(f64, &String)> = m
        .concepts
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, other)| (m.fused.get(i, j), other))
        .collect();
    neighbors.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite similarities")
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(neighbors.into_iter().take(3).map(|(_, n)| n.clone()).collect())
}

/// Deepest of a set of synsets; ties break to the smallest id.
fn deepest<'a>(
    lexicon: &Lexicon,
    ids: impl Iterator<Item = &'a String>,
) -> Result<String, HierarchyError> {
    let mut best: Option<(usize, &str)> = None;
    for id in ids {
        let depth = lexicon.path_len_to_root(id)?;
        let wins = match best {
            None => true,
            Some((bd, bid)) => depth > bd || (depth == bd && id.as_str() < bid),
        };
        if wins {
            best = Some((depth, id));
        }
    }
    Ok(best.expect("non-empty id set").1.to_string())
}

fn fold_lcs(lexicon: &Lexicon, ids: &BTreeSet<String>) -> Result<String, HierarchyError> {
    let mut iter = ids.iter();
    let mut acc = iter.next().expect("non-empty set").clone();
    for id in iter {
        acc = lexicon.lcs(&acc, id)?;
    }
    Ok(acc)
}

fn active_children(names: impl IntoIterator<Item = String>) -> Vec<PlannedChild> {
    let sorted: BTreeSet<String> = names.into_iter().collect();
    sorted.into_iter().map(PlannedChild::Active).collect()
}

/// Groups a hub with its followers. All pairwise subsumers equal: one
/// parent. Otherwise followers split by subsumer; the hub joins the deepest
/// group, groups of one attach directly to the top node, and the top node
/// carries the fold of the group subsumers (which collapses into a group's
/// own parent when that group's subsumer is the fold itself).
fn plan_hub_action(
    lexicon: &Lexicon,
    synsets: &BTreeMap<String, String>,
    hub: &str,
    followers: &[String],
) -> Result<Vec<PlannedNode>, HierarchyError> {
    let hub_synset = &synsets[hub];
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for follower in followers {
        let subsumer = lexicon.lcs(hub_synset, &synsets[follower])?;
        groups.entry(subsumer).or_default().push(follower.clone());
    }
    if groups.len() == 1 {
        let (subsumer, mut members) = groups.into_iter().next().expect("one group");
        members.push(hub.to_string());
        return Ok(vec![PlannedNode {
            synset: subsumer,
            children: active_children(members),
        }]);
    }

    let hub_group = deepest(lexicon, groups.keys())?;
    groups
        .get_mut(&hub_group)
        .expect("hub group exists")
        .push(hub.to_string());
    let distinct: BTreeSet<String> = groups.keys().cloned().collect();
    let top_synset = fold_lcs(lexicon, &distinct)?;

    let mut nodes = Vec::new();
    let mut top_children = Vec::new();
    for (subsumer, members) in &groups {
        if members.len() >= 2 && *subsumer != top_synset {
            nodes.push(PlannedNode {
                synset: subsumer.clone(),
                children: active_children(members.iter().cloned()),
            });
            top_children.push(PlannedChild::Created(nodes.len() - 1));
        } else {
            // singleton groups and groups already at the top synset attach
            // directly under the top node
            top_children.extend(active_children(members.iter().cloned()));
        }
    }
    nodes.push(PlannedNode {
        synset: top_synset,
        children: top_children,
    });
    Ok(nodes)
}

/// Runs the three rules over the current active set, in order, and returns
/// the actions that fired. An empty list is legal (the caller then forces a
/// merge of the globally closest pair).
pub fn apply_rules(
    m: &SimilarityMatrix,
    lexicon: &Lexicon,
    synsets: &BTreeMap<String, String>,
) -> Result<Vec<MergeAction>, HierarchyError> {
    if m.size() < 2 {
        return Ok(Vec::new());
    }
    let names: Vec<String> = synsets.keys().cloned().collect();
    for name in &names {
        index_of(m, name)?;
    }
    let mut closest_of: BTreeMap<&str, String> = BTreeMap::new();
    for name in &names {
        closest_of.insert(name, closest(m, name)?);
    }
    let score_of = |a: &str, b: &str| -> f64 {
        let i = m.index_of(a).expect("validated name");
        let j = m.index_of(b).expect("validated name");
        m.fused.get(i, j)
    };

    let mut actions = Vec::new();
    let mut used: BTreeSet<&str> = BTreeSet::new();

    // rule 1: hubs
    for hub in &names {
        if used.contains(hub.as_str()) {
            continue;
        }
        let top = hits3(m, hub)?;
        let followers: Vec<String> = names
            .iter()
            .filter(|f| {
                f.as_str() != hub
                    && !used.contains(f.as_str())
                    && closest_of[f.as_str()] == *hub
                    && top.contains(f)
            })
            .cloned()
            .collect();
        if followers.len() < 2 {
            continue;
        }
        let score = followers
            .iter()
            .map(|f| score_of(hub, f))
            .fold(f64::NEG_INFINITY, f64::max);
        actions.push(MergeAction {
            rule: MergeRule::Hub,
            score,
            nodes: plan_hub_action(lexicon, synsets, hub, &followers)?,
        });
        used.insert(hub.as_str());
        for follower in &followers {
            used.insert(names.iter().find(|n| *n == follower).expect("known"));
        }
    }

    // rule 2: mutual closest pairs
    for a in &names {
        if used.contains(a.as_str()) {
            continue;
        }
        let b = &closest_of[a.as_str()];
        if a >= b || used.contains(b.as_str()) {
            continue;
        }
        if closest_of[b.as_str()] != *a {
            continue;
        }
        actions.push(MergeAction {
            rule: MergeRule::MutualPair,
            score: score_of(a, b),
            nodes: vec![PlannedNode {
                synset: lexicon.lcs(&synsets[a], &synsets[b])?,
                children: active_children([a.clone(), b.clone()]),
            }],
        });
        used.insert(a.as_str());
        used.insert(names.iter().find(|n| *n == b).expect("known"));
    }

    // rule 3: chains
    for a in &names {
        if used.contains(a.as_str()) {
            continue;
        }
        let b = closest_of[a.as_str()].clone();
        if used.contains(b.as_str()) {
            continue;
        }
        let c = closest_of[b.as_str()].clone();
        if c == *a || used.contains(c.as_str()) {
            continue;
        }
        let pair_synset = lexicon.lcs(&synsets[&b], &synsets[&c])?;
        let top_synset = lexicon.lcs(&synsets[a.as_str()], &pair_synset)?;
        let nodes = if top_synset == pair_synset {
            vec![PlannedNode {
                synset: pair_synset,
                children: active_children([a.clone(), b.clone(), c.clone()]),
            }]
        } else {
            vec![
                PlannedNode {
                    synset: pair_synset,
                    children: active_children([b.clone(), c.clone()]),
                },
                PlannedNode {
                    synset: top_synset,
                    children: vec![PlannedChild::Created(0), PlannedChild::Active(a.clone())],
                },
            ]
        };
        actions.push(MergeAction {
            rule: MergeRule::Chain,
            score: score_of(a, &b).max(score_of(&b, &c)),
            nodes,
        });
        for name in [a.as_str(), b.as_str(), c.as_str()] {
            used.insert(names.iter().find(|n| n.as_str() == name).expect("known"));
        }
    }

    Ok(actions)
}
