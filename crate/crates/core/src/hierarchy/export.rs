//! DOT and JSON serialization of a built hierarchy.

use serde::{Deserialize, Serialize};

use super::{Hierarchy, HierarchyError, MergeRecord, NodeId, NodeKind};

#[derive(Serialize, Deserialize)]
struct HierarchyFile {
    root: NodeId,
    nodes: Vec<super::HierarchyNode>,
    edges: Vec<(NodeId, NodeId)>,
    #[serde(default)]
    merges: Vec<MergeRecord>,
}

pub(super) fn to_json(hierarchy: &Hierarchy, merges: &[MergeRecord]) -> String {
    let edges = hierarchy
        .nodes()
        .iter()
        .flat_map(|n| n.children.iter().map(move |&c| (n.id, c)))
        .collect();
    let file = HierarchyFile {
        root: hierarchy.root(),
        nodes: hierarchy.nodes().to_vec(),
        edges,
        merges: merges.to_vec(),
    };
    serde_json::to_string_pretty(&file).expect("hierarchy serialization cannot fail")
}

pub(super) fn from_json(text: &str) -> Result<(Hierarchy, Vec<MergeRecord>), HierarchyError> {
    let file: HierarchyFile =
        serde_json::from_str(text).map_err(|e| HierarchyError::Parse(e.to_string()))?;
    let hierarchy = Hierarchy {
        nodes: file.nodes,
        root: file.root,
    };
    hierarchy.validate()?;
    Ok((hierarchy, file.merges))
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: leaves as double octagons, the root as a diamond,
/// inferred nodes with the default shape.
pub fn to_dot(hierarchy: &Hierarchy) -> String {
    let mut out = String::from("digraph hierarchy {\n");
    for node in hierarchy.nodes() {
        let shape = match node.kind {
            NodeKind::Leaf => " shape=doubleoctagon",
            NodeKind::Root => " shape=diamond",
            NodeKind::Inferred => "",
        };
        out.push_str(&format!(
            "  n{} [label=\"{}\"{}];\n",
            node.id,
            escape(&node.name),
            shape
        ));
    }
    for node in hierarchy.nodes() {
        for &child in &node.children {
            out.push_str(&format!("  n{} -> n{};\n", node.id, child));
        }
    }
    out.push_str("}\n");
    out
}
