//! In-order label sequences of syntax trees.

use serde::{Deserialize, Serialize};

use super::normalize::NormalizedAst;
use super::tree::Node;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AstSequence {
    pub labels: Vec<String>,
}

impl AstSequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// In-order traversal generalised to n-ary nodes: first child, then the
/// node's own label, then the remaining children left to right.
pub fn ast_to_sequence(ast: &NormalizedAst) -> AstSequence {
    let mut labels = Vec::new();
    if let Some(root) = &ast.tree.root {
        in_order(root, &mut labels);
    }
    AstSequence { labels }
}

fn in_order(node: &Node, out: &mut Vec<String>) {
    let mut children = node.children.iter();
    if let Some(first) = children.next() {
        in_order(first, out);
    }
    out.push(node.label());
    for c in children {
        in_order(c, out);
    }
}
