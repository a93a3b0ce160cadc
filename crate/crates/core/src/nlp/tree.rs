use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nlp::PosTag;

pub type NodeId = usize;

/// Phrase label or, for leaves, the token's tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeLabel {
    S,
    NP,
    VP,
    PP,
    Tag(PosTag),
}

impl NodeLabel {
    pub fn name(self) -> &'static str {
        match self {
            NodeLabel::S => "S",
            NodeLabel::NP => "NP",
            NodeLabel::VP => "VP",
            NodeLabel::PP => "PP",
            NodeLabel::Tag(t) => t.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    pub label: NodeLabel,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    /// Inclusive range of covered token indices.
    pub range: (usize, usize),
    pub depth: usize,
}

/// Nested description used to build trees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shape {
    Leaf(PosTag),
    Node(NodeLabel, Vec<Shape>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    nodes: Vec<TreeNode>,
    root: NodeId,
    leaves: Vec<NodeId>,
    in_order: Vec<u32>,
}

impl ParseTree {
    /// Builds a tree from a nested shape; leaves are numbered left to right.
    pub fn from_shape(shape: &Shape) -> Result<ParseTree> {
        fn build(
            shape: &Shape,
            parent: Option<NodeId>,
            depth: usize,
            nodes: &mut Vec<TreeNode>,
            leaves: &mut Vec<NodeId>,
        ) -> Result<NodeId> {
            let id = nodes.len();
            match shape {
                Shape::Leaf(tag) => {
                    let i = leaves.len();
                    leaves.push(id);
                    nodes.push(TreeNode {
                        label: NodeLabel::Tag(*tag),
                        children: Vec::new(),
                        parent,
                        range: (i, i),
                        depth,
                    });
                }
                Shape::Node(label, kids) => {
                    if kids.is_empty() {
                        return Err(Error::EmptyInput);
                    }
                    nodes.push(TreeNode {
                        label: *label,
                        children: Vec::new(),
                        parent,
                        range: (0, 0),
                        depth,
                    });
                    let mut children = Vec::with_capacity(kids.len());
                    for k in kids {
                        children.push(build(k, Some(id), depth + 1, nodes, leaves)?);
                    }
                    let lo = nodes[children[0]].range.0;
                    let hi = nodes[*children.last().unwrap()].range.1;
                    nodes[id].children = children;
                    nodes[id].range = (lo, hi);
                }
            }
            Ok(id)
        }
        let mut nodes = Vec::new();
        let mut leaves = Vec::new();
        let root = build(shape, None, 0, &mut nodes, &mut leaves)?;
        let mut in_order = vec![0u32; nodes.len()];
        let mut next = 0u32;
        fn visit(nodes: &[TreeNode], id: NodeId, next: &mut u32, out: &mut [u32]) {
            let kids = &nodes[id].children;
            if let Some((&first, rest)) = kids.split_first() {
                visit(nodes, first, next, out);
                out[id] = *next;
                *next += 1;
                for &k in rest {
                    visit(nodes, k, next, out);
                }
            } else {
                out[id] = *next;
                *next += 1;
            }
        }
        visit(&nodes, root, &mut next, &mut in_order);
        Ok(ParseTree {
            nodes,
            root,
            leaves,
            in_order,
        })
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

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(Error::NodeNotInTree(id))
    }

    pub fn label(&self, id: NodeId) -> NodeLabel {
        self.nodes[id].label
    }

    /// The leaf for token `i`.
    pub fn leaf(&self, i: usize) -> Option<NodeId> {
        self.leaves.get(i).copied()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn lca(&self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.node(a)?;
        self.node(b)?;
        let (mut a, mut b) = (a, b);
        while self.nodes[a].depth > self.nodes[b].depth {
            a = self.nodes[a].parent.unwrap();
        }
        while self.nodes[b].depth > self.nodes[a].depth {
            b = self.nodes[b].parent.unwrap();
        }
        while a != b {
            a = self.nodes[a].parent.unwrap();
            b = self.nodes[b].parent.unwrap();
        }
        Ok(a)
    }

    /// Number of edges between two nodes.
    pub fn tree_distance(&self, a: NodeId, b: NodeId) -> Result<usize> {
        let l = self.lca(a, b)?;
        let d = self.nodes[l].depth;
        Ok(self.nodes[a].depth - d + self.nodes[b].depth - d)
    }

    /// Position of the node in an in-order walk (first child, node, remaining children).
    pub fn in_order_index(&self, a: NodeId) -> Result<u32> {
        self.node(a)?;
        Ok(self.in_order[a])
    }

    /// Smallest subtree covering tokens `lo..=hi`.
    pub fn cover(&self, lo: usize, hi: usize) -> Result<NodeId> {
        let a = self.leaf(lo).ok_or(Error::NodeNotInTree(lo))?;
        let b = self.leaf(hi).ok_or(Error::NodeNotInTree(hi))?;
        self.lca(a, b)
    }
}
