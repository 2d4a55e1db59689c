//! Binary decision trees and sum-aggregated ensembles.
//!
//! Split semantics are fixed: a sample goes to the left child iff
//! `x[feature] <= threshold`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

/// Deepest tree accepted (root-to-leaf edge count).
pub const MAX_TREE_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("node {node} points at child {child}, which does not exist")]
    ChildOutOfRange { node: usize, child: usize },
    #[error("node {node} is reachable more than once or forms a cycle")]
    NotATree { node: usize },
    #[error("node {node} is unreachable from the root")]
    Unreachable { node: usize },
    #[error("tree depth exceeds {MAX_TREE_DEPTH}")]
    TooDeep,
    #[error("node {node} has a non-finite threshold or leaf value")]
    NonFinite { node: usize },
}

/// A regression tree rooted at node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    depth: usize,
}

impl Tree {
    pub fn new(nodes: Vec<TreeNode>) -> Result<Self, TreeError> {
        if nodes.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut seen = vec![false; nodes.len()];
        let mut depth = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, d)) = stack.pop() {
            if seen[id] {
                return Err(TreeError::NotATree { node: id });
            }
            seen[id] = true;
            depth = depth.max(d);
            if d > MAX_TREE_DEPTH {
                return Err(TreeError::TooDeep);
            }
            match nodes[id] {
                TreeNode::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(TreeError::NonFinite { node: id });
                    }
                    for child in [left, right] {
                        if child >= nodes.len() {
                            return Err(TreeError::ChildOutOfRange { node: id, child });
                        }
                        stack.push((child, d + 1));
                    }
                }
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(TreeError::NonFinite { node: id });
                    }
                }
            }
        }
        if let Some(node) = seen.iter().position(|s| !s) {
            return Err(TreeError::Unreachable { node });
        }
        Ok(Self { nodes, depth })
    }

    /// A single leaf.
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
            depth: 0,
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Largest feature index used by any split.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
                TreeNode::Leaf { value } => return value,
            }
        }
    }

    /// Adds `delta` to every leaf.
    pub fn shift_leaves(&mut self, delta: f64) {
        for n in &mut self.nodes {
            if let TreeNode::Leaf { value } = n {
                *value += delta;
            }
        }
    }
}

/// Trees whose outputs are summed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
}

impl TreeEnsemble {
    pub fn new(trees: Vec<Tree>) -> Self {
        Self { trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.trees.iter().filter_map(Tree::max_feature).max()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stump() -> Tree {
        Tree::new(vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Leaf { value: 1.0 },
            TreeNode::Leaf { value: 5.0 },
        ])
        .unwrap()
    }

    #[test]
    fn threshold_goes_left_inclusive() {
        let t = stump();
        assert_eq!(t.predict(&[0.5]), 1.0);
        assert_eq!(t.predict(&[0.500001]), 5.0);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn malformed_trees_rejected() {
        let shared_child = vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.0,
                left: 1,
                right: 1,
            },
            TreeNode::Leaf { value: 0.0 },
        ];
        assert_eq!(
            Tree::new(shared_child),
            Err(TreeError::NotATree { node: 1 })
        );
        let dangling = vec![TreeNode::Split {
            feature: 0,
            threshold: 0.0,
            left: 1,
            right: 2,
        }];
        assert!(matches!(
            Tree::new(dangling),
            Err(TreeError::ChildOutOfRange { .. })
        ));
        let orphan = vec![TreeNode::Leaf { value: 0.0 }, TreeNode::Leaf { value: 1.0 }];
        assert_eq!(Tree::new(orphan), Err(TreeError::Unreachable { node: 1 }));
        assert_eq!(Tree::new(vec![]), Err(TreeError::Empty));
    }

    #[test]
    fn too_deep_rejected() {
        // A right-leaning chain of MAX_TREE_DEPTH + 1 splits.
        let mut nodes = Vec::new();
        let splits = MAX_TREE_DEPTH + 1;
        for i in 0..splits {
            nodes.push(TreeNode::Split {
                feature: 0,
                threshold: 0.0,
                left: 2 * i + 1,
                right: 2 * i + 2,
            });
            nodes.push(TreeNode::Leaf { value: 0.0 });
        }
        nodes.push(TreeNode::Leaf { value: 0.0 });
        assert_eq!(Tree::new(nodes), Err(TreeError::TooDeep));
    }
}
