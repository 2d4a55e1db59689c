//! Random models shared by the integration tests.
#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use shapprop_core::{
    Activation, ComputeGraph, Edge, Matrix, Node, NodeKind, Tree, TreeEnsemble, TreeNode,
};

pub const NONLINEAR: [Activation; 3] = [Activation::Relu, Activation::Sigmoid, Activation::Tanh];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect::<Vec<f64>>()
}

fn linear(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> NodeKind {
    let scale = 1.0 / (inp as f64).sqrt();
    NodeKind::Linear {
        weights: Matrix::new(out, inp, normal_vec(rng, out * inp, 1.5 * scale)).unwrap(),
        bias: normal_vec(rng, out, 0.5),
    }
}

/// Chain of 1..=3 `Linear → activation` layers on 1..=8 inputs with a scalar
/// output. Activations are drawn per layer.
pub fn random_mlp(rng: &mut ChaCha8Rng) -> ComputeGraph {
    let d = rng.random_range(1..=8);
    let layers = rng.random_range(1..=3);
    let mut kinds = Vec::new();
    let mut width = d;
    for l in 0..layers {
        let out = if l + 1 == layers {
            1
        } else {
            rng.random_range(1..=6)
        };
        kinds.push(linear(rng, out, width));
        kinds.push(NodeKind::Activation(*NONLINEAR.choose(rng).unwrap()));
        width = out;
    }
    ComputeGraph::sequential(d, kinds).unwrap()
}

/// Two parallel branches from the input whose outputs are concatenated into
/// a final `Linear → activation` head.
pub fn random_branching(rng: &mut ChaCha8Rng) -> ComputeGraph {
    let d = rng.random_range(2..=8);
    let (wa, wb) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let nodes = vec![
        Node::new(
            "head_act",
            NodeKind::Activation(*NONLINEAR.choose(rng).unwrap()),
        ),
        Node::new("x", NodeKind::Input { dim: d }),
        Node::new("a", linear(rng, wa, d)),
        Node::new(
            "a_act",
            NodeKind::Activation(*NONLINEAR.choose(rng).unwrap()),
        ),
        Node::new("b", linear(rng, wb, d)),
        Node::new(
            "b_act",
            NodeKind::Activation(*NONLINEAR.choose(rng).unwrap()),
        ),
        Node::new("head", linear(rng, 1, wa + wb)),
    ];
    let edges = vec![
        Edge::new("x", "a", 0),
        Edge::new("a", "a_act", 0),
        Edge::new("x", "b", 0),
        Edge::new("b", "b_act", 0),
        Edge::new("b_act", "head", 1),
        Edge::new("a_act", "head", 0),
        Edge::new("head", "head_act", 0),
    ];
    ComputeGraph::new(d, nodes, edges, "head_act").unwrap()
}

/// A random MLP, or a branching graph one time in four.
pub fn random_graph(rng: &mut ChaCha8Rng) -> ComputeGraph {
    if rng.random_bool(0.25) {
        random_branching(rng)
    } else {
        random_mlp(rng)
    }
}

/// 1..=3 stacked linear layers with no nonlinearity.
pub fn random_linear(rng: &mut ChaCha8Rng) -> ComputeGraph {
    let d = rng.random_range(1..=8);
    let layers = rng.random_range(1..=3);
    let mut kinds = Vec::new();
    let mut width = d;
    for l in 0..layers {
        let out = if l + 1 == layers {
            1
        } else {
            rng.random_range(1..=5)
        };
        kinds.push(linear(rng, out, width));
        if rng.random_bool(0.3) {
            kinds.push(NodeKind::Activation(Activation::Identity));
        }
        width = out;
    }
    ComputeGraph::sequential(d, kinds).unwrap()
}

pub fn samples(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| normal_vec(rng, d, 1.0)).collect()
}

fn grow(
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<TreeNode>,
    n_features: usize,
    depth: usize,
    max_depth: usize,
) -> usize {
    let id = nodes.len();
    nodes.push(TreeNode::Leaf {
        value: StandardNormal.sample(rng),
    });
    if depth < max_depth && (depth == 0 || rng.random_bool(0.75)) {
        let feature = rng.random_range(0..n_features);
        let threshold: f64 = StandardNormal.sample(rng);
        let left = grow(rng, nodes, n_features, depth + 1, max_depth);
        let right = grow(rng, nodes, n_features, depth + 1, max_depth);
        nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
    }
    id
}

/// Random tree over `n_features` inputs with depth at most `max_depth`.
/// Features may repeat along a path.
pub fn random_tree(rng: &mut ChaCha8Rng, n_features: usize, max_depth: usize) -> Tree {
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, n_features, 0, max_depth);
    Tree::new(nodes).unwrap()
}

pub fn random_ensemble(
    rng: &mut ChaCha8Rng,
    n_features: usize,
    n_trees: usize,
    max_depth: usize,
) -> TreeEnsemble {
    TreeEnsemble::new(
        (0..n_trees)
            .map(|_| random_tree(rng, n_features, max_depth))
            .collect(),
    )
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
