//! Compute-graph models: typed nodes wired into a DAG, evaluated in
//! topological order.
//!
//! A node with several input slots sees the concatenation of its producers'
//! outputs in slot order. Graphs are validated once in [`ComputeGraph::new`]
//! and immutable afterwards.

use alloc::borrow::Cow;
use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use thiserror::Error;

use crate::linalg::Matrix;
use crate::tree::{TreeEnsemble, TreeError};
use crate::Model;

/// Elementwise scalar nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Relu,
        Activation::Sigmoid,
        Activation::Tanh,
        Activation::Identity,
    ];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Tanh => libm::tanh(z),
            Activation::Identity => z,
        }
    }

    /// Analytic derivative; ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = libm::tanh(z);
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Losses applied to a scalar model output.
///
/// `BinaryCrossEntropy` takes the model output as a logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    SquaredError,
    BinaryCrossEntropy,
    Identity,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [
        LossKind::SquaredError,
        LossKind::BinaryCrossEntropy,
        LossKind::Identity,
    ];

    #[inline]
    pub fn apply(self, z: f64, target: f64) -> f64 {
        match self {
            LossKind::SquaredError => (z - target) * (z - target),
            // softplus(z) - target * z, written to avoid overflow.
            LossKind::BinaryCrossEntropy => {
                z.max(0.0) + libm::log1p(libm::exp(-libm::fabs(z))) - target * z
            }
            LossKind::Identity => z,
        }
    }

    #[inline]
    pub fn derivative(self, z: f64, target: f64) -> f64 {
        match self {
            LossKind::SquaredError => 2.0 * (z - target),
            LossKind::BinaryCrossEntropy => sigmoid(z) - target,
            LossKind::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SquaredError => "squared_error",
            LossKind::BinaryCrossEntropy => "binary_cross_entropy",
            LossKind::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Input {
        dim: usize,
    },
    /// `y = W x + b` with `W` of shape out × in.
    Linear {
        weights: Matrix,
        bias: Vec<f64>,
    },
    Activation(Activation),
    TreeEnsemble(TreeEnsemble),
    Loss {
        kind: LossKind,
        target: f64,
    },
}

impl NodeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::Input { .. } => "input",
            NodeKind::Linear { .. } => "linear",
            NodeKind::Activation(_) => "activation",
            NodeKind::TreeEnsemble(_) => "tree_ensemble",
            NodeKind::Loss { .. } => "loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
        }
    }
}

/// `src` feeds input slot `slot` of `dst`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub slot: usize,
}

impl Edge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, slot: usize) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            slot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateId(String),
    #[error("edge `{src}` -> `{dst}` references an unknown node")]
    DanglingEdge { src: String, dst: String },
    #[error("graph contains a cycle through node `{0}`")]
    Cycle(String),
    #[error("output node `{0}` does not exist")]
    UnknownOutput(String),
    #[error("graph must contain exactly one input node, found {0}")]
    InputCount(usize),
    #[error("input node `{node}` has an incoming edge")]
    EdgeIntoInput { node: String },
    #[error("node `{node}` has no incoming edges")]
    Unwired { node: String },
    #[error("node `{node}` input slot {slot} is missing or wired twice")]
    SlotConflict { node: String, slot: usize },
    #[error("dimension mismatch at node `{node}`: expected {expected}, found {found}")]
    DimensionMismatch {
        node: String,
        expected: usize,
        found: usize,
    },
    #[error("node `{node}` has non-finite parameters")]
    NonFiniteParameter { node: String },
    #[error("input sample has a non-finite entry at feature {0}")]
    NonFiniteInput(usize),
    #[error("loss node `{node}` must be the graph output")]
    LossNotOutput { node: String },
    #[error("tree {tree} in node `{node}`: {source}")]
    MalformedTree {
        node: String,
        tree: usize,
        source: TreeError,
    },
    #[error("output index {index} out of range for output of width {width}")]
    OutputIndex { index: usize, width: usize },
}

/// Output vectors of every node for one forward pass, in node order.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    values: Vec<Vec<f64>>,
    output: usize,
}

impl ActivationRecord {
    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn output(&self) -> &[f64] {
        &self.values[self.output]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeGraph {
    input_dim: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    output: usize,
    input_node: usize,
    /// Producer node indices per node, ordered by slot.
    producers: Vec<Vec<usize>>,
    /// Consumer node indices per node.
    consumers: Vec<Vec<usize>>,
    out_dims: Vec<usize>,
}

impl ComputeGraph {
    /// Validates and builds a graph. Nodes are stably re-sorted into
    /// topological order if they are not already.
    pub fn new(
        input_dim: usize,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        output: &str,
    ) -> Result<Self, GraphError> {
        let n = nodes.len();
        let index_of = |id: &str| nodes.iter().position(|node| node.id == id);
        for (i, node) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|other| other.id == node.id) {
                return Err(GraphError::DuplicateId(node.id.clone()));
            }
        }

        // slot -> producer, per destination
        let mut slots: Vec<Vec<Option<usize>>> = vec![Vec::new(); n];
        for e in &edges {
            let (Some(src), Some(dst)) = (index_of(&e.src), index_of(&e.dst)) else {
                return Err(GraphError::DanglingEdge {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                });
            };
            if matches!(nodes[dst].kind, NodeKind::Input { .. }) {
                return Err(GraphError::EdgeIntoInput {
                    node: e.dst.clone(),
                });
            }
            let s = &mut slots[dst];
            if s.len() <= e.slot {
                s.resize(e.slot + 1, None);
            }
            if s[e.slot].replace(src).is_some() {
                return Err(GraphError::SlotConflict {
                    node: e.dst.clone(),
                    slot: e.slot,
                });
            }
        }
        let mut producers = Vec::with_capacity(n);
        for (i, s) in slots.into_iter().enumerate() {
            let is_input = matches!(nodes[i].kind, NodeKind::Input { .. });
            if !is_input && s.is_empty() {
                return Err(GraphError::Unwired {
                    node: nodes[i].id.clone(),
                });
            }
            let mut p = Vec::with_capacity(s.len());
            for (slot, src) in s.into_iter().enumerate() {
                p.push(src.ok_or_else(|| GraphError::SlotConflict {
                    node: nodes[i].id.clone(),
                    slot,
                })?);
            }
            producers.push(p);
        }

        // Kahn's algorithm, always taking the smallest available original index
        // so an already-sorted list is left untouched.
        let mut indegree: Vec<usize> = producers.iter().map(Vec::len).collect();
        let mut consumers_orig: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (dst, p) in producers.iter().enumerate() {
            for &src in p {
                consumers_orig[src].push(dst);
            }
        }
        let mut ready: BinaryHeap<Reverse<usize>> = indegree
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0)
            .map(|(i, _)| Reverse(i))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            for &c in &consumers_orig[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|i| indegree[*i] > 0).unwrap_or(0);
            return Err(GraphError::Cycle(nodes[stuck].id.clone()));
        }
        let mut new_pos = vec![0; n];
        for (pos, &old) in order.iter().enumerate() {
            new_pos[old] = pos;
        }
        let mut slots_nodes: Vec<Option<Node>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<Node> = order
            .iter()
            .map(|&old| slots_nodes[old].take().expect("each node placed once"))
            .collect();
        let producers: Vec<Vec<usize>> = order
            .iter()
            .map(|&old| producers[old].iter().map(|&p| new_pos[p]).collect())
            .collect();
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (dst, p) in producers.iter().enumerate() {
            for &src in p {
                consumers[src].push(dst);
            }
        }

        let output = nodes
            .iter()
            .position(|node| node.id == output)
            .ok_or_else(|| GraphError::UnknownOutput(output.to_string()))?;

        let inputs: Vec<usize> = nodes
            .iter()
            .enumerate()
            .filter(|(_, node)| matches!(node.kind, NodeKind::Input { .. }))
            .map(|(i, _)| i)
            .collect();
        if inputs.len() != 1 {
            return Err(GraphError::InputCount(inputs.len()));
        }
        let input_node = inputs[0];

        let mut out_dims = vec![0; n];
        for (i, node) in nodes.iter().enumerate() {
            let in_dim: usize = producers[i].iter().map(|&p| out_dims[p]).sum();
            let mismatch = |expected: usize, found: usize| GraphError::DimensionMismatch {
                node: node.id.clone(),
                expected,
                found,
            };
            out_dims[i] = match &node.kind {
                NodeKind::Input { dim } => {
                    if *dim != input_dim {
                        return Err(mismatch(input_dim, *dim));
                    }
                    *dim
                }
                NodeKind::Linear { weights, bias } => {
                    if weights.cols() != in_dim {
                        return Err(mismatch(weights.cols(), in_dim));
                    }
                    if bias.len() != weights.rows() {
                        return Err(mismatch(weights.rows(), bias.len()));
                    }
                    if !weights.as_slice().iter().chain(bias).all(|v| v.is_finite()) {
                        return Err(GraphError::NonFiniteParameter {
                            node: node.id.clone(),
                        });
                    }
                    weights.rows()
                }
                NodeKind::Activation(_) => in_dim,
                NodeKind::TreeEnsemble(ens) => {
                    if let Some(f) = ens.max_feature() {
                        if f >= in_dim {
                            return Err(mismatch(in_dim, f + 1));
                        }
                    }
                    1
                }
                NodeKind::Loss { target, .. } => {
                    if in_dim != 1 {
                        return Err(mismatch(1, in_dim));
                    }
                    if i != output {
                        return Err(GraphError::LossNotOutput {
                            node: node.id.clone(),
                        });
                    }
                    if !target.is_finite() {
                        return Err(GraphError::NonFiniteParameter {
                            node: node.id.clone(),
                        });
                    }
                    1
                }
            };
        }

        Ok(Self {
            input_dim,
            nodes,
            edges,
            output,
            input_node,
            producers,
            consumers,
            out_dims,
        })
    }

    /// Builds a chain `input -> layers[0] -> layers[1] -> ...` with ids
    /// `input`, `n1`, `n2`, ...; the last layer is the output.
    pub fn sequential(input_dim: usize, layers: Vec<NodeKind>) -> Result<Self, GraphError> {
        let mut nodes = vec![Node::new("input", NodeKind::Input { dim: input_dim })];
        let mut edges = Vec::new();
        for (k, kind) in layers.into_iter().enumerate() {
            let id = format!("n{}", k + 1);
            edges.push(Edge::new(nodes[k].id.clone(), id.clone(), 0));
            nodes.push(Node::new(id, kind));
        }
        let output = nodes.last().map(|n| n.id.clone()).unwrap_or_default();
        Self::new(input_dim, nodes, edges, &output)
    }

    /// Returns a copy of this graph with a loss node appended after the
    /// output. The output must be scalar.
    pub fn with_loss(&self, kind: LossKind, target: f64) -> Result<Self, GraphError> {
        let width = self.output_dim();
        if width != 1 {
            return Err(GraphError::DimensionMismatch {
                node: self.nodes[self.output].id.clone(),
                expected: 1,
                found: width,
            });
        }
        let mut id = String::from("loss");
        while self.nodes.iter().any(|n| n.id == id) {
            id.push('_');
        }
        let mut nodes = self.nodes.clone();
        let mut edges = self.edges.clone();
        edges.push(Edge::new(self.nodes[self.output].id.clone(), id.clone(), 0));
        nodes.push(Node::new(id.clone(), NodeKind::Loss { kind, target }));
        Self::new(self.input_dim, nodes, edges, &id)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn output_node(&self) -> usize {
        self.output
    }

    pub fn output_id(&self) -> &str {
        &self.nodes[self.output].id
    }

    pub fn output_dim(&self) -> usize {
        self.out_dims[self.output]
    }

    pub fn input_node(&self) -> usize {
        self.input_node
    }

    pub fn producers(&self, node: usize) -> &[usize] {
        &self.producers[node]
    }

    pub fn consumers(&self, node: usize) -> &[usize] {
        &self.consumers[node]
    }

    pub fn out_dim(&self, node: usize) -> usize {
        self.out_dims[node]
    }

    /// Evaluates every node. Deterministic: the same graph and input give
    /// bit-identical records.
    pub fn forward(&self, x: &[f64]) -> Result<ActivationRecord, GraphError> {
        self.check_sample(x)?;
        Ok(self.forward_unchecked(x))
    }

    /// Checks a sample's length and finiteness.
    pub fn check_sample(&self, x: &[f64]) -> Result<(), GraphError> {
        if x.len() != self.input_dim {
            return Err(GraphError::DimensionMismatch {
                node: self.nodes[self.input_node].id.clone(),
                expected: self.input_dim,
                found: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(GraphError::NonFiniteInput(i));
        }
        Ok(())
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> ActivationRecord {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let out = match &node.kind {
                NodeKind::Input { .. } => x.to_vec(),
                kind => {
                    let input = gather(&self.producers[i], &values);
                    match kind {
                        NodeKind::Linear { weights, bias } => {
                            let mut y = weights.mul_vec(&input);
                            for (v, b) in y.iter_mut().zip(bias) {
                                *v += b;
                            }
                            y
                        }
                        NodeKind::Activation(a) => input.iter().map(|&z| a.apply(z)).collect(),
                        NodeKind::TreeEnsemble(ens) => vec![ens.predict(&input)],
                        NodeKind::Loss { kind, target } => vec![kind.apply(input[0], *target)],
                        NodeKind::Input { .. } => unreachable!(),
                    }
                }
            };
            values.push(out);
        }
        ActivationRecord {
            values,
            output: self.output,
        }
    }

    /// Concatenated input vector of `node` in a recorded forward pass.
    pub fn node_input<'r>(&self, node: usize, record: &'r ActivationRecord) -> Cow<'r, [f64]> {
        gather(&self.producers[node], &record.values)
    }

    /// Scalar view of output coordinate `index`.
    pub fn output_model(&self, index: usize) -> Result<GraphOutput<'_>, GraphError> {
        let width = self.output_dim();
        if index >= width {
            return Err(GraphError::OutputIndex { index, width });
        }
        Ok(GraphOutput { graph: self, index })
    }

    /// True if the graph has only input, linear and identity-activation nodes.
    pub fn is_affine(&self) -> bool {
        self.nodes.iter().all(|n| {
            matches!(
                n.kind,
                NodeKind::Input { .. }
                    | NodeKind::Linear { .. }
                    | NodeKind::Activation(Activation::Identity)
            )
        })
    }
}

fn gather<'v>(producers: &[usize], values: &'v [Vec<f64>]) -> Cow<'v, [f64]> {
    match producers {
        [single] => Cow::Borrowed(&values[*single]),
        many => Cow::Owned(
            many.iter()
                .flat_map(|&p| values[p].iter().copied())
                .collect(),
        ),
    }
}

/// One scalar output coordinate of a graph, viewed as a [`Model`].
#[derive(Debug, Clone, Copy)]
pub struct GraphOutput<'g> {
    graph: &'g ComputeGraph,
    index: usize,
}

impl<'g> GraphOutput<'g> {
    pub fn graph(&self) -> &'g ComputeGraph {
        self.graph
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

impl Model for GraphOutput<'_> {
    fn input_dim(&self) -> usize {
        self.graph.input_dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.graph.forward_unchecked(x).output()[self.index]
    }
}
