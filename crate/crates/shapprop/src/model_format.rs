//! JSON model format.
//!
//! ```json
//! {
//!   "input_dim": 2,
//!   "nodes": [
//!     {"id": "x", "kind": {"type": "input", "dim": 2}},
//!     {"id": "h", "kind": {"type": "linear", "weights": [[1.0, 1.0]], "bias": [100.0]}},
//!     {"id": "y", "kind": {"type": "activation", "function": "relu"}}
//!   ],
//!   "edges": [["x", "h", 0], ["h", "y", 0]],
//!   "output": "y"
//! }
//! ```
//!
//! Node kinds: `input {dim}`, `linear {weights, bias}` with `weights` as a
//! list of rows (out × in), `activation {function}` with `relu`, `sigmoid`,
//! `tanh` or `identity`, `tree_ensemble {trees}`, and `loss {loss, target}`
//! with `squared_error`, `binary_cross_entropy` or `identity`.
//!
//! A tree is `{"nodes": [...]}` with the root first. Internal nodes are
//! `{"feature", "threshold", "left", "right"}` (children are indices into the
//! list; `x[feature] <= threshold` goes left) and leaves are `{"value"}`.

use serde::{Deserialize, Serialize};
use shapprop_core::graph::GraphError;
use shapprop_core::{
    Activation, ComputeGraph, Edge, LossKind, Matrix, Node, NodeKind, Tree, TreeEnsemble, TreeNode,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("node `{node}`: weight rows have unequal lengths")]
    RaggedWeights { node: String },
    #[error("node `{node}`: unknown {what} `{name}`")]
    UnknownName {
        node: String,
        what: &'static str,
        name: String,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    input_dim: usize,
    nodes: Vec<NodeDoc>,
    edges: Vec<(String, String, usize)>,
    output: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    kind: KindDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum KindDoc {
    Input {
        dim: usize,
    },
    Linear {
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    Activation {
        function: String,
    },
    TreeEnsemble {
        trees: Vec<TreeDoc>,
    },
    Loss {
        loss: String,
        target: f64,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    nodes: Vec<TreeNodeDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum TreeNodeDoc {
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

fn kind_from_doc(id: &str, kind: KindDoc) -> Result<NodeKind, ModelFormatError> {
    Ok(match kind {
        KindDoc::Input { dim } => NodeKind::Input { dim },
        KindDoc::Linear { weights, bias } => {
            let cols = weights.first().map_or(0, Vec::len);
            if weights.iter().any(|r| r.len() != cols) {
                return Err(ModelFormatError::RaggedWeights { node: id.into() });
            }
            let rows = weights.len();
            let flat = weights.into_iter().flatten().collect();
            let weights = Matrix::new(rows, cols, flat)
                .ok_or(ModelFormatError::RaggedWeights { node: id.into() })?;
            NodeKind::Linear { weights, bias }
        }
        KindDoc::Activation { function } => {
            NodeKind::Activation(Activation::from_name(&function).ok_or_else(|| {
                ModelFormatError::UnknownName {
                    node: id.into(),
                    what: "activation",
                    name: function,
                }
            })?)
        }
        KindDoc::TreeEnsemble { trees } => {
            let trees = trees
                .into_iter()
                .enumerate()
                .map(|(t, doc)| {
                    let nodes = doc
                        .nodes
                        .into_iter()
                        .map(|n| match n {
                            TreeNodeDoc::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => TreeNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            },
                            TreeNodeDoc::Leaf { value } => TreeNode::Leaf { value },
                        })
                        .collect();
                    Tree::new(nodes).map_err(|source| GraphError::MalformedTree {
                        node: id.into(),
                        tree: t,
                        source,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            NodeKind::TreeEnsemble(TreeEnsemble::new(trees))
        }
        KindDoc::Loss { loss, target } => NodeKind::Loss {
            kind: LossKind::from_name(&loss).ok_or_else(|| ModelFormatError::UnknownName {
                node: id.into(),
                what: "loss",
                name: loss,
            })?,
            target,
        },
    })
}

fn kind_to_doc(kind: &NodeKind) -> KindDoc {
    match kind {
        NodeKind::Input { dim } => KindDoc::Input { dim: *dim },
        NodeKind::Linear { weights, bias } => KindDoc::Linear {
            weights: weights.iter_rows().map(<[f64]>::to_vec).collect(),
            bias: bias.clone(),
        },
        NodeKind::Activation(a) => KindDoc::Activation {
            function: a.name().into(),
        },
        NodeKind::TreeEnsemble(ens) => KindDoc::TreeEnsemble {
            trees: ens
                .trees
                .iter()
                .map(|t| TreeDoc {
                    nodes: t
                        .nodes()
                        .iter()
                        .map(|n| match *n {
                            TreeNode::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => TreeNodeDoc::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            },
                            TreeNode::Leaf { value } => TreeNodeDoc::Leaf { value },
                        })
                        .collect(),
                })
                .collect(),
        },
        NodeKind::Loss { kind, target } => KindDoc::Loss {
            loss: kind.name().into(),
            target: *target,
        },
    }
}

pub fn load_model(bytes: &[u8]) -> Result<ComputeGraph, ModelFormatError> {
    let doc: ModelDoc = serde_json::from_slice(bytes)?;
    let nodes = doc
        .nodes
        .into_iter()
        .map(|n| {
            let kind = kind_from_doc(&n.id, n.kind)?;
            Ok(Node::new(n.id, kind))
        })
        .collect::<Result<Vec<_>, ModelFormatError>>()?;
    let edges = doc
        .edges
        .into_iter()
        .map(|(src, dst, slot)| Edge::new(src, dst, slot))
        .collect();
    Ok(ComputeGraph::new(doc.input_dim, nodes, edges, &doc.output)?)
}

/// Pretty-printed JSON. Floats are written in shortest round-trip form, so
/// `load_model(&save_model(g))` reproduces `g` exactly.
pub fn save_model(graph: &ComputeGraph) -> Vec<u8> {
    let doc = ModelDoc {
        input_dim: graph.input_dim(),
        nodes: graph
            .nodes()
            .iter()
            .map(|n| NodeDoc {
                id: n.id.clone(),
                kind: kind_to_doc(&n.kind),
            })
            .collect(),
        edges: graph
            .edges()
            .iter()
            .map(|e| (e.src.clone(), e.dst.clone(), e.slot))
            .collect(),
        output: graph.output_id().into(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("model document serialises");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const RELU_TOY: &str = r#"{
        "input_dim": 2,
        "nodes": [
            {"id": "x", "kind": {"type": "input", "dim": 2}},
            {"id": "h", "kind": {"type": "linear", "weights": [[1.0, 1.0]], "bias": [100.0]}},
            {"id": "y", "kind": {"type": "activation", "function": "relu"}}
        ],
        "edges": [["x", "h", 0], ["h", "y", 0]],
        "output": "y"
    }"#;

    #[test]
    fn loads_documented_example() {
        let g = load_model(RELU_TOY.as_bytes()).unwrap();
        assert_eq!(g.forward(&[-150.0, 30.0]).unwrap().output(), &[0.0]);
        assert_eq!(g.forward(&[1.0, 1.0]).unwrap().output(), &[102.0]);
    }

    #[test]
    fn round_trip_two_layer_linear() {
        let g = ComputeGraph::sequential(
            3,
            vec![
                NodeKind::Linear {
                    weights: Matrix::new(2, 3, vec![0.1, -2.0, 3.5, 1e-17, 4.0, -0.3]).unwrap(),
                    bias: vec![0.25, -1.0 / 3.0],
                },
                NodeKind::Linear {
                    weights: Matrix::new(1, 2, vec![2.0, -1.0]).unwrap(),
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        assert_eq!(load_model(&save_model(&g)).unwrap(), g);
    }

    #[test]
    fn round_trip_trees_and_loss() {
        let tree = Tree::new(vec![
            TreeNode::Split {
                feature: 1,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Leaf { value: -1.0 },
            TreeNode::Leaf { value: 2.0 },
        ])
        .unwrap();
        let g = ComputeGraph::sequential(
            2,
            vec![NodeKind::TreeEnsemble(TreeEnsemble::new(vec![tree]))],
        )
        .unwrap()
        .with_loss(LossKind::BinaryCrossEntropy, 1.0)
        .unwrap();
        assert_eq!(load_model(&save_model(&g)).unwrap(), g);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            load_model(b"{not json"),
            Err(ModelFormatError::Json(_))
        ));

        let dangling = RELU_TOY.replace(r#"["h", "y", 0]"#, r#"["h", "z", 0]"#);
        assert!(matches!(
            load_model(dangling.as_bytes()),
            Err(ModelFormatError::Graph(GraphError::DanglingEdge { .. }))
        ));

        let cycle = RELU_TOY.replace(r#"["x", "h", 0]"#, r#"["x", "h", 0], ["y", "h", 1]"#);
        assert!(matches!(
            load_model(cycle.as_bytes()),
            Err(ModelFormatError::Graph(GraphError::Cycle(_)))
        ));

        let unknown = RELU_TOY.replace("relu", "softmax");
        assert!(matches!(
            load_model(unknown.as_bytes()),
            Err(ModelFormatError::UnknownName { .. })
        ));

        let ragged = RELU_TOY.replace("[[1.0, 1.0]]", "[[1.0, 1.0], [2.0]]");
        assert!(matches!(
            load_model(ragged.as_bytes()),
            Err(ModelFormatError::RaggedWeights { .. })
        ));
    }

    #[test]
    fn linear_feeding_activation_dims() {
        let doc = |consumer_cols: &str| {
            format!(
                r#"{{
                "input_dim": 3,
                "nodes": [
                    {{"id": "x", "kind": {{"type": "input", "dim": 3}}}},
                    {{"id": "a", "kind": {{"type": "linear", "weights": [[1,2,3],[4,5,6]], "bias": [0,0]}}}},
                    {{"id": "g", "kind": {{"type": "activation", "function": "tanh"}}}},
                    {{"id": "b", "kind": {{"type": "linear", "weights": [{consumer_cols}], "bias": [0]}}}}
                ],
                "edges": [["x", "a", 0], ["a", "g", 0], ["g", "b", 0]],
                "output": "b"
            }}"#
            )
        };
        assert!(load_model(doc("[1, 1]").as_bytes()).is_ok());
        assert!(matches!(
            load_model(doc("[1, 1, 1]").as_bytes()),
            Err(ModelFormatError::Graph(
                GraphError::DimensionMismatch { .. }
            ))
        ));
    }
}
