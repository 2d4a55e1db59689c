use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{explain_single, RuleConfig, ThresholdMode};
use crate::graph::{Activation, ComputeGraph, NodeKind};
use crate::linalg::Matrix;
use crate::oracle::shapley_single_reference;
use crate::Result;

/// Rule names in the column order of [`ToyStudy::errors`].
pub const TOY_RULES: [&str; 3] = ["rescale", "revealcancel", "revealcancel-mean"];

const TOY_FEATURES: usize = 4;
const TOY_BIAS: f64 = 100.0;
const TOY_RANGE: i32 = 1000;

/// `ReLU(x₁ + x₂ + x₃ + x₄ + 100)`.
pub fn toy_graph() -> ComputeGraph {
    ComputeGraph::sequential(
        TOY_FEATURES,
        alloc::vec![
            NodeKind::Linear {
                weights: Matrix::new(1, TOY_FEATURES, alloc::vec![1.0; TOY_FEATURES])
                    .expect("shape"),
                bias: alloc::vec![TOY_BIAS],
            },
            NodeKind::Activation(Activation::Relu),
        ],
    )
    .expect("toy graph is valid")
}

/// Per-sample mean absolute error against exact Shapley values for each
/// propagation rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyStudy {
    pub seed: u64,
    pub foregrounds: Vec<[f64; TOY_FEATURES]>,
    pub oracle: Vec<[f64; TOY_FEATURES]>,
    /// Columns follow [`TOY_RULES`].
    pub errors: Vec<[f64; 3]>,
}

impl ToyStudy {
    /// Mean error per rule over all samples.
    pub fn aggregate(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for e in &self.errors {
            for (o, v) in out.iter_mut().zip(e) {
                *o += v;
            }
        }
        out.map(|v| v / self.errors.len().max(1) as f64)
    }
}

/// Explains the toy ReLU model at `n_samples` foregrounds with integer
/// coordinates uniform on `[-1000, 1000]`, against a zero background.
pub fn toy_revealcancel_study(seed: u64, n_samples: usize) -> Result<ToyStudy> {
    let graph = toy_graph();
    let model = graph.output_model(0)?;
    let rules = [
        RuleConfig::rescale(),
        RuleConfig::reveal_cancel(ThresholdMode::Zero),
        RuleConfig::reveal_cancel(ThresholdMode::Mean),
    ];
    let background = [0.0; TOY_FEATURES];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut study = ToyStudy {
        seed,
        foregrounds: Vec::with_capacity(n_samples),
        oracle: Vec::with_capacity(n_samples),
        errors: Vec::with_capacity(n_samples),
    };
    for _ in 0..n_samples {
        let fg: [f64; TOY_FEATURES] =
            core::array::from_fn(|_| f64::from(rng.random_range(-TOY_RANGE..=TOY_RANGE)));
        let exact = shapley_single_reference(&model, &fg, &background)?.phi;
        let mut errs = [0.0; 3];
        for (e, rule) in errs.iter_mut().zip(&rules) {
            let phi = explain_single(&graph, &fg, &background, rule)?.phi;
            *e = phi
                .iter()
                .zip(&exact)
                .map(|(a, b)| libm::fabs(a - b))
                .sum::<f64>()
                / TOY_FEATURES as f64;
        }
        study.foregrounds.push(fg);
        study.oracle.push(core::array::from_fn(|i| exact[i]));
        study.errors.push(errs);
    }
    Ok(study)
}
