//! SHAP attributions for compute-graph models by layer-wise propagation.
//!
//! The crate is `no_std` (it needs `alloc`). It contains:
//!
//! * [`graph`]: the model representation (linear layers, elementwise
//!   activations, tree ensembles, losses) and its forward pass.
//! * [`engine`]: the propagation explainer (Rescale, RevealCancel and
//!   RevealCancel with a mean threshold), averaged over a background set.
//! * [`treeshap`]: exact single-reference interventional SHAP for tree
//!   ensembles, used as the seed when a tree sits on top of a network.
//! * [`oracle`]: brute-force interventional Shapley values for small inputs.
//! * [`samplers`]: KernelSHAP and IME sampling estimators.
//! * [`bench`]: synthetic data, small model fitting and the ablation metric.
//!
//! Everything random is driven by [`ChaCha8Rng`](rand_chacha::ChaCha8Rng)
//! seeded through `SeedableRng::seed_from_u64` (rand_chacha 0.9), so results are
//! reproducible across platforms.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub mod bench;
pub mod engine;
pub mod graph;
pub mod linalg;
pub mod oracle;
pub mod samplers;
pub mod tree;
pub mod treeshap;

pub use engine::{explain, explain_loss, explain_single, explain_stack, RuleConfig, ThresholdMode};
pub use graph::{Activation, ComputeGraph, Edge, GraphError, LossKind, Node, NodeKind};
pub use linalg::Matrix;
pub use tree::{Tree, TreeEnsemble, TreeNode};

/// A scalar-valued function of a fixed-length input vector.
///
/// Callers validate input lengths before calling [`Model::eval`].
pub trait Model {
    fn input_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

impl<M: Model + ?Sized> Model for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
}

/// Adapts a closure into a [`Model`].
pub struct FnModel<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnModel<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Model for FnModel<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// How an attribution was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Exact,
    Rescale,
    RevealCancel(ThresholdMode),
    TreeShap,
    Kernel,
    Ime,
}

/// Non-fatal events recorded while producing an attribution.
#[derive(Debug, Clone, PartialEq)]
pub enum Note {
    /// RevealCancel was requested but the activation at `node` is not fed
    /// directly by a linear layer, so Rescale was used there.
    RescaleFallback { node: String },
    /// The KernelSHAP regression was singular and coalitions were redrawn.
    Redrawn { attempts: usize },
}

/// Per-feature attribution values for one foreground sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub phi: Vec<f64>,
    pub method: Method,
    /// Model value at the foreground sample.
    pub fx: f64,
    /// Mean model value over the background samples.
    pub base: f64,
    pub per_reference: Option<Vec<Vec<f64>>>,
    pub notes: Vec<Note>,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        linalg::sum_compensated(self.phi.iter().copied())
    }

    /// `|Σφ − (f(fg) − mean f(bg))|`.
    pub fn efficiency_gap(&self) -> f64 {
        libm::fabs(self.total() - (self.fx - self.base))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("{what} has length {found}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("exhaustive enumeration supports at most {max} features, model has {n}; use a sampling estimator instead")]
    TooManyFeatures { n: usize, max: usize },
    #[error("model produced a non-finite output")]
    NonFiniteOutput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "tree ensemble node `{node}` must be the graph output (optionally followed by a loss)"
    )]
    TreeNotTerminal { node: String },
    #[error("graph has no tree ensemble node")]
    NoTreeEnsemble,
    #[error("regression system stayed singular after {attempts} draws")]
    SingularSystem { attempts: usize },
    #[error("correlation block is not positive definite (rho = {rho})")]
    NotPositiveDefinite { rho: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
