//! Desk-scale experiments: correlated synthetic data, small model fitting,
//! the keep-absolute (mask) ablation metric and the RevealCancel toy study.

mod ablation;
mod corrgroups;
mod fit;
mod kmeans;
mod stack;
mod toy;

use alloc::vec::Vec;

use crate::linalg::Matrix;

pub use ablation::{keep_absolute_mask, r_squared, random_attributions, AblationCurve};
pub use corrgroups::{gen_corrgroups, CorrgroupsSpec};
pub use fit::{
    fit_boosted_trees, fit_extractor, fit_regression_tree, ridge, BoostConfig, LinearFit,
};
pub use kmeans::kmeans;
pub use stack::{fit_stack, run_stack_ablation, StackConfig, StackReport};
pub use toy::{toy_graph, toy_revealcancel_study, ToyStudy, TOY_RULES};

/// Feature matrix with its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    /// Splits rows `[0, at)` and `[at, n)`.
    pub fn split_at(&self, at: usize) -> (Dataset, Dataset) {
        let at = at.min(self.x.rows());
        let d = self.x.cols();
        let (a, b) = self.x.as_slice().split_at(at * d);
        (
            Dataset {
                x: Matrix::new(at, d, a.to_vec()).expect("row split"),
                y: self.y[..at].to_vec(),
            },
            Dataset {
                x: Matrix::new(self.x.rows() - at, d, b.to_vec()).expect("row split"),
                y: self.y[at..].to_vec(),
            },
        )
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.x.iter_rows().map(<[f64]>::to_vec).collect()
    }
}
