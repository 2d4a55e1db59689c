//! Minimal fitting routines for benchmark models. They only need to learn
//! the signal, not to compete with real training pipelines.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::Matrix;
use crate::tree::{Tree, TreeEnsemble, TreeNode};
use crate::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + crate::linalg::dot(&self.coef, x)
    }
}

/// Ridge regression with an unpenalised intercept; `lambda = 0` is ordinary
/// least squares.
pub fn ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<LinearFit> {
    check_len("targets", x.rows(), y.len())?;
    if x.rows() == 0 {
        return Err(Error::InvalidConfig("cannot fit on zero rows".into()));
    }
    let d = x.cols();
    let means = x.column_means();
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    let mut centred = vec![0.0; d];
    for (row, &t) in x.iter_rows().zip(y) {
        for j in 0..d {
            centred[j] = row[j] - means[j];
        }
        let yt = t - y_mean;
        for i in 0..d {
            rhs[i] += centred[i] * yt;
            for j in i..d {
                gram[(i, j)] += centred[i] * centred[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
        gram[(i, i)] += lambda;
    }
    let coef = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidConfig("ridge system is singular; raise lambda".into()))?
        .solve(&rhs);
    let coef: Vec<f64> = coef.iter().copied().collect();
    let intercept = y_mean - crate::linalg::dot(&coef, &means);
    Ok(LinearFit { coef, intercept })
}

struct TreeBuilder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64
    }

    /// Best (feature, threshold) by squared-error reduction.
    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for f in 0..self.x.cols() {
            order.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            let mut left = 0.0;
            for p in 1..n {
                left += self.y[order[p - 1]];
                if p < self.min_leaf || n - p < self.min_leaf {
                    continue;
                }
                let lo = self.x.get(order[p - 1], f);
                let hi = self.x.get(order[p], f);
                if lo == hi {
                    continue;
                }
                let right = total - left;
                let gain = left * left / p as f64 + right * right / (n - p) as f64 - parent;
                if gain > best.map_or(1e-12, |b| b.0) {
                    let mut thr = 0.5 * (lo + hi);
                    if thr >= hi {
                        thr = lo;
                    }
                    best = Some((gain, f, thr));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn build(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            value: self.leaf_value(rows),
        });
        if depth >= self.max_depth {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&row| self.x.get(row, feature) <= threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Greedy CART regression tree.
pub fn fit_regression_tree(
    x: &Matrix,
    y: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> Result<Tree> {
    check_len("targets", x.rows(), y.len())?;
    if x.rows() == 0 {
        return Err(Error::InvalidConfig("cannot fit on zero rows".into()));
    }
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut b = TreeBuilder {
        x,
        y,
        max_depth: max_depth.min(crate::tree::MAX_TREE_DEPTH),
        min_leaf: min_leaf.max(1),
        nodes: Vec::new(),
    };
    b.build(&rows, 0);
    Tree::new(b.nodes).map_err(|e| Error::InvalidConfig(alloc::format!("{e}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 4,
            learning_rate: 0.2,
            min_leaf: 5,
        }
    }
}

/// Least-squares gradient boosting. The target mean is folded into the
/// first tree's leaves, so the ensemble is a plain sum.
pub fn fit_boosted_trees(x: &Matrix, y: &[f64], cfg: &BoostConfig) -> Result<TreeEnsemble> {
    check_len("targets", x.rows(), y.len())?;
    if x.rows() == 0 || cfg.n_trees == 0 {
        return Err(Error::InvalidConfig(
            "need rows and at least one tree".into(),
        ));
    }
    let base = y.iter().sum::<f64>() / y.len() as f64;
    let mut pred = vec![base; y.len()];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let residual: Vec<f64> = y.iter().zip(&pred).map(|(a, p)| a - p).collect();
        let mut tree = fit_regression_tree(x, &residual, cfg.max_depth, cfg.min_leaf)?;
        let mut scaled = tree.nodes().to_vec();
        for n in &mut scaled {
            if let TreeNode::Leaf { value } = n {
                *value *= cfg.learning_rate;
            }
        }
        tree = Tree::new(scaled).expect("rescaling leaves keeps structure");
        for (p, row) in pred.iter_mut().zip(x.iter_rows()) {
            *p += tree.predict(row);
        }
        if t == 0 {
            tree.shift_leaves(base);
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble::new(trees))
}

/// First layer of a feature extractor: the ridge direction and its negation
/// (so a ReLU keeps both signs), followed by `hidden − 2` random Gaussian
/// projections with variance `1/d`. Returns weights (`hidden × d`) and bias.
pub fn fit_extractor(
    x: &Matrix,
    y: &[f64],
    hidden: usize,
    ridge_lambda: f64,
    seed: u64,
) -> Result<(Matrix, Vec<f64>)> {
    if hidden < 2 {
        return Err(Error::InvalidConfig(
            "extractor needs at least 2 hidden units".into(),
        ));
    }
    let fit = ridge(x, y, ridge_lambda)?;
    let d = x.cols();
    let mut w = Matrix::zeros(hidden, d);
    let mut bias = vec![0.0; hidden];
    w.row_mut(0).copy_from_slice(&fit.coef);
    for (o, c) in w.row_mut(1).iter_mut().zip(&fit.coef) {
        *o = -c;
    }
    bias[0] = fit.intercept;
    bias[1] = -fit.intercept;
    let normal = Normal::new(0.0, 1.0 / libm::sqrt(d.max(1) as f64)).expect("valid sd");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for h in 2..hidden {
        for v in w.row_mut(h) {
            *v = normal.sample(&mut rng);
        }
    }
    Ok((w, bias))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{gen_corrgroups, CorrgroupsSpec};

    #[test]
    fn least_squares_recovers_beta() {
        let spec = CorrgroupsSpec::default();
        let data = gen_corrgroups(&spec).unwrap();
        let fit = ridge(&data.x, &data.y, 0.0).unwrap();
        for (i, (b, t)) in fit.coef.iter().zip(spec.beta()).enumerate() {
            assert!((b - t).abs() <= 0.1, "coef {i} = {b}");
        }
        assert!(fit.intercept.abs() < 0.05);
    }

    #[test]
    fn tree_fits_step_function() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        let y = [1.0, 1.0, 1.0, 7.0, 7.0, 7.0];
        let t = fit_regression_tree(&x, &y, 3, 1).unwrap();
        for (row, want) in x.iter_rows().zip(y) {
            assert_eq!(t.predict(row), want);
        }
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn boosting_reduces_training_error() {
        let data = gen_corrgroups(&CorrgroupsSpec {
            n: 300,
            d: 6,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let mean = data.y.iter().sum::<f64>() / data.y.len() as f64;
        let sst: f64 = data.y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let ens = fit_boosted_trees(&data.x, &data.y, &BoostConfig::default()).unwrap();
        let sse: f64 = data
            .x
            .iter_rows()
            .zip(&data.y)
            .map(|(r, v)| (ens.predict(r) - v) * (ens.predict(r) - v))
            .sum();
        assert!(sse < 0.1 * sst, "sse {sse} sst {sst}");
    }
}
