//! Exact single-reference interventional SHAP values for tree ensembles.
//!
//! For one foreground `x` and one reference `r`, each root-to-leaf path that
//! some hybrid of `x` and `r` can reach is fully described by two disjoint
//! feature sets: `A`, features whose split decision must come from `x`, and
//! `C`, features whose decision must come from `r`. The leaf contributes
//! `v · [A ⊆ S, C ∩ S = ∅]` to the hybrid game, whose Shapley values are
//!
//! * `v · (|A|-1)! |C|! / (|A|+|C|)!` for each feature in `A`,
//! * `-v · |A|! (|C|-1)! / (|A|+|C|)!` for each feature in `C`.
//!
//! A split where `x` and `r` go the same way constrains nothing; a split on a
//! feature already in `A` or `C` is forced. Every tree node is visited at most
//! once, so the cost is `O(nodes · depth)` per reference.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{binomial, mean_of_vectors, NeumaierSum};
use crate::tree::{Tree, TreeEnsemble, TreeNode};
use crate::{check_len, Attribution, Error, Method, Result};

/// Widest ensemble input accepted.
pub const MAX_TREE_INPUT_DIM: usize = 10_000;

#[derive(Clone, Copy)]
struct Assignment {
    feature: usize,
    from_foreground: bool,
}

struct Walker<'a> {
    tree: &'a Tree,
    foreground: &'a [f64],
    background: &'a [f64],
    path: Vec<Assignment>,
    n_fg: usize,
    phi: &'a mut [f64],
}

impl Walker<'_> {
    fn visit(&mut self, id: usize) {
        match self.tree.nodes()[id] {
            TreeNode::Leaf { value } => self.credit_leaf(value),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let child = |goes_left: bool| if goes_left { left } else { right };
                if let Some(a) = self.path.iter().find(|a| a.feature == feature) {
                    let v = if a.from_foreground {
                        self.foreground[feature]
                    } else {
                        self.background[feature]
                    };
                    self.visit(child(v <= threshold));
                    return;
                }
                let fg_left = self.foreground[feature] <= threshold;
                let bg_left = self.background[feature] <= threshold;
                if fg_left == bg_left {
                    self.visit(child(fg_left));
                    return;
                }
                for from_foreground in [true, false] {
                    self.path.push(Assignment {
                        feature,
                        from_foreground,
                    });
                    self.n_fg += usize::from(from_foreground);
                    self.visit(child(if from_foreground { fg_left } else { bg_left }));
                    self.n_fg -= usize::from(from_foreground);
                    self.path.pop();
                }
            }
        }
    }

    fn credit_leaf(&mut self, value: f64) {
        let a = self.n_fg;
        let c = self.path.len() - a;
        if a > 0 {
            let w = value / (a as f64 * binomial(a + c, a));
            for p in self.path.iter().filter(|p| p.from_foreground) {
                self.phi[p.feature] += w;
            }
        }
        if c > 0 {
            let w = value / (c as f64 * binomial(a + c, c));
            for p in self.path.iter().filter(|p| !p.from_foreground) {
                self.phi[p.feature] -= w;
            }
        }
    }
}

/// Adds one tree's attributions into `phi`. Inputs must already be validated.
pub(crate) fn accumulate_tree(
    tree: &Tree,
    foreground: &[f64],
    background: &[f64],
    phi: &mut [f64],
) {
    let mut w = Walker {
        tree,
        foreground,
        background,
        path: Vec::with_capacity(tree.depth()),
        n_fg: 0,
        phi,
    };
    w.visit(0);
}

/// Unchecked ensemble attributions; summed over trees.
pub(crate) fn ensemble_phi(
    ensemble: &TreeEnsemble,
    foreground: &[f64],
    background: &[f64],
) -> Vec<f64> {
    let mut phi = vec![0.0; foreground.len()];
    for tree in &ensemble.trees {
        accumulate_tree(tree, foreground, background, &mut phi);
    }
    phi
}

fn check(ensemble: &TreeEnsemble, foreground: &[f64], background: &[f64]) -> Result<()> {
    let n = foreground.len();
    if n > MAX_TREE_INPUT_DIM {
        return Err(Error::InvalidConfig(alloc::format!(
            "tree input width {n} exceeds {MAX_TREE_INPUT_DIM}"
        )));
    }
    check_len("background", n, background.len())?;
    if let Some(f) = ensemble.max_feature() {
        if f >= n {
            return Err(Error::DimensionMismatch {
                what: "tree input",
                expected: f + 1,
                found: n,
            });
        }
    }
    Ok(())
}

/// Exact interventional SHAP values of a sum-of-trees model for one reference.
pub fn tree_shap_single_reference(
    ensemble: &TreeEnsemble,
    foreground: &[f64],
    background: &[f64],
) -> Result<Attribution> {
    check(ensemble, foreground, background)?;
    Ok(Attribution {
        phi: ensemble_phi(ensemble, foreground, background),
        method: Method::TreeShap,
        fx: ensemble.predict(foreground),
        base: ensemble.predict(background),
        per_reference: None,
        notes: Vec::new(),
    })
}

/// Mean of [`tree_shap_single_reference`] over a background set.
pub fn tree_shap_background(
    ensemble: &TreeEnsemble,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
) -> Result<Attribution> {
    if backgrounds.is_empty() {
        return Err(Error::EmptyBackground);
    }
    let mut per_reference = Vec::with_capacity(backgrounds.len());
    let mut base = NeumaierSum::default();
    for b in backgrounds {
        check(ensemble, foreground, b)?;
        per_reference.push(ensemble_phi(ensemble, foreground, b));
        base.add(ensemble.predict(b));
    }
    Ok(Attribution {
        phi: mean_of_vectors(&per_reference),
        method: Method::TreeShap,
        fx: ensemble.predict(foreground),
        base: base.total() / backgrounds.len() as f64,
        per_reference: Some(per_reference),
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::shapley_single_reference;
    use crate::FnModel;

    fn split(feature: usize, threshold: f64, left: usize, right: usize) -> TreeNode {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        }
    }

    fn leaf(value: f64) -> TreeNode {
        TreeNode::Leaf { value }
    }

    #[test]
    fn single_split() {
        let t = Tree::new(vec![split(0, 0.5, 1, 2), leaf(1.0), leaf(5.0)]).unwrap();
        let e = TreeEnsemble::new(vec![t]);
        let a = tree_shap_single_reference(&e, &[1.0], &[0.0]).unwrap();
        assert_eq!(a.phi, vec![4.0]);
    }

    #[test]
    fn depth_two_matches_enumeration() {
        // x0 <= 0.5 ? (x1 <= 0.5 ? 1 : 2) : (x1 <= 0.5 ? 3 : 10)
        let t = Tree::new(vec![
            split(0, 0.5, 1, 2),
            split(1, 0.5, 3, 4),
            split(1, 0.5, 5, 6),
            leaf(1.0),
            leaf(2.0),
            leaf(3.0),
            leaf(10.0),
        ])
        .unwrap();
        let e = TreeEnsemble::new(vec![t]);
        let a = tree_shap_single_reference(&e, &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        // v(∅)=1, v({0})=3, v({1})=2, v({0,1})=10.
        // φ0 = ½[(3-1) + (10-2)] = 5, φ1 = ½[(2-1) + (10-3)] = 4.
        assert!((a.phi[0] - 5.0).abs() < 1e-12);
        assert!((a.phi[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_feature_on_path() {
        let t = Tree::new(vec![
            split(0, 0.5, 1, 2),
            split(0, 0.2, 3, 4),
            split(1, 0.0, 5, 6),
            leaf(-1.0),
            leaf(4.0),
            leaf(7.0),
            leaf(2.0),
        ])
        .unwrap();
        let e = TreeEnsemble::new(vec![t]);
        let m = FnModel::new(2, |x: &[f64]| e.predict(x));
        for (fg, bg) in [([0.3, 1.0], [0.9, -1.0]), ([0.9, 1.0], [0.1, -1.0])] {
            let a = tree_shap_single_reference(&e, &fg, &bg).unwrap();
            let o = shapley_single_reference(&m, &fg, &bg).unwrap();
            for (x, y) in a.phi.iter().zip(&o.phi) {
                assert!((x - y).abs() < 1e-12, "{:?} vs {:?}", a.phi, o.phi);
            }
        }
    }

    #[test]
    fn ensemble_of_copies_doubles() {
        let t = Tree::new(vec![split(1, 0.0, 1, 2), leaf(2.0), leaf(-3.0)]).unwrap();
        let one = TreeEnsemble::new(vec![t.clone()]);
        let two = TreeEnsemble::new(vec![t.clone(), t]);
        let fg = [0.0, 1.0, 0.0];
        let bg = [5.0, -1.0, 2.0];
        let a = tree_shap_single_reference(&one, &fg, &bg).unwrap();
        let b = tree_shap_single_reference(&two, &fg, &bg).unwrap();
        for (x, y) in a.phi.iter().zip(&b.phi) {
            assert_eq!(2.0 * x, *y);
        }
        assert_eq!(a.phi[0], 0.0);
        assert_eq!(a.phi[2], 0.0);
    }

    #[test]
    fn rejects_short_inputs() {
        let t = Tree::new(vec![split(3, 0.0, 1, 2), leaf(0.0), leaf(1.0)]).unwrap();
        let e = TreeEnsemble::new(vec![t]);
        assert!(tree_shap_single_reference(&e, &[0.0; 2], &[0.0; 2]).is_err());
        assert!(tree_shap_single_reference(&e, &[0.0; 4], &[0.0; 3]).is_err());
        assert_eq!(
            tree_shap_background(&e, &[0.0; 4], &[]),
            Err(Error::EmptyBackground)
        );
    }
}
