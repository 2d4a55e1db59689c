use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Matrix, NeumaierSum};
use crate::{check_len, Model, Result};

/// Model quality as features are unmasked one at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCurve {
    pub method: String,
    /// `(features_kept, r_squared)` for `features_kept = 0..=d`.
    pub points: Vec<(usize, f64)>,
}

impl AblationCurve {
    /// Trapezoidal area under the curve with the x-axis scaled to `[0, 1]`.
    pub fn area(&self) -> f64 {
        let d = self.points.last().map_or(0, |p| p.0);
        if d == 0 {
            return self.points.first().map_or(0.0, |p| p.1);
        }
        let mut acc = NeumaierSum::default();
        for w in self.points.windows(2) {
            let width = (w[1].0 - w[0].0) as f64;
            acc.add(0.5 * width * (w[0].1 + w[1].1));
        }
        acc.total() / d as f64
    }
}

/// Coefficient of determination of `pred` against `y`.
pub fn r_squared(pred: &[f64], y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut ss_res = NeumaierSum::default();
    let mut ss_tot = NeumaierSum::default();
    for (p, t) in pred.iter().zip(y) {
        ss_res.add((t - p) * (t - p));
        ss_tot.add((t - mean) * (t - mean));
    }
    let (res, tot) = (ss_res.total(), ss_tot.total());
    if tot == 0.0 {
        return if res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - res / tot
}

/// Keep-absolute (mask) ablation.
///
/// Every feature starts replaced by its training mean. At step `k` each test
/// sample has its own `k` largest-`|φ|` features restored (ties broken by
/// lower index), and the model's R² against `y_test` is recorded.
pub fn keep_absolute_mask<M: Model>(
    model: &M,
    method: &str,
    attributions: &[Vec<f64>],
    x_test: &Matrix,
    y_test: &[f64],
    train_means: &[f64],
) -> Result<AblationCurve> {
    let d = x_test.cols();
    check_len("attribution rows", x_test.rows(), attributions.len())?;
    check_len("test targets", x_test.rows(), y_test.len())?;
    check_len("training means", d, train_means.len())?;
    check_len("model input", d, model.input_dim())?;
    for a in attributions {
        check_len("attribution width", d, a.len())?;
    }

    // preds[k][s] = prediction for sample s with k features kept.
    let mut preds = vec![vec![0.0; x_test.rows()]; d + 1];
    let mut x = vec![0.0; d];
    let mut order: Vec<usize> = (0..d).collect();
    for (s, (row, phi)) in x_test.iter_rows().zip(attributions).enumerate() {
        order.sort_by(|&a, &b| {
            libm::fabs(phi[b])
                .total_cmp(&libm::fabs(phi[a]))
                .then(a.cmp(&b))
        });
        x.copy_from_slice(train_means);
        preds[0][s] = model.eval(&x);
        for (k, &f) in order.iter().enumerate() {
            x[f] = row[f];
            preds[k + 1][s] = model.eval(&x);
        }
    }
    Ok(AblationCurve {
        method: method.into(),
        points: preds
            .iter()
            .enumerate()
            .map(|(k, p)| (k, r_squared(p, y_test)))
            .collect(),
    })
}

/// Uniform `[0, 1)` scores, the random-ordering baseline for the ablation.
pub fn random_attributions(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random::<f64>()).collect())
        .collect()
}
