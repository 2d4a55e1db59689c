use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's k-means with `k` distinct rows drawn as initial centres,
/// at most 100 iterations. Returns the centres, one per row. An empty
/// cluster keeps its previous centre. With `k >= rows` the rows are
/// returned unchanged.
pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = x.rows();
    if k == 0 || n == 0 {
        return Err(Error::InvalidConfig(
            "k-means needs k > 0 and at least one row".into(),
        ));
    }
    if k >= n {
        return Ok(x.iter_rows().map(<[f64]>::to_vec).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = rand::seq::index::sample(&mut rng, n, k).into_vec();
    init.sort_unstable();
    let mut centres: Vec<Vec<f64>> = init.iter().map(|&r| x.row(r).to_vec()).collect();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (r, row) in x.iter_rows().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(row, &centres[a]).total_cmp(&sq_dist(row, &centres[b])))
                .expect("k > 0");
            if assign[r] != best {
                assign[r] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; x.cols()]; k];
        let mut counts = vec![0usize; k];
        for (row, &c) in x.iter_rows().zip(&assign) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centres[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    Ok(centres)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(vec![0.0 + 0.01 * i as f64, 0.0]);
            rows.push(vec![10.0 + 0.01 * i as f64, 5.0]);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let mut c = kmeans(&x, 2, 3).unwrap();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!((c[0][0] - 0.045).abs() < 1e-12 && c[0][1] == 0.0);
        assert!((c[1][0] - 10.045).abs() < 1e-12 && c[1][1] == 5.0);
        assert_eq!(kmeans(&x, 2, 3).unwrap(), kmeans(&x, 2, 3).unwrap());
    }

    #[test]
    fn small_inputs() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert_eq!(kmeans(&x, 5, 0).unwrap(), vec![vec![1.0], vec![2.0]]);
        assert!(kmeans(&x, 0, 0).is_err());
    }
}
