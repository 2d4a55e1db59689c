use alloc::vec::Vec;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::linalg::Matrix;
use crate::{Error, Result};

/// Parameters of the correlated-triples regression dataset.
///
/// Features come in consecutive triples `(3g, 3g+1, 3g+2)` with pairwise
/// correlation `rho` inside a triple and independence across triples. All
/// features are standard normal. The label is `y = Σ_{i mod 3 = 0} xᵢ + ε`
/// with `ε ~ N(0, noise_var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrgroupsSpec {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for CorrgroupsSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 60,
            rho: 0.99,
            noise_var: 1e-4,
            seed: 0,
        }
    }
}

impl CorrgroupsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !self.d.is_multiple_of(3) {
            return Err(Error::InvalidConfig(alloc::format!(
                "d must be a positive multiple of 3, got {}",
                self.d
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(alloc::format!(
                "rho must lie in [0, 1), got {}",
                self.rho
            )));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise_var must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    /// True coefficient vector: 1 on features with index ≡ 0 (mod 3).
    pub fn beta(&self) -> Vec<f64> {
        (0..self.d)
            .map(|i| if i % 3 == 0 { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Draws a dataset; deterministic in `spec.seed`.
pub fn gen_corrgroups(spec: &CorrgroupsSpec) -> Result<Dataset> {
    spec.validate()?;
    let r = spec.rho;
    let block = Matrix3::new(1.0, r, r, r, 1.0, r, r, r, 1.0);
    let chol = block
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { rho: r })?;
    let l = chol.l();
    // Cholesky of a matrix that is only semi-definite in exact arithmetic can
    // still succeed with a zero pivot.
    if (0..3).any(|i| l[(i, i)].is_nan() || l[(i, i)] <= 1e-12) {
        return Err(Error::NotPositiveDefinite { rho: r });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise_sd = libm::sqrt(spec.noise_var);
    let beta = spec.beta();
    let mut x = Matrix::zeros(spec.n, spec.d);
    let mut y = Vec::with_capacity(spec.n);
    for row in 0..spec.n {
        let xr = x.row_mut(row);
        for g in 0..spec.d / 3 {
            let z: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            for i in 0..3 {
                xr[3 * g + i] = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
            }
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        let signal: f64 = xr.iter().zip(&beta).map(|(a, b)| a * b).sum();
        y.push(signal + noise_sd * eps);
    }
    Ok(Dataset { x, y })
}
