//! Exact interventional Shapley values by enumerating every coalition.
//!
//! For a foreground `x` and background `x'`, the hybrid sample for a
//! coalition `S` takes features in `S` from `x` and the rest from `x'`.
//! Shapley values are computed from all `2^n` hybrid evaluations with the
//! subset weights `s!(n-s-1)!/n!`, which is cheaper than, and equal to, the
//! average over all `n!` orderings.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{ln_factorials, mean_of_vectors, NeumaierSum};
use crate::{check_len, Attribution, Error, Method, Model, Result};

/// Largest input width the enumerating oracle accepts.
pub const MAX_EXACT_FEATURES: usize = 20;

/// A coalition of features as a bit set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CoalitionMask(u32);

impl CoalitionMask {
    pub const EMPTY: Self = Self(0);

    pub fn from_bits(bits: u32) -> Self {
        Self(bits)
    }

    pub fn full(n: usize) -> Self {
        Self(if n >= 32 { u32::MAX } else { (1u32 << n) - 1 })
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn with(self, i: usize) -> Self {
        Self(self.0 | 1 << i)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

/// Writes the hybrid sample for `mask` into `out`: feature `i` comes from
/// `foreground` iff `i` is in the coalition.
#[inline]
pub fn fill_hybrid(foreground: &[f64], background: &[f64], mask: CoalitionMask, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = if mask.contains(i) {
            foreground[i]
        } else {
            background[i]
        };
    }
}

pub fn hybrid(foreground: &[f64], background: &[f64], mask: CoalitionMask) -> Vec<f64> {
    let mut out = vec![0.0; foreground.len()];
    fill_hybrid(foreground, background, mask, &mut out);
    out
}

fn check_inputs<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
) -> Result<usize> {
    let n = model.input_dim();
    if n > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            n,
            max: MAX_EXACT_FEATURES,
        });
    }
    check_len("foreground", n, foreground.len())?;
    if backgrounds.is_empty() {
        return Err(Error::EmptyBackground);
    }
    for b in backgrounds {
        check_len("background", n, b.len())?;
    }
    Ok(n)
}

/// Evaluates the coalition game `v(S)` for every mask, averaging over the
/// backgrounds.
fn coalition_values<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    n: usize,
) -> Result<Vec<f64>> {
    let mut buf = vec![0.0; n];
    let mut values = Vec::with_capacity(1 << n);
    for bits in 0..(1u32 << n) {
        let mask = CoalitionMask(bits);
        let mut acc = NeumaierSum::default();
        for b in backgrounds {
            fill_hybrid(foreground, b, mask, &mut buf);
            let v = model.eval(&buf);
            if !v.is_finite() {
                return Err(Error::NonFiniteOutput);
            }
            acc.add(v);
        }
        values.push(acc.total() / backgrounds.len() as f64);
    }
    Ok(values)
}

/// Shapley values of the game given by `values[mask]` over `n` players.
pub(crate) fn shapley_from_game(n: usize, values: &[f64]) -> Vec<f64> {
    debug_assert_eq!(values.len(), 1 << n);
    if n == 0 {
        return Vec::new();
    }
    let lf = ln_factorials(n);
    let weights: Vec<f64> = (0..n)
        .map(|s| libm::exp(lf[s] + lf[n - s - 1] - lf[n]))
        .collect();
    (0..n)
        .map(|i| {
            let mut acc = NeumaierSum::default();
            for bits in 0..(1u32 << n) {
                let mask = CoalitionMask(bits);
                if mask.contains(i) {
                    continue;
                }
                let with = values[mask.with(i).0 as usize];
                acc.add(weights[mask.len()] * (with - values[bits as usize]));
            }
            acc.total()
        })
        .collect()
}

/// Exact Shapley values of `model` for one foreground/background pair.
pub fn shapley_single_reference<M: Model>(
    model: &M,
    foreground: &[f64],
    background: &[f64],
) -> Result<Attribution> {
    let bg = [background.to_vec()];
    let n = check_inputs(model, foreground, &bg)?;
    let values = coalition_values(model, foreground, &bg, n)?;
    Ok(Attribution {
        phi: shapley_from_game(n, &values),
        method: Method::Exact,
        fx: values[values.len() - 1],
        base: values[0],
        per_reference: None,
        notes: Vec::new(),
    })
}

/// Mean of the single-reference Shapley values over `backgrounds`; the
/// per-background results are kept in `per_reference`.
pub fn shapley_background<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
) -> Result<Attribution> {
    check_inputs(model, foreground, backgrounds)?;
    let singles = backgrounds
        .iter()
        .map(|b| shapley_single_reference(model, foreground, b))
        .collect::<Result<Vec<_>>>()?;
    let per_reference: Vec<Vec<f64>> = singles.iter().map(|a| a.phi.clone()).collect();
    let mut base = NeumaierSum::default();
    for a in &singles {
        base.add(a.base);
    }
    Ok(Attribution {
        phi: mean_of_vectors(&per_reference),
        method: Method::Exact,
        fx: singles[0].fx,
        base: base.total() / singles.len() as f64,
        per_reference: Some(per_reference),
        notes: Vec::new(),
    })
}

/// Shapley values of the interventional game
/// `v(S) = mean over backgrounds b of f(hybrid(x, b, S))`, enumerated directly.
///
/// Agrees with [`shapley_background`] up to rounding, since the Shapley value
/// is linear in the game.
pub fn shapley_interventional<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
) -> Result<Attribution> {
    let n = check_inputs(model, foreground, backgrounds)?;
    let values = coalition_values(model, foreground, backgrounds, n)?;
    Ok(Attribution {
        phi: shapley_from_game(n, &values),
        method: Method::Exact,
        fx: values[values.len() - 1],
        base: values[0],
        per_reference: None,
        notes: Vec::new(),
    })
}
