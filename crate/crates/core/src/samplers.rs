//! Model-agnostic sampling estimators of interventional SHAP values.
//!
//! Both estimators see the model only through [`Model::eval`] and use the
//! background-averaged game `v(S) = mean_b f(hybrid(x, b, S))`.
//!
//! * [`kernel_shap`] draws coalitions from the Shapley-kernel distribution and
//!   solves a least-squares problem with the efficiency constraint eliminated
//!   exactly. With [`Budget::Exhaustive`] every proper coalition is used with
//!   its kernel weight, which reproduces the Shapley values.
//! * [`ime_shap`] averages marginal contributions along random orderings.
//!   Draw `k` uses background `k mod |D|`; per-background means are averaged
//!   with equal weight, so every completed run is locally accurate.
//!
//! Coalitions and permutations are drawn from `ChaCha8Rng::seed_from_u64(seed)`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{explain, RuleConfig};
use crate::graph::ComputeGraph;
use crate::linalg::{binomial, mean_of_vectors, NeumaierSum};
use crate::oracle::MAX_EXACT_FEATURES;
use crate::{check_len, Attribution, Error, Method, Model, Note, Result};

/// Largest width for which [`ime_shap`] enumerates all orderings.
pub const MAX_EXHAUSTIVE_PERMUTATION_FEATURES: usize = 10;

/// Redraws attempted after a singular KernelSHAP system.
pub const MAX_REDRAWS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Kernel,
    Ime,
}

/// How many model-evaluation units to spend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// Coalitions (Kernel) or permutation draws (IME).
    Samples(usize),
    /// Every proper coalition (Kernel) or every ordering × background (IME).
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub estimator: Estimator,
    pub budget: Budget,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn kernel(n_samples: usize, seed: u64) -> Self {
        Self {
            estimator: Estimator::Kernel,
            budget: Budget::Samples(n_samples),
            seed,
        }
    }

    pub fn ime(n_samples: usize, seed: u64) -> Self {
        Self {
            estimator: Estimator::Ime,
            budget: Budget::Samples(n_samples),
            seed,
        }
    }

    pub fn exhaustive(estimator: Estimator) -> Self {
        Self {
            estimator,
            budget: Budget::Exhaustive,
            seed: 0,
        }
    }

    pub fn validate(&self, input_dim: usize, n_backgrounds: usize) -> Result<()> {
        match (self.estimator, self.budget) {
            (Estimator::Kernel, Budget::Samples(n)) if n < 2 * input_dim + 2 => {
                Err(Error::InvalidConfig(alloc::format!(
                    "KernelSHAP needs at least {} samples for {input_dim} features, got {n}",
                    2 * input_dim + 2
                )))
            }
            (Estimator::Kernel, Budget::Exhaustive) if input_dim > MAX_EXACT_FEATURES => {
                Err(Error::TooManyFeatures {
                    n: input_dim,
                    max: MAX_EXACT_FEATURES,
                })
            }
            (Estimator::Ime, Budget::Samples(n)) if n < n_backgrounds.max(1) => {
                Err(Error::InvalidConfig(alloc::format!(
                    "IME needs at least one draw per background ({n_backgrounds}), got {n}"
                )))
            }
            (Estimator::Ime, Budget::Exhaustive)
                if input_dim > MAX_EXHAUSTIVE_PERMUTATION_FEATURES =>
            {
                Err(Error::TooManyFeatures {
                    n: input_dim,
                    max: MAX_EXHAUSTIVE_PERMUTATION_FEATURES,
                })
            }
            _ => Ok(()),
        }
    }
}

/// Runs the configured estimator.
pub fn estimate<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    config: &SamplerConfig,
) -> Result<Attribution> {
    match config.estimator {
        Estimator::Kernel => kernel_shap(model, foreground, backgrounds, config),
        Estimator::Ime => ime_shap(model, foreground, backgrounds, config),
    }
}

fn check_inputs<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    config: &SamplerConfig,
) -> Result<usize> {
    let n = model.input_dim();
    check_len("foreground", n, foreground.len())?;
    if backgrounds.is_empty() {
        return Err(Error::EmptyBackground);
    }
    for b in backgrounds {
        check_len("background", n, b.len())?;
    }
    config.validate(n, backgrounds.len())?;
    Ok(n)
}

/// Background-averaged model value at a coalition.
struct Game<'a, M> {
    model: &'a M,
    foreground: &'a [f64],
    backgrounds: &'a [Vec<f64>],
    buf: Vec<f64>,
}

impl<M: Model> Game<'_, M> {
    fn value(&mut self, coalition: &[bool]) -> Result<f64> {
        let mut acc = NeumaierSum::default();
        for b in self.backgrounds {
            for (i, slot) in self.buf.iter_mut().enumerate() {
                *slot = if coalition[i] {
                    self.foreground[i]
                } else {
                    b[i]
                };
            }
            let v = self.model.eval(&self.buf);
            if !v.is_finite() {
                return Err(Error::NonFiniteOutput);
            }
            acc.add(v);
        }
        Ok(acc.total() / self.backgrounds.len() as f64)
    }
}

/// Shapley-kernel weight of one coalition of size `s` out of `m`.
fn kernel_weight(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (binomial(m, s) * (s * (m - s)) as f64)
}

fn draw_coalitions(rng: &mut ChaCha8Rng, m: usize, count: usize) -> Vec<Vec<bool>> {
    // Size s is drawn with probability ∝ C(m,s)·π(s) = (m−1)/(s(m−s)).
    let mut cdf = Vec::with_capacity(m - 1);
    let mut total = 0.0;
    for s in 1..m {
        total += 1.0 / (s * (m - s)) as f64;
        cdf.push(total);
    }
    let mut idx: Vec<usize> = (0..m).collect();
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let s = 1 + cdf.partition_point(|&c| c <= u).min(m - 2);
            let (chosen, _) = idx.partial_shuffle(rng, s);
            let mut z = vec![false; m];
            chosen.iter().for_each(|&i| z[i] = true);
            z
        })
        .collect()
}

/// Solves the constrained weighted regression; `None` if singular.
fn solve_kernel_system(
    coalitions: &[Vec<bool>],
    weights: &[f64],
    targets: &[f64],
    total: f64,
    m: usize,
) -> Option<Vec<f64>> {
    // φ_last = total − Σ_{i<last} φ_i, substituted into each row.
    let k = m - 1;
    let mut ata = DMatrix::<f64>::zeros(k, k);
    let mut atb = DVector::<f64>::zeros(k);
    let mut row = vec![0.0; k];
    for ((z, &w), &y) in coalitions.iter().zip(weights).zip(targets) {
        let last = f64::from(u8::from(z[k]));
        for i in 0..k {
            row[i] = f64::from(u8::from(z[i])) - last;
        }
        let t = y - last * total;
        for i in 0..k {
            if row[i] == 0.0 {
                continue;
            }
            atb[i] += w * row[i] * t;
            for j in 0..k {
                ata[(i, j)] += w * row[i] * row[j];
            }
        }
    }
    let x = ata.cholesky()?.solve(&atb);
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut phi: Vec<f64> = x.iter().copied().collect();
    let rest: f64 = phi.iter().sum();
    phi.push(total - rest);
    Some(phi)
}

/// KernelSHAP estimate of the interventional SHAP values.
pub fn kernel_shap<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    config: &SamplerConfig,
) -> Result<Attribution> {
    let m = check_inputs(model, foreground, backgrounds, config)?;
    let mut game = Game {
        model,
        foreground,
        backgrounds,
        buf: vec![0.0; m],
    };
    let base = game.value(&vec![false; m])?;
    let fx = game.value(&vec![true; m])?;
    let total = fx - base;
    let done = |phi: Vec<f64>, notes: Vec<Note>| Attribution {
        phi,
        method: Method::Kernel,
        fx,
        base,
        per_reference: None,
        notes,
    };
    if m <= 1 {
        return Ok(done(vec![total; m], Vec::new()));
    }

    let (coalitions, weights) = match config.budget {
        Budget::Exhaustive => {
            let mut cs = Vec::with_capacity((1 << m) - 2);
            let mut ws = Vec::with_capacity((1 << m) - 2);
            for bits in 1u32..(1 << m) - 1 {
                let z: Vec<bool> = (0..m).map(|i| bits >> i & 1 == 1).collect();
                ws.push(kernel_weight(m, bits.count_ones() as usize));
                cs.push(z);
            }
            (cs, ws)
        }
        Budget::Samples(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut attempts = 0;
            loop {
                let cs = draw_coalitions(&mut rng, m, n);
                let ys = cs
                    .iter()
                    .map(|z| game.value(z).map(|v| v - base))
                    .collect::<Result<Vec<_>>>()?;
                let ws = vec![1.0; cs.len()];
                if let Some(phi) = solve_kernel_system(&cs, &ws, &ys, total, m) {
                    let notes = if attempts > 0 {
                        vec![Note::Redrawn { attempts }]
                    } else {
                        Vec::new()
                    };
                    return Ok(done(phi, notes));
                }
                attempts += 1;
                if attempts > MAX_REDRAWS {
                    return Err(Error::SingularSystem { attempts });
                }
            }
        }
    };
    let ys = coalitions
        .iter()
        .map(|z| game.value(z).map(|v| v - base))
        .collect::<Result<Vec<_>>>()?;
    let phi = solve_kernel_system(&coalitions, &weights, &ys, total, m)
        .ok_or(Error::SingularSystem { attempts: 1 })?;
    Ok(done(phi, Vec::new()))
}

/// Adds the marginal contributions along `order` into `acc`.
fn walk_permutation<M: Model>(
    model: &M,
    foreground: &[f64],
    background: &[f64],
    order: &[usize],
    x: &mut [f64],
    acc: &mut [NeumaierSum],
) -> Result<()> {
    x.copy_from_slice(background);
    let mut prev = model.eval(x);
    if !prev.is_finite() {
        return Err(Error::NonFiniteOutput);
    }
    for &i in order {
        x[i] = foreground[i];
        let cur = model.eval(x);
        if !cur.is_finite() {
            return Err(Error::NonFiniteOutput);
        }
        acc[i].add(cur - prev);
        prev = cur;
    }
    Ok(())
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// IME (random-ordering) estimate of the interventional SHAP values.
pub fn ime_shap<M: Model>(
    model: &M,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    config: &SamplerConfig,
) -> Result<Attribution> {
    let m = check_inputs(model, foreground, backgrounds, config)?;
    let d = backgrounds.len();
    let mut sums = vec![vec![NeumaierSum::default(); m]; d];
    let mut counts = vec![0usize; d];
    let mut x = vec![0.0; m];
    let mut order: Vec<usize> = (0..m).collect();
    match config.budget {
        Budget::Exhaustive => {
            for (k, b) in backgrounds.iter().enumerate() {
                order.sort_unstable();
                loop {
                    walk_permutation(model, foreground, b, &order, &mut x, &mut sums[k])?;
                    counts[k] += 1;
                    if !next_permutation(&mut order) {
                        break;
                    }
                }
            }
        }
        Budget::Samples(n) => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for draw in 0..n {
                let k = draw % d;
                order.shuffle(&mut rng);
                walk_permutation(
                    model,
                    foreground,
                    &backgrounds[k],
                    &order,
                    &mut x,
                    &mut sums[k],
                )?;
                counts[k] += 1;
            }
        }
    }
    let per_reference: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v.total() / c as f64).collect())
        .collect();
    let fx = model.eval(foreground);
    let mut base = NeumaierSum::default();
    backgrounds.iter().for_each(|b| base.add(model.eval(b)));
    Ok(Attribution {
        phi: mean_of_vectors(&per_reference),
        method: Method::Ime,
        fx,
        base: base.total() / d as f64,
        per_reference: None,
        notes: Vec::new(),
    })
}

/// A foreground sample with its background set.
#[derive(Debug, Clone, Copy)]
pub struct ExplainInstance<'a> {
    pub foreground: &'a [f64],
    pub backgrounds: &'a [Vec<f64>],
}

/// Anything that produces attributions given a sample budget and a seed.
/// Deterministic methods ignore both.
pub trait AttributionEstimator {
    fn estimate(&self, n_samples: usize, seed: u64) -> Result<Vec<f64>>;
}

/// A sampling estimator bound to a model and an instance.
pub struct SamplingProbe<'a, M> {
    pub model: &'a M,
    pub instance: ExplainInstance<'a>,
    pub estimator: Estimator,
}

impl<M: Model> AttributionEstimator for SamplingProbe<'_, M> {
    fn estimate(&self, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
        let cfg = SamplerConfig {
            estimator: self.estimator,
            budget: Budget::Samples(n_samples),
            seed,
        };
        estimate(
            self.model,
            self.instance.foreground,
            self.instance.backgrounds,
            &cfg,
        )
        .map(|a| a.phi)
    }
}

/// The propagation explainer bound to a graph and an instance.
pub struct PropagationProbe<'a> {
    pub graph: &'a ComputeGraph,
    pub instance: ExplainInstance<'a>,
    pub config: RuleConfig,
}

impl AttributionEstimator for PropagationProbe<'_> {
    fn estimate(&self, _n_samples: usize, _seed: u64) -> Result<Vec<f64>> {
        explain(
            self.graph,
            self.instance.foreground,
            self.instance.backgrounds,
            &self.config,
        )
        .map(|a| a.phi)
    }
}

/// Spread of the rank-`rank` largest `|φ|` across repeats at one budget.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePoint {
    pub n_samples: usize,
    pub attributions: Vec<Vec<f64>>,
    /// The ranked `|φ|` statistic per repeat.
    pub statistic: Vec<f64>,
    /// Sample standard deviation of `statistic`.
    pub std_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub points: Vec<VariancePoint>,
    /// 1-based rank of the `|φ|` order statistic tracked (10 unless the
    /// input is narrower).
    pub rank: usize,
    /// Set when the input has fewer than 10 features.
    pub rank_reduced: bool,
}

/// Rank of the tracked attribution magnitude.
pub const PROBE_RANK: usize = 10;

/// k-th largest (1-based) absolute value.
pub fn kth_largest_abs(phi: &[f64], k: usize) -> f64 {
    let mut mags: Vec<f64> = phi.iter().map(|v| libm::fabs(*v)).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    mags[k - 1]
}

/// Runs `estimator` once per seed at every budget in `sample_grid` and
/// reports the spread of the 10th-largest `|φ|`.
pub fn variance_probe<E: AttributionEstimator + ?Sized>(
    estimator: &E,
    sample_grid: &[usize],
    seeds: &[u64],
) -> Result<VarianceReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidConfig(
            "variance probe needs at least 2 repeats".into(),
        ));
    }
    let mut points = Vec::with_capacity(sample_grid.len());
    let mut rank = PROBE_RANK;
    let mut rank_reduced = false;
    for &n in sample_grid {
        let attributions = seeds
            .iter()
            .map(|&s| estimator.estimate(n, s))
            .collect::<Result<Vec<_>>>()?;
        let width = attributions[0].len();
        if width == 0 {
            return Err(Error::InvalidConfig(
                "estimator returned no attributions".into(),
            ));
        }
        if width < PROBE_RANK {
            rank = width;
            rank_reduced = true;
        }
        let statistic: Vec<f64> = attributions
            .iter()
            .map(|a| kth_largest_abs(a, rank))
            .collect();
        points.push(VariancePoint {
            n_samples: n,
            std_dev: sample_std(&statistic),
            attributions,
            statistic,
        });
    }
    Ok(VarianceReport {
        points,
        rank,
        rank_reduced,
    })
}

/// Welford sample standard deviation; exactly zero for identical inputs.
fn sample_std(xs: &[f64]) -> f64 {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    if xs.len() < 2 {
        return 0.0;
    }
    libm::sqrt(m2 / (xs.len() - 1) as f64)
}
