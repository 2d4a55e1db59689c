use alloc::vec;
use alloc::vec::Vec;

use super::{
    fit_boosted_trees, fit_extractor, gen_corrgroups, keep_absolute_mask, kmeans, r_squared,
    random_attributions, AblationCurve, BoostConfig, CorrgroupsSpec, Dataset,
};
use crate::engine::{explain_stack, RuleConfig};
use crate::graph::{Activation, ComputeGraph, NodeKind};
use crate::linalg::Matrix;
use crate::samplers::{estimate, SamplerConfig};
use crate::tree::TreeEnsemble;
use crate::{Error, Model, Result};

/// Settings for the network-into-trees stack experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct StackConfig {
    pub data: CorrgroupsSpec,
    /// Rows used for fitting; the rest are the test set.
    pub n_train: usize,
    pub hidden: usize,
    pub ridge_lambda: f64,
    pub boost: BoostConfig,
    /// Number of k-means centres summarising the training set.
    pub background_k: usize,
    pub seed: u64,
    /// Optional sampling baselines, by samples per explanation.
    pub ime_samples: Option<usize>,
    pub kernel_samples: Option<usize>,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            data: CorrgroupsSpec::default(),
            n_train: 800,
            hidden: 8,
            ridge_lambda: 1.0,
            boost: BoostConfig::default(),
            background_k: 20,
            seed: 0,
            ime_samples: None,
            kernel_samples: None,
        }
    }
}

/// Fits `input → Linear → ReLU → TreeEnsemble` on `train`.
pub fn fit_stack(train: &Dataset, cfg: &StackConfig) -> Result<ComputeGraph> {
    let (weights, bias) =
        fit_extractor(&train.x, &train.y, cfg.hidden, cfg.ridge_lambda, cfg.seed)?;
    let mut hidden = Matrix::zeros(train.x.rows(), cfg.hidden);
    for (r, row) in train.x.iter_rows().enumerate() {
        let h = weights.mul_vec(row);
        for (j, (v, b)) in h.iter().zip(&bias).enumerate() {
            hidden.set(r, j, Activation::Relu.apply(v + b));
        }
    }
    let trees: TreeEnsemble = fit_boosted_trees(&hidden, &train.y, &cfg.boost)?;
    Ok(ComputeGraph::sequential(
        train.x.cols(),
        vec![
            NodeKind::Linear { weights, bias },
            NodeKind::Activation(Activation::Relu),
            NodeKind::TreeEnsemble(trees),
        ],
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackReport {
    pub model: ComputeGraph,
    pub backgrounds: Vec<Vec<f64>>,
    pub train_means: Vec<f64>,
    /// R² of the unmasked model on the test set.
    pub test_r2: f64,
    /// Ablation curves: propagation (Rescale), random, then any samplers.
    pub curves: Vec<AblationCurve>,
    /// Mean `|φ|` per feature of the propagation attributions.
    pub mean_abs_phi: Vec<f64>,
    /// Propagation attributions per test row.
    pub attributions: Vec<Vec<f64>>,
}

impl StackReport {
    pub fn curve(&self, method: &str) -> Option<&AblationCurve> {
        self.curves.iter().find(|c| c.method == method)
    }
}

/// Generates Corrgroups data, fits the stack, explains the test rows and
/// computes keep-absolute (mask) curves per method.
pub fn run_stack_ablation(cfg: &StackConfig) -> Result<StackReport> {
    let data = gen_corrgroups(&cfg.data)?;
    if cfg.n_train == 0 || cfg.n_train >= cfg.data.n {
        return Err(Error::InvalidConfig(
            "n_train must leave rows for both sets".into(),
        ));
    }
    let (train, test) = data.split_at(cfg.n_train);
    let model = fit_stack(&train, cfg)?;
    let scalar = model.output_model(0)?;
    let backgrounds = kmeans(&train.x, cfg.background_k, cfg.seed)?;
    let train_means = train.x.column_means();

    let rule = RuleConfig::rescale();
    let attributions = test
        .x
        .iter_rows()
        .map(|row| explain_stack(&model, row, &backgrounds, &rule).map(|a| a.phi))
        .collect::<Result<Vec<_>>>()?;

    let d = test.x.cols();
    let mut mean_abs_phi = vec![0.0; d];
    for a in &attributions {
        for (m, v) in mean_abs_phi.iter_mut().zip(a) {
            *m += libm::fabs(*v);
        }
    }
    mean_abs_phi
        .iter_mut()
        .for_each(|m| *m /= attributions.len().max(1) as f64);

    let preds: Vec<f64> = test.x.iter_rows().map(|r| scalar.eval(r)).collect();
    let test_r2 = r_squared(&preds, &test.y);

    let mut curves = vec![
        keep_absolute_mask(
            &scalar,
            "rescale",
            &attributions,
            &test.x,
            &test.y,
            &train_means,
        )?,
        keep_absolute_mask(
            &scalar,
            "random",
            &random_attributions(test.x.rows(), d, cfg.seed ^ 0x5eed),
            &test.x,
            &test.y,
            &train_means,
        )?,
    ];
    let samplers = [
        (
            "ime",
            cfg.ime_samples.map(|n| SamplerConfig::ime(n, cfg.seed)),
        ),
        (
            "kernel",
            cfg.kernel_samples
                .map(|n| SamplerConfig::kernel(n, cfg.seed)),
        ),
    ];
    for (name, sc) in samplers {
        let Some(sc) = sc else { continue };
        let attr = test
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, row)| {
                let sc = SamplerConfig {
                    seed: sc.seed.wrapping_add(i as u64),
                    ..sc
                };
                estimate(&scalar, row, &backgrounds, &sc).map(|a| a.phi)
            })
            .collect::<Result<Vec<_>>>()?;
        curves.push(keep_absolute_mask(
            &scalar,
            name,
            &attr,
            &test.x,
            &test.y,
            &train_means,
        )?);
    }

    Ok(StackReport {
        model,
        backgrounds,
        train_means,
        test_r2,
        curves,
        mean_abs_phi,
        attributions,
    })
}
