//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use shapprop_core::bench::{
    gen_corrgroups, run_stack_ablation, toy_revealcancel_study, CorrgroupsSpec, StackConfig,
};
use shapprop_core::oracle::{shapley_background, shapley_interventional, shapley_single_reference};
use shapprop_core::samplers::{
    estimate, variance_probe, Estimator, ExplainInstance, PropagationProbe, SamplerConfig,
    SamplingProbe,
};
use shapprop_core::treeshap::tree_shap_single_reference;
use shapprop_core::{
    explain, Activation, ComputeGraph, FnModel, Matrix, Model, NodeKind, RuleConfig, ThresholdMode,
    TreeEnsemble,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rules() -> [(&'static str, RuleConfig); 3] {
    [
        ("rescale", RuleConfig::rescale()),
        (
            "revealcancel",
            RuleConfig::reveal_cancel(ThresholdMode::Zero),
        ),
        (
            "revealcancel-mean",
            RuleConfig::reveal_cancel(ThresholdMode::Mean),
        ),
    ]
}

fn local_accuracy() -> Outcome {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for g in 0..500 {
        let graph = random_graph(&mut r);
        let model = graph.output_model(0).unwrap();
        let d = graph.input_dim();
        let fg = normal_vec(&mut r, d, 1.5);
        for n_bg in [1, 5] {
            let bgs = samples(&mut r, n_bg, d);
            let expected =
                model.eval(&fg) - bgs.iter().map(|b| model.eval(b)).sum::<f64>() / n_bg as f64;
            for (name, cfg) in rules() {
                let a = explain(&graph, &fg, &bgs, &cfg)
                    .map_err(|e| format!("graph {g} {name}: {e}"))?;
                let gap = (a.total() - expected).abs();
                worst = worst.max(gap);
                cases += 1;
                if gap > 1e-6 {
                    return Err(format!("graph {g}, rule {name}, |bg|={n_bg}: gap {gap:e}"));
                }
            }
        }
    }
    Ok(format!("{cases} cases, max gap {worst:.1e}"))
}

fn linear_oracle() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for g in 0..100 {
        let graph = random_linear(&mut r);
        let d = graph.input_dim();
        let fg = normal_vec(&mut r, d, 1.0);
        let bgs = samples(&mut r, 3, d);
        let exact = shapley_background(&graph.output_model(0).unwrap(), &fg, &bgs).unwrap();
        for (name, cfg) in rules() {
            let a = explain(&graph, &fg, &bgs, &cfg).unwrap();
            let diff = max_abs_diff(&a.phi, &exact.phi);
            worst = worst.max(diff);
            if diff > 1e-9 {
                return Err(format!("graph {g}, rule {name}: max diff {diff:e}"));
            }
        }
    }
    Ok(format!("100 graphs x 3 rules, max diff {worst:.1e}"))
}

fn background_average_identity() -> Outcome {
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for g in 0..100 {
        let graph = random_graph(&mut r);
        let model = graph.output_model(0).unwrap();
        let d = graph.input_dim();
        let fg = normal_vec(&mut r, d, 1.5);
        let n_bg = 1 + g % 8;
        let bgs = samples(&mut r, n_bg, d);
        let averaged = shapley_background(&model, &fg, &bgs).unwrap();
        let direct = shapley_interventional(&model, &fg, &bgs).unwrap();
        let diff = max_abs_diff(&averaged.phi, &direct.phi);
        worst = worst.max(diff);
        if diff > 1e-9 {
            return Err(format!("graph {g}, |bg|={n_bg}: max diff {diff:e}"));
        }
    }
    Ok(format!("100 graphs, |bg| 1..=8, max diff {worst:.1e}"))
}

fn tree_oracle() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let mut worst_additivity = 0.0f64;
    for t in 0..200 {
        let d = r.random_range(1..=8);
        let depth = r.random_range(1..=4);
        let tree = random_tree(&mut r, d, depth);
        let single = TreeEnsemble::new(vec![tree.clone()]);
        let model = FnModel::new(d, |x: &[f64]| tree.predict(x));
        let fg = normal_vec(&mut r, d, 1.0);
        for b in samples(&mut r, 3, d) {
            let fast = tree_shap_single_reference(&single, &fg, &b).unwrap();
            let exact = shapley_single_reference(&model, &fg, &b).unwrap();
            let diff = max_abs_diff(&fast.phi, &exact.phi);
            worst = worst.max(diff);
            if diff > 1e-9 {
                return Err(format!("tree {t}: max diff {diff:e}"));
            }
        }

        // Ensemble of this tree and two more: attributions add up tree by tree.
        let mut trees = vec![tree.clone()];
        trees.extend((0..2).map(|_| random_tree(&mut r, d, depth)));
        let ens = TreeEnsemble::new(trees.clone());
        let b = normal_vec(&mut r, d, 1.0);
        let whole = tree_shap_single_reference(&ens, &fg, &b).unwrap();
        let mut summed = vec![0.0; d];
        for tr in trees {
            let part = tree_shap_single_reference(&TreeEnsemble::new(vec![tr]), &fg, &b).unwrap();
            summed.iter_mut().zip(&part.phi).for_each(|(s, p)| *s += p);
        }
        let gap = max_abs_diff(&whole.phi, &summed);
        worst_additivity = worst_additivity.max(gap);
        if gap > 1e-12 {
            return Err(format!("tree {t}: ensemble additivity gap {gap:e}"));
        }
    }
    Ok(format!(
        "200 trees x 3 references, max diff {worst:.1e}, additivity gap {worst_additivity:.1e}"
    ))
}

fn toy_ordering() -> Outcome {
    let mut lines = Vec::new();
    for seed in 0..5 {
        let study = toy_revealcancel_study(seed, 100).unwrap();
        let [rescale, zero, mean] = study.aggregate();
        lines.push(format!(
            "seed {seed}: rescale {rescale:.2} rc0 {zero:.2} rcmean {mean:.2}"
        ));
        if !(mean < rescale && mean <= zero) {
            return Err(lines.join("; "));
        }
    }
    Ok(lines.join("; "))
}

fn six_feature_mlp() -> ComputeGraph {
    let mut r = rng(6);
    let w1 = normal_vec(&mut r, 5 * 6, 0.6);
    let w2 = normal_vec(&mut r, 5, 0.8);
    ComputeGraph::sequential(
        6,
        vec![
            NodeKind::Linear {
                weights: Matrix::new(5, 6, w1).unwrap(),
                bias: normal_vec(&mut r, 5, 0.3),
            },
            NodeKind::Activation(Activation::Relu),
            NodeKind::Linear {
                weights: Matrix::new(1, 5, w2).unwrap(),
                bias: vec![0.1],
            },
            NodeKind::Activation(Activation::Tanh),
        ],
    )
    .unwrap()
}

fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn sampler_convergence() -> Outcome {
    let graph = six_feature_mlp();
    let model = graph.output_model(0).unwrap();
    let mut r = rng(60);
    let fg = normal_vec(&mut r, 6, 1.5);
    let bgs = samples(&mut r, 3, 6);
    let exact = shapley_background(&model, &fg, &bgs).unwrap();

    let mut details = Vec::new();
    for est in [Estimator::Kernel, Estimator::Ime] {
        let full = estimate(&model, &fg, &bgs, &SamplerConfig::exhaustive(est)).unwrap();
        let diff = max_abs_diff(&full.phi, &exact.phi);
        if diff > 1e-6 {
            return Err(format!("{est:?} exhaustive: max diff {diff:e}"));
        }
        details.push(format!("{est:?} exhaustive diff {diff:.1e}"));
    }

    let mut ok = true;
    let grids = [
        (Estimator::Kernel, [100, 200, 400, 800]),
        (Estimator::Ime, [60, 120, 240, 480]),
    ];
    for (est, grid) in grids {
        let mut monotone = 0;
        for seed in 0..5u64 {
            let errs: Vec<f64> = grid
                .iter()
                .map(|&n| {
                    let cfg = SamplerConfig {
                        estimator: est,
                        budget: shapprop_core::samplers::Budget::Samples(n),
                        seed,
                    };
                    mae(&estimate(&model, &fg, &bgs, &cfg).unwrap().phi, &exact.phi)
                })
                .collect();
            if errs.windows(2).all(|w| w[1] <= w[0]) {
                monotone += 1;
            }
        }
        details.push(format!("{est:?} monotone in {monotone}/5 seeds"));
        ok &= monotone >= 4;
    }
    if ok {
        Ok(details.join("; "))
    } else {
        Err(details.join("; "))
    }
}

fn variance_probe_check() -> Outcome {
    let mut r = rng(7);
    let d = 12;
    let graph = ComputeGraph::sequential(
        d,
        vec![
            NodeKind::Linear {
                weights: Matrix::new(6, d, normal_vec(&mut r, 6 * d, 0.5)).unwrap(),
                bias: normal_vec(&mut r, 6, 0.3),
            },
            NodeKind::Activation(Activation::Relu),
            NodeKind::Linear {
                weights: Matrix::new(1, 6, normal_vec(&mut r, 6, 0.8)).unwrap(),
                bias: vec![0.0],
            },
            NodeKind::Activation(Activation::Sigmoid),
        ],
    )
    .unwrap();
    let model = graph.output_model(0).unwrap();
    let fg = normal_vec(&mut r, d, 1.5);
    let bgs = samples(&mut r, 3, d);
    let instance = ExplainInstance {
        foreground: &fg,
        backgrounds: &bgs,
    };
    let seeds: Vec<u64> = (0..10).collect();
    let grid = [100, 400, 1600, 6400];

    let deep = variance_probe(
        &PropagationProbe {
            graph: &graph,
            instance,
            config: RuleConfig::rescale(),
        },
        &grid,
        &seeds,
    )
    .unwrap();
    if let Some(p) = deep.points.iter().find(|p| p.std_dev != 0.0) {
        return Err(format!(
            "propagation std {:e} at n={}",
            p.std_dev, p.n_samples
        ));
    }
    let mut details = vec!["propagation std 0 at all budgets".to_string()];
    for est in [Estimator::Kernel, Estimator::Ime] {
        let rep = variance_probe(
            &SamplingProbe {
                model: &model,
                instance,
                estimator: est,
            },
            &grid,
            &seeds,
        )
        .unwrap();
        let stds: Vec<f64> = rep.points.iter().map(|p| p.std_dev).collect();
        details.push(format!(
            "{est:?} std {:?}",
            stds.iter().map(|s| format!("{s:.2e}")).collect::<Vec<_>>()
        ));
        let positive = stds.iter().all(|&s| s > 0.0);
        let decreasing = stds.last() < stds.first();
        if !(positive && decreasing) {
            return Err(details.join("; "));
        }
    }
    Ok(details.join("; "))
}

fn stack_ablation() -> Outcome {
    let report = run_stack_ablation(&StackConfig::default()).map_err(|e| e.to_string())?;
    let deep = report.curve("rescale").unwrap().area();
    let random = report.curve("random").unwrap().area();
    let (mut on, mut off) = (0.0, 0.0);
    for (i, v) in report.mean_abs_phi.iter().enumerate() {
        if i % 3 == 0 {
            on += v / 20.0;
        } else {
            off += v / 40.0;
        }
    }
    let detail = format!(
        "test R2 {:.3}, area rescale {deep:.3} vs random {random:.3}, mean |phi| signal {on:.3} vs other {off:.3}",
        report.test_r2
    );
    if deep > random && on > off {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn corr(x: &Matrix, a: usize, b: usize) -> f64 {
    let n = x.rows() as f64;
    let col = |c: usize| x.iter_rows().map(move |r| r[c]);
    let ma = col(a).sum::<f64>() / n;
    let mb = col(b).sum::<f64>() / n;
    let cov: f64 = col(a).zip(col(b)).map(|(u, v)| (u - ma) * (v - mb)).sum();
    let va: f64 = col(a).map(|u| (u - ma) * (u - ma)).sum();
    let vb: f64 = col(b).map(|v| (v - mb) * (v - mb)).sum();
    cov / (va * vb).sqrt()
}

fn corrgroups() -> Outcome {
    let mut ok = true;
    let mut details = Vec::new();
    for seed in 0..5 {
        let data = gen_corrgroups(&CorrgroupsSpec {
            seed,
            ..Default::default()
        })
        .unwrap();
        let (mut lo, mut hi, mut cross) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for i in 0..60 {
            for j in i + 1..60 {
                let c = corr(&data.x, i, j);
                if i / 3 == j / 3 {
                    lo = lo.min(c);
                    hi = hi.max(c);
                } else {
                    cross = cross.max(c.abs());
                }
            }
        }
        details.push(format!(
            "seed {seed}: within [{lo:.4}, {hi:.4}] cross max {cross:.3}"
        ));
        ok &= lo >= 0.97 && hi <= 1.0 && cross <= 0.1;
    }
    if ok {
        Ok(details.join("; "))
    } else {
        Err(details.join("; "))
    }
}

use rand::Rng;

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 local accuracy", local_accuracy),
        ("2 linear oracle equivalence", linear_oracle),
        ("3 background-average identity", background_average_identity),
        ("4 tree oracle equivalence", tree_oracle),
        ("5 toy RevealCancel ordering", toy_ordering),
        ("6 sampler convergence", sampler_convergence),
        ("7 variance probe", variance_probe_check),
        ("8 stack ablation", stack_ablation),
        ("9 corrgroups correlations", corrgroups),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
