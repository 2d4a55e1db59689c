//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use shapprop_core::bench::{
    gen_corrgroups, keep_absolute_mask, kmeans, run_stack_ablation, toy_revealcancel_study,
    CorrgroupsSpec, StackConfig, TOY_RULES,
};
use shapprop_core::oracle::shapley_background;
use shapprop_core::samplers::{estimate, Budget, Estimator, SamplerConfig};
use shapprop_core::{
    explain, explain_stack, ComputeGraph, GraphError, NodeKind, RuleConfig, ThresholdMode,
};
use thiserror::Error;

use crate::manifest::{now_ms, RunManifest};
use crate::model_format::{load_model, save_model, ModelFormatError};
use crate::table::{format_number, read_table, write_records, write_table, Table, TableError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Dimension(String),
    #[error("{path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelFormatError,
    },
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Core(#[from] shapprop_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad flags, 3 for dimension mismatches, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Model {
                source: ModelFormatError::Graph(GraphError::DimensionMismatch { .. }),
                ..
            } => 3,
            CliError::Core(shapprop_core::Error::DimensionMismatch { .. })
            | CliError::Core(shapprop_core::Error::Graph(GraphError::DimensionMismatch {
                ..
            })) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "shapprop",
    version,
    about = "SHAP attributions for compute-graph models"
)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "SHAPPROP_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain every row of a CSV file.
    Explain(ExplainArgs),
    /// Keep-absolute (mask) ablation curve for a set of attributions.
    Ablate(AblateArgs),
    /// Generate a correlated-triples regression dataset.
    Gen(GenArgs),
    /// Error table of the propagation rules on ReLU(x1+x2+x3+x4+100).
    Toy(ToyArgs),
    /// Fit a network-into-trees stack and run the mask ablation.
    Stack(StackArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Rescale,
    Revealcancel,
    RevealcancelMean,
    Exact,
    Kernel,
    Ime,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    /// Model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Foreground samples (CSV with header; a `y` column is ignored).
    #[arg(long)]
    pub data: PathBuf,
    /// Background CSV, or `kmeans:<k>` to summarise --data with k centres.
    #[arg(long)]
    pub background: String,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampler budget (default 2000 for kernel, 4000 for ime).
    #[arg(long)]
    pub samples: Option<usize>,
    /// Which coordinate of the model output to explain.
    #[arg(long, default_value_t = 0)]
    pub output_index: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Test samples with a `y` column.
    #[arg(long)]
    pub data: PathBuf,
    /// Attributions, one row per test sample (as written by `explain`).
    #[arg(long)]
    pub attributions: PathBuf,
    /// Training samples supplying the masking means (defaults to --data).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Method name recorded in the curve.
    #[arg(long, default_value = "attributions")]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 60)]
    pub d: usize,
    #[arg(long, default_value_t = 0.99)]
    pub rho: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub noise_var: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StackArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also run IME with this many samples per explanation.
    #[arg(long)]
    pub ime_samples: Option<usize>,
    /// Also run KernelSHAP with this many samples per explanation.
    #[arg(long)]
    pub kernel_samples: Option<usize>,
    /// Curve CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of mean |phi| per feature.
    #[arg(long)]
    pub phi_out: Option<PathBuf>,
    /// Optional path for the fitted model JSON.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::Usage(e.to_string()))?
    };
    pool.install(|| match cli.command {
        Command::Explain(a) => cmd_explain(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Gen(a) => cmd_gen(&a),
        Command::Toy(a) => cmd_toy(&a),
        Command::Stack(a) => cmd_stack(&a),
    })
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("flags serialise")
}

fn read_model(path: &Path) -> Result<ComputeGraph, CliError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    load_model(&bytes).map_err(|source| CliError::Model {
        path: path.to_path_buf(),
        source,
    })
}

fn check_columns(table: &Table, path: &Path, graph: &ComputeGraph) -> Result<(), CliError> {
    if table.columns.len() != graph.input_dim() {
        return Err(CliError::Dimension(format!(
            "{}: {} feature columns, model expects {}",
            path.display(),
            table.columns.len(),
            graph.input_dim()
        )));
    }
    Ok(())
}

fn has_trees(graph: &ComputeGraph) -> bool {
    graph
        .nodes()
        .iter()
        .any(|n| matches!(n.kind, NodeKind::TreeEnsemble(_)))
}

fn parse_background(
    spec: &str,
    data: &Table,
    seed: u64,
) -> Result<Option<Vec<Vec<f64>>>, CliError> {
    let Some(k) = spec.strip_prefix("kmeans:") else {
        return Ok(None);
    };
    let k: usize = k.parse().ok().filter(|&k| k > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "--background: `{spec}` needs a positive integer after kmeans:"
        ))
    })?;
    Ok(Some(kmeans(&data.x, k, seed)?))
}

pub fn cmd_explain(a: &ExplainArgs) -> Result<(), CliError> {
    let started = now_ms();
    let graph = read_model(&a.model)?;
    let data = read_table(&a.data)?;
    check_columns(&data, &a.data, &graph)?;
    let mut manifest = RunManifest::new("explain", config_json(a), Some(a.seed), started);
    manifest.add_input(&a.model).map_err(io_err(&a.model))?;
    manifest.add_input(&a.data).map_err(io_err(&a.data))?;

    let backgrounds = match parse_background(&a.background, &data, a.seed)? {
        Some(centres) => centres,
        None => {
            let path = Path::new(&a.background);
            let bg = read_table(path)?;
            check_columns(&bg, path, &graph)?;
            manifest.add_input(path).map_err(io_err(path))?;
            bg.rows()
        }
    };
    if a.output_index >= graph.output_dim() {
        return Err(CliError::Usage(format!(
            "--output-index {} out of range; model output has width {}",
            a.output_index,
            graph.output_dim()
        )));
    }

    let rule = |r: RuleConfig| r.with_output(a.output_index);
    let model = graph
        .output_model(a.output_index)
        .map_err(shapprop_core::Error::from)?;
    let stacked = has_trees(&graph);
    let sampler = |estimator, default| SamplerConfig {
        estimator,
        budget: Budget::Samples(a.samples.unwrap_or(default)),
        seed: a.seed,
    };
    if let Some(n) = a.samples {
        if !matches!(a.method, MethodArg::Kernel | MethodArg::Ime) {
            return Err(CliError::Usage(
                "--samples applies only to kernel and ime".into(),
            ));
        }
        if n == 0 {
            return Err(CliError::Usage("--samples must be positive".into()));
        }
    }

    let rows = data.rows();
    let phi: Vec<Vec<f64>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, fg)| -> Result<Vec<f64>, shapprop_core::Error> {
            let propagate = |cfg: RuleConfig| {
                if stacked {
                    explain_stack(&graph, fg, &backgrounds, &rule(cfg))
                } else {
                    explain(&graph, fg, &backgrounds, &rule(cfg))
                }
            };
            let per_row = |mut cfg: SamplerConfig| {
                cfg.seed = cfg.seed.wrapping_add(i as u64);
                estimate(&model, fg, &backgrounds, &cfg)
            };
            let attribution = match a.method {
                MethodArg::Rescale => propagate(RuleConfig::rescale()),
                MethodArg::Revealcancel => {
                    propagate(RuleConfig::reveal_cancel(ThresholdMode::Zero))
                }
                MethodArg::RevealcancelMean => {
                    propagate(RuleConfig::reveal_cancel(ThresholdMode::Mean))
                }
                MethodArg::Exact => shapley_background(&model, fg, &backgrounds),
                MethodArg::Kernel => per_row(sampler(Estimator::Kernel, 2000)),
                MethodArg::Ime => per_row(sampler(Estimator::Ime, 4000)),
            }?;
            Ok(attribution.phi)
        })
        .collect::<Result<_, _>>()?;

    write_table(&a.out, &data.columns, phi.iter().map(Vec::as_slice))?;
    manifest.write_for(&a.out).map_err(io_err(&a.out))?;
    Ok(())
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<(), CliError> {
    let started = now_ms();
    let graph = read_model(&a.model)?;
    let data = read_table(&a.data)?;
    check_columns(&data, &a.data, &graph)?;
    let Some(y) = &data.y else {
        return Err(CliError::Dimension(format!(
            "{}: no `y` column",
            a.data.display()
        )));
    };
    let attr = read_table(&a.attributions)?;
    if attr.x.rows() != data.x.rows() || attr.x.cols() != data.x.cols() {
        return Err(CliError::Dimension(format!(
            "{}: {}x{} attributions for {}x{} data in {}",
            a.attributions.display(),
            attr.x.rows(),
            attr.x.cols(),
            data.x.rows(),
            data.x.cols(),
            a.data.display()
        )));
    }
    let mut manifest = RunManifest::new("ablate", config_json(a), None, started);
    for p in [&a.model, &a.data, &a.attributions] {
        manifest.add_input(p).map_err(io_err(p))?;
    }
    let means = match &a.train {
        Some(p) => {
            let train = read_table(p)?;
            check_columns(&train, p, &graph)?;
            manifest.add_input(p).map_err(io_err(p))?;
            train.x.column_means()
        }
        None => data.x.column_means(),
    };
    let model = graph.output_model(0).map_err(shapprop_core::Error::from)?;
    let curve = keep_absolute_mask(&model, &a.label, &attr.rows(), &data.x, y, &means)?;
    write_curves(&a.out, std::slice::from_ref(&curve))?;
    println!("{}\t{}", curve.method, format_number(curve.area()));
    manifest.write_for(&a.out).map_err(io_err(&a.out))?;
    Ok(())
}

fn write_curves(
    path: &Path,
    curves: &[shapprop_core::bench::AblationCurve],
) -> Result<(), CliError> {
    let header = ["method", "features_kept", "r_squared"].map(String::from);
    let records = curves.iter().flat_map(|c| {
        c.points
            .iter()
            .map(|(k, r2)| vec![c.method.clone(), k.to_string(), format_number(*r2)])
    });
    Ok(write_records(path, &header, records)?)
}

pub fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    let started = now_ms();
    let spec = CorrgroupsSpec {
        n: a.n,
        d: a.d,
        rho: a.rho,
        noise_var: a.noise_var,
        seed: a.seed,
    };
    spec.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let data = gen_corrgroups(&spec)?;
    let mut header: Vec<String> = (0..a.d).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    let rows: Vec<Vec<f64>> = data
        .x
        .iter_rows()
        .zip(&data.y)
        .map(|(r, y)| r.iter().copied().chain([*y]).collect())
        .collect();
    write_table(&a.out, &header, rows.iter().map(Vec::as_slice))?;
    RunManifest::new("gen", config_json(a), Some(a.seed), started)
        .write_for(&a.out)
        .map_err(io_err(&a.out))?;
    Ok(())
}

pub fn cmd_toy(a: &ToyArgs) -> Result<(), CliError> {
    let started = now_ms();
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be positive".into()));
    }
    let study = toy_revealcancel_study(a.seed, a.samples)?;
    let mut header: Vec<String> = ["sample", "x1", "x2", "x3", "x4"]
        .map(String::from)
        .to_vec();
    header.extend(TOY_RULES.iter().map(|r| r.to_string()));
    let mut records: Vec<Vec<String>> = study
        .foregrounds
        .iter()
        .zip(&study.errors)
        .enumerate()
        .map(|(i, (fg, err))| {
            std::iter::once(i.to_string())
                .chain(fg.iter().chain(err).map(|v| format_number(*v)))
                .collect()
        })
        .collect();
    let mut summary = vec![
        "mean".to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
    ];
    summary.extend(study.aggregate().iter().map(|v| format_number(*v)));
    records.push(summary);
    write_records(&a.out, &header, records)?;
    RunManifest::new("toy", config_json(a), Some(a.seed), started)
        .write_for(&a.out)
        .map_err(io_err(&a.out))?;
    Ok(())
}

pub fn cmd_stack(a: &StackArgs) -> Result<(), CliError> {
    let started = now_ms();
    let cfg = StackConfig {
        seed: a.seed,
        data: CorrgroupsSpec {
            seed: a.seed,
            ..Default::default()
        },
        ime_samples: a.ime_samples,
        kernel_samples: a.kernel_samples,
        ..Default::default()
    };
    let report = run_stack_ablation(&cfg)?;
    write_curves(&a.out, &report.curves)?;
    for c in &report.curves {
        println!("{}\t{}", c.method, format_number(c.area()));
    }
    if let Some(p) = &a.phi_out {
        let header = ["feature", "mean_abs_phi"].map(String::from);
        let records = report
            .mean_abs_phi
            .iter()
            .enumerate()
            .map(|(i, v)| vec![format!("x{i}"), format_number(*v)]);
        write_records(p, &header, records)?;
    }
    if let Some(p) = &a.save_model {
        std::fs::write(p, save_model(&report.model)).map_err(io_err(p))?;
    }
    RunManifest::new("stack", config_json(a), Some(a.seed), started)
        .write_for(&a.out)
        .map_err(io_err(&a.out))?;
    Ok(())
}
