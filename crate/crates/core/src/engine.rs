//! Layer-wise SHAP propagation.
//!
//! A single-reference explanation runs one backward pass over the graph in
//! reverse topological order, carrying a *multiplier* per node output: the
//! attribution flowing through that output per unit of its difference
//! `f − b` between the foreground and the reference. The output coordinate
//! being explained is seeded with 1.
//!
//! * Linear nodes pass multipliers back through the weight transpose.
//! * Activations and losses use the Rescale rule per coordinate,
//!   `(g(f) − g(b)) / (f − b)`, or, under RevealCancel, are fused with the
//!   linear node feeding them and split its inputs into a positive and a
//!   negative group around a threshold.
//! * Tree ensembles are explained exactly by [`crate::treeshap`] and the
//!   resulting attributions become multipliers for the tree's inputs.
//!
//! Input attributions are `multiplier · (f_x − b_x)`. Each rule conserves
//! `Σ multiplier · Δinput = multiplier · Δoutput` at every node, so the
//! attributions always sum to `f(fg) − f(bg)`. Explanations against a
//! background set average the single-reference results.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{Activation, ActivationRecord, ComputeGraph, LossKind, NodeKind};
use crate::linalg::{mean_of_vectors, Matrix, NeumaierSum};
use crate::treeshap::ensemble_phi;
use crate::{check_len, Attribution, Error, Method, Note, Result};

/// Default `|f − b|` below which the Rescale ratio is replaced by a derivative.
pub const DEFAULT_ZERO_DELTA_EPSILON: f64 = 1e-6;

/// Where RevealCancel splits a linear node's inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    /// Split at 0.
    Zero,
    /// Split at the mean of `wᵢ (f_xᵢ − b_xᵢ)` over the neuron's inputs.
    Mean,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Rescale,
    RevealCancel(ThresholdMode),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleConfig {
    pub rule: Rule,
    pub zero_delta_epsilon: f64,
    /// Output coordinate to explain.
    pub output: usize,
    /// Keep each background's attribution in [`Attribution::per_reference`].
    pub keep_per_reference: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self::rescale()
    }
}

impl RuleConfig {
    pub fn rescale() -> Self {
        Self {
            rule: Rule::Rescale,
            zero_delta_epsilon: DEFAULT_ZERO_DELTA_EPSILON,
            output: 0,
            keep_per_reference: false,
        }
    }

    pub fn reveal_cancel(mode: ThresholdMode) -> Self {
        Self {
            rule: Rule::RevealCancel(mode),
            ..Self::rescale()
        }
    }

    pub fn with_output(mut self, output: usize) -> Self {
        self.output = output;
        self
    }

    pub fn keep_per_reference(mut self, keep: bool) -> Self {
        self.keep_per_reference = keep;
        self
    }

    pub fn method(&self) -> Method {
        match self.rule {
            Rule::Rescale => Method::Rescale,
            Rule::RevealCancel(m) => Method::RevealCancel(m),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.zero_delta_epsilon > 0.0 && self.zero_delta_epsilon.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "zero_delta_epsilon must be positive and finite, got {}",
                self.zero_delta_epsilon
            )));
        }
        if let Rule::RevealCancel(ThresholdMode::Fixed(t)) = self.rule {
            if !t.is_finite() {
                return Err(Error::InvalidConfig(
                    "fixed threshold must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A scalar nonlinearity: an activation or a loss with its target bound.
#[derive(Debug, Clone, Copy)]
enum Scalar {
    Act(Activation),
    Loss(LossKind, f64),
}

impl Scalar {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Scalar::Act(a) => a.apply(z),
            Scalar::Loss(l, t) => l.apply(z, t),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Scalar::Act(a) => a.derivative(z),
            Scalar::Loss(l, t) => l.derivative(z, t),
        }
    }

    fn rescale(self, f: f64, b: f64, eps: f64) -> f64 {
        let d = f - b;
        if libm::fabs(d) >= eps {
            (self.apply(f) - self.apply(b)) / d
        } else {
            self.derivative(0.5 * (f + b))
        }
    }
}

/// Rescale multiplier `(g(f_h) − g(b_h)) / (f_h − b_h)`, or `g'((f_h + b_h)/2)`
/// when `|f_h − b_h| < epsilon`.
pub fn rescale_multiplier(f_h: f64, b_h: f64, g: Activation, epsilon: f64) -> f64 {
    Scalar::Act(g).rescale(f_h, b_h, epsilon)
}

/// Multipliers of one fused `g(w·x + c)` neuron with respect to `x` under
/// RevealCancel, such that `Σᵢ mᵢ (f_xᵢ − b_xᵢ) = g(w·f_x + c) − g(w·b_x + c)`.
#[allow(clippy::too_many_arguments)]
fn reveal_cancel_row(
    w: &[f64],
    c: f64,
    g: Scalar,
    xf: &[f64],
    xb: &[f64],
    mode: ThresholdMode,
    eps: f64,
    out: &mut [f64],
) {
    let n = w.len();
    let delta: Vec<f64> = (0..n).map(|i| w[i] * (xf[i] - xb[i])).collect();
    let t = match mode {
        ThresholdMode::Zero => 0.0,
        ThresholdMode::Mean => {
            let mut s = NeumaierSum::default();
            delta.iter().for_each(|&d| s.add(d));
            s.total() / n.max(1) as f64
        }
        ThresholdMode::Fixed(t) => t,
    };
    // Positive group iff δᵢ > t; ties fall into the negative group.
    let positive: Vec<bool> = delta.iter().map(|&d| d > t).collect();

    let mut sums = [[NeumaierSum::default(); 3]; 2]; // [neg, pos] × [f, b, δ]
    for i in 0..n {
        let s = &mut sums[usize::from(positive[i])];
        s[0].add(w[i] * xf[i]);
        s[1].add(w[i] * xb[i]);
        s[2].add(delta[i]);
    }
    let (fm, bm, dm) = (sums[0][0].total(), sums[0][1].total(), sums[0][2].total());
    let (fp, bp, dp) = (sums[1][0].total(), sums[1][1].total(), sums[1][2].total());

    let g_ff = g.apply(fp + fm + c);
    let g_bf = g.apply(bp + fm + c);
    let g_fb = g.apply(fp + bm + c);
    let g_bb = g.apply(bp + bm + c);
    let phi_pos = 0.5 * ((g_ff - g_bf) + (g_fb - g_bb));
    let phi_neg = 0.5 * ((g_ff - g_fb) + (g_bf - g_bb));
    let midpoint = 0.5 * ((fp + fm) + (bp + bm)) + c;

    for (group, phi, d) in [(true, phi_pos, dp), (false, phi_neg, dm)] {
        let members = (0..n).filter(|&i| positive[i] == group);
        if libm::fabs(d) >= eps {
            let ratio = phi / d;
            members.for_each(|i| out[i] = ratio * w[i]);
            continue;
        }
        let abs_total: f64 = (0..n)
            .filter(|&i| positive[i] == group)
            .map(|i| libm::fabs(delta[i]))
            .sum();
        if abs_total > 0.0 {
            // Group difference cancels out: share φ by |δᵢ| instead.
            for i in members {
                let dx = xf[i] - xb[i];
                out[i] = if dx != 0.0 {
                    phi * libm::fabs(delta[i]) / abs_total / dx
                } else {
                    0.0
                };
            }
        } else {
            let slope = g.derivative(midpoint);
            members.for_each(|i| out[i] = slope * w[i]);
        }
    }
}

/// Per-neuron RevealCancel attributions of a fused `g(W x + b)` layer:
/// entry `(j, i)` is the share of neuron `j`'s change credited to input `i`.
pub fn reveal_cancel_split(
    weights: &Matrix,
    bias: &[f64],
    g: Activation,
    foreground: &[f64],
    background: &[f64],
    mode: ThresholdMode,
    epsilon: f64,
) -> Result<Matrix> {
    check_len("bias", weights.rows(), bias.len())?;
    check_len("foreground", weights.cols(), foreground.len())?;
    check_len("background", weights.cols(), background.len())?;
    let mut out = Matrix::zeros(weights.rows(), weights.cols());
    for (j, &c) in bias.iter().enumerate() {
        let row = out.row_mut(j);
        reveal_cancel_row(
            weights.row(j),
            c,
            Scalar::Act(g),
            foreground,
            background,
            mode,
            epsilon,
            row,
        );
        for (i, m) in row.iter_mut().enumerate() {
            *m *= foreground[i] - background[i];
        }
    }
    Ok(out)
}

/// Tree multiplier: `φⱼ / Δⱼ`, zero where the tree input did not move.
#[inline]
fn tree_ratio(phi: f64, delta: f64, eps: f64) -> f64 {
    if phi == 0.0 || delta == 0.0 {
        return 0.0;
    }
    let r = phi / delta;
    if libm::fabs(delta) < eps && !r.is_finite() {
        0.0
    } else {
        r
    }
}

struct Pass<'a> {
    graph: &'a ComputeGraph,
    fg: &'a ActivationRecord,
    bg: &'a ActivationRecord,
    cfg: &'a RuleConfig,
    multipliers: Vec<Vec<f64>>,
    notes: Vec<Note>,
}

impl Pass<'_> {
    /// Adds `m_in`, a multiplier over `node`'s concatenated input, into the
    /// output multipliers of its producers.
    fn scatter(&mut self, node: usize, m_in: &[f64]) {
        let mut offset = 0;
        for &p in self.graph.producers(node) {
            let d = self.graph.out_dim(p);
            for (acc, &m) in self.multipliers[p]
                .iter_mut()
                .zip(&m_in[offset..offset + d])
            {
                *acc += m;
            }
            offset += d;
        }
    }

    fn fused_linear(&self, node: usize) -> Option<usize> {
        match self.graph.producers(node) {
            [u] if matches!(self.graph.nodes()[*u].kind, NodeKind::Linear { .. }) => Some(*u),
            _ => None,
        }
    }

    fn nonlinearity(&mut self, node: usize, g: Scalar) {
        let eps = self.cfg.zero_delta_epsilon;
        let upstream = core::mem::take(&mut self.multipliers[node]);
        if let Rule::RevealCancel(mode) = self.cfg.rule {
            if let Some(u) = self.fused_linear(node) {
                let NodeKind::Linear { weights, bias } = &self.graph.nodes()[u].kind else {
                    unreachable!()
                };
                let xf = self.graph.node_input(u, self.fg);
                let xb = self.graph.node_input(u, self.bg);
                let mut m_x = vec![0.0; weights.cols()];
                let mut row = vec![0.0; weights.cols()];
                for (j, &up) in upstream.iter().enumerate() {
                    if up == 0.0 {
                        continue;
                    }
                    reveal_cancel_row(weights.row(j), bias[j], g, &xf, &xb, mode, eps, &mut row);
                    for (acc, &m) in m_x.iter_mut().zip(&row) {
                        *acc += up * m;
                    }
                }
                self.scatter(u, &m_x);
                return;
            }
            self.notes.push(Note::RescaleFallback {
                node: String::from(self.graph.nodes()[node].id.as_str()),
            });
        }
        let hf = self.graph.node_input(node, self.fg);
        let hb = self.graph.node_input(node, self.bg);
        let m_in: Vec<f64> = upstream
            .iter()
            .zip(hf.iter().zip(hb.iter()))
            .map(|(&up, (&f, &b))| {
                if up == 0.0 {
                    0.0
                } else {
                    up * g.rescale(f, b, eps)
                }
            })
            .collect();
        self.scatter(node, &m_in);
    }

    fn run(mut self) -> (Vec<f64>, Vec<Note>) {
        let graph = self.graph;
        for v in (0..graph.nodes().len()).rev() {
            if self.multipliers[v].iter().all(|&m| m == 0.0) {
                continue;
            }
            match &graph.nodes()[v].kind {
                NodeKind::Input { .. } => {}
                NodeKind::Linear { weights, .. } => {
                    let m_in = weights.tr_mul_vec(&self.multipliers[v]);
                    self.scatter(v, &m_in);
                }
                NodeKind::Activation(a) => self.nonlinearity(v, Scalar::Act(*a)),
                NodeKind::Loss { kind, target } => {
                    self.nonlinearity(v, Scalar::Loss(*kind, *target))
                }
                NodeKind::TreeEnsemble(ens) => {
                    let up = self.multipliers[v][0];
                    let xf = graph.node_input(v, self.fg);
                    let xb = graph.node_input(v, self.bg);
                    let phi = ensemble_phi(ens, &xf, &xb);
                    let eps = self.cfg.zero_delta_epsilon;
                    let m_in: Vec<f64> = phi
                        .iter()
                        .zip(xf.iter().zip(xb.iter()))
                        .map(|(&p, (&f, &b))| up * tree_ratio(p, f - b, eps))
                        .collect();
                    self.scatter(v, &m_in);
                }
            }
        }
        let input = graph.input_node();
        let xf = self.fg.node(input);
        let xb = self.bg.node(input);
        let phi = self.multipliers[input]
            .iter()
            .zip(xf.iter().zip(xb))
            .map(|(&m, (&f, &b))| m * (f - b))
            .collect();
        (phi, self.notes)
    }
}

fn single_reference_phi(
    graph: &ComputeGraph,
    fg: &ActivationRecord,
    bg: &ActivationRecord,
    cfg: &RuleConfig,
) -> (Vec<f64>, Vec<Note>) {
    let mut multipliers: Vec<Vec<f64>> = (0..graph.nodes().len())
        .map(|v| vec![0.0; graph.out_dim(v)])
        .collect();
    multipliers[graph.output_node()][cfg.output] = 1.0;
    Pass {
        graph,
        fg,
        bg,
        cfg,
        multipliers,
        notes: Vec::new(),
    }
    .run()
}

/// Explains output `config.output` of `graph` at `foreground`, averaging
/// single-reference attributions over `backgrounds`.
pub fn explain(
    graph: &ComputeGraph,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    config: &RuleConfig,
) -> Result<Attribution> {
    config.validate()?;
    if backgrounds.is_empty() {
        return Err(Error::EmptyBackground);
    }
    graph.output_model(config.output)?;
    graph.check_sample(foreground)?;
    let fg = graph.forward_unchecked(foreground);
    let fx = fg.output()[config.output];
    if !fx.is_finite() {
        return Err(Error::NonFiniteOutput);
    }

    let mut per_reference = Vec::with_capacity(backgrounds.len());
    let mut notes: Vec<Note> = Vec::new();
    let mut base = NeumaierSum::default();
    for b in backgrounds {
        graph.check_sample(b)?;
        let bg = graph.forward_unchecked(b);
        let fb = bg.output()[config.output];
        if !fb.is_finite() {
            return Err(Error::NonFiniteOutput);
        }
        base.add(fb);
        let (phi, n) = single_reference_phi(graph, &fg, &bg, config);
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFiniteOutput);
        }
        for note in n {
            if !notes.contains(&note) {
                notes.push(note);
            }
        }
        per_reference.push(phi);
    }

    Ok(Attribution {
        phi: mean_of_vectors(&per_reference),
        method: config.method(),
        fx,
        base: base.total() / backgrounds.len() as f64,
        per_reference: config.keep_per_reference.then_some(per_reference),
        notes,
    })
}

/// Single-reference explanation.
pub fn explain_single(
    graph: &ComputeGraph,
    foreground: &[f64],
    background: &[f64],
    config: &RuleConfig,
) -> Result<Attribution> {
    explain(graph, foreground, &[background.to_vec()], config)
}

/// [`explain`] for a network feeding a tree ensemble. Every tree ensemble
/// must be the graph output, or feed only the output loss node.
pub fn explain_stack(
    graph: &ComputeGraph,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    config: &RuleConfig,
) -> Result<Attribution> {
    let mut found = false;
    for (v, node) in graph.nodes().iter().enumerate() {
        if !matches!(node.kind, NodeKind::TreeEnsemble(_)) {
            continue;
        }
        found = true;
        let terminal = v == graph.output_node()
            || matches!(graph.consumers(v), [c] if *c == graph.output_node()
                && matches!(graph.nodes()[*c].kind, NodeKind::Loss { .. }));
        if !terminal {
            return Err(Error::TreeNotTerminal {
                node: node.id.clone(),
            });
        }
    }
    if !found {
        return Err(Error::NoTreeEnsemble);
    }
    explain(graph, foreground, backgrounds, config)
}

/// Explains `loss(f(x), target)` instead of the model output. The graph
/// output must be scalar.
pub fn explain_loss(
    graph: &ComputeGraph,
    foreground: &[f64],
    backgrounds: &[Vec<f64>],
    kind: LossKind,
    target: f64,
    config: &RuleConfig,
) -> Result<Attribution> {
    let with_loss = graph.with_loss(kind, target)?;
    explain(&with_loss, foreground, backgrounds, &config.with_output(0))
}
