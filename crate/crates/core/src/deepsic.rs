//! DeepSIC: iterative soft interference cancellation with one MLP per user.
//!
//! Module `k` sees the received vector and, for every other user, the
//! previous iteration's probability that their symbol is the positive
//! constellation point. It outputs a distribution over the constellation.
//! Each user's module is shared across all iterations.
//!
//! Flattened parameter layout, used by checkpoints and by the hypernetwork:
//! `W1` (row-major, `(N + K - 1) x 16`), `b1` (16), `W2` (row-major, `16 x 2`), `b2` (2).

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::channel::Constellation;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Hidden width of every module.
pub const HIDDEN: usize = 16;
/// Output width: one probability per BPSK point.
pub const OUTPUTS: usize = 2;
/// SIC iterations used unless configured otherwise.
pub const DEFAULT_ITERATIONS: usize = 3;

/// Scalars in one module for `n` antennas and `k` users: `16(N + K + 1) + 18`.
pub fn param_count(n: usize, k: usize) -> usize {
    input_width(n, k) * HIDDEN + HIDDEN + HIDDEN * OUTPUTS + OUTPUTS
}

/// Received samples plus one soft feature per interfering user.
pub fn input_width(n: usize, k: usize) -> usize {
    n + k - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl ModuleParams {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[input_width(n, k), HIDDEN]),
            b1: Tensor::zeros(&[HIDDEN]),
            w2: Tensor::zeros(&[HIDDEN, OUTPUTS]),
            b2: Tensor::zeros(&[OUTPUTS]),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n, k);
        fill_uniform(&mut p.w1, 1.0 / (input_width(n, k) as f64).sqrt(), rng);
        fill_uniform(&mut p.w2, 1.0 / (HIDDEN as f64).sqrt(), rng);
        p
    }

    /// Inverse of [`ModuleParams::flatten`]; `flat` must hold exactly `param_count(n, k)` values.
    pub fn unflatten(n: usize, k: usize, flat: &[f64]) -> Result<Self> {
        let expected = param_count(n, k);
        if flat.len() != expected {
            return Err(Error::shape(
                "unflatten",
                format!(
                    "module for N={n}, K={k} needs {expected} scalars, got {}",
                    flat.len()
                ),
            ));
        }
        let mut p = Self::zeros(n, k);
        let mut offset = 0;
        for t in p.tensors_mut() {
            let len = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(p)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Input width the module was built for.
    pub fn input_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Places the weights on a graph, as leaves when `trainable`.
    pub fn to_graph(&self, g: &mut Graph, trainable: bool) -> ModuleNodes {
        let mut put = |t: &Tensor| {
            if trainable {
                g.leaf(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        ModuleNodes {
            w1: put(&self.w1),
            b1: put(&self.b1),
            w2: put(&self.w2),
            b2: put(&self.b2),
        }
    }
}

fn fill_uniform<R: Rng + ?Sized>(t: &mut Tensor, bound: f64, rng: &mut R) {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for v in t.data_mut() {
        *v = dist.sample(rng);
    }
}

/// Graph handles of one module's weights.
#[derive(Clone, Copy, Debug)]
pub struct ModuleNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

impl ModuleNodes {
    pub fn ids(&self) -> [NodeId; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

/// All user modules of a receiver for `k` users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReceiverParams {
    pub n: usize,
    pub k: usize,
    pub modules: Vec<ModuleParams>,
}

impl ReceiverParams {
    pub fn init<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Config(format!(
                "receiver needs N >= K >= 1, got N={n}, K={k}"
            )));
        }
        let modules = (0..k).map(|_| ModuleParams::init(n, k, rng)).collect();
        Ok(Self { n, k, modules })
    }

    pub fn from_modules(n: usize, modules: Vec<ModuleParams>) -> Result<Self> {
        let k = modules.len();
        if k == 0 {
            return Err(Error::Config("receiver needs at least one module".into()));
        }
        for m in &modules {
            if m.input_width() != input_width(n, k) || m.scalar_count() != param_count(n, k) {
                return Err(Error::shape(
                    "receiver",
                    format!("module input width {} for N={n}, K={k}", m.input_width()),
                ));
            }
        }
        Ok(Self { n, k, modules })
    }

    pub fn module_size(&self) -> usize {
        param_count(self.n, self.k)
    }

    pub fn scalar_count(&self) -> usize {
        self.modules.iter().map(ModuleParams::scalar_count).sum()
    }
}

/// Per-iteration, per-user probability matrices (`[B, 2]` each).
#[derive(Clone, Debug, PartialEq)]
pub struct SoftEstimates {
    pub per_iteration: Vec<Vec<Tensor>>,
}

impl SoftEstimates {
    /// Output of the last iteration, one `[B, 2]` matrix per user.
    pub fn final_probs(&self) -> &[Tensor] {
        self.per_iteration.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Forward pass of one module on a batch `y: [B, N]` with interference
/// features `[B, K - 1]` (absent for a single user). Returns `[B, 2]`.
pub fn module_forward_graph(
    g: &mut Graph,
    module: &ModuleNodes,
    y: NodeId,
    interference: Option<NodeId>,
) -> Result<NodeId> {
    let input = match interference {
        Some(i) => g.concat_cols(&[y, i])?,
        None => y,
    };
    let hidden = g.affine(module.w1, module.b1, input)?;
    let hidden = g.relu(hidden);
    let logits = g.affine(module.w2, module.b2, hidden)?;
    Ok(g.softmax(logits))
}

/// Interference features for user `k` (0-based): the given `[B, 1]` columns of every other user.
fn interference_for(g: &mut Graph, positive: &[NodeId], k: usize) -> Result<Option<NodeId>> {
    let others: Vec<NodeId> = positive
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != k)
        .map(|(_, &id)| id)
        .collect();
    if others.is_empty() {
        return Ok(None);
    }
    g.concat_cols(&others).map(Some)
}

/// One SIC iteration: every module consumes `y` and the other users' previous
/// P(positive point) columns. `prev` is `None` on the first iteration (uniform priors).
pub fn sic_iteration_graph(
    g: &mut Graph,
    modules: &[ModuleNodes],
    y: NodeId,
    prev: Option<&[NodeId]>,
) -> Result<Vec<NodeId>> {
    let k = modules.len();
    let batch = g.value(y).rows();
    let positive: Vec<NodeId> = match prev {
        Some(p) => p.iter().map(|&id| g.column(id, 0)).collect::<Result<_>>()?,
        None => {
            let half = g.constant(Tensor::full(&[batch, 1], 0.5));
            vec![half; k]
        }
    };
    let mut out = Vec::with_capacity(k);
    for (user, module) in modules.iter().enumerate() {
        let interference = interference_for(g, &positive, user)?;
        out.push(module_forward_graph(g, module, y, interference)?);
    }
    Ok(out)
}

/// All `iterations` SIC rounds; element `q - 1` holds iteration `q`'s per-user outputs.
pub fn sic_graph(
    g: &mut Graph,
    modules: &[ModuleNodes],
    y: NodeId,
    iterations: usize,
) -> Result<Vec<Vec<NodeId>>> {
    if iterations == 0 {
        return Err(Error::Config("SIC needs at least one iteration".into()));
    }
    let mut rounds: Vec<Vec<NodeId>> = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let next = sic_iteration_graph(g, modules, y, rounds.last().map(Vec::as_slice))?;
        rounds.push(next);
    }
    Ok(rounds)
}

/// Single-symbol module evaluation; `interferer_probs` holds P(positive) of
/// the other users in ascending user order.
pub fn module_forward(
    module: &ModuleParams,
    y: &[f64],
    interferer_probs: &[f64],
) -> Result<Vec<f64>> {
    if y.len() + interferer_probs.len() != module.input_width() {
        return Err(Error::shape(
            "module_forward",
            format!(
                "{} + {} inputs for a module of width {}",
                y.len(),
                interferer_probs.len(),
                module.input_width()
            ),
        ));
    }
    if interferer_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Invalid(
            "interferer probabilities must lie in [0, 1]".into(),
        ));
    }
    let mut g = Graph::new();
    let nodes = module.to_graph(&mut g, false);
    let y_node = g.constant(Tensor::matrix(1, y.len(), y.to_vec())?);
    let interference = if interferer_probs.is_empty() {
        None
    } else {
        Some(g.constant(Tensor::matrix(
            1,
            interferer_probs.len(),
            interferer_probs.to_vec(),
        )?))
    };
    let out = module_forward_graph(&mut g, &nodes, y_node, interference)?;
    Ok(g.value(out).data().to_vec())
}

/// Runs the receiver on received vectors `y: [B, N]` (or a single `[N]`).
pub fn sic_forward(
    params: &ReceiverParams,
    y: &Tensor,
    iterations: usize,
) -> Result<SoftEstimates> {
    let y = if y.rank() == 1 {
        y.clone().reshape(&[1, y.len()])?
    } else {
        y.clone()
    };
    if y.cols() != params.n {
        return Err(Error::shape(
            "sic_forward",
            format!("received width {} for N = {}", y.cols(), params.n),
        ));
    }
    let per_iteration = sic_direct(params, &y, iterations)?;
    Ok(SoftEstimates { per_iteration })
}

/// `acc += x * w` row by row, skipping zero inputs, in the order the graph's
/// affine op uses, so the result is bit-identical to [`sic_graph`].
fn accumulate(acc: &mut [f64], x: &[f64], w: &[f64]) {
    let width = acc.len();
    for (p, &xp) in x.iter().enumerate() {
        if xp == 0.0 {
            continue;
        }
        for (a, &wpj) in acc.iter_mut().zip(&w[p * width..(p + 1) * width]) {
            *a += xp * wpj;
        }
    }
}

/// Inference without a graph. The received-sample part of each module's first
/// layer does not change between iterations, so it is computed once.
fn sic_direct(params: &ReceiverParams, y: &Tensor, iterations: usize) -> Result<Vec<Vec<Tensor>>> {
    if iterations == 0 {
        return Err(Error::Config("SIC needs at least one iteration".into()));
    }
    let (b, n, k) = (y.rows(), params.n, params.k);
    let received: Vec<Vec<f64>> = params
        .modules
        .iter()
        .map(|m| {
            let mut out = Vec::with_capacity(b * HIDDEN);
            for row in 0..b {
                let mut acc = m.b1.data().to_vec();
                accumulate(&mut acc, y.row(row), &m.w1.data()[..n * HIDDEN]);
                out.extend_from_slice(&acc);
            }
            out
        })
        .collect();
    let mut positive = vec![vec![0.5; b]; k];
    let mut rounds = Vec::with_capacity(iterations);
    let mut features = vec![0.0; k.saturating_sub(1)];
    for _ in 0..iterations {
        let mut round = Vec::with_capacity(k);
        for (user, m) in params.modules.iter().enumerate() {
            let interference_w = &m.w1.data()[n * HIDDEN..];
            let mut out = Vec::with_capacity(b * OUTPUTS);
            for row in 0..b {
                for (slot, other) in (0..k).filter(|&o| o != user).enumerate() {
                    features[slot] = positive[other][row];
                }
                let mut hidden = [0.0; HIDDEN];
                hidden.copy_from_slice(&received[user][row * HIDDEN..(row + 1) * HIDDEN]);
                accumulate(&mut hidden, &features, interference_w);
                for h in &mut hidden {
                    *h = if *h > 0.0 { *h } else { 0.0 };
                }
                let mut logits = [0.0; OUTPUTS];
                logits.copy_from_slice(m.b2.data());
                accumulate(&mut logits, &hidden, m.w2.data());
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for v in &mut logits {
                    *v = (*v - max).exp();
                    total += *v;
                }
                out.extend(logits.iter().map(|v| v / total));
            }
            round.push(Tensor::matrix(b, OUTPUTS, out)?);
        }
        for (p, probs) in positive.iter_mut().zip(&round) {
            for (row, v) in p.iter_mut().enumerate() {
                *v = probs.get(row, 0);
            }
        }
        rounds.push(round);
    }
    Ok(rounds)
}

/// Hard decisions `[B, K]` from per-user `[B, |S|]` distributions: per-user
/// argmax, ties going to the lowest constellation index.
pub fn detect(final_probs: &[Tensor], constellation: &Constellation) -> Result<Tensor> {
    let Some(first) = final_probs.first() else {
        return Err(Error::Invalid("detect needs at least one user".into()));
    };
    let (b, k) = (first.rows(), final_probs.len());
    let mut out = Tensor::zeros(&[b, k]);
    for (user, probs) in final_probs.iter().enumerate() {
        if probs.rows() != b || probs.cols() != constellation.len() {
            return Err(Error::shape(
                "detect",
                format!("user {user} probs {:?}", probs.shape()),
            ));
        }
        for row in 0..b {
            out.set(row, user, constellation.point(argmax(probs.row(row))));
        }
    }
    Ok(out)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Detects a block of received vectors, splitting the batch into chunks that
/// `exec` may process in parallel.
pub fn detect_batch(
    params: &ReceiverParams,
    y: &Tensor,
    iterations: usize,
    constellation: &Constellation,
    exec: Exec,
    chunk: usize,
) -> Result<Tensor> {
    let rows = y.rows();
    let chunk = chunk.max(1);
    let starts: Vec<usize> = (0..rows).step_by(chunk).collect();
    let parts = exec.try_map(starts, |start| {
        let end = (start + chunk).min(rows);
        let est = sic_forward(params, &y.row_range(start, end), iterations)?;
        detect(est.final_probs(), constellation)
    })?;
    let mut data = Vec::with_capacity(rows * params.k);
    for p in &parts {
        data.extend_from_slice(p.data());
    }
    Tensor::matrix(rows, params.k, data)
}
