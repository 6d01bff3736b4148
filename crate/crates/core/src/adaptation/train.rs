//! Gradient training of DeepSIC receivers: offline joint training and per-block online training.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::dataset::Datasets;
use crate::autodiff::{Adam, Graph, NodeId, Tensor};
use crate::channel::{Constellation, TransmissionBlock};
use crate::deepsic::{
    module_forward_graph, sic_graph, sic_iteration_graph, ModuleNodes, ModuleParams,
    ReceiverParams, DEFAULT_ITERATIONS,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::harness::ComplexityLedger;
use crate::rng::{stream, SimRng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingRegime {
    /// Train every module for iteration `q` on the previous iteration's soft
    /// estimates, then roll the estimates forward.
    Sequential,
    /// Minimize the final-iteration loss through all iterations at once.
    EndToEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Adam steps; per module and SIC iteration in the sequential regime.
    pub iterations: usize,
    /// Mini-batch size; `None` uses every sample each step.
    pub batch_size: Option<usize>,
    pub regime: TrainingRegime,
    pub sic_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            iterations: 100,
            batch_size: None,
            regime: TrainingRegime::Sequential,
            sic_iterations: DEFAULT_ITERATIONS,
        }
    }
}

impl TrainConfig {
    /// Offline defaults: mini-batches of 512.
    pub fn joint() -> Self {
        Self {
            batch_size: Some(512),
            ..Self::default()
        }
    }
}

/// Sum over users of the mean negative log-likelihood of the final SIC
/// iteration, i.e. the cross-entropy of the product distribution.
pub fn receiver_loss(
    params: &ReceiverParams,
    y: &Tensor,
    s: &Tensor,
    constellation: &Constellation,
    sic_iterations: usize,
) -> Result<f64> {
    let labels = user_labels(s, constellation)?;
    let mut g = Graph::new();
    let modules: Vec<ModuleNodes> = params
        .modules
        .iter()
        .map(|m| m.to_graph(&mut g, false))
        .collect();
    let y_node = g.constant(y.clone());
    let rounds = sic_graph(&mut g, &modules, y_node, sic_iterations)?;
    let loss = product_loss(&mut g, rounds.last().expect("at least one round"), &labels)?;
    Ok(g.value(loss).item())
}

/// Constellation indices of each user's symbols, one vector per column of `s`.
pub(crate) fn user_labels(s: &Tensor, constellation: &Constellation) -> Result<Vec<Vec<usize>>> {
    (0..s.cols())
        .map(|k| constellation.indices(&s.column(k)))
        .collect()
}

pub(crate) fn product_loss(
    g: &mut Graph,
    probs: &[NodeId],
    labels: &[Vec<usize>],
) -> Result<NodeId> {
    let terms = probs
        .iter()
        .zip(labels)
        .map(|(&p, l)| g.cross_entropy(p, l))
        .collect::<Result<Vec<_>>>()?;
    g.add_all(&terms)
}

fn select_labels(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn batch_indices(rng: &mut SimRng, rows: usize, batch: Option<usize>) -> Option<Vec<usize>> {
    match batch {
        Some(b) if b < rows => Some(sample(rng, rows, b).into_vec()),
        _ => None,
    }
}

fn rows_of(t: &Tensor, idx: &Option<Vec<usize>>) -> Tensor {
    match idx {
        Some(i) => t.select_rows(i),
        None => t.clone(),
    }
}

/// Trains `params` in place on labeled samples `y: [B, N]`, `s: [B, K]`.
///
/// `seed` keys the mini-batch streams so results do not depend on `exec`.
pub fn train_receiver(
    params: &mut ReceiverParams,
    y: &Tensor,
    s: &Tensor,
    constellation: &Constellation,
    cfg: &TrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<()> {
    if y.rows() == 0 {
        return Err(Error::EmptyBatch("train_receiver"));
    }
    if y.rows() != s.rows() || s.cols() != params.k || y.cols() != params.n {
        return Err(Error::shape(
            "train_receiver",
            format!(
                "y {:?}, s {:?} for N={}, K={}",
                y.shape(),
                s.shape(),
                params.n,
                params.k
            ),
        ));
    }
    if cfg.iterations == 0 {
        return Ok(());
    }
    let labels = user_labels(s, constellation)?;
    match cfg.regime {
        TrainingRegime::Sequential => train_sequential(params, y, &labels, cfg, seed, exec),
        TrainingRegime::EndToEnd => train_end_to_end(params, y, &labels, cfg, seed),
    }
}

fn train_sequential(
    params: &mut ReceiverParams,
    y: &Tensor,
    labels: &[Vec<usize>],
    cfg: &TrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<()> {
    let k = params.k;
    let rows = y.rows();
    let mut optimizers: Vec<Adam> = params
        .modules
        .iter()
        .map(|m| Adam::new(cfg.lr, m.tensors()))
        .collect();
    // P(positive point) of every user from the previous iteration, [B, 1] each.
    let mut positive: Vec<Tensor> = vec![Tensor::full(&[rows, 1], 0.5); k];

    for q in 0..cfg.sic_iterations {
        let features: Vec<Option<Tensor>> = (0..k)
            .map(|user| interference_matrix(&positive, user))
            .collect();
        let work: Vec<(usize, ModuleParams, Adam)> = params
            .modules
            .drain(..)
            .zip(optimizers.drain(..))
            .enumerate()
            .map(|(u, (m, o))| (u, m, o))
            .collect();
        let trained = exec.try_map(work, |(user, mut module, mut opt)| {
            let mut rng = stream(seed, Stream::Training, ((q as u64) << 32) | user as u64);
            for _ in 0..cfg.iterations {
                let idx = batch_indices(&mut rng, rows, cfg.batch_size);
                let mut g = Graph::new();
                let nodes = module.to_graph(&mut g, true);
                let y_node = g.constant(rows_of(y, &idx));
                let interference = features[user]
                    .as_ref()
                    .map(|f| g.constant(rows_of(f, &idx)));
                let probs = module_forward_graph(&mut g, &nodes, y_node, interference)?;
                let batch_labels = match &idx {
                    Some(i) => select_labels(&labels[user], i),
                    None => labels[user].clone(),
                };
                let loss = g.cross_entropy(probs, &batch_labels)?;
                let mut grads = g.backward(loss)?;
                let grads: Vec<Tensor> = nodes
                    .ids()
                    .iter()
                    .map(|&id| grads.take(id).expect("leaf gradient"))
                    .collect();
                opt.step(module.tensors_mut(), &grads)?;
            }
            Ok::<_, Error>((module, opt))
        })?;
        for (m, o) in trained {
            params.modules.push(m);
            optimizers.push(o);
        }
        if q + 1 < cfg.sic_iterations {
            positive = roll_forward(params, y, &positive)?;
        }
    }
    Ok(())
}

fn interference_matrix(positive: &[Tensor], user: usize) -> Option<Tensor> {
    let others: Vec<&Tensor> = positive
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != user)
        .map(|(_, t)| t)
        .collect();
    if others.is_empty() {
        return None;
    }
    let rows = others[0].rows();
    let mut data = Vec::with_capacity(rows * others.len());
    for r in 0..rows {
        data.extend(others.iter().map(|t| t.data()[r]));
    }
    Some(Tensor::matrix(rows, others.len(), data).expect("rows * (K - 1)"))
}

/// One SIC iteration on the full sample set given the previous P(positive) columns.
fn roll_forward(params: &ReceiverParams, y: &Tensor, positive: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut g = Graph::new();
    let modules: Vec<ModuleNodes> = params
        .modules
        .iter()
        .map(|m| m.to_graph(&mut g, false))
        .collect();
    let y_node = g.constant(y.clone());
    // Feed the previous columns back in as two-point distributions.
    let prev: Vec<NodeId> = positive
        .iter()
        .map(|p| {
            let data: Vec<f64> = p.data().iter().flat_map(|&v| [v, 1.0 - v]).collect();
            g.constant(Tensor::matrix(p.rows(), 2, data).expect("two columns"))
        })
        .collect();
    let out = sic_iteration_graph(&mut g, &modules, y_node, Some(&prev))?;
    Ok(out
        .iter()
        .map(|&id| Tensor::matrix(y.rows(), 1, g.value(id).column(0)).expect("column"))
        .collect())
}

fn train_end_to_end(
    params: &mut ReceiverParams,
    y: &Tensor,
    labels: &[Vec<usize>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<()> {
    let rows = y.rows();
    let mut opt = Adam::new(cfg.lr, params.modules.iter().flat_map(|m| m.tensors()));
    let mut rng = stream(seed, Stream::Training, u64::MAX);
    for _ in 0..cfg.iterations {
        let idx = batch_indices(&mut rng, rows, cfg.batch_size);
        let mut g = Graph::new();
        let modules: Vec<ModuleNodes> = params
            .modules
            .iter()
            .map(|m| m.to_graph(&mut g, true))
            .collect();
        let y_node = g.constant(rows_of(y, &idx));
        let rounds = sic_graph(&mut g, &modules, y_node, cfg.sic_iterations)?;
        let batch_labels: Vec<Vec<usize>> = labels
            .iter()
            .map(|l| match &idx {
                Some(i) => select_labels(l, i),
                None => l.clone(),
            })
            .collect();
        let loss = product_loss(&mut g, rounds.last().expect("rounds"), &batch_labels)?;
        let mut grads = g.backward(loss)?;
        let grads: Vec<Tensor> = modules
            .iter()
            .flat_map(|m| m.ids())
            .map(|id| grads.take(id).expect("leaf gradient"))
            .collect();
        opt.step(
            params.modules.iter_mut().flat_map(|m| m.tensors_mut()),
            &grads,
        )?;
    }
    Ok(())
}

/// Offline receivers, one per user count.
#[derive(Clone, Debug, PartialEq)]
pub struct JointBank {
    pub n: usize,
    pub k_max: usize,
    pub receivers: BTreeMap<usize, ReceiverParams>,
}

impl JointBank {
    pub fn get(&self, k: usize) -> Result<&ReceiverParams> {
        self.receivers.get(&k).ok_or(Error::MissingCheckpoint(k))
    }
}

/// Trains one receiver per user count present in `datasets`.
pub fn joint_train(
    datasets: &Datasets,
    constellation: &Constellation,
    cfg: &TrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<JointBank> {
    if datasets.per_k.is_empty() {
        return Err(Error::Invalid(
            "joint training needs at least one dataset".into(),
        ));
    }
    let ks: Vec<usize> = datasets.per_k.keys().copied().collect();
    let trained = exec.try_map(ks, |k| {
        let data = datasets.get(k)?;
        let (y, s) = data.pooled();
        let mut params =
            ReceiverParams::init(datasets.n, k, &mut stream(seed, Stream::Init, k as u64))?;
        log::info!("joint training K={k} on {} symbols", y.rows());
        train_receiver(
            &mut params,
            &y,
            &s,
            constellation,
            cfg,
            seed ^ ((k as u64) << 40),
            exec,
        )?;
        Ok::<_, Error>((k, params))
    })?;
    Ok(JointBank {
        n: datasets.n,
        k_max: datasets.k_max,
        receivers: trained.into_iter().collect(),
    })
}

/// Retrains the receiver on one block's pilots.
///
/// Starts from `prev` when it serves the same number of users, otherwise
/// from a fresh initialization drawn from `seed`. Records the training cost.
pub fn online_adapt(
    prev: Option<&ReceiverParams>,
    block: &TransmissionBlock,
    constellation: &Constellation,
    cfg: &TrainConfig,
    seed: u64,
    exec: Exec,
    ledger: &mut ComplexityLedger,
) -> Result<ReceiverParams> {
    if block.pilot_len() == 0 {
        return Err(Error::EmptyBatch("online_adapt"));
    }
    let n = block.pilot_y.cols();
    let mut params = match prev {
        Some(p) if p.k == block.k && p.n == n => p.clone(),
        _ => ReceiverParams::init(
            n,
            block.k,
            &mut stream(seed, Stream::Online, block.t as u64),
        )?,
    };
    if cfg.iterations == 0 {
        return Ok(params);
    }
    train_receiver(
        &mut params,
        &block.pilot_y,
        &block.pilot_s,
        constellation,
        cfg,
        seed ^ block.t as u64,
        exec,
    )?;
    ledger.record_training(params.module_size(), block.pilot_len(), block.k);
    Ok(params)
}
