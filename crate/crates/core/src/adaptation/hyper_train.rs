//! Offline training of the hypernetwork and its two embedding vectors.
//!
//! Each step samples a user count and a training block, estimates the
//! channel from that block's pilots, generates the receiver on the autodiff
//! graph and backpropagates the receiver's cross-entropy into the
//! hypernetwork weights and the embeddings.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Datasets;
use super::estimate::ls_estimate;
use super::hypernet::{generate_receiver, HypernetParams};
use super::train::{product_loss, receiver_loss, user_labels};
use crate::autodiff::{Adam, Graph, Tensor};
use crate::channel::Constellation;
use crate::deepsic::{sic_graph, DEFAULT_ITERATIONS};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperTrainConfig {
    pub lr: f64,
    /// Adam steps on each sampled block.
    pub iterations_per_block: usize,
    pub batch_size: usize,
    /// Number of blocks sampled over the whole run.
    pub sampled_blocks: usize,
    pub sic_iterations: usize,
    /// Evaluate the loss over the whole training set every this many
    /// sampled blocks; 0 disables evaluation.
    pub eval_every: usize,
}

impl Default for HyperTrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            iterations_per_block: 25,
            batch_size: 512,
            sampled_blocks: 400,
            sic_iterations: DEFAULT_ITERATIONS,
            eval_every: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperTrainReport {
    /// Mini-batch loss of every Adam step.
    pub losses: Vec<f64>,
    /// Sampled blocks skipped because their pilots were singular.
    pub skipped_blocks: usize,
    /// Training-set loss before training and after every `eval_every` sampled blocks.
    pub eval_losses: Vec<f64>,
}

/// Trains from `init`, or from a fresh initialization keyed by `seed`.
pub fn hypernet_train(
    datasets: &Datasets,
    constellation: &Constellation,
    cfg: &HyperTrainConfig,
    init: Option<HypernetParams>,
    seed: u64,
) -> Result<(HypernetParams, HyperTrainReport)> {
    let ks: Vec<usize> = (2..=datasets.k_max).collect();
    if ks.is_empty() {
        return Err(Error::Config(
            "hypernetwork training needs K_max >= 2".into(),
        ));
    }
    for &k in &ks {
        datasets.get(k)?;
    }
    let mut params = match init {
        Some(p) => p,
        None => HypernetParams::init(
            datasets.n,
            datasets.k_max,
            &mut stream(seed, Stream::Init, 0),
        )?,
    };
    let mut opt = Adam::new(cfg.lr, params.tensors());
    let mut rng = stream(seed, Stream::Training, 0);
    let mut report = HyperTrainReport::default();
    if cfg.eval_every > 0 {
        report.eval_losses.push(dataset_loss(
            &params,
            datasets,
            constellation,
            cfg.sic_iterations,
        )?);
    }

    for step in 0..cfg.sampled_blocks {
        let k = ks[rng.random_range(0..ks.len())];
        let data = datasets.get(k)?;
        let block = &data.blocks[rng.random_range(0..data.blocks.len())];
        let (ps, py) = block.pilots();
        let h_hat = match ls_estimate(&ps, &py) {
            Ok(h) => h,
            Err(Error::SingularPilots { .. }) => {
                report.skipped_blocks += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let labels = user_labels(&block.s, constellation)?;
        for _ in 0..cfg.iterations_per_block {
            let rows = block.len();
            let idx: Vec<usize> = if cfg.batch_size < rows {
                sample(&mut rng, rows, cfg.batch_size).into_vec()
            } else {
                (0..rows).collect()
            };
            let loss = step_on_batch(
                &mut params,
                &mut opt,
                &h_hat,
                &block.y.select_rows(&idx),
                &labels,
                &idx,
                cfg,
            )?;
            report.losses.push(loss);
        }
        if step % 50 == 0 {
            log::debug!(
                "hypernet step {step}: loss {:.4}",
                report.losses.last().copied().unwrap_or(f64::NAN)
            );
        }
        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            report.eval_losses.push(dataset_loss(
                &params,
                datasets,
                constellation,
                cfg.sic_iterations,
            )?);
        }
    }
    Ok((params, report))
}

/// Mean over every user count of the per-user cross-entropy of the generated
/// receivers on their own training blocks.
pub fn dataset_loss(
    params: &HypernetParams,
    datasets: &Datasets,
    constellation: &Constellation,
    sic_iterations: usize,
) -> Result<f64> {
    let mut per_k = Vec::with_capacity(datasets.per_k.len());
    for (&k, data) in &datasets.per_k {
        if k < 2 || k > params.k_max {
            continue;
        }
        let mut total = 0.0;
        let mut used = 0;
        for block in &data.blocks {
            let (ps, py) = block.pilots();
            let h_hat = match ls_estimate(&ps, &py) {
                Ok(h) => h,
                Err(Error::SingularPilots { .. }) => continue,
                Err(e) => return Err(e),
            };
            let receiver = generate_receiver(params, &h_hat)?;
            total += receiver_loss(&receiver, &block.y, &block.s, constellation, sic_iterations)?
                / k as f64;
            used += 1;
        }
        if used > 0 {
            per_k.push(total / used as f64);
        }
    }
    if per_k.is_empty() {
        return Err(Error::Invalid(
            "no usable training blocks to evaluate".into(),
        ));
    }
    Ok(per_k.iter().sum::<f64>() / per_k.len() as f64)
}

fn step_on_batch(
    params: &mut HypernetParams,
    opt: &mut Adam,
    h_hat: &Tensor,
    y: &Tensor,
    labels: &[Vec<usize>],
    idx: &[usize],
    cfg: &HyperTrainConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let nodes = params.to_graph(&mut g, true);
    let modules = nodes.generate(&mut g, h_hat)?;
    let y_node = g.constant(y.clone());
    let rounds = sic_graph(&mut g, &modules, y_node, cfg.sic_iterations)?;
    let batch_labels: Vec<Vec<usize>> = labels
        .iter()
        .map(|l| idx.iter().map(|&i| l[i]).collect())
        .collect();
    let loss = product_loss(&mut g, rounds.last().expect("rounds"), &batch_labels)?;
    let value = g.value(loss).item();
    let mut grads = g.backward(loss)?;
    let grads: Vec<Tensor> = nodes
        .ids()
        .iter()
        .map(|&id| grads.take(id).expect("leaf gradient"))
        .collect();
    opt.step(params.tensors_mut(), &grads)?;
    Ok(value)
}

/// Loss of the hypernetwork-generated receiver on a labeled batch, plus the
/// gradients of every hypernetwork tensor (in [`HypernetParams::tensors`] order).
pub fn hypernet_loss_and_grads(
    params: &HypernetParams,
    h_hat: &Tensor,
    y: &Tensor,
    s: &Tensor,
    constellation: &Constellation,
    sic_iterations: usize,
) -> Result<(f64, Vec<Tensor>)> {
    let labels = user_labels(s, constellation)?;
    let mut g = Graph::new();
    let nodes = params.to_graph(&mut g, true);
    let modules = nodes.generate(&mut g, h_hat)?;
    let y_node = g.constant(y.clone());
    let rounds = sic_graph(&mut g, &modules, y_node, sic_iterations)?;
    let loss = product_loss(&mut g, rounds.last().expect("rounds"), &labels)?;
    let value = g.value(loss).item();
    let mut grads = g.backward(loss)?;
    Ok((
        value,
        nodes
            .ids()
            .iter()
            .map(|&id| grads.take(id).expect("leaf gradient"))
            .collect(),
    ))
}
