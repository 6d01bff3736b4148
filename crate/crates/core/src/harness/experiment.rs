//! Block-by-block evaluation of one adaptation method.

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use super::ComplexityLedger;
use crate::adaptation::{hypernet_adapt, online_adapt, HypernetParams, JointBank};
use crate::autodiff::Tensor;
use crate::channel::{BlockGenerator, TransmissionBlock};
use crate::deepsic::{detect_batch, ReceiverParams};
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Fraction of entries where `est` and `truth` differ.
pub fn ser(est: &Tensor, truth: &Tensor) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::shape(
            "ser",
            format!("{:?} vs {:?}", est.shape(), truth.shape()),
        ));
    }
    if truth.is_empty() {
        return Err(Error::EmptyBatch("ser"));
    }
    let errors = est
        .data()
        .iter()
        .zip(truth.data())
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / truth.len() as f64)
}

/// Offline-trained weights a run may draw on.
#[derive(Clone, Debug, Default)]
pub struct Models {
    pub joint: Option<JointBank>,
    pub hyper: Option<HypernetParams>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockResult {
    pub t: usize,
    pub k: usize,
    pub ser: f64,
    pub train_units: f64,
    pub infer_units: f64,
    pub wall_ms: f64,
    /// Modules in the receiver used for this block.
    pub modules: usize,
    /// Hash of the receiver weights, for checking which blocks shared a receiver.
    pub weights_digest: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub blocks: usize,
    /// Symbol errors over all blocks divided by symbols over all blocks.
    pub aggregate_ser: f64,
    pub mean_block_ser: f64,
    pub user_counts: Vec<usize>,
    pub ledger: ComplexityLedger,
    pub total_units: f64,
    pub total_wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub method: Method,
    pub blocks: Vec<BlockResult>,
    pub ledger: ComplexityLedger,
    pub summary: Summary,
}

/// FNV-1a over the bit patterns of every receiver weight.
fn weights_digest(params: &ReceiverParams) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for m in &params.modules {
        for t in m.tensors() {
            for v in t.data() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
    }
    h
}

/// User count of each block `1..=T`.
pub fn schedule(cfg: &ExperimentConfig, gen: &BlockGenerator) -> Vec<usize> {
    (1..=cfg.blocks)
        .map(|t| {
            gen.users_at(t)
                .unwrap_or_else(|| cfg.users.users_at(t, cfg.seed))
        })
        .collect()
}

/// The `t`-th block of a run. Identical for every method under the same seed.
pub fn block_at(
    cfg: &ExperimentConfig,
    gen: &BlockGenerator,
    t: usize,
    k: usize,
) -> Result<TransmissionBlock> {
    gen.make_block(t, k, &mut stream(cfg.seed, Stream::Block, t as u64))
}

fn evaluate(
    cfg: &ExperimentConfig,
    block: &TransmissionBlock,
    receiver: &ReceiverParams,
    ledger: &mut ComplexityLedger,
) -> Result<f64> {
    let est = detect_batch(
        receiver,
        &block.info_y,
        cfg.sic_iterations,
        &cfg.link.constellation,
        cfg.exec,
        cfg.detect_chunk,
    )?;
    ledger.record_inference(receiver.module_size(), block.info_len(), block.k);
    ser(&est, &block.info_s)
}

fn finish(
    block: &TransmissionBlock,
    receiver: &ReceiverParams,
    ser: f64,
    ledger: &ComplexityLedger,
    started: Instant,
) -> BlockResult {
    BlockResult {
        t: block.t,
        k: block.k,
        ser,
        train_units: ledger.training,
        infer_units: ledger.online_non_training(),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
        modules: receiver.modules.len(),
        weights_digest: weights_digest(receiver),
    }
}

/// Runs `method` over `T` blocks.
///
/// Joint and hypernetwork blocks are independent and may run in parallel;
/// online learning warm-starts from the previous block so it runs in order.
/// Every block's cost is charged to its own ledger, and the run ledger is
/// their sum in block order.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    method: Method,
    models: &Models,
) -> Result<RunOutput> {
    cfg.validate()?;
    let gen = BlockGenerator::new(cfg.link.clone())?;
    run_with_generator(cfg, method, models, &gen)
}

pub fn run_with_generator(
    cfg: &ExperimentConfig,
    method: Method,
    models: &Models,
    gen: &BlockGenerator,
) -> Result<RunOutput> {
    let ks = schedule(cfg, gen);
    let items: Vec<(usize, usize)> = ks.iter().enumerate().map(|(i, &k)| (i + 1, k)).collect();
    let fresh = || ComplexityLedger::new(cfg.cost);

    let per_block: Vec<(BlockResult, ComplexityLedger)> = match method {
        Method::Joint => {
            let bank = models
                .joint
                .as_ref()
                .ok_or_else(|| Error::Config("joint run needs a joint checkpoint".into()))?;
            for &k in &ks {
                bank.get(k)?;
            }
            cfg.exec.try_map(items, |(t, k)| {
                let block = block_at(cfg, gen, t, k)?;
                let started = Instant::now();
                let receiver = bank.get(k)?;
                let mut ledger = fresh();
                let s = evaluate(cfg, &block, receiver, &mut ledger)?;
                Ok::<_, Error>((finish(&block, receiver, s, &ledger, started), ledger))
            })?
        }
        Method::Hyper => {
            let params = models
                .hyper
                .as_ref()
                .ok_or_else(|| Error::Config("hyper run needs a hypernetwork checkpoint".into()))?;
            if params.n != cfg.link.n || params.k_max != cfg.link.k_max {
                return Err(Error::Config(format!(
                    "hypernetwork was trained for N = {}, K_max = {}; config has N = {}, K_max = {}",
                    params.n, params.k_max, cfg.link.n, cfg.link.k_max
                )));
            }
            cfg.exec.try_map(items, |(t, k)| {
                let block = block_at(cfg, gen, t, k)?;
                let started = Instant::now();
                let mut ledger = fresh();
                let receiver = hypernet_adapt(params, &block, &mut ledger)?;
                let s = evaluate(cfg, &block, &receiver, &mut ledger)?;
                Ok::<_, Error>((finish(&block, &receiver, s, &ledger, started), ledger))
            })?
        }
        Method::Online => {
            let train = cfg.online_config();
            let mut prev: Option<ReceiverParams> = None;
            let mut out = Vec::with_capacity(items.len());
            for (t, k) in items {
                let block = block_at(cfg, gen, t, k)?;
                let started = Instant::now();
                let mut ledger = fresh();
                let receiver = online_adapt(
                    prev.as_ref(),
                    &block,
                    &cfg.link.constellation,
                    &train,
                    cfg.seed,
                    cfg.exec,
                    &mut ledger,
                )?;
                let s = evaluate(cfg, &block, &receiver, &mut ledger)?;
                out.push((finish(&block, &receiver, s, &ledger, started), ledger));
                prev = Some(receiver);
            }
            out
        }
    };

    let mut ledger = fresh();
    let mut blocks = Vec::with_capacity(per_block.len());
    for (r, l) in per_block {
        ledger.merge(&l);
        blocks.push(r);
    }
    let summary = summarize(method, &blocks, &ledger, cfg.link.info_len);
    Ok(RunOutput {
        method,
        blocks,
        ledger,
        summary,
    })
}

fn summarize(
    method: Method,
    blocks: &[BlockResult],
    ledger: &ComplexityLedger,
    info_len: usize,
) -> Summary {
    let symbols: f64 = blocks.iter().map(|b| (b.k * info_len) as f64).sum();
    let errors: f64 = blocks.iter().map(|b| b.ser * (b.k * info_len) as f64).sum();
    let n = blocks.len().max(1) as f64;
    Summary {
        method,
        blocks: blocks.len(),
        aggregate_ser: if symbols > 0.0 { errors / symbols } else { 0.0 },
        mean_block_ser: blocks.iter().map(|b| b.ser).sum::<f64>() / n,
        user_counts: blocks
            .iter()
            .map(|b| b.k)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        ledger: ledger.clone(),
        total_units: ledger.total(),
        total_wall_ms: blocks.iter().map(|b| b.wall_ms).sum(),
    }
}
