//! Paired runs of every method over the same block stream.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, UserSchedule};
use super::experiment::{run_with_generator, Models, RunOutput, Summary};
use super::ledger::{closed_form_ratio, complexity_ratio, RatioInputs};
use super::results::{emit_results, write_json};
use crate::adaptation::hyper_network_size;
use crate::channel::BlockGenerator;
use crate::deepsic::param_count;
use crate::error::{Error, Result};

pub const COMPARISON_FILE: &str = "comparison.json";
pub const PAIRED_SER_FILE: &str = "ser_paired.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub methods: Vec<Summary>,
    /// Total hypernetwork cost over total online cost, from the ledgers.
    pub measured_ratio: f64,
    /// The same ratio from the per-block formula; only defined for a fixed user count.
    pub closed_form_ratio: Option<f64>,
    /// Mean online wall time per block over mean hypernetwork wall time per block.
    pub wall_time_speedup: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub runs: Vec<RunOutput>,
    pub summary: ComparisonSummary,
}

impl Comparison {
    pub fn run(&self, method: Method) -> &RunOutput {
        self.runs
            .iter()
            .find(|r| r.method == method)
            .expect("every method is run")
    }
}

/// Runs joint, online and hypernetwork adaptation on identical blocks.
pub fn compare_methods(cfg: &ExperimentConfig, models: &Models) -> Result<Comparison> {
    cfg.validate()?;
    let gen = BlockGenerator::new(cfg.link.clone())?;
    let runs = Method::ALL
        .iter()
        .map(|&m| {
            log::info!("running {m} over {} blocks", cfg.blocks);
            run_with_generator(cfg, m, models, &gen)
        })
        .collect::<Result<Vec<_>>>()?;
    let by = |m: Method| runs.iter().find(|r| r.method == m).expect("run");
    let (online, hyper) = (by(Method::Online), by(Method::Hyper));
    let measured_ratio = complexity_ratio(&hyper.ledger, &online.ledger)?;
    let closed_form_ratio = match (&cfg.users, gen.users_at(1)) {
        (UserSchedule::Fixed { k }, None) => Some(closed_form_ratio(&RatioInputs {
            weights: cfg.cost,
            module_size: param_count(cfg.link.n, *k),
            hyper_size: hyper_network_size(cfg.link.n, cfg.link.k_max),
            pilot_len: cfg.link.pilot_len,
            info_len: cfg.link.info_len,
            n: cfg.link.n,
        })),
        _ => None,
    };
    let mean_wall = |r: &RunOutput| r.summary.total_wall_ms / r.blocks.len().max(1) as f64;
    let wall_time_speedup = mean_wall(online) / mean_wall(hyper).max(f64::MIN_POSITIVE);
    let summary = ComparisonSummary {
        methods: runs.iter().map(|r| r.summary.clone()).collect(),
        measured_ratio,
        closed_form_ratio,
        wall_time_speedup,
    };
    Ok(Comparison { runs, summary })
}

/// `t,K,joint,online,hyper` with the SER of every method per block.
pub fn paired_ser_csv(cmp: &Comparison) -> String {
    let mut out = String::from("t,K");
    for r in &cmp.runs {
        let _ = write!(out, ",{}", r.method);
    }
    out.push('\n');
    let first = &cmp.runs[0].blocks;
    for (i, b) in first.iter().enumerate() {
        let _ = write!(out, "{},{}", b.t, b.k);
        for r in &cmp.runs {
            let _ = write!(out, ",{}", r.blocks[i].ser);
        }
        out.push('\n');
    }
    out
}

/// Writes each method's result files into `out_dir/<method>/` plus the paired files.
pub fn emit_comparison(cmp: &Comparison, cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    for r in &cmp.runs {
        emit_results(r, cfg, &out_dir.join(r.method.as_str()))?;
    }
    let paired = out_dir.join(PAIRED_SER_FILE);
    fs::write(&paired, paired_ser_csv(cmp)).map_err(|e| Error::io(&paired, e))?;
    write_json(&out_dir.join(COMPARISON_FILE), &cmp.summary)
}
