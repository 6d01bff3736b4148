//! Offline training data: labeled symbols from many channel realizations per user count.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::channel::{
    db_to_linear, generate_symbols, synthetic_channel, transmit, ChannelSource, LinkConfig,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{stream, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Labeled symbols per user count.
    pub symbols_per_k: usize,
    /// Symbols per channel realization; the first `pilot_len` of the link act as pilots.
    pub block_len: usize,
    /// Per-user SNR range (dB) for synthetic realizations; defaults to the
    /// link's SNR profile range.
    pub snr_db_range: Option<(f64, f64)>,
    /// Smallest user count to generate (largest is `K_max`).
    pub k_min: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            symbols_per_k: 100_000,
            block_len: 1_000,
            snr_db_range: None,
            k_min: 2,
        }
    }
}

/// Symbols sent through one channel realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetBlock {
    /// `L x K`
    pub s: Tensor,
    /// `L x N`
    pub y: Tensor,
    /// Leading rows usable as pilots.
    pub pilot_len: usize,
}

impl DatasetBlock {
    pub fn len(&self) -> usize {
        self.s.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.rows() == 0
    }

    pub fn pilots(&self) -> (Tensor, Tensor) {
        (
            self.s.row_range(0, self.pilot_len),
            self.y.row_range(0, self.pilot_len),
        )
    }
}

/// Training set for one user count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n: usize,
    pub k: usize,
    pub blocks: Vec<DatasetBlock>,
}

impl Dataset {
    pub fn symbol_count(&self) -> usize {
        self.blocks.iter().map(DatasetBlock::len).sum()
    }

    /// All symbols of all blocks as one `(y, s)` pair.
    pub fn pooled(&self) -> (Tensor, Tensor) {
        let rows = self.symbol_count();
        let mut y = Vec::with_capacity(rows * self.n);
        let mut s = Vec::with_capacity(rows * self.k);
        for b in &self.blocks {
            y.extend_from_slice(b.y.data());
            s.extend_from_slice(b.s.data());
        }
        (
            Tensor::matrix(rows, self.n, y).expect("rows * n"),
            Tensor::matrix(rows, self.k, s).expect("rows * k"),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Datasets {
    pub n: usize,
    pub k_max: usize,
    pub seed: u64,
    pub per_k: BTreeMap<usize, Dataset>,
}

impl Datasets {
    pub fn get(&self, k: usize) -> Result<&Dataset> {
        self.per_k
            .get(&k)
            .filter(|d| d.symbol_count() > 0)
            .ok_or_else(|| Error::Invalid(format!("no training data for K = {k}")))
    }
}

/// Generates `D^(K)` for `K = k_min..=K_max`.
///
/// Synthetic realizations draw each user's SNR uniformly (in dB) from the
/// configured range; trace sources cycle through the trace records with matching `K`.
pub fn generate_datasets(
    link: &LinkConfig,
    trace: Option<&[crate::channel::TraceRecord]>,
    cfg: &DatasetConfig,
    seed: u64,
    exec: Exec,
) -> Result<Datasets> {
    link.validate()?;
    if cfg.block_len < link.pilot_len || cfg.block_len == 0 {
        return Err(Error::Config(format!(
            "dataset block_len {} must be >= pilot_len {}",
            cfg.block_len, link.pilot_len
        )));
    }
    if cfg.k_min == 0 || cfg.k_min > link.k_max {
        return Err(Error::Config(format!(
            "dataset k_min {} outside 1..=K_max",
            cfg.k_min
        )));
    }
    let (lo, hi) = cfg.snr_db_range.unwrap_or_else(|| link.snr.db_range());
    let ks: Vec<usize> = (cfg.k_min..=link.k_max).collect();
    let sets = exec.try_map(ks, |k| {
        let blocks_needed = cfg.symbols_per_k.div_ceil(cfg.block_len);
        let matching: Vec<&crate::channel::TraceRecord> = trace
            .map(|t| t.iter().filter(|r| r.k == k).collect())
            .unwrap_or_default();
        let mut blocks = Vec::with_capacity(blocks_needed);
        for i in 0..blocks_needed {
            let mut rng = stream(seed, Stream::Dataset, ((k as u64) << 32) | i as u64);
            let len = cfg
                .block_len
                .min(cfg.symbols_per_k - i * cfg.block_len)
                .max(link.pilot_len);
            let (h, noise) = match &link.channel {
                ChannelSource::Synthetic => {
                    let snr: Vec<f64> = (0..k)
                        .map(|_| db_to_linear(rng.random_range(lo..=hi)))
                        .collect();
                    (synthetic_channel(link.n, k, &snr)?, 1.0)
                }
                ChannelSource::Trace { snr_db, .. } => {
                    let Some(rec) = matching.get(i % matching.len().max(1)) else {
                        return Err(Error::Config(format!("trace has no records with K = {k}")));
                    };
                    (rec.h.clone(), 1.0 / db_to_linear(*snr_db))
                }
            };
            let s = generate_symbols(&mut rng, len, k, &link.constellation);
            let y = transmit(&h, &s, noise, &mut rng)?;
            blocks.push(DatasetBlock {
                s,
                y,
                pilot_len: link.pilot_len,
            });
        }
        Ok(Dataset {
            n: link.n,
            k,
            blocks,
        })
    })?;
    Ok(Datasets {
        n: link.n,
        k_max: link.k_max,
        seed,
        per_k: sets.into_iter().map(|d| (d.k, d)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn link() -> LinkConfig {
        LinkConfig {
            n: 4,
            k_max: 3,
            pilot_len: 10,
            info_len: 10,
            ..LinkConfig::default()
        }
    }

    #[test]
    fn sizes_and_determinism() {
        let cfg = DatasetConfig {
            symbols_per_k: 250,
            block_len: 100,
            ..DatasetConfig::default()
        };
        let a = generate_datasets(&link(), None, &cfg, 3, Exec::Sequential).unwrap();
        let b = generate_datasets(&link(), None, &cfg, 3, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_k.keys().copied().collect::<Vec<_>>(), vec![2, 3]);
        let d = a.get(3).unwrap();
        assert_eq!(d.symbol_count(), 250);
        assert_eq!(d.blocks.len(), 3);
        let (y, s) = d.pooled();
        assert_eq!(y.shape(), &[250, 4]);
        assert_eq!(s.shape(), &[250, 3]);
        assert!(a.get(1).is_err());
    }

    #[test]
    fn rejects_short_blocks() {
        let cfg = DatasetConfig {
            symbols_per_k: 100,
            block_len: 5,
            ..DatasetConfig::default()
        };
        assert!(generate_datasets(&link(), None, &cfg, 0, Exec::Sequential).is_err());
    }
}
