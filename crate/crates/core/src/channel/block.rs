use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    generate_symbols, load_trace, snr_profile, synthetic_channel, transmit, Constellation,
    SnrProfileConfig, TraceRecord,
};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelSource {
    /// Exponential-decay matrix with per-user SNR folded into the columns; unit noise.
    Synthetic,
    /// Replay of a trace file; a single SNR sets the noise variance.
    Trace { path: PathBuf, snr_db: f64 },
}

/// Physical-layer parameters shared by every block of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkConfig {
    /// Receive antennas.
    pub n: usize,
    pub k_max: usize,
    pub pilot_len: usize,
    pub info_len: usize,
    pub channel: ChannelSource,
    pub snr: SnrProfileConfig,
    pub constellation: Constellation,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            n: 12,
            k_max: 12,
            pilot_len: 800,
            info_len: 15_200,
            channel: ChannelSource::Synthetic,
            snr: SnrProfileConfig::default(),
            constellation: Constellation::bpsk(),
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 || self.k_max > self.n {
            return Err(Error::Config(format!(
                "need N >= K_max >= 1, got N={}, K_max={}",
                self.n, self.k_max
            )));
        }
        if self.pilot_len == 0 {
            return Err(Error::Config("pilot_len must be >= 1".into()));
        }
        self.snr.validate()
    }

    pub fn block_len(&self) -> usize {
        self.pilot_len + self.info_len
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub t: usize,
    /// `N x K`
    pub h: Tensor,
    /// Linear SNR per active user.
    pub snr: Vec<f64>,
    pub noise_variance: f64,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.h.cols()
    }
}

/// One coherence block: pilots first, then information symbols, all through the same channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionBlock {
    pub t: usize,
    pub k: usize,
    pub channel: ChannelRealization,
    /// `B_pilot x K`
    pub pilot_s: Tensor,
    /// `B_pilot x N`
    pub pilot_y: Tensor,
    /// `B_info x K`
    pub info_s: Tensor,
    /// `B_info x N`
    pub info_y: Tensor,
}

impl TransmissionBlock {
    pub fn pilot_len(&self) -> usize {
        self.pilot_s.rows()
    }

    pub fn info_len(&self) -> usize {
        self.info_s.rows()
    }
}

/// Produces channel realizations and blocks for a link configuration.
#[derive(Clone, Debug)]
pub struct BlockGenerator {
    link: LinkConfig,
    trace: Option<Vec<TraceRecord>>,
}

impl BlockGenerator {
    pub fn new(link: LinkConfig) -> Result<Self> {
        link.validate()?;
        let trace = match &link.channel {
            ChannelSource::Synthetic => None,
            ChannelSource::Trace { path, .. } => {
                let records = load_trace(path, link.n, link.k_max)?;
                if records.is_empty() {
                    return Err(Error::Config(format!(
                        "trace {} has no records",
                        path.display()
                    )));
                }
                Some(records)
            }
        };
        Ok(Self { link, trace })
    }

    /// Replays pre-loaded records instead of reading the configured trace path.
    pub fn from_records(link: LinkConfig, records: Vec<TraceRecord>) -> Result<Self> {
        link.validate()?;
        if records.is_empty() {
            return Err(Error::Config("empty trace".into()));
        }
        Ok(Self {
            link,
            trace: Some(records),
        })
    }

    pub fn link(&self) -> &LinkConfig {
        &self.link
    }

    /// For trace replay the trace dictates the user count of each block.
    pub fn users_at(&self, t: usize) -> Option<usize> {
        self.trace_record(t).map(|r| r.k)
    }

    fn trace_record(&self, t: usize) -> Option<&TraceRecord> {
        self.trace
            .as_ref()
            .map(|recs| &recs[(t.max(1) - 1) % recs.len()])
    }

    /// Channel for block `t` (1-based) with `k` active users.
    pub fn realization(&self, t: usize, k: usize) -> Result<ChannelRealization> {
        if k == 0 || k > self.link.k_max {
            return Err(Error::Config(format!(
                "K = {k} outside 1..={}",
                self.link.k_max
            )));
        }
        match (&self.link.channel, self.trace_record(t)) {
            (ChannelSource::Trace { snr_db, .. }, Some(rec)) => {
                if rec.k != k {
                    return Err(Error::Config(format!(
                        "trace block {t} has K = {}, requested {k}",
                        rec.k
                    )));
                }
                let snr = super::db_to_linear(*snr_db);
                Ok(ChannelRealization {
                    t,
                    h: rec.h.clone(),
                    snr: vec![snr; k],
                    noise_variance: 1.0 / snr,
                })
            }
            _ => {
                let snr: Vec<f64> = (1..=k)
                    .map(|user| snr_profile(&self.link.snr, t, user))
                    .collect();
                let h = synthetic_channel(self.link.n, k, &snr)?;
                Ok(ChannelRealization {
                    t,
                    h,
                    snr,
                    noise_variance: 1.0,
                })
            }
        }
    }

    pub fn make_block<R: Rng + ?Sized>(
        &self,
        t: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<TransmissionBlock> {
        let channel = self.realization(t, k)?;
        self.block_for(channel, rng)
    }

    /// Draws pilots and information symbols through an explicit channel.
    pub fn block_for<R: Rng + ?Sized>(
        &self,
        channel: ChannelRealization,
        rng: &mut R,
    ) -> Result<TransmissionBlock> {
        let k = channel.users();
        let c = &self.link.constellation;
        let pilot_s = generate_symbols(rng, self.link.pilot_len, k, c);
        let info_s = generate_symbols(rng, self.link.info_len, k, c);
        let pilot_y = transmit(&channel.h, &pilot_s, channel.noise_variance, rng)?;
        let info_y = transmit(&channel.h, &info_s, channel.noise_variance, rng)?;
        Ok(TransmissionBlock {
            t: channel.t,
            k,
            channel,
            pilot_s,
            pilot_y,
            info_s,
            info_y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn default_block_sizes() {
        let link = LinkConfig::default();
        assert_eq!(link.pilot_len, 800);
        assert_eq!(link.info_len, 15_200);
        assert_eq!(link.block_len(), 16_000);
    }

    #[test]
    fn block_shapes_and_reproducibility() {
        let link = LinkConfig {
            n: 4,
            k_max: 3,
            pilot_len: 20,
            info_len: 30,
            ..LinkConfig::default()
        };
        let gen = BlockGenerator::new(link).unwrap();
        let a = gen
            .make_block(2, 3, &mut stream(9, Stream::Block, 2))
            .unwrap();
        let b = gen
            .make_block(2, 3, &mut stream(9, Stream::Block, 2))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pilot_s.shape(), &[20, 3]);
        assert_eq!(a.pilot_y.shape(), &[20, 4]);
        assert_eq!(a.info_s.shape(), &[30, 3]);
        assert_eq!(a.info_y.shape(), &[30, 4]);
        let single = gen
            .make_block(1, 1, &mut stream(9, Stream::Block, 1))
            .unwrap();
        assert_eq!(single.pilot_s.shape(), &[20, 1]);
    }

    #[test]
    fn rejects_invalid_user_counts() {
        let gen = BlockGenerator::new(LinkConfig {
            n: 4,
            k_max: 3,
            ..LinkConfig::default()
        })
        .unwrap();
        assert!(gen.realization(1, 4).is_err());
        assert!(gen.realization(1, 0).is_err());
        assert!(BlockGenerator::new(LinkConfig {
            n: 2,
            k_max: 3,
            ..LinkConfig::default()
        })
        .is_err());
    }

    #[test]
    fn trace_replay_dictates_users() {
        let link = LinkConfig {
            n: 2,
            k_max: 2,
            pilot_len: 4,
            info_len: 4,
            channel: ChannelSource::Trace {
                path: PathBuf::new(),
                snr_db: 10.0,
            },
            ..LinkConfig::default()
        };
        let recs = vec![
            TraceRecord {
                t: 1,
                k: 1,
                h: Tensor::matrix(2, 1, vec![1.0, 0.5]).unwrap(),
            },
            TraceRecord {
                t: 2,
                k: 2,
                h: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            },
        ];
        let gen = BlockGenerator::from_records(link, recs).unwrap();
        assert_eq!(gen.users_at(1), Some(1));
        assert_eq!(gen.users_at(2), Some(2));
        assert_eq!(gen.users_at(3), Some(1));
        let r = gen.realization(2, 2).unwrap();
        assert!((r.noise_variance - 0.1).abs() < 1e-12);
        assert!(gen.realization(2, 1).is_err());
    }
}
