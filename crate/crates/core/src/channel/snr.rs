//! Block-varying per-user SNR trajectories.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrProfileKind {
    Constant,
    Sinusoid,
    RandomWalk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnrProfileConfig {
    pub kind: SnrProfileKind,
    pub base_db: f64,
    pub amplitude_db: f64,
    pub period_blocks: u32,
    /// Phase shift between consecutive users, in blocks.
    pub phase_offset_blocks: f64,
    pub seed: u64,
}

impl Default for SnrProfileConfig {
    fn default() -> Self {
        Self {
            kind: SnrProfileKind::Constant,
            base_db: 12.0,
            amplitude_db: 0.0,
            period_blocks: 100,
            phase_offset_blocks: 0.0,
            seed: 0,
        }
    }
}

impl SnrProfileConfig {
    pub fn constant(db: f64) -> Self {
        Self {
            base_db: db,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period_blocks < 1 {
            return Err(Error::Config("snr.period_blocks must be >= 1".into()));
        }
        if self.amplitude_db.is_nan() || self.amplitude_db < 0.0 || !self.base_db.is_finite() {
            return Err(Error::Config(
                "snr.amplitude_db must be >= 0 and base_db finite".into(),
            ));
        }
        Ok(())
    }

    /// Smallest and largest dB value the profile can take.
    pub fn db_range(&self) -> (f64, f64) {
        match self.kind {
            SnrProfileKind::Constant => (self.base_db, self.base_db),
            _ => (
                self.base_db - self.amplitude_db,
                self.base_db + self.amplitude_db,
            ),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// SNR in dB of user `k` (1-based) during block `t` (1-based).
pub fn snr_profile_db(cfg: &SnrProfileConfig, t: usize, k: usize) -> f64 {
    match cfg.kind {
        SnrProfileKind::Constant => cfg.base_db,
        SnrProfileKind::Sinusoid => {
            let phase = t as f64 + k as f64 * cfg.phase_offset_blocks;
            let angle = 2.0 * std::f64::consts::PI * phase / f64::from(cfg.period_blocks.max(1));
            cfg.base_db + cfg.amplitude_db * angle.sin()
        }
        SnrProfileKind::RandomWalk => {
            if cfg.amplitude_db == 0.0 {
                return cfg.base_db;
            }
            // Gaussian steps reflected into [-amplitude, amplitude]; roughly one
            // full swing per period.
            let sd = cfg.amplitude_db / f64::from(cfg.period_blocks.max(1)).sqrt();
            let step = Normal::new(0.0, sd).expect("finite sd");
            let mut rng = stream(cfg.seed, Stream::Snr, k as u64);
            let mut offset = 0.0f64;
            for _ in 1..t {
                offset += step.sample(&mut rng);
                let a = cfg.amplitude_db;
                while offset.abs() > a {
                    offset = offset.signum() * 2.0 * a - offset;
                }
            }
            cfg.base_db + offset
        }
    }
}

/// Linear SNR of user `k` during block `t`.
pub fn snr_profile(cfg: &SnrProfileConfig, t: usize, k: usize) -> f64 {
    db_to_linear(snr_profile_db(cfg, t, k))
}
