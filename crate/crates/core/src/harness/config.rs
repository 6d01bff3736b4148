use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CostWeights;
use crate::adaptation::{DatasetConfig, HyperTrainConfig, TrainConfig};
use crate::channel::LinkConfig;
use crate::deepsic::DEFAULT_ITERATIONS;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::{stream, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Joint,
    Online,
    Hyper,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Joint, Method::Online, Method::Hyper];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Joint => "joint",
            Method::Online => "online",
            Method::Hyper => "hyper",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Method::Joint),
            "online" => Ok(Method::Online),
            "hyper" => Ok(Method::Hyper),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// How many users are active in each block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum UserSchedule {
    Fixed {
        k: usize,
    },
    /// Cycled in order.
    List {
        values: Vec<usize>,
    },
    /// Uniform over `min..=max`, redrawn every `hold` blocks.
    Random {
        min: usize,
        max: usize,
        #[serde(default = "one")]
        hold: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for UserSchedule {
    fn default() -> Self {
        UserSchedule::Fixed { k: 8 }
    }
}

impl UserSchedule {
    pub fn users_at(&self, t: usize, seed: u64) -> usize {
        match self {
            UserSchedule::Fixed { k } => *k,
            UserSchedule::List { values } => values[(t.max(1) - 1) % values.len()],
            UserSchedule::Random { min, max, hold } => {
                use rand::Rng;
                let segment = (t.max(1) - 1) / (*hold).max(1);
                stream(seed, Stream::Schedule, segment as u64).random_range(*min..=*max)
            }
        }
    }

    fn bounds(&self) -> Option<(usize, usize)> {
        match self {
            UserSchedule::Fixed { k } => Some((*k, *k)),
            UserSchedule::List { values } => Some((*values.iter().min()?, *values.iter().max()?)),
            UserSchedule::Random { min, max, hold } => {
                (min <= max && *hold > 0).then_some((*min, *max))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub link: LinkConfig,
    pub users: UserSchedule,
    /// `T`, blocks per run.
    pub blocks: usize,
    pub seed: u64,
    pub method: Method,
    /// SIC iterations `Q`.
    pub sic_iterations: usize,
    pub joint: TrainConfig,
    pub online: TrainConfig,
    pub hyper: HyperTrainConfig,
    pub dataset: DatasetConfig,
    pub cost: CostWeights,
    /// Directory holding `joint.json` and `hypernet.json`.
    pub checkpoints: PathBuf,
    pub exec: Exec,
    /// Symbols per detection work item.
    pub detect_chunk: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            users: UserSchedule::default(),
            blocks: 100,
            seed: 0,
            method: Method::Hyper,
            sic_iterations: DEFAULT_ITERATIONS,
            joint: TrainConfig::joint(),
            online: TrainConfig::default(),
            hyper: HyperTrainConfig::default(),
            dataset: DatasetConfig::default(),
            cost: CostWeights::default(),
            checkpoints: PathBuf::from("checkpoints"),
            exec: Exec::default(),
            detect_chunk: 1024,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        if self.blocks == 0 {
            return Err(Error::Config("blocks (T) must be >= 1".into()));
        }
        if self.sic_iterations == 0 {
            return Err(Error::Config("sic_iterations must be >= 1".into()));
        }
        let Some((lo, hi)) = self.users.bounds() else {
            return Err(Error::Config("user schedule is empty or inverted".into()));
        };
        if lo == 0 || hi > self.link.k_max {
            return Err(Error::Config(format!(
                "user schedule {lo}..={hi} must lie in 1..=K_max ({})",
                self.link.k_max
            )));
        }
        Ok(())
    }

    pub fn joint_config(&self) -> TrainConfig {
        TrainConfig {
            sic_iterations: self.sic_iterations,
            ..self.joint.clone()
        }
    }

    pub fn online_config(&self) -> TrainConfig {
        TrainConfig {
            sic_iterations: self.sic_iterations,
            ..self.online.clone()
        }
    }

    pub fn hyper_config(&self) -> HyperTrainConfig {
        HyperTrainConfig {
            sic_iterations: self.sic_iterations,
            ..self.hyper.clone()
        }
    }
}
