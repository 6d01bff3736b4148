//! JSON checkpoints for trained weights.
//!
//! A checkpoint is a header (format version, kind, `N`, `K_max`, layer sizes)
//! followed by flat scalar arrays. Receiver modules use the DeepSIC flat
//! layout; the hypernetwork stores `W1, b1, W2, b2, W3, b3, e_self, e_pad`
//! back to back, matrices row-major.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adaptation::{
    hyper_output_dim, HypernetParams, JointBank, HYPER_HIDDEN1, HYPER_HIDDEN2,
};
use crate::deepsic::{ModuleParams, ReceiverParams, HIDDEN, OUTPUTS};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const JOINT_KIND: &str = "deepsic-joint";
pub const HYPER_KIND: &str = "hypernetwork";

pub const JOINT_FILE: &str = "joint.json";
pub const HYPER_FILE: &str = "hypernet.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: String,
    pub n: usize,
    pub k_max: usize,
    pub module_hidden: usize,
    pub module_outputs: usize,
    pub hyper_hidden: [usize; 2],
    pub hyper_outputs: usize,
}

impl CheckpointHeader {
    fn new(kind: &str, n: usize, k_max: usize) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            kind: kind.to_string(),
            n,
            k_max,
            module_hidden: HIDDEN,
            module_outputs: OUTPUTS,
            hyper_hidden: [HYPER_HIDDEN1, HYPER_HIDDEN2],
            hyper_outputs: hyper_output_dim(n, k_max),
        }
    }

    fn check(&self, kind: &str) -> Result<()> {
        let expected = Self::new(kind, self.n, self.k_max);
        if self != &expected {
            return Err(Error::Invalid(format!(
                "incompatible checkpoint header {self:?}; this build writes {expected:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct JointEntry {
    k: usize,
    modules: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct JointFile {
    header: CheckpointHeader,
    receivers: Vec<JointEntry>,
}

#[derive(Serialize, Deserialize)]
struct HyperFile {
    header: CheckpointHeader,
    params: Vec<f64>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn save_joint(path: &Path, bank: &JointBank) -> Result<()> {
    let file = JointFile {
        header: CheckpointHeader::new(JOINT_KIND, bank.n, bank.k_max),
        receivers: bank
            .receivers
            .iter()
            .map(|(&k, r)| JointEntry {
                k,
                modules: r.modules.iter().map(ModuleParams::flatten).collect(),
            })
            .collect(),
    };
    write_json(path, &file)
}

pub fn load_joint(path: &Path) -> Result<JointBank> {
    let file: JointFile = read_json(path)?;
    file.header.check(JOINT_KIND)?;
    let (n, k_max) = (file.header.n, file.header.k_max);
    let mut receivers = std::collections::BTreeMap::new();
    for entry in file.receivers {
        if entry.k == 0 || entry.k > k_max || entry.modules.len() != entry.k {
            return Err(Error::Invalid(format!(
                "{}: receiver for K = {} has {} modules",
                path.display(),
                entry.k,
                entry.modules.len()
            )));
        }
        let modules = entry
            .modules
            .iter()
            .map(|flat| ModuleParams::unflatten(n, entry.k, flat))
            .collect::<Result<Vec<_>>>()?;
        receivers.insert(entry.k, ReceiverParams::from_modules(n, modules)?);
    }
    Ok(JointBank {
        n,
        k_max,
        receivers,
    })
}

pub fn save_hyper(path: &Path, params: &HypernetParams) -> Result<()> {
    let file = HyperFile {
        header: CheckpointHeader::new(HYPER_KIND, params.n, params.k_max),
        params: params.flatten(),
    };
    write_json(path, &file)
}

pub fn load_hyper(path: &Path) -> Result<HypernetParams> {
    let file: HyperFile = read_json(path)?;
    file.header.check(HYPER_KIND)?;
    HypernetParams::unflatten(file.header.n, file.header.k_max, &file.params)
}
