//! The hypernetwork: an MLP that maps a user's channel context to the
//! weights of that user's DeepSIC module.
//!
//! Its output layer is sized for the largest receiver (`K_max` users). For
//! fewer users only the leading `param_count(N, K)` outputs are used.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::estimate::{build_user_embedding, embeddings_graph, ls_estimate, UserEmbedding};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::channel::TransmissionBlock;
use crate::deepsic::{
    input_width, param_count, ModuleNodes, ModuleParams, ReceiverParams, HIDDEN, OUTPUTS,
};
use crate::error::{Error, Result};
use crate::harness::ComplexityLedger;

pub const HYPER_HIDDEN1: usize = 64;
pub const HYPER_HIDDEN2: usize = 32;
/// Bound of the uniform initialization of the output layer.
pub const OUTPUT_INIT_SCALE: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypernetParams {
    pub n: usize,
    pub k_max: usize,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
    pub e_self: Tensor,
    pub e_pad: Tensor,
}

/// Output width: one full module for `K_max` users.
pub fn hyper_output_dim(n: usize, k_max: usize) -> usize {
    param_count(n, k_max)
}

/// `|φ|`: weights and biases of the three layers, `64(N·K_max + 1) + 32·65 + 33·D_out`.
pub fn hyper_network_size(n: usize, k_max: usize) -> usize {
    let d_out = hyper_output_dim(n, k_max);
    HYPER_HIDDEN1 * (n * k_max + 1)
        + HYPER_HIDDEN2 * (HYPER_HIDDEN1 + 1)
        + (HYPER_HIDDEN2 + 1) * d_out
}

impl HypernetParams {
    pub fn zeros(n: usize, k_max: usize) -> Self {
        let d_out = hyper_output_dim(n, k_max);
        Self {
            n,
            k_max,
            w1: Tensor::zeros(&[n * k_max, HYPER_HIDDEN1]),
            b1: Tensor::zeros(&[HYPER_HIDDEN1]),
            w2: Tensor::zeros(&[HYPER_HIDDEN1, HYPER_HIDDEN2]),
            b2: Tensor::zeros(&[HYPER_HIDDEN2]),
            w3: Tensor::zeros(&[HYPER_HIDDEN2, d_out]),
            b3: Tensor::zeros(&[d_out]),
            e_self: Tensor::zeros(&[n]),
            e_pad: Tensor::zeros(&[n]),
        }
    }

    /// Hidden layers uniform in `±1/sqrt(fan_in)`, output layer in
    /// `±OUTPUT_INIT_SCALE`, biases zero, embeddings `N(0, 1/N)`.
    pub fn init<R: Rng + ?Sized>(n: usize, k_max: usize, rng: &mut R) -> Result<Self> {
        if k_max == 0 || k_max > n {
            return Err(Error::Config(format!(
                "hypernetwork needs N >= K_max >= 1, got {n}, {k_max}"
            )));
        }
        let mut p = Self::zeros(n, k_max);
        let uniform = |t: &mut Tensor, bound: f64, rng: &mut R| {
            let d = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            t.data_mut().iter_mut().for_each(|v| *v = d.sample(rng));
        };
        uniform(&mut p.w1, 1.0 / ((n * k_max) as f64).sqrt(), rng);
        uniform(&mut p.w2, 1.0 / (HYPER_HIDDEN1 as f64).sqrt(), rng);
        uniform(&mut p.w3, OUTPUT_INIT_SCALE, rng);
        let scale = 1.0 / (n as f64).sqrt();
        for v in p.e_self.data_mut().iter_mut().chain(p.e_pad.data_mut()) {
            let z: f64 = StandardNormal.sample(rng);
            *v = z * scale;
        }
        Ok(p)
    }

    pub fn output_dim(&self) -> usize {
        self.b3.len()
    }

    /// `|φ|`, excluding the two embedding vectors.
    pub fn network_scalar_count(&self) -> usize {
        self.tensors()[..6].iter().map(|t| t.len()).sum()
    }

    /// Every trainable scalar, embeddings included.
    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `W1, b1, W2, b2, W3, b3, e_self, e_pad`.
    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.w3,
            &self.b3,
            &self.e_self,
            &self.e_pad,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
            &mut self.e_self,
            &mut self.e_pad,
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn unflatten(n: usize, k_max: usize, flat: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(n, k_max);
        if flat.len() != p.scalar_count() {
            return Err(Error::shape(
                "hypernet unflatten",
                format!("expected {} scalars, got {}", p.scalar_count(), flat.len()),
            ));
        }
        let mut offset = 0;
        for t in p.tensors_mut() {
            let len = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(p)
    }

    pub fn to_graph(&self, g: &mut Graph, trainable: bool) -> HypernetNodes {
        let ids: Vec<NodeId> = self
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    g.leaf((*t).clone())
                } else {
                    g.constant((*t).clone())
                }
            })
            .collect();
        HypernetNodes {
            w1: ids[0],
            b1: ids[1],
            w2: ids[2],
            b2: ids[3],
            w3: ids[4],
            b3: ids[5],
            e_self: ids[6],
            e_pad: ids[7],
            n: self.n,
            k_max: self.k_max,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HypernetNodes {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub w3: NodeId,
    pub b3: NodeId,
    pub e_self: NodeId,
    pub e_pad: NodeId,
    n: usize,
    k_max: usize,
}

impl HypernetNodes {
    /// Same order as [`HypernetParams::tensors`].
    pub fn ids(&self) -> [NodeId; 8] {
        [
            self.w1,
            self.b1,
            self.w2,
            self.b2,
            self.w3,
            self.b3,
            self.e_self,
            self.e_pad,
        ]
    }

    /// Three-layer MLP over embeddings `[.., N·K_max]` -> `[.., D_out]`.
    pub fn mlp(&self, g: &mut Graph, input: NodeId) -> Result<NodeId> {
        let h = g.affine(self.w1, self.b1, input)?;
        let h = g.relu(h);
        let h = g.affine(self.w2, self.b2, h)?;
        let h = g.relu(h);
        g.affine(self.w3, self.b3, h)
    }

    /// Generates one module per row of `h_hat` (`[K, N]`) on the graph.
    pub fn generate(&self, g: &mut Graph, h_hat: &Tensor) -> Result<Vec<ModuleNodes>> {
        let users = h_hat.rows();
        if users == 0 || users > self.k_max || h_hat.cols() != self.n {
            return Err(Error::shape(
                "hypernet generate",
                format!(
                    "Ĥ {:?} for N={}, K_max={}",
                    h_hat.shape(),
                    self.n,
                    self.k_max
                ),
            ));
        }
        let u = embeddings_graph(g, h_hat, self.e_self, self.e_pad, self.k_max)?;
        let out = self.mlp(g, u)?;
        let d_out = g.value(out).cols();
        let width = input_width(self.n, users);
        let mut modules = Vec::with_capacity(users);
        for k in 0..users {
            let mut offset = k * d_out;
            let mut take = |g: &mut Graph, shape: &[usize]| {
                let id = g.slice(out, offset, shape);
                offset += shape.iter().product::<usize>();
                id
            };
            let w1 = take(g, &[width, HIDDEN])?;
            let b1 = take(g, &[HIDDEN])?;
            let w2 = take(g, &[HIDDEN, OUTPUTS])?;
            let b2 = take(g, &[OUTPUTS])?;
            modules.push(ModuleNodes { w1, b1, w2, b2 });
        }
        Ok(modules)
    }
}

/// All `D_out` hypernetwork outputs for one embedding.
pub fn hypernet_output(params: &HypernetParams, u: &UserEmbedding) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let nodes = params.to_graph(&mut g, false);
    let input = g.constant(u.as_tensor().clone());
    let out = nodes.mlp(&mut g, input)?;
    Ok(g.value(out).data().to_vec())
}

/// Module weights for a user in a `k`-user receiver: the leading
/// `param_count(n, k)` outputs, unflattened in the module layout.
pub fn hypernet_forward(
    params: &HypernetParams,
    u: &UserEmbedding,
    n: usize,
    k: usize,
) -> Result<ModuleParams> {
    if k == 0 || k > params.k_max || n != params.n {
        return Err(Error::Invalid(format!(
            "hypernetwork for N={}, K_max={} cannot emit N={n}, K={k}",
            params.n, params.k_max
        )));
    }
    let out = hypernet_output(params, u)?;
    ModuleParams::unflatten(n, k, &out[..param_count(n, k)])
}

/// Receiver weights for a block, generated from its pilots without any training.
///
/// Records `K` hypernetwork passes and the least-squares estimate in `ledger`.
pub fn hypernet_adapt(
    params: &HypernetParams,
    block: &TransmissionBlock,
    ledger: &mut ComplexityLedger,
) -> Result<ReceiverParams> {
    let h_hat = ls_estimate(&block.pilot_s, &block.pilot_y)?;
    let receiver = generate_receiver(params, &h_hat)?;
    ledger.record_ls(params.n, block.pilot_len(), block.k);
    ledger.record_hyper(params.network_scalar_count(), block.k);
    Ok(receiver)
}

/// Runs the hypernetwork once per user of an estimated channel `h_hat: [K, N]`.
pub fn generate_receiver(params: &HypernetParams, h_hat: &Tensor) -> Result<ReceiverParams> {
    let users = h_hat.rows();
    let modules = (1..=users)
        .map(|k| {
            let u =
                build_user_embedding(h_hat, k, users, params.k_max, &params.e_self, &params.e_pad)?;
            hypernet_forward(params, &u, params.n, users)
        })
        .collect::<Result<Vec<_>>>()?;
    ReceiverParams::from_modules(params.n, modules)
}
