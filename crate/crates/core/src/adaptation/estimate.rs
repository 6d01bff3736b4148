//! Least-squares channel estimation and per-user context embeddings.

use nalgebra::DMatrix;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Pilot Gram matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// `Ĥ = (sᵀs)⁻¹ sᵀ y` from pilots `s: [B, K]` and observations `y: [B, N]`.
///
/// Row `ℓ` of the `K x N` result is user `ℓ`'s signature across antennas, so
/// in the noiseless case `Ĥ = Hᵀ`.
pub fn ls_estimate(pilot_s: &Tensor, pilot_y: &Tensor) -> Result<Tensor> {
    if pilot_s.rank() != 2 || pilot_y.rank() != 2 || pilot_s.rows() != pilot_y.rows() {
        return Err(Error::shape(
            "ls_estimate",
            format!(
                "pilots {:?}, observations {:?}",
                pilot_s.shape(),
                pilot_y.shape()
            ),
        ));
    }
    let (b, k, n) = (pilot_s.rows(), pilot_s.cols(), pilot_y.cols());
    if b < k {
        return Err(Error::SingularPilots {
            condition: f64::INFINITY,
        });
    }
    let s = DMatrix::from_row_slice(b, k, pilot_s.data());
    let y = DMatrix::from_row_slice(b, n, pilot_y.data());
    let gram = s.transpose() * &s;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
        (lo.min(e), hi.max(e))
    });
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition.is_nan() || condition >= MAX_CONDITION {
        return Err(Error::SingularPilots { condition });
    }
    let rhs = s.transpose() * y;
    let chol = gram.cholesky().ok_or(Error::SingularPilots { condition })?;
    let h_hat = chol.solve(&rhs);
    let mut data = Vec::with_capacity(k * n);
    for row in 0..k {
        data.extend(h_hat.row(row).iter().copied());
    }
    Tensor::matrix(k, n, data)
}

/// Fixed-length context of one user: `K_max` segments of length `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct UserEmbedding {
    values: Tensor,
    segment_len: usize,
}

impl UserEmbedding {
    pub fn as_tensor(&self) -> &Tensor {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Segment `l` (1-based).
    pub fn segment(&self, l: usize) -> &[f64] {
        &self.values.data()[(l - 1) * self.segment_len..l * self.segment_len]
    }
}

/// Which vector fills segment `l` of user `k`'s embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    /// The user itself: the shared self vector.
    SelfUser,
    /// An active interferer: its estimated channel row (0-based).
    Interferer(usize),
    /// No user in this slot: the shared padding vector.
    Padding,
}

/// Layout of user `k`'s embedding (1-based `k`, `1 <= k <= users <= k_max`).
pub fn embedding_layout(k: usize, users: usize, k_max: usize) -> Result<Vec<Segment>> {
    if k == 0 || k > users || users > k_max {
        return Err(Error::Invalid(format!(
            "embedding needs 1 <= k <= K <= K_max, got k={k}, K={users}, K_max={k_max}"
        )));
    }
    Ok((1..=k_max)
        .map(|l| {
            if l == k {
                Segment::SelfUser
            } else if l <= users {
                Segment::Interferer(l - 1)
            } else {
                Segment::Padding
            }
        })
        .collect())
}

pub fn build_user_embedding(
    h_hat: &Tensor,
    k: usize,
    users: usize,
    k_max: usize,
    e_self: &Tensor,
    e_pad: &Tensor,
) -> Result<UserEmbedding> {
    let n = e_self.len();
    if h_hat.rows() != users || h_hat.cols() != n || e_pad.len() != n {
        return Err(Error::shape(
            "build_user_embedding",
            format!(
                "Ĥ {:?}, e_self {}, e_pad {}, K={users}",
                h_hat.shape(),
                n,
                e_pad.len()
            ),
        ));
    }
    let mut data = Vec::with_capacity(n * k_max);
    for seg in embedding_layout(k, users, k_max)? {
        match seg {
            Segment::SelfUser => data.extend_from_slice(e_self.data()),
            Segment::Interferer(row) => data.extend_from_slice(h_hat.row(row)),
            Segment::Padding => data.extend_from_slice(e_pad.data()),
        }
    }
    Ok(UserEmbedding {
        values: Tensor::vector(data),
        segment_len: n,
    })
}

/// Graph form of [`build_user_embedding`] for all `K` users at once, stacked as `[K, N·K_max]`.
pub fn embeddings_graph(
    g: &mut Graph,
    h_hat: &Tensor,
    e_self: NodeId,
    e_pad: NodeId,
    k_max: usize,
) -> Result<NodeId> {
    let users = h_hat.rows();
    let n = h_hat.cols();
    let rows: Vec<NodeId> = (0..users)
        .map(|l| g.constant(Tensor::vector(h_hat.row(l).to_vec())))
        .collect();
    let mut parts = Vec::with_capacity(users * k_max);
    for k in 1..=users {
        for seg in embedding_layout(k, users, k_max)? {
            parts.push(match seg {
                Segment::SelfUser => e_self,
                Segment::Interferer(row) => rows[row],
                Segment::Padding => e_pad,
            });
        }
    }
    let flat = g.concat(&parts);
    g.reshape(flat, &[users, n * k_max])
}
