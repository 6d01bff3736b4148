//! Synthetic channel matrices, symbol sources and the linear Gaussian channel.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Constellation;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// `N x K` matrix with entries `sqrt(snr_k) * exp(-|n - k|)`: spatially
/// decaying received power with a per-user SNR.
pub fn synthetic_channel(n: usize, k: usize, snr: &[f64]) -> Result<Tensor> {
    if k == 0 || k > n {
        return Err(Error::Config(format!(
            "synthetic channel needs N >= K >= 1, got N={n}, K={k}"
        )));
    }
    if snr.len() != k {
        return Err(Error::Config(format!(
            "{} SNR values for {k} users",
            snr.len()
        )));
    }
    if let Some(bad) = snr.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("SNR must be positive, got {bad}")));
    }
    let mut h = Tensor::zeros(&[n, k]);
    for row in 0..n {
        for (col, s) in snr.iter().enumerate() {
            let dist = (row as f64 - col as f64).abs();
            h.set(row, col, s.sqrt() * (-dist).exp());
        }
    }
    Ok(h)
}

/// `B x K` matrix of i.i.d. uniform draws from the constellation.
pub fn generate_symbols<R: Rng + ?Sized>(
    rng: &mut R,
    b: usize,
    k: usize,
    constellation: &Constellation,
) -> Tensor {
    let m = constellation.len();
    let data = (0..b * k)
        .map(|_| constellation.point(rng.random_range(0..m)))
        .collect();
    Tensor::matrix(b, k, data).expect("b*k entries")
}

/// Received `B x N` matrix: row `i` is `(H s_i)^T + w_i` with `w_i ~ N(0, noise_variance I)`.
pub fn transmit<R: Rng + ?Sized>(
    h: &Tensor,
    s: &Tensor,
    noise_variance: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if h.rank() != 2 || s.rank() != 2 || h.cols() != s.cols() {
        return Err(Error::shape(
            "transmit",
            format!("H {:?}, s {:?}", h.shape(), s.shape()),
        ));
    }
    if noise_variance.is_nan() || noise_variance < 0.0 {
        return Err(Error::Config(format!(
            "noise variance must be >= 0, got {noise_variance}"
        )));
    }
    let mut y = s.matmul(&h.transpose())?;
    if noise_variance > 0.0 {
        let sigma = noise_variance.sqrt();
        for v in y.data_mut() {
            let w: f64 = rng.sample(StandardNormal);
            *v += sigma * w;
        }
    }
    Ok(y)
}
