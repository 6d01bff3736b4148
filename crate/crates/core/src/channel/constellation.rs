use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued symbol alphabet. Index 0 is the "positive" point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<f64>,
    bits_per_symbol: u32,
}

impl Constellation {
    /// `[+1, -1]`, with index 0 mapping to +1.
    pub fn bpsk() -> Self {
        Self {
            points: vec![1.0, -1.0],
            bits_per_symbol: 1,
        }
    }

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 || !points.len().is_power_of_two() {
            return Err(Error::Config(format!(
                "constellation needs a power-of-two number of points, got {}",
                points.len()
            )));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].contains(a) || !a.is_finite() {
                return Err(Error::Config(format!("duplicate or non-finite point {a}")));
            }
        }
        let bits_per_symbol = points.len().trailing_zeros();
        Ok(Self {
            points,
            bits_per_symbol,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn point(&self, index: usize) -> f64 {
        self.points[index]
    }

    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.points.iter().position(|&p| p == value)
    }

    /// Maps symbol values to point indices, failing on anything off-alphabet.
    pub fn indices(&self, values: &[f64]) -> Result<Vec<usize>> {
        values
            .iter()
            .map(|&v| {
                self.index_of(v)
                    .ok_or_else(|| Error::Invalid(format!("{v} is not a constellation point")))
            })
            .collect()
    }
}

impl Default for Constellation {
    fn default() -> Self {
        Self::bpsk()
    }
}
