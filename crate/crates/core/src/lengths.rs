//! Deterministic synthetic inputs.
//!
//! All randomness flows from [`seeded_rng`], a ChaCha8 stream keyed by
//! `SeedableRng::seed_from_u64`. Uniform reals are the top 53 bits of a `u64`
//! scaled by 2^-53, and integer lengths are derived from those reals by
//! flooring, so the same seed yields the same fixtures on every platform and
//! lengths drawn for different `max_len` values stay comonotone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::{DenseTensor, JaggedTensor};

pub type FixtureRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> FixtureRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthKind {
    /// Every sample has exactly `max_len` rows.
    Fixed,
    /// `Bi ~ U{1, max_len}`; never empty.
    Uniform,
    /// `Bi ~ U{0, max_len}`; mean exactly `max_len / 2`, empty segments allowed.
    HalfMean,
}

impl LengthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::Uniform => "uniform",
            Self::HalfMean => "half-mean",
        }
    }
}

impl std::str::FromStr for LengthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "uniform" => Ok(Self::Uniform),
            "half-mean" => Ok(Self::HalfMean),
            other => Err(format!("unknown length distribution `{other}`")),
        }
    }
}

impl std::fmt::Display for LengthKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub kind: LengthKind,
    pub max_len: usize,
    pub seed: u64,
}

impl LengthDistribution {
    pub fn new(kind: LengthKind, max_len: usize, seed: u64) -> Self {
        Self {
            kind,
            max_len,
            seed,
        }
    }

    pub fn with_max_len(self, max_len: usize) -> Self {
        Self { max_len, ..self }
    }
}

/// Draws `batch` segment lengths; deterministic for a fixed seed.
pub fn gen_lengths(dist: &LengthDistribution, batch: usize) -> Vec<usize> {
    let mut rng = seeded_rng(dist.seed);
    let l = dist.max_len;
    (0..batch)
        .map(|_| {
            let u: f64 = rng.random();
            match dist.kind {
                LengthKind::Fixed => l,
                LengthKind::Uniform => (1 + (u * l as f64) as usize).min(l),
                LengthKind::HalfMean => ((u * (l + 1) as f64) as usize).min(l),
            }
        })
        .collect()
}

/// Uniform reals in `[lo, hi)`.
pub fn random_values<T: Scalar>(rng: &mut FixtureRng, n: usize, lo: f64, hi: f64) -> Vec<T> {
    (0..n)
        .map(|_| T::from_acc(lo + (hi - lo) * rng.random::<f64>()))
        .collect()
}

pub fn random_jagged<T: Scalar>(rng: &mut FixtureRng, lengths: &[usize], dim: usize) -> JaggedTensor<T> {
    let n = lengths.iter().sum::<usize>() * dim;
    JaggedTensor::from_lengths(lengths, random_values(rng, n, -1.0, 1.0), dim)
        .expect("generated buffer matches lengths")
}

pub fn random_dense<T: Scalar>(rng: &mut FixtureRng, shape: Vec<usize>) -> DenseTensor<T> {
    let n = shape.iter().product();
    DenseTensor::new(shape, random_values(rng, n, -1.0, 1.0)).expect("generated buffer matches shape")
}

/// Uniform integer in `[lo, hi]`.
pub fn random_index(rng: &mut FixtureRng, lo: usize, hi: usize) -> usize {
    let u: f64 = rng.random();
    (lo + (u * (hi - lo + 1) as f64) as usize).min(hi)
}
