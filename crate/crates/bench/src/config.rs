use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use jagged_core::{Blocks, LengthDistribution, LengthKind, OpId};
use serde::{Deserialize, Serialize};

use crate::{BenchError, Result};

/// Max-length grid used by `bench sweep` when none is given.
pub const DEFAULT_GRID: [usize; 6] = [128, 256, 512, 1024, 2048, 4096];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::F32 => "f32",
            Self::F64 => "f64",
        }
    }

    pub fn element_bytes(self) -> usize {
        match self {
            Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            _ => Err(BenchError::Config(format!("unknown precision `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Md,
}

impl FromStr for OutputFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "md" => Ok(Self::Md),
            _ => Err(BenchError::Config(format!("unknown format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub op: OpId,
    pub batch: usize,
    pub dim: usize,
    pub t: usize,
    pub max_len: usize,
    pub grid: Vec<usize>,
    pub dist: LengthKind,
    pub seed: u64,
    pub precision: Precision,
    pub iters: usize,
    pub warmup: usize,
    pub threads: usize,
    pub blocks: Blocks,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            op: OpId::JaggedDenseBmm,
            batch: 256,
            dim: 64,
            t: 64,
            max_len: 512,
            grid: DEFAULT_GRID.to_vec(),
            dist: LengthKind::HalfMean,
            seed: 0,
            precision: Precision::F32,
            iters: 20,
            warmup: 3,
            threads: 1,
            blocks: Blocks::default(),
            format: OutputFormat::Csv,
            out: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch", self.batch),
            ("dim", self.dim),
            ("t", self.t),
            ("max_len", self.max_len),
            ("iters", self.iters),
            ("threads", self.threads),
            ("block_q", self.blocks.q),
            ("block_k", self.blocks.k),
        ];
        match positive.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(BenchError::Config(format!("{name} must be at least 1"))),
            None => Ok(()),
        }
    }

    pub fn distribution(&self) -> LengthDistribution {
        LengthDistribution::new(self.dist, self.max_len, self.seed)
    }

    pub fn at_max_len(&self, max_len: usize) -> Self {
        Self {
            max_len,
            ..self.clone()
        }
    }
}
