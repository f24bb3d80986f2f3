//! Dataset generators and experiment drivers behind the `proxnet` binary.
//!
//! Every experiment computes all of its outputs in memory first and only
//! then writes them, so a failed run leaves no files behind.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod experiments;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] proxnet::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 2 for bad configuration, 3 for a failure inside the numerics, 1 for
    /// anything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numerical(e) if e.is_numerical() => 3,
            HarnessError::Numerical(_) => 2,
            HarnessError::Io(_) => 1,
        }
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Config(e.to_string())
    }
}

/// Mean and sample standard deviation (n − 1 denominator). The deviation is
/// `None` for a single value.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}
