//! Dropout as a prox layer versus dropout as a training regularizer.

use proxnet::dropout::{
    compare_discriminants, prox_dropout_rows, prox_pipeline_train, rrm_dropout_train, DropoutProxConfig,
};
use proxnet::Matrix;
use serde::Serialize;
use serde_json::json;

use crate::data::gen_twomoon;
use crate::output::{float, RunOutput, Table};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropoutSimConfig {
    pub lambda: f64,
    pub mu: f64,
    /// The pipeline's ridge weight is `c_coef · λ² · μ`.
    pub c_coef: f64,
    pub n: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for DropoutSimConfig {
    fn default() -> Self {
        Self { lambda: 0.5, mu: 0.1, c_coef: 0.2, n: 200, noise: 0.08, seed: 1 }
    }
}

impl DropoutSimConfig {
    pub fn c_reg(&self) -> f64 {
        self.c_coef * self.lambda * self.lambda * self.mu
    }

    fn validate(&self) -> Result<(), HarnessError> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("c-coef", self.c_coef)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(HarnessError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Two-moon points centred at the origin, with labels +1 for the upper moon
/// and −1 for the lower one.
fn centred_moons(cfg: &DropoutSimConfig) -> Result<(Matrix, Vec<f64>), HarnessError> {
    let data = gen_twomoon(cfg.n, cfg.noise, cfg.seed)?;
    let n = cfg.n as f64;
    let mean: Vec<f64> = (0..2).map(|j| (0..cfg.n).map(|i| data.points[(i, j)]).sum::<f64>() / n).collect();
    let xs = Matrix::from_fn(cfg.n, 2, |i, j| data.points[(i, j)] - mean[j]);
    let ys = data.labels.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
    Ok((xs, ys))
}

/// `scatter.csv` pairs the regularizer-trained discriminant `βᵀx` with the
/// prox-pipeline discriminant `αᵀP(x)` for every point.
pub fn run(cfg: &DropoutSimConfig) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let (xs, ys) = centred_moons(cfg)?;
    let prox = prox_dropout_rows(&xs, &DropoutProxConfig::with_lambda(cfg.lambda))?;
    let beta = rrm_dropout_train(&xs, &ys, cfg.mu)?;
    let alpha = prox_pipeline_train(&prox, &ys, cfg.c_reg())?;
    let cmp = compare_discriminants(&xs, &prox, &beta, &alpha)?;

    let mut table = Table::new(&["rrm", "prox", "label"]);
    for (i, (a, b)) in cmp.pairs.iter().enumerate() {
        table.push(vec![float(*a), float(*b), format!("{}", ys[i])]);
    }
    let summary = json!({
        "experiment": "dropout-sim",
        "seed": cfg.seed,
        "config": cfg,
        "metrics": {
            "pearson_r": cmp.pearson_r,
            "c_reg": cfg.c_reg(),
            "beta": beta,
            "alpha": alpha,
        },
    });
    let report = vec![format!("Pearson r = {:.6}", cmp.pearson_r)];
    Ok(RunOutput { tables: vec![("scatter.csv", table)], summary, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_follows_the_caption_formula() {
        let cfg = DropoutSimConfig::default();
        assert!((cfg.c_reg() - 0.2 * 0.25 * 0.1).abs() < 1e-18);
    }

    #[test]
    fn moons_are_centred() {
        let (xs, ys) = centred_moons(&DropoutSimConfig::default()).unwrap();
        for j in 0..2 {
            let m: f64 = (0..xs.rows()).map(|i| xs[(i, j)]).sum::<f64>();
            assert!(m.abs() < 1e-12);
        }
        assert_eq!(ys.iter().filter(|&&y| y > 0.0).count(), 100);
    }

    #[test]
    fn non_positive_mu_rejected() {
        let cfg = DropoutSimConfig { mu: 0.0, ..Default::default() };
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 2);
    }
}
