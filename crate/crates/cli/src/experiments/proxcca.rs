//! Two-tower training with the CCA prox layer and an annealed λ.

use proxnet::cca::{multiview_forward, multiview_loss_and_grad, CcaLayerConfig, MultiviewModel};
use proxnet::optim::{OptimizerState, TrainConfig};
use proxnet::rng::SplitMix64;
use proxnet::{Error, Matrix};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_seeds, run_seeds};
use crate::data::{gen_synthetic_multiview, MultiviewSpec};
use crate::output::{float, RunOutput, Table};
use crate::{mean_std, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxCcaTrainConfig {
    pub seeds: Vec<u64>,
    pub data: MultiviewSpec,
    /// Share of samples held out for testing.
    pub test_fraction: f64,
    pub hidden: usize,
    pub layer: CcaLayerConfig,
    pub epochs: usize,
    pub train: TrainConfig,
    /// Retries of a batch whose layer input has a degenerate spectrum, each
    /// with fresh `jitter`-scale noise on the observations.
    pub jitter_retries: usize,
    pub jitter: f64,
}

impl Default for ProxCcaTrainConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=5).collect(),
            data: MultiviewSpec::default(),
            test_fraction: 0.2,
            hidden: 10,
            layer: CcaLayerConfig::default(),
            epochs: 20,
            train: TrainConfig { lr: 1e-2, batch_size: 100, ..TrainConfig::default() },
            jitter_retries: 3,
            jitter: 1e-8,
        }
    }
}

impl ProxCcaTrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        check_seeds(&self.seeds)?;
        self.data.validate()?;
        self.layer.validate(self.hidden)?;
        self.train.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) || self.epochs == 0 {
            return Err(HarnessError::Config("need 0 < test_fraction < 1 and epochs >= 1".into()));
        }
        let test = (self.data.n as f64 * self.test_fraction).round() as usize;
        if test == 0 || test >= self.data.n {
            return Err(HarnessError::Config("the train/test split leaves one side empty".into()));
        }
        if !(self.jitter > 0.0) {
            return Err(HarnessError::Config("jitter must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CcaEpoch {
    pub epoch: usize,
    pub lambda: f64,
    pub loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// `−L` of the layer output on the full training set.
    pub correlation: f64,
    pub bypassed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CcaSeed {
    pub seed: u64,
    pub epochs: Vec<CcaEpoch>,
    pub jitter_retries_used: usize,
}

fn columns(m: &Matrix, idx: &[usize]) -> Matrix {
    Matrix::from_fn(m.rows(), idx.len(), |r, c| m[(r, idx[c])])
}

fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    let hits = (0..logits.cols())
        .filter(|&s| {
            let col = logits.col(s);
            let best = (0..col.len()).fold(0, |b, k| if col[k] > col[b] { k } else { b });
            best == labels[s]
        })
        .count();
    hits as f64 / logits.cols() as f64
}

/// Test accuracy is measured with the layer dropped, as it would be once the
/// schedule has faded it out.
pub fn run_seed(cfg: &ProxCcaTrainConfig, seed: u64) -> Result<CcaSeed, HarnessError> {
    let data = gen_synthetic_multiview(&cfg.data, seed)?;
    let mut rng = SplitMix64::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = cfg.data.n;
    let n_test = (n as f64 * cfg.test_fraction).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let (test_idx, train_idx) = idx.split_at(n_test);
    let labels_of = |ix: &[usize]| ix.iter().map(|&i| data.labels[i]).collect::<Vec<_>>();
    let (x_test, y_test, l_test) = (columns(&data.x, test_idx), columns(&data.y, test_idx), labels_of(test_idx));
    let (x_train, y_train, l_train) = (columns(&data.x, train_idx), columns(&data.y, train_idx), labels_of(train_idx));

    let mut model = MultiviewModel::random(cfg.data.d_obs_x, cfg.data.d_obs_y, cfg.hidden, cfg.data.classes, &mut rng);
    let mut theta = model.to_vec();
    let mut opt = OptimizerState::new(cfg.train, theta.len());
    let bypass = CcaLayerConfig { fade_threshold: 0.0, ..cfg.layer };
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut retries_used = 0;

    for epoch in 0..cfg.epochs {
        let lambda = cfg.layer.lambda_at(epoch);
        rng.shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.train.batch_size) {
            let mut xb = columns(&x_train, batch);
            let mut yb = columns(&y_train, batch);
            let lb: Vec<usize> = batch.iter().map(|&i| l_train[i]).collect();
            let mut attempt = 0;
            let (loss, grad) = loop {
                match multiview_loss_and_grad(&model, &cfg.layer, &xb, &yb, &lb, lambda) {
                    Ok((loss, grad, _)) => break (loss, grad),
                    Err(Error::DegenerateSpectrum { .. }) if attempt < cfg.jitter_retries => {
                        attempt += 1;
                        retries_used += 1;
                        for v in xb.as_mut_slice().iter_mut().chain(yb.as_mut_slice()) {
                            *v += cfg.jitter * rng.normal();
                        }
                    }
                    Err(e) => return Err(e.into()),
                }
            };
            if !loss.is_finite() {
                return Err(Error::NanLoss(epoch).into());
            }
            total += loss;
            batches += 1;
            opt.step(&mut theta, &grad);
            model.set_from_slice(&theta)?;
        }
        let train_out = multiview_forward(&model, &cfg.layer, &x_train, &y_train, epoch)?;
        let test_out = multiview_forward(&model, &bypass, &x_test, &y_test, epoch)?;
        epochs.push(CcaEpoch {
            epoch,
            lambda,
            loss: total / batches as f64,
            train_accuracy: accuracy(&train_out.averaged, &l_train),
            test_accuracy: accuracy(&test_out.averaged, &l_test),
            correlation: train_out.correlation,
            bypassed: train_out.bypassed,
        });
    }
    Ok(CcaSeed { seed, epochs, jitter_retries_used: retries_used })
}

/// `epochs.csv` has one row per (seed, epoch).
pub fn run(cfg: &ProxCcaTrainConfig, parallel: bool) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let seeds = run_seeds(&cfg.seeds, parallel, |s| run_seed(cfg, s))?;
    let mut table = Table::new(&["seed", "epoch", "lambda", "loss", "train_acc", "test_acc", "correlation"]);
    for s in &seeds {
        for e in &s.epochs {
            table.push(vec![
                s.seed.to_string(),
                e.epoch.to_string(),
                float(e.lambda),
                float(e.loss),
                float(e.train_accuracy),
                float(e.test_accuracy),
                float(e.correlation),
            ]);
        }
    }
    let finals: Vec<f64> = seeds.iter().map(|s| s.epochs.last().map_or(f64::NAN, |e| e.test_accuracy)).collect();
    let (mean, std) = mean_std(&finals);
    let mut report: Vec<String> =
        seeds.iter().zip(&finals).map(|(s, a)| format!("seed {}: test accuracy {a:.3}", s.seed)).collect();
    report.push(format!("test accuracy {mean:.3} ± {:.3}", std.unwrap_or(0.0)));
    let summary = json!({
        "experiment": "proxcca-train",
        "seeds": cfg.seeds,
        "config": cfg,
        "metrics": {
            "final_test_accuracy": finals,
            "final_test_accuracy_mean": mean,
            "final_test_accuracy_std": std,
            "jitter_retries_used": seeds.iter().map(|s| s.jitter_retries_used).collect::<Vec<_>>(),
        },
    });
    Ok(RunOutput { tables: vec![("epochs.csv", table)], summary, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proxnet::cca::lambda_schedule;

    fn small() -> ProxCcaTrainConfig {
        ProxCcaTrainConfig {
            seeds: vec![1],
            data: MultiviewSpec { n: 60, ..Default::default() },
            hidden: 4,
            epochs: 2,
            train: TrainConfig { batch_size: 24, ..ProxCcaTrainConfig::default().train },
            ..Default::default()
        }
    }

    #[test]
    fn lambda_column_follows_the_schedule() {
        let cfg = small();
        let s = run_seed(&cfg, 1).unwrap();
        for e in &s.epochs {
            assert_eq!(e.lambda, lambda_schedule(cfg.layer.k_sched, cfg.layer.alpha0, e.epoch));
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<ProxCcaTrainConfig>(r#"{"epochs": 2, "colour": 1}"#).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn k_above_hidden_is_a_config_error() {
        let mut cfg = small();
        cfg.layer.k = 9;
        assert_eq!(run(&cfg, false).unwrap_err().exit_code(), 2);
    }
}
