//! Warm-started ProxLSTM against the vanilla LSTM it branched from.

use proxnet::lstm::{warm_start, EpochMetrics, ProxLstmConfig, WarmStartConfig, WarmStartReport};
use proxnet::optim::TrainConfig;
use proxnet::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_seeds, run_seeds};
use crate::data::{gen_sequences, SequenceSpec};
use crate::output::{float, RunOutput, Table};
use crate::{mean_std, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxLstmTrainConfig {
    pub seeds: Vec<u64>,
    pub data: SequenceSpec,
    pub test_fraction: f64,
    pub warm_start: WarmStartConfig,
}

impl Default for ProxLstmTrainConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            data: SequenceSpec::default(),
            test_fraction: 0.2,
            warm_start: WarmStartConfig {
                hidden: 8,
                cell: ProxLstmConfig { lambda: 1.0, delta: 0.1 },
                train: TrainConfig { lr: 1e-2, batch_size: 32, ..TrainConfig::default() },
                vanilla_epochs: 60,
                plateau_tol: 2e-3,
                plateau_window: 5,
                prox_epochs: 10,
            },
        }
    }
}

impl ProxLstmTrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        check_seeds(&self.seeds)?;
        let w = &self.warm_start;
        w.train.validate()?;
        if w.hidden == 0 || !(w.cell.lambda > 0.0) || !(w.cell.delta >= 0.0) || !(w.plateau_tol >= 0.0) {
            return Err(HarnessError::Config(format!("bad warm-start settings {w:?}")));
        }
        let test = (self.data.n as f64 * self.test_fraction).round() as usize;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) || test == 0 || test >= self.data.n {
            return Err(HarnessError::Config("the train/test split leaves one side empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LstmSeed {
    pub seed: u64,
    #[serde(skip)]
    pub report: WarmStartReport,
    pub vanilla_test_accuracy: f64,
    pub prox_test_accuracy: f64,
    pub vanilla_epochs_run: usize,
}

/// The first `test_fraction · n` sequences form the test set; the generator
/// draws them independently, so no shuffle is needed.
pub fn run_seed(cfg: &ProxLstmTrainConfig, seed: u64) -> Result<LstmSeed, HarnessError> {
    let set = gen_sequences(&cfg.data, seed)?;
    let n_test = (cfg.data.n as f64 * cfg.test_fraction).round() as usize;
    let (test, train) = set.items.split_at(n_test);
    let mut rng = SplitMix64::new(seed ^ 0xd1b5_4a32_d192_ed03);
    let report = warm_start(train, test, cfg.data.vocab, cfg.data.vocab, &cfg.warm_start, &mut rng)?;
    Ok(LstmSeed {
        seed,
        vanilla_test_accuracy: report.vanilla_test_accuracy,
        prox_test_accuracy: report.prox_test_accuracy,
        vanilla_epochs_run: report.vanilla_phase.len(),
        report,
    })
}

/// `epochs.csv` has one row per (seed, phase, epoch). Phases are `vanilla`,
/// then the two branches `vanilla_continued` and `prox`.
pub fn run(cfg: &ProxLstmTrainConfig, parallel: bool) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let seeds = run_seeds(&cfg.seeds, parallel, |s| run_seed(cfg, s))?;
    let mut table = Table::new(&["seed", "phase", "epoch", "train_loss", "train_acc", "test_acc"]);
    for s in &seeds {
        let phases: [(&str, &[EpochMetrics]); 3] = [
            ("vanilla", &s.report.vanilla_phase),
            ("vanilla_continued", &s.report.vanilla_continued),
            ("prox", &s.report.prox_phase),
        ];
        for (phase, rows) in phases {
            for m in rows {
                table.push(vec![
                    s.seed.to_string(),
                    phase.to_string(),
                    m.epoch.to_string(),
                    float(m.train_loss),
                    float(m.train_accuracy),
                    float(m.test_accuracy),
                ]);
            }
        }
    }
    let wins = seeds.iter().filter(|s| s.prox_test_accuracy >= s.vanilla_test_accuracy).count();
    let vanilla: Vec<f64> = seeds.iter().map(|s| s.vanilla_test_accuracy).collect();
    let prox: Vec<f64> = seeds.iter().map(|s| s.prox_test_accuracy).collect();
    let (vm, vs) = mean_std(&vanilla);
    let (pm, ps) = mean_std(&prox);
    let mut report: Vec<String> = seeds
        .iter()
        .map(|s| format!("seed {}: vanilla {:.3}  prox {:.3}", s.seed, s.vanilla_test_accuracy, s.prox_test_accuracy))
        .collect();
    report.push(format!(
        "prox >= vanilla in {wins}/{} seeds; vanilla {vm:.3} ± {:.3}, prox {pm:.3} ± {:.3}",
        seeds.len(),
        vs.unwrap_or(0.0),
        ps.unwrap_or(0.0)
    ));
    let summary = json!({
        "experiment": "proxlstm-train",
        "seeds": cfg.seeds,
        "config": cfg,
        "per_seed": seeds,
        "metrics": {
            "prox_at_least_vanilla": wins,
            "vanilla_test_accuracy_mean": vm,
            "vanilla_test_accuracy_std": vs,
            "prox_test_accuracy_mean": pm,
            "prox_test_accuracy_std": ps,
        },
    });
    Ok(RunOutput { tables: vec![("epochs.csv", table)], summary, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ProxLstmTrainConfig {
        let mut cfg = ProxLstmTrainConfig {
            seeds: vec![2],
            data: SequenceSpec { n: 40, length: 5, ..Default::default() },
            ..Default::default()
        };
        cfg.warm_start.hidden = 3;
        cfg.warm_start.vanilla_epochs = 2;
        cfg.warm_start.prox_epochs = 1;
        cfg
    }

    #[test]
    fn epochs_table_covers_all_phases() {
        let out = run(&small(), false).unwrap();
        let seed = run_seed(&small(), 2).unwrap();
        let expect = seed.report.vanilla_phase.len() + 2;
        assert_eq!(out.tables[0].1.len(), expect);
    }

    #[test]
    fn default_config_round_trips() {
        let cfg = ProxLstmTrainConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ProxLstmTrainConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn zero_hidden_is_a_config_error() {
        let mut cfg = small();
        cfg.warm_start.hidden = 0;
        assert_eq!(run(&cfg, false).unwrap_err().exit_code(), 2);
    }
}
