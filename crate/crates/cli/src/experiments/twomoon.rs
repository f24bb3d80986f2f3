//! Gradient-flatness warping on two moons, classified from two labels.

use proxnet::kernel::{kpca_top2, median_heuristic_gamma, warped_distance, NystromMap, WarpOperator};
use proxnet::rng::SplitMix64;
use proxnet::Matrix;
use serde::Serialize;
use serde_json::json;

use super::{check_seeds, run_seeds};
use crate::data::gen_twomoon_from;
use crate::output::{float, RunOutput, Table};
use crate::{mean_std, HarnessError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoMoonConfig {
    pub n: usize,
    pub noise: f64,
    pub landmarks: usize,
    pub lambda: f64,
    pub seeds: Vec<u64>,
}

impl Default for TwoMoonConfig {
    fn default() -> Self {
        Self { n: 200, noise: 0.08, landmarks: 100, lambda: 1e-4, seeds: (1..=5).collect() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoMoonSeed {
    pub seed: u64,
    pub gamma: f64,
    pub warped_accuracy: f64,
    pub unwarped_accuracy: f64,
    #[serde(skip)]
    pub embedding: Matrix,
    #[serde(skip)]
    pub labels: Vec<usize>,
}

/// Share of points whose nearest labelled point (columns of `emb`) carries
/// their own label.
fn one_nn_accuracy(emb: &Matrix, labels: &[usize], labeled: [usize; 2]) -> f64 {
    let anchors = [emb.col(labeled[0]), emb.col(labeled[1])];
    let hits = (0..emb.cols())
        .filter(|&i| {
            let e = emb.col(i);
            let pick = if warped_distance(&e, &anchors[1]) < warped_distance(&e, &anchors[0]) { 1 } else { 0 };
            labels[labeled[pick]] == labels[i]
        })
        .count();
    hits as f64 / emb.cols() as f64
}

/// Points are drawn first, then the landmark subset is a shuffle of the point
/// indices from the same stream.
pub fn run_seed(cfg: &TwoMoonConfig, seed: u64) -> Result<TwoMoonSeed, HarnessError> {
    let mut rng = SplitMix64::new(seed);
    let data = gen_twomoon_from(cfg.n, cfg.noise, &mut rng)?;
    let mut idx: Vec<usize> = (0..cfg.n).collect();
    rng.shuffle(&mut idx);
    let landmarks = Matrix::from_fn(cfg.landmarks, 2, |l, j| data.points[(idx[l], j)]);

    let gamma = median_heuristic_gamma(&data.points)?;
    let map = NystromMap::new(landmarks, gamma)?;
    let phi = map.embed_rows(&data.points)?;
    let set = map.gradient_representers(&data.points)?;
    let warped = WarpOperator::new(&set, cfg.lambda)?.apply(&phi)?;

    Ok(TwoMoonSeed {
        seed,
        gamma,
        warped_accuracy: one_nn_accuracy(&warped, &data.labels, data.labeled),
        unwarped_accuracy: one_nn_accuracy(&phi, &data.labels, data.labeled),
        embedding: kpca_top2(&warped)?,
        labels: data.labels,
    })
}

impl TwoMoonConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        check_seeds(&self.seeds)?;
        if self.landmarks < 1 || self.landmarks > self.n {
            return Err(HarnessError::Config(format!("landmarks must be in 1..={}, got {}", self.n, self.landmarks)));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(HarnessError::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `embedding.csv` holds the kernel-PCA coordinates of the warped outputs for
/// the first seed.
pub fn run(cfg: &TwoMoonConfig, parallel: bool) -> Result<RunOutput, HarnessError> {
    cfg.validate()?;
    let seeds = run_seeds(&cfg.seeds, parallel, |s| run_seed(cfg, s))?;

    let first = &seeds[0];
    let mut table = Table::new(&["pc1", "pc2", "label"]);
    for i in 0..first.labels.len() {
        table.push(vec![float(first.embedding[(i, 0)]), float(first.embedding[(i, 1)]), first.labels[i].to_string()]);
    }

    let warped: Vec<f64> = seeds.iter().map(|s| s.warped_accuracy).collect();
    let plain: Vec<f64> = seeds.iter().map(|s| s.unwarped_accuracy).collect();
    let (wm, ws) = mean_std(&warped);
    let (pm, ps) = mean_std(&plain);
    let mut report: Vec<String> = seeds
        .iter()
        .map(|s| format!("seed {}: warped {:.3}  unwarped {:.3}", s.seed, s.warped_accuracy, s.unwarped_accuracy))
        .collect();
    report.push(format!("warped {wm:.3} ± {:.3}, unwarped {pm:.3} ± {:.3}", ws.unwrap_or(0.0), ps.unwrap_or(0.0)));

    let summary = json!({
        "experiment": "twomoon",
        "seeds": cfg.seeds,
        "config": cfg,
        "per_seed": seeds,
        "metrics": {
            "warped_accuracy_mean": wm,
            "warped_accuracy_std": ws,
            "unwarped_accuracy_mean": pm,
            "unwarped_accuracy_std": ps,
        },
    });
    Ok(RunOutput { tables: vec![("embedding.csv", table)], summary, report })
}
