//! Closed-form GCCA against alternating minimization on random problems.

use proxnet::cca::{gcca_alternating, gcca_solve};
use proxnet::rng::SplitMix64;
use proxnet::Matrix;
use serde::Serialize;
use serde_json::json;

use crate::output::{float, RunOutput, Table};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GccaCheckConfig {
    pub views: usize,
    pub problems: usize,
    /// Samples per problem.
    pub n: usize,
    pub rank: usize,
    pub starts: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for GccaCheckConfig {
    fn default() -> Self {
        Self { views: 3, problems: 20, n: 15, rank: 2, starts: 5, iters: 5000, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GccaTrial {
    pub problem: usize,
    pub eigen_objective: f64,
    pub oracle_objective: f64,
    /// Eigen objective minus oracle objective; ≤ 0 means the closed form won.
    pub gap: f64,
    /// `max |GᵀG − I|` of the closed-form core.
    pub orthogonality: f64,
}

/// View `j` has `rank + 1 + j` centred Gaussian columns.
fn random_problem(cfg: &GccaCheckConfig, rng: &mut SplitMix64) -> Vec<Matrix> {
    (0..cfg.views)
        .map(|j| {
            let d = cfg.rank + 1 + j;
            Matrix::from_fn(cfg.n, d, |_, _| rng.normal()).transpose().center_columns().transpose()
        })
        .collect()
}

pub fn run(cfg: &GccaCheckConfig) -> Result<RunOutput, HarnessError> {
    if cfg.views < 2 || cfg.problems == 0 || cfg.rank == 0 || cfg.starts == 0 || cfg.iters == 0 {
        return Err(HarnessError::Config(format!("bad gcca-check settings {cfg:?}")));
    }
    if cfg.n <= cfg.rank + cfg.views {
        return Err(HarnessError::Config(format!("n must exceed rank + views, got {}", cfg.n)));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut trials = Vec::with_capacity(cfg.problems);
    for problem in 0..cfg.problems {
        let views = random_problem(cfg, &mut rng);
        let sol = gcca_solve(&views, cfg.rank)?;
        let oracle = gcca_alternating(&views, cfg.rank, cfg.starts, cfg.iters, &mut rng)?;
        let orthogonality = (&sol.g.t_matmul(&sol.g) - &Matrix::identity(cfg.rank)).max_abs();
        trials.push(GccaTrial {
            problem,
            eigen_objective: sol.objective,
            oracle_objective: oracle.objective,
            gap: sol.objective - oracle.objective,
            orthogonality,
        });
    }

    let mut table = Table::new(&["problem", "eigen_objective", "oracle_objective", "gap", "orthogonality"]);
    for t in &trials {
        table.push(vec![
            t.problem.to_string(),
            float(t.eigen_objective),
            float(t.oracle_objective),
            float(t.gap),
            float(t.orthogonality),
        ]);
    }
    let max_gap = trials.iter().map(|t| t.gap).fold(f64::NEG_INFINITY, f64::max);
    let max_orth = trials.iter().map(|t| t.orthogonality).fold(0.0, f64::max);
    let summary = json!({
        "experiment": "gcca-check",
        "seed": cfg.seed,
        "config": cfg,
        "metrics": { "max_gap": max_gap, "max_orthogonality": max_orth },
    });
    let report =
        vec![format!("{} problems: max(eigen − oracle) = {max_gap:.3e}, max |GᵀG − I| = {max_orth:.3e}", cfg.problems)];
    Ok(RunOutput { tables: vec![("trials.csv", table)], summary, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_has_one_row_per_problem() {
        let cfg = GccaCheckConfig { problems: 2, iters: 500, ..Default::default() };
        let out = run(&cfg).unwrap();
        assert_eq!(out.tables[0].1.len(), 2);
    }

    #[test]
    fn single_view_rejected() {
        let cfg = GccaCheckConfig { views: 1, ..Default::default() };
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 2);
    }
}
