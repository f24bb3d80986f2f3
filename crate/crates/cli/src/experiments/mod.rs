//! One driver per subcommand. Each returns a [`RunOutput`] and writes nothing.

pub mod dropout_sim;
pub mod gcca;
pub mod proxcca;
pub mod proxlstm;
pub mod twomoon;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::HarnessError;

/// Runs `f` once per seed and returns the results in seed order, whether or
/// not the seeds ran on separate threads. The first error in seed order wins.
pub fn run_seeds<T, F>(seeds: &[u64], parallel: bool, f: F) -> Result<Vec<T>, HarnessError>
where
    T: Send,
    F: Fn(u64) -> Result<T, HarnessError> + Sync,
{
    if !parallel {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let f = &f;
    let results: Vec<Result<T, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || f(s))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(HarnessError::Config("seed worker panicked".into()))))
            .collect()
    });
    results.into_iter().collect()
}

/// Reads a JSON config, rejecting unknown keys through the target type.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn check_seeds(seeds: &[u64]) -> Result<(), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("at least one seed is required".into()));
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(HarnessError::Config("seeds must be distinct".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_merge_keeps_seed_order() {
        let seeds = [5, 3, 9, 1];
        let serial = run_seeds(&seeds, false, |s| Ok(s * 10)).unwrap();
        let parallel = run_seeds(&seeds, true, |s| Ok(s * 10)).unwrap();
        assert_eq!(serial, vec![50, 30, 90, 10]);
        assert_eq!(serial, parallel);
    }

    #[test]
    fn first_error_in_seed_order_wins() {
        let r =
            run_seeds(
                &[1, 2, 3],
                true,
                |s| {
                    if s >= 2 {
                        Err(HarnessError::Config(format!("seed {s}")))
                    } else {
                        Ok(s)
                    }
                },
            );
        assert!(matches!(r, Err(HarnessError::Config(m)) if m == "seed 2"));
    }

    #[test]
    fn duplicate_seeds_rejected() {
        assert!(check_seeds(&[1, 2, 1]).is_err());
        assert!(check_seeds(&[]).is_err());
    }
}
