//! Benchmark fixtures shared by the criterion targets.

use sleepnet_core::hpo::{sample_uniform, trial_rng, SearchSpace, Trial, TrialHistory, TrialStatus};
use sleepnet_core::{Batch, EPOCH_SAMPLES};

/// Deterministic pseudo-signal batch of `n` full-length epochs.
pub fn epoch_batch(n: usize) -> Batch<f32> {
    let data = (0..n * 5 * EPOCH_SAMPLES)
        .map(|i| ((i as f32) * 0.013).sin() + ((i % 97) as f32) * 0.01)
        .collect();
    Batch::new(n, 5, EPOCH_SAMPLES, data).expect("shape matches")
}

/// A search log of `n` completed trials with a smooth objective.
pub fn trial_history(n: usize, space: &SearchSpace) -> TrialHistory {
    let trials = (0..n)
        .map(|index| {
            let config = sample_uniform(space, &mut trial_rng(7, index));
            let objective = -(config.learning_rate.ln() + 4.0).powi(2);
            Trial {
                index,
                config,
                status: TrialStatus::Completed,
                objective: Some(objective),
                seconds: 0.0,
            }
        })
        .collect();
    TrialHistory { trials }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_sizes() {
        assert_eq!(epoch_batch(2).n, 2);
        assert_eq!(trial_history(12, &SearchSpace::default()).completed().count(), 12);
    }
}
