use rand::seq::SliceRandom;

use crate::dataset::{OfflineDataset, Transition};
use crate::error::{Error, Result};
use crate::mdp::TabularPolicy;
use crate::nn::{adam_step, Adam, AdamState};
use crate::planner::GaussianMlpPolicy;
use crate::rng::{stream, substream};

/// Empirical action frequencies per state; uniform where the state never
/// appears in the data.
pub fn behavior_clone_tabular(dataset: &OfflineDataset, n_states: usize, n_actions: usize) -> Result<TabularPolicy> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![vec![0u64; n_actions]; n_states];
    for t in &dataset.transitions {
        let (s, a) = (t.s[0] as usize, t.a[0] as usize);
        if s >= n_states || a >= n_actions {
            return Err(Error::Dimension(format!("pair ({s}, {a}) outside the table")));
        }
        counts[s][a] += 1;
    }
    let rows = counts
        .into_iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                vec![1.0 / n_actions as f64; n_actions]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(TabularPolicy::Stochastic(rows))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub log_std_init: f64,
    pub log_std_min: f64,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            epochs: 20,
            step_size: 3e-3,
            batch_size: 64,
            log_std_init: 0.0,
            log_std_min: -2.5,
            seed: 0,
        }
    }
}

fn negative_log_likelihood(policy: &GaussianMlpPolicy, batch: &[&Transition]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; policy.n_params()];
    let mut nll = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for t in batch {
        nll -= policy.log_prob(&t.s, &t.a) * scale;
        for (g, d) in grad.iter_mut().zip(policy.grad_log_prob(&t.s, &t.a)) {
            *g -= d * scale;
        }
    }
    (nll, grad)
}

/// Gaussian MLP policy fitted to the dataset's actions by maximum likelihood.
pub fn behavior_clone_gaussian(dataset: &OfflineDataset, config: &BcConfig) -> Result<GaussianMlpPolicy> {
    let stats = dataset.stats.as_ref().ok_or(Error::EmptyDataset)?;
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut policy = GaussianMlpPolicy::new(
        stats.mu_s.clone(),
        stats.sigma_s.clone(),
        dataset.action_dim(),
        &config.hidden,
        config.log_std_init,
        config.log_std_min,
        &mut substream(config.seed, "bc-init", 0),
    )?;
    let adam = Adam::new(config.step_size);
    let mut state = AdamState::new(policy.n_params());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = stream(config.seed, "bc-batches");
    let mut params = policy.params();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Transition> = chunk.iter().map(|&i| &dataset.transitions[i]).collect();
            let (nll, grad) = negative_log_likelihood(&policy, &batch);
            if !nll.is_finite() {
                return Err(Error::Diverged {
                    member: 0,
                    epoch,
                    batch: b,
                    loss: nll,
                });
            }
            adam_step(&mut params, &grad, &mut state, &adam);
            policy.set_params(&params);
            params = policy.params();
        }
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetMeta;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn meta() -> DatasetMeta {
        DatasetMeta {
            env: "t".into(),
            gamma: 0.9,
            strategy: "Pure".into(),
            seed: 0,
            n_transitions: 0,
        }
    }

    fn tab(s: usize, a: usize) -> Transition {
        Transition {
            episode: 0,
            t: 0,
            s: vec![s as f64],
            a: vec![a as f64],
            r: 0.0,
            s_next: vec![s as f64],
            done: false,
        }
    }

    #[test]
    fn tabular_clone_frequencies_and_fallback() {
        let data = OfflineDataset::new(meta(), vec![tab(0, 1), tab(0, 1), tab(1, 0), tab(1, 1)]);
        let pi = behavior_clone_tabular(&data, 3, 2).unwrap();
        assert_eq!(pi.distribution(0, 2), vec![0.0, 1.0]);
        assert_eq!(pi.distribution(1, 2), vec![0.5, 0.5]);
        assert_eq!(pi.distribution(2, 2), vec![0.5, 0.5]);
    }

    fn true_mean(s: &[f64]) -> f64 {
        0.5 * s[0] - 0.3 * s[1]
    }

    fn linear_gaussian_data(n: usize, seed: u64) -> OfflineDataset {
        let mut rng = stream(seed, "bc-data");
        let ts = (0..n)
            .map(|i| {
                let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let xi: f64 = StandardNormal.sample(&mut rng);
                Transition {
                    episode: i as u64,
                    t: 0,
                    a: vec![true_mean(&s) + 0.1 * xi],
                    s_next: s.clone(),
                    s,
                    r: 0.0,
                    done: false,
                }
            })
            .collect();
        OfflineDataset::new(meta(), ts)
    }

    #[test]
    fn gaussian_clone_recovers_linear_behavior() {
        let train = linear_gaussian_data(5000, 1);
        let test = linear_gaussian_data(500, 2);
        let pi = behavior_clone_gaussian(&train, &BcConfig::default()).unwrap();
        let actions: Vec<f64> = test.transitions.iter().map(|t| t.a[0]).collect();
        let mean_a = actions.iter().sum::<f64>() / actions.len() as f64;
        let var_a = actions.iter().map(|a| (a - mean_a).powi(2)).sum::<f64>() / actions.len() as f64;
        let mse = test
            .transitions
            .iter()
            .map(|t| (pi.mean(&t.s)[0] - true_mean(&t.s)).powi(2))
            .sum::<f64>()
            / test.len() as f64;
        assert!(mse < 0.05 * var_a, "mse {mse}, action variance {var_a}");
        // The fitted spread approaches the behavior noise.
        assert!((pi.log_std[0] - 0.1f64.ln()).abs() < 0.3, "{:?}", pi.log_std);
    }
}
