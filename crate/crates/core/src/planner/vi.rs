use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

#[derive(Clone, Debug, PartialEq)]
pub struct ViConfig {
    /// Target for the suboptimality certificate.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iters: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViResult {
    pub policy: TabularPolicy,
    pub v: Vec<f64>,
    /// `2 gamma |V_k - V_{k-1}|_inf / (1 - gamma)`: the greedy policy is at
    /// most this far from optimal.
    pub epsilon_pi: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn q_value(mdp: &TabularMdp, v: &[f64], s: usize, a: usize) -> f64 {
    let next: f64 = mdp.transition(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
    mdp.reward(s, a) + mdp.gamma() * next
}

/// Greedy policy with ties going to the lowest action index.
pub fn greedy_policy(mdp: &TabularMdp, v: &[f64]) -> TabularPolicy {
    let acts = (0..mdp.n_states())
        .map(|s| {
            let mut best = (0, q_value(mdp, v, s, 0));
            for a in 1..mdp.n_actions() {
                let q = q_value(mdp, v, s, a);
                if q > best.1 {
                    best = (a, q);
                }
            }
            best.0
        })
        .collect();
    TabularPolicy::Deterministic(acts)
}

/// Value iteration from `V = 0` until the certificate drops below the
/// tolerance. When `max_iters` runs out the last iterate is returned with
/// its larger certificate.
pub fn value_iteration(mdp: &TabularMdp, config: &ViConfig) -> Result<ViResult> {
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidArgument(
            "value-iteration tolerance must be positive".into(),
        ));
    }
    let gamma = mdp.gamma();
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut certificate = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..mdp.n_actions())
                    .map(|a| q_value(mdp, &v, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let diff = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        iterations += 1;
        certificate = 2.0 * gamma * diff / (1.0 - gamma);
        if certificate <= config.tolerance {
            break;
        }
    }
    let converged = certificate <= config.tolerance;
    if !converged {
        log::warn!("value iteration stopped after {iterations} sweeps with certificate {certificate}");
    }
    Ok(ViResult {
        policy: greedy_policy(mdp, &v),
        v,
        epsilon_pi: certificate,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_state() {
        let mdp = TabularMdp::new(vec![vec![1.0]], vec![vec![vec![1.0]]], vec![1.0], 0.9, 1.0).unwrap();
        let r = value_iteration(&mdp, &ViConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.epsilon_pi <= 1e-8);
        assert_abs_diff_eq!(r.v[0], 10.0, epsilon = 1e-8);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let mdp = TabularMdp::new(vec![vec![0.5, 0.5, 0.5]], vec![vec![vec![1.0]; 3]], vec![1.0], 0.5, 1.0).unwrap();
        let r = value_iteration(&mdp, &ViConfig::default()).unwrap();
        assert_eq!(r.policy, TabularPolicy::Deterministic(vec![0]));
    }

    #[test]
    fn iteration_cap_returns_last_iterate() {
        let mdp = TabularMdp::new(vec![vec![1.0]], vec![vec![vec![1.0]]], vec![1.0], 0.99, 1.0).unwrap();
        let r = value_iteration(
            &mdp,
            &ViConfig {
                tolerance: 1e-12,
                max_iters: 3,
            },
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        // V_3 - V_2 = 0.99^2, certificate 2 * 0.99^3 / 0.01.
        assert_abs_diff_eq!(r.epsilon_pi, 2.0 * 0.99f64.powi(3) / 0.01, epsilon = 1e-9);
        assert!(value_iteration(
            &mdp,
            &ViConfig {
                tolerance: 0.0,
                max_iters: 1
            }
        )
        .is_err());
    }
}
