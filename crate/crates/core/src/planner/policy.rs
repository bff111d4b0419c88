use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Actor, TabularPolicy};
use crate::nn::{Activation, Mlp};
use crate::rng::StreamRng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal Gaussian policy whose mean is a tanh MLP of the normalized
/// observation and whose log standard deviations are free parameters.
///
/// The flat parameter vector is the network's parameters followed by
/// `log_std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianMlpPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
    pub log_std_min: f64,
    pub obs_mu: Vec<f64>,
    pub obs_sigma: Vec<f64>,
}

impl GaussianMlpPolicy {
    pub fn new(
        obs_mu: Vec<f64>,
        obs_sigma: Vec<f64>,
        action_dim: usize,
        hidden: &[usize],
        log_std_init: f64,
        log_std_min: f64,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        if obs_mu.len() != obs_sigma.len() || obs_sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("observation normalization is malformed".into()));
        }
        if log_std_init < log_std_min {
            return Err(Error::InvalidArgument(format!(
                "initial log std {log_std_init} below the floor {log_std_min}"
            )));
        }
        let mut sizes = vec![obs_mu.len()];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Ok(Self {
            net: Mlp::new(&sizes, Activation::Tanh, rng),
            log_std: vec![log_std_init; action_dim],
            log_std_min,
            obs_mu,
            obs_sigma,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params() + self.log_std.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    /// Sets all parameters, clamping log std entries at the floor.
    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params(), "policy parameter length mismatch");
        let n = self.net.n_params();
        self.net.params_mut().copy_from_slice(&params[..n]);
        for (l, &p) in self.log_std.iter_mut().zip(&params[n..]) {
            *l = p.max(self.log_std_min);
        }
    }

    fn normalize(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(&self.obs_mu)
            .zip(&self.obs_sigma)
            .map(|((x, m), sd)| (x - m) / sd)
            .collect()
    }

    pub fn mean(&self, s: &[f64]) -> Vec<f64> {
        self.net.forward(&self.normalize(s))
    }

    pub fn log_prob(&self, s: &[f64], a: &[f64]) -> f64 {
        let mu = self.mean(s);
        gaussian_log_prob(&mu, &self.log_std, a)
    }

    /// Gradient of `log_prob(s, a)` with respect to the flat parameters.
    pub fn grad_log_prob(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let cache = self.net.forward_cached(&self.normalize(s));
        let mu = cache.output();
        let mut grad = vec![0.0; self.n_params()];
        let n = self.net.n_params();
        let mut d_mu = Vec::with_capacity(mu.len());
        for i in 0..mu.len() {
            let var = (2.0 * self.log_std[i]).exp();
            let z = a[i] - mu[i];
            d_mu.push(z / var);
            grad[n + i] = z * z / var - 1.0;
        }
        self.net.backward(&cache, &d_mu, &mut grad[..n]);
        grad
    }

    /// Mean KL divergence `KL(self || other)` over `states`.
    pub fn mean_kl(&self, other: &GaussianMlpPolicy, states: &[&[f64]]) -> f64 {
        if states.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for s in states {
            let (m0, m1) = (self.mean(s), other.mean(s));
            for i in 0..m0.len() {
                let (l0, l1) = (self.log_std[i], other.log_std[i]);
                let (v0, v1) = ((2.0 * l0).exp(), (2.0 * l1).exp());
                total += l1 - l0 + (v0 + (m0[i] - m1[i]).powi(2)) / (2.0 * v1) - 0.5;
            }
        }
        total / states.len() as f64
    }
}

pub(crate) fn gaussian_log_prob(mu: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, l), x)| {
            let z = (x - m) / l.exp();
            -0.5 * z * z - l - 0.5 * LN_2PI
        })
        .sum()
}

impl Actor for GaussianMlpPolicy {
    fn act(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        self.mean(s)
            .into_iter()
            .zip(&self.log_std)
            .map(|(m, l)| {
                let xi: f64 = StandardNormal.sample(rng);
                m + l.exp() * xi
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    Tabular(TabularPolicy),
    GaussianMlp(GaussianMlpPolicy),
}

impl Actor for Policy {
    fn act(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        match self {
            Policy::Tabular(p) => p.act(s, rng),
            Policy::GaussianMlp(p) => p.act(s, rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn log_prob_of_standard_normal_at_mean() {
        let lp = gaussian_log_prob(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]);
        assert!((lp + LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn log_std_floor_is_enforced() {
        let mut rng = stream(0, "p");
        let mut pi = GaussianMlpPolicy::new(vec![0.0], vec![1.0], 1, &[4], -0.5, -2.0, &mut rng).unwrap();
        let mut p = pi.params();
        *p.last_mut().unwrap() = -10.0;
        pi.set_params(&p);
        assert_eq!(pi.log_std, vec![-2.0]);
        assert!(GaussianMlpPolicy::new(vec![0.0], vec![1.0], 1, &[4], -3.0, -2.0, &mut rng).is_err());
    }

    #[test]
    fn kl_to_self_is_zero() {
        let mut rng = stream(1, "p");
        let pi = GaussianMlpPolicy::new(vec![0.0; 2], vec![1.0; 2], 2, &[4], -0.5, -2.0, &mut rng).unwrap();
        let s = [0.3, -0.2];
        assert!(pi.mean_kl(&pi, &[&s]).abs() < 1e-15);
    }
}
