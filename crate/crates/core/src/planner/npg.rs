//! Natural policy gradient with score-function gradients, a sampled Fisher
//! matrix and a conjugate-gradient solve.

use crate::error::Result;
use crate::mdp::{rollout, Environment, Episode, Termination, Trajectory};
use crate::planner::GaussianMlpPolicy;

#[derive(Clone, Debug, PartialEq)]
pub struct NpgConfig {
    pub n_updates: usize,
    pub n_traj_per_update: usize,
    /// Rollout length used for gradient estimation.
    pub horizon: usize,
    pub cg_iters: usize,
    pub cg_damping: f64,
    /// Target quadratic KL `delta` of each step.
    pub normalized_step_size: f64,
    pub eval_traj: usize,
    pub log_sigma_init: f64,
    pub log_sigma_min: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for NpgConfig {
    fn default() -> Self {
        Self {
            n_updates: 200,
            n_traj_per_update: 20,
            horizon: 100,
            cg_iters: 25,
            cg_damping: 1e-4,
            normalized_step_size: 0.05,
            eval_traj: 20,
            log_sigma_init: -0.5,
            log_sigma_min: -2.5,
            hidden: vec![32, 32],
            seed: 0,
        }
    }
}

/// Score vectors stacked row-wise: `n` rows of `dim` entries.
pub struct Scores {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Scores {
    pub fn n(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `F v = (1/N) sum_i psi_i (psi_i . v) + damping v`.
pub fn fisher_vector_product(scores: &Scores, v: &[f64], damping: f64) -> Vec<f64> {
    let n = scores.n();
    let mut out: Vec<f64> = v.iter().map(|x| damping * x).collect();
    if n == 0 {
        return out;
    }
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let psi = scores.row(i);
        let c = dot(psi, v) * inv_n;
        if c != 0.0 {
            for (o, p) in out.iter_mut().zip(psi) {
                *o += c * p;
            }
        }
    }
    out
}

/// Conjugate gradient for `A x = b`. Returns `None` if a search direction
/// shows non-positive curvature.
pub fn conjugate_gradient(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], iters: usize) -> Option<Vec<f64>> {
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let tol = 1e-20 * rr.max(f64::MIN_POSITIVE);
    for _ in 0..iters {
        if rr <= tol {
            break;
        }
        let ap = apply(&p);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return None;
        }
        let alpha = rr / curvature;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Some(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NaturalStep {
    pub delta_params: Vec<f64>,
    pub gradient: Vec<f64>,
    /// True when CG broke down and a plain gradient step was taken.
    pub fallback: bool,
}

/// Step `sqrt(delta / x'Fx) x` with `F x = g` and
/// `g = (1/N) sum_i psi_i A_i`. A zero gradient gives a zero step.
pub fn natural_step(scores: &Scores, advantages: &[f64], damping: f64, cg_iters: usize, delta: f64) -> NaturalStep {
    let n = scores.n();
    let mut g = vec![0.0; scores.dim];
    for (i, &adv) in advantages.iter().enumerate().take(n) {
        if adv != 0.0 {
            for (gj, p) in g.iter_mut().zip(scores.row(i)) {
                *gj += adv * p / n as f64;
            }
        }
    }
    let zero = || NaturalStep {
        delta_params: vec![0.0; scores.dim],
        gradient: g.clone(),
        fallback: false,
    };
    if g.iter().all(|x| *x == 0.0) {
        return zero();
    }
    let fvp = |v: &[f64]| fisher_vector_product(scores, v, damping);
    let solved = conjugate_gradient(fvp, &g, cg_iters).and_then(|x| {
        let curvature = dot(&x, &fisher_vector_product(scores, &x, damping));
        (curvature > 0.0 && curvature.is_finite()).then_some((x, curvature))
    });
    match solved {
        Some((x, curvature)) => {
            let alpha = (delta / curvature).sqrt();
            NaturalStep {
                delta_params: x.iter().map(|v| alpha * v).collect(),
                gradient: g,
                fallback: false,
            }
        }
        None => {
            log::warn!("conjugate gradient broke down; taking a plain gradient step");
            let gg = dot(&g, &g);
            let alpha = (delta / gg).sqrt();
            NaturalStep {
                delta_params: g.iter().map(|v| alpha * v).collect(),
                gradient: g,
                fallback: true,
            }
        }
    }
}

/// Discounted return-to-go at every step of every trajectory, flattened.
pub fn returns_to_go(trajectories: &[Trajectory], gamma: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for traj in trajectories {
        let mut g = 0.0;
        let mut rtg = vec![0.0; traj.rewards.len()];
        for (t, r) in traj.rewards.iter().enumerate().rev() {
            g = r + gamma * g;
            rtg[t] = g;
        }
        out.extend(rtg);
    }
    out
}

/// Shift to zero mean and scale to unit population standard deviation; all
/// zeros when the spread vanishes.
pub fn normalize_advantages(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std > 0.0 && std.is_finite() {
        values.iter().map(|v| (v - mean) / std).collect()
    } else {
        vec![0.0; values.len()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NpgDiagnostics {
    /// Mean discounted return of the sampled trajectories.
    pub sample_return: f64,
    pub frac_halted: f64,
    /// Mean KL between the old and new policy on the sampled states.
    pub kl_step: f64,
    /// Importance-weighted change of the surrogate objective.
    pub surrogate_improvement: f64,
    pub fallback: bool,
}

/// Samples `n_traj_per_update` trajectories in `source` (trajectory `i`
/// uses stream `(seed, "npg-<iteration>", i)`) and takes one natural
/// gradient step.
pub fn npg_update(
    policy: &GaussianMlpPolicy,
    source: &dyn Environment,
    config: &NpgConfig,
    iteration: usize,
) -> Result<(GaussianMlpPolicy, NpgDiagnostics)> {
    let stream_name = format!("npg-{iteration}");
    let mut trajectories = Vec::with_capacity(config.n_traj_per_update);
    for i in 0..config.n_traj_per_update {
        let mut episode = Episode::new(config.seed, &stream_name, i as u64);
        trajectories.push(rollout(source, policy, &mut episode, config.horizon)?);
    }
    let gamma = source.gamma();
    let advantages = normalize_advantages(&returns_to_go(&trajectories, gamma));
    let dim = policy.n_params();
    let mut scores = Scores {
        dim,
        data: Vec::with_capacity(advantages.len() * dim),
    };
    let mut pairs: Vec<(&[f64], &[f64])> = Vec::with_capacity(advantages.len());
    for traj in &trajectories {
        for (s, a) in traj.states.iter().zip(&traj.actions) {
            scores.data.extend(policy.grad_log_prob(s, a));
            pairs.push((s, a));
        }
    }
    let step = natural_step(
        &scores,
        &advantages,
        config.cg_damping,
        config.cg_iters,
        config.normalized_step_size,
    );
    let mut updated = policy.clone();
    let params: Vec<f64> = policy
        .params()
        .iter()
        .zip(&step.delta_params)
        .map(|(p, d)| p + d)
        .collect();
    updated.set_params(&params);

    let states: Vec<&[f64]> = pairs.iter().map(|(s, _)| *s).collect();
    let kl_step = policy.mean_kl(&updated, &states);
    let surrogate_improvement = if pairs.is_empty() {
        0.0
    } else {
        pairs
            .iter()
            .zip(&advantages)
            .map(|((s, a), adv)| ((updated.log_prob(s, a) - policy.log_prob(s, a)).exp() - 1.0) * adv)
            .sum::<f64>()
            / pairs.len() as f64
    };
    let n = trajectories.len().max(1) as f64;
    let diagnostics = NpgDiagnostics {
        sample_return: trajectories.iter().map(|t| t.discounted_return(gamma)).sum::<f64>() / n,
        frac_halted: trajectories
            .iter()
            .filter(|t| t.terminated_by == Termination::Halt)
            .count() as f64
            / n,
        kl_step,
        surrogate_improvement,
        fallback: step.fallback,
    };
    Ok((updated, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_scores() -> Scores {
        Scores {
            dim: 2,
            data: vec![1.0, 0.5, -0.3, 2.0, 0.7, -1.1],
        }
    }

    #[test]
    fn fvp_matches_explicit_fisher() {
        let s = tiny_scores();
        let damping = 1e-3;
        let mut f = [[0.0; 2]; 2];
        for i in 0..3 {
            let r = &s.data[2 * i..2 * i + 2];
            for a in 0..2 {
                for b in 0..2 {
                    f[a][b] += r[a] * r[b] / 3.0;
                }
            }
        }
        let v = [0.4, -1.3];
        let out = fisher_vector_product(&s, &v, damping);
        for a in 0..2 {
            let expected = f[a][0] * v[0] + f[a][1] * v[1] + damping * v[a];
            assert!((out[a] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_solves_spd_system() {
        let a = [[4.0, 1.0], [1.0, 3.0]];
        let apply = |v: &[f64]| vec![a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
        let x = conjugate_gradient(apply, &[1.0, 2.0], 10).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-12 && (x[1] - 7.0 / 11.0).abs() < 1e-12);
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        assert!(conjugate_gradient(neg, &[1.0, 0.0], 5).is_none());
    }

    #[test]
    fn zero_advantages_give_zero_step() {
        let step = natural_step(&tiny_scores(), &[0.0; 3], 1e-4, 10, 0.05);
        assert!(step.delta_params.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn step_is_invariant_to_advantage_scale() {
        let s = tiny_scores();
        let adv = [0.3, -1.2, 0.9];
        let base = natural_step(&s, &adv, 1e-4, 25, 0.05);
        for c in [0.01, 7.0, 1e3] {
            let scaled: Vec<f64> = adv.iter().map(|a| a * c).collect();
            let step = natural_step(&s, &scaled, 1e-4, 25, 0.05);
            for (x, y) in step.delta_params.iter().zip(&base.delta_params) {
                assert!((x - y).abs() < 1e-8, "scale {c}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn step_has_target_quadratic_kl() {
        let s = tiny_scores();
        let step = natural_step(&s, &[0.3, -1.2, 0.9], 1e-4, 25, 0.05);
        let d = &step.delta_params;
        let quad = dot(d, &fisher_vector_product(&s, d, 1e-4));
        assert!((quad - 0.05).abs() < 1e-10);
    }

    #[test]
    fn advantage_normalization() {
        let a = normalize_advantages(&[1.0, 2.0, 3.0]);
        let mean: f64 = a.iter().sum::<f64>() / 3.0;
        let var: f64 = a.iter().map(|x| x * x).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-15 && (var - 1.0).abs() < 1e-12);
        assert_eq!(normalize_advantages(&[2.0, 2.0]), vec![0.0, 0.0]);
    }
}
