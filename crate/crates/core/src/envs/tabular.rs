use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::rng::{stream, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomTabularSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Fraction of successor states with nonzero probability in each row
    /// (at least one successor is always kept). 1 means dense.
    pub sparsity: f64,
    pub gamma: f64,
    pub r_max: f64,
}

fn positive_exp(rng: &mut StreamRng) -> f64 {
    loop {
        let x: f64 = Exp1.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
}

/// Flat-Dirichlet draw over `n` outcomes restricted to a random support of
/// `ceil(sparsity * n)` entries.
fn sparse_dirichlet(n: usize, sparsity: f64, rng: &mut StreamRng) -> Vec<f64> {
    let k = ((sparsity * n as f64).ceil() as usize).clamp(1, n);
    let mut p = vec![0.0; n];
    let support: Vec<usize> = if k == n {
        (0..n).collect()
    } else {
        sample(rng, n, k).into_vec()
    };
    for i in support {
        p[i] = positive_exp(rng);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    renormalize(&mut p);
    p
}

/// Pushes the rounding residue into the largest entry so the row sums to 1
/// to within a few ulps.
fn renormalize(p: &mut [f64]) {
    let sum: f64 = p.iter().sum();
    let (imax, _) = p
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &x)| if x > best.1 { (i, x) } else { best });
    p[imax] += 1.0 - sum;
}

pub fn random_tabular(spec: &RandomTabularSpec, seed: u64) -> Result<TabularMdp> {
    if spec.n_states == 0 || spec.n_actions == 0 {
        return Err(Error::InvalidArgument(
            "random MDP needs at least one state and one action".into(),
        ));
    }
    if !(spec.sparsity > 0.0 && spec.sparsity <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sparsity {} outside (0, 1]",
            spec.sparsity
        )));
    }
    let mut rng = stream(seed, "random-tabular");
    let (n, m) = (spec.n_states, spec.n_actions);
    let mut reward = vec![vec![0.0; m]; n];
    let mut transition = vec![vec![Vec::new(); m]; n];
    for s in 0..n {
        for a in 0..m {
            reward[s][a] = rng.random_range(-spec.r_max..=spec.r_max);
            transition[s][a] = sparse_dirichlet(n, spec.sparsity, &mut rng);
        }
    }
    let rho0 = sparse_dirichlet(n, spec.sparsity, &mut rng);
    TabularMdp::new(reward, transition, rho0, spec.gamma, spec.r_max)
}

/// A left/right chain. "Right" advances with probability `1 - slip` (else
/// stays put); "left" always moves back. The last state pays `r_max` for any
/// action; taking "left" at state 0 pays a small distractor reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_states: usize,
    pub slip: f64,
    pub gamma: f64,
    pub r_max: f64,
    pub distractor: f64,
    /// Number of leading states over which rho0 is uniform.
    pub start_states: usize,
}

impl Default for ChainSpec {
    fn default() -> Self {
        Self {
            n_states: 5,
            slip: 0.1,
            gamma: 0.9,
            r_max: 1.0,
            distractor: 0.2,
            start_states: 2,
        }
    }
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

pub fn chain(spec: &ChainSpec) -> Result<TabularMdp> {
    let n = spec.n_states;
    if n < 2 || !(0.0..1.0).contains(&spec.slip) || spec.start_states == 0 || spec.start_states > n {
        return Err(Error::InvalidArgument(format!("bad chain spec {spec:?}")));
    }
    let mut reward = vec![vec![0.0; 2]; n];
    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    for s in 0..n {
        transition[s][LEFT][s.saturating_sub(1)] = 1.0;
        let right = (s + 1).min(n - 1);
        transition[s][RIGHT][right] += 1.0 - spec.slip;
        transition[s][RIGHT][s] += spec.slip;
    }
    reward[0][LEFT] = spec.distractor;
    reward[n - 1] = vec![spec.r_max; 2];
    let mut rho0 = vec![0.0; n];
    rho0[..spec.start_states].fill(1.0 / spec.start_states as f64);
    TabularMdp::new(reward, transition, rho0, spec.gamma, spec.r_max)
}

/// Grid with four compass moves; a move slips to a uniformly random other
/// direction with probability `slip`. The goal cell is absorbing and pays
/// `r_max` per step. Episodes start in the top-left corner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub slip: f64,
    pub gamma: f64,
    pub r_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            width: 4,
            height: 4,
            slip: 0.1,
            gamma: 0.9,
            r_max: 1.0,
        }
    }
}

pub fn gridworld(spec: &GridSpec) -> Result<TabularMdp> {
    let (w, h) = (spec.width, spec.height);
    if w * h < 2 || !(0.0..1.0).contains(&spec.slip) {
        return Err(Error::InvalidArgument(format!("bad grid spec {spec:?}")));
    }
    let n = w * h;
    let goal = n - 1;
    let moves: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
    let target = |s: usize, m: usize| -> usize {
        let (x, y) = ((s % w) as i64, (s / w) as i64);
        let nx = (x + moves[m].0).clamp(0, w as i64 - 1);
        let ny = (y + moves[m].1).clamp(0, h as i64 - 1);
        (ny * w as i64 + nx) as usize
    };
    let mut reward = vec![vec![0.0; 4]; n];
    let mut transition = vec![vec![vec![0.0; n]; 4]; n];
    for s in 0..n {
        for a in 0..4 {
            if s == goal {
                transition[s][a][s] = 1.0;
                reward[s][a] = spec.r_max;
                continue;
            }
            transition[s][a][target(s, a)] += 1.0 - spec.slip;
            for other in (0..4).filter(|&m| m != a) {
                transition[s][a][target(s, other)] += spec.slip / 3.0;
            }
        }
    }
    let mut rho0 = vec![0.0; n];
    rho0[0] = 1.0;
    TabularMdp::new(reward, transition, rho0, spec.gamma, spec.r_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, m: usize, sparsity: f64) -> RandomTabularSpec {
        RandomTabularSpec {
            n_states: n,
            n_actions: m,
            sparsity,
            gamma: 0.9,
            r_max: 1.0,
        }
    }

    #[test]
    fn random_tabular_is_deterministic() {
        assert_eq!(
            random_tabular(&spec(6, 3, 0.5), 11).unwrap(),
            random_tabular(&spec(6, 3, 0.5), 11).unwrap()
        );
        assert_ne!(
            random_tabular(&spec(6, 3, 0.5), 11).unwrap(),
            random_tabular(&spec(6, 3, 0.5), 12).unwrap()
        );
    }

    #[test]
    fn dense_rows_are_strictly_positive() {
        let mdp = random_tabular(&spec(8, 4, 1.0), 3).unwrap();
        for s in 0..8 {
            for a in 0..4 {
                assert!(mdp.transition(s, a).iter().all(|&p| p > 0.0));
            }
        }
    }

    #[test]
    fn single_state_rows_are_one() {
        let mdp = random_tabular(&spec(1, 3, 0.3), 5).unwrap();
        for a in 0..3 {
            assert_eq!(mdp.transition(0, a), &[1.0]);
        }
        assert_eq!(mdp.rho0(), &[1.0]);
    }

    #[test]
    fn sparse_rows_have_requested_support() {
        let mdp = random_tabular(&spec(10, 2, 0.3), 9).unwrap();
        for s in 0..10 {
            for a in 0..2 {
                assert_eq!(mdp.transition(s, a).iter().filter(|&&p| p > 0.0).count(), 3);
            }
        }
    }

    #[test]
    fn chain_and_grid_build() {
        let c = chain(&ChainSpec::default()).unwrap();
        assert_eq!(c.n_states(), 5);
        assert_eq!(c.transition(4, RIGHT)[4], 1.0);
        let g = gridworld(&GridSpec::default()).unwrap();
        assert_eq!(g.n_states(), 16);
        assert_eq!(g.reward(15, 2), 1.0);
    }
}
