use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

const SIMPLEX_TOL: f64 = 1e-12;

/// A finite MDP with explicit reward and transition tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `reward[s][a]`
    reward: Vec<Vec<f64>>,
    /// `transition[s][a][s']`
    transition: Vec<Vec<Vec<f64>>>,
    rho0: Vec<f64>,
    gamma: f64,
    r_max: f64,
}

/// Boolean table over state-action pairs.
pub type PairMask = Vec<Vec<bool>>;

pub fn empty_mask(n_states: usize, n_actions: usize) -> PairMask {
    vec![vec![false; n_actions]; n_states]
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidMdp(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidMdp(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        reward: Vec<Vec<f64>>,
        transition: Vec<Vec<Vec<f64>>>,
        rho0: Vec<f64>,
        gamma: f64,
        r_max: f64,
    ) -> Result<Self> {
        let n_states = rho0.len();
        if n_states == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        let n_actions = reward.first().map_or(0, Vec::len);
        if n_actions == 0 {
            return Err(Error::InvalidMdp("no actions".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("gamma {gamma} outside [0, 1)")));
        }
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::InvalidMdp(format!("r_max must be positive, got {r_max}")));
        }
        if reward.len() != n_states || transition.len() != n_states {
            return Err(Error::InvalidMdp(
                "reward/transition tables disagree with rho0 on |S|".into(),
            ));
        }
        for s in 0..n_states {
            if reward[s].len() != n_actions || transition[s].len() != n_actions {
                return Err(Error::InvalidMdp(format!("state {s} has the wrong number of actions")));
            }
            for a in 0..n_actions {
                let r = reward[s][a];
                if !r.is_finite() || r.abs() > r_max {
                    return Err(Error::InvalidMdp(format!(
                        "|r({s},{a})| = {} exceeds r_max {r_max}",
                        r.abs()
                    )));
                }
                if transition[s][a].len() != n_states {
                    return Err(Error::InvalidMdp(format!("P(.|{s},{a}) has the wrong length")));
                }
                check_distribution(&transition[s][a], &format!("P(.|{s},{a})"))?;
            }
        }
        check_distribution(&rho0, "rho0")?;
        Ok(Self {
            n_states,
            n_actions,
            reward,
            transition,
            rho0,
            gamma,
            r_max,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn rho0(&self) -> &[f64] {
        &self.rho0
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.reward
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn transitions(&self) -> &[Vec<Vec<f64>>] {
        &self.transition
    }

    /// Same dynamics and rewards, different start distribution.
    pub fn with_rho0(&self, rho0: Vec<f64>) -> Result<Self> {
        Self::new(
            self.reward.clone(),
            self.transition.clone(),
            rho0,
            self.gamma,
            self.r_max,
        )
    }

    pub fn sample_start(&self, rng: &mut StreamRng) -> usize {
        sample_index(&self.rho0, rng)
    }

    pub fn sample_next(&self, s: usize, a: usize, rng: &mut StreamRng) -> usize {
        sample_index(&self.transition[s][a], rng)
    }
}

/// Inverse-CDF draw from a probability vector. Falls back to the last
/// positive entry when rounding leaves the cumulative sum just short of `u`.
pub(crate) fn sample_index(p: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi > 0.0 {
            acc += pi;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TabularPolicy {
    Deterministic(Vec<usize>),
    Stochastic(Vec<Vec<f64>>),
}

impl TabularPolicy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularPolicy::Stochastic(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    pub fn n_states(&self) -> usize {
        match self {
            TabularPolicy::Deterministic(t) => t.len(),
            TabularPolicy::Stochastic(t) => t.len(),
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        match self {
            TabularPolicy::Deterministic(t) => {
                if t[s] == a {
                    1.0
                } else {
                    0.0
                }
            }
            TabularPolicy::Stochastic(t) => t[s][a],
        }
    }

    pub fn distribution(&self, s: usize, n_actions: usize) -> Vec<f64> {
        (0..n_actions).map(|a| self.prob(s, a)).collect()
    }

    pub fn sample(&self, s: usize, rng: &mut StreamRng) -> usize {
        match self {
            TabularPolicy::Deterministic(t) => t[s],
            TabularPolicy::Stochastic(t) => sample_index(&t[s], rng),
        }
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_states() != n_states {
            return Err(Error::Dimension(format!(
                "policy covers {} states, MDP has {n_states}",
                self.n_states()
            )));
        }
        match self {
            TabularPolicy::Deterministic(t) => {
                if let Some(&a) = t.iter().find(|&&a| a >= n_actions) {
                    return Err(Error::Dimension(format!(
                        "policy action {a} out of range (|A| = {n_actions})"
                    )));
                }
            }
            TabularPolicy::Stochastic(t) => {
                for (s, row) in t.iter().enumerate() {
                    if row.len() != n_actions {
                        return Err(Error::Dimension(format!(
                            "policy row {s} has {} actions, MDP has {n_actions}",
                            row.len()
                        )));
                    }
                    check_distribution(row, &format!("pi(.|{s})")).map_err(|e| Error::InvalidPolicy(e.to_string()))?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyValue {
    pub v: Vec<f64>,
    pub j: f64,
}

/// Expected reward vector and state-to-state kernel induced by `policy`.
fn induced_chain(mdp: &TabularMdp, policy: &TabularPolicy) -> (DVector<f64>, DMatrix<f64>) {
    let n = mdp.n_states;
    let mut r_pi = DVector::zeros(n);
    let mut p_pi = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.reward[s][a];
            for (s2, &p) in mdp.transition[s][a].iter().enumerate() {
                p_pi[(s, s2)] += w * p;
            }
        }
    }
    (r_pi, p_pi)
}

/// Solves `(I - gamma K) x = b` by LU with one step of iterative refinement.
fn solve_discounted(kernel: &DMatrix<f64>, gamma: f64, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = kernel.nrows();
    let a = DMatrix::identity(n, n) - kernel * gamma;
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::InvalidMdp("singular evaluation system".into()))?;
    let residual = b - &a * &x;
    if let Some(dx) = lu.solve(&residual) {
        x += dx;
    }
    Ok(x)
}

/// V^pi by direct linear solve of the Bellman evaluation equation, and
/// J = rho0 . V.
pub fn exact_policy_value(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<PolicyValue> {
    policy.validate(mdp.n_states, mdp.n_actions)?;
    let (r_pi, p_pi) = induced_chain(mdp, policy);
    let v = solve_discounted(&p_pi, mdp.gamma, &r_pi)?;
    let j = mdp.rho0.iter().zip(v.iter()).map(|(p, v)| p * v).sum();
    Ok(PolicyValue {
        v: v.iter().copied().collect(),
        j,
    })
}

/// Normalized discounted state-action occupancy
/// `d(s,a) = (1 - gamma) sum_t gamma^t Pr(s_t = s, a_t = a)`.
pub fn discounted_visitation(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<Vec<f64>>> {
    policy.validate(mdp.n_states, mdp.n_actions)?;
    let (_, p_pi) = induced_chain(mdp, policy);
    // Flow equations: d_s = (1 - gamma) rho0 + gamma P_pi^T d_s.
    let rho0 = DVector::from_column_slice(&mdp.rho0) * (1.0 - mdp.gamma);
    let d_s = solve_discounted(&p_pi.transpose(), mdp.gamma, &rho0)?;
    Ok((0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| (d_s[s] * policy.prob(s, a)).max(0.0))
                .collect()
        })
        .collect())
}

pub fn mask_mass(d: &[Vec<f64>], mask: &PairMask) -> f64 {
    d.iter()
        .zip(mask)
        .flat_map(|(row, m)| row.iter().zip(m).filter(|(_, &k)| k).map(|(x, _)| *x))
        .sum()
}

/// `E[gamma^T]` where `T` is the first time the policy executes a pair in
/// `target` (and `gamma^inf = 0`).
///
/// Equivalent to redirecting every target pair into an absorbing bookkeeping
/// state that pays reward 1 on entry and then nothing: the value of that
/// indicator reward is `h` below, solved exactly.
pub fn expected_discounted_hitting(mdp: &TabularMdp, policy: &TabularPolicy, target: &PairMask) -> Result<f64> {
    policy.validate(mdp.n_states, mdp.n_actions)?;
    if target.len() != mdp.n_states || target.iter().any(|row| row.len() != mdp.n_actions) {
        return Err(Error::Dimension("target mask shape does not match MDP".into()));
    }
    if !target.iter().flatten().any(|&t| t) {
        return Ok(0.0);
    }
    let n = mdp.n_states;
    let mut hit_now = DVector::zeros(n);
    let mut carry = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            if target[s][a] {
                hit_now[s] += w;
            } else {
                for (s2, &p) in mdp.transition[s][a].iter().enumerate() {
                    carry[(s, s2)] += w * p;
                }
            }
        }
    }
    let h = solve_discounted(&carry, mdp.gamma, &hit_now)?;
    let value: f64 = mdp.rho0.iter().zip(h.iter()).map(|(p, h)| p * h).sum();
    Ok(value.clamp(0.0, 1.0))
}

/// Total-variation distance between two distributions on the same support.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
