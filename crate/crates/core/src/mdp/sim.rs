use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tabular::{TabularMdp, TabularPolicy};
use crate::error::{Error, Result};
use crate::rng::{substream, StreamRng};

#[derive(Clone, Debug, PartialEq)]
pub enum ActionSpace {
    Discrete(usize),
    /// Box `[low, high]` applied to every dimension.
    Continuous {
        dim: usize,
        low: f64,
        high: f64,
    },
}

impl ActionSpace {
    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Discrete(_) => 1,
            ActionSpace::Continuous { dim, .. } => *dim,
        }
    }

    pub fn clip(&self, a: &[f64]) -> Vec<f64> {
        match self {
            ActionSpace::Discrete(_) => a.to_vec(),
            ActionSpace::Continuous { low, high, .. } => a.iter().map(|x| x.clamp(*low, *high)).collect(),
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            ActionSpace::Discrete(n) => vec![rng.random_range(0..*n) as f64],
            ActionSpace::Continuous { dim, low, high } => (0..*dim).map(|_| rng.random_range(*low..=*high)).collect(),
        }
    }
}

/// Per-trajectory context: the trajectory's index and its private stream.
pub struct Episode {
    pub index: u64,
    pub rng: StreamRng,
}

impl Episode {
    pub fn new(seed: u64, name: &str, index: u64) -> Self {
        Self {
            index,
            rng: substream(seed, name, index),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// The step was cut short by an unknown-pair query.
    pub halted: bool,
}

/// A simulatable environment. `step` must be a pure function of its inputs
/// and the episode stream's position.
pub trait Environment: Send + Sync {
    fn name(&self) -> String;
    fn state_dim(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn gamma(&self) -> f64;
    fn r_max(&self) -> f64;
    /// Episode length used for data collection.
    fn horizon(&self) -> usize;
    fn reset(&self, episode: &mut Episode) -> Vec<f64>;
    fn step(&self, s: &[f64], a: &[f64], episode: &mut Episode) -> Step;
}

/// Anything that maps states to (sampled) actions.
pub trait Actor: Send + Sync {
    fn act(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64>;
}

impl Actor for TabularPolicy {
    fn act(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        vec![self.sample(s[0] as usize, rng) as f64]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Horizon,
    EnvDone,
    Halt,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub terminated_by: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Runs one episode of at most `horizon` steps. Actions are recorded as the
/// actor emitted them; the environment applies its own clipping.
pub fn rollout(env: &dyn Environment, actor: &dyn Actor, episode: &mut Episode, horizon: usize) -> Result<Trajectory> {
    let mut s = env.reset(episode);
    check_finite(&s, episode.index, 0, "initial state")?;
    let mut traj = Trajectory {
        states: vec![s.clone()],
        actions: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        terminated_by: Termination::Horizon,
    };
    for t in 0..horizon {
        let a = actor.act(&s, &mut episode.rng);
        check_finite(&a, episode.index, t, "action")?;
        let step = env.step(&s, &a, episode);
        if !step.reward.is_finite() {
            return Err(Error::NonFinite {
                trajectory: episode.index,
                step: t,
                what: format!("reward {}", step.reward),
            });
        }
        check_finite(&step.next_state, episode.index, t, "next state")?;
        traj.actions.push(a);
        traj.rewards.push(step.reward);
        traj.states.push(step.next_state.clone());
        if step.halted {
            traj.terminated_by = Termination::Halt;
            break;
        }
        if step.done {
            traj.terminated_by = Termination::EnvDone;
            break;
        }
        s = step.next_state;
    }
    Ok(traj)
}

fn check_finite(x: &[f64], trajectory: u64, step: usize, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            trajectory,
            step,
            what: format!("{what} {x:?}"),
        })
    }
}

/// Smallest `H` with `gamma^H r_max / (1 - gamma) < tail`.
pub fn analytic_horizon(gamma: f64, r_max: f64, tail: f64) -> usize {
    if gamma == 0.0 {
        return 1;
    }
    let bound = tail * (1.0 - gamma) / r_max;
    if bound >= 1.0 {
        return 1;
    }
    let h = (bound.ln() / gamma.ln()).floor() as usize + 1;
    h.max(1)
}

pub const MC_TAIL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// Mean of undiscounted returns over the same rollouts.
    pub undiscounted_mean: f64,
    pub n_traj: usize,
    pub horizon: usize,
    /// Fraction of rollouts that ended in HALT.
    pub frac_halted: f64,
}

/// Average discounted return of `n_traj` rollouts, truncated at the analytic
/// horizon unless `horizon` overrides it. Rollout `i` uses stream
/// `(seed, stream_name, i)`.
pub fn monte_carlo_value(
    env: &dyn Environment,
    actor: &dyn Actor,
    n_traj: usize,
    seed: u64,
    stream_name: &str,
    horizon: Option<usize>,
) -> Result<MonteCarloEstimate> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    let gamma = env.gamma();
    let horizon = horizon.unwrap_or_else(|| analytic_horizon(gamma, env.r_max(), MC_TAIL));
    let mut returns = Vec::with_capacity(n_traj);
    let mut undiscounted = 0.0;
    let mut halted = 0usize;
    for i in 0..n_traj {
        let mut episode = Episode::new(seed, stream_name, i as u64);
        let traj = rollout(env, actor, &mut episode, horizon)?;
        returns.push(traj.discounted_return(gamma));
        undiscounted += traj.undiscounted_return();
        if traj.terminated_by == Termination::Halt {
            halted += 1;
        }
    }
    let n = n_traj as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let std_err = if n_traj > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        std_err,
        undiscounted_mean: undiscounted / n,
        n_traj,
        horizon,
        frac_halted: halted as f64 / n,
    })
}

/// A tabular MDP exposed as a simulator. States and actions are encoded as
/// one-element vectors holding the index.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    pub mdp: TabularMdp,
    pub horizon: usize,
    pub name: String,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, horizon: usize, name: impl Into<String>) -> Self {
        Self {
            mdp,
            horizon,
            name: name.into(),
        }
    }
}

impl Environment for TabularEnv {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(self.mdp.n_actions())
    }

    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    fn r_max(&self) -> f64 {
        self.mdp.r_max()
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn reset(&self, episode: &mut Episode) -> Vec<f64> {
        vec![self.mdp.sample_start(&mut episode.rng) as f64]
    }

    fn step(&self, s: &[f64], a: &[f64], episode: &mut Episode) -> Step {
        let (s, a) = (s[0] as usize, a[0] as usize);
        let next = self.mdp.sample_next(s, a, &mut episode.rng);
        Step {
            next_state: vec![next as f64],
            reward: self.mdp.reward(s, a),
            done: false,
            halted: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Constant reward, never terminates unless `done_at` is set.
    struct Constant {
        reward: f64,
        done_at: Option<usize>,
    }

    impl Environment for Constant {
        fn name(&self) -> String {
            "constant".into()
        }
        fn state_dim(&self) -> usize {
            1
        }
        fn action_space(&self) -> ActionSpace {
            ActionSpace::Continuous {
                dim: 1,
                low: -1.0,
                high: 1.0,
            }
        }
        fn gamma(&self) -> f64 {
            0.9
        }
        fn r_max(&self) -> f64 {
            1.0
        }
        fn horizon(&self) -> usize {
            1000
        }
        fn reset(&self, _: &mut Episode) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&self, s: &[f64], _: &[f64], _: &mut Episode) -> Step {
            let t = s[0] + 1.0;
            Step {
                next_state: vec![t],
                reward: self.reward,
                done: self.done_at.is_some_and(|d| t as usize >= d),
                halted: false,
            }
        }
    }

    struct Zero;
    impl Actor for Zero {
        fn act(&self, _: &[f64], _: &mut StreamRng) -> Vec<f64> {
            vec![0.0]
        }
    }

    #[test]
    fn constant_reward_monte_carlo() {
        let env = Constant {
            reward: 1.0,
            done_at: None,
        };
        let est = monte_carlo_value(&env, &Zero, 5, 1, "mc", None).unwrap();
        assert!((est.mean - 10.0).abs() < 1e-5);
        assert_eq!(est.std_err, 0.0);
        let zero = Constant {
            reward: 0.0,
            done_at: None,
        };
        assert_eq!(monte_carlo_value(&zero, &Zero, 3, 1, "mc", None).unwrap().mean, 0.0);
    }

    #[test]
    fn horizon_zero_rollout() {
        let env = Constant {
            reward: 1.0,
            done_at: None,
        };
        let traj = rollout(&env, &Zero, &mut Episode::new(0, "r", 0), 0).unwrap();
        assert_eq!(traj.states.len(), 1);
        assert!(traj.actions.is_empty());
    }

    #[test]
    fn env_done_terminates_early() {
        let env = Constant {
            reward: 1.0,
            done_at: Some(3),
        };
        let traj = rollout(&env, &Zero, &mut Episode::new(0, "r", 0), 50).unwrap();
        assert_eq!(traj.len(), 3);
        assert_eq!(traj.terminated_by, Termination::EnvDone);
    }

    #[test]
    fn nan_reward_is_reported_with_its_step() {
        let env = Constant {
            reward: f64::NAN,
            done_at: None,
        };
        match monte_carlo_value(&env, &Zero, 2, 0, "mc", Some(10)) {
            Err(Error::NonFinite {
                trajectory: 0, step: 0, ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn analytic_horizon_meets_tail_bound() {
        for &gamma in &[0.5, 0.9, 0.95, 0.99] {
            let h = analytic_horizon(gamma, 1.0, 1e-6);
            assert!(gamma.powi(h as i32) / (1.0 - gamma) < 1e-6);
            assert!(gamma.powi(h as i32 - 1) / (1.0 - gamma) >= 1e-6);
        }
    }

    #[test]
    fn tabular_rollouts_are_deterministic() {
        let mdp = TabularMdp::new(
            vec![vec![0.0, 1.0]; 2],
            vec![vec![vec![0.5, 0.5]; 2]; 2],
            vec![0.5, 0.5],
            0.9,
            1.0,
        )
        .unwrap();
        let env = TabularEnv::new(mdp, 20, "t");
        let pi = TabularPolicy::uniform(2, 2);
        let a = rollout(&env, &pi, &mut Episode::new(3, "r", 4), 20).unwrap();
        let b = rollout(&env, &pi, &mut Episode::new(3, "r", 4), 20).unwrap();
        assert_eq!(a, b);
    }
}
