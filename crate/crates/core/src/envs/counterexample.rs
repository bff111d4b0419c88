//! The chain MDP behind the minimax lower bound for offline RL.
//!
//! States `0..=k` (written 1..k+1 in the usual drawing), actions `a1, a2, a3`.
//! `a1` advances along the chain with reward 0 and self-loops at the last
//! state with reward `r_max`. The behavior policy plays `a1` at the first
//! state, `a2` at the second (which returns to the first) and `a1` at the
//! last, so the data never shows how to get past the second state. Every
//! transition not listed above is a zero-reward self-loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

pub const A1: usize = 0;
pub const A2: usize = 1;
pub const A3: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSpec {
    pub gamma: f64,
    pub epsilon: f64,
    pub r_max: f64,
}

impl CounterexampleSpec {
    pub fn log_horizon(&self) -> f64 {
        (1.0 / (1.0 - self.gamma)).ln()
    }

    /// Largest admissible support mismatch, `(1 - gamma) / log(1 / (1 - gamma))`.
    pub fn max_epsilon(&self) -> f64 {
        (1.0 - self.gamma) / self.log_horizon()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.95 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma {} outside [0.95, 1)",
                self.gamma
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= self.max_epsilon()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon {} outside (0, {}]",
                self.epsilon,
                self.max_epsilon()
            )));
        }
        if !(self.r_max > 0.0) {
            return Err(Error::InvalidArgument("r_max must be positive".into()));
        }
        Ok(())
    }

    /// Chain length `k = ceil(10 log(1 / (1 - gamma)))`.
    pub fn k(&self) -> usize {
        (10.0 * self.log_horizon()).ceil() as usize
    }

    /// Start probability of the first state, `eps / ((1 - gamma) log(1 / (1 - gamma)))`.
    pub fn p0(&self) -> f64 {
        self.epsilon / ((1.0 - self.gamma) * self.log_horizon())
    }

    /// `r_max / (4 (1 - gamma)^2) * eps / log(1 / (1 - gamma))`.
    pub fn lower_bound(&self) -> f64 {
        self.r_max / (4.0 * (1.0 - self.gamma).powi(2)) * self.epsilon / self.log_horizon()
    }
}

#[derive(Clone, Debug)]
pub struct Counterexample {
    pub spec: CounterexampleSpec,
    pub k: usize,
    pub p0: f64,
    pub mdp: TabularMdp,
    pub optimal: TabularPolicy,
    pub behavior: TabularPolicy,
}

pub fn build_counterexample(spec: &CounterexampleSpec) -> Result<Counterexample> {
    spec.validate()?;
    let k = spec.k();
    let p0 = spec.p0();
    let n = k + 1;
    let last = k;
    let mut reward = vec![vec![0.0; 3]; n];
    let mut transition = vec![vec![vec![0.0; n]; 3]; n];
    for s in 0..n {
        for a in 0..3 {
            transition[s][a][s] = 1.0;
        }
        if s < last {
            transition[s][A1][s] = 0.0;
            transition[s][A1][s + 1] = 1.0;
        }
    }
    reward[last][A1] = spec.r_max;
    transition[1][A2][1] = 0.0;
    transition[1][A2][0] = 1.0;

    let mut rho0 = vec![0.0; n];
    rho0[0] = p0;
    rho0[last] += 1.0 - p0;
    let mdp = TabularMdp::new(reward, transition, rho0, spec.gamma, spec.r_max)?;

    let optimal = TabularPolicy::Deterministic(vec![A1; n]);
    let mut behavior = vec![A1; n];
    behavior[1] = A2;
    Ok(Counterexample {
        spec: spec.clone(),
        k,
        p0,
        mdp,
        optimal,
        behavior: TabularPolicy::Deterministic(behavior),
    })
}
