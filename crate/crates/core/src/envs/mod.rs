//! Concrete environments: random and structured tabular MDPs, the lower-bound
//! chain, and two toy continuous-control tasks.

mod continuous;
mod counterexample;
mod tabular;

use serde::{Deserialize, Serialize};

pub use continuous::{Pendulum, PendulumPd, PendulumSpec, PointMass, PointMassSpec, Rect, WaypointController};
pub use counterexample::{build_counterexample, Counterexample, CounterexampleSpec, A1, A2, A3};
pub use tabular::{chain, gridworld, random_tabular, ChainSpec, GridSpec, RandomTabularSpec, LEFT, RIGHT};

use crate::mdp::{ActionSpace, Environment, Episode, Step};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ContinuousTaskSpec {
    PointMass(PointMassSpec),
    Pendulum(PendulumSpec),
}

/// A continuous task whose reward function is known to the learner.
#[derive(Clone, Debug)]
pub enum ContinuousTask {
    PointMass(PointMass),
    Pendulum(Pendulum),
}

pub fn build_continuous_task(spec: &ContinuousTaskSpec) -> ContinuousTask {
    match spec {
        ContinuousTaskSpec::PointMass(s) => ContinuousTask::PointMass(PointMass::new(s.clone())),
        ContinuousTaskSpec::Pendulum(s) => ContinuousTask::Pendulum(Pendulum::new(s.clone())),
    }
}

impl ContinuousTask {
    pub fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        match self {
            ContinuousTask::PointMass(e) => e.reward(s, a),
            ContinuousTask::Pendulum(e) => e.reward(s, a),
        }
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            ContinuousTask::PointMass(e) => e,
            ContinuousTask::Pendulum(e) => e,
        }
    }
}

impl Environment for ContinuousTask {
    fn name(&self) -> String {
        self.inner().name()
    }
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn action_space(&self) -> ActionSpace {
        self.inner().action_space()
    }
    fn gamma(&self) -> f64 {
        self.inner().gamma()
    }
    fn r_max(&self) -> f64 {
        self.inner().r_max()
    }
    fn horizon(&self) -> usize {
        self.inner().horizon()
    }
    fn reset(&self, episode: &mut Episode) -> Vec<f64> {
        self.inner().reset(episode)
    }
    fn step(&self, s: &[f64], a: &[f64], episode: &mut Episode) -> Step {
        self.inner().step(s, a, episode)
    }
}
