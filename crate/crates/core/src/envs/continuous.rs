//! Toy continuous-control tasks integrated with explicit Euler steps.
//!
//! # Point mass
//!
//! State `(x, y, vx, vy)`, action `(fx, fy)` clipped to `[-1, 1]^2`. Outside
//! the cliff:
//!
//! ```text
//! p' = p + dt * v
//! v' = v + dt * (force_gain * a - damping * v) + noise_std * xi,   xi ~ N(0, I)
//! ```
//!
//! Inside the cliff rectangle the mass is stuck: `p' = p`, `v' = 0`.
//! Reward, with `u` the unit vector from `p` toward the goal:
//!
//! ```text
//! r = -r_max                                        if p is in the cliff
//!     r_max                                         if |goal - p| <= goal_radius
//!     clip(progress_scale * v.u, -cap, cap)         otherwise
//! ```
//!
//! # Pendulum
//!
//! State `(theta, omega)` with `theta = 0` upright, torque `u` clipped to
//! `[-max_torque, max_torque]`:
//!
//! ```text
//! omega' = clip(omega + dt * (g / l * sin(theta) + u / (m l^2)), +-max_speed) + noise_std * xi
//! theta' = wrap(theta + dt * omega)
//! r      = -(theta^2 + 0.1 omega^2 + 0.001 u^2)
//! ```

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::mdp::{ActionSpace, Actor, Environment, Episode, Step};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMassSpec {
    pub dt: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub noise_std: f64,
    pub force_gain: f64,
    pub damping: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub start: [f64; 2],
    pub start_spread: f64,
    pub cliff: Rect,
    pub progress_scale: f64,
    pub progress_cap: f64,
    pub r_max: f64,
}

impl Default for PointMassSpec {
    fn default() -> Self {
        Self {
            dt: 0.05,
            gamma: 0.95,
            horizon: 100,
            noise_std: 0.01,
            force_gain: 2.0,
            damping: 1.0,
            goal: [2.0, 0.0],
            goal_radius: 0.2,
            start: [0.0, 0.0],
            start_spread: 0.05,
            cliff: Rect {
                x0: 0.9,
                x1: 1.1,
                y0: -1.0,
                y1: 1.0,
            },
            progress_scale: 0.25,
            progress_cap: 0.5,
            r_max: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointMass {
    pub spec: PointMassSpec,
}

impl PointMass {
    pub fn new(spec: PointMassSpec) -> Self {
        Self { spec }
    }

    pub fn in_cliff(&self, s: &[f64]) -> bool {
        self.spec.cliff.contains(s[0], s[1])
    }

    /// Known reward of being in `s`; the action does not enter.
    pub fn reward(&self, s: &[f64], _a: &[f64]) -> f64 {
        let sp = &self.spec;
        if self.in_cliff(s) {
            return -sp.r_max;
        }
        let (dx, dy) = (sp.goal[0] - s[0], sp.goal[1] - s[1]);
        let dist = (dx * dx + dy * dy).sqrt();
        if dist <= sp.goal_radius {
            return sp.r_max;
        }
        let toward = (s[2] * dx + s[3] * dy) / dist;
        (sp.progress_scale * toward).clamp(-sp.progress_cap, sp.progress_cap)
    }

    /// Deterministic part of the dynamics.
    pub fn mean_next(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        if self.in_cliff(s) {
            return vec![s[0], s[1], 0.0, 0.0];
        }
        let sp = &self.spec;
        let a = self.action_space().clip(a);
        vec![
            s[0] + sp.dt * s[2],
            s[1] + sp.dt * s[3],
            s[2] + sp.dt * (sp.force_gain * a[0] - sp.damping * s[2]),
            s[3] + sp.dt * (sp.force_gain * a[1] - sp.damping * s[3]),
        ]
    }
}

impl Environment for PointMass {
    fn name(&self) -> String {
        "point-mass".into()
    }

    fn state_dim(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            dim: 2,
            low: -1.0,
            high: 1.0,
        }
    }

    fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    fn r_max(&self) -> f64 {
        self.spec.r_max
    }

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn reset(&self, episode: &mut Episode) -> Vec<f64> {
        let sp = &self.spec;
        let mut jitter = || {
            if sp.start_spread > 0.0 {
                episode.rng.random_range(-sp.start_spread..=sp.start_spread)
            } else {
                0.0
            }
        };
        vec![sp.start[0] + jitter(), sp.start[1] + jitter(), 0.0, 0.0]
    }

    fn step(&self, s: &[f64], a: &[f64], episode: &mut Episode) -> Step {
        let reward = self.reward(s, a);
        let mut next = self.mean_next(s, a);
        if !self.in_cliff(s) && self.spec.noise_std > 0.0 {
            for v in &mut next[2..] {
                let xi: f64 = StandardNormal.sample(&mut episode.rng);
                *v += self.spec.noise_std * xi;
            }
        }
        Step {
            next_state: next,
            reward,
            done: false,
            halted: false,
        }
    }
}

/// Waypoint-following PD controller with Gaussian action noise: heads for
/// `waypoint` until it reaches `switch_x`, then for the goal. Used as the
/// data-logging behavior on the point-mass task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointController {
    pub waypoint: [f64; 2],
    pub goal: [f64; 2],
    pub switch_x: f64,
    pub kp: f64,
    pub kd: f64,
    pub noise_std: f64,
}

impl WaypointController {
    /// Controller that detours above the cliff of `spec`.
    pub fn around_cliff(spec: &PointMassSpec) -> Self {
        Self {
            waypoint: [0.5 * (spec.cliff.x0 + spec.cliff.x1), spec.cliff.y1 + 0.4],
            goal: spec.goal,
            switch_x: spec.cliff.x0,
            kp: 2.0,
            kd: 1.5,
            noise_std: 0.1,
        }
    }

    /// A half-trained version of [`around_cliff`](Self::around_cliff): same
    /// route, weaker gains, much noisier actions.
    pub fn partial(spec: &PointMassSpec) -> Self {
        Self {
            kp: 1.0,
            noise_std: 0.5,
            ..Self::around_cliff(spec)
        }
    }

    pub fn mean_action(&self, s: &[f64]) -> Vec<f64> {
        let target = if s[0] < self.switch_x { self.waypoint } else { self.goal };
        (0..2)
            .map(|i| (self.kp * (target[i] - s[i]) - self.kd * s[2 + i]).clamp(-1.0, 1.0))
            .collect()
    }
}

impl Actor for WaypointController {
    fn act(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        self.mean_action(s)
            .into_iter()
            .map(|m| {
                let xi: f64 = StandardNormal.sample(rng);
                m + self.noise_std * xi
            })
            .collect()
    }
}

/// PD stabilizer around the upright position with Gaussian action noise.
/// Saturates far from upright, so it only balances from small angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumPd {
    pub kp: f64,
    pub kd: f64,
    pub max_torque: f64,
    pub noise_std: f64,
}

impl PendulumPd {
    pub fn new(spec: &PendulumSpec) -> Self {
        Self {
            kp: 12.0,
            kd: 2.0,
            max_torque: spec.max_torque,
            noise_std: 0.3,
        }
    }
}

impl Actor for PendulumPd {
    fn act(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        let u = (-self.kp * wrap_angle(s[0]) - self.kd * s[1]).clamp(-self.max_torque, self.max_torque);
        let xi: f64 = StandardNormal.sample(rng);
        vec![u + self.noise_std * xi]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumSpec {
    pub dt: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub noise_std: f64,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub max_speed: f64,
}

impl Default for PendulumSpec {
    fn default() -> Self {
        Self {
            dt: 0.05,
            gamma: 0.95,
            horizon: 200,
            noise_std: 0.0,
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pendulum {
    pub spec: PendulumSpec,
}

fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(spec: PendulumSpec) -> Self {
        Self { spec }
    }

    pub fn reward(&self, s: &[f64], a: &[f64]) -> f64 {
        let theta = wrap_angle(s[0]);
        let omega = s[1].clamp(-self.spec.max_speed, self.spec.max_speed);
        let u = a[0].clamp(-self.spec.max_torque, self.spec.max_torque);
        -(theta * theta + 0.1 * omega * omega + 0.001 * u * u)
    }
}

impl Environment for Pendulum {
    fn name(&self) -> String {
        "pendulum".into()
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous {
            dim: 1,
            low: -self.spec.max_torque,
            high: self.spec.max_torque,
        }
    }

    fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    fn r_max(&self) -> f64 {
        let sp = &self.spec;
        std::f64::consts::PI.powi(2) + 0.1 * sp.max_speed.powi(2) + 0.001 * sp.max_torque.powi(2)
    }

    fn horizon(&self) -> usize {
        self.spec.horizon
    }

    fn reset(&self, episode: &mut Episode) -> Vec<f64> {
        use std::f64::consts::PI;
        vec![episode.rng.random_range(-PI..PI), episode.rng.random_range(-1.0..=1.0)]
    }

    fn step(&self, s: &[f64], a: &[f64], episode: &mut Episode) -> Step {
        let sp = &self.spec;
        let reward = self.reward(s, a);
        let u = a[0].clamp(-sp.max_torque, sp.max_torque);
        let accel = sp.gravity / sp.length * s[0].sin() + u / (sp.mass * sp.length * sp.length);
        let mut omega = (s[1] + sp.dt * accel).clamp(-sp.max_speed, sp.max_speed);
        if sp.noise_std > 0.0 {
            let xi: f64 = StandardNormal.sample(&mut episode.rng);
            omega = (omega + sp.noise_std * xi).clamp(-sp.max_speed, sp.max_speed);
        }
        let theta = wrap_angle(s[0] + sp.dt * s[1]);
        Step {
            next_state: vec![theta, omega],
            reward,
            done: false,
            halted: false,
        }
    }
}
