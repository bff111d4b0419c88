//! Pessimistic MDPs: the learned model with an absorbing HALT state that
//! every unknown pair leads to, paying `-kappa` per step there.
//!
//! The tabular form is an explicit [`TabularMdp`] with one extra state. The
//! rollout form wraps a learned simulator and ends a trajectory as soon as an
//! unknown pair is queried, collapsing the HALT tail into a single reward.

use std::sync::Arc;

use crate::dataset::{OfflineDataset, StartSampler};
use crate::dynamics::{DynamicsEnsemble, TabularCountModel};
use crate::error::{Error, Result};
use crate::mdp::{ActionSpace, Environment, Episode, Step, TabularMdp, TabularPolicy};
use crate::rng::StreamRng;
use crate::usad::{disc, Calibration, TabularDetector};

/// Reward at an unknown pair `(s, a)` with `s` not HALT.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UnknownPairReward {
    /// Keep the base reward `r(s, a)`; HALT starts on the next step.
    #[default]
    Base,
    /// Pay `-kappa` already at the unknown pair, so its value is exactly the
    /// HALT tail `-kappa / (1 - gamma)`. Matches the rollout wrapper's
    /// exact-sum accounting.
    Penalty,
}

#[derive(Clone, Debug)]
pub struct PessimisticTabular {
    pub mdp: TabularMdp,
    pub kappa: f64,
    pub halt: usize,
    pub unknown: Vec<Vec<bool>>,
}

impl PessimisticTabular {
    /// Number of states excluding HALT.
    pub fn n_base_states(&self) -> usize {
        self.halt
    }

    /// Adds an arbitrary (lowest-index) action at HALT.
    pub fn extend_policy(&self, policy: &TabularPolicy) -> TabularPolicy {
        match policy {
            TabularPolicy::Deterministic(acts) => {
                let mut acts = acts.clone();
                acts.push(0);
                TabularPolicy::Deterministic(acts)
            }
            TabularPolicy::Stochastic(rows) => {
                let mut rows = rows.clone();
                let mut halt_row = vec![0.0; self.mdp.n_actions()];
                halt_row[0] = 1.0;
                rows.push(halt_row);
                TabularPolicy::Stochastic(rows)
            }
        }
    }

    /// Drops the HALT row.
    pub fn restrict_policy(&self, policy: &TabularPolicy) -> TabularPolicy {
        match policy {
            TabularPolicy::Deterministic(acts) => TabularPolicy::Deterministic(acts[..self.halt].to_vec()),
            TabularPolicy::Stochastic(rows) => TabularPolicy::Stochastic(rows[..self.halt].to_vec()),
        }
    }
}

/// Builds the tabular P-MDP from empirical transitions, a detector, a reward
/// table over the base states and the empirical start distribution.
///
/// Every unvisited pair must be flagged unknown by `detector`; the reward
/// bound of the result is `max(r_max, kappa)`.
#[allow(clippy::too_many_arguments)]
pub fn build_tabular_pmdp(
    model: &TabularCountModel,
    detector: &dyn TabularDetector,
    reward: &[Vec<f64>],
    kappa: f64,
    rho0_hat: &[f64],
    gamma: f64,
    r_max: f64,
    unknown_reward: UnknownPairReward,
) -> Result<PessimisticTabular> {
    if !(kappa >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kappa must be nonnegative, got {kappa}"
        )));
    }
    let (n, na) = (model.n_states(), model.n_actions());
    if detector.n_states() != n || detector.n_actions() != na || reward.len() != n || rho0_hat.len() != n {
        return Err(Error::Dimension("P-MDP ingredients disagree on shape".into()));
    }
    let halt = n;
    let unknown = detector.unknown_mask();
    let mut rewards = Vec::with_capacity(n + 1);
    let mut transitions = Vec::with_capacity(n + 1);
    let mut to_halt = vec![0.0; n + 1];
    to_halt[halt] = 1.0;
    for s in 0..n {
        if reward[s].len() != na {
            return Err(Error::Dimension(format!(
                "reward row {s} has {} actions",
                reward[s].len()
            )));
        }
        let mut r_row = Vec::with_capacity(na);
        let mut p_row = Vec::with_capacity(na);
        for a in 0..na {
            if unknown[s][a] {
                r_row.push(match unknown_reward {
                    UnknownPairReward::Base => reward[s][a],
                    UnknownPairReward::Penalty => -kappa,
                });
                p_row.push(to_halt.clone());
            } else {
                let mut p = model.p_hat(s, a).ok_or_else(|| {
                    Error::InvalidArgument(format!("detector marks unvisited pair ({s}, {a}) as known"))
                })?;
                p.push(0.0);
                r_row.push(reward[s][a]);
                p_row.push(p);
            }
        }
        rewards.push(r_row);
        transitions.push(p_row);
    }
    rewards.push(vec![-kappa; na]);
    transitions.push(vec![to_halt; na]);
    let mut rho0 = rho0_hat.to_vec();
    rho0.push(0.0);
    let mdp = TabularMdp::new(rewards, transitions, rho0, gamma, r_max.max(kappa))?;
    Ok(PessimisticTabular {
        mdp,
        kappa,
        halt,
        unknown,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HaltMode {
    /// One terminal reward `-kappa / (1 - gamma)`: the discounted HALT tail.
    #[default]
    ExactSum,
    /// One terminal reward `-kappa`.
    SinglePenalty,
}

impl HaltMode {
    pub fn reward(self, kappa: f64, gamma: f64) -> f64 {
        match self {
            HaltMode::ExactSum => -kappa / (1.0 - gamma),
            HaltMode::SinglePenalty => -kappa,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MemberMode {
    /// Trajectory `i` follows member `i mod K` throughout.
    #[default]
    Cycle,
    /// Average of all members' predictions.
    Mean,
}

/// A learned simulator usable inside [`PessimisticRollout`].
pub trait LearnedDynamics: Send + Sync {
    fn state_dim(&self) -> usize;
    fn n_members(&self) -> usize;
    /// Next state under `member` (or the member average when `None`).
    /// `sample` asks for a draw from the predictive distribution instead of
    /// its mean.
    fn next_state(
        &self,
        s: &[f64],
        a: &[f64],
        member: Option<usize>,
        sample: bool,
        rng: &mut StreamRng,
    ) -> Result<Vec<f64>>;
}

impl LearnedDynamics for DynamicsEnsemble {
    fn state_dim(&self) -> usize {
        self.members()[0].state_dim()
    }

    fn n_members(&self) -> usize {
        self.len()
    }

    fn next_state(
        &self,
        s: &[f64],
        a: &[f64],
        member: Option<usize>,
        sample: bool,
        rng: &mut StreamRng,
    ) -> Result<Vec<f64>> {
        match (member, sample) {
            (Some(m), false) => self.members()[m].predict(s, a),
            (Some(m), true) => self.members()[m].sample(s, a, rng),
            (None, _) => self.predict_mean(s, a),
        }
    }
}

/// Samples from the empirical rows; states and actions are index vectors.
impl LearnedDynamics for TabularCountModel {
    fn state_dim(&self) -> usize {
        1
    }

    fn n_members(&self) -> usize {
        1
    }

    fn next_state(&self, s: &[f64], a: &[f64], _: Option<usize>, _: bool, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let (si, ai) = (s[0] as usize, a[0] as usize);
        let p = self
            .p_hat(si, ai)
            .ok_or_else(|| Error::InvalidArgument(format!("no data for pair ({si}, {ai})")))?;
        Ok(vec![crate::mdp::sample_index(&p, rng) as f64])
    }
}

/// Detector queried by the rollout wrapper; `true` means unknown.
pub trait RolloutDetector: Send + Sync {
    fn is_unknown(&self, s: &[f64], a: &[f64]) -> bool;
}

/// Ensemble discrepancy against a calibrated threshold.
pub struct DiscDetector {
    pub ensemble: Arc<DynamicsEnsemble>,
    pub calibration: Calibration,
}

impl RolloutDetector for DiscDetector {
    fn is_unknown(&self, s: &[f64], a: &[f64]) -> bool {
        let d = self.ensemble.predict_all(s, a).map_or(f64::NAN, |p| disc(&p));
        self.calibration.is_unknown_disc(d)
    }
}

/// Fixed unknown mask over index-encoded tabular pairs.
impl RolloutDetector for crate::usad::MaskUsad {
    fn is_unknown(&self, s: &[f64], a: &[f64]) -> bool {
        TabularDetector::is_unknown(self, s[0] as usize, a[0] as usize)
    }
}

pub type RewardFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutOptions {
    pub kappa: f64,
    pub gamma: f64,
    pub r_max: f64,
    pub horizon: usize,
    pub halt_mode: HaltMode,
    pub member_mode: MemberMode,
    /// Sample model noise instead of following the mean prediction.
    pub sample_noise: bool,
}

/// Simulator for the P-MDP built on a learned model. Without a detector
/// every pair is known, which gives naive model-based RL.
pub struct PessimisticRollout<D> {
    pub dynamics: Arc<D>,
    pub detector: Option<Arc<dyn RolloutDetector>>,
    pub reward: RewardFn,
    pub action_space: ActionSpace,
    pub starts: StartSampler,
    pub options: RolloutOptions,
    pub name: String,
}

impl<D: LearnedDynamics> PessimisticRollout<D> {
    fn member(&self, episode: &Episode) -> Option<usize> {
        match self.options.member_mode {
            MemberMode::Cycle => Some((episode.index % self.dynamics.n_members() as u64) as usize),
            MemberMode::Mean => None,
        }
    }

    fn halt_step(&self, s: &[f64]) -> Step {
        Step {
            next_state: s.to_vec(),
            reward: self.options.halt_mode.reward(self.options.kappa, self.options.gamma),
            done: true,
            halted: true,
        }
    }
}

impl<D: LearnedDynamics> Environment for PessimisticRollout<D> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn state_dim(&self) -> usize {
        self.dynamics.state_dim()
    }

    fn action_space(&self) -> ActionSpace {
        self.action_space.clone()
    }

    fn gamma(&self) -> f64 {
        self.options.gamma
    }

    fn r_max(&self) -> f64 {
        self.options.r_max.max(self.options.kappa)
    }

    fn horizon(&self) -> usize {
        self.options.horizon
    }

    fn reset(&self, episode: &mut Episode) -> Vec<f64> {
        self.starts.sample(&mut episode.rng)
    }

    fn step(&self, s: &[f64], a: &[f64], episode: &mut Episode) -> Step {
        let a = self.action_space.clip(a);
        if let Some(det) = &self.detector {
            if det.is_unknown(s, &a) {
                return self.halt_step(s);
            }
        }
        let member = self.member(episode);
        match self
            .dynamics
            .next_state(s, &a, member, self.options.sample_noise, &mut episode.rng)
        {
            Ok(next) if next.iter().all(|x| x.is_finite()) => Step {
                next_state: next,
                reward: (self.reward)(s, &a),
                done: false,
                halted: false,
            },
            other => {
                log::warn!(
                    "model prediction failed at trajectory {} ({other:?}); treating the pair as unknown",
                    episode.index
                );
                self.halt_step(s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KappaMode {
    /// `kappa = r_max`, as in the value bounds.
    Theory,
    /// HALT reward `r_min(D) - offset`, i.e. `kappa = offset - r_min(D)`.
    Dataset { offset: f64 },
}

pub fn default_kappa(mode: KappaMode, dataset: &OfflineDataset, r_max: f64) -> Result<f64> {
    match mode {
        KappaMode::Theory => Ok(r_max),
        KappaMode::Dataset { offset } => {
            let r_min = dataset.min_reward().ok_or(Error::EmptyDataset)?;
            Ok(offset - r_min)
        }
    }
}
