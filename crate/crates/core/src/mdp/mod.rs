//! MDPs, policies and trajectories, with exact and Monte-Carlo evaluation.

mod sim;
mod tabular;

pub use sim::{
    analytic_horizon, monte_carlo_value, rollout, ActionSpace, Actor, Environment, Episode, MonteCarloEstimate, Step,
    TabularEnv, Termination, Trajectory, MC_TAIL,
};
pub(crate) use tabular::sample_index;
pub use tabular::{
    discounted_visitation, empty_mask, exact_policy_value, expected_discounted_hitting, mask_mass, tv_distance,
    PairMask, PolicyValue, TabularMdp, TabularPolicy,
};
