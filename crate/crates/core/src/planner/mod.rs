//! Planners for the pessimistic MDP: exact value iteration on tabular
//! models and natural policy gradient on learned continuous models, both
//! starting from a behavior-cloned policy.

mod bc;
mod npg;
mod policy;
mod train;
mod vi;

pub use bc::{behavior_clone_gaussian, behavior_clone_tabular, BcConfig};
pub use npg::{
    conjugate_gradient, fisher_vector_product, natural_step, normalize_advantages, npg_update, returns_to_go,
    NaturalStep, NpgConfig, NpgDiagnostics, Scores,
};
pub use policy::{GaussianMlpPolicy, Policy};
pub use train::{train_npg, write_curve_csv, CurveRow, CURVE_HEADER};
pub use vi::{greedy_policy, value_iteration, ViConfig, ViResult};
