//! Exact numerical checks of the value bounds on tabular instances.
//!
//! Every quantity is computed by a linear solve, so a violated inequality is
//! a genuine counterexample rather than sampling noise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::dataset::{collect, empirical_rho0, OfflineDataset, Strategy};
use crate::dynamics::{fit_tabular, TabularCountModel};
use crate::envs::{build_counterexample, random_tabular, CounterexampleSpec, RandomTabularSpec};
use crate::error::{Error, Result};
use crate::mdp::{
    discounted_visitation, exact_policy_value, expected_discounted_hitting, mask_mass, tv_distance, PairMask,
    TabularEnv, TabularMdp, TabularPolicy,
};
use crate::planner::{value_iteration, ViConfig, ViResult};
use crate::pmdp::{build_tabular_pmdp, PessimisticTabular, UnknownPairReward};
use crate::rng::{derive_seed, substream};
use crate::usad::{CountUsad, OracleUsad, TabularDetector, DEFAULT_N_MIN};

/// Absolute slack allowed in the value-bound inequalities.
pub const BOUND_SLACK: f64 = 1e-8;
/// Absolute slack allowed in the hitting-time inequality.
pub const HITTING_SLACK: f64 = 1e-10;

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundRecord {
    pub instance: u64,
    pub j_pmdp: f64,
    pub j_true: f64,
    pub dtv_rho0: f64,
    pub alpha_used: f64,
    pub hitting_term: f64,
    pub lower_bound_rhs: f64,
    pub upper_bound_rhs: f64,
    /// `j_pmdp - lower_bound_rhs`
    pub lower_slack: f64,
    /// `upper_bound_rhs - j_pmdp`
    pub upper_slack: f64,
    pub satisfied: bool,
}

/// Compares a policy's value in the P-MDP against its true value.
///
/// `pmdp` must be built with `kappa = r_max` from `mdp`'s rewards, and
/// `alpha` must bound the TV error of every known pair.
pub fn check_value_bounds(
    instance: u64,
    mdp: &TabularMdp,
    pmdp: &PessimisticTabular,
    alpha: f64,
    policy: &TabularPolicy,
) -> Result<BoundRecord> {
    let (gamma, r) = (mdp.gamma(), mdp.r_max());
    let j_true = exact_policy_value(mdp, policy)?.j;
    let j_pmdp = exact_policy_value(&pmdp.mdp, &pmdp.extend_policy(policy))?.j;
    let rho0_hat = &pmdp.mdp.rho0()[..pmdp.halt];
    let dtv_rho0 = tv_distance(mdp.rho0(), rho0_hat);
    let hitting_term = expected_discounted_hitting(mdp, policy, &pmdp.unknown)?;
    let start = 2.0 * r / (1.0 - gamma) * dtv_rho0;
    let model = 2.0 * gamma * r / (1.0 - gamma).powi(2) * alpha;
    let lower = j_true - start - model - 2.0 * r / (1.0 - gamma) * hitting_term;
    let upper = j_true + start + model;
    Ok(BoundRecord {
        instance,
        j_pmdp,
        j_true,
        dtv_rho0,
        alpha_used: alpha,
        hitting_term,
        lower_bound_rhs: lower,
        upper_bound_rhs: upper,
        lower_slack: j_pmdp - lower,
        upper_slack: upper - j_pmdp,
        satisfied: j_pmdp >= lower - BOUND_SLACK && j_pmdp <= upper + BOUND_SLACK,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuboptimalityRecord {
    pub instance: u64,
    pub j_star: f64,
    pub j_out: f64,
    pub epsilon_pi: f64,
    pub dtv_rho0: f64,
    pub alpha_used: f64,
    pub hitting_star: f64,
    pub rhs: f64,
    pub slack: f64,
    pub satisfied: bool,
}

/// Suboptimality of the planner's output against its four-term bound.
#[allow(clippy::too_many_arguments)]
pub fn check_suboptimality(
    instance: u64,
    mdp: &TabularMdp,
    pmdp: &PessimisticTabular,
    alpha: f64,
    optimal: &TabularPolicy,
    output: &TabularPolicy,
    epsilon_pi: f64,
) -> Result<SuboptimalityRecord> {
    let (gamma, r) = (mdp.gamma(), mdp.r_max());
    let j_star = exact_policy_value(mdp, optimal)?.j;
    let j_out = exact_policy_value(mdp, output)?.j;
    let dtv_rho0 = tv_distance(mdp.rho0(), &pmdp.mdp.rho0()[..pmdp.halt]);
    let hitting_star = expected_discounted_hitting(mdp, optimal, &pmdp.unknown)?;
    let rhs = epsilon_pi
        + 4.0 * r / (1.0 - gamma) * dtv_rho0
        + 4.0 * gamma * r / (1.0 - gamma).powi(2) * alpha
        + 2.0 * r / (1.0 - gamma) * hitting_star;
    let gap = j_star - j_out;
    Ok(SuboptimalityRecord {
        instance,
        j_star,
        j_out,
        epsilon_pi,
        dtv_rho0,
        alpha_used: alpha,
        hitting_star,
        rhs,
        slack: rhs - gap,
        satisfied: gap <= rhs + BOUND_SLACK,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HittingRecord {
    pub instance: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// `E[gamma^T_S] <= d(S) / (1 - gamma)`.
pub fn check_hitting(
    instance: u64,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    target: &PairMask,
) -> Result<HittingRecord> {
    let lhs = expected_discounted_hitting(mdp, policy, target)?;
    let d = discounted_visitation(mdp, policy)?;
    let rhs = mask_mass(&d, target) / (1.0 - mdp.gamma());
    Ok(HittingRecord {
        instance,
        lhs,
        rhs,
        satisfied: lhs <= rhs + HITTING_SLACK,
    })
}

/// Ingredients of the finite-sample error term, and its value for a given
/// constant `c` and confidence `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleErrorTerms {
    pub rho0_min: f64,
    pub p_min: f64,
    pub d_pib_min: f64,
    pub gamma: f64,
    pub r_max: f64,
}

fn smallest_positive(values: impl Iterator<Item = f64>) -> f64 {
    values.filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min)
}

impl SampleErrorTerms {
    pub fn from_instance(mdp: &TabularMdp, behavior: &TabularPolicy) -> Result<Self> {
        let d = discounted_visitation(mdp, behavior)?;
        Ok(Self {
            rho0_min: smallest_positive(mdp.rho0().iter().copied()),
            p_min: smallest_positive(mdp.transitions().iter().flatten().flatten().copied()),
            d_pib_min: smallest_positive(d.iter().flatten().copied()),
            gamma: mdp.gamma(),
            r_max: mdp.r_max(),
        })
    }

    /// Dataset size from which the improvement guarantee applies.
    pub fn min_samples(&self, c: f64, delta: f64) -> f64 {
        c / self.d_pib_min.powi(2) * (1.0 / (delta * self.d_pib_min)).ln()
    }

    pub fn epsilon_n(&self, n: f64, c: f64, delta: f64) -> f64 {
        let (g, r) = (self.gamma, self.r_max);
        let start = 4.0 * c * r / ((1.0 - g) * self.rho0_min) * ((1.0 / (delta * self.rho0_min)).ln() / n).sqrt();
        let model = 4.0 * c * g * r / ((1.0 - g).powi(2) * self.p_min)
            * ((1.0 / (delta * self.p_min * self.d_pib_min)).ln() / (self.d_pib_min * n)).sqrt();
        start + model
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularPipelineConfig {
    pub n_transitions: usize,
    pub episode_horizon: usize,
    pub n_min: u64,
    /// Use the TV-oracle detector with this tolerance instead of counts.
    pub oracle_alpha: Option<f64>,
    /// Penalty magnitude; `None` uses `r_max`.
    pub kappa: Option<f64>,
    pub unknown_reward: UnknownPairReward,
    pub vi: ViConfig,
    pub seed: u64,
}

impl Default for TabularPipelineConfig {
    fn default() -> Self {
        Self {
            n_transitions: 10_000,
            episode_horizon: 50,
            n_min: DEFAULT_N_MIN,
            oracle_alpha: None,
            kappa: None,
            unknown_reward: UnknownPairReward::Base,
            vi: ViConfig::default(),
            seed: 0,
        }
    }
}

pub struct TabularRun {
    pub dataset: OfflineDataset,
    pub model: TabularCountModel,
    pub rho0_hat: Vec<f64>,
    pub pmdp: PessimisticTabular,
    pub vi: ViResult,
    /// Planner output restricted to the original states.
    pub policy: TabularPolicy,
}

/// Collect, fit counts, detect unknown pairs (by visitation count unless an
/// oracle tolerance is set), build the P-MDP and plan in it. Rewards are
/// taken as known.
pub fn run_tabular_pipeline(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    config: &TabularPipelineConfig,
) -> Result<TabularRun> {
    let env = TabularEnv::new(mdp.clone(), config.episode_horizon, "tabular");
    let dataset = collect(&env, Strategy::Pure, behavior, config.n_transitions, config.seed)?;
    let model = fit_tabular(&dataset, mdp.n_states(), mdp.n_actions())?;
    let rho0_hat = empirical_rho0(&dataset, mdp.n_states())?;
    let count;
    let oracle;
    let detector: &dyn TabularDetector = match config.oracle_alpha {
        Some(alpha) => {
            oracle = OracleUsad::new(mdp, &model, alpha)?;
            &oracle
        }
        None => {
            count = CountUsad::new(&model, config.n_min)?;
            &count
        }
    };
    let kappa = config.kappa.unwrap_or(mdp.r_max());
    let pmdp = build_tabular_pmdp(
        &model,
        detector,
        mdp.rewards(),
        kappa,
        &rho0_hat,
        mdp.gamma(),
        mdp.r_max(),
        config.unknown_reward,
    )?;
    let vi = value_iteration(&pmdp.mdp, &config.vi)?;
    let policy = pmdp.restrict_policy(&vi.policy);
    Ok(TabularRun {
        dataset,
        model,
        rho0_hat,
        pmdp,
        vi,
        policy,
    })
}

fn random_stochastic_policy(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> TabularPolicy {
    let rows = (0..n_states)
        .map(|_| {
            let w: Vec<f64> = (0..n_actions).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
        .collect();
    TabularPolicy::Stochastic(rows)
}

fn random_policy(n_states: usize, n_actions: usize, rng: &mut impl Rng) -> TabularPolicy {
    if rng.random_bool(0.5) {
        TabularPolicy::Deterministic((0..n_states).map(|_| rng.random_range(0..n_actions)).collect())
    } else {
        random_stochastic_policy(n_states, n_actions, rng)
    }
}

/// Draws a random MDP (at most 10 states and 4 actions), a random behavior
/// policy, a dataset of 50 to 5000 transitions and a random `alpha`, then
/// checks both value bounds for a random policy and the suboptimality bound
/// for the planner's output.
pub fn value_bound_instance(seed: u64, instance: u64) -> Result<(BoundRecord, SuboptimalityRecord)> {
    let mut rng = substream(seed, "value-bound-instance", instance);
    let spec = RandomTabularSpec {
        n_states: rng.random_range(2..=10),
        n_actions: rng.random_range(1..=4),
        sparsity: rng.random_range(0.3..=1.0),
        gamma: rng.random_range(0.5..0.98),
        r_max: 1.0,
    };
    let mdp = random_tabular(&spec, derive_seed(seed, "value-bound-mdp", instance))?;
    let behavior = random_stochastic_policy(spec.n_states, spec.n_actions, &mut rng);
    let n = (50.0 * 100f64.powf(rng.random_range(0.0..=1.0))).round() as usize;
    let horizon = rng.random_range(5..=40);
    let env = TabularEnv::new(mdp.clone(), horizon, "random-tabular");
    let dataset = collect(
        &env,
        Strategy::Pure,
        &behavior,
        n,
        derive_seed(seed, "value-bound-data", instance),
    )?;
    let model = fit_tabular(&dataset, spec.n_states, spec.n_actions)?;
    let rho0_hat = empirical_rho0(&dataset, spec.n_states)?;
    let oracle = OracleUsad::new(&mdp, &model, rng.random_range(0.02..0.6))?;
    let alpha = oracle.max_known_tv();
    let pmdp = build_tabular_pmdp(
        &model,
        &oracle,
        mdp.rewards(),
        mdp.r_max(),
        &rho0_hat,
        mdp.gamma(),
        mdp.r_max(),
        UnknownPairReward::Base,
    )?;
    let policy = random_policy(spec.n_states, spec.n_actions, &mut rng);
    let bound = check_value_bounds(instance, &mdp, &pmdp, alpha, &policy)?;

    let optimal = value_iteration(
        &mdp,
        &ViConfig {
            tolerance: 1e-12,
            max_iters: 1_000_000,
        },
    )?
    .policy;
    let planned = value_iteration(&pmdp.mdp, &ViConfig::default())?;
    let subopt = check_suboptimality(
        instance,
        &mdp,
        &pmdp,
        alpha,
        &optimal,
        &pmdp.restrict_policy(&planned.policy),
        planned.epsilon_pi,
    )?;
    Ok((bound, subopt))
}

/// Random MDP, policy and target set for the hitting-time inequality.
pub fn hitting_instance(seed: u64, instance: u64) -> Result<HittingRecord> {
    let mut rng = substream(seed, "hitting-instance", instance);
    let spec = RandomTabularSpec {
        n_states: rng.random_range(1..=10),
        n_actions: rng.random_range(1..=4),
        sparsity: rng.random_range(0.2..=1.0),
        gamma: rng.random_range(0.0..0.99),
        r_max: 1.0,
    };
    let mdp = random_tabular(&spec, derive_seed(seed, "hitting-mdp", instance))?;
    let policy = random_policy(spec.n_states, spec.n_actions, &mut rng);
    let p_in = rng.random_range(0.0..=1.0);
    let target: PairMask = (0..spec.n_states)
        .map(|_| (0..spec.n_actions).map(|_| rng.random_bool(p_in)).collect())
        .collect();
    check_hitting(instance, &mdp, &policy, &target)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TheorySuite {
    pub value_bounds: Vec<BoundRecord>,
    pub suboptimality: Vec<SuboptimalityRecord>,
    pub hitting: Vec<HittingRecord>,
}

impl TheorySuite {
    pub fn all_satisfied(&self) -> bool {
        self.value_bounds.iter().all(|r| r.satisfied)
            && self.suboptimality.iter().all(|r| r.satisfied)
            && self.hitting.iter().all(|r| r.satisfied)
    }
}

/// `instances` value-bound instances and five times as many hitting-time
/// instances.
pub fn run_theory_suite(instances: usize, seed: u64) -> Result<TheorySuite> {
    let mut suite = TheorySuite::default();
    for i in 0..instances as u64 {
        let (b, c) = value_bound_instance(seed, i)?;
        if !b.satisfied {
            log::error!("value bound violated on instance {i} (seed {seed}): {b:?}");
        }
        if !c.satisfied {
            log::error!("suboptimality bound violated on instance {i} (seed {seed}): {c:?}");
        }
        suite.value_bounds.push(b);
        suite.suboptimality.push(c);
    }
    for i in 0..5 * instances as u64 {
        let r = hitting_instance(seed, i)?;
        if !r.satisfied {
            log::error!("hitting-time bound violated on instance {i} (seed {seed}): {r:?}");
        }
        suite.hitting.push(r);
    }
    Ok(suite)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImprovementRow {
    pub n: usize,
    pub seed: u64,
    pub j_behavior: f64,
    pub j_out: f64,
    /// `J(pi_b) - J(pi_out)`
    pub gap: f64,
    pub epsilon_pi: f64,
    pub epsilon_n: f64,
}

/// Runs the tabular pipeline for every dataset size and seed and records how
/// far the output falls below the behavior policy.
pub fn check_improvement(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    config: &TabularPipelineConfig,
    n_grid: &[usize],
    seeds: &[u64],
    c: f64,
    delta: f64,
) -> Result<Vec<ImprovementRow>> {
    let j_behavior = exact_policy_value(mdp, behavior)?.j;
    let terms = SampleErrorTerms::from_instance(mdp, behavior)?;
    let mut rows = Vec::with_capacity(n_grid.len() * seeds.len());
    for &n in n_grid {
        for &seed in seeds {
            let run = run_tabular_pipeline(
                mdp,
                behavior,
                &TabularPipelineConfig {
                    n_transitions: n,
                    seed,
                    ..config.clone()
                },
            )?;
            let j_out = exact_policy_value(mdp, &run.policy)?.j;
            rows.push(ImprovementRow {
                n,
                seed,
                j_behavior,
                j_out,
                gap: j_behavior - j_out,
                epsilon_pi: run.vi.epsilon_pi,
                epsilon_n: terms.epsilon_n(n as f64, c, delta),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleReport {
    pub k: usize,
    pub p0: f64,
    pub epsilon: f64,
    pub j_star: f64,
    pub j_out: f64,
    pub suboptimality: f64,
    pub lower_bound_value: f64,
    pub d_pistar_ud: f64,
    pub epsilon_pi: f64,
    pub coverage_holds: bool,
    pub bound_holds: bool,
}

/// Runs the pipeline on data from the construction's behavior policy and
/// compares the output's suboptimality with the lower-bound formula.
pub fn run_counterexample_experiment(
    spec: &CounterexampleSpec,
    config: &TabularPipelineConfig,
) -> Result<CounterexampleReport> {
    let ce = build_counterexample(spec)?;
    let run = run_tabular_pipeline(&ce.mdp, &ce.behavior, config)?;
    let j_star = exact_policy_value(&ce.mdp, &ce.optimal)?.j;
    let j_out = exact_policy_value(&ce.mdp, &run.policy)?.j;
    let d = discounted_visitation(&ce.mdp, &ce.optimal)?;
    let d_pistar_ud = mask_mass(&d, &run.pmdp.unknown);
    let lower_bound_value = spec.lower_bound();
    let suboptimality = j_star - j_out;
    Ok(CounterexampleReport {
        k: ce.k,
        p0: ce.p0,
        epsilon: spec.epsilon,
        j_star,
        j_out,
        suboptimality,
        lower_bound_value,
        d_pistar_ud,
        epsilon_pi: run.vi.epsilon_pi,
        coverage_holds: d_pistar_ud <= spec.epsilon,
        bound_holds: suboptimality >= lower_bound_value,
    })
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        writeln!(w, "{row}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_bound_csv(records: &[BoundRecord], path: &Path) -> Result<()> {
    write_csv(
        path,
        "instance,j_pmdp,j_true,dtv_rho0,alpha_used,hitting_term,lower_bound_rhs,upper_bound_rhs,lower_slack,upper_slack,satisfied",
        records.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.instance,
                r.j_pmdp,
                r.j_true,
                r.dtv_rho0,
                r.alpha_used,
                r.hitting_term,
                r.lower_bound_rhs,
                r.upper_bound_rhs,
                r.lower_slack,
                r.upper_slack,
                fmt_bool(r.satisfied)
            )
        }),
    )
}

pub fn write_suboptimality_csv(records: &[SuboptimalityRecord], path: &Path) -> Result<()> {
    write_csv(
        path,
        "instance,j_star,j_out,epsilon_pi,dtv_rho0,alpha_used,hitting_star,rhs,slack,satisfied",
        records.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.instance,
                r.j_star,
                r.j_out,
                r.epsilon_pi,
                r.dtv_rho0,
                r.alpha_used,
                r.hitting_star,
                r.rhs,
                r.slack,
                fmt_bool(r.satisfied)
            )
        }),
    )
}

pub fn write_hitting_csv(records: &[HittingRecord], path: &Path) -> Result<()> {
    write_csv(
        path,
        "instance,lhs,rhs,satisfied",
        records
            .iter()
            .map(|r| format!("{},{},{},{}", r.instance, r.lhs, r.rhs, fmt_bool(r.satisfied))),
    )
}

pub fn write_improvement_csv(rows: &[ImprovementRow], path: &Path) -> Result<()> {
    write_csv(
        path,
        "n,seed,j_behavior,j_out,gap,epsilon_pi,epsilon_n",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.n, r.seed, r.j_behavior, r.j_out, r.gap, r.epsilon_pi, r.epsilon_n
            )
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{chain, ChainSpec};
    use crate::mdp::empty_mask;
    use crate::usad::MaskUsad;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_model_makes_bounds_tight() {
        let mdp = chain(&ChainSpec::default()).unwrap();
        // A count model equal to the truth: feed it each row's exact mass.
        let mut transitions = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                for (s2, &p) in mdp.transition(s, a).iter().enumerate() {
                    for _ in 0..(p * 10.0).round() as usize {
                        transitions.push(crate::dataset::Transition {
                            episode: 0,
                            t: 1,
                            s: vec![s as f64],
                            a: vec![a as f64],
                            r: mdp.reward(s, a),
                            s_next: vec![s2 as f64],
                            done: false,
                        });
                    }
                }
            }
        }
        let meta = crate::dataset::DatasetMeta {
            env: "chain".into(),
            gamma: 0.9,
            strategy: "Pure".into(),
            seed: 0,
            n_transitions: 0,
        };
        let model = fit_tabular(&OfflineDataset::new(meta, transitions), mdp.n_states(), mdp.n_actions()).unwrap();
        let all_known = MaskUsad(empty_mask(mdp.n_states(), mdp.n_actions()));
        let pmdp = build_tabular_pmdp(
            &model,
            &all_known,
            mdp.rewards(),
            1.0,
            mdp.rho0(),
            mdp.gamma(),
            1.0,
            UnknownPairReward::Base,
        )
        .unwrap();
        let pi = TabularPolicy::uniform(mdp.n_states(), mdp.n_actions());
        let rec = check_value_bounds(0, &mdp, &pmdp, 0.0, &pi).unwrap();
        assert_abs_diff_eq!(rec.j_pmdp, rec.j_true, epsilon = 1e-10);
        assert_abs_diff_eq!(rec.lower_slack, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(rec.upper_slack, 0.0, epsilon = 1e-10);
        assert!(rec.satisfied);
    }

    #[test]
    fn hitting_edge_sets() {
        let mdp = chain(&ChainSpec::default()).unwrap();
        let pi = TabularPolicy::uniform(5, 2);
        let empty = check_hitting(0, &mdp, &pi, &empty_mask(5, 2)).unwrap();
        assert_eq!((empty.lhs, empty.rhs), (0.0, 0.0));
        let full = check_hitting(0, &mdp, &pi, &vec![vec![true; 2]; 5]).unwrap();
        assert_abs_diff_eq!(full.lhs, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(full.rhs, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn epsilon_n_shrinks_like_inverse_sqrt() {
        let mdp = chain(&ChainSpec::default()).unwrap();
        let terms = SampleErrorTerms::from_instance(&mdp, &TabularPolicy::uniform(5, 2)).unwrap();
        let e1 = terms.epsilon_n(1e4, 1.0, 0.05);
        let e4 = terms.epsilon_n(4e4, 1.0, 0.05);
        assert_abs_diff_eq!(e1 / e4, 2.0, epsilon = 1e-12);
        assert!(terms.min_samples(1.0, 0.05) > 0.0);
    }

    #[test]
    fn random_instances_satisfy_bounds() {
        for i in 0..5 {
            let (b, c) = value_bound_instance(11, i).unwrap();
            assert!(b.satisfied, "{b:?}");
            assert!(c.satisfied, "{c:?}");
        }
    }
}
