//! End-to-end experiment driver: everything a run needs comes from a
//! validated [`RunConfig`], and everything it produces lands in one output
//! directory.
//!
//! Every run writes `config.resolved` first. Continuous runs then write
//! `dataset.jsonl`, `model.ckpt`, `calibration.json`, `curve.csv`,
//! `policy.json` and `summary.json`; tabular and theory runs write the
//! analogous files for their setting. A run that fails midway keeps what it
//! already wrote and adds `failure.json`.

mod config;

use std::cell::Cell;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};

pub use config::{env_default, is_continuous, parse_config, Fallback, KeySpec, Kind, RunConfig, SCHEMA};

use crate::dataset::{self, collect, OfflineDataset, RandomPolicy, StartSampler, Strategy};
use crate::dynamics::{fit_ensemble, save_ensemble, DynamicsEnsemble, MemberReport, ModelConfig};
use crate::envs::{
    build_continuous_task, chain, gridworld, random_tabular, ChainSpec, ContinuousTask, ContinuousTaskSpec,
    CounterexampleSpec, GridSpec, PendulumPd, PendulumSpec, PointMassSpec, RandomTabularSpec, WaypointController,
};
use crate::error::{Error, Result};
use crate::mdp::{exact_policy_value, Actor, Environment, TabularMdp, TabularPolicy};
use crate::planner::{
    behavior_clone_gaussian, train_npg, value_iteration, write_curve_csv, BcConfig, CurveRow, GaussianMlpPolicy,
    NpgConfig, Policy, ViConfig, CURVE_HEADER,
};
use crate::pmdp::{
    default_kappa, DiscDetector, HaltMode, KappaMode, MemberMode, PessimisticRollout, RewardFn, RolloutDetector,
    RolloutOptions, UnknownPairReward,
};
use crate::rng::derive_seed;
use crate::theory::{
    check_improvement, run_counterexample_experiment, run_tabular_pipeline, run_theory_suite, write_bound_csv,
    write_hitting_csv, write_improvement_csv, write_suboptimality_csv, TabularPipelineConfig,
};
use crate::usad::{Calibration, EnsembleUsad};

/// Environment variable naming the directory under which runs are written.
pub const OUTPUT_ROOT_VAR: &str = "MOREL_OUTPUT_ROOT";

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Output directory of a run: `output.dir` if set (relative paths resolve
/// against `root`), else `<root>/<experiment>-<env>-seed<seed>`.
pub fn output_dir(config: &RunConfig, root: &Path) -> PathBuf {
    match config.get("output.dir") {
        "auto" => root.join(format!(
            "{}-{}-seed{}",
            config.get("experiment"),
            config.get("env.kind"),
            config.get("seed")
        )),
        dir => root.join(dir),
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Value,
    /// A checked bound failed (theory-suite only).
    pub violation: bool,
}

struct Ctx {
    dir: PathBuf,
    stage: Cell<&'static str>,
}

impl Ctx {
    fn stage(&self, stage: &'static str) {
        log::info!("{stage}");
        self.stage.set(stage);
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, &text)
    }
}

/// Runs the configured experiment, writing into [`output_dir`].
pub fn run(config: &RunConfig, root: &Path) -> Result<RunOutcome> {
    let dir = output_dir(config, root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let ctx = Ctx {
        dir: dir.clone(),
        stage: Cell::new("setup"),
    };
    ctx.write("config.resolved", &config.to_text())?;
    let result = match config.get("experiment") {
        "morel" | "naive-mbrl" if is_continuous(config.get("env.kind")) => run_continuous(config, &ctx),
        "morel" => run_tabular(config, &ctx),
        "theory-suite" => run_theory(config, &ctx),
        "counterexample" => run_counterexample(config, &ctx),
        "ablation-beta" => run_ablation(config, &ctx),
        "dataset-quality" => run_quality(config, &ctx),
        other => unreachable!("validated experiment {other}"),
    };
    match result {
        Ok((summary, violation)) => {
            ctx.write_json("summary.json", &summary)?;
            Ok(RunOutcome {
                dir,
                summary,
                violation,
            })
        }
        Err(e) => {
            let record = json!({
                "experiment": config.get("experiment"),
                "seed": config.u64("seed"),
                "stage": ctx.stage.get(),
                "error": e.to_string(),
            });
            if let Err(write_err) = ctx.write_json("failure.json", &record) {
                log::error!("could not write failure record: {write_err}");
            }
            Err(e)
        }
    }
}

/// Pretty-prints the summary of a finished run.
pub fn report(dir: &Path) -> Result<String> {
    let path = dir.join("summary.json");
    let failure = dir.join("failure.json");
    let (path, title) = if path.exists() {
        (path, "summary")
    } else if failure.exists() {
        (failure, "failed run")
    } else {
        return Err(Error::InvalidArgument(format!(
            "{} holds neither summary.json nor failure.json",
            dir.display()
        )));
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    let mut out = format!("{title} of {}\n", dir.display());
    render(&value, "", &mut out);
    Ok(out)
}

fn render(value: &Value, prefix: &str, out: &mut String) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                render(v, &key, out);
            }
        }
        leaf => out.push_str(&format!("  {prefix:<32} {leaf}\n")),
    }
}

// ---------------------------------------------------------------------------
// Continuous tasks

fn continuous_task(config: &RunConfig) -> ContinuousTask {
    let gamma = config.f64("env.gamma");
    let horizon = config.usize("env.horizon");
    let spec = match config.get("env.kind") {
        "point-mass" => ContinuousTaskSpec::PointMass(PointMassSpec {
            gamma,
            horizon,
            ..PointMassSpec::default()
        }),
        "pendulum" => ContinuousTaskSpec::Pendulum(PendulumSpec {
            gamma,
            horizon,
            ..PendulumSpec::default()
        }),
        other => unreachable!("{other} is not continuous"),
    };
    build_continuous_task(&spec)
}

fn continuous_behavior(task: &ContinuousTask, behavior: &str) -> Box<dyn Actor> {
    match (task, behavior) {
        (_, "random") => Box::new(RandomPolicy(task.action_space())),
        (ContinuousTask::PointMass(e), "partial") => Box::new(WaypointController::partial(&e.spec)),
        (ContinuousTask::PointMass(e), _) => Box::new(WaypointController::around_cliff(&e.spec)),
        (ContinuousTask::Pendulum(e), _) => Box::new(PendulumPd::new(&e.spec)),
    }
}

/// Dataset and fitted ensemble shared by every planning run of an experiment.
struct Prepared {
    task: ContinuousTask,
    dataset: OfflineDataset,
    ensemble: Arc<DynamicsEnsemble>,
    reports: Vec<MemberReport>,
}

fn prepare(config: &RunConfig, ctx: &Ctx, artifacts: bool) -> Result<Prepared> {
    let task = continuous_task(config);
    let seed = config.u64("seed");
    ctx.stage("dataset");
    let dataset = match config.get("dataset.path") {
        "" => {
            let behavior = continuous_behavior(&task, config.get("dataset.behavior"));
            let strategy: Strategy = config.get("dataset.strategy").parse()?;
            collect(&task, strategy, behavior.as_ref(), config.usize("dataset.n"), seed)?
        }
        path => {
            let d = dataset::load(Path::new(path))?;
            if d.state_dim() != task.state_dim() || d.action_dim() != task.action_space().dim() {
                return Err(Error::Dimension(format!(
                    "dataset {path} has state/action dims {}/{}, {} needs {}/{}",
                    d.state_dim(),
                    d.action_dim(),
                    task.name(),
                    task.state_dim(),
                    task.action_space().dim()
                )));
            }
            d
        }
    };
    if artifacts {
        dataset::save(&dataset, &ctx.path("dataset.jsonl"))?;
    }
    ctx.stage("model");
    let model_config = ModelConfig {
        hidden_layers: config.usize("model.hidden_layers"),
        width: config.usize("model.width"),
        epochs: config.usize("model.epochs"),
        step_size: config.f64("model.step_size"),
        batch_size: config.usize("model.batch_size"),
        k: config.usize("model.k"),
        seed,
    };
    let (ensemble, reports) = fit_ensemble(&dataset, &model_config)?;
    for (i, r) in reports.iter().enumerate() {
        log::info!(
            "member {i}: holdout mse {:.4e} -> {:.4e}, train mse {:.4e}",
            r.initial_holdout_mse,
            r.final_holdout_mse,
            r.final_train_mse
        );
    }
    if artifacts {
        save_ensemble(&ensemble, seed, &ctx.path("model.ckpt"))?;
    }
    Ok(Prepared {
        task,
        dataset,
        ensemble: Arc::new(ensemble),
        reports,
    })
}

fn npg_config(config: &RunConfig) -> NpgConfig {
    NpgConfig {
        n_updates: config.usize("planner.n_updates"),
        n_traj_per_update: config.usize("planner.n_traj"),
        horizon: config.usize("planner.horizon"),
        cg_iters: config.usize("planner.cg_iters"),
        cg_damping: config.f64("planner.cg_damping"),
        normalized_step_size: config.f64("planner.step_size"),
        eval_traj: config.usize("planner.eval_traj"),
        log_sigma_init: config.f64("planner.log_sigma_init"),
        log_sigma_min: config.f64("planner.log_sigma_min"),
        hidden: policy_hidden(config),
        seed: config.u64("seed"),
    }
}

fn policy_hidden(config: &RunConfig) -> Vec<usize> {
    config.f64_list("planner.hidden").iter().map(|w| *w as usize).collect()
}

fn halt_mode(config: &RunConfig) -> HaltMode {
    match config.get("pmdp.halt_mode") {
        "single-penalty" => HaltMode::SinglePenalty,
        _ => HaltMode::ExactSum,
    }
}

fn member_mode(config: &RunConfig) -> MemberMode {
    match config.get("pmdp.member_mode") {
        "mean" => MemberMode::Mean,
        _ => MemberMode::Cycle,
    }
}

fn kappa_mode(config: &RunConfig) -> KappaMode {
    match config.get("pmdp.kappa_mode") {
        "dataset" => KappaMode::Dataset {
            offset: config.f64("pmdp.kappa_offset"),
        },
        _ => KappaMode::Theory,
    }
}

struct Planned {
    calibration: Calibration,
    kappa: f64,
    policy: GaussianMlpPolicy,
    rows: Vec<CurveRow>,
}

/// Calibrates the detector, builds the P-MDP (or the unguarded model when
/// `guarded` is false), clones the behavior and runs NPG.
fn plan(config: &RunConfig, prepared: &Prepared, beta: f64, guarded: bool) -> Result<Planned> {
    let task = &prepared.task;
    let usad = EnsembleUsad::calibrate(prepared.ensemble.clone(), &prepared.dataset, beta)?;
    log::info!(
        "disc on data: mean {:.4e}, std {:.4e}, max {:.4e}; threshold {:.4e}",
        usad.calibration.mu_d,
        usad.calibration.sigma_d,
        usad.calibration.m_d,
        usad.calibration.threshold
    );
    let kappa = default_kappa(kappa_mode(config), &prepared.dataset, task.r_max())?;
    let detector: Option<Arc<dyn RolloutDetector>> = guarded.then(|| {
        Arc::new(DiscDetector {
            ensemble: usad.ensemble.clone(),
            calibration: usad.calibration.clone(),
        }) as Arc<dyn RolloutDetector>
    });
    let reward_task = task.clone();
    let reward: RewardFn = Arc::new(move |s: &[f64], a: &[f64]| reward_task.reward(s, a));
    let model_env = PessimisticRollout {
        dynamics: prepared.ensemble.clone(),
        detector,
        reward,
        action_space: task.action_space(),
        starts: StartSampler::from_dataset(&prepared.dataset)?,
        options: RolloutOptions {
            kappa,
            gamma: task.gamma(),
            r_max: task.r_max(),
            horizon: config.usize("planner.horizon"),
            halt_mode: halt_mode(config),
            member_mode: member_mode(config),
            sample_noise: config.bool("pmdp.sample_noise"),
        },
        name: format!("{}-model", task.name()),
    };
    let seed = config.u64("seed");
    let npg = npg_config(config);
    let mut init = behavior_clone_gaussian(
        &prepared.dataset,
        &BcConfig {
            hidden: npg.hidden.clone(),
            epochs: config.usize("bc.epochs"),
            step_size: config.f64("bc.step_size"),
            batch_size: config.usize("bc.batch_size"),
            log_std_init: npg.log_sigma_init,
            log_std_min: npg.log_sigma_min,
            seed,
        },
    )?;
    // Cloning shrinks the spread to the behavior's action noise, which
    // leaves too little exploration for the policy gradient.
    init.log_std.fill(npg.log_sigma_init);
    let eval_horizon = match config.usize("planner.eval_horizon") {
        0 => None,
        h => Some(h),
    };
    let (policy, rows) = train_npg(&model_env, task, init, &npg, eval_horizon)?;
    Ok(Planned {
        calibration: usad.calibration,
        kappa,
        policy,
        rows,
    })
}

fn calibration_json(c: &Calibration) -> Value {
    json!({
        "mu_d": c.mu_d,
        "sigma_d": c.sigma_d,
        "max_d": c.m_d,
        "beta": c.beta,
        "beta_max": if c.beta_max().is_finite() { json!(c.beta_max()) } else { json!("inf") },
        "threshold": c.threshold,
    })
}

/// `2 r_max / (1 - gamma)`, the width of the interval discounted values
/// can occupy.
pub fn value_range(r_max: f64, gamma: f64) -> f64 {
    2.0 * r_max / (1.0 - gamma)
}

fn final_row(rows: &[CurveRow]) -> &CurveRow {
    rows.last().expect("training always records the initial policy")
}

fn run_continuous(config: &RunConfig, ctx: &Ctx) -> Result<(Value, bool)> {
    let guarded = config.get("experiment") == "morel";
    let prepared = prepare(config, ctx, true)?;
    ctx.stage("planning");
    let planned = plan(config, &prepared, config.f64("usad.beta"), guarded)?;
    ctx.write_json(
        "calibration.json",
        &json!({
            "detector": if guarded { "ensemble-disc" } else { "disabled" },
            "calibration": calibration_json(&planned.calibration),
            "kappa": planned.kappa,
            "members": prepared.reports.iter().map(|r| json!({
                "initial_holdout_mse": r.initial_holdout_mse,
                "final_holdout_mse": r.final_holdout_mse,
                "final_train_mse": r.final_train_mse,
            })).collect::<Vec<_>>(),
        }),
    )?;
    write_curve_csv(&planned.rows, &ctx.path("curve.csv"))?;
    let policy_json = serde_json::to_string(&Policy::GaussianMlp(planned.policy)).expect("policies serialize");
    ctx.write("policy.json", &(policy_json + "\n"))?;
    let last = final_row(&planned.rows);
    let task = &prepared.task;
    Ok((
        json!({
            "experiment": config.get("experiment"),
            "env": task.name(),
            "seed": config.u64("seed"),
            "J_pmdp_final": last.pmdp_value,
            "J_true_final": last.true_value,
            "J_true_initial": planned.rows[0].true_value,
            "value_range": value_range(task.r_max(), task.gamma()),
            "iterations": last.iteration,
        }),
        false,
    ))
}

fn run_ablation(config: &RunConfig, ctx: &Ctx) -> Result<(Value, bool)> {
    let prepared = prepare(config, ctx, true)?;
    let mut table = String::from("beta,threshold,J_pmdp_final,J_true_final,frac_rollouts_halted\n");
    let mut results = Vec::new();
    for beta in config.f64_list("ablation.betas") {
        ctx.stage("planning");
        log::info!("beta = {beta}");
        let planned = plan(config, &prepared, beta, true)?;
        write_curve_csv(&planned.rows, &ctx.path(&format!("curve-beta{beta}.csv")))?;
        let last = final_row(&planned.rows);
        table.push_str(&format!(
            "{beta},{},{},{},{}\n",
            planned.calibration.threshold, last.pmdp_value, last.true_value, last.frac_rollouts_halted
        ));
        results.push(json!({
            "beta": beta,
            "threshold": planned.calibration.threshold,
            "J_pmdp_final": last.pmdp_value,
            "J_true_final": last.true_value,
        }));
    }
    ctx.write("ablation.csv", &table)?;
    Ok((
        json!({
            "experiment": "ablation-beta",
            "env": prepared.task.name(),
            "seed": config.u64("seed"),
            "results": results,
        }),
        false,
    ))
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// MOReL on datasets from each behavior, `quality.seeds` runs per behavior
/// with seeds `seed, seed + 1, ...`.
fn run_quality(config: &RunConfig, ctx: &Ctx) -> Result<(Value, bool)> {
    let base = config.u64("seed");
    let mut table = String::from("behavior,seed,J_pmdp_final,J_true_final\n");
    let mut medians = serde_json::Map::new();
    for behavior in config.word_list("quality.behaviors") {
        let mut finals = Vec::new();
        for i in 0..config.u64("quality.seeds") {
            let seed = base + i;
            log::info!("behavior {behavior}, seed {seed}");
            let c = config
                .with("dataset.behavior", &behavior)
                .with("seed", &seed.to_string());
            let prepared = prepare(&c, ctx, false)?;
            ctx.stage("planning");
            let planned = plan(&c, &prepared, c.f64("usad.beta"), true)?;
            let last = final_row(&planned.rows);
            table.push_str(&format!("{behavior},{seed},{},{}\n", last.pmdp_value, last.true_value));
            finals.push(last.true_value);
        }
        medians.insert(behavior, json!(median(&finals)));
    }
    ctx.write("quality.csv", &table)?;
    Ok((
        json!({
            "experiment": "dataset-quality",
            "env": config.get("env.kind"),
            "seed": base,
            "median_J_true_final": medians,
        }),
        false,
    ))
}

// ---------------------------------------------------------------------------
// Tabular tasks

pub fn tabular_env(config: &RunConfig) -> Result<TabularMdp> {
    let gamma = config.f64("env.gamma");
    let r_max = config.f64("env.r_max");
    match config.get("env.kind") {
        "chain" => chain(&ChainSpec {
            n_states: config.usize("env.n_states"),
            gamma,
            r_max,
            ..ChainSpec::default()
        }),
        "gridworld" => gridworld(&GridSpec {
            gamma,
            r_max,
            ..GridSpec::default()
        }),
        "random-tabular" => random_tabular(
            &RandomTabularSpec {
                n_states: config.usize("env.n_states"),
                n_actions: config.usize("env.n_actions"),
                sparsity: config.f64("env.sparsity"),
                gamma,
                r_max,
            },
            derive_seed(config.u64("seed"), "env", 0),
        ),
        other => Err(Error::InvalidArgument(format!("{other} is not a tabular task"))),
    }
}

/// Mixes the optimal policy with uniform actions, `0.7 pi* + 0.3 uniform`.
pub fn noisy_optimal(mdp: &TabularMdp) -> Result<TabularPolicy> {
    let optimal = value_iteration(mdp, &ViConfig::default())?.policy;
    let m = mdp.n_actions();
    let rows = (0..mdp.n_states())
        .map(|s| (0..m).map(|a| 0.7 * optimal.prob(s, a) + 0.3 / m as f64).collect())
        .collect();
    Ok(TabularPolicy::Stochastic(rows))
}

fn pipeline_config(config: &RunConfig, r_max: f64) -> TabularPipelineConfig {
    TabularPipelineConfig {
        n_transitions: config.usize("dataset.n"),
        episode_horizon: config.usize("env.horizon"),
        n_min: config.u64("usad.n_min"),
        oracle_alpha: (config.get("usad.mode") == "oracle").then(|| config.f64("usad.alpha")),
        kappa: match config.get("pmdp.kappa_mode") {
            // Tabular rewards lie in [-r_max, r_max].
            "dataset" => Some(config.f64("pmdp.kappa_offset") + r_max),
            _ => None,
        },
        unknown_reward: match config.get("pmdp.unknown_reward") {
            "penalty" => UnknownPairReward::Penalty,
            _ => UnknownPairReward::Base,
        },
        vi: ViConfig {
            tolerance: config.f64("planner.vi_tolerance"),
            max_iters: config.usize("planner.vi_max_iters"),
        },
        seed: config.u64("seed"),
    }
}

fn run_tabular(config: &RunConfig, ctx: &Ctx) -> Result<(Value, bool)> {
    ctx.stage("environment");
    let mdp = tabular_env(config)?;
    let behavior = match config.get("dataset.behavior") {
        "random" => TabularPolicy::uniform(mdp.n_states(), mdp.n_actions()),
        _ => noisy_optimal(&mdp)?,
    };
    ctx.stage("pipeline");
    let pipeline = pipeline_config(config, mdp.r_max());
    let run = run_tabular_pipeline(&mdp, &behavior, &pipeline)?;
    dataset::save(&run.dataset, &ctx.path("dataset.jsonl"))?;
    let counts: Vec<Vec<u64>> = (0..mdp.n_states())
        .map(|s| (0..mdp.n_actions()).map(|a| run.model.count(s, a)).collect())
        .collect();
    ctx.write_json(
        "model.json",
        &json!({ "kind": "tabular-counts", "n_states": mdp.n_states(), "n_actions": mdp.n_actions(), "visits": counts }),
    )?;
    let n_unknown = run.pmdp.unknown.iter().flatten().filter(|u| **u).count();
    ctx.write_json(
        "calibration.json",
        &json!({
            "detector": config.get("usad.mode"),
            "n_min": config.u64("usad.n_min"),
            "alpha": config.f64("usad.alpha"),
            "unknown_pairs": n_unknown,
            "kappa": run.pmdp.kappa,
        }),
    )?;
    ctx.stage("evaluation");
    let j_pmdp = exact_policy_value(&run.pmdp.mdp, &run.vi.policy)?.j;
    let j_true = exact_policy_value(&mdp, &run.policy)?.j;
    let j_behavior = exact_policy_value(&mdp, &behavior)?.j;
    let j_star = exact_policy_value(&mdp, &value_iteration(&mdp, &pipeline.vi)?.policy)?.j;
    ctx.write(
        "curve.csv",
        &format!("{CURVE_HEADER}\n{},{j_pmdp},0,{j_true},0,0,0,0\n", run.vi.iterations),
    )?;
    let policy_json = serde_json::to_string(&Policy::Tabular(run.policy.clone())).expect("policies serialize");
    ctx.write("policy.json", &(policy_json + "\n"))?;
    Ok((
        json!({
            "experiment": "morel",
            "env": config.get("env.kind"),
            "seed": config.u64("seed"),
            "J_pmdp_final": j_pmdp,
            "J_true_final": j_true,
            "J_behavior": j_behavior,
            "J_optimal": j_star,
            "epsilon_pi": run.vi.epsilon_pi,
            "value_range": value_range(mdp.r_max(), mdp.gamma()),
        }),
        false,
    ))
}

fn run_counterexample(config: &RunConfig, ctx: &Ctx) -> Result<(Value, bool)> {
    ctx.stage("pipeline");
    let spec = CounterexampleSpec {
        gamma: config.f64("env.gamma"),
        epsilon: config.f64("env.epsilon"),
        r_max: config.f64("env.r_max"),
    };
    let report = run_counterexample_experiment(&spec, &pipeline_config(config, spec.r_max))?;
    if !report.bound_holds {
        log::warn!(
            "measured suboptimality {} is below the lower-bound formula {}",
            report.suboptimality,
            report.lower_bound_value
        );
    }
    Ok((
        json!({
            "experiment": "counterexample",
            "seed": config.u64("seed"),
            "k": report.k,
            "p0": report.p0,
            "epsilon": report.epsilon,
            "J_optimal": report.j_star,
            "J_true_final": report.j_out,
            "suboptimality": report.suboptimality,
            "lower_bound_value": report.lower_bound_value,
            "d_pistar_unknown": report.d_pistar_ud,
            "epsilon_pi": report.epsilon_pi,
            "coverage_holds": report.coverage_holds,
            "bound_holds": report.bound_holds,
        }),
        false,
    ))
}

/// Improvement check on the default 5-state chain with behavior
/// `(0.3 left, 0.7 right)` everywhere, 10 seeds at each dataset size.
fn improvement_check(config: &RunConfig, ctx: &Ctx) -> Result<(Value, bool)> {
    let mdp = chain(&ChainSpec::default())?;
    let behavior = TabularPolicy::Stochastic(vec![vec![0.3, 0.7]; mdp.n_states()]);
    let n = config.usize("dataset.n");
    let grid: Vec<usize> = [n / 10, n / 3, n].into_iter().filter(|&x| x > 0).collect();
    let seeds: Vec<u64> = (0..10)
        .map(|i| derive_seed(config.u64("seed"), "improvement", i))
        .collect();
    let pipeline = TabularPipelineConfig {
        vi: ViConfig {
            tolerance: config.f64("planner.vi_tolerance"),
            max_iters: config.usize("planner.vi_max_iters"),
        },
        ..TabularPipelineConfig::default()
    };
    let rows = check_improvement(
        &mdp,
        &behavior,
        &pipeline,
        &grid,
        &seeds,
        config.f64("theory.c"),
        config.f64("theory.delta"),
    )?;
    write_improvement_csv(&rows, &ctx.path("improvement.csv"))?;
    let tolerance = 0.01 * mdp.r_max() / (1.0 - mdp.gamma());
    let largest = *grid.last().expect("nonempty grid");
    let failures = rows
        .iter()
        .filter(|r| r.n == largest && r.gap > r.epsilon_pi + tolerance)
        .count();
    Ok((
        json!({ "dataset_size": largest, "seeds": seeds.len(), "failures": failures }),
        failures > 0,
    ))
}

fn run_theory(config: &RunConfig, ctx: &Ctx) -> Result<(Value, bool)> {
    ctx.stage("value bounds");
    let instances = config.usize("theory.instances");
    let suite = run_theory_suite(instances, config.u64("seed"))?;
    write_bound_csv(&suite.value_bounds, &ctx.path("value_bounds.csv"))?;
    write_suboptimality_csv(&suite.suboptimality, &ctx.path("suboptimality.csv"))?;
    write_hitting_csv(&suite.hitting, &ctx.path("hitting_time.csv"))?;
    ctx.stage("improvement");
    let (improvement, improvement_failed) = improvement_check(config, ctx)?;
    let value_violations = suite.value_bounds.iter().filter(|r| !r.satisfied).count();
    let suboptimality_violations = suite.suboptimality.iter().filter(|r| !r.satisfied).count();
    let hitting_violations = suite.hitting.iter().filter(|r| !r.satisfied).count();
    let min_slack = suite
        .value_bounds
        .iter()
        .map(|r| r.lower_slack.min(r.upper_slack))
        .fold(f64::INFINITY, f64::min);
    let violation = !suite.all_satisfied() || improvement_failed;
    Ok((
        json!({
            "experiment": "theory-suite",
            "seed": config.u64("seed"),
            "value_bound_instances": suite.value_bounds.len(),
            "value_bound_violations": value_violations,
            "value_bound_min_slack": min_slack,
            "suboptimality_violations": suboptimality_violations,
            "hitting_time_instances": suite.hitting.len(),
            "hitting_time_violations": hitting_violations,
            "improvement": improvement,
            "all_satisfied": !violation,
        }),
        violation,
    ))
}
