//! Run configuration: line-oriented `key = value` pairs with dotted keys.
//!
//! ```text
//! # comment
//! experiment = morel
//! env.kind   = point-mass     # trailing comments are allowed
//! seed       = 7
//! ```
//!
//! Blank lines and `#` comments are ignored. Every key must appear in
//! [`SCHEMA`]; missing optional keys take their documented defaults, some of
//! which depend on `env.kind`. Lists are comma separated.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum Kind {
    /// Free text when the slice is empty, otherwise one of the listed words.
    Word(&'static [&'static str]),
    Int,
    Float,
    Bool,
    FloatList,
    WordList(&'static [&'static str]),
}

#[derive(Clone, Copy, Debug)]
pub enum Fallback {
    Required,
    Value(&'static str),
    /// Depends on `env.kind`; see [`env_default`].
    PerEnv,
}

#[derive(Clone, Copy, Debug)]
pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: Fallback,
    pub doc: &'static str,
}

pub const EXPERIMENTS: &[&str] = &[
    "morel",
    "naive-mbrl",
    "theory-suite",
    "counterexample",
    "ablation-beta",
    "dataset-quality",
];
pub const ENV_KINDS: &[&str] = &[
    "point-mass",
    "pendulum",
    "chain",
    "gridworld",
    "random-tabular",
    "counterexample",
];
pub const BEHAVIORS: &[&str] = &["auto", "expert", "partial", "random"];
pub const STRATEGIES: &[&str] = &["Pure", "Eps-1", "Eps-3", "Gauss-1", "Gauss-3"];

const fn key(key: &'static str, kind: Kind, default: Fallback, doc: &'static str) -> KeySpec {
    KeySpec {
        key,
        kind,
        default,
        doc,
    }
}

use Fallback::{PerEnv, Required, Value};
use Kind::{Bool, Float, FloatList, Int, Word, WordList};

pub const SCHEMA: &[KeySpec] = &[
    key("experiment", Word(EXPERIMENTS), Required, "experiment kind"),
    key("seed", Int, Required, "master seed; every stream derives from it"),
    key(
        "output.dir",
        Word(&[]),
        Value("auto"),
        "output directory; auto = <root>/<experiment>-<env>-<seed>",
    ),
    key("env.kind", Word(ENV_KINDS), Required, "environment"),
    key("env.gamma", Float, PerEnv, "discount factor"),
    key("env.horizon", Int, PerEnv, "episode length for data collection"),
    key("env.n_states", Int, Value("5"), "states of chain / random-tabular"),
    key("env.n_actions", Int, Value("2"), "actions of random-tabular"),
    key("env.sparsity", Float, Value("1.0"), "row density of random-tabular"),
    key(
        "env.epsilon",
        Float,
        Value("0.01"),
        "support mismatch of the counterexample",
    ),
    key("env.r_max", Float, Value("1.0"), "reward bound of tabular tasks"),
    key(
        "dataset.behavior",
        Word(BEHAVIORS),
        Value("auto"),
        "behavior policy; auto = expert (continuous) or noisy optimal (tabular)",
    ),
    key(
        "dataset.strategy",
        Word(STRATEGIES),
        Value("Pure"),
        "collection strategy",
    ),
    key("dataset.n", Int, PerEnv, "number of transitions"),
    key(
        "dataset.path",
        Word(&[]),
        Value(""),
        "load this dataset instead of collecting",
    ),
    key(
        "model.hidden_layers",
        Int,
        Value("2"),
        "hidden layers per dynamics model",
    ),
    key("model.width", Int, Value("64"), "hidden width per dynamics model"),
    key("model.epochs", Int, Value("30"), "training epochs"),
    key("model.step_size", Float, Value("1e-3"), "Adam step size"),
    key("model.batch_size", Int, Value("256"), "minibatch size"),
    key("model.k", Int, Value("4"), "ensemble size"),
    key("usad.mode", Word(&["ensemble", "count", "oracle"]), PerEnv, "detector"),
    key(
        "usad.beta",
        Float,
        Value("4.0"),
        "ensemble threshold = mu_d + beta * sigma_d",
    ),
    key("usad.n_min", Int, Value("5"), "count detector visitation threshold"),
    key("usad.alpha", Float, Value("0.1"), "oracle detector TV tolerance"),
    key(
        "pmdp.kappa_mode",
        Word(&["theory", "dataset"]),
        Value("theory"),
        "theory: kappa = r_max; dataset: kappa = offset - r_min(D)",
    ),
    key("pmdp.kappa_offset", Float, Value("0.0"), "offset for dataset kappa"),
    key(
        "pmdp.halt_mode",
        Word(&["exact-sum", "single-penalty"]),
        Value("exact-sum"),
        "HALT accounting in rollouts",
    ),
    key(
        "pmdp.member_mode",
        Word(&["cycle", "mean"]),
        Value("cycle"),
        "ensemble member driving each rollout",
    ),
    key(
        "pmdp.sample_noise",
        Bool,
        Value("false"),
        "sample model noise in rollouts",
    ),
    key(
        "pmdp.unknown_reward",
        Word(&["base", "penalty"]),
        Value("base"),
        "tabular reward at unknown pairs",
    ),
    key(
        "planner.vi_tolerance",
        Float,
        Value("1e-8"),
        "value-iteration certificate target",
    ),
    key(
        "planner.vi_max_iters",
        Int,
        Value("100000"),
        "value-iteration sweep cap",
    ),
    key("planner.n_updates", Int, Value("200"), "NPG updates"),
    key("planner.n_traj", Int, Value("100"), "trajectories per NPG update"),
    key("planner.horizon", Int, Value("100"), "NPG rollout length"),
    key("planner.cg_iters", Int, Value("25"), "conjugate-gradient iterations"),
    key("planner.cg_damping", Float, Value("1e-4"), "Fisher damping"),
    key("planner.step_size", Float, Value("0.1"), "normalized NPG step size"),
    key(
        "planner.eval_traj",
        Int,
        Value("20"),
        "evaluation rollouts per iteration",
    ),
    key(
        "planner.eval_horizon",
        Int,
        Value("0"),
        "evaluation horizon; 0 = analytic from gamma and r_max",
    ),
    key(
        "planner.log_sigma_init",
        Float,
        Value("-1.5"),
        "policy log std after cloning",
    ),
    key("planner.log_sigma_min", Float, Value("-2.5"), "policy log std floor"),
    key("planner.hidden", FloatList, Value("32,32"), "policy hidden widths"),
    key("bc.epochs", Int, Value("20"), "behavior-cloning epochs"),
    key("bc.step_size", Float, Value("3e-3"), "behavior-cloning Adam step size"),
    key("bc.batch_size", Int, Value("64"), "behavior-cloning minibatch size"),
    key(
        "ablation.betas",
        FloatList,
        Value("0,0.5,1,2,4"),
        "beta grid for ablation-beta",
    ),
    key(
        "quality.behaviors",
        WordList(&["expert", "partial", "random"]),
        Value("partial,random"),
        "behaviors compared by dataset-quality",
    ),
    key(
        "quality.seeds",
        Int,
        Value("5"),
        "seeds per behavior for dataset-quality",
    ),
    key(
        "theory.instances",
        Int,
        Value("100"),
        "value-bound instances (hitting-time: 5x)",
    ),
    key(
        "theory.c",
        Float,
        Value("1.0"),
        "constant in the finite-sample term (reporting only)",
    ),
    key(
        "theory.delta",
        Float,
        Value("0.05"),
        "confidence in the finite-sample term (reporting only)",
    ),
];

pub fn is_continuous(env_kind: &str) -> bool {
    matches!(env_kind, "point-mass" | "pendulum")
}

/// Defaults that depend on the environment.
pub fn env_default(key: &str, env_kind: &str) -> &'static str {
    let continuous = is_continuous(env_kind);
    match (key, env_kind) {
        ("env.gamma", "point-mass" | "pendulum" | "counterexample") => "0.95",
        ("env.gamma", _) => "0.9",
        ("env.horizon", "counterexample") => "20",
        ("env.horizon", _) if continuous => "100",
        ("env.horizon", _) => "50",
        ("dataset.n", _) if continuous => "10000",
        ("dataset.n", _) => "10000",
        ("usad.mode", _) if continuous => "ensemble",
        ("usad.mode", _) => "count",
        _ => unreachable!("no environment default for {key}"),
    }
}

fn check_value(kind: Kind, value: &str) -> std::result::Result<(), String> {
    let word = |allowed: &[&str], w: &str| {
        if allowed.is_empty() || allowed.contains(&w) {
            Ok(())
        } else {
            Err(format!("`{w}` is not one of {}", allowed.join(", ")))
        }
    };
    match kind {
        Word(allowed) => word(allowed, value),
        Int => value
            .parse::<u64>()
            .map(|_| ())
            .map_err(|_| format!("expected a nonnegative integer, got `{value}`")),
        Float => match value.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(()),
            _ => Err(format!("expected a finite number, got `{value}`")),
        },
        Bool => match value {
            "true" | "false" => Ok(()),
            _ => Err(format!("expected true or false, got `{value}`")),
        },
        FloatList => value.split(',').try_for_each(|x| match x.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(()),
            _ => Err(format!("expected comma-separated numbers, got `{value}`")),
        }),
        WordList(allowed) => value.split(',').try_for_each(|w| word(allowed, w.trim())),
    }
}

/// A validated configuration with every key materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: Vec<(&'static str, String)>,
}

impl RunConfig {
    pub fn get(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("unknown configuration key {key}"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).parse().expect("validated float")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).parse().expect("validated integer")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key) == "true"
    }

    pub fn f64_list(&self, key: &str) -> Vec<f64> {
        self.get(key)
            .split(',')
            .map(|x| x.trim().parse().expect("validated list"))
            .collect()
    }

    pub fn word_list(&self, key: &str) -> Vec<String> {
        self.get(key).split(',').map(|x| x.trim().to_string()).collect()
    }

    /// Returns a copy with one value replaced (the value must be valid).
    pub fn with(&self, key: &str, value: &str) -> Self {
        let mut out = self.clone();
        let slot = out
            .values
            .iter_mut()
            .find(|(k, _)| *k == key)
            .unwrap_or_else(|| panic!("unknown configuration key {key}"));
        slot.1 = value.to_string();
        out
    }

    /// The resolved configuration in the input grammar, in schema order.
    pub fn to_text(&self) -> String {
        let width = SCHEMA.iter().map(|s| s.key.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k:width$} = {v}");
        }
        out
    }

    /// Keys whose values differ between two configurations.
    pub fn diff(&self, other: &RunConfig) -> Vec<&'static str> {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0)
            .collect()
    }
}

/// Parses and validates a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut issues = Vec::new();
    let mut given: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            issues.push(format!("line {}: expected `key = value`, got `{line}`", i + 1));
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if !SCHEMA.iter().any(|s| s.key == k) {
            issues.push(format!("{k}: unknown key (line {})", i + 1));
        } else if given.iter().any(|(g, _)| g == k) {
            issues.push(format!("{k}: duplicate key (line {})", i + 1));
        } else {
            given.push((k.to_string(), v.to_string()));
        }
    }
    let lookup = |k: &str| given.iter().find(|(g, _)| g == k).map(|(_, v)| v.clone());
    let env_kind = lookup("env.kind").filter(|k| ENV_KINDS.contains(&k.as_str()));

    let mut values = Vec::with_capacity(SCHEMA.len());
    for spec in SCHEMA {
        let value = match (lookup(spec.key), spec.default) {
            (Some(v), _) => v,
            (None, Required) => {
                issues.push(format!("{}: missing required key", spec.key));
                continue;
            }
            (None, Value(v)) => v.to_string(),
            (None, PerEnv) => match &env_kind {
                Some(kind) => env_default(spec.key, kind).to_string(),
                // Reported through env.kind itself.
                None => continue,
            },
        };
        if let Err(e) = check_value(spec.kind, &value) {
            issues.push(format!("{}: {e}", spec.key));
            continue;
        }
        values.push((spec.key, value));
    }
    if issues.is_empty() {
        let config = RunConfig { values };
        issues.extend(semantic_issues(&config));
        if issues.is_empty() {
            return Ok(config);
        }
    }
    Err(Error::Config(issues))
}

fn semantic_issues(c: &RunConfig) -> Vec<String> {
    let mut issues = Vec::new();
    let mut need = |ok: bool, msg: &str| {
        if !ok {
            issues.push(msg.to_string());
        }
    };
    let experiment = c.get("experiment");
    let env = c.get("env.kind");
    let continuous = is_continuous(env);
    let gamma = c.f64("env.gamma");
    need((0.0..1.0).contains(&gamma), "env.gamma: must lie in [0, 1)");
    need(c.u64("env.horizon") >= 1, "env.horizon: must be at least 1");
    need(c.u64("dataset.n") >= 1, "dataset.n: must be at least 1");
    need(c.u64("model.k") >= 2, "model.k: an ensemble needs at least 2 members");
    need(
        c.u64("model.width") >= 1 && c.u64("model.batch_size") >= 1,
        "model.width, model.batch_size: must be positive",
    );
    need(c.f64("model.step_size") > 0.0, "model.step_size: must be positive");
    need(c.f64("usad.beta") >= 0.0, "usad.beta: must be nonnegative");
    need(c.u64("usad.n_min") >= 1, "usad.n_min: must be at least 1");
    need(c.f64("usad.alpha") > 0.0, "usad.alpha: must be positive");
    need(c.f64("env.r_max") > 0.0, "env.r_max: must be positive");
    need(
        c.f64("planner.cg_damping") > 0.0,
        "planner.cg_damping: must be positive",
    );
    need(c.f64("planner.step_size") > 0.0, "planner.step_size: must be positive");
    need(
        c.f64("planner.vi_tolerance") > 0.0,
        "planner.vi_tolerance: must be positive",
    );
    need(
        c.u64("planner.n_traj") >= 1 && c.u64("planner.eval_traj") >= 1 && c.u64("planner.horizon") >= 1,
        "planner.n_traj, planner.eval_traj, planner.horizon: must be at least 1",
    );
    need(
        c.f64("planner.log_sigma_init") >= c.f64("planner.log_sigma_min"),
        "planner.log_sigma_init: must not be below planner.log_sigma_min",
    );
    need(
        c.f64_list("planner.hidden")
            .iter()
            .all(|w| *w >= 1.0 && w.fract() == 0.0),
        "planner.hidden: widths must be positive integers",
    );
    need(
        c.f64_list("ablation.betas").iter().all(|b| *b >= 0.0),
        "ablation.betas: must be nonnegative",
    );
    need(c.u64("quality.seeds") >= 1, "quality.seeds: must be at least 1");
    need(c.u64("theory.instances") >= 1, "theory.instances: must be at least 1");
    need(c.u64("bc.batch_size") >= 1, "bc.batch_size: must be positive");
    match experiment {
        "naive-mbrl" | "ablation-beta" | "dataset-quality" => need(
            continuous,
            &format!("experiment: {experiment} needs a continuous env.kind (point-mass or pendulum)"),
        ),
        "counterexample" => need(
            env == "counterexample",
            "experiment: counterexample needs env.kind = counterexample",
        ),
        _ => {}
    }
    if continuous {
        need(
            c.get("usad.mode") == "ensemble",
            "usad.mode: continuous tasks use the ensemble detector",
        );
        need(
            c.get("dataset.behavior") != "partial" || env == "point-mass",
            "dataset.behavior: partial is defined for point-mass only",
        );
    } else {
        need(
            c.get("usad.mode") != "ensemble",
            "usad.mode: tabular tasks use the count or oracle detector",
        );
        need(
            matches!(c.get("dataset.behavior"), "auto" | "random"),
            "dataset.behavior: tabular tasks support auto or random",
        );
    }
    issues
}
