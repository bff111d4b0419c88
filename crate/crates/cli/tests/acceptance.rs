//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so every line is printed even when an earlier check fails; the
//! process exits nonzero if any check fails.
//!
//! The two learning-curve checks train on the point-mass task and take
//! several minutes in an optimized build.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use morel::dataset::{collect, Strategy, Transition};
use morel::dynamics::{fit_ensemble, GaussianMlpModel, ModelConfig};
use morel::envs::{chain, ChainSpec, CounterexampleSpec, PointMass, PointMassSpec, WaypointController};
use morel::mdp::TabularPolicy;
use morel::nn::{Activation, Mlp};
use morel::planner::GaussianMlpPolicy;
use morel::rng::stream;
use morel::runner::{load_config, parse_config, run, RunConfig};
use morel::theory::{check_improvement, run_counterexample_experiment, run_theory_suite, TabularPipelineConfig};
use morel::usad::ensemble_disc;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            out.pass = false;
            out.detail
                .push_str(&format!("; exceeded the {} s limit", limit.as_secs()));
        }
    }
    println!(
        "{} {name}: {} [{:.1} s]",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    out.pass
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn curve(dir: &Path) -> Vec<(f64, f64)> {
    fs::read_to_string(dir.join("curve.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[1], f[3])
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `grad` and central differences of `f`.
fn fd_error(params: &[f64], grad: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let h = 1e-5;
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let x = p[i];
        p[i] = x + h;
        let up = f(&p);
        p[i] = x - h;
        let down = f(&p);
        p[i] = x;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
    }
    worst
}

fn gradient_checks() -> Outcome {
    let mut rng = stream(0, "acceptance-gradients");
    let (mut worst_model, mut worst_policy): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let ds = rng.random_range(1..=3);
        let da = rng.random_range(1..=2);
        let width = rng.random_range(3..=8);
        let hidden = rng.random_range(1..=2);
        let mut sizes = vec![ds + da];
        sizes.extend(std::iter::repeat_n(width, hidden));
        sizes.push(ds);
        let batch: Vec<Transition> = (0..6)
            .map(|i| {
                let s: Vec<f64> = (0..ds).map(|_| rng.random_range(-1.0..1.0)).collect();
                Transition {
                    episode: i,
                    t: 0,
                    a: (0..da).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    s_next: s.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect(),
                    s,
                    r: 0.0,
                    done: false,
                }
            })
            .collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let stats = morel::dataset::compute_stats(&batch).unwrap();
        let model = GaussianMlpModel::new(Mlp::new(&sizes, Activation::Relu, &mut rng), stats);
        let (_, grad) = model.mse_with_grad(&refs);
        let mut probe = model.clone();
        worst_model = worst_model.max(fd_error(model.net.params(), &grad, |p| {
            probe.net.params_mut().copy_from_slice(p);
            probe.mse(&refs)
        }));

        let mut policy = GaussianMlpPolicy::new(
            vec![0.1; ds],
            vec![0.8; ds],
            da,
            &vec![width; hidden],
            -0.3,
            -5.0,
            &mut rng,
        )
        .unwrap();
        let s: Vec<f64> = (0..ds).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..da).map(|_| rng.random_range(-1.0..1.0)).collect();
        let grad = policy.grad_log_prob(&s, &a);
        let params = policy.params();
        worst_policy = worst_policy.max(fd_error(&params, &grad, |p| {
            policy.set_params(p);
            policy.log_prob(&s, &a)
        }));
    }
    Outcome {
        pass: worst_model < 1e-4 && worst_policy < 1e-4,
        detail: format!(
            "max relative error {worst_model:.2e} (model loss), {worst_policy:.2e} (policy log-prob) over 20 networks each"
        ),
    }
}

fn ood_separation() -> Outcome {
    let c = parse_config("experiment = morel\nseed = 0\nenv.kind = point-mass\n").unwrap();
    let env = PointMass::new(PointMassSpec::default());
    let expert = WaypointController::around_cliff(&env.spec);
    let train = collect(&env, Strategy::Pure, &expert, 10_000, 0).unwrap();
    let held_out = collect(&env, Strategy::Pure, &expert, 1_000, 1).unwrap();
    let (ensemble, _) = fit_ensemble(
        &train,
        &ModelConfig {
            hidden_layers: c.usize("model.hidden_layers"),
            width: c.usize("model.width"),
            epochs: c.usize("model.epochs"),
            step_size: c.f64("model.step_size"),
            batch_size: c.usize("model.batch_size"),
            k: c.usize("model.k"),
            seed: 0,
        },
    )
    .unwrap();
    let in_support = held_out
        .transitions
        .iter()
        .map(|t| ensemble_disc(&ensemble, &t.s, &t.a).unwrap())
        .sum::<f64>()
        / held_out.len() as f64;
    let mut rng = stream(0, "acceptance-ood");
    let far = (0..1000)
        .map(|_| {
            let s = [
                rng.random_range(4.0..8.0),
                rng.random_range(-6.0..-3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ];
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            ensemble_disc(&ensemble, &s, &a).unwrap()
        })
        .sum::<f64>()
        / 1000.0;
    Outcome {
        pass: far > in_support,
        detail: format!("mean disc {far:.4e} on far states vs {in_support:.4e} on held-out data"),
    }
}

fn run_curves(config: &RunConfig, root: &Path) -> (PathBuf, f64) {
    let out = run(config, root).unwrap();
    let range = out.summary["value_range"].as_f64().unwrap();
    (out.dir, range)
}

fn pessimism_transfer(root: &Path) -> Outcome {
    let morel = load_config(&configs_dir().join("point-mass-morel.conf")).unwrap();
    let naive = load_config(&configs_dir().join("point-mass-naive.conf")).unwrap();
    if morel.diff(&naive) != vec!["experiment"] {
        return Outcome {
            pass: false,
            detail: format!("configs differ in {:?}", morel.diff(&naive)),
        };
    }
    let (dm, range) = run_curves(&morel, root);
    let (dn, _) = run_curves(&naive, root);
    let margin = 0.1 * range;
    let rows = curve(&dm);
    let held = rows.iter().filter(|(p, t)| *p <= t + margin).count();
    let frac = held as f64 / rows.len() as f64;
    let naive_rows = curve(&dn);
    let excess = naive_rows.iter().map(|(p, t)| p - t).fold(f64::NEG_INFINITY, f64::max);
    let over = naive_rows.iter().filter(|(p, t)| p - t > margin).count();
    Outcome {
        pass: frac >= 0.95 && over >= 1,
        detail: format!(
            "pessimistic value within margin {margin} at {held}/{} iterations ({:.1}%); unguarded model overshoots at {over} iterations, max excess {excess:.3}",
            rows.len(),
            100.0 * frac
        ),
    }
}

fn dataset_quality(root: &Path) -> Outcome {
    let c = load_config(&configs_dir().join("point-mass-quality.conf")).unwrap();
    let out = run(&c, root).unwrap();
    let medians = &out.summary["median_J_true_final"];
    let (partial, random) = (
        medians["partial"].as_f64().unwrap(),
        medians["random"].as_f64().unwrap(),
    );
    Outcome {
        pass: partial > random,
        detail: format!("median final true value {partial:.4} (partial behavior) vs {random:.4} (random behavior)"),
    }
}

fn determinism(root: &Path) -> Outcome {
    let texts = [
        "experiment = morel\nseed = 3\nenv.kind = point-mass\ndataset.n = 2000\nmodel.epochs = 5\nplanner.n_updates = 5\nplanner.n_traj = 10\nplanner.eval_horizon = 60\n",
        "experiment = morel\nseed = 3\nenv.kind = random-tabular\nenv.n_states = 8\nenv.n_actions = 3\n",
        "experiment = theory-suite\nseed = 3\nenv.kind = random-tabular\ntheory.instances = 20\n",
    ];
    let mut compared = 0;
    for (i, text) in texts.iter().enumerate() {
        let c = parse_config(text).unwrap();
        let a = run(&c.with("output.dir", &format!("det{i}-a")), root).unwrap().dir;
        let b = run(&c.with("output.dir", &format!("det{i}-b")), root).unwrap().dir;
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            if !name.to_string_lossy().ends_with(".csv") {
                continue;
            }
            if fs::read(a.join(&name)).unwrap() != fs::read(b.join(&name)).unwrap() {
                return Outcome {
                    pass: false,
                    detail: format!("{} differs between identical runs", name.to_string_lossy()),
                };
            }
            compared += 1;
        }
    }
    Outcome {
        pass: compared > 0,
        detail: format!("{compared} metrics CSVs byte-identical across repeated runs"),
    }
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut all = true;

    let start = Instant::now();
    let suite = run_theory_suite(100, 0).unwrap();
    let suite_time = start.elapsed();
    let bound_violations = suite.value_bounds.iter().filter(|r| !r.satisfied).count();
    let min_slack = suite
        .value_bounds
        .iter()
        .map(|r| r.lower_slack.min(r.upper_slack))
        .fold(f64::INFINITY, f64::min);
    all &= check(
        "value bounds on 100 random tabular instances",
        Some(Duration::from_secs(60)),
        || Outcome {
            pass: bound_violations == 0 && suite_time < Duration::from_secs(60),
            detail: format!(
                "{bound_violations} violations, smallest slack {min_slack:.3e} (tolerance 1e-8); suite took {:.2} s",
                suite_time.as_secs_f64()
            ),
        },
    );
    all &= check(
        "hitting-time bound on 500 random instances",
        Some(Duration::from_secs(30)),
        || {
            let violations = suite.hitting.iter().filter(|r| !r.satisfied).count();
            let worst = suite
                .hitting
                .iter()
                .map(|r| r.lhs - r.rhs)
                .fold(f64::NEG_INFINITY, f64::max);
            Outcome {
                pass: suite.hitting.len() == 500 && violations == 0 && suite_time < Duration::from_secs(30),
                detail: format!(
                    "{violations} violations over {} instances, largest lhs - rhs {worst:.3e} (tolerance 1e-10)",
                    suite.hitting.len()
                ),
            }
        },
    );
    all &= check("lower-bound construction", Some(Duration::from_secs(10)), || {
        let spec = CounterexampleSpec {
            gamma: 0.95,
            epsilon: 0.01,
            r_max: 1.0,
        };
        let config = TabularPipelineConfig {
            episode_horizon: 20,
            ..TabularPipelineConfig::default()
        };
        let r = run_counterexample_experiment(&spec, &config).unwrap();
        Outcome {
            pass: r.d_pistar_ud <= 0.01 && r.suboptimality >= 0.333,
            detail: format!(
                "optimal-policy mass on unknown pairs {:.5} (needs <= 0.01), suboptimality {:.5} (needs >= 0.333, formula {:.5})",
                r.d_pistar_ud, r.suboptimality, r.lower_bound_value
            ),
        }
    });
    all &= check(
        "improvement over behavior on a 5-state chain",
        Some(Duration::from_secs(60)),
        || {
            let mdp = chain(&ChainSpec::default()).unwrap();
            let behavior = TabularPolicy::Stochastic(vec![vec![0.3, 0.7]; mdp.n_states()]);
            let seeds: Vec<u64> = (0..10).collect();
            let rows = check_improvement(
                &mdp,
                &behavior,
                &TabularPipelineConfig::default(),
                &[10_000],
                &seeds,
                1.0,
                0.05,
            )
            .unwrap();
            let tolerance = 0.01 * mdp.r_max() / (1.0 - mdp.gamma());
            let passed = rows.iter().filter(|r| r.gap <= r.epsilon_pi + tolerance).count();
            let worst = rows.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max);
            Outcome {
            pass: passed == rows.len(),
            detail: format!(
                "{passed}/{} seeds satisfy J(out) >= J(behavior) - eps_pi - {tolerance:.2}; J(behavior) = {:.4}, largest J(behavior) - J(out) {worst:.4}",
                rows.len(),
                rows[0].j_behavior
            ),
        }
        },
    );
    all &= check("suboptimality accounting on the same 100 instances", None, || {
        let violations = suite.suboptimality.iter().filter(|r| !r.satisfied).count();
        let min = suite
            .suboptimality
            .iter()
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min);
        Outcome {
            pass: suite.suboptimality.len() == 100 && violations == 0,
            detail: format!("{violations} violations, smallest slack {min:.3e} (tolerance 1e-8)"),
        }
    });
    all &= check("gradient checks", Some(Duration::from_secs(30)), gradient_checks);
    all &= check(
        "pessimism transfer on point-mass",
        Some(Duration::from_secs(15 * 60)),
        || pessimism_transfer(root.path()),
    );
    all &= check(
        "dataset quality direction on point-mass",
        Some(Duration::from_secs(30 * 60)),
        || dataset_quality(root.path()),
    );
    all &= check("out-of-distribution separation", None, ood_separation);
    all &= check("determinism", None, || determinism(root.path()));

    if !all {
        std::process::exit(1);
    }
}
