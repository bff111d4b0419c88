use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{monte_carlo_value, Environment};
use crate::planner::{npg_update, GaussianMlpPolicy, NpgConfig};

/// One learning-curve point. Row 0 describes the initial policy; row `k`
/// the policy after update `k` together with that update's diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    pub pmdp_value: f64,
    pub pmdp_stderr: f64,
    pub true_value: f64,
    pub true_stderr: f64,
    pub kl_step: f64,
    pub surrogate_improvement: f64,
    pub frac_rollouts_halted: f64,
}

pub const CURVE_HEADER: &str =
    "iteration,pmdp_value,pmdp_stderr,true_value,true_stderr,kl_step,surrogate_improvement,frac_rollouts_halted";

/// Runs `config.n_updates` NPG updates in `pmdp`, evaluating every iterate
/// in both the P-MDP and `true_env`. The true environment is only measured,
/// never used for learning. Evaluation reuses the same streams at every
/// iteration so successive points differ only through the policy.
pub fn train_npg(
    pmdp: &dyn Environment,
    true_env: &dyn Environment,
    init: GaussianMlpPolicy,
    config: &NpgConfig,
    eval_horizon: Option<usize>,
) -> Result<(GaussianMlpPolicy, Vec<CurveRow>)> {
    if !(config.cg_damping > 0.0) || !(config.normalized_step_size > 0.0) {
        return Err(Error::InvalidArgument(
            "cg_damping and normalized_step_size must be positive".into(),
        ));
    }
    let evaluate = |policy: &GaussianMlpPolicy| -> Result<(f64, f64, f64, f64)> {
        let p = monte_carlo_value(pmdp, policy, config.eval_traj, config.seed, "eval-pmdp", eval_horizon)?;
        let t = monte_carlo_value(
            true_env,
            policy,
            config.eval_traj,
            config.seed,
            "eval-true",
            eval_horizon,
        )?;
        Ok((p.mean, p.std_err, t.mean, t.std_err))
    };
    let mut policy = init;
    let (pv, ps, tv, ts) = evaluate(&policy)?;
    let mut rows = vec![CurveRow {
        iteration: 0,
        pmdp_value: pv,
        pmdp_stderr: ps,
        true_value: tv,
        true_stderr: ts,
        kl_step: 0.0,
        surrogate_improvement: 0.0,
        frac_rollouts_halted: 0.0,
    }];
    for k in 1..=config.n_updates {
        let (next, diag) = npg_update(&policy, pmdp, config, k)?;
        policy = next;
        let (pv, ps, tv, ts) = evaluate(&policy)?;
        log::info!(
            "iteration {k}: pmdp {pv:.4} true {tv:.4} halted {:.2} kl {:.2e}",
            diag.frac_halted,
            diag.kl_step
        );
        rows.push(CurveRow {
            iteration: k,
            pmdp_value: pv,
            pmdp_stderr: ps,
            true_value: tv,
            true_stderr: ts,
            kl_step: diag.kl_step,
            surrogate_improvement: diag.surrogate_improvement,
            frac_rollouts_halted: diag.frac_halted,
        });
    }
    Ok((policy, rows))
}

pub fn write_curve_csv(rows: &[CurveRow], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{CURVE_HEADER}").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.pmdp_value,
            r.pmdp_stderr,
            r.true_value,
            r.true_stderr,
            r.kl_step,
            r.surrogate_improvement,
            r.frac_rollouts_halted
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
