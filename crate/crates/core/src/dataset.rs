//! Static offline datasets: collection under the standard exploration
//! strategies, normalization statistics, and the on-disk record format.
//!
//! File layout (one JSON object per line):
//!
//! ```text
//! {"version":1,"env":"point-mass","gamma":9.4999999999999996e-1,"strategy":"Pure","seed":7,"n":2,"episode_starts":true}
//! {"episode":0,"t":0,"s":[...],"a":[...],"r":...,"s_next":[...],"done":false}
//! ...
//! ```
//!
//! Floats are written with 17 significant digits so loading reproduces every
//! bit. A record with `t == 0` marks the start of an episode.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::mdp::{ActionSpace, Actor, Environment, Episode};
use crate::rng::StreamRng;
use crate::textfmt::{fmt_f64, fmt_vec};

pub const FORMAT_VERSION: u64 = 1;
pub const SIGMA_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    Pure,
    /// 40% behavior, 40% behavior with uniform actions w.p. `q`, 20% random.
    Eps(f64),
    /// 40% behavior, 40% behavior plus N(0, beta^2) action noise, 20% random.
    Gauss(f64),
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Pure => write!(f, "Pure"),
            Strategy::Eps(q) => write!(f, "Eps-{}", (q * 10.0).round()),
            Strategy::Gauss(b) => write!(f, "Gauss-{}", (b * 10.0).round()),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Pure" => Ok(Strategy::Pure),
            "Eps-1" => Ok(Strategy::Eps(0.1)),
            "Eps-3" => Ok(Strategy::Eps(0.3)),
            "Gauss-1" => Ok(Strategy::Gauss(0.1)),
            "Gauss-3" => Ok(Strategy::Gauss(0.3)),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy `{other}` (expected Pure, Eps-1, Eps-3, Gauss-1 or Gauss-3)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseMode {
    None,
    EpsUniform(f64),
    Gauss(f64),
}

/// The behavior policy with exploration noise on top.
pub struct NoisyBehavior<'a> {
    pub base: &'a dyn Actor,
    pub mode: NoiseMode,
    pub action_space: ActionSpace,
}

impl<'a> NoisyBehavior<'a> {
    pub fn new(base: &'a dyn Actor, mode: NoiseMode, action_space: ActionSpace) -> Result<Self> {
        match mode {
            NoiseMode::EpsUniform(q) if !(0.0..=1.0).contains(&q) => {
                return Err(Error::InvalidArgument(format!("q = {q} outside [0, 1]")))
            }
            NoiseMode::Gauss(b) if !(b >= 0.0) => return Err(Error::InvalidArgument(format!("beta = {b} < 0"))),
            NoiseMode::Gauss(_) if matches!(action_space, ActionSpace::Discrete(_)) => {
                return Err(Error::InvalidArgument(
                    "Gaussian action noise needs a continuous action space".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            base,
            mode,
            action_space,
        })
    }
}

impl Actor for NoisyBehavior<'_> {
    fn act(&self, s: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        match self.mode {
            NoiseMode::None => self.base.act(s, rng),
            NoiseMode::EpsUniform(q) => {
                let explore = rng.random::<f64>() < q;
                let a = self.base.act(s, rng);
                if explore {
                    self.action_space.sample(rng)
                } else {
                    a
                }
            }
            NoiseMode::Gauss(beta) => self
                .base
                .act(s, rng)
                .into_iter()
                .map(|x| {
                    let xi: f64 = StandardNormal.sample(rng);
                    x + beta * xi
                })
                .collect(),
        }
    }
}

/// Uniform random actions over the action space.
pub struct RandomPolicy(pub ActionSpace);

impl Actor for RandomPolicy {
    fn act(&self, _: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        self.0.sample(rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubPolicy {
    Behavior,
    Noisy,
    Random,
}

/// Exact transition budget of each sub-policy for a strategy.
pub fn split_counts(strategy: Strategy, n: usize) -> Vec<(SubPolicy, usize)> {
    match strategy {
        Strategy::Pure => vec![(SubPolicy::Behavior, n)],
        _ => {
            let b = (0.4 * n as f64).round() as usize;
            let noisy = (0.4 * n as f64).round() as usize;
            vec![
                (SubPolicy::Behavior, b),
                (SubPolicy::Noisy, noisy),
                (SubPolicy::Random, n - b - noisy),
            ]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub episode: u64,
    pub t: usize,
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub env: String,
    pub gamma: f64,
    pub strategy: String,
    pub seed: u64,
    pub n_transitions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mu_s: Vec<f64>,
    pub sigma_s: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub sigma_a: Vec<f64>,
    pub sigma_delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OfflineDataset {
    pub meta: DatasetMeta,
    pub transitions: Vec<Transition>,
    /// `None` when there are fewer than two transitions.
    pub stats: Option<NormStats>,
}

impl OfflineDataset {
    pub fn new(meta: DatasetMeta, transitions: Vec<Transition>) -> Self {
        let stats = compute_stats(&transitions).ok();
        Self {
            meta: DatasetMeta {
                n_transitions: transitions.len(),
                ..meta
            },
            transitions,
            stats,
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn min_reward(&self) -> Option<f64> {
        self.transitions.iter().map(|t| t.r).reduce(f64::min)
    }

    pub fn state_dim(&self) -> usize {
        self.transitions.first().map_or(0, |t| t.s.len())
    }

    pub fn action_dim(&self) -> usize {
        self.transitions.first().map_or(0, |t| t.a.len())
    }

    pub fn starts(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter().filter(|t| t.t == 0)
    }
}

/// Collects `n_transitions` transitions. Each sub-policy fills its budget
/// with whole episodes, the last one truncated to fit.
pub fn collect(
    env: &dyn Environment,
    strategy: Strategy,
    behavior: &dyn Actor,
    n_transitions: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if n_transitions == 0 {
        return Err(Error::InvalidArgument("n_transitions must be at least 1".into()));
    }
    let space = env.action_space();
    let noisy = match strategy {
        Strategy::Pure => None,
        Strategy::Eps(q) => Some(NoisyBehavior::new(behavior, NoiseMode::EpsUniform(q), space.clone())?),
        Strategy::Gauss(b) => Some(NoisyBehavior::new(behavior, NoiseMode::Gauss(b), space.clone())?),
    };
    let random = RandomPolicy(space.clone());
    let r_max = env.r_max();
    let mut transitions = Vec::with_capacity(n_transitions);
    let mut episode_index = 0u64;
    for (which, budget) in split_counts(strategy, n_transitions) {
        let actor: &dyn Actor = match which {
            SubPolicy::Behavior => behavior,
            SubPolicy::Noisy => noisy.as_ref().expect("noisy behavior for non-pure strategy"),
            SubPolicy::Random => &random,
        };
        let mut remaining = budget;
        while remaining > 0 {
            let mut episode = Episode::new(seed, "collect", episode_index);
            let mut s = env.reset(&mut episode);
            for t in 0..env.horizon().min(remaining) {
                let a = space.clip(&actor.act(&s, &mut episode.rng));
                let step = env.step(&s, &a, &mut episode);
                if !step.reward.is_finite() || step.next_state.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite {
                        trajectory: episode_index,
                        step: t,
                        what: "environment output during collection".into(),
                    });
                }
                debug_assert!(step.reward.abs() <= r_max);
                let done = step.done || step.halted;
                transitions.push(Transition {
                    episode: episode_index,
                    t,
                    s: s.clone(),
                    a,
                    r: step.reward,
                    s_next: step.next_state.clone(),
                    done,
                });
                remaining -= 1;
                s = step.next_state;
                if done {
                    break;
                }
            }
            episode_index += 1;
        }
    }
    Ok(OfflineDataset::new(
        DatasetMeta {
            env: env.name(),
            gamma: env.gamma(),
            strategy: strategy.to_string(),
            seed,
            n_transitions,
        },
        transitions,
    ))
}

fn mean_std(rows: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((v, x), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|v| (v / n).sqrt().max(SIGMA_FLOOR)).collect();
    (mean, std)
}

/// Per-dimension mean and (population) standard deviation of states,
/// actions and state deltas, with every standard deviation floored.
pub fn compute_stats(transitions: &[Transition]) -> Result<NormStats> {
    if transitions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if transitions.len() < 2 {
        return Err(Error::InvalidArgument(
            "statistics need at least two transitions".into(),
        ));
    }
    let states: Vec<&[f64]> = transitions.iter().map(|t| t.s.as_slice()).collect();
    let actions: Vec<&[f64]> = transitions.iter().map(|t| t.a.as_slice()).collect();
    let deltas: Vec<Vec<f64>> = transitions
        .iter()
        .map(|t| t.s_next.iter().zip(&t.s).map(|(b, a)| b - a).collect())
        .collect();
    let delta_refs: Vec<&[f64]> = deltas.iter().map(Vec::as_slice).collect();
    let (mu_s, sigma_s) = mean_std(&states);
    let (mu_a, sigma_a) = mean_std(&actions);
    let (_, sigma_delta) = mean_std(&delta_refs);
    Ok(NormStats {
        mu_s,
        sigma_s,
        mu_a,
        sigma_a,
        sigma_delta,
    })
}

/// Empirical start-state frequencies for a tabular dataset.
pub fn empirical_rho0(dataset: &OfflineDataset, n_states: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n_states];
    let mut total = 0usize;
    for t in dataset.starts() {
        let s = t.s[0] as usize;
        if s >= n_states {
            return Err(Error::Dimension(format!("start state {s} >= {n_states}")));
        }
        counts[s] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::NoEpisodeStarts);
    }
    Ok(counts.into_iter().map(|c| c as f64 / total as f64).collect())
}

/// Uniform resampling of recorded start states.
#[derive(Clone, Debug, PartialEq)]
pub struct StartSampler {
    pub starts: Vec<Vec<f64>>,
}

impl StartSampler {
    pub fn from_dataset(dataset: &OfflineDataset) -> Result<Self> {
        let starts: Vec<Vec<f64>> = dataset.starts().map(|t| t.s.clone()).collect();
        if starts.is_empty() {
            return Err(Error::NoEpisodeStarts);
        }
        Ok(Self { starts })
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Vec<f64> {
        self.starts[rng.random_range(0..self.starts.len())].clone()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u64,
    env: String,
    gamma: f64,
    strategy: String,
    seed: u64,
    n: usize,
    episode_starts: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    episode: u64,
    t: usize,
    s: Vec<f64>,
    a: Vec<f64>,
    r: f64,
    s_next: Vec<f64>,
    done: bool,
}

pub fn save(dataset: &OfflineDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_records(dataset, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_records(dataset: &OfflineDataset, w: &mut impl Write) -> std::io::Result<()> {
    let m = &dataset.meta;
    writeln!(
        w,
        "{{\"version\":{FORMAT_VERSION},\"env\":{},\"gamma\":{},\"strategy\":{},\"seed\":{},\"n\":{},\"episode_starts\":true}}",
        serde_json::Value::from(m.env.as_str()),
        fmt_f64(m.gamma),
        serde_json::Value::from(m.strategy.as_str()),
        m.seed,
        dataset.transitions.len()
    )?;
    for t in &dataset.transitions {
        writeln!(
            w,
            "{{\"episode\":{},\"t\":{},\"s\":{},\"a\":{},\"r\":{},\"s_next\":{},\"done\":{}}}",
            t.episode,
            t.t,
            fmt_vec(&t.s),
            fmt_vec(&t.a),
            fmt_f64(t.r),
            fmt_vec(&t.s_next),
            t.done
        )?;
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<OfflineDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let format_err = |record: usize, line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        record,
        line,
        message,
    };
    let header_line = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(format_err(0, 1, "missing header".into())),
    };
    let raw: serde_json::Value =
        serde_json::from_str(&header_line).map_err(|e| format_err(0, 1, format!("bad header: {e}")))?;
    if let Some(v) = raw.get("version").and_then(serde_json::Value::as_u64) {
        if v != FORMAT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: v,
                expected: FORMAT_VERSION,
            });
        }
    }
    let header: Header = serde_json::from_value(raw).map_err(|e| format_err(0, 1, format!("bad header: {e}")))?;
    debug_assert_eq!(header.version, FORMAT_VERSION);
    if !header.episode_starts {
        return Err(format_err(0, 1, "dataset lacks episode-start markers".into()));
    }

    let mut transitions = Vec::with_capacity(header.n);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| format_err(i, i + 2, e.to_string()))?;
        transitions.push(Transition {
            episode: rec.episode,
            t: rec.t,
            s: rec.s,
            a: rec.a,
            r: rec.r,
            s_next: rec.s_next,
            done: rec.done,
        });
    }
    if transitions.len() != header.n {
        return Err(format_err(
            transitions.len(),
            transitions.len() + 2,
            format!(
                "expected {} records, found {} (truncated file?)",
                header.n,
                transitions.len()
            ),
        ));
    }
    Ok(OfflineDataset::new(
        DatasetMeta {
            env: header.env,
            gamma: header.gamma,
            strategy: header.strategy,
            seed: header.seed,
            n_transitions: header.n,
        },
        transitions,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{chain, ChainSpec, PointMass, PointMassSpec, WaypointController};
    use crate::mdp::{TabularEnv, TabularPolicy};

    fn chain_env() -> TabularEnv {
        TabularEnv::new(chain(&ChainSpec::default()).unwrap(), 20, "chain")
    }

    fn transition(s: f64, s_next: f64, t: usize) -> Transition {
        Transition {
            episode: 0,
            t,
            s: vec![s],
            a: vec![0.0],
            r: 0.0,
            s_next: vec![s_next],
            done: false,
        }
    }

    #[test]
    fn pure_collects_exact_count_from_behavior() {
        let env = chain_env();
        let pi = TabularPolicy::Deterministic(vec![1; 5]);
        let d = collect(&env, Strategy::Pure, &pi, 1000, 3).unwrap();
        assert_eq!(d.len(), 1000);
        assert_eq!(d.meta.n_transitions, 1000);
        assert!(d.transitions.iter().all(|t| t.a == vec![1.0]));
    }

    #[test]
    fn eps_split_is_40_40_20() {
        assert_eq!(
            split_counts(Strategy::Eps(0.1), 1000),
            vec![
                (SubPolicy::Behavior, 400),
                (SubPolicy::Noisy, 400),
                (SubPolicy::Random, 200)
            ]
        );
        let env = chain_env();
        let pi = TabularPolicy::Deterministic(vec![1; 5]);
        let d = collect(&env, Strategy::Eps(0.1), &pi, 1000, 3).unwrap();
        assert_eq!(d.len(), 1000);
        // Sub-policy segments never share an episode.
        assert_ne!(d.transitions[399].episode, d.transitions[400].episode);
        assert_ne!(d.transitions[799].episode, d.transitions[800].episode);
        assert!(d.transitions[..400].iter().all(|t| t.a == vec![1.0]));
        assert!(d.transitions[800..].iter().any(|t| t.a == vec![0.0]));
    }

    #[test]
    fn gauss_noise_needs_continuous_actions() {
        let env = chain_env();
        let pi = TabularPolicy::Deterministic(vec![1; 5]);
        assert!(collect(&env, Strategy::Gauss(0.1), &pi, 100, 0).is_err());
    }

    #[test]
    fn strategy_names_round_trip() {
        for name in ["Pure", "Eps-1", "Eps-3", "Gauss-1", "Gauss-3"] {
            assert_eq!(name.parse::<Strategy>().unwrap().to_string(), name);
        }
        assert!("Eps-2".parse::<Strategy>().is_err());
    }

    #[test]
    fn stats_examples() {
        let same = vec![transition(1.0, 1.0, 0), transition(1.0, 1.0, 1)];
        let st = compute_stats(&same).unwrap();
        assert_eq!(st.sigma_s, vec![SIGMA_FLOOR]);
        assert_eq!(st.sigma_delta, vec![SIGMA_FLOOR]);
        let two = vec![transition(0.0, 1.0, 0), transition(2.0, 1.0, 1)];
        assert_eq!(compute_stats(&two).unwrap().mu_s, vec![1.0]);
        assert!(matches!(compute_stats(&[]), Err(Error::EmptyDataset)));
    }

    fn dataset_from_starts(starts: &[f64]) -> OfflineDataset {
        let transitions = starts
            .iter()
            .enumerate()
            .map(|(i, &s)| Transition {
                episode: i as u64,
                ..transition(s, s, 0)
            })
            .collect();
        OfflineDataset::new(
            DatasetMeta {
                env: "x".into(),
                gamma: 0.9,
                strategy: "Pure".into(),
                seed: 0,
                n_transitions: 0,
            },
            transitions,
        )
    }

    #[test]
    fn empirical_rho0_counts_starts() {
        assert_eq!(
            empirical_rho0(&dataset_from_starts(&[0.0, 0.0]), 2).unwrap(),
            vec![1.0, 0.0]
        );
        assert_eq!(
            empirical_rho0(&dataset_from_starts(&[0.0, 0.0, 1.0, 1.0]), 2).unwrap(),
            vec![0.5, 0.5]
        );
        let mut d = dataset_from_starts(&[0.0, 1.0]);
        d.transitions.iter_mut().for_each(|t| t.t = 3);
        assert!(matches!(empirical_rho0(&d, 2), Err(Error::NoEpisodeStarts)));
        assert!(matches!(StartSampler::from_dataset(&d), Err(Error::NoEpisodeStarts)));
    }

    #[test]
    fn save_load_round_trip_and_errors() {
        let spec = PointMassSpec::default();
        let env = PointMass::new(spec.clone());
        let ctl = WaypointController::around_cliff(&spec);
        let d = collect(&env, Strategy::Gauss(0.3), &ctl, 250, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save(&d, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.stats, d.stats);

        // Same seed, same bytes.
        let again = collect(&env, Strategy::Gauss(0.3), &ctl, 250, 9).unwrap();
        let path2 = dir.path().join("d2.jsonl");
        save(&again, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());

        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: Vec<&str> = text.lines().take(101).collect();
        std::fs::write(&path2, truncated.join("\n")).unwrap();
        match load(&path2) {
            Err(Error::Format { record, .. }) => assert_eq!(record, 100),
            other => panic!("unexpected {other:?}"),
        }

        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        std::fs::write(&path2, bumped).unwrap();
        assert!(matches!(load(&path2), Err(Error::Version { found: 2, .. })));

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[5] = lines[5].replace("\"r\":", "\"reward\":");
        std::fs::write(&path2, lines.join("\n")).unwrap();
        match load(&path2) {
            Err(Error::Format { record: 4, line: 6, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
