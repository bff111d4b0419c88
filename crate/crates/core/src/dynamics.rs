//! Dynamics models learned from an offline dataset.
//!
//! Tabular: maximum-likelihood counts, with unvisited pairs left without a
//! distribution. Continuous: an ensemble of residual Gaussian MLP models,
//!
//! ```text
//! f(s, a) = s + sigma_delta * net((s - mu_s) / sigma_s, (a - mu_a) / sigma_a)
//! ```
//!
//! trained by minimizing squared error on normalized state deltas (maximum
//! likelihood under the fixed diagonal noise covariance).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

use crate::dataset::{NormStats, OfflineDataset, Transition};
use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, Adam, AdamState, Mlp};
use crate::rng::{substream, StreamRng};
use crate::textfmt::fmt_vec;

#[derive(Clone, Debug, PartialEq)]
pub struct TabularCountModel {
    n_states: usize,
    n_actions: usize,
    counts: Vec<Vec<Vec<u64>>>,
    n_sa: Vec<Vec<u64>>,
    reward_sum: Vec<Vec<f64>>,
}

impl TabularCountModel {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.n_sa[s][a]
    }

    pub fn counts(&self, s: usize, a: usize) -> &[u64] {
        &self.counts[s][a]
    }

    pub fn visited(&self, s: usize, a: usize) -> bool {
        self.n_sa[s][a] > 0
    }

    /// Empirical conditional distribution, or `None` for an unvisited pair.
    pub fn p_hat(&self, s: usize, a: usize) -> Option<Vec<f64>> {
        let n = self.n_sa[s][a];
        (n > 0).then(|| self.counts[s][a].iter().map(|&c| c as f64 / n as f64).collect())
    }

    /// Mean observed reward, or `None` for an unvisited pair.
    pub fn r_hat(&self, s: usize, a: usize) -> Option<f64> {
        let n = self.n_sa[s][a];
        (n > 0).then(|| self.reward_sum[s][a] / n as f64)
    }
}

pub fn fit_tabular(dataset: &OfflineDataset, n_states: usize, n_actions: usize) -> Result<TabularCountModel> {
    let mut model = TabularCountModel {
        n_states,
        n_actions,
        counts: vec![vec![vec![0; n_states]; n_actions]; n_states],
        n_sa: vec![vec![0; n_actions]; n_states],
        reward_sum: vec![vec![0.0; n_actions]; n_states],
    };
    for (i, t) in dataset.transitions.iter().enumerate() {
        let (s, a, s2) = (t.s[0] as usize, t.a[0] as usize, t.s_next[0] as usize);
        if s >= n_states || s2 >= n_states || a >= n_actions {
            return Err(Error::Dimension(format!(
                "transition {i} ({s},{a},{s2}) outside the table"
            )));
        }
        model.counts[s][a][s2] += 1;
        model.n_sa[s][a] += 1;
        model.reward_sum[s][a] += t.r;
    }
    Ok(model)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMlpModel {
    pub net: Mlp,
    pub stats: NormStats,
    /// Per-dimension standard deviation of the sampling noise.
    pub noise_std: Vec<f64>,
}

impl GaussianMlpModel {
    /// Noise covariance fixed at `(0.5 sigma_delta)^2` per dimension.
    pub fn new(net: Mlp, stats: NormStats) -> Self {
        let noise_std = stats.sigma_delta.iter().map(|s| 0.5 * s).collect();
        Self { net, stats, noise_std }
    }

    pub fn state_dim(&self) -> usize {
        self.stats.mu_s.len()
    }

    pub fn action_dim(&self) -> usize {
        self.stats.mu_a.len()
    }

    fn normalized_input(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let st = &self.stats;
        s.iter()
            .zip(&st.mu_s)
            .zip(&st.sigma_s)
            .map(|((x, m), sd)| (x - m) / sd)
            .chain(a.iter().zip(&st.mu_a).zip(&st.sigma_a).map(|((x, m), sd)| (x - m) / sd))
            .collect()
    }

    fn check_input(&self, s: &[f64], a: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() || a.len() != self.action_dim() {
            return Err(Error::Dimension(format!(
                "model expects ({}, {}) inputs, got ({}, {})",
                self.state_dim(),
                self.action_dim(),
                s.len(),
                a.len()
            )));
        }
        if s.iter().chain(a).any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite model input s={s:?} a={a:?}"
            )));
        }
        Ok(())
    }

    /// Mean next state.
    pub fn predict(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check_input(s, a)?;
        let out = self.net.forward(&self.normalized_input(s, a));
        Ok(s.iter()
            .zip(&out)
            .zip(&self.stats.sigma_delta)
            .map(|((x, d), sd)| x + sd * d)
            .collect())
    }

    /// Mean plus diagonal Gaussian noise.
    pub fn sample(&self, s: &[f64], a: &[f64], rng: &mut StreamRng) -> Result<Vec<f64>> {
        let mut mean = self.predict(s, a)?;
        for (m, sd) in mean.iter_mut().zip(&self.noise_std) {
            if *sd > 0.0 {
                let xi: f64 = StandardNormal.sample(rng);
                *m += sd * xi;
            }
        }
        Ok(mean)
    }

    fn target(&self, t: &Transition) -> Vec<f64> {
        t.s_next
            .iter()
            .zip(&t.s)
            .zip(&self.stats.sigma_delta)
            .map(|((b, a), sd)| (b - a) / sd)
            .collect()
    }

    /// Mean squared error on normalized deltas, averaged over samples and
    /// dimensions.
    pub fn mse(&self, batch: &[&Transition]) -> f64 {
        let mut total = 0.0;
        for t in batch {
            let out = self.net.forward(&self.normalized_input(&t.s, &t.a));
            total += out
                .iter()
                .zip(self.target(t))
                .map(|(y, z)| (y - z) * (y - z))
                .sum::<f64>();
        }
        total / (batch.len() * self.state_dim()) as f64
    }

    /// Loss and its gradient with respect to the network parameters.
    pub fn mse_with_grad(&self, batch: &[&Transition]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.net.n_params()];
        let mut total = 0.0;
        let scale = 1.0 / (batch.len() * self.state_dim()) as f64;
        for t in batch {
            let cache = self.net.forward_cached(&self.normalized_input(&t.s, &t.a));
            let err: Vec<f64> = cache.output().iter().zip(self.target(t)).map(|(y, z)| y - z).collect();
            total += err.iter().map(|e| e * e).sum::<f64>();
            let d_out: Vec<f64> = err.iter().map(|e| 2.0 * e * scale).collect();
            self.net.backward(&cache, &d_out, &mut grad);
        }
        (total * scale, grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsEnsemble {
    members: Vec<GaussianMlpModel>,
}

impl DynamicsEnsemble {
    pub fn new(members: Vec<GaussianMlpModel>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let first = &members[0];
        if members
            .iter()
            .any(|m| m.net.sizes() != first.net.sizes() || m.stats != first.stats)
        {
            return Err(Error::InvalidArgument(
                "ensemble members must share architecture and normalization".into(),
            ));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[GaussianMlpModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn predict_all(&self, s: &[f64], a: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.members.iter().map(|m| m.predict(s, a)).collect()
    }

    pub fn predict_mean(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let preds = self.predict_all(s, a)?;
        let k = preds.len() as f64;
        let mut mean = vec![0.0; s.len()];
        for p in &preds {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x / k;
            }
        }
        Ok(mean)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 2,
            width: 512,
            epochs: 300,
            step_size: 5e-4,
            batch_size: 256,
            k: 4,
            seed: 0,
        }
    }
}

pub const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct MemberReport {
    pub initial_holdout_mse: f64,
    pub final_holdout_mse: f64,
    pub final_train_mse: f64,
}

fn layer_sizes(state_dim: usize, action_dim: usize, config: &ModelConfig) -> Vec<usize> {
    let mut sizes = vec![state_dim + action_dim];
    sizes.extend(std::iter::repeat_n(config.width, config.hidden_layers));
    sizes.push(state_dim);
    sizes
}

/// Trains `config.k` members on the first 90% of the transitions, each with
/// its own initialization and minibatch order, and reports held-out error on
/// the last 10%.
pub fn fit_ensemble(dataset: &OfflineDataset, config: &ModelConfig) -> Result<(DynamicsEnsemble, Vec<MemberReport>)> {
    if config.k < 2 {
        return Err(Error::InvalidArgument(format!(
            "an ensemble needs at least 2 members, got k = {}",
            config.k
        )));
    }
    if config.batch_size == 0 || dataset.len() < config.batch_size {
        return Err(Error::InvalidArgument(format!(
            "dataset of {} transitions is smaller than batch size {}",
            dataset.len(),
            config.batch_size
        )));
    }
    let stats = dataset.stats.clone().ok_or(Error::EmptyDataset)?;
    let n_hold = ((dataset.len() as f64 * HOLDOUT_FRACTION).round() as usize).clamp(1, dataset.len() - 1);
    let n_train = dataset.len() - n_hold;
    let train: Vec<&Transition> = dataset.transitions[..n_train].iter().collect();
    let holdout: Vec<&Transition> = dataset.transitions[n_train..].iter().collect();
    let sizes = layer_sizes(dataset.state_dim(), dataset.action_dim(), config);
    let adam = Adam::new(config.step_size);

    let mut members = Vec::with_capacity(config.k);
    let mut reports = Vec::with_capacity(config.k);
    for i in 0..config.k {
        let mut init_rng = substream(config.seed, "dynamics-init", i as u64);
        let mut order_rng = substream(config.seed, "dynamics-batches", i as u64);
        let mut model = GaussianMlpModel::new(Mlp::new(&sizes, Activation::Relu, &mut init_rng), stats.clone());
        let initial = model.mse(&holdout);
        let mut state = AdamState::new(model.net.n_params());
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut batch = Vec::with_capacity(config.batch_size);
        for epoch in 0..config.epochs {
            order.shuffle(&mut order_rng);
            for (b, chunk) in order.chunks(config.batch_size).enumerate() {
                batch.clear();
                batch.extend(chunk.iter().map(|&j| train[j]));
                let (loss, grad) = model.mse_with_grad(&batch);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged {
                        member: i,
                        epoch,
                        batch: b,
                        loss,
                    });
                }
                adam_step(model.net.params_mut(), &grad, &mut state, &adam);
            }
            log::debug!("dynamics member {i} epoch {epoch}");
        }
        reports.push(MemberReport {
            initial_holdout_mse: initial,
            final_holdout_mse: model.mse(&holdout),
            final_train_mse: model.mse(&train),
        });
        members.push(model);
    }
    Ok((DynamicsEnsemble::new(members)?, reports))
}

pub const CHECKPOINT_VERSION: u64 = 1;

pub fn save_ensemble(ensemble: &DynamicsEnsemble, seed: u64, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let m0 = &ensemble.members[0];
    let st = &m0.stats;
    let activation = match m0.net.activation() {
        Activation::Relu => "relu",
        Activation::Tanh => "tanh",
    };
    writeln!(
        w,
        "{{\"version\":{CHECKPOINT_VERSION},\"kind\":\"gaussian-mlp-ensemble\",\"sizes\":{:?},\"activation\":\"{activation}\",\"k\":{},\"seed\":{seed},\"mu_s\":{},\"sigma_s\":{},\"mu_a\":{},\"sigma_a\":{},\"sigma_delta\":{},\"noise_std\":{}}}",
        m0.net.sizes(),
        ensemble.len(),
        fmt_vec(&st.mu_s),
        fmt_vec(&st.sigma_s),
        fmt_vec(&st.mu_a),
        fmt_vec(&st.sigma_a),
        fmt_vec(&st.sigma_delta),
        fmt_vec(&m0.noise_std),
    )
    .map_err(io)?;
    for (i, m) in ensemble.members.iter().enumerate() {
        writeln!(w, "{{\"member\":{i},\"params\":{}}}", fmt_vec(m.net.params())).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    version: u64,
    kind: String,
    sizes: Vec<usize>,
    activation: String,
    k: usize,
    seed: u64,
    mu_s: Vec<f64>,
    sigma_s: Vec<f64>,
    mu_a: Vec<f64>,
    sigma_a: Vec<f64>,
    sigma_delta: Vec<f64>,
    noise_std: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMember {
    member: usize,
    params: Vec<f64>,
}

/// Loads an ensemble and the seed it was trained with.
pub fn load_ensemble(path: &Path) -> Result<(DynamicsEnsemble, u64)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(path, e))?;
    let err = |record: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        record,
        line: record + 1,
        message,
    };
    let header: CheckpointHeader =
        serde_json::from_str(lines.first().ok_or_else(|| err(0, "empty checkpoint".into()))?)
            .map_err(|e| err(0, e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            path: path.to_path_buf(),
            found: header.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let activation = match (header.kind.as_str(), header.activation.as_str()) {
        ("gaussian-mlp-ensemble", "relu") => Activation::Relu,
        ("gaussian-mlp-ensemble", "tanh") => Activation::Tanh,
        (k, a) => return Err(err(0, format!("unsupported checkpoint kind {k}/{a}"))),
    };
    let stats = NormStats {
        mu_s: header.mu_s,
        sigma_s: header.sigma_s,
        mu_a: header.mu_a,
        sigma_a: header.sigma_a,
        sigma_delta: header.sigma_delta,
    };
    let mut members = Vec::with_capacity(header.k);
    for i in 0..header.k {
        let line = lines
            .get(i + 1)
            .ok_or_else(|| err(i + 1, format!("missing member {i} (truncated checkpoint?)")))?;
        let rec: CheckpointMember = serde_json::from_str(line).map_err(|e| err(i + 1, e.to_string()))?;
        if rec.member != i {
            return Err(err(i + 1, format!("expected member {i}, found {}", rec.member)));
        }
        let net = Mlp::from_params(&header.sizes, activation, rec.params)
            .ok_or_else(|| err(i + 1, "parameter count does not match architecture".into()))?;
        members.push(GaussianMlpModel {
            net,
            stats: stats.clone(),
            noise_std: header.noise_std.clone(),
        });
    }
    Ok((DynamicsEnsemble::new(members)?, header.seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DatasetMeta;
    use crate::rng::stream;
    use rand::Rng;

    fn meta() -> DatasetMeta {
        DatasetMeta {
            env: "test".into(),
            gamma: 0.9,
            strategy: "Pure".into(),
            seed: 0,
            n_transitions: 0,
        }
    }

    fn tabular_transition(s: usize, a: usize, s2: usize, r: f64) -> Transition {
        Transition {
            episode: 0,
            t: 1,
            s: vec![s as f64],
            a: vec![a as f64],
            r,
            s_next: vec![s2 as f64],
            done: false,
        }
    }

    #[test]
    fn count_model_ratios() {
        let mut ts = vec![tabular_transition(0, 0, 1, 1.0); 3];
        ts.push(tabular_transition(0, 0, 0, 0.0));
        let model = fit_tabular(&OfflineDataset::new(meta(), ts), 2, 2).unwrap();
        assert_eq!(model.p_hat(0, 0).unwrap(), vec![0.25, 0.75]);
        assert_eq!(model.r_hat(0, 0), Some(0.75));
        assert!(model.p_hat(0, 1).is_none());
        assert!(!model.visited(1, 0));
    }

    /// 1-D linear system `s' = 0.9 s + 0.1 a + noise`.
    pub(crate) fn linear_dataset(n: usize, seed: u64) -> OfflineDataset {
        let mut rng = stream(seed, "linear");
        let ts = (0..n)
            .map(|i| {
                let s: f64 = rng.random_range(-2.0..2.0);
                let a: f64 = rng.random_range(-1.0..1.0);
                let xi: f64 = StandardNormal.sample(&mut rng);
                Transition {
                    episode: i as u64,
                    t: 0,
                    s: vec![s],
                    a: vec![a],
                    r: 0.0,
                    s_next: vec![0.9 * s + 0.1 * a + 0.001 * xi],
                    done: false,
                }
            })
            .collect();
        OfflineDataset::new(meta(), ts)
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            width: 16,
            epochs: 30,
            step_size: 3e-3,
            batch_size: 64,
            k: 2,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn ensemble_learns_linear_dynamics() {
        let data = linear_dataset(5000, 1);
        let (ens, reports) = fit_ensemble(&data, &small_config()).unwrap();
        for r in &reports {
            assert!(r.final_holdout_mse <= r.initial_holdout_mse);
            assert!(r.final_holdout_mse < 0.01, "{r:?}");
        }
        assert_ne!(ens.members()[0].net.params(), ens.members()[1].net.params());
    }

    #[test]
    fn ensemble_training_is_deterministic() {
        let data = linear_dataset(600, 2);
        let cfg = ModelConfig {
            epochs: 3,
            ..small_config()
        };
        let (a, _) = fit_ensemble(&data, &cfg).unwrap();
        let (b, _) = fit_ensemble(&data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn k_below_two_is_rejected() {
        let data = linear_dataset(300, 3);
        let cfg = ModelConfig { k: 1, ..small_config() };
        assert!(matches!(fit_ensemble(&data, &cfg), Err(Error::InvalidArgument(_))));
        let big = ModelConfig {
            batch_size: 1000,
            ..small_config()
        };
        assert!(fit_ensemble(&data, &big).is_err());
    }

    #[test]
    fn zero_network_predicts_identity_and_zero_noise_samples_mean() {
        let data = linear_dataset(50, 4);
        let stats = data.stats.clone().unwrap();
        let mut model = GaussianMlpModel::new(Mlp::zeros(&[2, 8, 8, 1], Activation::Relu), stats);
        assert_eq!(model.predict(&[1.5], &[0.3]).unwrap(), vec![1.5]);
        model.noise_std = vec![0.0];
        assert_eq!(model.sample(&[1.5], &[0.3], &mut stream(0, "x")).unwrap(), vec![1.5]);
        assert!(model.predict(&[f64::NAN], &[0.0]).is_err());
        assert!(model.predict(&[0.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let data = linear_dataset(300, 6);
        let cfg = ModelConfig {
            epochs: 2,
            ..small_config()
        };
        let (ens, _) = fit_ensemble(&data, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_ensemble(&ens, cfg.seed, &path).unwrap();
        let (back, seed) = load_ensemble(&path).unwrap();
        assert_eq!(back, ens);
        assert_eq!(seed, cfg.seed);
    }
}
