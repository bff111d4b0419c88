//! Unknown state-action detectors.
//!
//! Three forms: an oracle that compares the learned tabular model with the
//! true one (for theory checks only), a visitation-count surrogate usable
//! without the true model, and the practical ensemble-discrepancy detector
//! for continuous models.

use std::sync::Arc;

use crate::dataset::OfflineDataset;
use crate::dynamics::{DynamicsEnsemble, TabularCountModel};
use crate::error::{Error, Result};
use crate::mdp::{tv_distance, PairMask, TabularMdp};

/// A detector over a finite state-action space.
pub trait TabularDetector {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn is_unknown(&self, s: usize, a: usize) -> bool;

    fn unknown_mask(&self) -> PairMask {
        (0..self.n_states())
            .map(|s| (0..self.n_actions()).map(|a| self.is_unknown(s, a)).collect())
            .collect()
    }
}

/// Known iff the pair was visited and the learned row is within `alpha` of
/// the true row in total variation.
pub struct OracleUsad<'a> {
    true_mdp: &'a TabularMdp,
    model: &'a TabularCountModel,
    alpha: f64,
}

impl<'a> OracleUsad<'a> {
    pub fn new(true_mdp: &'a TabularMdp, model: &'a TabularCountModel, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if true_mdp.n_states() != model.n_states() || true_mdp.n_actions() != model.n_actions() {
            return Err(Error::Dimension("true MDP and learned model disagree on shape".into()));
        }
        Ok(Self { true_mdp, model, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Total variation between learned and true rows, `None` if unvisited.
    pub fn tv(&self, s: usize, a: usize) -> Option<f64> {
        self.model
            .p_hat(s, a)
            .map(|p| tv_distance(&p, self.true_mdp.transition(s, a)))
    }

    /// Largest TV distance among pairs marked known; 0 when none are.
    pub fn max_known_tv(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                if let Some(tv) = self.tv(s, a).filter(|&tv| tv <= self.alpha) {
                    worst = worst.max(tv);
                }
            }
        }
        worst
    }
}

impl TabularDetector for OracleUsad<'_> {
    fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn is_unknown(&self, s: usize, a: usize) -> bool {
        self.tv(s, a).is_none_or(|tv| tv > self.alpha)
    }
}

pub const DEFAULT_N_MIN: u64 = 5;

/// Unknown iff the pair was seen fewer than `n_min` times.
pub struct CountUsad<'a> {
    model: &'a TabularCountModel,
    n_min: u64,
}

impl<'a> CountUsad<'a> {
    pub fn new(model: &'a TabularCountModel, n_min: u64) -> Result<Self> {
        if n_min == 0 {
            return Err(Error::InvalidArgument("n_min must be at least 1".into()));
        }
        Ok(Self { model, n_min })
    }
}

impl TabularDetector for CountUsad<'_> {
    fn n_states(&self) -> usize {
        self.model.n_states()
    }

    fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    fn is_unknown(&self, s: usize, a: usize) -> bool {
        self.model.count(s, a) < self.n_min
    }
}

/// Detector backed by a fixed mask (true = unknown).
pub struct MaskUsad(pub PairMask);

impl TabularDetector for MaskUsad {
    fn n_states(&self) -> usize {
        self.0.len()
    }

    fn n_actions(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    fn is_unknown(&self, s: usize, a: usize) -> bool {
        self.0[s][a]
    }
}

/// Maximum pairwise Euclidean distance between member predictions.
pub fn disc(predictions: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, p) in predictions.iter().enumerate() {
        for q in &predictions[i + 1..] {
            let d = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            // NaN must not be swallowed by `max`.
            if d.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(d);
        }
    }
    worst
}

pub fn ensemble_disc(ensemble: &DynamicsEnsemble, s: &[f64], a: &[f64]) -> Result<f64> {
    Ok(disc(&ensemble.predict_all(s, a)?))
}

/// Discrepancy at every `(s, a)` recorded in the dataset.
pub fn dataset_discs(ensemble: &DynamicsEnsemble, dataset: &OfflineDataset) -> Result<Vec<f64>> {
    dataset
        .transitions
        .iter()
        .map(|t| ensemble_disc(ensemble, &t.s, &t.a))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    pub mu_d: f64,
    pub sigma_d: f64,
    pub m_d: f64,
    pub beta: f64,
    pub threshold: f64,
}

impl Calibration {
    /// `threshold = mu_d + beta * sigma_d` with the population standard
    /// deviation over `discs`.
    pub fn from_discs(discs: &[f64], beta: f64) -> Result<Self> {
        if discs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !(beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
        }
        if let Some(bad) = discs.iter().find(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite discrepancy {bad} on the dataset"
            )));
        }
        let n = discs.len() as f64;
        let mu_d = discs.iter().sum::<f64>() / n;
        let sigma_d = (discs.iter().map(|d| (d - mu_d).powi(2)).sum::<f64>() / n).sqrt();
        let m_d = discs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            mu_d,
            sigma_d,
            m_d,
            beta: 0.0,
            threshold: mu_d,
        }
        .with_beta(beta))
    }

    /// `(m_d - mu_d) / sigma_d`, the smallest beta covering every dataset
    /// pair; infinite when all discrepancies coincide.
    pub fn beta_max(&self) -> f64 {
        if self.sigma_d > 0.0 {
            (self.m_d - self.mu_d) / self.sigma_d
        } else {
            f64::INFINITY
        }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        if self.sigma_d == 0.0 {
            log::warn!("all dataset discrepancies are equal; threshold degenerates to mu_d");
        } else if beta > self.beta_max() {
            log::warn!("beta {beta} exceeds beta_max {}", self.beta_max());
        }
        Self {
            beta,
            threshold: self.mu_d + beta * self.sigma_d,
            ..self.clone()
        }
    }

    /// Known iff `disc <= threshold`; a non-finite discrepancy is unknown.
    pub fn is_unknown_disc(&self, d: f64) -> bool {
        !(d <= self.threshold)
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleUsad {
    pub ensemble: Arc<DynamicsEnsemble>,
    pub calibration: Calibration,
}

impl EnsembleUsad {
    pub fn calibrate(ensemble: Arc<DynamicsEnsemble>, dataset: &OfflineDataset, beta: f64) -> Result<Self> {
        let discs = dataset_discs(&ensemble, dataset)?;
        let calibration = Calibration::from_discs(&discs, beta)?;
        Ok(Self { ensemble, calibration })
    }

    pub fn disc(&self, s: &[f64], a: &[f64]) -> f64 {
        ensemble_disc(&self.ensemble, s, a).unwrap_or(f64::NAN)
    }

    pub fn is_unknown_practical(&self, s: &[f64], a: &[f64]) -> bool {
        self.calibration.is_unknown_disc(self.disc(s, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetMeta, Transition};
    use crate::dynamics::fit_tabular;
    use approx::assert_abs_diff_eq;

    fn two_state_mdp() -> TabularMdp {
        TabularMdp::new(
            vec![vec![0.0], vec![0.0]],
            vec![vec![vec![0.5, 0.5]], vec![vec![0.5, 0.5]]],
            vec![1.0, 0.0],
            0.9,
            1.0,
        )
        .unwrap()
    }

    fn model_with(next: &[usize]) -> TabularCountModel {
        let ts = next
            .iter()
            .map(|&s2| Transition {
                episode: 0,
                t: 0,
                s: vec![0.0],
                a: vec![0.0],
                r: 0.0,
                s_next: vec![s2 as f64],
                done: false,
            })
            .collect();
        let meta = DatasetMeta {
            env: "t".into(),
            gamma: 0.9,
            strategy: "Pure".into(),
            seed: 0,
            n_transitions: 0,
        };
        fit_tabular(&OfflineDataset::new(meta, ts), 2, 1).unwrap()
    }

    #[test]
    fn oracle_examples() {
        let mdp = two_state_mdp();
        let exact = model_with(&[0, 1]);
        let usad = OracleUsad::new(&mdp, &exact, 1e-9).unwrap();
        assert!(!usad.is_unknown(0, 0));
        assert!(usad.is_unknown(1, 0), "unvisited is unknown");

        let skewed = model_with(&[0, 0, 0, 1, 1]);
        let usad = OracleUsad::new(&mdp, &skewed, 0.05).unwrap();
        assert_abs_diff_eq!(usad.tv(0, 0).unwrap(), 0.1, epsilon = 1e-15);
        assert!(usad.is_unknown(0, 0));
        assert!(OracleUsad::new(&mdp, &skewed, 0.0).is_err());
    }

    #[test]
    fn count_detector_threshold() {
        let model = model_with(&[0, 1, 1]);
        assert!(!CountUsad::new(&model, 3).unwrap().is_unknown(0, 0));
        assert!(CountUsad::new(&model, 4).unwrap().is_unknown(0, 0));
        assert!(CountUsad::new(&model, 0).is_err());
    }

    #[test]
    fn disc_examples() {
        assert_eq!(disc(&[vec![1.0, 2.0], vec![1.0, 2.0]]), 0.0);
        let preds = vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![0.0, 1.0]];
        assert_eq!(disc(&preds), 5.0);
        let reordered = vec![preds[2].clone(), preds[0].clone(), preds[1].clone()];
        assert_eq!(disc(&reordered), 5.0);
        assert!(disc(&[vec![0.0], vec![f64::NAN]]).is_nan());
    }

    #[test]
    fn calibration_examples() {
        let c = Calibration::from_discs(&[1.0, 2.0, 3.0], 1.0).unwrap();
        assert_abs_diff_eq!(c.threshold, 2.0 + (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(c.with_beta(0.0).threshold, c.mu_d);
        let at_max = c.with_beta(c.beta_max());
        assert_abs_diff_eq!(at_max.threshold, c.m_d, epsilon = 1e-12);

        assert!(!c.is_unknown_disc(c.threshold));
        assert!(c.is_unknown_disc(c.threshold + 1e-12));
        assert!(c.is_unknown_disc(f64::NAN));

        let flat = Calibration::from_discs(&[0.5, 0.5], 3.0).unwrap();
        assert_eq!(flat.threshold, 0.5);
        assert!(Calibration::from_discs(&[], 1.0).is_err());
        assert!(Calibration::from_discs(&[1.0], -1.0).is_err());
    }
}
