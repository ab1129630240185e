//! Losses, reverse-mode gradients through the optical pipeline, Adam, and the
//! training loops.

mod adam;
mod backward;
mod fit;
mod gradcheck;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use backward::{backward, backward_compiled, ClassifierGrad, GradientBundle};
pub use fit::{fit, fit_nodes, node_dataset, retrain_classifier, Dataset, EpochRecord, FitOutcome, LabeledInputs};
pub use gradcheck::{gradient_check, GradCheckReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SoftmaxCe,
    MseOnehot,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax_ce" => Ok(LossKind::SoftmaxCe),
            "mse_onehot" => Ok(LossKind::MseOnehot),
            other => Err(Error::Config(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch: Batch,
    pub loss: LossKind,
    /// Forward with binarized widths, update the continuous shadow widths.
    pub binary_training: bool,
    /// `l2_weight / 2 * |W|^2` on the electronic classifier weights.
    pub l2_weight: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub const DEFAULT_EPOCHS: usize = 3000;

    pub fn dgnn_e() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: Self::DEFAULT_EPOCHS,
            batch: Batch::Full,
            loss: LossKind::SoftmaxCe,
            binary_training: false,
            l2_weight: 0.0,
            seed: 0,
        }
    }

    pub fn dgnn_o() -> Self {
        Self {
            learning_rate: 0.1,
            loss: LossKind::MseOnehot,
            ..Self::dgnn_e()
        }
    }

    pub fn action_recognition() -> Self {
        Self {
            learning_rate: 0.005,
            batch: Batch::Size(32),
            ..Self::dgnn_e()
        }
    }

    /// Classifier re-training after quantization or perturbation.
    pub fn retrain() -> Self {
        Self {
            learning_rate: 0.1,
            ..Self::dgnn_e()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch == Batch::Size(0) {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.l2_weight >= 0.0) {
            return Err(Error::Config(format!("l2_weight must be >= 0, got {}", self.l2_weight)));
        }
        Ok(())
    }
}

fn check_labels(scores: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if scores.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} score rows for {} labels", scores.nrows(), labels.len())));
    }
    let c = scores.ncols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Domain(format!("label {bad} out of range for {c} classes")));
    }
    if labels.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    Ok(())
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_ce_with_grad(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_labels(logits, labels)?;
    let n = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[labels[i]];
        for (c, v) in row.iter().enumerate() {
            let p = (v - log_z).exp();
            grad[(i, c)] = (p - f64::from(c == labels[i])) / n;
        }
    }
    Ok((loss / n, grad))
}

pub fn loss_softmax_ce(logits: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    softmax_ce_with_grad(logits, labels).map(|(l, _)| l)
}

/// Mean over samples and detectors of `(I - onehot)^2`, with its gradient.
pub fn mse_onehot_with_grad(intensities: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    check_labels(intensities, labels)?;
    let count = intensities.len() as f64;
    let mut grad = Array2::zeros(intensities.raw_dim());
    let mut loss = 0.0;
    for ((i, c), &v) in intensities.indexed_iter() {
        let d = v - f64::from(c == labels[i]);
        loss += d * d;
        grad[(i, c)] = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}

pub fn loss_mse_onehot(intensities: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    mse_onehot_with_grad(intensities, labels).map(|(l, _)| l)
}

pub(crate) fn loss_with_grad(kind: LossKind, scores: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    match kind {
        LossKind::SoftmaxCe => softmax_ce_with_grad(scores, labels),
        LossKind::MseOnehot => mse_onehot_with_grad(scores, labels),
    }
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(scores: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = scores
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(r, &l)| crate::dgnn::argmax(&r.to_vec()) == l)
        .count();
    hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cross_entropy_examples() {
        let uniform = Array2::zeros((4, 5));
        assert!((loss_softmax_ce(&uniform, &[0, 1, 2, 4]).unwrap() - 5f64.ln()).abs() < 1e-15);
        let confident = array![[1000.0, 0.0, 0.0]];
        assert!(loss_softmax_ce(&confident, &[0]).unwrap() < 1e-12);
        let two = array![[0.0, 0.0]];
        assert!((loss_softmax_ce(&two, &[0]).unwrap() - 0.693_147_180_559_945_3).abs() < 1e-15);
        assert!(loss_softmax_ce(&two, &[2]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(loss_mse_onehot(&array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], &[0, 2]).unwrap(), 0.0);
        assert!((loss_mse_onehot(&Array2::zeros((3, 4)), &[0, 1, 3]).unwrap() - 0.25).abs() < 1e-15);
        assert!((loss_mse_onehot(&Array2::from_elem((5, 2), 0.5), &[0, 1, 1, 0, 0]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_gradients_match_differences() {
        let s = array![[0.3, -1.2, 0.8], [2.0, 0.1, -0.4]];
        let labels = [2, 0];
        for kind in [LossKind::SoftmaxCe, LossKind::MseOnehot] {
            let (_, g) = loss_with_grad(kind, &s, &labels).unwrap();
            for idx in [(0, 0), (0, 2), (1, 1)] {
                let h = 1e-6;
                let (mut up, mut dn) = (s.clone(), s.clone());
                up[idx] += h;
                dn[idx] -= h;
                let fd = (loss_with_grad(kind, &up, &labels).unwrap().0 - loss_with_grad(kind, &dn, &labels).unwrap().0)
                    / (2.0 * h);
                assert!((fd - g[idx]).abs() < 1e-8, "{kind:?} {idx:?}");
            }
        }
    }

    #[test]
    fn presets_and_validation() {
        assert_eq!(TrainConfig::dgnn_o().learning_rate, 0.1);
        assert_eq!(TrainConfig::dgnn_e().learning_rate, 0.01);
        assert_eq!(TrainConfig::action_recognition().learning_rate, 0.005);
        assert_eq!(TrainConfig::action_recognition().batch, Batch::Size(32));
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::dgnn_e()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::dgnn_e()
        };
        assert!(bad.validate().is_err());
    }
}
