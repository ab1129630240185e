use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backward::{backward, evaluate, ClassifierGrad};
use super::{loss_with_grad, LossKind};
use crate::dgnn::{DgnnModel, ModelOptics, SampleInputs};
use crate::photonics::{MAX_WIDTH_NM, MIN_WIDTH_NM};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Flat width indices over all DPUs (heads, read-outs, classifier DPU).
    pub indices: Vec<usize>,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `|analytic - numeric| / max(|analytic|, 1e-8)` per checked width.
    pub relative_errors: Vec<f64>,
}

impl GradCheckReport {
    pub fn checked(&self) -> usize {
        self.indices.len()
    }

    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().cloned().fold(0.0, f64::max)
    }
}

fn width_at(model: &mut DgnnModel, mut idx: usize) -> &mut f64 {
    for p in model.dpus_mut() {
        let n = p.parameter_count();
        if idx < n {
            let groups = p.geometry.groups_per_line();
            return &mut p.widths[idx / groups][idx % groups];
        }
        idx -= n;
    }
    panic!("width index out of range")
}

/// Compares analytic width gradients with central differences of step `h`
/// nm on up to `samples` randomly chosen widths. Widths within `h` of a LUT
/// breakpoint or of the width bounds are not sampled, since the one-sided
/// slopes differ there.
pub fn gradient_check(
    model: &DgnnModel,
    inputs: &SampleInputs,
    labels: &[usize],
    loss_kind: LossKind,
    samples: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if model.dpus().iter().any(|p| p.binary) {
        return Err(Error::Config("gradient check needs continuous widths".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step must be > 0, got {h}")));
    }
    let grads = backward(model, inputs, labels, loss_kind, false)?;
    let mut analytic_all = grads.flat_features();
    if let ClassifierGrad::Optical(w) = &grads.d_classifier {
        analytic_all.extend(w.iter().flatten());
    }
    let breakpoints = model.lut.widths();
    let widths: Vec<f64> = model.dpus().iter().flat_map(|p| p.widths.iter().flatten().copied()).collect();
    debug_assert_eq!(widths.len(), analytic_all.len());
    let eligible: Vec<usize> = widths
        .iter()
        .enumerate()
        .filter(|(_, &w)| {
            w - h >= MIN_WIDTH_NM && w + h <= MAX_WIDTH_NM && !breakpoints.iter().any(|b| (w - b).abs() <= h)
        })
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = sample(&mut rng, eligible.len(), samples.min(eligible.len()))
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    indices.sort_unstable();

    let optics = ModelOptics::new(model)?;
    let loss_at = |m: &DgnnModel| -> Result<f64> {
        let scores = evaluate(m, &optics, inputs, false)?;
        Ok(loss_with_grad(loss_kind, &scores, labels)?.0)
    };
    let mut work = model.clone();
    let mut report = GradCheckReport {
        indices: Vec::new(),
        analytic: Vec::new(),
        numeric: Vec::new(),
        relative_errors: Vec::new(),
    };
    for idx in indices {
        let w0 = *width_at(&mut work, idx);
        *width_at(&mut work, idx) = w0 + h;
        let up = loss_at(&work)?;
        *width_at(&mut work, idx) = w0 - h;
        let down = loss_at(&work)?;
        *width_at(&mut work, idx) = w0;
        let numeric = (up - down) / (2.0 * h);
        let analytic = analytic_all[idx];
        report.indices.push(idx);
        report.analytic.push(analytic);
        report.numeric.push(numeric);
        report.relative_errors.push((analytic - numeric).abs() / analytic.abs().max(1e-8));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgnn::{ClassifierKind, Encoding, ModelSpec};
    use crate::photonics::{DpuGeometry, MetaAtomLut};
    use num_complex::Complex64;
    use rand::Rng;

    fn geo(n_in: usize, n_out: usize) -> DpuGeometry {
        DpuGeometry {
            num_layers: 2,
            atoms_per_line: 24,
            layer_distance: 3e-6,
            n_in,
            n_out,
            pad_factor: 4,
            ..DpuGeometry::synthetic()
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = (0..5 * 3).map(|_| Complex64::new(rng.random_range(0.0..1.0), 0.0)).collect();
        let inputs = SampleInputs::new(5, 1, 3, data).unwrap();
        let labels = [0, 1, 0, 1, 1];
        let spec = ModelSpec {
            head_geometry: geo(3, 2),
            n_heads: 1,
            slots: 1,
            readout_geometry: None,
            classifier: ClassifierKind::Optical,
            classifier_geometry: geo(1, 1),
            n_classes: 2,
            encoding: Encoding::Amplitude,
            lut: MetaAtomLut::default(),
        };
        let model = DgnnModel::init(&spec, 1).unwrap();
        let report = gradient_check(&model, &inputs, &labels, LossKind::MseOnehot, 20, 1e-3, 5).unwrap();
        assert_eq!(report.checked(), 20);
        assert!(report.max_relative_error() < 1e-4, "{report:?}");
    }
}
