use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dgnn::{encode_attributes, ClassifierKind, DgnnModel, Encoding, ModelSpec, SampleInputs};
use crate::photonics::{DpuGeometry, MetaAtomLut};
use crate::train::{gradient_check, GradCheckReport, LossKind};
use crate::Result;

/// Shape of a randomly generated model for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckCase {
    pub classifier: ClassifierKind,
    pub readout: bool,
    pub encoding: Encoding,
    pub loss: LossKind,
    pub slots: usize,
}

fn small(n_in: usize, n_out: usize) -> DpuGeometry {
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

/// Two-head model on 2-layer, 24-atom DPUs with six random encoded samples
/// over three classes; checks `samples` widths with step `h`.
pub fn random_gradcheck(case: &GradcheckCase, samples: usize, h: f64, seed: u64) -> Result<GradCheckReport> {
    let spec = ModelSpec {
        head_geometry: small(3, 2),
        n_heads: 2,
        slots: case.slots,
        readout_geometry: case.readout.then(|| small(2, 2)),
        classifier: case.classifier,
        classifier_geometry: small(1, 1),
        n_classes: 3,
        encoding: case.encoding,
        lut: MetaAtomLut::new(
            vec![0.0, 25.0, 50.0, 75.0, 100.0],
            vec![0.0, 0.3, 0.8, 1.2, 1.55],
            vec![1.0, 0.95, 0.9, 0.93, 0.97],
        )?,
    };
    let model = DgnnModel::init(&spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let n = 6;
    let (lo, hi) = case.encoding.range();
    let mut data: Vec<Complex64> = Vec::with_capacity(n * case.slots * 3);
    for _ in 0..n * case.slots {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(lo..hi)).collect();
        data.extend(encode_attributes(&x, case.encoding)?);
    }
    let inputs = SampleInputs::new(n, case.slots, 3, data)?;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    gradient_check(&model, &inputs, &labels, case.loss, samples, h, seed)
}
