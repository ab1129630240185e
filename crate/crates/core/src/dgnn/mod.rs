//! Optical message passing: per-node DPU messages, Y-coupler aggregation over
//! personalized-PageRank neighborhoods, optional graph read-out, detection and
//! electronic or optical classification.

mod forward;
mod skeleton;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::photonics::{CoefficientNoise, DpuGeometry, DpuParams, MetaAtomLut};
use crate::{Error, Result};

pub use forward::{
    agg_node, argmax, detect, forward_dgnn_e, forward_dgnn_o, msg_all, node_features, node_inputs, readout_graph,
    CompiledModel, ForwardPass, ModelOptics, NodeFeatures, SampleInputs,
};
pub use skeleton::{
    frame_graph, frame_inputs, subsequence_inputs, subsequence_pipeline, SKELETON_EDGES, SKELETON_JOINTS,
};

/// How node attributes are written onto the input waveguides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// Attribute in `[0, 1]` becomes a real amplitude.
    Amplitude,
    /// Attribute in `[0, 2 pi]` becomes a unit-amplitude phase.
    Phase,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Amplitude => "amplitude",
            Encoding::Phase => "phase",
        }
    }

    pub fn range(self) -> (f64, f64) {
        match self {
            Encoding::Amplitude => (0.0, 1.0),
            Encoding::Phase => (0.0, 2.0 * PI),
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude" => Ok(Encoding::Amplitude),
            "phase" => Ok(Encoding::Phase),
            other => Err(Error::Config(format!("unknown encoding {other:?}"))),
        }
    }
}

pub fn encode_attributes(x: &[f64], encoding: Encoding) -> Result<Vec<Complex64>> {
    let (lo, hi) = encoding.range();
    x.iter()
        .map(|&v| {
            if !(lo..=hi).contains(&v) {
                return Err(Error::Domain(format!(
                    "attribute {v} outside the {} encoding range [{lo}, {hi}]",
                    encoding.name()
                )));
            }
            Ok(match encoding {
                Encoding::Amplitude => Complex64::new(v, 0.0),
                Encoding::Phase => Complex64::from_polar(1.0, v),
            })
        })
        .collect()
}

/// Fully-connected layer on detected intensities, `logits = I W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectronicFc {
    n_features: usize,
    n_classes: usize,
    /// Row-major `n_features x n_classes`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ElectronicFc {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            n_classes,
            weights: vec![0.0; n_features * n_classes],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn from_parts(n_features: usize, n_classes: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != n_features * n_classes || bias.len() != n_classes {
            return Err(Error::Shape(format!(
                "classifier expects {n_features}x{n_classes} weights and {n_classes} biases"
            )));
        }
        Ok(Self {
            n_features,
            n_classes,
            weights,
            bias,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn random<R: Rng + ?Sized>(n_features: usize, n_classes: usize, rng: &mut R) -> Self {
        let a = (6.0 / (n_features + n_classes) as f64).sqrt();
        let mut fc = Self::zeros(n_features, n_classes);
        fc.weights.iter_mut().for_each(|w| *w = rng.random_range(-a..a));
        fc
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn logits(&self, intensities: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (f, &v) in intensities.iter().enumerate() {
            let row = &self.weights[f * self.n_classes..(f + 1) * self.n_classes];
            out.iter_mut().zip(row).for_each(|(o, w)| *o += v * w);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    /// DGNN-E: detection followed by an electronic fully-connected layer.
    Electronic(ElectronicFc),
    /// DGNN-O: complex features coupled into a classifier DPU, one detector
    /// per class.
    Optical(DpuParams),
}

impl Classifier {
    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Electronic(_) => "electronic",
            Classifier::Optical(_) => "optical",
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Classifier::Electronic(fc) => fc.n_classes(),
            Classifier::Optical(p) => p.geometry.n_out,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Classifier::Electronic(fc) => fc.n_features(),
            Classifier::Optical(p) => p.geometry.n_in,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgnnModel {
    /// One DPU per head; all heads share one geometry.
    pub heads: Vec<DpuParams>,
    /// Optional per-head 2-in/2-out read-out DPUs for graph-level tasks.
    pub readouts: Option<Vec<DpuParams>>,
    pub classifier: Classifier,
    pub encoding: Encoding,
    pub lut: MetaAtomLut,
}

/// Which classifier a freshly initialized model gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Electronic,
    Optical,
}

/// Recipe for a randomly initialized model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub head_geometry: DpuGeometry,
    pub n_heads: usize,
    /// Detected slots per sample (frames for graph-level tasks, 1 for nodes).
    pub slots: usize,
    pub readout_geometry: Option<DpuGeometry>,
    pub classifier: ClassifierKind,
    /// Geometry of the classifier DPU when `classifier` is optical; its port
    /// counts are overwritten from the feature width and class count.
    pub classifier_geometry: DpuGeometry,
    pub n_classes: usize,
    pub encoding: Encoding,
    pub lut: MetaAtomLut,
}

impl DgnnModel {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        if spec.n_heads == 0 || spec.slots == 0 || spec.n_classes == 0 {
            return Err(Error::Domain("heads, slots and classes must all be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = (0..spec.n_heads)
            .map(|_| DpuParams::random(spec.head_geometry.clone(), &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let readouts = match &spec.readout_geometry {
            Some(g) => Some(
                (0..spec.n_heads)
                    .map(|_| DpuParams::random(g.clone(), &mut rng))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        let m = readouts
            .as_ref()
            .map_or(spec.head_geometry.n_out, |r| r[0].geometry.n_out);
        let n_features = spec.slots * spec.n_heads * m;
        let classifier = match spec.classifier {
            ClassifierKind::Electronic => {
                Classifier::Electronic(ElectronicFc::random(n_features, spec.n_classes, &mut rng))
            }
            ClassifierKind::Optical => {
                let geometry = DpuGeometry {
                    n_in: n_features,
                    n_out: spec.n_classes,
                    ..spec.classifier_geometry.clone()
                };
                Classifier::Optical(DpuParams::random(geometry, &mut rng)?)
            }
        };
        let model = Self {
            heads,
            readouts,
            classifier,
            encoding: spec.encoding,
            lut: spec.lut.clone(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    /// Width of the optical feature of one head after the last DPU.
    pub fn message_dim(&self) -> usize {
        match &self.readouts {
            Some(r) => r[0].geometry.n_out,
            None => self.heads[0].geometry.n_out,
        }
    }

    pub fn n_in(&self) -> usize {
        self.heads[0].geometry.n_in
    }

    /// Detected features per slot, `P * m`.
    pub fn slot_width(&self) -> usize {
        self.n_heads() * self.message_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.classifier.n_classes()
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .heads
            .first()
            .ok_or_else(|| Error::Domain("model needs at least one head".into()))?;
        for h in &self.heads {
            h.validate()?;
            if h.geometry != first.geometry {
                return Err(Error::Shape("all heads must share one geometry".into()));
            }
        }
        if let Some(r) = &self.readouts {
            if r.len() != self.heads.len() {
                return Err(Error::Shape("one read-out DPU per head required".into()));
            }
            for p in r {
                p.validate()?;
                if p.geometry.n_in != first.geometry.n_out || p.geometry != r[0].geometry {
                    return Err(Error::Shape("read-out DPUs must take the head messages as input".into()));
                }
            }
        }
        let width = self.slot_width();
        let n_features = self.classifier.n_features();
        if n_features == 0 || n_features % width != 0 {
            return Err(Error::Shape(format!(
                "classifier input {n_features} is not a multiple of the per-slot width {width}"
            )));
        }
        if let Classifier::Optical(p) = &self.classifier {
            p.validate()?;
        }
        Ok(())
    }

    /// Every DPU in the model, heads first, then read-outs, then the
    /// classifier DPU.
    pub fn dpus(&self) -> Vec<&DpuParams> {
        let mut out: Vec<&DpuParams> = self.heads.iter().collect();
        if let Some(r) = &self.readouts {
            out.extend(r.iter());
        }
        if let Classifier::Optical(p) = &self.classifier {
            out.push(p);
        }
        out
    }

    pub fn dpus_mut(&mut self) -> Vec<&mut DpuParams> {
        let mut out: Vec<&mut DpuParams> = self.heads.iter_mut().collect();
        if let Some(r) = &mut self.readouts {
            out.extend(r.iter_mut());
        }
        if let Classifier::Optical(p) = &mut self.classifier {
            out.push(p);
        }
        out
    }
}

/// Rounds every width to the nearest of {0, 100} nm (50 rounds up) and marks
/// the DPU binary.
pub fn quantize_binary(params: &DpuParams) -> DpuParams {
    let mut out = params.clone();
    for w in out.widths.iter_mut().flatten() {
        *w = crate::photonics::quantize_width(*w);
    }
    out.binary = true;
    out
}

/// Quantizes every DPU of the model.
pub fn quantize_model(model: &DgnnModel) -> DgnnModel {
    let mut out = model.clone();
    for p in out.dpus_mut() {
        *p = quantize_binary(p);
    }
    out
}

/// Adds `N(0, sigma^2)` to the phase and the amplitude of every meta-atom
/// group of every DPU. Amplitudes are clamped to `[0, max LUT amplitude]`
/// when the coefficients are evaluated. Widths are not touched.
pub fn perturb_coefficients(model: &DgnnModel, sigma: f64, seed: u64) -> Result<DgnnModel> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(model.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = model.clone();
    for p in out.dpus_mut() {
        let (layers, groups) = (p.geometry.num_layers, p.geometry.groups_per_line());
        let mut draw = || -> Vec<Vec<f64>> {
            (0..layers)
                .map(|_| (0..groups).map(|_| normal.sample(&mut rng)).collect())
                .collect()
        };
        let phase = draw();
        let amplitude = draw();
        let noise = match p.noise.take() {
            Some(prev) => CoefficientNoise {
                phase: add(&prev.phase, &phase),
                amplitude: add(&prev.amplitude, &amplitude),
            },
            None => CoefficientNoise { phase, amplitude },
        };
        p.noise = Some(noise);
    }
    Ok(out)
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_examples() {
        assert_eq!(encode_attributes(&[0.0; 3], Encoding::Amplitude).unwrap(), vec![Complex64::new(0.0, 0.0); 3]);
        let p = encode_attributes(&[0.0, PI, 2.0 * PI], Encoding::Phase).unwrap();
        for (z, e) in p.iter().zip([1.0, -1.0, 1.0]) {
            assert!((z - Complex64::new(e, 0.0)).norm() < 1e-15);
        }
        assert_eq!(
            encode_attributes(&[1.0, 0.5], Encoding::Amplitude).unwrap(),
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)]
        );
        assert!(encode_attributes(&[1.2], Encoding::Amplitude).is_err());
        assert!(encode_attributes(&[-0.1], Encoding::Phase).is_err());
    }

    fn tiny_params() -> DpuParams {
        let geo = DpuGeometry {
            atoms_per_line: 12,
            num_layers: 2,
            ..DpuGeometry::synthetic()
        };
        DpuParams::new(geo, vec![vec![49.9, 50.0, 0.0, 100.0], vec![12.0, 88.0, 50.1, 49.99]], false).unwrap()
    }

    #[test]
    fn quantization_threshold_and_idempotence() {
        let q = quantize_binary(&tiny_params());
        assert_eq!(q.widths, vec![vec![0.0, 100.0, 0.0, 100.0], vec![0.0, 100.0, 100.0, 0.0]]);
        assert!(q.binary);
        assert_eq!(quantize_binary(&q), q);
        q.validate().unwrap();
    }

    #[test]
    fn quantization_changes_only_widths_and_flag() {
        let p = tiny_params();
        let q = quantize_binary(&p);
        assert_eq!(q.geometry, p.geometry);
        assert_eq!(q.noise, p.noise);
    }

    fn tiny_model() -> DgnnModel {
        let p = tiny_params();
        DgnnModel {
            heads: vec![p.clone(), p],
            readouts: None,
            classifier: Classifier::Electronic(ElectronicFc::zeros(4, 3)),
            encoding: Encoding::Amplitude,
            lut: MetaAtomLut::default(),
        }
    }

    #[test]
    fn zero_sigma_leaves_model_unchanged() {
        let m = tiny_model();
        assert_eq!(perturb_coefficients(&m, 0.0, 1).unwrap(), m);
        assert!(perturb_coefficients(&m, -0.1, 1).is_err());
    }

    #[test]
    fn perturbation_is_seeded_and_width_preserving() {
        let m = tiny_model();
        let a = perturb_coefficients(&m, 0.3, 7).unwrap();
        let b = perturb_coefficients(&m, 0.3, 7).unwrap();
        let c = perturb_coefficients(&m, 0.3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (pa, pm) in a.heads.iter().zip(&m.heads) {
            assert_eq!(pa.widths, pm.widths);
            assert!(pa.noise.is_some());
        }
    }

    #[test]
    fn electronic_layer_examples() {
        let fc = ElectronicFc::zeros(2, 3);
        assert_eq!(fc.logits(&[0.4, 0.9]), vec![0.0; 3]);
        assert_eq!(argmax(&fc.logits(&[0.4, 0.9])), 0);
        let id = ElectronicFc::from_parts(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
        assert_eq!(id.logits(&[0.25, 3.0]), vec![0.25, 3.0]);
    }
}
