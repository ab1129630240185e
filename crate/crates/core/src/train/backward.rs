use ndarray::Array2;
use num_complex::Complex64;

use super::{loss_with_grad, LossKind};
use crate::dgnn::{Classifier, CompiledModel, DgnnModel, ForwardPass, ModelOptics, SampleInputs};
use crate::linalg::CMatrix;
use crate::photonics::{DpuOptics, DpuTape};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierGrad {
    Electronic { weights: Vec<f64>, bias: Vec<f64> },
    /// `[layer][group]` width gradients of the classifier DPU.
    Optical(Vec<Vec<f64>>),
}

/// Loss and its derivatives with respect to every trainable parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub loss: f64,
    /// `[head][layer][group]`; empty when only the classifier was differentiated.
    pub d_widths: Vec<Vec<Vec<f64>>>,
    /// `[head][layer][group]` for the read-out DPUs.
    pub d_readouts: Option<Vec<Vec<Vec<f64>>>>,
    pub d_classifier: ClassifierGrad,
}

impl GradientBundle {
    /// Head then read-out width gradients, flattened in parameter order.
    pub fn flat_features(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.d_widths.iter().flatten().flatten().copied().collect();
        if let Some(r) = &self.d_readouts {
            out.extend(r.iter().flatten().flatten());
        }
        out
    }

    /// Electronic weights then bias, or classifier-DPU widths.
    pub fn flat_classifier(&self) -> Vec<f64> {
        match &self.d_classifier {
            ClassifierGrad::Electronic { weights, bias } => weights.iter().chain(bias).copied().collect(),
            ClassifierGrad::Optical(w) => w.iter().flatten().copied().collect(),
        }
    }
}

fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>, stage: impl FnOnce() -> String) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite gradient in {}", stage())))
    }
}

fn width_grads(tape: &DpuTape, optics: &DpuOptics, grad_matrix: &CMatrix, what: &str) -> Result<Vec<Vec<f64>>> {
    let coef = tape.coefficient_gradients(optics, grad_matrix)?;
    let widths = tape.width_gradients(&coef);
    for (l, row) in widths.iter().enumerate() {
        ensure_finite(row, || format!("{what} layer {l}"))?;
    }
    Ok(widths)
}

/// Forward pass, loss and reverse pass for a batch. With `classifier_only`,
/// optical feature DPUs are not differentiated.
pub fn backward_compiled(
    model: &DgnnModel,
    optics: &ModelOptics,
    compiled: &CompiledModel,
    inputs: &SampleInputs,
    labels: &[usize],
    loss_kind: LossKind,
    l2_weight: f64,
    classifier_only: bool,
) -> Result<(GradientBundle, ForwardPass)> {
    let pass = ForwardPass::run(model, compiled, inputs)?;
    if pass.scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite classifier output".into()));
    }
    let (mut loss, dscores) = loss_with_grad(loss_kind, &pass.scores, labels)?;
    let (n, f, c) = (pass.n_samples, pass.n_features, model.n_classes());
    let zero = Complex64::new(0.0, 0.0);
    let mut gz = vec![zero; n * f];

    let d_classifier = match &model.classifier {
        Classifier::Electronic(fc) => {
            let mut dw: Vec<f64> = fc.weights.iter().map(|w| l2_weight * w).collect();
            loss += 0.5 * l2_weight * fc.weights.iter().map(|w| w * w).sum::<f64>();
            let mut db = vec![0.0; c];
            for i in 0..n {
                let ds = dscores.row(i);
                db.iter_mut().zip(ds.iter()).for_each(|(b, d)| *b += d);
                for k in 0..f {
                    let z = pass.features[i * f + k];
                    let intensity = z.norm_sqr();
                    let w_row = &fc.weights[k * c..(k + 1) * c];
                    let mut d_intensity = 0.0;
                    for (cls, &d) in ds.iter().enumerate() {
                        dw[k * c + cls] += intensity * d;
                        d_intensity += d * w_row[cls];
                    }
                    gz[i * f + k] = z * (2.0 * d_intensity);
                }
            }
            ensure_finite(dw.iter().chain(&db), || "electronic classifier".into())?;
            ClassifierGrad::Electronic { weights: dw, bias: db }
        }
        Classifier::Optical(_) => {
            let tape = compiled
                .classifier
                .as_ref()
                .ok_or_else(|| Error::Shape("optical classifier was not compiled".into()))?;
            let copt = optics
                .classifier()
                .ok_or_else(|| Error::Shape("optical classifier has no optics".into()))?;
            let y = pass
                .classifier_fields
                .as_ref()
                .ok_or_else(|| Error::Shape("forward pass kept no classifier fields".into()))?;
            let mc = tape.matrix();
            let mut g_mc = CMatrix::zeros(c, f);
            for i in 0..n {
                let z = &pass.features[i * f..(i + 1) * f];
                for k in 0..c {
                    let dy = y[i * c + k] * (2.0 * dscores[(i, k)]);
                    if dy == zero {
                        continue;
                    }
                    for (j, zj) in z.iter().enumerate() {
                        g_mc[(k, j)] += dy * zj.conj();
                        gz[i * f + j] += mc[(k, j)].conj() * dy;
                    }
                }
            }
            ClassifierGrad::Optical(width_grads(tape, copt, &g_mc, "classifier DPU")?)
        }
    };

    let (d_widths, d_readouts) = if classifier_only {
        (Vec::new(), None)
    } else {
        feature_gradients(model, optics, compiled, inputs, &gz)?
    };
    Ok((
        GradientBundle {
            loss,
            d_widths,
            d_readouts,
            d_classifier,
        },
        pass,
    ))
}

type WidthGrads = Vec<Vec<Vec<f64>>>;

fn feature_gradients(
    model: &DgnnModel,
    optics: &ModelOptics,
    compiled: &CompiledModel,
    inputs: &SampleInputs,
    gz: &[Complex64],
) -> Result<(WidthGrads, Option<WidthGrads>)> {
    let (p, m, n_in) = (model.n_heads(), model.message_dim(), inputs.n_in());
    let f = inputs.slots() * p * m;
    let mut g_eff = vec![CMatrix::zeros(m, n_in); p];
    for i in 0..inputs.n_samples() {
        for s in 0..inputs.slots() {
            let x = inputs.slot(i, s);
            for (h, g) in g_eff.iter_mut().enumerate() {
                for o in 0..m {
                    let gv = gz[i * f + (s * p + h) * m + o];
                    if gv.norm_sqr() == 0.0 {
                        continue;
                    }
                    for (j, xj) in x.iter().enumerate() {
                        g[(o, j)] += gv * xj.conj();
                    }
                }
            }
        }
    }
    let mut d_heads = Vec::with_capacity(p);
    let mut d_readouts = compiled.readouts.as_ref().map(|_| Vec::with_capacity(p));
    for (h, g) in g_eff.iter().enumerate() {
        let g_head = match (&compiled.readouts, &mut d_readouts) {
            (Some(r), Some(dr)) => {
                let ropt = optics
                    .readout()
                    .ok_or_else(|| Error::Shape("read-out DPUs have no optics".into()))?;
                let g_r = g.matmul(&compiled.heads[h].matrix().adjoint());
                dr.push(width_grads(&r[h], ropt, &g_r, &format!("read-out {h}"))?);
                r[h].matrix().adjoint().matmul(g)
            }
            _ => g.clone(),
        };
        d_heads.push(width_grads(&compiled.heads[h], optics.head(), &g_head, &format!("head {h}"))?);
    }
    Ok((d_heads, d_readouts))
}

/// Gradients of the loss on `inputs` with respect to all model parameters.
/// With `binary_training` the forward pass uses binarized widths and the
/// derivative is passed straight through to the continuous widths.
pub fn backward(
    model: &DgnnModel,
    inputs: &SampleInputs,
    labels: &[usize],
    loss_kind: LossKind,
    binary_training: bool,
) -> Result<GradientBundle> {
    let optics = ModelOptics::new(model)?;
    let compiled = CompiledModel::compile(model, &optics, binary_training)?;
    backward_compiled(model, &optics, &compiled, inputs, labels, loss_kind, 0.0, false).map(|(g, _)| g)
}

/// Scores of `inputs` under `model`, without gradients.
pub(crate) fn evaluate(
    model: &DgnnModel,
    optics: &ModelOptics,
    inputs: &SampleInputs,
    binary: bool,
) -> Result<Array2<f64>> {
    let compiled = CompiledModel::compile(model, optics, binary)?;
    Ok(ForwardPass::run(model, &compiled, inputs)?.scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgnn::{ClassifierKind, ElectronicFc, Encoding, ModelSpec};
    use crate::photonics::{DpuGeometry, MetaAtomLut};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geo(n_in: usize, n_out: usize) -> DpuGeometry {
        DpuGeometry {
            num_layers: 2,
            atoms_per_line: 30,
            layer_distance: 4e-6,
            n_in,
            n_out,
            pad_factor: 4,
            ..DpuGeometry::synthetic()
        }
    }

    fn spec(kind: ClassifierKind) -> ModelSpec {
        ModelSpec {
            head_geometry: geo(3, 2),
            n_heads: 2,
            slots: 1,
            readout_geometry: None,
            classifier: kind,
            classifier_geometry: geo(1, 1),
            n_classes: 3,
            encoding: Encoding::Amplitude,
            lut: MetaAtomLut::default(),
        }
    }

    fn random_inputs(n: usize, seed: u64) -> (SampleInputs, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * 3).map(|_| Complex64::new(rng.random_range(0.0..1.0), 0.0)).collect();
        let labels = (0..n).map(|i| i % 3).collect();
        (SampleInputs::new(n, 1, 3, data).unwrap(), labels)
    }

    #[test]
    fn zero_inputs_give_zero_width_gradients() {
        let model = DgnnModel::init(&spec(ClassifierKind::Electronic), 2).unwrap();
        let inputs = SampleInputs::new(4, 1, 3, vec![Complex64::new(0.0, 0.0); 12]).unwrap();
        let g = backward(&model, &inputs, &[0, 1, 2, 0], LossKind::SoftmaxCe, false).unwrap();
        assert!(g.flat_features().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn electronic_gradient_matches_closed_form() {
        let model = DgnnModel::init(&spec(ClassifierKind::Electronic), 4).unwrap();
        let (inputs, labels) = random_inputs(7, 1);
        let g = backward(&model, &inputs, &labels, LossKind::SoftmaxCe, false).unwrap();
        let optics = ModelOptics::new(&model).unwrap();
        let compiled = CompiledModel::compile(&model, &optics, false).unwrap();
        let feats = compiled.features(&inputs).unwrap();
        let Classifier::Electronic(fc) = &model.classifier else { unreachable!() };
        let (f, c, n) = (4, 3, 7);
        let mut dw = vec![0.0; f * c];
        let mut db = vec![0.0; c];
        for i in 0..n {
            let inten: Vec<f64> = feats[i * f..(i + 1) * f].iter().map(|z| z.norm_sqr()).collect();
            let logits = fc.logits(&inten);
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            for k in 0..c {
                let delta = logits[k].exp() / z - if k == labels[i] { 1.0 } else { 0.0 };
                db[k] += delta / n as f64;
                for j in 0..f {
                    dw[j * c + k] += delta * inten[j] / n as f64;
                }
            }
        }
        let ClassifierGrad::Electronic { weights, bias } = &g.d_classifier else { unreachable!() };
        for (a, b) in weights.iter().chain(bias).zip(dw.iter().chain(&db)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn l2_adds_weight_decay_term() {
        let mut model = DgnnModel::init(&spec(ClassifierKind::Electronic), 4).unwrap();
        model.classifier = Classifier::Electronic(ElectronicFc::from_parts(4, 3, vec![0.5; 12], vec![0.0; 3]).unwrap());
        let (inputs, labels) = random_inputs(5, 2);
        let optics = ModelOptics::new(&model).unwrap();
        let compiled = CompiledModel::compile(&model, &optics, false).unwrap();
        let run = |l2| backward_compiled(&model, &optics, &compiled, &inputs, &labels, LossKind::SoftmaxCe, l2, true).unwrap().0;
        let (a, b) = (run(0.0), run(0.1));
        assert!((b.loss - a.loss - 0.5 * 0.1 * 12.0 * 0.25).abs() < 1e-12);
        for (x, y) in a.flat_classifier()[..12].iter().zip(&b.flat_classifier()[..12]) {
            assert!((y - x - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_through_forward_sees_only_quantized_widths() {
        let model = DgnnModel::init(&spec(ClassifierKind::Electronic), 6).unwrap();
        let mut nudged = model.clone();
        for w in nudged.heads.iter_mut().flat_map(|p| p.widths.iter_mut().flatten()) {
            *w = if *w >= 50.0 { (*w + 100.0) / 2.0 } else { *w / 2.0 };
        }
        let (inputs, labels) = random_inputs(6, 3);
        let optics = ModelOptics::new(&model).unwrap();
        let a = evaluate(&model, &optics, &inputs, true).unwrap();
        let b = evaluate(&nudged, &optics, &inputs, true).unwrap();
        assert_eq!(a, b);
        let c = evaluate(&nudged, &optics, &inputs, false).unwrap();
        assert_ne!(a, c);
        let g = backward(&model, &inputs, &labels, LossKind::SoftmaxCe, true).unwrap();
        assert!(g.flat_features().iter().any(|v| *v != 0.0));
    }
}
