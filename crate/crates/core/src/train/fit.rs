use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::backward_compiled;
use super::{accuracy, adam_step, AdamState, Batch, TrainConfig};
use crate::dgnn::{node_inputs, Classifier, CompiledModel, DgnnModel, Encoding, ForwardPass, ModelOptics, SampleInputs};
use crate::graphs::{Graph, PprTable};
use crate::photonics::{MAX_WIDTH_NM, MIN_WIDTH_NM};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInputs {
    pub inputs: SampleInputs,
    pub labels: Vec<usize>,
}

impl LabeledInputs {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: LabeledInputs,
    pub test: LabeledInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Snapshot at the epoch with the best test accuracy (earliest on ties).
    pub model: DgnnModel,
    pub last: DgnnModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl FitOutcome {
    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

fn labeled(graph: &Graph, all: &SampleInputs, ids: &[usize]) -> Result<LabeledInputs> {
    let ids: Vec<usize> = ids.iter().copied().filter(|&i| graph.labels[i].is_some()).collect();
    Ok(LabeledInputs {
        inputs: all.select(&ids)?,
        labels: ids.iter().map(|&i| graph.labels[i].unwrap()).collect(),
    })
}

/// Transductive node dataset: every node is aggregated on the full graph,
/// the masks choose which labeled nodes train and which test.
pub fn node_dataset(graph: &Graph, table: &PprTable, encoding: Encoding) -> Result<Dataset> {
    let all = node_inputs(graph, table, encoding)?;
    Ok(Dataset {
        train: labeled(graph, &all, &graph.train_ids())?,
        test: labeled(graph, &all, &graph.test_ids())?,
    })
}

fn feature_params(model: &DgnnModel) -> Vec<f64> {
    let mut out: Vec<f64> = model.heads.iter().flat_map(|p| p.widths.iter().flatten().copied()).collect();
    if let Some(r) = &model.readouts {
        out.extend(r.iter().flat_map(|p| p.widths.iter().flatten().copied()));
    }
    out
}

fn set_feature_params(model: &mut DgnnModel, values: &[f64]) {
    let mut it = values.iter();
    let readouts = model.readouts.iter_mut().flatten();
    for p in model.heads.iter_mut().chain(readouts) {
        for w in p.widths.iter_mut().flatten() {
            *w = *it.next().expect("parameter vector too short");
        }
    }
}

fn classifier_params(model: &DgnnModel) -> Vec<f64> {
    match &model.classifier {
        Classifier::Electronic(fc) => fc.weights.iter().chain(&fc.bias).copied().collect(),
        Classifier::Optical(p) => p.widths.iter().flatten().copied().collect(),
    }
}

fn set_classifier_params(model: &mut DgnnModel, values: &[f64]) {
    match &mut model.classifier {
        Classifier::Electronic(fc) => {
            let nw = fc.weights.len();
            fc.weights.copy_from_slice(&values[..nw]);
            fc.bias.copy_from_slice(&values[nw..]);
        }
        Classifier::Optical(p) => {
            for (w, v) in p.widths.iter_mut().flatten().zip(values) {
                *w = *v;
            }
        }
    }
}

fn classifier_bounds(model: &DgnnModel) -> Option<(f64, f64)> {
    match model.classifier {
        Classifier::Electronic(_) => None,
        Classifier::Optical(_) => Some((MIN_WIDTH_NM, MAX_WIDTH_NM)),
    }
}

fn run_loop(model: &DgnnModel, data: &Dataset, config: &TrainConfig, classifier_only: bool) -> Result<FitOutcome> {
    config.validate()?;
    model.validate()?;
    if data.train.is_empty() {
        return Err(Error::Domain("no labeled training samples".into()));
    }
    let optics = ModelOptics::new(model)?;
    let binary = config.binary_training;
    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut feat_state = AdamState::new(feature_params(&model).len());
    let mut cls_state = AdamState::new(classifier_params(&model).len());
    let frozen_optics = classifier_only && matches!(model.classifier, Classifier::Electronic(_));
    let mut compiled = CompiledModel::compile(&model, &optics, binary)?;
    let n_train = data.train.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, DgnnModel)> = None;

    for epoch in 1..=config.epochs {
        let batches: Vec<Vec<usize>> = match config.batch {
            Batch::Full => vec![order.clone()],
            Batch::Size(b) => {
                order.shuffle(&mut rng);
                order.chunks(b).map(<[usize]>::to_vec).collect()
            }
        };
        let mut total = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            if bi > 0 && !frozen_optics {
                compiled = CompiledModel::compile(&model, &optics, binary)?;
            }
            let full = batch.len() == n_train && config.batch == Batch::Full;
            let selected;
            let (inputs, labels): (&SampleInputs, Vec<usize>) = if full {
                (&data.train.inputs, data.train.labels.clone())
            } else {
                selected = data.train.inputs.select(batch)?;
                (&selected, batch.iter().map(|&i| data.train.labels[i]).collect())
            };
            let (grads, _) = backward_compiled(
                &model,
                &optics,
                &compiled,
                inputs,
                &labels,
                config.loss,
                config.l2_weight,
                classifier_only,
            )
            .map_err(|e| match e {
                Error::Numeric(detail) => Error::Diverged { epoch, detail },
                other => other,
            })?;
            if !grads.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("loss is {}", grads.loss),
                });
            }
            total += grads.loss * labels.len() as f64;
            if !classifier_only {
                let mut p = feature_params(&model);
                adam_step(&mut p, &grads.flat_features(), &mut feat_state, config.learning_rate, Some((MIN_WIDTH_NM, MAX_WIDTH_NM)))?;
                set_feature_params(&mut model, &p);
            }
            let mut c = classifier_params(&model);
            let bounds = classifier_bounds(&model);
            adam_step(&mut c, &grads.flat_classifier(), &mut cls_state, config.learning_rate, bounds)?;
            set_classifier_params(&mut model, &c);
        }
        if !frozen_optics {
            compiled = CompiledModel::compile(&model, &optics, binary)?;
        }
        let train_scores = ForwardPass::run(&model, &compiled, &data.train.inputs)?.scores;
        let train_acc = accuracy(&train_scores, &data.train.labels);
        let test_acc = if data.test.is_empty() {
            0.0
        } else {
            accuracy(&ForwardPass::run(&model, &compiled, &data.test.inputs)?.scores, &data.test.labels)
        };
        let record = EpochRecord {
            epoch,
            loss: total / n_train as f64,
            train_acc,
            test_acc,
        };
        history.push(record);
        let score = if data.test.is_empty() { train_acc } else { test_acc };
        if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(FitOutcome {
        model: best_model,
        last: model,
        history,
        best_epoch,
    })
}

/// Adam on every width and classifier parameter; keeps the best-epoch
/// snapshot.
pub fn fit(model: &DgnnModel, data: &Dataset, config: &TrainConfig) -> Result<FitOutcome> {
    run_loop(model, data, config, false)
}

/// [`fit`] on the masks of a transductive node-classification graph.
pub fn fit_nodes(model: &DgnnModel, graph: &Graph, table: &PprTable, config: &TrainConfig) -> Result<FitOutcome> {
    fit(model, &node_dataset(graph, table, model.encoding)?, config)
}

/// Updates only the classifier; every optical DPU stays bit-identical. Zero
/// epochs return the model unchanged.
pub fn retrain_classifier(model: &DgnnModel, data: &Dataset, config: &TrainConfig) -> Result<FitOutcome> {
    if config.epochs == 0 {
        return Ok(FitOutcome {
            model: model.clone(),
            last: model.clone(),
            history: Vec::new(),
            best_epoch: 0,
        });
    }
    run_loop(model, data, config, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgnn::{quantize_model, ClassifierKind, ModelSpec};
    use crate::graphs::{generate_sbm, label_split, normalized_adjacency, ppr_exact, topk_neighbors, SbmSpec};
    use crate::photonics::{DpuGeometry, MetaAtomLut};

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

    fn tiny_task() -> (Graph, PprTable) {
        let mut g = generate_sbm(&SbmSpec {
            n_nodes: 30,
            p: 0.4,
            q: 0.02,
            seed: 3,
            ..SbmSpec::default()
        })
        .unwrap();
        let (train, test) = label_split(&g.labels, 1, 3).unwrap();
        g.set_split(train, test).unwrap();
        let pi = ppr_exact(&normalized_adjacency(&g), 0.15).unwrap();
        (g, topk_neighbors(&pi, 2).unwrap())
    }

    fn model(kind: ClassifierKind) -> DgnnModel {
        let spec = ModelSpec {
            head_geometry: geo(3, 2),
            n_heads: 2,
            slots: 1,
            readout_geometry: None,
            classifier: kind,
            classifier_geometry: geo(1, 1),
            n_classes: 3,
            encoding: Encoding::Amplitude,
            lut: MetaAtomLut::default(),
        };
        DgnnModel::init(&spec, 9).unwrap()
    }

    #[test]
    fn one_label_per_class_overfits() {
        let (g, table) = tiny_task();
        let config = TrainConfig {
            learning_rate: 0.05,
            epochs: 300,
            ..TrainConfig::dgnn_e()
        };
        let out = fit_nodes(&model(ClassifierKind::Electronic), &g, &table, &config).unwrap();
        assert_eq!(out.history.len(), 300);
        assert_eq!(out.history.last().unwrap().train_acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (g, table) = tiny_task();
        let config = TrainConfig {
            epochs: 15,
            batch: Batch::Size(2),
            seed: 4,
            ..TrainConfig::dgnn_o()
        };
        let m = model(ClassifierKind::Optical);
        let a = fit_nodes(&m, &g, &table, &config).unwrap();
        let b = fit_nodes(&m, &g, &table, &config).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.last, b.last);
        assert_eq!(a.best().test_acc, a.history.iter().map(|r| r.test_acc).fold(0.0, f64::max));
    }

    #[test]
    fn retraining_freezes_optics() {
        let (g, table) = tiny_task();
        let data = node_dataset(&g, &table, Encoding::Amplitude).unwrap();
        for kind in [ClassifierKind::Electronic, ClassifierKind::Optical] {
            let m = quantize_model(&model(kind));
            let zero = TrainConfig {
                epochs: 0,
                ..TrainConfig::retrain()
            };
            assert_eq!(retrain_classifier(&m, &data, &zero).unwrap().model, m);
            let config = TrainConfig {
                epochs: 5,
                ..TrainConfig::retrain()
            };
            let out = retrain_classifier(&m, &data, &config).unwrap();
            assert_eq!(out.last.heads, m.heads);
            assert_ne!(out.last.classifier, m.classifier);
        }
    }

    #[test]
    fn binary_training_moves_shadow_widths() {
        let (g, table) = tiny_task();
        let config = TrainConfig {
            epochs: 3,
            binary_training: true,
            ..TrainConfig::dgnn_e()
        };
        let m = model(ClassifierKind::Electronic);
        let out = fit_nodes(&m, &g, &table, &config).unwrap();
        for (a, b) in out.last.heads.iter().zip(&m.heads) {
            assert!(a.widths.iter().flatten().zip(b.widths.iter().flatten()).any(|(x, y)| x != y));
            assert!(!a.binary);
        }
    }
}
