use ndarray::Array2;
use num_complex::Complex64;

use super::{Classifier, DgnnModel, Encoding};
use crate::graphs::{Graph, PprTable};
use crate::linalg::CMatrix;
use crate::photonics::{aggregate_tree_vectors, DpuOptics, DpuTape};
use crate::{Error, Result};

/// Aggregated optical inputs, `[sample][slot][n_in]` row-major.
///
/// Every DPU is linear in its input field, so aggregating encoded inputs
/// with the coupler tree and then applying the DPU matrix equals applying
/// the DPU to each neighbor and aggregating the messages.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInputs {
    n_samples: usize,
    slots: usize,
    n_in: usize,
    data: Vec<Complex64>,
}

impl SampleInputs {
    pub fn new(n_samples: usize, slots: usize, n_in: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n_samples * slots * n_in {
            return Err(Error::Shape(format!(
                "{} values for {n_samples} samples x {slots} slots x {n_in} inputs",
                data.len()
            )));
        }
        Ok(Self {
            n_samples,
            slots,
            n_in,
            data,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn slot(&self, sample: usize, slot: usize) -> &[Complex64] {
        let start = (sample * self.slots + slot) * self.n_in;
        &self.data[start..start + self.n_in]
    }

    /// Subset of samples in the given order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let width = self.slots * self.n_in;
        let mut data = Vec::with_capacity(ids.len() * width);
        for &i in ids {
            if i >= self.n_samples {
                return Err(Error::NodeOutOfRange {
                    id: i,
                    n_nodes: self.n_samples,
                    context: "sample selection".into(),
                });
            }
            data.extend_from_slice(&self.data[i * width..(i + 1) * width]);
        }
        Self::new(ids.len(), self.slots, self.n_in, data)
    }

    /// Samples of every part, in order. Parts must agree in slots and inputs.
    pub fn concat(parts: &[SampleInputs]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        if parts.iter().any(|p| p.slots != first.slots || p.n_in != first.n_in) {
            return Err(Error::Shape("concatenated inputs differ in slots or width".into()));
        }
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Self::new(parts.iter().map(|p| p.n_samples).sum(), first.slots, first.n_in, data)
    }
}

fn encoded_rows(graph: &Graph, encoding: Encoding) -> Result<Vec<Vec<Complex64>>> {
    graph
        .attributes
        .rows()
        .into_iter()
        .map(|row| super::encode_attributes(&row.to_vec(), encoding))
        .collect()
}

/// Coupler-tree aggregate of the encoded attributes over each node's top-k
/// PPR neighbors, in table order. One slot per node.
pub fn node_inputs(graph: &Graph, table: &PprTable, encoding: Encoding) -> Result<SampleInputs> {
    if table.n_nodes() != graph.n_nodes() {
        return Err(Error::Shape("PPR table and graph disagree on node count".into()));
    }
    let encoded = encoded_rows(graph, encoding)?;
    let mut data = Vec::with_capacity(graph.n_nodes() * graph.n_attrs());
    for v in 0..graph.n_nodes() {
        let group: Vec<&Vec<Complex64>> = table.neighbors(v).iter().map(|&u| &encoded[u]).collect();
        data.extend(aggregate_tree_vectors(&group)?);
    }
    SampleInputs::new(graph.n_nodes(), 1, graph.n_attrs(), data)
}

/// Field-propagation operators for every DPU geometry in a model.
#[derive(Debug)]
pub struct ModelOptics {
    head: DpuOptics,
    readout: Option<DpuOptics>,
    classifier: Option<DpuOptics>,
}

impl ModelOptics {
    pub fn new(model: &DgnnModel) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            head: DpuOptics::new(&model.heads[0].geometry)?,
            readout: match &model.readouts {
                Some(r) => Some(DpuOptics::new(&r[0].geometry)?),
                None => None,
            },
            classifier: match &model.classifier {
                Classifier::Optical(p) => Some(DpuOptics::new(&p.geometry)?),
                Classifier::Electronic(_) => None,
            },
        })
    }

    pub fn head(&self) -> &DpuOptics {
        &self.head
    }

    pub fn readout(&self) -> Option<&DpuOptics> {
        self.readout.as_ref()
    }

    pub fn classifier(&self) -> Option<&DpuOptics> {
        self.classifier.as_ref()
    }
}

/// Transfer matrices of every DPU in a model, with the tapes needed for the
/// reverse pass.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub heads: Vec<DpuTape>,
    pub readouts: Option<Vec<DpuTape>>,
    pub classifier: Option<DpuTape>,
    /// Per head, `R_h M_h` (or `M_h` without read-out).
    effective: Vec<CMatrix>,
}

impl CompiledModel {
    /// With `quantize_forward`, every DPU is evaluated at binarized widths.
    pub fn compile(model: &DgnnModel, optics: &ModelOptics, quantize_forward: bool) -> Result<Self> {
        let heads = model
            .heads
            .iter()
            .map(|p| optics.head.transfer(p, &model.lut, quantize_forward))
            .collect::<Result<Vec<_>>>()?;
        let readouts = match (&model.readouts, &optics.readout) {
            (Some(r), Some(o)) => Some(
                r.iter()
                    .map(|p| o.transfer(p, &model.lut, quantize_forward))
                    .collect::<Result<Vec<_>>>()?,
            ),
            (None, None) => None,
            _ => return Err(Error::Shape("optics built for a different model".into())),
        };
        let classifier = match (&model.classifier, &optics.classifier) {
            (Classifier::Optical(p), Some(o)) => Some(o.transfer(p, &model.lut, quantize_forward)?),
            (Classifier::Electronic(_), None) => None,
            _ => return Err(Error::Shape("optics built for a different model".into())),
        };
        let effective = heads
            .iter()
            .enumerate()
            .map(|(h, t)| match &readouts {
                Some(r) => r[h].matrix().matmul(t.matrix()),
                None => t.matrix().clone(),
            })
            .collect();
        Ok(Self {
            heads,
            readouts,
            classifier,
            effective,
        })
    }

    pub fn effective(&self, head: usize) -> &CMatrix {
        &self.effective[head]
    }

    /// Complex features, `[sample][slot][head][m]` row-major.
    pub fn features(&self, inputs: &SampleInputs) -> Result<Vec<Complex64>> {
        let n_in = self.effective[0].cols();
        if inputs.n_in() != n_in {
            return Err(Error::Shape(format!(
                "inputs carry {} values per slot, the heads take {n_in}",
                inputs.n_in()
            )));
        }
        let mut out = Vec::with_capacity(inputs.n_samples() * inputs.slots() * self.slot_width());
        for i in 0..inputs.n_samples() {
            for s in 0..inputs.slots() {
                let x = inputs.slot(i, s);
                for m in &self.effective {
                    out.extend(m.matvec(x));
                }
            }
        }
        Ok(out)
    }

    pub fn slot_width(&self) -> usize {
        self.effective.len() * self.effective[0].rows()
    }
}

/// Everything the forward pass produced for a batch of samples.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub n_samples: usize,
    pub n_features: usize,
    /// `n_samples x n_features` complex features.
    pub features: Vec<Complex64>,
    /// Classifier-DPU output fields, `n_samples x n_classes` (DGNN-O only).
    pub classifier_fields: Option<Vec<Complex64>>,
    /// Logits (DGNN-E) or detected class intensities (DGNN-O).
    pub scores: Array2<f64>,
}

impl ForwardPass {
    pub fn run(model: &DgnnModel, compiled: &CompiledModel, inputs: &SampleInputs) -> Result<Self> {
        let features = compiled.features(inputs)?;
        let n = inputs.n_samples();
        let n_features = inputs.slots() * compiled.slot_width();
        if n_features != model.classifier.n_features() {
            return Err(Error::Shape(format!(
                "{n_features} features but the classifier takes {}",
                model.classifier.n_features()
            )));
        }
        let c = model.n_classes();
        let mut scores = Array2::zeros((n, c));
        let mut classifier_fields = None;
        match &model.classifier {
            Classifier::Electronic(fc) => {
                for i in 0..n {
                    let intensities = detect(&features[i * n_features..(i + 1) * n_features]);
                    for (k, v) in fc.logits(&intensities).into_iter().enumerate() {
                        scores[(i, k)] = v;
                    }
                }
            }
            Classifier::Optical(_) => {
                let tape = compiled
                    .classifier
                    .as_ref()
                    .ok_or_else(|| Error::Shape("optical classifier was not compiled".into()))?;
                let mut fields = Vec::with_capacity(n * c);
                for i in 0..n {
                    let y = tape.matrix().matvec(&features[i * n_features..(i + 1) * n_features]);
                    for (k, v) in y.iter().enumerate() {
                        scores[(i, k)] = v.norm_sqr();
                    }
                    fields.extend(y);
                }
                classifier_fields = Some(fields);
            }
        }
        Ok(Self {
            n_samples: n,
            n_features,
            features,
            classifier_fields,
            scores,
        })
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.scores.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())).collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Photodetection, `|z|^2` per entry.
pub fn detect(features: &[Complex64]) -> Vec<f64> {
    features.iter().map(|z| z.norm_sqr()).collect()
}

/// Messages of every node from every head, `[node][head][m]`, by explicit
/// field propagation through each head DPU.
pub fn msg_all(graph: &Graph, model: &DgnnModel) -> Result<Vec<Vec<Vec<Complex64>>>> {
    let optics = DpuOptics::new(&model.heads[0].geometry)?;
    if graph.n_attrs() != model.n_in() {
        return Err(Error::Shape(format!(
            "graph has {} attributes, the heads take {}",
            graph.n_attrs(),
            model.n_in()
        )));
    }
    let encoded = encoded_rows(graph, model.encoding)?;
    encoded
        .iter()
        .map(|x| model.heads.iter().map(|p| optics.forward(x, p, &model.lut)).collect())
        .collect()
}

/// Coupler-tree aggregate of the messages of `node`'s top-k neighbors, per
/// head. Neighbors are taken in table order (descending PPR score).
pub fn agg_node(messages: &[Vec<Vec<Complex64>>], table: &PprTable, node: usize) -> Result<Vec<Vec<Complex64>>> {
    if node >= table.n_nodes() {
        return Err(Error::NodeOutOfRange {
            id: node,
            n_nodes: table.n_nodes(),
            context: "aggregation".into(),
        });
    }
    let n_heads = messages.first().map_or(0, Vec::len);
    (0..n_heads)
        .map(|h| {
            let group: Vec<&Vec<Complex64>> = table.neighbors(node).iter().map(|&u| &messages[u][h]).collect();
            aggregate_tree_vectors(&group)
        })
        .collect()
}

/// Graph-level feature: each node's per-head feature passes through that
/// head's read-out DPU, then all nodes are merged by one coupler tree per
/// head. Result is `[head][m]` flattened.
pub fn readout_graph(node_features: &[Vec<Vec<Complex64>>], model: &DgnnModel) -> Result<Vec<Complex64>> {
    let readouts = model
        .readouts
        .as_ref()
        .ok_or_else(|| Error::Config("graph read-out needs read-out DPUs".into()))?;
    if node_features.is_empty() {
        return Err(Error::Domain("read-out over an empty graph".into()));
    }
    let optics = DpuOptics::new(&readouts[0].geometry)?;
    let mut out = Vec::new();
    for (h, r) in readouts.iter().enumerate() {
        let per_node = node_features
            .iter()
            .map(|f| optics.forward(&f[h], r, &model.lut))
            .collect::<Result<Vec<_>>>()?;
        out.extend(aggregate_tree_vectors(&per_node)?);
    }
    Ok(out)
}

/// Aggregated per-node features, `n_nodes x (P m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub complex_features: Array2<Complex64>,
    pub intensities: Array2<f64>,
}

/// Complex node features after MSG and AGG, together with their detected
/// intensities.
pub fn node_features(graph: &Graph, table: &PprTable, model: &DgnnModel) -> Result<NodeFeatures> {
    let optics = ModelOptics::new(model)?;
    let compiled = CompiledModel::compile(model, &optics, false)?;
    let inputs = node_inputs(graph, table, model.encoding)?;
    let z = compiled.features(&inputs)?;
    let width = compiled.slot_width();
    let complex_features = Array2::from_shape_vec((graph.n_nodes(), width), z)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let intensities = complex_features.mapv(|z| z.norm_sqr());
    Ok(NodeFeatures {
        complex_features,
        intensities,
    })
}

fn finish(model: &DgnnModel, inputs: &SampleInputs) -> Result<Array2<f64>> {
    let optics = ModelOptics::new(model)?;
    let compiled = CompiledModel::compile(model, &optics, false)?;
    Ok(ForwardPass::run(model, &compiled, inputs)?.scores)
}

/// Node classification with detection and an electronic layer; returns
/// `n x C` logits.
pub fn forward_dgnn_e(graph: &Graph, table: &PprTable, model: &DgnnModel) -> Result<Array2<f64>> {
    if !matches!(model.classifier, Classifier::Electronic(_)) {
        return Err(Error::Config("forward_dgnn_e needs an electronic classifier".into()));
    }
    finish(model, &node_inputs(graph, table, model.encoding)?)
}

/// Node classification with an optical classifier DPU; returns `n x C`
/// detected intensities.
pub fn forward_dgnn_o(graph: &Graph, table: &PprTable, model: &DgnnModel) -> Result<Array2<f64>> {
    if !matches!(model.classifier, Classifier::Optical(_)) {
        return Err(Error::Config("forward_dgnn_o needs an optical classifier".into()));
    }
    finish(model, &node_inputs(graph, table, model.encoding)?)
}
