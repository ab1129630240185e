//! Experiment orchestration: configs and presets, end-to-end runs with
//! report files, parameter sweeps, feature export and the throughput model.

mod checks;
mod config;
mod run;
mod sweep;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

pub use checks::{random_gradcheck, GradcheckCase};
pub use config::{
    overrides_from_pairs, BaselineSection, DataConfig, ExperimentConfig, ModelConfig, NoiseConfig, SbmSection, Source,
    Task, TrainSection, PRESETS,
};
pub use run::{predict, run_experiment, Report};
pub use sweep::{sweep, SweepAxis, SweepRow, SweepTable};
pub use synthetic::synthetic_skeletons;

use crate::dataio::{read_text, write_atomic, Checkpoint};
use crate::dgnn::{node_features, node_inputs};
use crate::graphs::{normalized_adjacency, ppr_exact, topk_neighbors, Graph, PprTable, DEFAULT_ALPHA};
use crate::{Error, Result};

/// Throughput of one inference pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Performance {
    pub ops_per_cycle: f64,
    pub ops_per_s: f64,
    pub ops_per_joule: f64,
    pub ops_per_s_per_mm2: f64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

/// Operation count `(n k + k + C) m P` of a DGNN-O node inference, scaled by
/// the modulation rate, source power and chip area (m^2).
#[allow(clippy::too_many_arguments)]
pub fn compute_performance(
    n: usize,
    m: usize,
    k: usize,
    p: usize,
    c: usize,
    mod_rate_hz: f64,
    source_power_w: f64,
    area_m2: f64,
) -> Result<Performance> {
    positive("modulation rate", mod_rate_hz)?;
    positive("source power", source_power_w)?;
    positive("area", area_m2)?;
    let ops_per_cycle = ((n * k + k + c) * m * p) as f64;
    let ops_per_s = ops_per_cycle * mod_rate_hz;
    Ok(Performance {
        ops_per_cycle,
        ops_per_s,
        ops_per_joule: ops_per_s / source_power_w,
        ops_per_s_per_mm2: ops_per_s / (area_m2 * 1e6),
    })
}

/// Ops/s/mm^2 of a single DPU applying an `n_in x n_out` map per cycle.
pub fn dpu_density(n_in: usize, n_out: usize, mod_rate_hz: f64, area_m2: f64) -> Result<f64> {
    positive("modulation rate", mod_rate_hz)?;
    positive("area", area_m2)?;
    Ok((n_in * n_out) as f64 * mod_rate_hz / (area_m2 * 1e6))
}

/// Modal class of the sub-sequence predictions; ties go to the lowest class.
pub fn vote_video(predictions: &[usize]) -> Result<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &p in predictions {
        *counts.entry(p).or_default() += 1;
    }
    let best = counts.values().copied().max().ok_or_else(|| Error::Domain("no predictions to vote on".into()))?;
    Ok(*counts.iter().find(|(_, &n)| n == best).expect("max exists").0)
}

fn config_value<T: std::str::FromStr>(ckpt: &Checkpoint, key: &str) -> Result<Option<T>> {
    match ckpt.config.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("checkpoint config {key}={v:?} is not valid"))),
    }
}

/// PPR neighborhoods from the checkpoint's recorded `model.k` and
/// `model.alpha`.
fn checkpoint_table(ckpt: &Checkpoint, graph: &Graph) -> Result<PprTable> {
    let k = config_value::<usize>(ckpt, "model.k")?
        .ok_or_else(|| Error::Config("checkpoint does not record model.k".into()))?;
    let alpha = config_value::<f64>(ckpt, "model.alpha")?.unwrap_or(DEFAULT_ALPHA);
    if graph.n_attrs() != ckpt.model.n_in() {
        return Err(Error::Shape(format!(
            "graph has {} attributes, model takes {}",
            graph.n_attrs(),
            ckpt.model.n_in()
        )));
    }
    topk_neighbors(&ppr_exact(&normalized_adjacency(graph), alpha)?, k.min(graph.n_nodes()))
}

/// Detected node intensities `n_nodes x (P m)` of a checkpointed model.
pub fn node_intensities(ckpt: &Checkpoint, graph: &Graph) -> Result<Array2<f64>> {
    let table = checkpoint_table(ckpt, graph)?;
    Ok(node_features(graph, &table, &ckpt.model)?.intensities)
}

/// Predictions and accuracy of a checkpointed node classifier on the
/// labeled nodes among `ids`.
pub fn evaluate_nodes(ckpt: &Checkpoint, graph: &Graph, ids: &[usize]) -> Result<(f64, Vec<usize>)> {
    let table = checkpoint_table(ckpt, graph)?;
    let ids: Vec<usize> = ids.iter().copied().filter(|&i| i < graph.n_nodes() && graph.labels[i].is_some()).collect();
    let inputs = node_inputs(graph, &table, ckpt.model.encoding)?.select(&ids)?;
    let preds = predict(&ckpt.model, &inputs)?;
    let correct = ids.iter().zip(&preds).filter(|(&i, &p)| graph.labels[i] == Some(p)).count();
    let acc = if ids.is_empty() { 0.0 } else { correct as f64 / ids.len() as f64 };
    Ok((acc, preds))
}

/// CSV text of a feature matrix with a trailing label column (-1 when
/// unlabeled).
pub fn features_csv(features: &Array2<f64>, labels: &[Option<usize>]) -> Result<String> {
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} feature rows for {} labels", features.nrows(), labels.len())));
    }
    let mut out = String::new();
    let header: Vec<String> = (0..features.ncols()).map(|j| format!("f{j}")).collect();
    let _ = writeln!(out, "{},label", header.join(","));
    for (row, label) in features.rows().into_iter().zip(labels) {
        for v in row {
            let _ = write!(out, "{v},");
        }
        match label {
            Some(c) => {
                let _ = writeln!(out, "{c}");
            }
            None => out.push_str("-1\n"),
        }
    }
    Ok(out)
}

/// Parses [`features_csv`] output back into features and labels.
pub fn read_features_csv(path: &Path) -> Result<(Array2<f64>, Vec<Option<usize>>)> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty feature file"))?;
    let width = header.split(',').count() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width + 1 {
            return Err(Error::parse(path, i + 1, format!("expected {} columns", width + 1)));
        }
        for c in &cells[..width] {
            values.push(c.parse::<f64>().map_err(|_| Error::parse(path, i + 1, format!("bad number {c:?}")))?);
        }
        let l: i64 = cells[width]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, "bad label"))?;
        labels.push(usize::try_from(l).ok());
    }
    let m = Array2::from_shape_vec((labels.len(), width), values).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((m, labels))
}

/// Writes the detected node features of a checkpointed model as CSV.
pub fn export_features(ckpt: &Checkpoint, graph: &Graph, path: &Path) -> Result<Array2<f64>> {
    let features = node_intensities(ckpt, graph)?;
    write_atomic(path, features_csv(&features, &graph.labels)?.as_bytes())?;
    Ok(features)
}
