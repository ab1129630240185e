use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, Source, Task};
use super::synthetic::synthetic_skeletons;
use super::vote_video;
use crate::baselines::{fit_linear_on_pca, fit_mlp, fit_pprgo, BaselineConfig, NodeTask, PprgoVariant};
use crate::dataio::{
    kfold_by_subject, load_graph_bundle, load_skeleton_dataset, pca_reduce, save_checkpoint, sequence_frames,
    write_atomic, TargetRange, ACTIONS,
};
use crate::dgnn::{
    node_inputs, perturb_coefficients, quantize_model, subsequence_inputs, CompiledModel, DgnnModel, ForwardPass,
    ModelOptics, ModelSpec, SampleInputs,
};
use crate::error::StageExt;
use crate::graphs::{
    generate_sbm, label_split, make_inductive, normalized_adjacency, ppr_exact, random_test_split, topk_neighbors,
    Graph, PprTable, SbmSpec,
};
use crate::photonics::{DpuGeometry, MetaAtomLut};
use crate::train::{fit, node_dataset, retrain_classifier, Dataset, EpochRecord, LabeledInputs, TrainConfig};
use crate::{Error, Result};

/// Outcome of [`run_experiment`]; the same numbers are in `dir/metrics.txt`.
#[derive(Debug, Clone)]
pub struct Report {
    pub dir: PathBuf,
    pub metrics: BTreeMap<String, f64>,
    /// `confusion[true][predicted]` over the test samples.
    pub confusion: Vec<Vec<usize>>,
    /// Deployed model (the last fold's for graph tasks).
    pub model: DgnnModel,
}

impl Report {
    pub fn metric(&self, key: &str) -> Result<f64> {
        self.metrics
            .get(key)
            .copied()
            .ok_or_else(|| Error::Config(format!("report has no metric {key:?}")))
    }
}

/// Class predictions of `model` with its stored (possibly binary) widths.
pub fn predict(model: &DgnnModel, inputs: &SampleInputs) -> Result<Vec<usize>> {
    let optics = ModelOptics::new(model)?;
    let compiled = CompiledModel::compile(model, &optics, false)?;
    Ok(ForwardPass::run(model, &compiled, inputs)?.predictions())
}

fn accuracy_of(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    predictions.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

fn confusion(predictions: &[usize], labels: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &l) in predictions.iter().zip(labels) {
        m[l][p] += 1;
    }
    m
}

fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

fn load_lut(config: &ExperimentConfig) -> Result<MetaAtomLut> {
    match &config.model.lut {
        Some(path) => MetaAtomLut::load(path),
        None => Ok(MetaAtomLut::default()),
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            toml::Value::String(s) => {
                out.insert(key, s.clone());
            }
            other => {
                out.insert(key, other.to_string());
            }
        }
    }
}

/// Dotted `section.key` view of the config, stored in checkpoints.
pub(crate) fn config_echo(config: &ExperimentConfig) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if let Ok(t) = toml::Table::try_from(config) {
        flatten("", &t, &mut out);
    }
    out
}

fn history_tsv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\tloss\ttrain_acc\ttest_acc\n");
    for r in history {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.epoch, r.loss, r.train_acc, r.test_acc);
    }
    out
}

fn confusion_tsv(m: &[Vec<usize>], names: &[String]) -> String {
    let mut out = String::from("true\\pred");
    for n in names {
        let _ = write!(out, "\t{n}");
    }
    out.push('\n');
    for (row, name) in m.iter().zip(names) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    out
}

fn metrics_txt(metrics: &BTreeMap<String, f64>) -> String {
    metrics.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    write_atomic(&dir.join(name), text.as_bytes())
}

/// Trains and evaluates one configuration and writes `config.toml`,
/// `history.tsv`, `metrics.txt`, `confusion.tsv` and `model.ckpt` (plus
/// per-stage extras) under `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let dir = config.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir, "config.toml", &config.to_toml())?;
    let lut = load_lut(config).stage("lut")?;
    match config.task {
        Task::NodeTransductive | Task::NodeInductive => run_node(config, lut, dir),
        Task::GraphAction => run_action(config, lut, dir),
    }
}

/// Graph with split and attributes in the encoding range.
pub(crate) fn prepare_graph(config: &ExperimentConfig) -> Result<Graph> {
    let d = &config.data;
    let mut g = match d.source {
        Source::Sbm => generate_sbm(&SbmSpec {
            n_nodes: d.sbm.n_nodes,
            n_classes: d.sbm.n_classes,
            p: d.sbm.p,
            q: d.sbm.q,
            attr_means: None,
            attr_sigma: d.sbm.sigma,
            seed: config.seed,
        })?,
        Source::Bundle => load_graph_bundle(d.path.as_deref().expect("validated"))?,
        _ => return Err(Error::Config("node tasks need an sbm or bundle source".into())),
    };
    let split_seed = config.split_seed();
    if let Some(per_class) = d.labels_per_class {
        let (train, test) = label_split(&g.labels, per_class, split_seed)?;
        g.set_split(train, test)?;
    } else if let Some(n_test) = d.n_test {
        let (train, test) = random_test_split(&g.labels, n_test, split_seed)?;
        g.set_split(train, test)?;
    } else if g.train_ids().is_empty() {
        return Err(Error::Config(
            "the graph has no split; set data.labels_per_class or data.n_test".into(),
        ));
    }
    let range = TargetRange::from(config.model.encoding);
    if let Some(dim) = d.pca_dim {
        let fit_rows: Option<Vec<usize>> = (config.task == Task::NodeInductive)
            .then(|| (0..g.n_nodes()).filter(|&i| !g.test_mask[i]).collect());
        g.attributes = pca_reduce(&g.attributes, dim, range, fit_rows.as_deref())?.0;
    } else if d.source == Source::Sbm && range == TargetRange::TwoPi {
        g.attributes.mapv_inplace(|v| v * 2.0 * PI);
    }
    Ok(g)
}

fn ppr_table(graph: &Graph, config: &ExperimentConfig) -> Result<PprTable> {
    let pi = ppr_exact(&normalized_adjacency(graph), config.model.alpha)?;
    topk_neighbors(&pi, config.model.k)
}

fn labeled(inputs: &SampleInputs, graph: &Graph, ids: &[usize]) -> Result<LabeledInputs> {
    let ids: Vec<usize> = ids.iter().copied().filter(|&i| graph.labels[i].is_some()).collect();
    Ok(LabeledInputs {
        inputs: inputs.select(&ids)?,
        labels: ids.iter().map(|&i| graph.labels[i].expect("filtered")).collect(),
    })
}

/// Training and test samples plus the full-graph PPR table.
pub(crate) fn node_problem(config: &ExperimentConfig, graph: &Graph) -> Result<(Dataset, PprTable)> {
    let enc = config.model.encoding;
    let full_table = ppr_table(graph, config)?;
    let data = match config.task {
        Task::NodeInductive => {
            let split = make_inductive(graph, &graph.test_ids())?;
            let train_graph = &split.train_graph;
            let train_inputs = node_inputs(train_graph, &ppr_table(train_graph, config)?, enc)?;
            let full_inputs = node_inputs(graph, &full_table, enc)?;
            Dataset {
                train: labeled(&train_inputs, train_graph, &train_graph.train_ids())?,
                test: labeled(&full_inputs, graph, &graph.test_ids())?,
            }
        }
        _ => node_dataset(graph, &full_table, enc)?,
    };
    Ok((data, full_table))
}

fn model_spec(
    config: &ExperimentConfig,
    lut: MetaAtomLut,
    n_in: usize,
    slots: usize,
    n_classes: usize,
) -> ModelSpec {
    let m = &config.model;
    ModelSpec {
        head_geometry: DpuGeometry {
            n_in,
            ..m.head_geometry.clone()
        },
        n_heads: m.heads,
        slots,
        readout_geometry: m.readout_geometry.clone(),
        classifier: m.classifier,
        classifier_geometry: m.classifier_geometry.clone(),
        n_classes,
        encoding: m.encoding,
        lut,
    }
}

/// Fits, deploys (binarizing after straight-through training) and applies
/// the optional quantization/noise stage with classifier re-training.
fn train_and_deploy(
    config: &ExperimentConfig,
    model: &DgnnModel,
    data: &Dataset,
    dir: &Path,
    suffix: &str,
    metrics: &mut BTreeMap<String, f64>,
) -> Result<DgnnModel> {
    let train_cfg = config.train.to_config(config.seed);
    let outcome = fit(model, data, &train_cfg).stage("train")?;
    write(dir, &format!("history{suffix}.tsv"), &history_tsv(&outcome.history))?;
    let best = outcome.best();
    metrics.insert(format!("best_epoch{suffix}"), best.epoch as f64);
    metrics.insert(format!("train_acc{suffix}"), best.train_acc);
    let mut deployed = if train_cfg.binary_training {
        quantize_model(&outcome.model)
    } else {
        outcome.model
    };
    if config.noise.active() {
        let echo = config_echo(config);
        save_checkpoint(&deployed, &echo, &dir.join(format!("trained{suffix}.ckpt")))?;
        let mut noisy = if config.noise.binary { quantize_model(&deployed) } else { deployed };
        noisy = perturb_coefficients(&noisy, config.noise.sigma, noise_seed(config.seed)).stage("noise")?;
        let preds = predict(&noisy, &data.test.inputs).stage("noise")?;
        metrics.insert(format!("noisy_test_acc{suffix}"), accuracy_of(&preds, &data.test.labels));
        let retrain_cfg = TrainConfig {
            learning_rate: config.noise.retrain_learning_rate,
            epochs: config.noise.retrain_epochs,
            binary_training: false,
            ..train_cfg
        };
        let retrained = retrain_classifier(&noisy, data, &retrain_cfg).stage("retrain")?;
        write(dir, &format!("retrain_history{suffix}.tsv"), &history_tsv(&retrained.history))?;
        deployed = retrained.model;
    }
    Ok(deployed)
}

fn run_node(config: &ExperimentConfig, lut: MetaAtomLut, dir: PathBuf) -> Result<Report> {
    let graph = prepare_graph(config).stage("data")?;
    let (data, full_table) = node_problem(config, &graph).stage("ppr")?;
    let n_classes = graph.n_classes();
    let spec = model_spec(config, lut, graph.n_attrs(), 1, n_classes);
    let model = DgnnModel::init(&spec, config.seed).stage("init")?;

    let mut metrics = BTreeMap::new();
    metrics.insert("n_train".into(), data.train.len() as f64);
    metrics.insert("n_test".into(), data.test.len() as f64);
    let deployed = train_and_deploy(config, &model, &data, &dir, "", &mut metrics)?;
    let preds = predict(&deployed, &data.test.inputs).stage("eval")?;
    metrics.insert("test_acc".into(), accuracy_of(&preds, &data.test.labels));
    let conf = confusion(&preds, &data.test.labels, n_classes);
    let names: Vec<String> = (0..n_classes).map(|c| c.to_string()).collect();
    write(&dir, "confusion.tsv", &confusion_tsv(&conf, &names))?;
    save_checkpoint(&deployed, &config_echo(config), &dir.join("model.ckpt"))?;

    if config.baselines.enabled && config.task == Task::NodeTransductive {
        let train = graph.train_ids();
        let test: Vec<usize> = graph.test_ids().into_iter().filter(|&i| graph.labels[i].is_some()).collect();
        let task = NodeTask {
            features: &graph.attributes,
            labels: &graph.labels,
            train: &train,
            test: &test,
            n_classes,
        };
        let b = &config.baselines;
        let bc = BaselineConfig {
            learning_rate: b.learning_rate,
            epochs: b.epochs,
            weight_decays: b.weight_decays.clone(),
            hidden: b.hidden,
            seed: config.seed,
        };
        let mut table = String::from("model\tweight_decay\tbest_epoch\ttrain_acc\ttest_acc\n");
        let mut record = |name: &str, wd: f64, epoch: usize, train_acc: f64, test_acc: f64| {
            let _ = writeln!(table, "{name}\t{wd}\t{epoch}\t{train_acc}\t{test_acc}");
            metrics.insert(format!("baseline.{name}"), test_acc);
        };
        let f = fit_linear_on_pca(&task, &bc).stage("baseline linear")?;
        record("linear", f.weight_decay, f.best_epoch, f.train_acc, f.test_acc);
        let f = fit_mlp(&task, &bc).stage("baseline mlp")?;
        record("mlp", f.weight_decay, f.best_epoch, f.train_acc, f.test_acc);
        let f = fit_pprgo(&task, &full_table, PprgoVariant::Sum, &bc).stage("baseline pprgo-s")?;
        record("pprgo_s", f.weight_decay, f.best_epoch, f.train_acc, f.test_acc);
        let f = fit_pprgo(&task, &full_table, PprgoVariant::WeightedSum, &bc).stage("baseline pprgo-ws")?;
        record("pprgo_ws", f.weight_decay, f.best_epoch, f.train_acc, f.test_acc);
        write(&dir, "baselines.tsv", &table)?;
    }
    write(&dir, "metrics.txt", &metrics_txt(&metrics))?;
    Ok(Report {
        dir,
        metrics,
        confusion: conf,
        model: deployed,
    })
}

fn stack(parts: &[&SampleInputs]) -> Result<SampleInputs> {
    let owned: Vec<SampleInputs> = parts.iter().map(|p| (*p).clone()).collect();
    SampleInputs::concat(&owned)
}

fn run_action(config: &ExperimentConfig, lut: MetaAtomLut, dir: PathBuf) -> Result<Report> {
    let d = &config.data;
    let enc = config.model.encoding;
    let sequences = match d.source {
        Source::Skeleton => load_skeleton_dataset(d.path.as_deref().expect("validated")).stage("data")?,
        _ => synthetic_skeletons(d.synthetic_recordings, d.synthetic_frames, config.seed),
    };
    let windows: Vec<Option<SampleInputs>> = sequences
        .iter()
        .map(|s| {
            if s.frames.len() < d.window {
                return Ok(None);
            }
            subsequence_inputs(&sequence_frames(s, enc)?, d.window, enc).map(Some)
        })
        .collect::<Result<_>>()
        .stage("data")?;
    let folds = kfold_by_subject(&sequences, d.folds, config.split_seed()).stage("folds")?;
    let selected: Vec<usize> = match d.fold {
        Some(f) if f < folds.len() => vec![f],
        Some(f) => return Err(Error::Config(format!("data.fold {f} out of range for {} folds", folds.len()))),
        None => (0..folds.len()).collect(),
    };

    let n_classes = ACTIONS.len();
    let mut metrics = BTreeMap::new();
    metrics.insert("n_sequences".into(), sequences.len() as f64);
    metrics.insert(
        "n_subsequences".into(),
        windows.iter().flatten().map(SampleInputs::n_samples).sum::<usize>() as f64,
    );
    metrics.insert("skipped_sequences".into(), windows.iter().filter(|w| w.is_none()).count() as f64);
    let mut conf = vec![vec![0; n_classes]; n_classes];
    let mut video_conf = vec![vec![0; n_classes]; n_classes];
    let mut folds_tsv = String::from("fold\ttest_subjects\tsubseq_acc\tvideo_acc\n");
    let (mut subseq_sum, mut video_sum) = (0.0, 0.0);
    let mut last_model = None;
    for &f in &selected {
        let fold = &folds[f];
        let gather = |ids: &[usize]| -> Result<(LabeledInputs, Vec<(usize, usize)>)> {
            let kept: Vec<usize> = ids.iter().copied().filter(|&i| windows[i].is_some()).collect();
            let parts: Vec<&SampleInputs> = kept.iter().map(|&i| windows[i].as_ref().expect("filtered")).collect();
            let labels = kept
                .iter()
                .flat_map(|&i| std::iter::repeat(sequences[i].action).take(windows[i].as_ref().expect("filtered").n_samples()))
                .collect();
            let spans = kept
                .iter()
                .map(|&i| (i, windows[i].as_ref().expect("filtered").n_samples()))
                .collect();
            Ok((
                LabeledInputs {
                    inputs: stack(&parts)?,
                    labels,
                },
                spans,
            ))
        };
        let (train, _) = gather(&fold.train).stage("folds")?;
        let (test, spans) = gather(&fold.test).stage("folds")?;
        let data = Dataset { train, test };
        let spec = model_spec(config, lut.clone(), 3, d.window, n_classes);
        let model = DgnnModel::init(&spec, config.seed).stage("init")?;
        let suffix = format!("_fold{f}");
        let deployed = train_and_deploy(config, &model, &data, &dir, &suffix, &mut metrics)?;
        let preds = predict(&deployed, &data.test.inputs).stage("eval")?;
        let subseq_acc = accuracy_of(&preds, &data.test.labels);
        for (&p, &l) in preds.iter().zip(&data.test.labels) {
            conf[l][p] += 1;
        }
        let mut start = 0;
        let mut correct = 0;
        for &(seq, n) in &spans {
            let vote = vote_video(&preds[start..start + n])?;
            let truth = sequences[seq].action;
            video_conf[truth][vote] += 1;
            correct += usize::from(vote == truth);
            start += n;
        }
        let video_acc = if spans.is_empty() { 0.0 } else { correct as f64 / spans.len() as f64 };
        let _ = writeln!(folds_tsv, "{f}\t{}\t{subseq_acc}\t{video_acc}", fold.test_subjects.join(","));
        metrics.insert(format!("subseq_acc{suffix}"), subseq_acc);
        metrics.insert(format!("video_acc{suffix}"), video_acc);
        subseq_sum += subseq_acc;
        video_sum += video_acc;
        save_checkpoint(&deployed, &config_echo(config), &dir.join(format!("model{suffix}.ckpt")))?;
        last_model = Some(deployed);
    }
    let runs = selected.len() as f64;
    metrics.insert("subseq_acc".into(), subseq_sum / runs);
    metrics.insert("video_acc".into(), video_sum / runs);
    let names: Vec<String> = ACTIONS.iter().map(|s| s.to_string()).collect();
    write(&dir, "confusion.tsv", &confusion_tsv(&conf, &names))?;
    write(&dir, "video_confusion.tsv", &confusion_tsv(&video_conf, &names))?;
    write(&dir, "folds.tsv", &folds_tsv)?;
    write(&dir, "metrics.txt", &metrics_txt(&metrics))?;
    let model = last_model.ok_or_else(|| Error::Config("no fold was run".into()))?;
    save_checkpoint(&model, &config_echo(config), &dir.join("model.ckpt"))?;
    Ok(Report {
        dir,
        metrics,
        confusion: conf,
        model,
    })
}
