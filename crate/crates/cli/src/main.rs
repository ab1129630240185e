use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dgnn::dataio::{load_checkpoint, load_graph_bundle, pca_reduce, save_graph_bundle, BundleMeta, TargetRange};
use dgnn::dgnn::{ClassifierKind, Encoding};
use dgnn::experiment::{
    compute_performance, dpu_density, evaluate_nodes, export_features, overrides_from_pairs, random_gradcheck,
    run_experiment, sweep, ExperimentConfig, GradcheckCase, SweepAxis,
};
use dgnn::graphs::{generate_sbm, label_split, random_test_split, SbmSpec};
use dgnn::train::LossKind;

/// Diffractive graph neural network simulator.
#[derive(Parser)]
#[command(name = "dgnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a stochastic-block-model graph and write it as a bundle.
    GenSbm(GenSbm),
    /// Validate a bundle, optionally PCA-reduce it and draw a split.
    Ingest(Ingest),
    /// Train and evaluate one experiment.
    Train(Train),
    /// Evaluate a checkpoint on a bundle.
    Eval(Eval),
    /// Repeat an experiment over values of one parameter.
    Sweep(Sweep),
    /// Operation count, speed, energy efficiency and density.
    Perf(Perf),
    /// Write detected node features of a checkpoint as CSV.
    ExportFeatures(ExportFeatures),
    /// Compare analytic and finite-difference width gradients.
    Gradcheck(Gradcheck),
}

#[derive(Args)]
struct GenSbm {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    nodes: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0.005)]
    q: f64,
    #[arg(long, default_value_t = SbmSpec::DEFAULT_SIGMA)]
    sigma: f64,
    /// Training labels per class; remaining nodes are test nodes.
    #[arg(long, default_value_t = 5)]
    labels_per_class: usize,
}

#[derive(Args)]
struct Ingest {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long, default_value = "amplitude")]
    encoding: Encoding,
    #[arg(long, conflicts_with = "labels_per_class")]
    n_test: Option<usize>,
    #[arg(long)]
    labels_per_class: Option<usize>,
}

/// Flags shared by `train` and `sweep`; a config file overrides them.
#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    seed: u64,
    /// TOML experiment config; its values win over flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// synthetic, benchmark or action.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// node_transductive, node_inductive or graph_action.
    #[arg(long)]
    task: Option<String>,
    /// Bundle directory or skeleton dataset; also selects the data source.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    encoding: Option<String>,
    /// electronic or optical.
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Any config field, as `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunFlags {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut pairs = vec![format!("seed={}", self.seed)];
        let mut push = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.push(format!("{key}={v}"));
            }
        };
        let quoted = |s: &Option<String>| s.as_ref().map(|v| format!("{v:?}"));
        let path = |p: &Option<PathBuf>| p.as_ref().map(|v| format!("{:?}", v.display().to_string()));
        push("preset", quoted(&self.preset));
        push("output", path(&self.output));
        push("task", quoted(&self.task));
        push("data.path", path(&self.data));
        // A directory with meta.txt is a graph bundle; anything else is skeleton data.
        push(
            "data.source",
            self.data.as_ref().map(|d| {
                let source = if d.join("meta.txt").is_file() { "bundle" } else { "skeleton" };
                format!("{source:?}")
            }),
        );
        push("model.k", self.k.map(|v| v.to_string()));
        push("model.heads", self.heads.map(|v| v.to_string()));
        push("model.encoding", quoted(&self.encoding));
        push("model.classifier", quoted(&self.classifier));
        push("train.epochs", self.epochs.map(|v| v.to_string()));
        push("train.learning_rate", self.lr.map(|v| format!("{v:?}")));
        push("noise.sigma", self.sigma.map(|v| format!("{v:?}")));
        pairs.extend(self.set.iter().cloned());
        let overrides = overrides_from_pairs(&pairs)?;
        let doc = match &self.config {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        Ok(ExperimentConfig::from_toml_layers(&doc, &overrides)?)
    }
}

#[derive(Args)]
struct Train {
    #[command(flatten)]
    run: RunFlags,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    run: RunFlags,
    /// k, P, sigma or labels_per_class.
    #[arg(long)]
    axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    /// Evaluate every labeled node instead of the test split.
    #[arg(long)]
    all: bool,
}

#[derive(Args)]
struct Perf {
    /// Node attribute dimension.
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Feature dimension per head.
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 8)]
    k: usize,
    /// Heads.
    #[arg(long = "heads", default_value_t = 4)]
    p: usize,
    /// Classes.
    #[arg(long = "classes", default_value_t = 8)]
    c: usize,
    #[arg(long, default_value_t = 1e11)]
    rate: f64,
    /// Source power in watts.
    #[arg(long, default_value_t = 10e-3)]
    power: f64,
    /// Chip area in m^2 for the overall density.
    #[arg(long, default_value_t = 1e-6)]
    area: f64,
    /// Single-DPU density: ports and footprint (m).
    #[arg(long, default_value_t = 3)]
    dpu_in: usize,
    #[arg(long, default_value_t = 2)]
    dpu_out: usize,
    #[arg(long, default_value_t = 72.85e-6)]
    dpu_length: f64,
    #[arg(long, default_value_t = 27e-6)]
    dpu_width: f64,
}

#[derive(Args)]
struct ExportFeatures {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Gradcheck {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Finite-difference step in nm.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long, default_value = "optical")]
    classifier: String,
    #[arg(long, default_value = "amplitude")]
    encoding: Encoding,
    #[arg(long, default_value = "mse_onehot")]
    loss: LossKind,
    /// Add read-out DPUs.
    #[arg(long)]
    readout: bool,
    #[arg(long, default_value_t = 1)]
    slots: usize,
    /// Fail when the largest relative error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn gen_sbm(a: GenSbm) -> Result<()> {
    let spec = SbmSpec {
        n_nodes: a.nodes,
        n_classes: a.classes,
        p: a.p,
        q: a.q,
        attr_means: None,
        attr_sigma: a.sigma,
        seed: a.seed,
    };
    let mut g = generate_sbm(&spec)?;
    let (train, test) = label_split(&g.labels, a.labels_per_class, a.seed)?;
    g.set_split(train, test)?;
    save_graph_bundle(&g, &BundleMeta::for_graph(&g), &a.out)?;
    println!("nodes={}\nedges={}\ntrain={}\ntest={}", g.n_nodes(), g.edge_count(), g.train_ids().len(), g.test_ids().len());
    Ok(())
}

fn ingest(a: Ingest) -> Result<()> {
    let mut g = load_graph_bundle(&a.input)?;
    let mut meta = dgnn::dataio::load_bundle_meta(&a.input)?;
    if let Some(dim) = a.pca_dim {
        let (reduced, t) = pca_reduce(&g.attributes, dim, TargetRange::from(a.encoding), None)?;
        g.attributes = reduced;
        meta.n_attrs = dim;
        let captured: f64 = t.explained_variance_ratio().iter().sum();
        println!("pca_dim={dim}\nexplained_variance={captured}");
    }
    if let Some(n) = a.n_test {
        let (train, test) = random_test_split(&g.labels, n, a.seed)?;
        g.set_split(train, test)?;
    } else if let Some(per) = a.labels_per_class {
        let (train, test) = label_split(&g.labels, per, a.seed)?;
        g.set_split(train, test)?;
    }
    save_graph_bundle(&g, &meta, &a.out)?;
    println!(
        "nodes={}\nedges={}\nclasses={}\ntrain={}\ntest={}",
        g.n_nodes(),
        g.edge_count(),
        meta.n_classes,
        g.train_ids().len(),
        g.test_ids().len()
    );
    Ok(())
}

fn print_metrics(metrics: &std::collections::BTreeMap<String, f64>) {
    for (k, v) in metrics {
        println!("{k}={v}");
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenSbm(a) => gen_sbm(a),
        Command::Ingest(a) => ingest(a),
        Command::Train(a) => {
            let cfg = a.run.resolve()?;
            let report = run_experiment(&cfg)?;
            print_metrics(&report.metrics);
            println!("report={}", report.dir.display());
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = a.run.resolve()?;
            let table = sweep(&cfg, a.axis, &a.values)?;
            print!("{}", table.summary_tsv());
            Ok(())
        }
        Command::Eval(a) => {
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let g = load_graph_bundle(&a.graph)?;
            let ids = if a.all { (0..g.n_nodes()).collect() } else { g.test_ids() };
            if ids.is_empty() {
                bail!("the bundle has no test nodes; pass --all to score every labeled node");
            }
            let (acc, preds) = evaluate_nodes(&ckpt, &g, &ids)?;
            println!("evaluated={}\naccuracy={acc}", preds.len());
            Ok(())
        }
        Command::Perf(a) => {
            let p = compute_performance(a.n, a.m, a.k, a.p, a.c, a.rate, a.power, a.area)?;
            let d = dpu_density(a.dpu_in, a.dpu_out, a.rate, a.dpu_length * a.dpu_width)?;
            println!("ops_per_cycle={}", p.ops_per_cycle);
            println!("ops_per_s={:e}", p.ops_per_s);
            println!("tops_per_s={}", p.ops_per_s / 1e12);
            println!("ops_per_joule={:e}", p.ops_per_joule);
            println!("ops_per_s_per_mm2={:e}", p.ops_per_s_per_mm2);
            println!("dpu_tops_per_s_per_mm2={:.0}", d / 1e12);
            Ok(())
        }
        Command::ExportFeatures(a) => {
            let ckpt = load_checkpoint(&a.checkpoint)?;
            let g = load_graph_bundle(&a.graph)?;
            let f = export_features(&ckpt, &g, &a.out)?;
            println!("rows={}\ncolumns={}", f.nrows(), f.ncols() + 1);
            Ok(())
        }
        Command::Gradcheck(a) => {
            let classifier = match a.classifier.as_str() {
                "electronic" => ClassifierKind::Electronic,
                "optical" => ClassifierKind::Optical,
                other => bail!("unknown classifier {other:?}"),
            };
            let case = GradcheckCase {
                classifier,
                readout: a.readout,
                encoding: a.encoding,
                loss: a.loss,
                slots: a.slots,
            };
            let r = random_gradcheck(&case, a.samples, a.h, a.seed)?;
            println!("checked={}\nmax_relative_error={:e}", r.checked(), r.max_relative_error());
            if r.max_relative_error() > a.tolerance {
                bail!("gradient check failed: {:e} > {:e}", r.max_relative_error(), a.tolerance);
            }
            Ok(())
        }
    }
}
