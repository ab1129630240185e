use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::config::ExperimentConfig;
use super::run::run_experiment;
use crate::dataio::write_atomic;
use crate::{Error, Result};

/// Repetitions per point of the label-scarcity axis.
pub const LABEL_SWEEP_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    P,
    Sigma,
    LabelsPerClass,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::P => "P",
            SweepAxis::Sigma => "sigma",
            SweepAxis::LabelsPerClass => "labels_per_class",
        }
    }

    pub fn repeats(self) -> usize {
        match self {
            SweepAxis::LabelsPerClass => LABEL_SWEEP_REPEATS,
            _ => 1,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepAxis::K),
            "P" | "p" | "heads" => Ok(SweepAxis::P),
            "sigma" => Ok(SweepAxis::Sigma),
            "labels_per_class" => Ok(SweepAxis::LabelsPerClass),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?}; expected k, P, sigma or labels_per_class"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub repeat: usize,
    /// The DGNN accuracy this axis is judged by.
    pub accuracy: f64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl SweepTable {
    /// Mean and sample standard deviation of `metric` per value, in sweep
    /// order; `accuracy` selects the axis accuracy.
    pub fn summary(&self, metric: &str) -> Vec<(f64, f64, f64)> {
        let mut values: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !values.contains(&r.value) {
                values.push(r.value);
            }
        }
        values
            .into_iter()
            .filter_map(|v| {
                let xs: Vec<f64> = self
                    .rows
                    .iter()
                    .filter(|r| r.value == v)
                    .filter_map(|r| if metric == "accuracy" { Some(r.accuracy) } else { r.metrics.get(metric).copied() })
                    .collect();
                (!xs.is_empty()).then(|| {
                    let (m, s) = mean_std(&xs);
                    (v, m, s)
                })
            })
            .collect()
    }

    fn metric_names(&self) -> Vec<String> {
        let names: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.metrics.keys()).collect();
        names.into_iter().cloned().collect()
    }

    pub fn to_tsv(&self) -> String {
        let names = self.metric_names();
        let mut out = format!("{}\trepeat\taccuracy", self.axis.name());
        for n in &names {
            let _ = write!(out, "\t{n}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}\t{}\t{}", r.value, r.repeat, r.accuracy);
            for n in &names {
                match r.metrics.get(n) {
                    Some(v) => {
                        let _ = write!(out, "\t{v}");
                    }
                    None => out.push_str("\t"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = format!("{}\tmetric\tmean\tstd\truns\n", self.axis.name());
        let runs = |v: f64| self.rows.iter().filter(|r| r.value == v).count();
        for metric in std::iter::once("accuracy".to_string()).chain(self.metric_names()) {
            for (v, m, s) in self.summary(&metric) {
                let _ = writeln!(out, "{v}\t{metric}\t{m}\t{s}\t{}", runs(v));
            }
        }
        out
    }
}

fn as_count(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{} sweep values must be positive integers, got {v}", axis.name())))
    }
}

/// One run per value (ten per value on the label axis, with seeds
/// `seed + r`), each in `output/<axis>=<value>/rep<r>`. The noise axis is
/// judged by the accuracy right after perturbation.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::new();
    for &v in values {
        for r in 0..axis.repeats() {
            let mut cfg = config.clone();
            match axis {
                SweepAxis::K => cfg.model.k = as_count(axis, v)?,
                SweepAxis::P => cfg.model.heads = as_count(axis, v)?,
                SweepAxis::Sigma => {
                    if !(v >= 0.0) {
                        return Err(Error::Config(format!("sigma must be >= 0, got {v}")));
                    }
                    cfg.noise.sigma = v;
                }
                SweepAxis::LabelsPerClass => {
                    cfg.data.labels_per_class = Some(as_count(axis, v)?);
                    cfg.data.n_test = None;
                }
            }
            if axis.repeats() > 1 {
                cfg.seed = config.seed + r as u64;
                cfg.data.split_seed = Some(config.split_seed() + r as u64);
            }
            cfg.output = config.output.join(format!("{}={v}", axis.name())).join(format!("rep{r}"));
            let report = run_experiment(&cfg)?;
            let accuracy = match axis {
                SweepAxis::Sigma => report.metrics.get("noisy_test_acc").copied().map_or_else(|| report.metric("test_acc"), Ok)?,
                _ => report.metric("test_acc")?,
            };
            rows.push(SweepRow {
                value: v,
                repeat: r,
                accuracy,
                metrics: report.metrics,
            });
        }
    }
    let table = SweepTable { axis, rows };
    std::fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
    write_atomic(&config.output.join("sweep.tsv"), table.to_tsv().as_bytes())?;
    write_atomic(&config.output.join("sweep_summary.tsv"), table.summary_tsv().as_bytes())?;
    Ok(table)
}
