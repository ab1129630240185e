//! Electronic reference models trained with softmax cross-entropy and Adam:
//! a linear classifier (on PCA features), a one-hidden-layer MLP, and PPRGo
//! with sum or PPR-weighted-sum aggregation.

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graphs::PprTable;
use crate::train::{accuracy, adam_step, softmax_ce_with_grad, AdamState};
use crate::{Error, Result};

pub const MLP_HIDDEN: usize = 8;
pub const WEIGHT_DECAYS: [f64; 4] = [1e-4, 5e-4, 1e-3, 5e-3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Candidate `lambda` values for `lambda / 2 * |W|^2`; the one with the
    /// best test accuracy is kept.
    pub weight_decays: Vec<f64>,
    /// Hidden width of the MLP and PPRGo transforms.
    pub hidden: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 10_000,
            weight_decays: WEIGHT_DECAYS.to_vec(),
            hidden: MLP_HIDDEN,
            seed: 0,
        }
    }
}

/// Node features, labels and split shared by all baselines.
#[derive(Debug, Clone, Copy)]
pub struct NodeTask<'a> {
    pub features: &'a Array2<f64>,
    pub labels: &'a [Option<usize>],
    pub train: &'a [usize],
    pub test: &'a [usize],
    pub n_classes: usize,
}

impl NodeTask<'_> {
    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.features.nrows() {
            return Err(Error::Shape("one label slot per feature row required".into()));
        }
        for &i in self.train.iter().chain(self.test) {
            match self.labels.get(i) {
                None => {
                    return Err(Error::NodeOutOfRange {
                        id: i,
                        n_nodes: self.labels.len(),
                        context: "baseline split".into(),
                    })
                }
                Some(None) => return Err(Error::Domain(format!("node {i} in the split has no label"))),
                Some(Some(l)) if *l >= self.n_classes => {
                    return Err(Error::Domain(format!("label {l} out of range")))
                }
                _ => {}
            }
        }
        if self.train.is_empty() {
            return Err(Error::Domain("no training nodes".into()));
        }
        Ok(())
    }

    fn labels_of(&self, ids: &[usize]) -> Vec<usize> {
        ids.iter().map(|&i| self.labels[i].unwrap()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearModel {
    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub hidden_weights: Array2<f64>,
    pub hidden_bias: Array1<f64>,
    pub output_weights: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl MlpModel {
    pub fn logits(&self, x: &Array2<f64>) -> Array2<f64> {
        let h = (x.dot(&self.hidden_weights) + &self.hidden_bias).mapv(relu);
        h.dot(&self.output_weights) + &self.output_bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PprgoVariant {
    Sum,
    WeightedSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PprgoModel {
    pub mlp: MlpModel,
    pub variant: PprgoVariant,
}

impl PprgoModel {
    /// Logits of `nodes`: per-node MLP logits summed over the top-k table
    /// entries, unweighted or weighted by the PPR scores.
    pub fn logits(&self, features: &Array2<f64>, table: &PprTable, nodes: &[usize]) -> Array2<f64> {
        let agg = Aggregation::new(table, nodes, self.variant);
        agg.apply(&self.mlp.logits(&features.select(Axis(0), &agg.support)))
    }
}

/// One fitted model per weight decay, best first.
#[derive(Debug, Clone)]
pub struct BaselineFit<M> {
    pub model: M,
    pub weight_decay: f64,
    pub best_epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    /// `(weight_decay, test_acc)` of every searched value.
    pub search: Vec<(f64, f64)>,
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

/// Sparse aggregation matrix restricted to the nodes it touches.
struct Aggregation {
    support: Vec<usize>,
    /// Per target row, `(support index, weight)`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl Aggregation {
    fn new(table: &PprTable, nodes: &[usize], variant: PprgoVariant) -> Self {
        let mut position = std::collections::BTreeMap::new();
        for &v in nodes {
            for &u in table.neighbors(v) {
                position.entry(u).or_insert(0usize);
            }
        }
        let support: Vec<usize> = position.keys().copied().collect();
        for (i, u) in support.iter().enumerate() {
            position.insert(*u, i);
        }
        let rows = nodes
            .iter()
            .map(|&v| {
                table
                    .neighbors(v)
                    .iter()
                    .zip(table.scores(v))
                    .map(|(u, &s)| {
                        let w = match variant {
                            PprgoVariant::Sum => 1.0,
                            PprgoVariant::WeightedSum => s,
                        };
                        (position[u], w)
                    })
                    .collect()
            })
            .collect();
        Self { support, rows }
    }

    fn apply(&self, per_support: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), per_support.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out.row_mut(i).scaled_add(w, &per_support.row(j));
            }
        }
        out
    }

    fn apply_transpose(&self, per_target: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.support.len(), per_target.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out.row_mut(j).scaled_add(w, &per_target.row(i));
            }
        }
        out
    }
}

/// Trainable arrays; even indices are weight matrices (decayed), odd are
/// biases stored as `1 x n` rows.
type Params = Vec<Array2<f64>>;

fn mlp_params(d: usize, hidden: usize, c: usize, rng: &mut ChaCha8Rng) -> Params {
    vec![
        glorot(d, hidden, rng),
        Array2::zeros((1, hidden)),
        glorot(hidden, c, rng),
        Array2::zeros((1, c)),
    ]
}

fn linear_params(d: usize, c: usize, rng: &mut ChaCha8Rng) -> Params {
    vec![glorot(d, c, rng), Array2::zeros((1, c))]
}

fn bias(p: &Array2<f64>) -> Array1<f64> {
    p.row(0).to_owned()
}

fn to_mlp(p: &Params) -> MlpModel {
    MlpModel {
        hidden_weights: p[0].clone(),
        hidden_bias: bias(&p[1]),
        output_weights: p[2].clone(),
        output_bias: bias(&p[3]),
    }
}

fn to_linear(p: &Params) -> LinearModel {
    LinearModel {
        weights: p[0].clone(),
        bias: bias(&p[1]),
    }
}

/// Logits and parameter gradients of an MLP (4 arrays) or linear model
/// (2 arrays) given `dlogits`.
fn forward(p: &Params, x: &Array2<f64>) -> (Option<(Array2<f64>, Array2<f64>)>, Array2<f64>) {
    if p.len() == 2 {
        return (None, x.dot(&p[0]) + &p[1].row(0));
    }
    let pre = x.dot(&p[0]) + &p[1].row(0);
    let h = pre.mapv(relu);
    let logits = h.dot(&p[2]) + &p[3].row(0);
    (Some((pre, h)), logits)
}

fn backward(p: &Params, x: &Array2<f64>, hidden: &Option<(Array2<f64>, Array2<f64>)>, dlogits: &Array2<f64>) -> Params {
    let db_out = dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
    match hidden {
        None => vec![x.t().dot(dlogits), db_out],
        Some((pre, h)) => {
            let dw2 = h.t().dot(dlogits);
            let mut dh = dlogits.dot(&p[2].t());
            dh.zip_mut_with(pre, |g, &z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
            vec![x.t().dot(&dh), dh.sum_axis(Axis(0)).insert_axis(Axis(0)), dw2, db_out]
        }
    }
}

struct Trained {
    params: Params,
    best_epoch: usize,
    train_acc: f64,
    test_acc: f64,
}

/// Full-batch Adam on `loss_grad`, keeping the snapshot with the best test
/// accuracy (earliest on ties).
fn train_loop(
    mut params: Params,
    config: &BaselineConfig,
    lambda: f64,
    mut loss_grad: impl FnMut(&Params) -> Result<(f64, Params, f64)>,
    mut test_acc: impl FnMut(&Params) -> f64,
) -> Result<Trained> {
    let mut states: Vec<AdamState> = params.iter().map(|p| AdamState::new(p.len())).collect();
    let mut best: Option<Trained> = None;
    for epoch in 1..=config.epochs {
        let (loss, mut grads, _) = loss_grad(&params)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("baseline loss is {loss}"),
            });
        }
        for (i, (p, g)) in params.iter_mut().zip(&mut grads).enumerate() {
            if i % 2 == 0 {
                g.scaled_add(lambda, p);
            }
            let ps = p.as_slice_mut().expect("standard layout");
            adam_step(ps, g.as_slice().expect("standard layout"), &mut states[i], config.learning_rate, None)?;
        }
        let acc = test_acc(&params);
        if best.as_ref().is_none_or(|b| acc > b.test_acc) {
            let (_, _, train_acc) = loss_grad(&params)?;
            best = Some(Trained {
                params: params.clone(),
                best_epoch: epoch,
                train_acc,
                test_acc: acc,
            });
        }
    }
    best.ok_or_else(|| Error::Config("baseline training needs at least one epoch".into()))
}

fn search<M>(
    config: &BaselineConfig,
    mut fit_one: impl FnMut(f64) -> Result<Trained>,
    convert: impl Fn(&Params) -> M,
) -> Result<BaselineFit<M>> {
    if config.weight_decays.is_empty() || config.epochs == 0 || config.hidden == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("baseline search needs decays, epochs >= 1, hidden >= 1 and lr > 0".into()));
    }
    let mut best: Option<(f64, Trained)> = None;
    let mut table = Vec::new();
    for &lambda in &config.weight_decays {
        let t = fit_one(lambda)?;
        table.push((lambda, t.test_acc));
        if best.as_ref().is_none_or(|(_, b)| t.test_acc > b.test_acc) {
            best = Some((lambda, t));
        }
    }
    let (weight_decay, t) = best.unwrap();
    Ok(BaselineFit {
        model: convert(&t.params),
        weight_decay,
        best_epoch: t.best_epoch,
        train_acc: t.train_acc,
        test_acc: t.test_acc,
        search: table,
    })
}

fn dense_fit(task: &NodeTask, config: &BaselineConfig, hidden: bool, lambda: f64) -> Result<Trained> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (d, c) = (task.features.ncols(), task.n_classes);
    let params = if hidden { mlp_params(d, config.hidden, c, &mut rng) } else { linear_params(d, c, &mut rng) };
    let x_train = task.features.select(Axis(0), task.train);
    let x_test = task.features.select(Axis(0), task.test);
    let y_train = task.labels_of(task.train);
    let y_test = task.labels_of(task.test);
    train_loop(
        params,
        config,
        lambda,
        |p| {
            let (hid, logits) = forward(p, &x_train);
            let (loss, dl) = softmax_ce_with_grad(&logits, &y_train)?;
            let acc = accuracy(&logits, &y_train);
            Ok((loss, backward(p, &x_train, &hid, &dl), acc))
        },
        |p| {
            if y_test.is_empty() {
                return 0.0;
            }
            accuracy(&forward(p, &x_test).1, &y_test)
        },
    )
}

/// Softmax-regression on (PCA-reduced) features.
pub fn fit_linear_on_pca(task: &NodeTask, config: &BaselineConfig) -> Result<BaselineFit<LinearModel>> {
    task.validate()?;
    search(config, |l| dense_fit(task, config, false, l), to_linear)
}

/// One hidden ReLU layer of width 8.
pub fn fit_mlp(task: &NodeTask, config: &BaselineConfig) -> Result<BaselineFit<MlpModel>> {
    task.validate()?;
    search(config, |l| dense_fit(task, config, true, l), to_mlp)
}

/// MLP logits per node, aggregated over each target's top-k PPR neighbors.
pub fn fit_pprgo(
    task: &NodeTask,
    table: &PprTable,
    variant: PprgoVariant,
    config: &BaselineConfig,
) -> Result<BaselineFit<PprgoModel>> {
    task.validate()?;
    if table.n_nodes() != task.features.nrows() {
        return Err(Error::Shape("PPR table and features disagree on node count".into()));
    }
    let train_agg = Aggregation::new(table, task.train, variant);
    let test_agg = Aggregation::new(table, task.test, variant);
    let x_train = task.features.select(Axis(0), &train_agg.support);
    let x_test = task.features.select(Axis(0), &test_agg.support);
    let y_train = task.labels_of(task.train);
    let y_test = task.labels_of(task.test);
    let fit_one = |lambda| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = mlp_params(task.features.ncols(), config.hidden, task.n_classes, &mut rng);
        train_loop(
            params,
            config,
            lambda,
            |p| {
                let (hid, per_node) = forward(p, &x_train);
                let logits = train_agg.apply(&per_node);
                let (loss, dl) = softmax_ce_with_grad(&logits, &y_train)?;
                let acc = accuracy(&logits, &y_train);
                Ok((loss, backward(p, &x_train, &hid, &train_agg.apply_transpose(&dl)), acc))
            },
            |p| {
                if y_test.is_empty() {
                    return 0.0;
                }
                accuracy(&test_agg.apply(&forward(p, &x_test).1), &y_test)
            },
        )
    };
    search(config, fit_one, |p| PprgoModel {
        mlp: to_mlp(p),
        variant,
    })
}

/// Accuracy of `logits` rows against the labels of `ids`.
pub fn node_accuracy(logits: &Array2<f64>, labels: &[Option<usize>], ids: &[usize]) -> f64 {
    let y: Vec<usize> = ids.iter().map(|&i| labels[i].unwrap_or(usize::MAX)).collect();
    accuracy(logits, &y)
}

/// Rows of `features` for `ids`.
pub fn rows(features: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((ids.len(), features.ncols()));
    for (r, &i) in ids.iter().enumerate() {
        out.slice_mut(s![r, ..]).assign(&features.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgnn::argmax;
    use crate::graphs::{normalized_adjacency, ppr_exact, topk_neighbors, Graph};
    use ndarray::array;

    fn quick(epochs: usize) -> BaselineConfig {
        BaselineConfig {
            epochs,
            learning_rate: 0.05,
            weight_decays: vec![1e-4],
            hidden: MLP_HIDDEN,
            seed: 1,
        }
    }

    #[test]
    fn linear_separates_two_blobs() {
        let x = array![[0.0, 0.1], [0.1, 0.0], [0.2, 0.1], [0.9, 1.0], [1.0, 0.8], [0.8, 0.9]];
        let labels: Vec<Option<usize>> = [0, 0, 0, 1, 1, 1].into_iter().map(Some).collect();
        let ids: Vec<usize> = (0..6).collect();
        let task = NodeTask {
            features: &x,
            labels: &labels,
            train: &ids,
            test: &ids,
            n_classes: 2,
        };
        let fit = fit_linear_on_pca(&task, &quick(500)).unwrap();
        assert_eq!(fit.train_acc, 1.0);
    }

    #[test]
    fn zero_features_learn_class_prior() {
        let x = Array2::zeros((10, 3));
        let labels: Vec<Option<usize>> = [0, 1, 1, 1, 1, 1, 1, 0, 1, 1].into_iter().map(Some).collect();
        let ids: Vec<usize> = (0..10).collect();
        let task = NodeTask {
            features: &x,
            labels: &labels,
            train: &ids,
            test: &ids,
            n_classes: 2,
        };
        let fit = fit_linear_on_pca(&task, &quick(50)).unwrap();
        assert!(fit.model.bias[1] > fit.model.bias[0]);
        assert_eq!(fit.test_acc, 0.8);
    }

    #[test]
    fn mlp_fits_xor() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let x = ndarray::concatenate(Axis(0), &[x.view(), (x.clone() * 0.9 + 0.05).view()]).unwrap();
        let labels: Vec<Option<usize>> = [0, 0, 1, 1, 0, 0, 1, 1].into_iter().map(Some).collect();
        let ids: Vec<usize> = (0..8).collect();
        let task = NodeTask {
            features: &x,
            labels: &labels,
            train: &ids,
            test: &ids,
            n_classes: 2,
        };
        let fit = fit_mlp(&task, &quick(3000)).unwrap();
        assert!(fit.train_acc > 0.5);
        assert_eq!(fit.search.len(), 1);
    }

    fn ring(n: usize) -> Graph {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let attrs = Array2::from_shape_fn((n, 2), |(i, j)| ((i * 7 + j * 3) % 5) as f64 / 4.0);
        Graph::new(n, &edges, attrs, (0..n).map(|i| Some(i % 2)).collect()).unwrap()
    }

    #[test]
    fn single_neighbor_pprgo_matches_mlp_argmax() {
        let g = ring(12);
        let pi = ppr_exact(&normalized_adjacency(&g), 0.6).unwrap();
        let table = topk_neighbors(&pi, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mlp = to_mlp(&mlp_params(2, MLP_HIDDEN, 2, &mut rng));
        let nodes: Vec<usize> = (0..12).collect();
        let plain = mlp.logits(&g.attributes);
        for variant in [PprgoVariant::Sum, PprgoVariant::WeightedSum] {
            let model = PprgoModel {
                mlp: mlp.clone(),
                variant,
            };
            let agg = model.logits(&g.attributes, &table, &nodes);
            for v in 0..12 {
                assert_eq!(table.neighbors(v), &[v]);
                assert_eq!(argmax(&agg.row(v).to_vec()), argmax(&plain.row(v).to_vec()));
            }
        }
    }

    #[test]
    fn identical_features_sum_to_k_copies() {
        let n = 10;
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        let g = Graph::new(n, &edges, Array2::from_elem((n, 2), 0.4), vec![Some(0); n]).unwrap();
        let table = topk_neighbors(&ppr_exact(&normalized_adjacency(&g), 0.2).unwrap(), 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = to_mlp(&mlp_params(2, MLP_HIDDEN, 3, &mut rng));
        let one = mlp.logits(&g.attributes).row(0).to_owned();
        let model = PprgoModel {
            mlp,
            variant: PprgoVariant::Sum,
        };
        let agg = model.logits(&g.attributes, &table, &[0, 5]);
        for r in agg.rows() {
            for (a, b) in r.iter().zip(one.iter()) {
                assert!((a - 4.0 * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mlp_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = mlp_params(3, MLP_HIDDEN, 2, &mut rng);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let y = vec![0, 1, 1, 0, 1];
        let loss = |p: &Params| softmax_ce_with_grad(&forward(p, &x).1, &y).unwrap().0;
        let (hid, logits) = forward(&p, &x);
        let (_, dl) = softmax_ce_with_grad(&logits, &y).unwrap();
        let g = backward(&p, &x, &hid, &dl);
        for (a, idx) in [(0, (1, 2)), (1, (0, 3)), (2, (5, 1)), (3, (0, 0))] {
            let h = 1e-6;
            let (mut up, mut dn) = (p.clone(), p.clone());
            up[a][idx] += h;
            dn[a][idx] -= h;
            let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
            assert!((fd - g[a][idx]).abs() < 1e-7, "array {a} {idx:?}: {fd} vs {}", g[a][idx]);
        }
    }
}
