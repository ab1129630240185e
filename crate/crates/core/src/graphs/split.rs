use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::{Error, Result};

/// `per_class` random labeled nodes of each class for training; every other
/// labeled node is a test node.
pub fn label_split(labels: &[Option<usize>], per_class: usize, seed: u64) -> Result<(Vec<bool>, Vec<bool>)> {
    let n_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = vec![false; labels.len()];
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Some(c)).collect();
        if members.len() < per_class {
            return Err(Error::Domain(format!(
                "class {c} has {} nodes, cannot draw {per_class} training labels",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in &members[..per_class] {
            train[i] = true;
        }
    }
    let test = labels.iter().zip(&train).map(|(l, t)| l.is_some() && !t).collect();
    Ok((train, test))
}

/// `n_test` random labeled nodes form the test set; the remaining labeled
/// nodes are used for training.
pub fn random_test_split(labels: &[Option<usize>], n_test: usize, seed: u64) -> Result<(Vec<bool>, Vec<bool>)> {
    let mut labeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    if labeled.len() <= n_test {
        return Err(Error::Domain(format!(
            "{} labeled nodes cannot supply {n_test} test nodes and a training set",
            labeled.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labeled.shuffle(&mut rng);
    let mut test = vec![false; labels.len()];
    for &i in &labeled[..n_test] {
        test[i] = true;
    }
    let train = labels.iter().zip(&test).map(|(l, t)| l.is_some() && !t).collect();
    Ok((train, test))
}

/// Training view of a graph with the test nodes removed.
#[derive(Debug, Clone)]
pub struct InductiveSplit {
    pub train_graph: Graph,
    /// `kept[new_id]` is the node id in the full graph.
    pub kept: Vec<usize>,
    pub full_graph: Graph,
}

/// Deletes `test_ids` and their incident edges; the full graph is kept for
/// inference.
pub fn make_inductive(graph: &Graph, test_ids: &[usize]) -> Result<InductiveSplit> {
    let n = graph.n_nodes();
    let mut removed = vec![false; n];
    for &id in test_ids {
        if id >= n {
            return Err(Error::NodeOutOfRange {
                id,
                n_nodes: n,
                context: "inductive test set".into(),
            });
        }
        removed[id] = true;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| !removed[i]).collect();
    let mut new_id = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        new_id[old] = new;
    }
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .into_iter()
        .filter(|&(a, b)| !removed[a] && !removed[b])
        .map(|(a, b)| (new_id[a], new_id[b]))
        .collect();
    let attributes = graph.attributes.select(ndarray::Axis(0), &kept);
    let labels = kept.iter().map(|&i| graph.labels[i]).collect();
    let mut train_graph = Graph::new(kept.len(), &edges, attributes, labels)?;
    train_graph.set_split(
        kept.iter().map(|&i| graph.train_mask[i]).collect(),
        vec![false; kept.len()],
    )?;
    Ok(InductiveSplit {
        train_graph,
        kept,
        full_graph: graph.clone(),
    })
}
