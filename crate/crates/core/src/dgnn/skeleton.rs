use ndarray::Array2;
use num_complex::Complex64;

use super::forward::{detect, msg_all, readout_graph, SampleInputs};
use super::{encode_attributes, DgnnModel, Encoding};
use crate::graphs::Graph;
use crate::photonics::aggregate_tree_vectors;
use crate::{Error, Result};

pub const SKELETON_JOINTS: usize = 20;

/// Bones of the 20-joint Kinect skeleton (hip center = 0, spine = 1,
/// shoulder center = 2, head = 3, then left arm, right arm, left leg, right
/// leg).
pub const SKELETON_EDGES: [(usize, usize); 19] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (2, 4),
    (4, 5),
    (5, 6),
    (6, 7),
    (2, 8),
    (8, 9),
    (9, 10),
    (10, 11),
    (0, 12),
    (12, 13),
    (13, 14),
    (14, 15),
    (0, 16),
    (16, 17),
    (17, 18),
    (18, 19),
];

/// Skeleton graph of one frame; `coords` are already scaled into the
/// encoding range.
pub fn frame_graph(coords: &[[f64; 3]]) -> Result<Graph> {
    if coords.len() != SKELETON_JOINTS {
        return Err(Error::Shape(format!("a frame has {SKELETON_JOINTS} joints, got {}", coords.len())));
    }
    let attrs = Array2::from_shape_fn((SKELETON_JOINTS, 3), |(j, a)| coords[j][a]);
    Graph::new(SKELETON_JOINTS, &SKELETON_EDGES, attrs, vec![None; SKELETON_JOINTS])
}

/// Each joint aggregates itself and its bone neighbors, in ascending index.
fn joint_group(graph: &Graph, v: usize) -> Vec<usize> {
    let mut group: Vec<usize> = std::iter::once(v).chain(graph.neighbors(v).iter().copied()).collect();
    group.sort_unstable();
    group
}

/// Linear pre-image of a frame feature: the node-level coupler tree over each
/// joint's neighborhood, then the graph-level tree over joints, applied to
/// the encoded coordinates.
pub fn frame_inputs(graph: &Graph, encoding: Encoding) -> Result<Vec<Complex64>> {
    let encoded = graph
        .attributes
        .rows()
        .into_iter()
        .map(|r| encode_attributes(&r.to_vec(), encoding))
        .collect::<Result<Vec<_>>>()?;
    let per_node = (0..graph.n_nodes())
        .map(|v| {
            let group: Vec<&Vec<Complex64>> = joint_group(graph, v).into_iter().map(|u| &encoded[u]).collect();
            aggregate_tree_vectors(&group)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_tree_vectors(&per_node)
}

/// Sliding windows of `n` consecutive frames, stride 1; one slot per frame.
pub fn subsequence_inputs(frames: &[Graph], n: usize, encoding: Encoding) -> Result<SampleInputs> {
    if n == 0 || frames.len() < n {
        return Err(Error::Domain(format!(
            "need at least {n} frames for a window of {n}, got {}",
            frames.len()
        )));
    }
    let per_frame = frames
        .iter()
        .map(|f| frame_inputs(f, encoding))
        .collect::<Result<Vec<_>>>()?;
    let n_in = per_frame[0].len();
    let windows = frames.len() - n + 1;
    let data = (0..windows).flat_map(|w| per_frame[w..w + n].concat()).collect();
    SampleInputs::new(windows, n, n_in, data)
}

/// Detected `n * P * m` features of every length-`n` window, by explicit
/// message passing, read-out and detection per frame.
pub fn subsequence_pipeline(frames: &[Graph], model: &DgnnModel, n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || frames.len() < n {
        return Err(Error::Domain(format!(
            "need at least {n} frames for a window of {n}, got {}",
            frames.len()
        )));
    }
    let per_frame = frames
        .iter()
        .map(|g| {
            let messages = msg_all(g, model)?;
            let node_features = (0..g.n_nodes())
                .map(|v| {
                    (0..model.n_heads())
                        .map(|h| {
                            let group: Vec<&Vec<Complex64>> =
                                joint_group(g, v).into_iter().map(|u| &messages[u][h]).collect();
                            aggregate_tree_vectors(&group)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            readout_graph(&node_features, model)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..=frames.len() - n).map(|w| detect(&per_frame[w..w + n].concat())).collect())
}
