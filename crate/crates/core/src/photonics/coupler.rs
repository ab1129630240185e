use std::f64::consts::SQRT_2;

use num_complex::Complex64;

use crate::{Error, Result};

/// 50:50 Y-junction: `(a + b) / sqrt(2)`.
pub fn y_couple(a: Complex64, b: Complex64) -> Complex64 {
    (a + b) / SQRT_2
}

/// Depth of the balanced coupler tree that merges `k` inputs.
pub fn tree_depth(k: usize) -> u32 {
    k.next_power_of_two().trailing_zeros()
}

/// Overall gain of a depth-`ceil(log2 k)` coupler tree, `2^(-d/2)`.
pub fn tree_scale(k: usize) -> f64 {
    0.5f64.powf(f64::from(tree_depth(k)) / 2.0)
}

fn combine(level: &mut Vec<Complex64>) {
    let width = level.len().next_power_of_two();
    level.resize(width, Complex64::new(0.0, 0.0));
    while level.len() > 1 {
        let next: Vec<Complex64> = level.chunks(2).map(|p| y_couple(p[0], p[1])).collect();
        *level = next;
    }
}

/// Merges `values` through a balanced tree of Y-couplers, padding with dark
/// inputs up to the next power of two. Leaves are paired in the given order.
pub fn aggregate_tree(values: &[Complex64]) -> Result<Complex64> {
    if values.is_empty() {
        return Err(Error::Domain("coupler tree needs at least one input".into()));
    }
    let mut level = values.to_vec();
    combine(&mut level);
    Ok(level[0])
}

/// Per-dimension [`aggregate_tree`] over a `k x m` message set.
pub fn aggregate_tree_vectors<V: AsRef<[Complex64]>>(messages: &[V]) -> Result<Vec<Complex64>> {
    let first = messages
        .first()
        .ok_or_else(|| Error::Domain("coupler tree needs at least one input".into()))?;
    let m = first.as_ref().len();
    if messages.iter().any(|v| v.as_ref().len() != m) {
        return Err(Error::Shape("messages must share one dimension".into()));
    }
    (0..m)
        .map(|d| {
            let column: Vec<Complex64> = messages.iter().map(|v| v.as_ref()[d]).collect();
            aggregate_tree(&column)
        })
        .collect()
}
