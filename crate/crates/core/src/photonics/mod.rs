//! Scalar 1-D diffractive optics: angular-spectrum propagation inside a slab,
//! metaline modulation, waveguide port coupling and Y-couplers.

mod coupler;
mod dpu;
mod field;
mod lut;
mod ports;
mod propagate;

pub use coupler::{aggregate_tree, aggregate_tree_vectors, tree_depth, tree_scale, y_couple};
pub use dpu::{
    apply_metaline, dpu_forward, quantize_width, CoefficientNoise, DpuGeometry, DpuOptics, DpuParams, DpuTape, GroupCoefficient,
};
pub use field::ComplexField1D;
pub use lut::{width_to_coefficient, LutSample, MetaAtomLut, MAX_WIDTH_NM, MIN_WIDTH_NM};
pub use ports::{couple_ports, inject_ports, PortModes};
pub use propagate::{propagate, Propagator};
