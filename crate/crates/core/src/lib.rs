//! Simulation and training of diffractive graph neural networks (DGNNs).
//!
//! Node and graph features are produced by on-chip diffractive photonic units
//! (DPUs): cascaded 1-D metalines whose slot widths are trained end-to-end.
//! The crate covers the scalar wave model ([`photonics`]), graph preprocessing
//! ([`graphs`]), the optical message-passing model ([`dgnn`]), the gradient
//! engine ([`train`]), electronic reference models ([`baselines`]), file
//! formats ([`dataio`]) and experiment orchestration ([`experiment`]).

pub mod baselines;
pub mod dataio;
pub mod dgnn;
pub mod error;
pub mod experiment;
pub mod graphs;
pub mod linalg;
pub mod photonics;
pub mod train;

pub use error::{Error, Result};
pub use num_complex::Complex64;
