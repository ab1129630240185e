use num_complex::Complex64;

use crate::{Error, Result};

/// Sampled complex amplitude along the transverse axis of the slab.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField1D {
    samples: Vec<Complex64>,
    pitch: f64,
    origin: f64,
}

impl ComplexField1D {
    pub fn new(samples: Vec<Complex64>, pitch: f64, origin: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Shape("field needs at least one sample".into()));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::Domain(format!("field pitch must be positive, got {pitch}")));
        }
        Ok(Self {
            samples,
            pitch,
            origin,
        })
    }

    pub fn zeros(len: usize, pitch: f64, origin: f64) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], pitch, origin)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Transverse coordinate of sample `i` in meters.
    pub fn coordinate(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.pitch
    }

    /// `sum |u|^2 * pitch`.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.pitch
    }
}
