use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::ComplexField1D;
use crate::{Error, Result};

/// Angular-spectrum propagator for a fixed grid and distance.
///
/// The field is zero-padded to `pad_factor` times its length (centered),
/// transformed, multiplied by the slab transfer function and cropped back.
/// Propagating components outside the band limit
/// `f_max = 1 / (lambda_eff * sqrt((2 z / window)^2 + 1))` are dropped, since
/// their lateral walk-off exceeds half the padded window and they would wrap
/// around. Evanescent components decay with their exact real exponential.
pub struct Propagator {
    len: usize,
    padded: usize,
    offset: usize,
    distance: f64,
    /// Transfer function with the `1/N` inverse-FFT normalization folded in.
    transfer: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("len", &self.len)
            .field("padded", &self.padded)
            .field("distance", &self.distance)
            .finish()
    }
}

impl Propagator {
    pub fn new(
        len: usize,
        pitch: f64,
        distance: f64,
        wavelength: f64,
        effective_index: f64,
        pad_factor: usize,
    ) -> Result<Self> {
        if !(distance >= 0.0) || !distance.is_finite() {
            return Err(Error::Domain(format!("propagation distance must be >= 0, got {distance}")));
        }
        if !(wavelength > 0.0) || !(effective_index > 0.0) || !(pitch > 0.0) {
            return Err(Error::Domain(
                "wavelength, effective index and pitch must be positive".into(),
            ));
        }
        if len == 0 || pad_factor == 0 {
            return Err(Error::Domain("field length and pad factor must be >= 1".into()));
        }
        let padded = len * pad_factor;
        let offset = (padded - len) / 2;
        let window = padded as f64 * pitch;
        let cutoff = effective_index / wavelength;
        let band_limit = cutoff / ((2.0 * distance / window).powi(2) + 1.0).sqrt();
        let norm = 1.0 / padded as f64;
        let transfer = (0..padded)
            .map(|k| {
                let idx = if k < padded.div_ceil(2) { k as f64 } else { k as f64 - padded as f64 };
                let f = idx / window;
                let kz2 = cutoff * cutoff - f * f;
                if kz2 >= 0.0 {
                    if f.abs() > band_limit {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::from_polar(norm, 2.0 * PI * distance * kz2.sqrt())
                    }
                } else {
                    Complex64::new(norm * (-2.0 * PI * distance * (-kz2).sqrt()).exp(), 0.0)
                }
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            padded,
            offset,
            distance,
            transfer,
            forward: planner.plan_fft_forward(padded),
            inverse: planner.plan_fft_inverse(padded),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// Propagates `samples` in place.
    pub fn apply(&self, samples: &mut [Complex64]) {
        self.run(samples, false);
    }

    /// Applies the Hilbert adjoint of [`Propagator::apply`] in place.
    pub fn apply_adjoint(&self, samples: &mut [Complex64]) {
        self.run(samples, true);
    }

    fn run(&self, samples: &mut [Complex64], adjoint: bool) {
        assert_eq!(samples.len(), self.len, "propagator built for a different grid");
        if self.distance == 0.0 {
            return;
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded];
        buf[self.offset..self.offset + self.len].copy_from_slice(samples);
        self.forward.process(&mut buf);
        if adjoint {
            buf.iter_mut().zip(&self.transfer).for_each(|(b, h)| *b *= h.conj());
        } else {
            buf.iter_mut().zip(&self.transfer).for_each(|(b, h)| *b *= h);
        }
        self.inverse.process(&mut buf);
        samples.copy_from_slice(&buf[self.offset..self.offset + self.len]);
    }
}

/// Propagates `field` over `distance` through a slab of the given effective index.
pub fn propagate(
    field: &ComplexField1D,
    distance: f64,
    wavelength: f64,
    effective_index: f64,
    pad_factor: usize,
) -> Result<ComplexField1D> {
    let prop = Propagator::new(field.len(), field.pitch(), distance, wavelength, effective_index, pad_factor)?;
    let mut out = field.clone();
    prop.apply(out.samples_mut());
    Ok(out)
}
