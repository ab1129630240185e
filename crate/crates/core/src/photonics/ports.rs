use num_complex::Complex64;

use super::{ComplexField1D, DpuGeometry};
use crate::{Error, Result};

/// Unit-power Gaussian waveguide modes centered on equal intervals of the
/// aperture, sampled on the DPU field grid.
#[derive(Debug, Clone)]
pub struct PortModes {
    pitch: f64,
    origin: f64,
    /// One real profile per port, each normalized so `sum g^2 * pitch = 1`.
    profiles: Vec<Vec<f64>>,
}

impl PortModes {
    /// Modes for `count` ports on the aperture of `geometry`.
    ///
    /// `mode_halfwidth` is the 1/e half-width of the mode amplitude.
    pub fn new(geometry: &DpuGeometry, count: usize, mode_halfwidth: f64) -> Result<Self> {
        if count == 0 || count > geometry.atoms_per_line {
            return Err(Error::Domain(format!(
                "port count {count} must be in [1, {}]",
                geometry.atoms_per_line
            )));
        }
        if !(mode_halfwidth > 0.0) {
            return Err(Error::Domain(format!("mode half-width must be positive, got {mode_halfwidth}")));
        }
        let n = geometry.field_len();
        let pitch = geometry.field_pitch();
        let origin = geometry.field_origin();
        let interval = geometry.aperture() / count as f64;
        let profiles = (0..count)
            .map(|j| {
                let center = (j as f64 + 0.5) * interval;
                let mut g: Vec<f64> = (0..n)
                    .map(|s| {
                        let x = (origin + s as f64 * pitch - center) / mode_halfwidth;
                        (-x * x).exp()
                    })
                    .collect();
                let norm = (g.iter().map(|v| v * v).sum::<f64>() * pitch).sqrt();
                g.iter_mut().for_each(|v| *v /= norm);
                g
            })
            .collect();
        Ok(Self {
            pitch,
            origin,
            profiles,
        })
    }

    pub fn count(&self) -> usize {
        self.profiles.len()
    }

    pub fn profile(&self, port: usize) -> &[f64] {
        &self.profiles[port]
    }

    /// `sum_j values[j] * g_j`.
    pub fn inject(&self, values: &[Complex64]) -> Result<ComplexField1D> {
        if values.len() != self.count() {
            return Err(Error::Shape(format!(
                "expected {} port values, got {}",
                self.count(),
                values.len()
            )));
        }
        let mut samples = vec![Complex64::new(0.0, 0.0); self.profiles[0].len()];
        self.inject_into(values, &mut samples);
        ComplexField1D::new(samples, self.pitch, self.origin)
    }

    pub(crate) fn inject_into(&self, values: &[Complex64], samples: &mut [Complex64]) {
        samples.iter_mut().for_each(|s| *s = Complex64::new(0.0, 0.0));
        for (v, g) in values.iter().zip(&self.profiles) {
            if *v == Complex64::new(0.0, 0.0) {
                continue;
            }
            samples.iter_mut().zip(g).for_each(|(s, gi)| *s += v * gi);
        }
    }

    /// Overlap `sum conj(g_j) * field * pitch` for every port.
    pub fn couple(&self, field: &ComplexField1D) -> Result<Vec<Complex64>> {
        if field.len() != self.profiles[0].len() || field.pitch() != self.pitch {
            return Err(Error::Shape(format!(
                "field grid ({} samples, pitch {}) does not match the port grid ({} samples, pitch {})",
                field.len(),
                field.pitch(),
                self.profiles[0].len(),
                self.pitch
            )));
        }
        Ok(self.couple_samples(field.samples()))
    }

    pub(crate) fn couple_samples(&self, samples: &[Complex64]) -> Vec<Complex64> {
        self.profiles
            .iter()
            .map(|g| samples.iter().zip(g).map(|(s, gi)| s * gi).sum::<Complex64>() * self.pitch)
            .collect()
    }
}

/// Launches the input port amplitudes of `geometry` as a field.
pub fn inject_ports(values: &[Complex64], geometry: &DpuGeometry, mode_halfwidth: f64) -> Result<ComplexField1D> {
    PortModes::new(geometry, geometry.n_in, mode_halfwidth)?.inject(values)
}

/// Projects `field` onto the output port modes of `geometry`.
pub fn couple_ports(field: &ComplexField1D, geometry: &DpuGeometry, mode_halfwidth: f64) -> Result<Vec<Complex64>> {
    PortModes::new(geometry, geometry.n_out, mode_halfwidth)?.couple(field)
}
