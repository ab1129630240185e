use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ComplexField1D, MetaAtomLut, PortModes, Propagator, MAX_WIDTH_NM, MIN_WIDTH_NM};
use crate::linalg::CMatrix;
use crate::{Error, Result};

/// Physical layout of a diffractive photonic unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpuGeometry {
    pub num_layers: usize,
    pub atoms_per_line: usize,
    /// Meta-atom period in meters.
    pub atom_pitch: f64,
    /// Spacing between consecutive planes (input, metalines, output) in meters.
    pub layer_distance: f64,
    /// Vacuum wavelength in meters.
    pub wavelength: f64,
    pub effective_index: f64,
    pub n_in: usize,
    pub n_out: usize,
    /// Consecutive meta-atoms sharing one slot width.
    pub group_size: usize,
    /// Field samples per meta-atom.
    pub oversample: usize,
    /// Zero-padding multiple applied before each FFT.
    pub pad_factor: usize,
    /// 1/e half-width of the waveguide mode amplitude in meters.
    pub mode_halfwidth: f64,
}

impl Default for DpuGeometry {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl DpuGeometry {
    pub const DEFAULT_ATOM_PITCH: f64 = 300e-9;
    pub const DEFAULT_WAVELENGTH: f64 = 1.55e-6;
    pub const DEFAULT_EFFECTIVE_INDEX: f64 = 2.85;
    pub const DEFAULT_MODE_HALFWIDTH: f64 = 0.5e-6;
    pub const DEFAULT_OVERSAMPLE: usize = 4;
    pub const DEFAULT_PAD_FACTOR: usize = 8;

    fn base(num_layers: usize, atoms: usize, distance: f64, n_in: usize, n_out: usize) -> Self {
        Self {
            num_layers,
            atoms_per_line: atoms,
            atom_pitch: Self::DEFAULT_ATOM_PITCH,
            layer_distance: distance,
            wavelength: Self::DEFAULT_WAVELENGTH,
            effective_index: Self::DEFAULT_EFFECTIVE_INDEX,
            n_in,
            n_out,
            group_size: 3,
            oversample: Self::DEFAULT_OVERSAMPLE,
            pad_factor: Self::DEFAULT_PAD_FACTOR,
            mode_halfwidth: Self::DEFAULT_MODE_HALFWIDTH,
        }
    }

    /// 3 metalines of 90 atoms, 20 um apart, 3 inputs, 2 outputs.
    pub fn synthetic() -> Self {
        Self::base(3, 90, 20e-6, 3, 2)
    }

    /// 4 metalines of 600 atoms, 100 um apart, 20 inputs, 2 outputs.
    pub fn benchmark() -> Self {
        Self::base(4, 600, 100e-6, 20, 2)
    }

    /// All-optical output classifier: 6 metalines on the benchmark layout.
    pub fn classifier(n_in: usize, n_classes: usize) -> Self {
        Self::base(6, 600, 100e-6, n_in, n_classes)
    }

    /// Skeleton joint transform: 6 metalines, 3 coordinate inputs.
    pub fn skeleton() -> Self {
        Self::base(6, 600, 100e-6, 3, 2)
    }

    /// Per-head graph read-out: 5 metalines, 2 in, 2 out.
    pub fn readout() -> Self {
        Self::base(5, 600, 100e-6, 2, 2)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.num_layers == 0 {
            return bad("a DPU needs at least one metaline".into());
        }
        if self.group_size == 0 || self.atoms_per_line == 0 || self.atoms_per_line % self.group_size != 0 {
            return bad(format!(
                "atoms_per_line {} must be a positive multiple of group_size {}",
                self.atoms_per_line, self.group_size
            ));
        }
        if self.n_in == 0 || self.n_out == 0 || self.n_in > self.atoms_per_line || self.n_out > self.atoms_per_line {
            return bad(format!(
                "port counts ({} in, {} out) must be in [1, {}]",
                self.n_in, self.n_out, self.atoms_per_line
            ));
        }
        if self.oversample == 0 || self.pad_factor == 0 {
            return bad("oversample and pad_factor must be >= 1".into());
        }
        for (name, v) in [
            ("atom_pitch", self.atom_pitch),
            ("wavelength", self.wavelength),
            ("effective_index", self.effective_index),
            ("mode_halfwidth", self.mode_halfwidth),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.layer_distance >= 0.0) {
            return bad(format!("layer_distance must be >= 0, got {}", self.layer_distance));
        }
        Ok(())
    }

    pub fn groups_per_line(&self) -> usize {
        self.atoms_per_line / self.group_size
    }

    pub fn aperture(&self) -> f64 {
        self.atoms_per_line as f64 * self.atom_pitch
    }

    pub fn field_len(&self) -> usize {
        self.atoms_per_line * self.oversample
    }

    pub fn field_pitch(&self) -> f64 {
        self.atom_pitch / self.oversample as f64
    }

    /// Coordinate of the first field sample (center of the first sub-cell).
    pub fn field_origin(&self) -> f64 {
        0.5 * self.field_pitch()
    }

    /// Group index covering field sample `s`.
    pub fn group_of_sample(&self, s: usize) -> usize {
        s / (self.group_size * self.oversample)
    }
}

/// Additive coefficient-space perturbation, one entry per layer and group.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientNoise {
    pub phase: Vec<Vec<f64>>,
    pub amplitude: Vec<Vec<f64>>,
}

/// Trainable slot widths of one DPU.
#[derive(Debug, Clone, PartialEq)]
pub struct DpuParams {
    pub geometry: DpuGeometry,
    /// `[layer][group]` widths in nm.
    pub widths: Vec<Vec<f64>>,
    pub binary: bool,
    pub noise: Option<CoefficientNoise>,
}

/// Complex transmission of one width group and its derivative in width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupCoefficient {
    pub value: Complex64,
    pub d_width: Complex64,
}

/// Nearest of {0, 100} nm; 50 rounds up.
pub fn quantize_width(w: f64) -> f64 {
    if w >= 0.5 * (MIN_WIDTH_NM + MAX_WIDTH_NM) {
        MAX_WIDTH_NM
    } else {
        MIN_WIDTH_NM
    }
}

impl DpuParams {
    pub fn new(geometry: DpuGeometry, widths: Vec<Vec<f64>>, binary: bool) -> Result<Self> {
        let p = Self {
            geometry,
            widths,
            binary,
            noise: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(geometry: DpuGeometry, width: f64) -> Result<Self> {
        let widths = vec![vec![width; geometry.groups_per_line()]; geometry.num_layers];
        Self::new(geometry, widths, false)
    }

    /// Widths drawn uniformly from `[0, 100]` nm.
    pub fn random<R: Rng + ?Sized>(geometry: DpuGeometry, rng: &mut R) -> Result<Self> {
        geometry.validate()?;
        let widths = (0..geometry.num_layers)
            .map(|_| {
                (0..geometry.groups_per_line())
                    .map(|_| rng.random_range(MIN_WIDTH_NM..=MAX_WIDTH_NM))
                    .collect()
            })
            .collect();
        Self::new(geometry, widths, false)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let groups = self.geometry.groups_per_line();
        if self.widths.len() != self.geometry.num_layers || self.widths.iter().any(|r| r.len() != groups) {
            return Err(Error::Shape(format!(
                "width matrix must be {} x {}",
                self.geometry.num_layers, groups
            )));
        }
        for w in self.widths.iter().flatten() {
            if self.binary {
                if *w != MIN_WIDTH_NM && *w != MAX_WIDTH_NM {
                    return Err(Error::Domain(format!("binary DPU has non-binary width {w}")));
                }
            } else if !(MIN_WIDTH_NM..=MAX_WIDTH_NM).contains(w) {
                return Err(Error::Domain(format!("width {w} outside [0, 100] nm")));
            }
        }
        if let Some(noise) = &self.noise {
            let ok = |m: &Vec<Vec<f64>>| m.len() == self.geometry.num_layers && m.iter().all(|r| r.len() == groups);
            if !ok(&noise.phase) || !ok(&noise.amplitude) {
                return Err(Error::Shape("noise matrices must match the width matrix".into()));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.geometry.num_layers * self.geometry.groups_per_line()
    }

    /// Per-group coefficients. With `quantize_forward` the forward value uses
    /// the binarized width while the derivative is still reported per unit of
    /// the stored (shadow) width.
    pub fn group_coefficients(&self, lut: &MetaAtomLut, quantize_forward: bool) -> Result<Vec<Vec<GroupCoefficient>>> {
        let amp_max = lut.amplitude_max();
        self.widths
            .iter()
            .enumerate()
            .map(|(l, row)| {
                row.iter()
                    .enumerate()
                    .map(|(g, &w)| {
                        let w_eff = if quantize_forward || self.binary { quantize_width(w) } else { w };
                        let s = lut.sample(w_eff)?;
                        let (mut amp, mut d_amp, mut phase) = (s.amplitude, s.d_amplitude, s.phase);
                        if let Some(noise) = &self.noise {
                            let raw = amp + noise.amplitude[l][g];
                            amp = raw.clamp(0.0, amp_max);
                            if amp != raw {
                                d_amp = 0.0;
                            }
                            phase += noise.phase[l][g];
                        }
                        let rot = Complex64::from_polar(1.0, phase);
                        Ok(GroupCoefficient {
                            value: rot * amp,
                            d_width: rot * Complex64::new(d_amp, amp * s.d_phase),
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Precomputed propagation and port operators for one geometry.
#[derive(Debug)]
pub struct DpuOptics {
    geometry: DpuGeometry,
    propagator: Propagator,
    inputs: PortModes,
    outputs: PortModes,
}

/// Forward record of one transfer-matrix evaluation, sufficient for the
/// reverse pass.
#[derive(Debug, Clone)]
pub struct DpuTape {
    matrix: CMatrix,
    coefficients: Vec<Vec<GroupCoefficient>>,
    /// `[layer][output port]` adjoint fields just after each metaline.
    adjoint_fields: Vec<Vec<Vec<Complex64>>>,
}

impl DpuOptics {
    pub fn new(geometry: &DpuGeometry) -> Result<Self> {
        geometry.validate()?;
        let propagator = Propagator::new(
            geometry.field_len(),
            geometry.field_pitch(),
            geometry.layer_distance,
            geometry.wavelength,
            geometry.effective_index,
            geometry.pad_factor,
        )?;
        Ok(Self {
            geometry: geometry.clone(),
            propagator,
            inputs: PortModes::new(geometry, geometry.n_in, geometry.mode_halfwidth)?,
            outputs: PortModes::new(geometry, geometry.n_out, geometry.mode_halfwidth)?,
        })
    }

    pub fn geometry(&self) -> &DpuGeometry {
        &self.geometry
    }

    fn check(&self, params: &DpuParams) -> Result<()> {
        if params.geometry != self.geometry {
            return Err(Error::Shape("DPU parameters built for a different geometry".into()));
        }
        Ok(())
    }

    fn modulate(&self, field: &mut [Complex64], layer: &[GroupCoefficient], conjugate: bool) {
        for (s, v) in field.iter_mut().enumerate() {
            let c = layer[self.geometry.group_of_sample(s)].value;
            *v *= if conjugate { c.conj() } else { c };
        }
    }

    /// Port-to-port evaluation by explicit field propagation.
    pub fn forward(&self, inputs: &[Complex64], params: &DpuParams, lut: &MetaAtomLut) -> Result<Vec<Complex64>> {
        self.check(params)?;
        let coeffs = params.group_coefficients(lut, false)?;
        self.forward_with(inputs, &coeffs)
    }

    pub(crate) fn forward_with(&self, inputs: &[Complex64], coeffs: &[Vec<GroupCoefficient>]) -> Result<Vec<Complex64>> {
        let mut field = self.inputs.inject(inputs)?.into_samples();
        for layer in coeffs {
            self.propagator.apply(&mut field);
            self.modulate(&mut field, layer, false);
        }
        self.propagator.apply(&mut field);
        Ok(self.outputs.couple_samples(&field))
    }

    /// Complex `n_out x n_in` transfer matrix, obtained by propagating each
    /// output mode backwards through the adjoint system.
    pub fn transfer(&self, params: &DpuParams, lut: &MetaAtomLut, quantize_forward: bool) -> Result<DpuTape> {
        self.check(params)?;
        let coefficients = params.group_coefficients(lut, quantize_forward)?;
        let n_layers = coefficients.len();
        let pitch = self.geometry.field_pitch();
        let mut adjoint_fields = vec![Vec::with_capacity(self.geometry.n_out); n_layers];
        let mut matrix = CMatrix::zeros(self.geometry.n_out, self.geometry.n_in);
        for o in 0..self.geometry.n_out {
            let mut b: Vec<Complex64> = self.outputs.profile(o).iter().map(|g| Complex64::new(g * pitch, 0.0)).collect();
            self.propagator.apply_adjoint(&mut b);
            for l in (0..n_layers).rev() {
                adjoint_fields[l].push(b.clone());
                self.modulate(&mut b, &coefficients[l], true);
                self.propagator.apply_adjoint(&mut b);
            }
            for j in 0..self.geometry.n_in {
                matrix[(o, j)] = b
                    .iter()
                    .zip(self.inputs.profile(j))
                    .map(|(bs, g)| bs.conj() * g)
                    .sum();
            }
        }
        Ok(DpuTape {
            matrix,
            coefficients,
            adjoint_fields,
        })
    }
}

impl DpuTape {
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn coefficients(&self) -> &[Vec<GroupCoefficient>] {
        &self.coefficients
    }

    /// Gradient with respect to each group coefficient, given the gradient
    /// `dL/dRe(M) + i dL/dIm(M)` of a real loss with respect to the matrix.
    pub fn coefficient_gradients(&self, optics: &DpuOptics, grad_matrix: &CMatrix) -> Result<Vec<Vec<Complex64>>> {
        let geo = &optics.geometry;
        if grad_matrix.rows() != geo.n_out || grad_matrix.cols() != geo.n_in {
            return Err(Error::Shape("matrix gradient has the wrong shape".into()));
        }
        let mut grads = vec![vec![Complex64::new(0.0, 0.0); geo.groups_per_line()]; self.coefficients.len()];
        let mut field = vec![Complex64::new(0.0, 0.0); geo.field_len()];
        for o in 0..geo.n_out {
            let drive: Vec<Complex64> = grad_matrix.row(o).iter().map(|g| g.conj()).collect();
            if drive.iter().all(|d| d.norm_sqr() == 0.0) {
                continue;
            }
            optics.inputs.inject_into(&drive, &mut field);
            for (l, layer) in self.coefficients.iter().enumerate() {
                optics.propagator.apply(&mut field);
                let b = &self.adjoint_fields[l][o];
                for (s, (u, bs)) in field.iter().zip(b).enumerate() {
                    grads[l][geo.group_of_sample(s)] += bs * u.conj();
                }
                optics.modulate(&mut field, layer, false);
            }
        }
        Ok(grads)
    }

    /// Chains coefficient gradients to real width gradients.
    pub fn width_gradients(&self, coefficient_grads: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
        coefficient_grads
            .iter()
            .zip(&self.coefficients)
            .map(|(g_row, c_row)| {
                g_row
                    .iter()
                    .zip(c_row)
                    .map(|(g, c)| (g.conj() * c.d_width).re)
                    .collect()
            })
            .collect()
    }
}

/// Multiplies each field sample by the coefficient of the meta-atom group
/// covering it. `layer_widths` holds one width per group.
pub fn apply_metaline(
    field: &ComplexField1D,
    layer_widths: &[f64],
    lut: &MetaAtomLut,
    geometry: &DpuGeometry,
) -> Result<ComplexField1D> {
    geometry.validate()?;
    if layer_widths.len() != geometry.groups_per_line() {
        return Err(Error::Shape(format!(
            "metaline has {} groups, got {} widths",
            geometry.groups_per_line(),
            layer_widths.len()
        )));
    }
    if field.len() != geometry.field_len() || (field.pitch() - geometry.field_pitch()).abs() > 1e-6 * geometry.field_pitch() {
        return Err(Error::Shape("field grid does not match the metaline aperture".into()));
    }
    let coeffs = layer_widths
        .iter()
        .map(|&w| super::width_to_coefficient(w, lut))
        .collect::<Result<Vec<_>>>()?;
    let mut out = field.clone();
    for (s, v) in out.samples_mut().iter_mut().enumerate() {
        *v *= coeffs[geometry.group_of_sample(s)];
    }
    Ok(out)
}

/// Runs `inputs` through inject, alternating propagation and metalines, a
/// final propagation and output coupling.
pub fn dpu_forward(inputs: &[Complex64], params: &DpuParams, lut: &MetaAtomLut) -> Result<Vec<Complex64>> {
    DpuOptics::new(&params.geometry)?.forward(inputs, params, lut)
}
