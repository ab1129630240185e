use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;

use crate::{Error, Result};

pub const MIN_WIDTH_NM: f64 = 0.0;
pub const MAX_WIDTH_NM: f64 = 100.0;

/// Phase shift of the widest slot under the default table.
pub const DEFAULT_MAX_PHASE: f64 = 1.55;

const LUT_HEADER: &str = "# metaatom-lut v1";

/// Slot width to complex transmission table of a meta-atom, with linear
/// interpolation between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaAtomLut {
    widths: Vec<f64>,
    phases: Vec<f64>,
    amplitudes: Vec<f64>,
}

/// Interpolated table entry with its slope in width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutSample {
    pub amplitude: f64,
    pub phase: f64,
    pub d_amplitude: f64,
    pub d_phase: f64,
}

impl Default for MetaAtomLut {
    /// Lossless table with phase linear in width over `[0, 1.55]` rad.
    fn default() -> Self {
        let widths: Vec<f64> = (0..=100).map(f64::from).collect();
        let phases = (0..=100)
            .map(|i| DEFAULT_MAX_PHASE * f64::from(i) / 100.0)
            .collect();
        Self {
            widths,
            phases,
            amplitudes: vec![1.0; 101],
        }
    }
}

impl MetaAtomLut {
    pub fn new(widths: Vec<f64>, phases: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if widths.len() < 2 || widths.len() != phases.len() || widths.len() != amplitudes.len() {
            return Err(Error::Shape(format!(
                "lookup table needs >= 2 aligned rows (widths {}, phases {}, amplitudes {})",
                widths.len(),
                phases.len(),
                amplitudes.len()
            )));
        }
        if widths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("lookup table widths must be strictly increasing".into()));
        }
        if widths[0] != MIN_WIDTH_NM || widths[widths.len() - 1] != MAX_WIDTH_NM {
            return Err(Error::Domain(format!(
                "lookup table must span [{MIN_WIDTH_NM}, {MAX_WIDTH_NM}] nm"
            )));
        }
        if amplitudes.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Domain("lookup table amplitudes must lie in [0, 1]".into()));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("lookup table phases must be finite".into()));
        }
        Ok(Self {
            widths,
            phases,
            amplitudes,
        })
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn amplitude_max(&self) -> f64 {
        self.amplitudes.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_default(&self) -> bool {
        *self == Self::default()
    }

    /// Interpolated amplitude, phase and their width derivatives.
    ///
    /// On an interior grid point the slope of the segment to the right is
    /// used; at the upper end the last segment's slope.
    pub fn sample(&self, width: f64) -> Result<LutSample> {
        if !(MIN_WIDTH_NM..=MAX_WIDTH_NM).contains(&width) {
            return Err(Error::Domain(format!(
                "slot width {width} nm outside [{MIN_WIDTH_NM}, {MAX_WIDTH_NM}]"
            )));
        }
        let last = self.widths.len() - 2;
        let seg = match self.widths.partition_point(|&w| w <= width) {
            0 => 0,
            p => (p - 1).min(last),
        };
        let (w0, w1) = (self.widths[seg], self.widths[seg + 1]);
        let span = w1 - w0;
        let t = (width - w0) / span;
        let lerp = |v: &[f64]| {
            if t == 0.0 {
                v[seg]
            } else if t == 1.0 {
                v[seg + 1]
            } else {
                v[seg] + t * (v[seg + 1] - v[seg])
            }
        };
        Ok(LutSample {
            amplitude: lerp(&self.amplitudes),
            phase: lerp(&self.phases),
            d_amplitude: (self.amplitudes[seg + 1] - self.amplitudes[seg]) / span,
            d_phase: (self.phases[seg + 1] - self.phases[seg]) / span,
        })
    }

    /// Parses the `# metaatom-lut v1` text format: `width_nm phase_rad [amplitude]`
    /// per line, `#` comments allowed after the header.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == LUT_HEADER => {}
            Some((_, first)) => {
                return Err(Error::Version {
                    path: path.into(),
                    expected: LUT_HEADER.into(),
                    found: first.trim().into(),
                })
            }
            None => return Err(Error::parse(path, 1, "empty lookup table file")),
        }
        let (mut widths, mut phases, mut amplitudes) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if !(2..=3).contains(&cols.len()) {
                return Err(Error::parse(path, i + 1, "expected 2 or 3 numeric columns"));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::parse(path, i + 1, format!("bad number {s:?}: {e}")))
            };
            widths.push(num(cols[0])?);
            phases.push(num(cols[1])?);
            amplitudes.push(if cols.len() == 3 { num(cols[2])? } else { 1.0 });
        }
        Self::new(widths, phases, amplitudes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(LUT_HEADER);
        out.push('\n');
        for ((w, p), a) in self.widths.iter().zip(&self.phases).zip(&self.amplitudes) {
            let _ = writeln!(out, "{w} {p} {a}");
        }
        out
    }
}

/// `amplitude(w) * exp(i * phase(w))` from the table.
pub fn width_to_coefficient(width: f64, lut: &MetaAtomLut) -> Result<Complex64> {
    let s = lut.sample(width)?;
    Ok(Complex64::from_polar(s.amplitude, s.phase))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_endpoints_and_midpoint() {
        let lut = MetaAtomLut::default();
        assert_eq!(width_to_coefficient(0.0, &lut).unwrap(), Complex64::new(1.0, 0.0));
        let top = lut.sample(100.0).unwrap();
        assert_eq!(top.amplitude, 1.0);
        assert_eq!(top.phase, 1.55);
        assert_eq!(lut.sample(50.0).unwrap().phase, 0.775);
    }

    #[test]
    fn width_outside_range_is_domain_error() {
        let lut = MetaAtomLut::default();
        assert!(matches!(lut.sample(-0.1), Err(Error::Domain(_))));
        assert!(matches!(lut.sample(100.5), Err(Error::Domain(_))));
        assert!(matches!(lut.sample(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn interpolation_between_grid_points() {
        let lut = MetaAtomLut::new(vec![0.0, 40.0, 100.0], vec![0.0, 1.0, 1.3], vec![1.0, 0.8, 0.5]).unwrap();
        let s = lut.sample(20.0).unwrap();
        assert!((s.phase - 0.5).abs() < 1e-15);
        assert!((s.amplitude - 0.9).abs() < 1e-15);
        assert!((s.d_phase - 1.0 / 40.0).abs() < 1e-15);
        let s = lut.sample(100.0).unwrap();
        assert!((s.d_amplitude + 0.3 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn coefficients_never_exceed_unit_modulus() {
        let lut = MetaAtomLut::new(vec![0.0, 50.0, 100.0], vec![0.0, 0.7, 1.55], vec![1.0, 0.6, 0.9]).unwrap();
        for i in 0..=1000 {
            let c = width_to_coefficient(f64::from(i) * 0.1, &lut).unwrap();
            assert!(c.norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(MetaAtomLut::new(vec![0.0, 0.0, 100.0], vec![0.0; 3], vec![1.0; 3]).is_err());
        assert!(MetaAtomLut::new(vec![0.0, 90.0], vec![0.0; 2], vec![1.0; 2]).is_err());
        assert!(MetaAtomLut::new(vec![0.0, 100.0], vec![0.0; 2], vec![1.0, 1.2]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let lut = MetaAtomLut::new(vec![0.0, 33.3, 100.0], vec![0.0, 0.4, 1.55], vec![1.0, 0.95, 0.9]).unwrap();
        let back = MetaAtomLut::parse(&lut.to_text(), Path::new("mem")).unwrap();
        assert_eq!(back, lut);
        let two_col = "# metaatom-lut v1\n0 0\n# comment\n100 1.2\n";
        let parsed = MetaAtomLut::parse(two_col, Path::new("mem")).unwrap();
        assert_eq!(parsed.amplitudes(), &[1.0, 1.0]);
        assert!(matches!(
            MetaAtomLut::parse("# other\n0 0\n", Path::new("mem")),
            Err(Error::Version { .. })
        ));
    }
}
