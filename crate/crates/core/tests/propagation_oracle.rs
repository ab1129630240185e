//! Angular-spectrum propagation checked against direct summation of the
//! 2-D Rayleigh-Sommerfeld kernel.

mod common;

use common::{hankel1_order1, rayleigh_sommerfeld, relative_l2};
use dgnn::photonics::{propagate, ComplexField1D, DpuGeometry};
use dgnn::Complex64;

#[test]
fn hankel_series_matches_reference_values() {
    // J1(100) = -0.07714535201411214, Y1(100) = -0.02037231200275981 (scipy)
    let h = hankel1_order1(100.0);
    assert!((h.re + 0.077_145_352_014_112_14).abs() < 1e-14);
    assert!((h.im + 0.020_372_312_002_759_81).abs() < 1e-14);
}

#[test]
fn point_source_matches_direct_summation() {
    let geo = DpuGeometry::synthetic();
    let n = geo.field_len();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    samples[n / 2] = Complex64::new(1.0, 0.0);
    let field = ComplexField1D::new(samples, geo.field_pitch(), geo.field_origin()).unwrap();
    let z = 20e-6;
    let asm = propagate(&field, z, geo.wavelength, geo.effective_index, geo.pad_factor).unwrap();
    let direct = rayleigh_sommerfeld(&field, z, geo.wavelength, geo.effective_index);
    let err = relative_l2(asm.samples(), &direct);
    println!("point source, z = 20 um: relative L2 error {err:.4}");
    assert!(err <= 0.02, "relative L2 error {err}");
}

#[test]
fn off_center_sources_match_direct_summation() {
    let geo = DpuGeometry::synthetic();
    let n = geo.field_len();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    samples[n / 5] = Complex64::new(0.6, 0.2);
    samples[2 * n / 3] = Complex64::new(-0.3, 0.9);
    let field = ComplexField1D::new(samples, geo.field_pitch(), geo.field_origin()).unwrap();
    let z = 20e-6;
    let asm = propagate(&field, z, geo.wavelength, geo.effective_index, geo.pad_factor).unwrap();
    let direct = rayleigh_sommerfeld(&field, z, geo.wavelength, geo.effective_index);
    let err = relative_l2(asm.samples(), &direct);
    assert!(err <= 0.02, "relative L2 error {err}");
}
