//! Direct Rayleigh-Sommerfeld summation used as an independent check on the
//! angular-spectrum propagator.

use std::f64::consts::PI;

use dgnn::photonics::ComplexField1D;
use dgnn::Complex64;

/// `H_1^(1)(x)` from its large-argument asymptotic series; the first ten
/// terms are accurate far beyond f64 precision once `x > 100`.
pub fn hankel1_order1(x: f64) -> Complex64 {
    assert!(x > 50.0, "asymptotic Hankel series used outside its range");
    let mu = 4.0;
    let mut term = 1.0;
    let mut sum = Complex64::new(1.0, 0.0);
    let mut i_pow = Complex64::new(1.0, 0.0);
    for k in 1..10 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        i_pow *= Complex64::new(0.0, 1.0);
        sum += i_pow * term;
    }
    Complex64::from_polar((2.0 / (PI * x)).sqrt(), x - 0.75 * PI) * sum
}

/// Direct discrete convolution with `-2 dG/dz`, `G = (i/4) H_0^(1)(k r)`.
pub fn rayleigh_sommerfeld(field: &ComplexField1D, z: f64, wavelength: f64, n_eff: f64) -> Vec<Complex64> {
    let k = 2.0 * PI * n_eff / wavelength;
    (0..field.len())
        .map(|m| {
            let xm = field.coordinate(m);
            field
                .samples()
                .iter()
                .enumerate()
                .filter(|(_, u)| u.norm_sqr() > 0.0)
                .map(|(s, u)| {
                    let r = ((xm - field.coordinate(s)).powi(2) + z * z).sqrt();
                    let kernel = Complex64::new(0.0, k * z / (2.0 * r)) * hankel1_order1(k * r);
                    kernel * u * field.pitch()
                })
                .sum()
        })
        .collect()
}

pub fn relative_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
