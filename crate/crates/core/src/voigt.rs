//! Faddeeva function and Voigt profiles.
//!
//! w(z) = e^{−z²} erfc(−iz) for Im z > 0 by Weideman's rational expansion
//! with 32 terms.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

const TERMS: usize = 32;

fn coefficients() -> &'static (f64, [f64; TERMS]) {
    static COEFFS: OnceLock<(f64, [f64; TERMS])> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let n = TERMS as f64;
        let l = (n / 2f64.sqrt()).sqrt();
        let m = 2 * TERMS;
        let f: Vec<(i64, f64)> = (-(m as i64) + 1..m as i64)
            .map(|k| {
                let theta = k as f64 * PI / m as f64;
                let t = l * (theta / 2.0).tan();
                (k, (-t * t).exp() * (l * l + t * t))
            })
            .collect();
        let mut a = [0.0; TERMS];
        for (j, slot) in a.iter_mut().enumerate() {
            let j = (j + 1) as f64;
            let s: f64 = f
                .iter()
                .map(|&(k, v)| v * (PI * j * k as f64 / m as f64).cos())
                .sum();
            *slot = s / (2 * m) as f64;
        }
        (l, a)
    })
}

/// Faddeeva function for Im z > 0.
pub fn faddeeva(z: Complex64) -> Complex64 {
    let (l, a) = coefficients();
    let i = Complex64::i();
    let denom = *l - i * z;
    let big_z = (*l + i * z) / denom;
    let mut p = Complex64::new(0.0, 0.0);
    for c in a.iter().rev() {
        p = p * big_z + c;
    }
    2.0 * p / (denom * denom) + 1.0 / (PI.sqrt() * denom)
}

/// Lorentzian of half-width `gamma`, unit area.
pub fn lorentzian(x: f64, gamma: f64) -> f64 {
    gamma / PI / (x * x + gamma * gamma)
}

/// Unit-area convolution of a Gaussian (std `sigma`) with a Lorentzian (HWHM `gamma`).
pub fn voigt(x: f64, sigma: f64, gamma: f64) -> f64 {
    if sigma == 0.0 {
        return lorentzian(x, gamma);
    }
    let s2 = sigma * 2f64.sqrt();
    let z = Complex64::new(x / s2, gamma / s2);
    faddeeva(z).re / (sigma * (2.0 * PI).sqrt())
}

/// Voigt profile far from its centre: L(x) + σ²L''(x)/2.
///
/// The next term is smaller by about 15σ²/x².
pub fn voigt_far(x: f64, sigma: f64, gamma: f64) -> f64 {
    let r = x * x + gamma * gamma;
    let l2 = gamma / PI * (6.0 * x * x - 2.0 * gamma * gamma) / (r * r * r);
    lorentzian(x, gamma) + 0.5 * sigma * sigma * l2
}

/// ∫_a^b of a Voigt profile centred at 0.
///
/// The Lorentzian part integrates in closed form; the Gaussian average is a
/// trapezoid rule, which converges geometrically for a Gaussian weight.
pub fn voigt_mass(a: f64, b: f64, sigma: f64, gamma: f64) -> f64 {
    let lorentz = |s: f64| (((b - s) / gamma).atan() - ((a - s) / gamma).atan()) / PI;
    if sigma == 0.0 {
        return lorentz(0.0);
    }
    let h = sigma / 4.0;
    let n = 48;
    let norm = h / (sigma * (2.0 * PI).sqrt());
    (-n..=n)
        .map(|i| {
            let s = i as f64 * h;
            (-0.5 * (s / sigma).powi(2)).exp() * lorentz(s)
        })
        .sum::<f64>()
        * norm
}
