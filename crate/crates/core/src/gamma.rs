//! Complex log-Gamma and the Gamma-ratio spectral multiplier.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

// Lanczos approximation, g = 7, n = 9 (Godfrey's coefficients).
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Principal branch of `log Γ(z)` up to the branch of the imaginary part;
/// only `exp` and real parts are used downstream.
pub fn ln_gamma(z: C64) -> C64 {
    if z.re < 0.5 {
        // reflection: Γ(z)Γ(1−z) = π / sin(πz)
        return C64::new(PI.ln(), 0.0) - (PI * z).sin().ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = C64::new(LANCZOS_COEFFS[0], 0.0);
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// `Γ(1/4−L)Γ(1/4+L) / (Γ(3/4−L)Γ(3/4+L))` with `L = (i/2)√(λ − 1/4)`.
///
/// For `λ ≥ 1/4` this is `|Γ(1/4+iy)|² / |Γ(3/4+iy)|²` with `y = √(λ−1/4)/2`;
/// below `1/4` `L` is real and the product is even in it. The ratio decreases
/// in `λ` and behaves like `2/√λ` for large `λ`.
pub fn gamma_ratio(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "gamma_ratio needs a positive eigenvalue, got {lambda}"
        )));
    }
    let l = if lambda >= 0.25 {
        C64::new(0.0, 0.5 * (lambda - 0.25).sqrt())
    } else {
        C64::new(0.5 * (0.25 - lambda).sqrt(), 0.0)
    };
    Ok(gamma_ratio_at(l))
}

/// The multiplier as a function of `L` itself.
pub fn gamma_ratio_at(l: C64) -> f64 {
    let q = C64::new(0.25, 0.0);
    let h = C64::new(0.75, 0.0);
    let log = ln_gamma(q - l) + ln_gamma(q + l) - ln_gamma(h - l) - ln_gamma(h + l);
    log.re.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_values() {
        // Γ(1/2) = √π, Γ(5) = 24, Γ(1/4) = 3.6256099082219083
        assert!((ln_gamma(C64::new(0.5, 0.0)).re - PI.sqrt().ln()).abs() < 1e-14);
        assert!((ln_gamma(C64::new(5.0, 0.0)).re - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(C64::new(0.25, 0.0)).re.exp() - 3.625_609_908_221_908_3).abs() < 1e-13);
        assert!((ln_gamma(C64::new(-0.5, 0.0)).re.exp() - 2.0 * PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn imaginary_axis_modulus() {
        // |Γ(iy)|² = π / (y sinh πy), |Γ(1/2+iy)|² = π / cosh πy
        for y in [0.3, 1.0, 2.5, 7.0] {
            let a = (2.0 * ln_gamma(C64::new(0.0, y)).re).exp();
            assert!((a / (PI / (y * (PI * y).sinh())) - 1.0).abs() < 1e-12);
            let b = (2.0 * ln_gamma(C64::new(0.5, y)).re).exp();
            assert!((b / (PI / (PI * y).cosh()) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_eigenvalue() {
        let expected = (3.625_609_908_221_908_3f64 / 1.225_416_702_465_177_6).powi(2);
        assert!((gamma_ratio(0.25).unwrap() - expected).abs() < 1e-12 * expected);
        assert!((expected - 8.753_76).abs() < 1e-5);
    }

    #[test]
    fn even_in_l() {
        let l = 0.5 * (0.25f64 - 0.1).sqrt();
        let a = gamma_ratio_at(C64::new(l, 0.0));
        let b = gamma_ratio_at(C64::new(-l, 0.0));
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * a);
        assert_eq!(gamma_ratio(0.1).unwrap(), a);
    }

    #[test]
    fn decreasing_and_asymptotic() {
        let mut prev = f64::INFINITY;
        for i in 1..400 {
            let lambda = 0.01 * 1.04f64.powi(i);
            let r = gamma_ratio(lambda).unwrap();
            assert!(r > 0.0 && r < prev);
            prev = r;
        }
        let lambda = 1e4;
        let scaled = gamma_ratio(lambda).unwrap() * lambda.sqrt();
        assert!((scaled - 2.0).abs() < 0.01 * 2.0, "{scaled}");
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(gamma_ratio(0.0).is_err());
        assert!(gamma_ratio(-1.0).is_err());
    }
}
