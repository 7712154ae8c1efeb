//! Scalar special functions.

use std::f64::consts::PI;

/// Bessel function of the first kind, order zero.
///
/// Trapezoidal rule on `J0(x) = (1/2pi) int cos(x sin t) dt` for `|x| <= 25`
/// (exponentially convergent for a periodic integrand), Hankel asymptotic
/// expansion beyond. Both branches are accurate to about 1e-14 absolute.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 25.0 {
        // Aliasing error is bounded by 2|J_M(x)|, negligible once M > e x / 2 + 40.
        let m = (1.5 * x) as usize + 48;
        let step = 2.0 * PI / m as f64;
        (0..m).map(|k| (x * (step * k as f64).sin()).cos()).sum::<f64>() / m as f64
    } else {
        // term_k = prod_{j<=k} (2j-1)^2 / (8 j x)
        let mut p = 0.0;
        let mut q = 0.0;
        let mut term = 1.0_f64;
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            if term.abs() < 1e-17 || term.abs() > prev {
                break;
            }
            match k % 4 {
                0 => p += term,
                1 => q += term,
                2 => p -= term,
                _ => q -= term,
            }
            prev = term.abs();
            let j = (k + 1) as f64;
            let odd = 2.0 * j - 1.0;
            term *= odd * odd / (8.0 * j * x);
        }
        // p = P(x), q = -Q(x) in J0 = sqrt(2/(pi x)) (P cos chi - Q sin chi).
        let chi = x - 0.25 * PI;
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() + q * chi.sin())
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}
