//! Inverse tangent integral Ti₂(u) = ∫₀ᵘ atan(t)/t dt.

use std::f64::consts::FRAC_PI_2;

use crate::quadrature::gauss_legendre_24;

fn series(u: f64) -> f64 {
    let u2 = u * u;
    let mut term = u;
    let mut sum = 0.0;
    for n in 0..200 {
        let k = (2 * n + 1) as f64;
        let add = term / (k * k);
        sum += if n % 2 == 0 { add } else { -add };
        if add < 1e-17 * sum.abs() {
            break;
        }
        term *= u2;
    }
    sum
}

/// Inverse tangent integral. Odd in `u`; grows like (π/2)·ln u for large u.
pub fn ti2(u: f64) -> f64 {
    if u < 0.0 {
        return -ti2(-u);
    }
    if u <= 0.5 {
        series(u)
    } else if u >= 2.0 {
        series(1.0 / u) + FRAC_PI_2 * u.ln()
    } else {
        let (x, w) = gauss_legendre_24();
        let h = 0.5 * u;
        x.iter()
            .zip(w)
            .map(|(xi, wi)| {
                let t = h * (xi + 1.0);
                wi * t.atan() / t
            })
            .sum::<f64>()
            * h
    }
}
