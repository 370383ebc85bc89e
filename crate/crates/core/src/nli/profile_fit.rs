//! Least-squares fit of a normalized power profile onto a fixed family of
//! exponentials, the parametric form the closed-form NLI integrals need.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One basis function d·b(z). A decaying term (`rate` > 0) is anchored at
/// z = 0, b(z) = e^{−rate·z}; a growing term (`rate` < 0) is anchored at the
/// span end, b(z) = e^{rate·(L − z)}, so b ≤ 1 over the span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTerm {
    /// λ in ρ ∝ e^{−λz}, 1/km.
    pub rate: f64,
    pub coefficient: f64,
    /// b(0)
    pub start: f64,
    /// b(L)
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFit {
    pub terms: Vec<FitTerm>,
    pub span_length: f64,
    /// RMS misfit relative to the RMS of the profile.
    pub relative_rms: f64,
}

impl ExponentialFit {
    pub fn eval(&self, z: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let b = if t.rate >= 0.0 {
                    (-t.rate * z).exp()
                } else {
                    (t.rate * (self.span_length - z)).exp()
                };
                t.coefficient * b
            })
            .sum()
    }
}

/// Fits `rho` sampled on `z` with decaying and growing exponentials whose
/// rates are `multipliers`·`alpha`. `ridge` scales a Tikhonov term relative
/// to the largest diagonal entry of the normal matrix.
pub fn fit_profile(z: &[f64], rho: &[f64], alpha: f64, multipliers: &[f64], ridge: f64) -> Result<ExponentialFit> {
    if z.len() != rho.len() || z.len() < 2 {
        return Err(Error::invalid("profile and grid lengths differ"));
    }
    if !(alpha > 0.0) || multipliers.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::invalid("fit rates must be positive"));
    }
    let span = *z.last().unwrap();
    let mut rates = Vec::with_capacity(2 * multipliers.len());
    for m in multipliers {
        rates.push(m * alpha);
    }
    for m in multipliers {
        rates.push(-m * alpha);
    }
    let basis = |rate: f64, zz: f64| {
        if rate >= 0.0 {
            (-rate * zz).exp()
        } else {
            (rate * (span - zz)).exp()
        }
    };
    let a = DMatrix::from_fn(z.len(), rates.len(), |i, j| basis(rates[j], z[i]));
    let y = DVector::from_column_slice(rho);
    let mut normal = a.transpose() * &a;
    let scale = (0..rates.len()).map(|j| normal[(j, j)]).fold(0.0, f64::max);
    for j in 0..rates.len() {
        normal[(j, j)] += ridge * scale;
    }
    let rhs = a.transpose() * &y;
    let coef = normal
        .cholesky()
        .ok_or_else(|| Error::invalid("profile fit normal equations are singular"))?
        .solve(&rhs);
    let fitted = &a * &coef;
    let misfit = (&fitted - &y).norm();
    let size = y.norm();
    let terms = rates
        .iter()
        .zip(coef.iter())
        .map(|(&rate, &coefficient)| FitTerm {
            rate,
            coefficient,
            start: basis(rate, 0.0),
            end: basis(rate, span),
        })
        .collect();
    Ok(ExponentialFit {
        terms,
        span_length: span,
        relative_rms: if size > 0.0 { misfit / size } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..=100).map(|i| i as f64).collect()
    }

    const MULT: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

    #[test]
    fn pure_attenuation_is_reproduced() {
        let z = grid();
        let alpha = 0.046;
        let rho: Vec<f64> = z.iter().map(|zz| (-alpha * zz).exp()).collect();
        let fit = fit_profile(&z, &rho, alpha, &MULT, 1e-10).unwrap();
        assert!(fit.relative_rms < 1e-6, "{}", fit.relative_rms);
        for (zz, r) in z.iter().zip(&rho) {
            assert!((fit.eval(*zz) - r).abs() < 1e-5);
        }
    }

    #[test]
    fn backward_pumped_shape() {
        // loss with a gain rise towards the span end
        let z = grid();
        let alpha = 0.046;
        let rho: Vec<f64> = z
            .iter()
            .map(|zz| (-alpha * zz + 3.0 * (-(100.0 - zz) * 0.05).exp() - 3.0 * (-5.0f64).exp()).exp())
            .collect();
        let fit = fit_profile(&z, &rho, alpha, &MULT, 1e-10).unwrap();
        assert!(fit.relative_rms < 0.02, "{}", fit.relative_rms);
    }

    #[test]
    fn rejects_bad_input() {
        let z = grid();
        assert!(fit_profile(&z, &z[..10], 0.05, &MULT, 1e-10).is_err());
        assert!(fit_profile(&z, &z, 0.0, &MULT, 1e-10).is_err());
    }
}
