//! Closed-form SPM + XPM estimate with exponential-sum power profiles.
//!
//! With ρ(z) = Σ_m d_m b_m(z) and the fast-oscillating e^{±jφL} terms
//! dropped, the link function becomes
//! |η(φ)|² ≈ Σ_mn W_mn K_mn(φ),  W_mn = d_m d_n (b_m(0) b_n(0) + b_m(L) b_n(L)),
//! K_mn(φ) = [λ_m/(λ_m²+φ²) + λ_n/(λ_n²+φ²)] / (λ_m+λ_n),
//! with the limit (φ²−λ²)/(φ²+λ²)² when λ_m = −λ_n. The frequency integrals
//! of λ/(λ²+φ²) over the SPM square and the XPM rectangle have closed forms
//! in the inverse tangent integral.
//!
//! The dropped cross term −2·Re[e^{jφL} A(φ) B*(φ)], A = Σ d_m b_m(L)/(λ_m − jφ),
//! B = Σ d_m b_m(0)/(λ_m − jφ), is not small near φ = 0 when the profile ends
//! high (backward pumping). Both frequency domains map onto φ with a
//! logarithmic weight, so the cross term is added back by a short
//! Gauss–Legendre sum over its first few oscillation periods.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::profile_fit::{fit_profile, ExponentialFit};
use super::{NliInputs, NliPerChannel, GN_PREFACTOR};
use crate::error::Result;
use crate::quadrature::gauss_legendre;
use crate::raman::PowerEvolution;
use crate::special::ti2;
use crate::spectra::FiberSpec;
use crate::system::WdmGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormOptions {
    /// Fit rates as multiples of each channel's attenuation.
    pub rate_multipliers: Vec<f64>,
    pub ridge: f64,
    /// Number of cross-term periods (2π/L in φ) integrated numerically.
    pub cross_term_periods: f64,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        Self {
            rate_multipliers: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            ridge: 1e-10,
            cross_term_periods: 12.0,
        }
    }
}

/// Per-channel profile weights reduced to what the frequency integrals need.
struct Weights {
    rates: Vec<f64>,
    /// V_m = Σ_n W_mn/(λ_m+λ_n) over pairs with λ_m+λ_n ≠ 0.
    v: Vec<f64>,
    /// (|λ|, Σ W_mn) over ordered pairs with λ_m = −λ_n.
    limits: Vec<(f64, f64)>,
    /// d_m b_m(0) and d_m b_m(L).
    head: Vec<f64>,
    tail: Vec<f64>,
    span: f64,
    /// Cumulative ∫₀ cross dφ and ∫₀ cross·ln φ dφ at multiples of `step`.
    step: f64,
    i0: Vec<f64>,
    i1: Vec<f64>,
}

impl Weights {
    fn new(fit: &ExponentialFit, cutoff: f64, rule: &(Vec<f64>, Vec<f64>)) -> Self {
        let t = &fit.terms;
        let mut v = vec![0.0; t.len()];
        let mut limits: Vec<(f64, f64)> = Vec::new();
        for m in 0..t.len() {
            for n in 0..t.len() {
                let w = t[m].coefficient * t[n].coefficient * (t[m].start * t[n].start + t[m].end * t[n].end);
                let sum = t[m].rate + t[n].rate;
                if sum.abs() <= 1e-12 * t[m].rate.abs() {
                    let lam = t[m].rate.abs();
                    match limits.iter_mut().find(|(l, _)| *l == lam) {
                        Some(entry) => entry.1 += w,
                        None => limits.push((lam, w)),
                    }
                } else {
                    v[m] += w / sum;
                }
            }
        }
        let mut out = Self {
            rates: t.iter().map(|x| x.rate).collect(),
            v,
            limits,
            head: t.iter().map(|x| x.coefficient * x.start).collect(),
            tail: t.iter().map(|x| x.coefficient * x.end).collect(),
            span: fit.span_length,
            step: PI / fit.span_length,
            i0: vec![0.0],
            i1: vec![0.0],
        };
        let panels = (cutoff / out.step).ceil() as usize;
        for j in 0..panels {
            let (lo, hi) = (j as f64 * out.step, (j + 1) as f64 * out.step);
            let (p0, p1) = out.partial(lo, hi, rule);
            out.i0.push(out.i0[j] + p0);
            out.i1.push(out.i1[j] + p1);
        }
        out
    }

    /// The oscillating part of |η(φ)|² dropped from the pair weights.
    fn cross(&self, phi: f64) -> f64 {
        let mut a = Complex64::new(0.0, 0.0);
        let mut b = Complex64::new(0.0, 0.0);
        for ((&l, &h), &t) in self.rates.iter().zip(&self.head).zip(&self.tail) {
            let inv = Complex64::new(l, -phi).inv();
            a += t * inv;
            b += h * inv;
        }
        -2.0 * (Complex64::from_polar(1.0, phi * self.span) * a * b.conj()).re
    }

    /// (∫ cross, ∫ cross·ln φ) over [lo, hi] within one panel. From φ = 0 the
    /// substitution φ = hi·t² absorbs the log singularity.
    fn partial(&self, lo: f64, hi: f64, rule: &(Vec<f64>, Vec<f64>)) -> (f64, f64) {
        let (x, w) = rule;
        let (mut s0, mut s1) = (0.0, 0.0);
        if hi <= lo {
            return (0.0, 0.0);
        }
        if lo == 0.0 {
            for (xi, wi) in x.iter().zip(w) {
                let t = 0.5 * (xi + 1.0);
                let phi = hi * t * t;
                let g = wi * self.cross(phi) * hi * t;
                s0 += g;
                s1 += g * phi.ln();
            }
        } else {
            let h = 0.5 * (hi - lo);
            for (xi, wi) in x.iter().zip(w) {
                let phi = lo + h * (xi + 1.0);
                let g = wi * h * self.cross(phi);
                s0 += g;
                s1 += g * phi.ln();
            }
        }
        (s0, s1)
    }

    /// Cumulative integrals from 0 to `end` (at most the tabulated range).
    fn cumulative(&self, end: f64, rule: &(Vec<f64>, Vec<f64>)) -> (f64, f64) {
        let j = ((end / self.step).floor() as usize).min(self.i0.len() - 1);
        let (p0, p1) = self.partial(j as f64 * self.step, end, rule);
        (self.i0[j] + p0, self.i1[j] + p1)
    }

    /// ∫₀^E cross·ln(Φ/φ) dφ with E = min(Φ, cutoff).
    fn cross_square(&self, big: f64, cutoff: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let (a0, a1) = self.cumulative(big.min(cutoff), rule);
        big.ln() * a0 - a1
    }

    /// ∫₀^E cross·ln(u2/max(u1, φ/s)) dφ with E = min(s·u2, cutoff).
    fn cross_rectangle(&self, s: f64, u1: f64, u2: f64, cutoff: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
        let end = (s * u2).min(cutoff);
        let kink = (s * u1).min(end);
        let (e0, e1) = self.cumulative(end, rule);
        let (k0, k1) = if kink > 0.0 {
            self.cumulative(kink, rule)
        } else {
            (0.0, 0.0)
        };
        let flat = if kink > 0.0 { (u2 / u1).ln() * k0 } else { 0.0 };
        flat + (s * u2).ln() * (e0 - k0) - (e1 - k1)
    }

    /// ∫∫|η|² over a domain described by the two primitive integrals.
    fn integrate(&self, j: impl Fn(f64) -> f64, limit: impl Fn(f64) -> f64) -> f64 {
        let main: f64 = self.rates.iter().zip(&self.v).map(|(&l, &v)| 2.0 * j(l) * v).sum();
        let lim: f64 = self.limits.iter().map(|&(l, w)| w * limit(l)).sum();
        main + lim
    }
}

/// ∫∫ λ/(λ²+c²x²u²) over x, u ∈ [−X, X].
fn spm_primitive(lambda: f64, c: f64, x: f64) -> f64 {
    if c == 0.0 {
        return 4.0 * x * x / lambda;
    }
    4.0 * lambda.signum() * ti2(c * x * x / lambda.abs()) / c
}

/// ∫∫ (φ²−λ²)/(φ²+λ²)² over the same square, φ = c·x·u.
fn spm_limit(lambda: f64, c: f64, x: f64) -> f64 {
    if c == 0.0 {
        return -4.0 * x * x / (lambda * lambda);
    }
    -4.0 * (c * x * x / lambda).atan() / (c * lambda)
}

/// ∫∫ λ/(λ²+c²x²u²) over x ∈ [−X, X], u ∈ [u1, u2] with 0 ≤ u1 < u2.
fn xpm_primitive(lambda: f64, c: f64, x: f64, u1: f64, u2: f64) -> f64 {
    if c == 0.0 {
        return 2.0 * x * (u2 - u1) / lambda;
    }
    let a = c * x / lambda.abs();
    2.0 * lambda.signum() * (ti2(a * u2) - ti2(a * u1)) / c
}

fn xpm_limit(lambda: f64, c: f64, x: f64, u1: f64, u2: f64) -> f64 {
    if c == 0.0 {
        return -2.0 * x * (u2 - u1) / (lambda * lambda);
    }
    let a = c * x / lambda;
    -2.0 * ((a * u2).atan() - (a * u1).atan()) / (c * lambda)
}

/// Closed-form per-channel NLI of one span. Four-wave-mixing terms between
/// three distinct channels are neglected.
pub fn closed_form_nli(
    evolution: &PowerEvolution,
    fiber: &FiberSpec,
    grid: &WdmGrid,
    reference_bandwidth: f64,
    options: &ClosedFormOptions,
) -> Result<NliPerChannel> {
    let inputs = NliInputs::new(evolution, fiber, grid)?;
    let n = grid.len();
    let rule = gauss_legendre(8);
    let cutoff = options.cross_term_periods * 2.0 * PI / evolution.span_length();
    let mut weights: Vec<Option<Weights>> = Vec::with_capacity(n);
    let mut worst_fit = 0.0f64;
    for k in 0..n {
        if inputs.psd[k] > 0.0 {
            let alpha = evolution.waves[k].attenuation;
            let fit = fit_profile(
                &inputs.z,
                &inputs.rho[k],
                alpha,
                &options.rate_multipliers,
                options.ridge,
            )?;
            worst_fit = worst_fit.max(fit.relative_rms);
            weights.push(Some(Weights::new(&fit, cutoff, &rule)));
        } else {
            weights.push(None);
        }
    }
    let x = inputs.half_bandwidth;
    let scale = GN_PREFACTOR * inputs.gamma * inputs.gamma * reference_bandwidth;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let Some(wi) = &weights[i] else { continue };
        let fi = inputs.frequencies[i];
        let c = 4.0 * PI * PI * inputs.beta_eff(fi, fi).abs();
        let mut spm = wi.integrate(|l| spm_primitive(l, c, x), |l| spm_limit(l, c, x));
        spm += if c == 0.0 {
            4.0 * x * x * wi.cross(0.0)
        } else {
            4.0 / c * wi.cross_square(c * x * x, cutoff, &rule)
        };
        let mut total = inputs.psd[i].powi(2) * spm;
        for (k, wk) in weights.iter().enumerate() {
            if k == i {
                continue;
            }
            let Some(wk) = wk else { continue };
            let fk = inputs.frequencies[k];
            let delta = (fk - fi).abs();
            let (u1, u2) = ((delta - x).max(0.0), delta + x);
            let c = 4.0 * PI * PI * inputs.beta_eff(fi, fk).abs();
            let mut xpm = wk.integrate(|l| xpm_primitive(l, c, x, u1, u2), |l| xpm_limit(l, c, x, u1, u2));
            xpm += if c == 0.0 {
                2.0 * x * (u2 - u1) * wk.cross(0.0)
            } else {
                2.0 / c * wk.cross_rectangle(c * x, u1, u2, cutoff, &rule)
            };
            total += 2.0 * inputs.psd[k].powi(2) * xpm;
        }
        out[i] = (scale * inputs.psd[i] * total).max(0.0);
    }
    Ok(NliPerChannel {
        nli_power: out,
        accumulation_exponent: 1.0,
        fit_residual: Some(worst_fit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_kronrod, Tolerance};
    use approx::assert_relative_eq;

    fn tight() -> Tolerance {
        Tolerance {
            relative: 1e-11,
            max_intervals: 20000,
            ..Tolerance::default()
        }
    }

    /// 2-D numerical integral of `f(x, u)` with breakpoints at the axes.
    fn nested(f: impl Fn(f64, f64) -> f64, x: f64, u1: f64, u2: f64) -> f64 {
        let mut ubreaks = vec![u1, u2];
        if u1 < 0.0 && u2 > 0.0 {
            ubreaks = vec![u1, 0.0, u2];
        }
        gauss_kronrod(
            |xx| gauss_kronrod(|uu| f(xx, uu), &ubreaks, tight()).unwrap().value,
            &[-x, 0.0, x],
            tight(),
        )
        .unwrap()
        .value
    }

    #[test]
    fn spm_primitives_match_quadrature() {
        let (c, x) = (8.3e-25, 48e9);
        for lam in [0.023, -0.09, 0.37] {
            let num = nested(|a, b| lam / (lam * lam + (c * a * b).powi(2)), x, -x, x);
            assert_relative_eq!(spm_primitive(lam, c, x), num, max_relative = 1e-8);
            let l = lam.abs();
            let num = nested(
                |a, b| {
                    let p2 = (c * a * b).powi(2);
                    (p2 - l * l) / (p2 + l * l).powi(2)
                },
                x,
                -x,
                x,
            );
            assert_relative_eq!(spm_limit(l, c, x), num, max_relative = 1e-8);
        }
    }

    #[test]
    fn xpm_primitives_match_quadrature() {
        let (c, x) = (8.3e-25, 48e9);
        let delta = 1.3e12;
        for lam in [0.023, -0.09] {
            let num = nested(|a, b| lam / (lam * lam + (c * a * b).powi(2)), x, delta - x, delta + x);
            assert_relative_eq!(xpm_primitive(lam, c, x, delta - x, delta + x), num, max_relative = 1e-8);
            let l = lam.abs();
            let num = nested(
                |a, b| {
                    let p2 = (c * a * b).powi(2);
                    (p2 - l * l) / (p2 + l * l).powi(2)
                },
                x,
                delta - x,
                delta + x,
            );
            assert_relative_eq!(xpm_limit(l, c, x, delta - x, delta + x), num, max_relative = 1e-7);
        }
    }

    #[test]
    fn zero_dispersion_limits() {
        let x = 48e9;
        assert_relative_eq!(
            spm_primitive(0.05, 0.0, x),
            spm_primitive(0.05, 1e-40, x),
            max_relative = 1e-9
        );
        assert_relative_eq!(spm_limit(0.05, 0.0, x), spm_limit(0.05, 1e-40, x), max_relative = 1e-9);
        assert_relative_eq!(
            xpm_primitive(0.05, 0.0, x, 1e11, 2e11),
            xpm_primitive(0.05, 1e-40, x, 1e11, 2e11),
            max_relative = 1e-9
        );
    }

    #[test]
    fn weights_reproduce_link_function() {
        // |∫ρ e^{jφz}|² with the oscillating terms dropped, for a two-term profile
        let z: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let rho: Vec<f64> = z
            .iter()
            .map(|zz| (-0.046 * zz).exp() + 0.2 * (-0.05 * (100.0 - zz)).exp())
            .collect();
        let fit = fit_profile(&z, &rho, 0.046, &[0.5, 1.0, 2.0], 1e-12).unwrap();
        let w = Weights::new(&fit, 1.0, &gauss_legendre(8));
        // Evaluate Σ W K at a single φ through the primitive hooks.
        for phi in [0.0, 0.01, 0.3] {
            let k = w.integrate(
                |l| l / (l * l + phi * phi),
                |l| (phi * phi - l * l) / (phi * phi + l * l).powi(2),
            );
            let mut direct = 0.0;
            for a in &fit.terms {
                for b in &fit.terms {
                    let wab = a.coefficient * b.coefficient * (a.start * b.start + a.end * b.end);
                    // Re[1/((λa − jφ)(λb + jφ))]
                    let re =
                        (a.rate * b.rate + phi * phi) / ((a.rate.powi(2) + phi * phi) * (b.rate.powi(2) + phi * phi));
                    direct += wab * re;
                }
            }
            assert_relative_eq!(k, direct, max_relative = 1e-9, epsilon = 1e-9);
        }
    }
}
