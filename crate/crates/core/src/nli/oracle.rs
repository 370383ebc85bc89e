//! Direct numerical evaluation of the GN double integral.
//!
//! The link function η(f1, f2) = ∫₀ᴸ √(ρ₁ρ₂ρ₃/ρ) e^{jφz} dz is integrated
//! exactly for a profile that is log-linear between the stored z samples;
//! the frequency integral over every contributing channel triple uses nested
//! adaptive Gauss–Kronrod quadrature.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{NliInputs, NliPerChannel, GN_PREFACTOR};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_kronrod, Tolerance};
use crate::raman::PowerEvolution;
use crate::spectra::FiberSpec;
use crate::system::WdmGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Relative accuracy target for each channel's NLI.
    pub relative_tolerance: f64,
    pub max_intervals: usize,
    /// Channel count above which the oracle refuses to run.
    pub max_channels: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            relative_tolerance: 1e-3,
            max_intervals: 4000,
            max_channels: 16,
        }
    }
}

/// Log-linear amplitude profile a(z) on a uniform grid.
struct Amplitude {
    a: Vec<f64>,
    slope: Vec<f64>,
    dz: f64,
}

impl Amplitude {
    fn new(a: Vec<f64>, dz: f64) -> Self {
        let slope = a.windows(2).map(|w| (w[1] / w[0]).ln() / dz).collect();
        Self { a, slope, dz }
    }

    /// |∫ a(z) e^{jφz} dz|².
    fn eta_squared(&self, phi: f64) -> f64 {
        let step = Complex64::from_polar(1.0, phi * self.dz);
        let mut rot = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &s) in self.slope.iter().enumerate() {
            let w = Complex64::new(s, phi);
            let wd = w * self.dz;
            let seg = if wd.norm() < 1e-3 {
                self.a[i] * self.dz * (1.0 + wd * (0.5 + wd * (1.0 / 6.0 + wd / 24.0)))
            } else {
                (self.a[i + 1] * step - self.a[i]) / w
            };
            acc += rot * seg;
            rot *= step;
        }
        acc.norm_sqr()
    }
}

/// GN-model NLI at each channel centre by direct quadrature. Intended for
/// small systems; the cost grows with the cube of the channel count.
pub fn gn_numerical_oracle(
    evolution: &PowerEvolution,
    fiber: &FiberSpec,
    grid: &WdmGrid,
    reference_bandwidth: f64,
    options: &OracleOptions,
) -> Result<NliPerChannel> {
    if grid.len() > options.max_channels {
        return Err(Error::invalid(format!(
            "numerical oracle limited to {} channels, got {}",
            options.max_channels,
            grid.len()
        )));
    }
    let inputs = NliInputs::new(evolution, fiber, grid)?;
    let dz = inputs.z[1] - inputs.z[0];
    let n = grid.len();
    let x = inputs.half_bandwidth;
    let f = &inputs.frequencies;
    let lo = |k: usize| f[k] - x;
    let hi = |k: usize| f[k] + x;
    let mut out = vec![0.0; n];

    for (i, slot) in out.iter_mut().enumerate() {
        let fi = f[i];
        // (main, m, n, p); the SPM and XPM triples carry the dominant ridges
        // and are integrated first, to a relative target. The remaining
        // four-wave-mixing triples share an absolute budget derived from them.
        let mut triples: Vec<(bool, usize, usize, usize)> = Vec::new();
        for m in 0..n {
            for nn in 0..n {
                for p in 0..n {
                    if inputs.psd[m] * inputs.psd[nn] * inputs.psd[p] == 0.0 {
                        continue;
                    }
                    let f1_lo = lo(m).max(lo(p) - hi(nn) + fi);
                    let f1_hi = hi(m).min(hi(p) - lo(nn) + fi);
                    if f1_hi > f1_lo {
                        let main = (m == i && p == nn) || (nn == i && p == m);
                        triples.push((main, m, nn, p));
                    }
                }
            }
        }
        triples.sort_by_key(|t| !t.0);

        let mut total = 0.0;
        let mut main_total = 0.0;
        let rest = triples.iter().filter(|t| !t.0).count().max(1);
        for &(main, m, nn, p) in &triples {
            let amp = Amplitude::new(
                (0..inputs.z.len())
                    .map(|zi| (inputs.rho[m][zi] * inputs.rho[nn][zi] * inputs.rho[p][zi] / inputs.rho[i][zi]).sqrt())
                    .collect(),
                dz,
            );
            let weight = inputs.psd[m] * inputs.psd[nn] * inputs.psd[p];
            let rel = options.relative_tolerance;
            let abs = if main {
                0.0
            } else {
                0.1 * rel * main_total / weight / rest as f64
            };
            let outer_tol = Tolerance {
                absolute: abs,
                relative: 0.5 * rel,
                max_intervals: options.max_intervals,
            };
            let f1_lo = lo(m).max(lo(p) - hi(nn) + fi);
            let f1_hi = hi(m).min(hi(p) - lo(nn) + fi);
            let inner_tol = Tolerance {
                absolute: 0.1 * abs / (f1_hi - f1_lo),
                relative: 0.05 * rel,
                max_intervals: options.max_intervals,
            };
            let mut outer = vec![f1_lo, f1_hi];
            for b in [fi, lo(p) - lo(nn) + fi, hi(p) - hi(nn) + fi] {
                if b > f1_lo && b < f1_hi {
                    outer.push(b);
                }
            }
            outer.sort_by(f64::total_cmp);
            let mut failure: Option<Error> = None;
            let inner = |f1: f64| -> f64 {
                // f3 = f1 + f2 − fi must lie in channel p and f2 in channel nn.
                let w_lo = lo(p).max(lo(nn) - fi + f1);
                let w_hi = hi(p).min(hi(nn) - fi + f1);
                if !(w_hi > w_lo) {
                    return 0.0;
                }
                let mut pts = vec![w_lo, w_hi];
                if f1 > w_lo && f1 < w_hi {
                    pts.insert(1, f1);
                }
                let integrand = |f3: f64| {
                    let f2 = f3 + fi - f1;
                    let phi = 4.0 * PI * PI * (f1 - fi) * (f2 - fi) * inputs.beta_eff(f1, f2);
                    amp.eta_squared(phi)
                };
                match gauss_kronrod(integrand, &pts, inner_tol) {
                    Ok(e) => e.value,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            };
            let est = gauss_kronrod(inner, &outer, outer_tol)?;
            if let Some(e) = failure {
                return Err(e);
            }
            let value = weight * est.value;
            if main {
                main_total += value;
            }
            total += value;
        }
        *slot = GN_PREFACTOR * inputs.gamma * inputs.gamma * total * reference_bandwidth;
    }
    Ok(NliPerChannel {
        nli_power: out,
        accumulation_exponent: 1.0,
        fit_residual: None,
    })
}
