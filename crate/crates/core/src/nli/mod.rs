//! Nonlinear interference in the Gaussian-noise model with Raman-shaped
//! power profiles.
//!
//! Both estimators return the NLI power at each channel centre in the
//! reference bandwidth, referred to the span input (ideal gain restoration),
//! for one span.

mod closed_form;
mod oracle;
mod profile_fit;

pub use closed_form::{closed_form_nli, ClosedFormOptions};
pub use oracle::{gn_numerical_oracle, OracleOptions};
pub use profile_fit::{fit_profile, ExponentialFit, FitTerm};

use crate::error::{Error, Result};
use crate::raman::PowerEvolution;
use crate::spectra::FiberSpec;
use crate::system::WdmGrid;

/// Leading constant of the GN integral for dual-polarization signals.
pub const GN_PREFACTOR: f64 = 16.0 / 27.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NliPerChannel {
    /// W in the reference bandwidth.
    pub nli_power: Vec<f64>,
    /// Span accumulation exponent; 1 means incoherent addition.
    pub accumulation_exponent: f64,
    /// Worst relative RMS error of the per-channel profile fits, if any.
    pub fit_residual: Option<f64>,
}

/// Total NLI after `n_spans`: either one homogeneous span scaled by the span
/// count or an explicit per-span list summed incoherently.
pub fn accumulate_nli(per_span: &[NliPerChannel], n_spans: usize) -> Result<Vec<f64>> {
    let first = per_span
        .first()
        .ok_or_else(|| Error::invalid("no spans to accumulate"))?;
    let n = first.nli_power.len();
    if per_span.iter().any(|s| s.nli_power.len() != n) {
        return Err(Error::invalid("spans disagree on the channel count"));
    }
    if per_span.iter().any(|s| s.accumulation_exponent != 1.0) {
        return Err(Error::invalid("only incoherent accumulation (exponent 1) is supported"));
    }
    if per_span.len() == 1 {
        return Ok(first.nli_power.iter().map(|p| p * n_spans as f64).collect());
    }
    if per_span.len() != n_spans {
        return Err(Error::invalid(format!(
            "{} span results given for {n_spans} spans",
            per_span.len()
        )));
    }
    let mut out = vec![0.0; n];
    for span in per_span {
        for (o, p) in out.iter_mut().zip(&span.nli_power) {
            *o += p;
        }
    }
    Ok(out)
}

/// Quantities shared by both estimators.
#[derive(Debug, Clone)]
pub(crate) struct NliInputs {
    /// Launch PSD per channel, W/Hz (flat over the symbol-rate bandwidth).
    pub psd: Vec<f64>,
    /// ρ_k(z) on `z`.
    pub rho: Vec<Vec<f64>>,
    pub z: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub reference_frequency: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub gamma: f64,
    /// Half of the signal bandwidth.
    pub half_bandwidth: f64,
}

impl NliInputs {
    pub fn new(evolution: &PowerEvolution, fiber: &FiberSpec, grid: &WdmGrid) -> Result<Self> {
        if evolution.channel_count() != grid.len() {
            return Err(Error::invalid("evolution and grid disagree on the channel count"));
        }
        let disp = fiber.dispersion_at(grid.reference_wavelength_m)?;
        let rs = grid.symbol_rate_baud;
        Ok(Self {
            psd: (0..grid.len()).map(|k| evolution.channel(k)[0] / rs).collect(),
            rho: (0..grid.len())
                .map(|k| evolution.normalized_profile(k, fiber))
                .collect::<Result<_>>()?,
            z: evolution.z_km.clone(),
            frequencies: grid.frequencies().to_vec(),
            reference_frequency: grid.reference_frequency(),
            beta2: disp.beta2,
            beta3: disp.beta3,
            gamma: fiber.nonlinear_coefficient,
            half_bandwidth: 0.5 * rs,
        })
    }

    /// Effective β₂ seen by a four-wave mixing term whose first two waves sit
    /// at `f1` and `f2` (absolute frequencies).
    pub fn beta_eff(&self, f1: f64, f2: f64) -> f64 {
        self.beta2 + std::f64::consts::PI * self.beta3 * (f1 + f2 - 2.0 * self.reference_frequency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: f64) -> NliPerChannel {
        NliPerChannel {
            nli_power: vec![p, 2.0 * p],
            accumulation_exponent: 1.0,
            fit_residual: None,
        }
    }

    #[test]
    fn homogeneous_accumulation() {
        assert_eq!(accumulate_nli(&[one(1.0)], 1).unwrap(), vec![1.0, 2.0]);
        assert_eq!(accumulate_nli(&[one(1.0)], 10).unwrap(), vec![10.0, 20.0]);
    }

    #[test]
    fn explicit_list_sums() {
        let spans = vec![one(1.0), one(2.0), one(3.0)];
        assert_eq!(accumulate_nli(&spans, 3).unwrap(), vec![6.0, 12.0]);
        assert!(accumulate_nli(&spans, 4).is_err());
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let bad = NliPerChannel {
            nli_power: vec![1.0],
            ..one(1.0)
        };
        assert!(accumulate_nli(&[one(1.0), bad], 2).is_err());
        assert!(accumulate_nli(&[], 1).is_err());
    }
}
