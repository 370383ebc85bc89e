//! Fibre description: sampled attenuation and Raman gain spectra plus the
//! scalar nonlinear/dispersion parameters.

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::units::{self, Dispersion, SPEED_OF_LIGHT};
use std::f64::consts::PI;
use std::path::Path;

/// Digitized attenuation curve shipped with the crate (`wavelength_nm,attenuation_db_per_km`).
pub const DEFAULT_ATTENUATION_CSV: &str = include_str!("../data/attenuation.csv");
/// Digitized Raman gain curve shipped with the crate (`offset_thz,gain_per_w_per_km`).
pub const DEFAULT_RAMAN_GAIN_CSV: &str = include_str!("../data/raman_gain.csv");

/// Wavelength window every simulated wave (pump or signal) must fall in.
pub const REQUIRED_ATTENUATION_WINDOW_NM: (f64, f64) = (1400.0, 1610.0);
/// Offsets over which the Raman curve must be defined and non-negative.
pub const REQUIRED_RAMAN_WINDOW_THZ: (f64, f64) = (0.0, 30.0);

/// A sampled curve with its shape-preserving interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    samples: Vec<(f64, f64)>,
    interp: Pchip,
}

impl SampledCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        let (xs, ys) = samples.iter().copied().unzip();
        let interp = Pchip::new(xs, ys)?;
        Ok(Self { samples, interp })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn domain(&self) -> (f64, f64) {
        self.interp.domain()
    }

    fn eval(&self, what: &'static str, x: f64) -> Result<f64> {
        self.interp.eval(x).ok_or_else(|| {
            let (lo, hi) = self.domain();
            Error::OutOfRange { what, value: x, lo, hi }
        })
    }

    /// Parses a two-column CSV with a mandatory header row.
    pub fn from_csv_str(text: &str, expected_header: [&str; 2]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::invalid(format!("csv header: {e}")))?
            .clone();
        if headers.len() != 2
            || headers.get(0) != Some(expected_header[0])
            || headers.get(1) != Some(expected_header[1])
        {
            return Err(Error::invalid(format!(
                "expected csv header `{},{}`, found `{}`",
                expected_header[0],
                expected_header[1],
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::invalid(format!("csv row {}: {e}", line + 2)))?;
            if record.len() != 2 {
                return Err(Error::invalid(format!("csv row {}: expected 2 fields", line + 2)));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("csv row {}: `{s}` is not a number", line + 2)))
            };
            samples.push((parse(&record[0])?, parse(&record[1])?));
        }
        Self::new(samples)
    }

    pub fn from_csv_path(path: &Path, expected_header: [&str; 2]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&text, expected_header)
    }
}

pub const ATTENUATION_HEADER: [&str; 2] = ["wavelength_nm", "attenuation_db_per_km"];
pub const RAMAN_GAIN_HEADER: [&str; 2] = ["offset_thz", "gain_per_w_per_km"];

/// Which curve [`FiberSpec::sample_spectrum`] reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    /// Query in metres of wavelength, result in dB/km.
    Attenuation,
    /// Query as a frequency offset in Hz, result in 1/(W·km).
    RamanGain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberSpec {
    /// Attenuation vs wavelength (nm → dB/km).
    pub attenuation: SampledCurve,
    /// Raman gain vs frequency offset (THz → 1/(W·km)), taken as the effective curve.
    pub raman_gain: SampledCurve,
    pub effective_area_um2: f64,
    /// γ in 1/(W·km).
    pub nonlinear_coefficient: f64,
    /// n₂ in m²/W, only used for the γ/A_eff consistency check.
    pub nonlinear_index: f64,
    /// ps/(nm·km)
    pub dispersion: f64,
    /// ps/(nm²·km)
    pub dispersion_slope: f64,
    pub span_length_km: f64,
    pub temperature_k: f64,
}

impl FiberSpec {
    /// The fibre of the reference system with the shipped digitized spectra.
    pub fn standard() -> Self {
        Self {
            attenuation: SampledCurve::from_csv_str(DEFAULT_ATTENUATION_CSV, ATTENUATION_HEADER)
                .expect("shipped attenuation asset"),
            raman_gain: SampledCurve::from_csv_str(DEFAULT_RAMAN_GAIN_CSV, RAMAN_GAIN_HEADER)
                .expect("shipped raman asset"),
            effective_area_um2: 80.0,
            nonlinear_coefficient: 1.16,
            nonlinear_index: 2.3e-20,
            dispersion: 16.5,
            dispersion_slope: 0.09,
            span_length_km: 100.0,
            temperature_k: 298.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.attenuation.domain();
        let (need_lo, need_hi) = REQUIRED_ATTENUATION_WINDOW_NM;
        if lo > need_lo || hi < need_hi {
            return Err(Error::invalid(format!(
                "attenuation samples cover [{lo}, {hi}] nm, need at least [{need_lo}, {need_hi}]"
            )));
        }
        // PCHIP never leaves the knot range, so positive knots give a positive curve.
        if self.attenuation.samples().iter().any(|&(_, a)| !(a > 0.0)) {
            return Err(Error::invalid("attenuation samples must be positive"));
        }
        let (glo, ghi) = self.raman_gain.domain();
        if glo != 0.0 || ghi < REQUIRED_RAMAN_WINDOW_THZ.1 {
            return Err(Error::invalid(format!(
                "raman gain samples cover [{glo}, {ghi}] THz, need [0, {}]",
                REQUIRED_RAMAN_WINDOW_THZ.1
            )));
        }
        if self.raman_gain.samples()[0].1 != 0.0 {
            return Err(Error::invalid("raman gain must be zero at zero offset"));
        }
        if self.raman_gain.samples().iter().any(|&(_, g)| g < 0.0) {
            return Err(Error::invalid("raman gain samples must be non-negative"));
        }
        for (name, v) in [
            ("effective_area_um2", self.effective_area_um2),
            ("nonlinear_index", self.nonlinear_index),
            ("span_length_km", self.span_length_km),
            ("temperature_k", self.temperature_k),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.dispersion.is_finite() || !self.dispersion_slope.is_finite() {
            return Err(Error::invalid("dispersion parameters must be finite"));
        }
        // γ = 0 switches nonlinearity off; otherwise it must match A_eff.
        if !(self.nonlinear_coefficient >= 0.0) || !self.nonlinear_coefficient.is_finite() {
            return Err(Error::invalid(format!(
                "nonlinear_coefficient must be non-negative, got {}",
                self.nonlinear_coefficient
            )));
        }
        let derived = self.gamma_from_effective_area(1550e-9);
        if self.nonlinear_coefficient > 0.0
            && ((derived - self.nonlinear_coefficient) / self.nonlinear_coefficient).abs() > 0.02
        {
            return Err(Error::invalid(format!(
                "nonlinear coefficient {} inconsistent with effective area (derived {derived:.4})",
                self.nonlinear_coefficient
            )));
        }
        Ok(())
    }

    /// γ = 2π n₂ / (λ A_eff), in 1/(W·km).
    pub fn gamma_from_effective_area(&self, wavelength_m: f64) -> f64 {
        2.0 * PI * self.nonlinear_index / (wavelength_m * self.effective_area_um2 * 1e-12) * 1e3
    }

    pub fn sample_spectrum(&self, kind: SpectrumKind, at: f64) -> Result<f64> {
        match kind {
            SpectrumKind::Attenuation => self.attenuation_db_per_km(at),
            SpectrumKind::RamanGain => self.raman_gain(at),
        }
    }

    /// dB/km at a wavelength in metres.
    pub fn attenuation_db_per_km(&self, wavelength_m: f64) -> Result<f64> {
        self.attenuation.eval("attenuation wavelength [nm]", wavelength_m * 1e9)
    }

    /// Power attenuation coefficient in 1/km at a frequency in Hz.
    pub fn attenuation_per_km(&self, frequency_hz: f64) -> Result<f64> {
        let lambda = SPEED_OF_LIGHT / frequency_hz;
        Ok(units::db_per_km_to_neper(self.attenuation_db_per_km(lambda)?))
    }

    /// Raman gain in 1/(W·km) at a non-negative frequency offset in Hz.
    pub fn raman_gain(&self, offset_hz: f64) -> Result<f64> {
        self.raman_gain.eval("raman offset [THz]", offset_hz * 1e-12)
    }

    pub fn dispersion_at(&self, wavelength_m: f64) -> Result<Dispersion> {
        units::dispersion_to_beta(self.dispersion, self.dispersion_slope, wavelength_m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn standard_fiber_is_valid() {
        FiberSpec::standard().validate().unwrap();
    }

    #[test]
    fn gamma_consistent_with_area() {
        let f = FiberSpec::standard();
        let g = f.gamma_from_effective_area(1550e-9);
        assert!(((g - 1.16) / 1.16).abs() < 0.02, "derived γ = {g}");
    }

    #[test]
    fn knot_values_reproduced() {
        let f = FiberSpec::standard();
        assert_eq!(f.attenuation_db_per_km(1550e-9).unwrap(), 0.1932);
        assert_eq!(f.raman_gain(0.0).unwrap(), 0.0);
    }

    #[test]
    fn raman_peak_near_13_thz() {
        let f = FiberSpec::standard();
        let peak = f.raman_gain(13.2e12).unwrap();
        assert_relative_eq!(peak, 0.42, max_relative = 0.05);
        // the peak is the global maximum of the shipped curve
        let max = (0..=3000)
            .map(|i| f.raman_gain(i as f64 * 1e10).unwrap())
            .fold(0.0, f64::max);
        assert_relative_eq!(max, peak, max_relative = 1e-12);
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let f = FiberSpec::standard();
        assert!(matches!(
            f.sample_spectrum(SpectrumKind::Attenuation, 1300e-9),
            Err(Error::OutOfRange { .. })
        ));
        assert!(f.sample_spectrum(SpectrumKind::RamanGain, 31e12).is_err());
        assert!(f.sample_spectrum(SpectrumKind::RamanGain, -1e9).is_err());
    }

    #[test]
    fn midpoints_stay_within_adjacent_knots() {
        let f = FiberSpec::standard();
        for curve in [&f.attenuation, &f.raman_gain] {
            for w in curve.samples().windows(2) {
                let mid = curve.interp.eval(0.5 * (w[0].0 + w[1].0)).unwrap();
                assert!(mid >= w[0].1.min(w[1].1) && mid <= w[0].1.max(w[1].1));
            }
        }
    }

    #[test]
    fn csv_header_is_required() {
        let err = SampledCurve::from_csv_str("1400,0.2\n1500,0.2\n", ATTENUATION_HEADER).unwrap_err();
        assert!(err.to_string().contains("header"));
        let bad = "wavelength_nm,attenuation_db_per_km\n1400,abc\n";
        assert!(SampledCurve::from_csv_str(bad, ATTENUATION_HEADER).is_err());
    }

    #[test]
    fn negative_gain_rejected() {
        let mut f = FiberSpec::standard();
        let mut s = f.raman_gain.samples().to_vec();
        s[3].1 = -0.01;
        f.raman_gain = SampledCurve::new(s).unwrap();
        assert!(f.validate().is_err());
    }
}
