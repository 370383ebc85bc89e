//! Static system description: WDM grid, amplifiers, pumps, launch profile and
//! the composed link.

use crate::error::{Error, Result};
use crate::spectra::FiberSpec;
use crate::units::{self, SPEED_OF_LIGHT};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    S,
    C,
    L,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Band::S => "S",
            Band::C => "C",
            Band::L => "L",
        };
        f.write_str(s)
    }
}

/// One contiguous block of equally spaced channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandAllocation {
    pub band: Band,
    pub channels: usize,
}

/// Input to [`build_grid`]. Bands are listed from short to long wavelength;
/// `gaps_nm[i]` is the empty spectrum between band `i` and band `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPlan {
    pub bands: Vec<BandAllocation>,
    pub gaps_nm: Vec<f64>,
    pub channel_spacing_hz: f64,
    pub symbol_rate_baud: f64,
    pub center_wavelength_m: f64,
}

impl BandPlan {
    /// 131 channels at 100 GHz / 96 GBd over S, C and L with 10 nm and 5 nm gaps,
    /// centred on 1550 nm.
    pub fn reference() -> Self {
        Self {
            bands: vec![
                BandAllocation {
                    band: Band::S,
                    channels: 38,
                },
                BandAllocation {
                    band: Band::C,
                    channels: 47,
                },
                BandAllocation {
                    band: Band::L,
                    channels: 46,
                },
            ],
            gaps_nm: vec![10.0, 5.0],
            channel_spacing_hz: 100e9,
            symbol_rate_baud: 96e9,
            center_wavelength_m: 1550e-9,
        }
    }

    /// 41-channel variant spanning roughly the same optical bandwidth, used for
    /// fast regression runs.
    pub fn reduced() -> Self {
        Self {
            bands: vec![
                BandAllocation {
                    band: Band::S,
                    channels: 12,
                },
                BandAllocation {
                    band: Band::C,
                    channels: 15,
                },
                BandAllocation {
                    band: Band::L,
                    channels: 14,
                },
            ],
            gaps_nm: vec![10.0, 5.0],
            channel_spacing_hz: 320e9,
            symbol_rate_baud: 96e9,
            center_wavelength_m: 1550e-9,
        }
    }

    pub fn total_channels(&self) -> usize {
        self.bands.iter().map(|b| b.channels).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WdmGrid {
    /// Channel centre frequencies in Hz, strictly increasing.
    frequencies: Vec<f64>,
    bands: Vec<Band>,
    pub channel_spacing_hz: f64,
    pub symbol_rate_baud: f64,
    pub reference_wavelength_m: f64,
}

impl WdmGrid {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn frequency(&self, channel: usize) -> f64 {
        self.frequencies[channel]
    }

    pub fn wavelength(&self, channel: usize) -> f64 {
        SPEED_OF_LIGHT / self.frequencies[channel]
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn band_of(&self, channel: usize) -> Band {
        self.bands[channel]
    }

    pub fn channels_in(&self, band: Band) -> impl Iterator<Item = usize> + '_ {
        self.bands
            .iter()
            .enumerate()
            .filter(move |(_, b)| **b == band)
            .map(|(i, _)| i)
    }

    pub fn reference_frequency(&self) -> f64 {
        SPEED_OF_LIGHT / self.reference_wavelength_m
    }

    /// Builds a grid from explicit centre frequencies, e.g. for small test systems.
    pub fn from_channels(
        frequencies: Vec<f64>,
        bands: Vec<Band>,
        channel_spacing_hz: f64,
        symbol_rate_baud: f64,
        reference_wavelength_m: f64,
    ) -> Result<Self> {
        if frequencies.is_empty() || frequencies.len() != bands.len() {
            return Err(Error::invalid(
                "frequency and band lists must be non-empty and equal length",
            ));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("channel frequencies must be strictly increasing"));
        }
        if !(symbol_rate_baud > 0.0) || !(channel_spacing_hz > 0.0) {
            return Err(Error::invalid("symbol rate and spacing must be positive"));
        }
        if !(reference_wavelength_m > 0.0) {
            return Err(Error::invalid("reference wavelength must be positive"));
        }
        Ok(Self {
            frequencies,
            bands,
            channel_spacing_hz,
            symbol_rate_baud,
            reference_wavelength_m,
        })
    }
}

impl WdmGrid {
    /// The channels at `indices` (increasing), keeping spacing and symbol rate.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("channel {i} not in a grid of {}", self.len())));
        }
        Self::from_channels(
            indices.iter().map(|&i| self.frequencies[i]).collect(),
            indices.iter().map(|&i| self.bands[i]).collect(),
            self.channel_spacing_hz,
            self.symbol_rate_baud,
            self.reference_wavelength_m,
        )
    }
}

/// Lays out contiguous bands at the plan spacing, separates them by the
/// requested wavelength gaps and centres the composite grid (in frequency) on
/// the plan's centre wavelength. Frequencies are whole hertz so intra-band
/// spacing is exact.
pub fn build_grid(plan: &BandPlan) -> Result<WdmGrid> {
    if plan.bands.is_empty() {
        return Err(Error::invalid("band plan has no bands"));
    }
    if let Some(b) = plan.bands.iter().find(|b| b.channels == 0) {
        return Err(Error::invalid(format!("band {} has zero width", b.band)));
    }
    if plan.gaps_nm.len() + 1 != plan.bands.len() {
        return Err(Error::invalid(format!(
            "{} bands need {} gaps, got {}",
            plan.bands.len(),
            plan.bands.len() - 1,
            plan.gaps_nm.len()
        )));
    }
    if let Some(g) = plan.gaps_nm.iter().find(|g| !(**g >= 0.0) || !g.is_finite()) {
        return Err(Error::invalid(format!(
            "band gap {g} nm is negative: bands would overlap"
        )));
    }
    let spacing = plan.channel_spacing_hz;
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::invalid("channel spacing must be positive"));
    }
    if !(plan.symbol_rate_baud > 0.0) || plan.symbol_rate_baud > spacing {
        return Err(Error::invalid(format!(
            "symbol rate {} Bd must be positive and not exceed the spacing {spacing} Hz",
            plan.symbol_rate_baud
        )));
    }
    for w in plan.bands.windows(2) {
        if w[0].band >= w[1].band {
            return Err(Error::invalid(
                "bands must be listed from short to long wavelength without repeats",
            ));
        }
    }
    let f_center = units::wavelength_to_frequency(plan.center_wavelength_m)?;

    // Bands are laid out from the lowest frequency (longest wavelength) upwards.
    // Gap widths depend on absolute position, so iterate the centring shift.
    let order: Vec<usize> = (0..plan.bands.len()).rev().collect();
    let mut shift = f_center;
    let mut offsets: Vec<(Band, f64)> = Vec::with_capacity(plan.total_channels());
    for _ in 0..50 {
        offsets.clear();
        let mut f = 0.0f64;
        for (pos, &bi) in order.iter().enumerate() {
            let alloc = plan.bands[bi];
            if pos > 0 {
                // gap between band `bi` (shorter λ) and the band laid out before it
                let upper_edge = f + spacing / 2.0;
                let edge_abs = upper_edge + shift;
                let lambda_edge = SPEED_OF_LIGHT / edge_abs;
                let gap_lambda = lambda_edge - plan.gaps_nm[bi] * 1e-9;
                if !(gap_lambda > 0.0) {
                    return Err(Error::invalid("band gap larger than the edge wavelength"));
                }
                let gap_hz = SPEED_OF_LIGHT / gap_lambda - edge_abs;
                f = (upper_edge + gap_hz + spacing / 2.0).round();
            }
            for k in 0..alloc.channels {
                if k > 0 {
                    f += spacing;
                }
                offsets.push((alloc.band, f));
            }
        }
        let lo = offsets.first().unwrap().1;
        let hi = offsets.last().unwrap().1;
        let new_shift = (f_center - 0.5 * (lo + hi)).round();
        if new_shift == shift {
            break;
        }
        shift = new_shift;
    }
    let (bands, frequencies): (Vec<Band>, Vec<f64>) = offsets.into_iter().map(|(b, f)| (b, f + shift)).unzip();
    WdmGrid::from_channels(
        frequencies,
        bands,
        spacing,
        plan.symbol_rate_baud,
        plan.center_wavelength_m,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainPolicy {
    /// The lumped amplifier restores every channel to its launch power.
    RestoreLaunchProfile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplifierSpec {
    pub noise_figure_db: BTreeMap<Band, f64>,
    pub gain_policy: GainPolicy,
}

impl Default for AmplifierSpec {
    fn default() -> Self {
        Self {
            noise_figure_db: BTreeMap::from([(Band::S, 7.0), (Band::C, 4.5), (Band::L, 6.0)]),
            gain_policy: GainPolicy::RestoreLaunchProfile,
        }
    }
}

impl AmplifierSpec {
    pub fn noise_figure(&self, band: Band) -> Result<f64> {
        self.noise_figure_db.get(&band).copied().ok_or_else(|| {
            Error::config(
                format!("/link/amplifier/noise_figure_db/{band}"),
                "missing noise figure",
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (band, nf) in &self.noise_figure_db {
            if !(*nf >= 0.0) || !nf.is_finite() {
                return Err(Error::invalid(format!(
                    "noise figure for band {band} must be non-negative, got {nf}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaunchProfile {
    pub per_channel_dbm: Vec<f64>,
}

impl LaunchProfile {
    pub fn uniform(channels: usize, dbm: f64) -> Self {
        Self {
            per_channel_dbm: vec![dbm; channels],
        }
    }

    /// Spreads a total launch power evenly over `channels`.
    pub fn from_total(channels: usize, total_dbm: f64) -> Self {
        Self::uniform(channels, total_dbm - 10.0 * (channels as f64).log10())
    }

    pub fn len(&self) -> usize {
        self.per_channel_dbm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_channel_dbm.is_empty()
    }

    pub fn watts(&self) -> Vec<f64> {
        self.per_channel_dbm.iter().map(|&p| units::dbm_to_w(p)).collect()
    }

    pub fn total_dbm(&self) -> f64 {
        let total: f64 = self.watts().iter().sum();
        10.0 * (total / 1e-3).log10()
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.len() != channels {
            return Err(Error::invalid(format!(
                "launch profile has {} entries for {channels} channels",
                self.len()
            )));
        }
        // −∞ dBm (a dark channel) is allowed; NaN and +∞ are not.
        if self.per_channel_dbm.iter().any(|p| p.is_nan() || *p == f64::INFINITY) {
            return Err(Error::invalid("launch profile entries must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pump {
    pub wavelength_m: f64,
    pub power_w: f64,
    pub direction: Direction,
}

impl Pump {
    pub fn frequency(&self) -> f64 {
        SPEED_OF_LIGHT / self.wavelength_m
    }
}

pub const DEFAULT_PUMP_WINDOW_NM: (f64, f64) = (1405.0, 1490.0);

#[derive(Debug, Clone, PartialEq)]
pub struct PumpSet {
    pub pumps: Vec<Pump>,
    pub window_nm: (f64, f64),
}

impl Default for PumpSet {
    fn default() -> Self {
        Self::none()
    }
}

impl PumpSet {
    pub fn none() -> Self {
        Self {
            pumps: Vec::new(),
            window_nm: DEFAULT_PUMP_WINDOW_NM,
        }
    }

    pub fn new(pumps: Vec<Pump>) -> Self {
        Self {
            pumps,
            window_nm: DEFAULT_PUMP_WINDOW_NM,
        }
    }

    /// Pumps carrying at least `threshold_w`.
    pub fn significant(&self, threshold_w: f64) -> impl Iterator<Item = &Pump> {
        self.pumps.iter().filter(move |p| p.power_w >= threshold_w)
    }

    pub fn has_backward(&self) -> bool {
        self.pumps
            .iter()
            .any(|p| p.direction == Direction::Backward && p.power_w > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window_nm;
        for (i, p) in self.pumps.iter().enumerate() {
            let nm = p.wavelength_m * 1e9;
            // allow for nm/m round-off at the window edges
            if !(nm >= lo - 1e-9 && nm <= hi + 1e-9) {
                return Err(Error::invalid(format!(
                    "pump {i} wavelength {nm} nm outside window [{lo}, {hi}] nm"
                )));
            }
            if !(p.power_w >= 0.0) || !p.power_w.is_finite() {
                return Err(Error::invalid(format!(
                    "pump {i} power must be non-negative, got {} W",
                    p.power_w
                )));
            }
        }
        Ok(())
    }
}

/// The eight pumps (3 forward, 5 backward) of the reference hybrid optimum
/// as (direction, nm, mW); the other four slots carried negligible power.
pub const REFERENCE_PUMPS: [(Direction, f64, f64); 8] = [
    (Direction::Forward, 1405.0, 153.6),
    (Direction::Forward, 1410.0, 240.1),
    (Direction::Forward, 1455.0, 31.3),
    (Direction::Backward, 1422.0, 249.2),
    (Direction::Backward, 1428.0, 31.7),
    (Direction::Backward, 1437.0, 250.0),
    (Direction::Backward, 1452.0, 80.0),
    (Direction::Backward, 1483.0, 225.3),
];

pub fn reference_pumps() -> PumpSet {
    PumpSet::new(
        REFERENCE_PUMPS
            .iter()
            .map(|&(direction, nm, mw)| Pump {
                wavelength_m: nm * 1e-9,
                power_w: mw * 1e-3,
                direction,
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub n_spans: usize,
    pub fiber: FiberSpec,
    pub grid: WdmGrid,
    pub amplifier: AmplifierSpec,
    pub pumps: PumpSet,
    pub launch: LaunchProfile,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_spans < 1 {
            return Err(Error::invalid("n_spans must be at least 1"));
        }
        self.fiber.validate()?;
        self.amplifier.validate()?;
        self.pumps.validate()?;
        self.launch.validate(self.grid.len())?;
        for ch in 0..self.grid.len() {
            self.amplifier.noise_figure(self.grid.band_of(ch))?;
        }
        Ok(())
    }

    pub fn with_launch(&self, launch: LaunchProfile) -> Self {
        Self { launch, ..self.clone() }
    }

    pub fn with_pumps(&self, pumps: PumpSet) -> Self {
        Self { pumps, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nm(f: f64) -> f64 {
        SPEED_OF_LIGHT / f * 1e9
    }

    #[test]
    fn reference_grid_has_131_channels_and_gaps() {
        let grid = build_grid(&BandPlan::reference()).unwrap();
        assert_eq!(grid.len(), 131);
        let f = grid.frequencies();
        assert!(f.windows(2).all(|w| w[1] > w[0]));
        // centred on 1550 nm in frequency
        let fc = SPEED_OF_LIGHT / 1550e-9;
        assert!((0.5 * (f[0] + f[130]) - fc).abs() <= 1.0);

        let spacing = grid.channel_spacing_hz;
        for w in grid.bands().windows(2).enumerate().filter(|(_, b)| b[0] != b[1]) {
            let i = w.0;
            // empty spectrum between the band edges, in nm
            let lower_band_top = f[i] + spacing / 2.0;
            let upper_band_bottom = f[i + 1] - spacing / 2.0;
            let gap_nm = nm(lower_band_top) - nm(upper_band_bottom);
            let expected = if grid.band_of(i) == Band::L { 5.0 } else { 10.0 };
            let tol_nm = nm(upper_band_bottom) - nm(upper_band_bottom + spacing);
            assert!((gap_nm - expected).abs() <= tol_nm, "gap {gap_nm} nm vs {expected}");
        }
        // uniform spacing inside each band
        for w in f.windows(2).zip(grid.bands().windows(2)) {
            if w.1[0] == w.1[1] {
                assert_eq!(w.0[1] - w.0[0], spacing);
            }
        }
    }

    #[test]
    fn reference_grid_stays_inside_measured_spectra() {
        let grid = build_grid(&BandPlan::reference()).unwrap();
        let shortest = grid.wavelength(grid.len() - 1) * 1e9;
        let longest = grid.wavelength(0) * 1e9;
        assert!(shortest > 1490.0 && longest < 1620.0, "{shortest}..{longest}");
    }

    #[test]
    fn two_channels_exactly_one_spacing_apart() {
        let plan = BandPlan {
            bands: vec![BandAllocation {
                band: Band::C,
                channels: 2,
            }],
            gaps_nm: vec![],
            channel_spacing_hz: 100e9,
            symbol_rate_baud: 96e9,
            center_wavelength_m: 1550e-9,
        };
        let g = build_grid(&plan).unwrap();
        assert_eq!(g.frequency(1) - g.frequency(0), 100e9);
    }

    #[test]
    fn zero_width_band_rejected() {
        let mut plan = BandPlan::reference();
        plan.bands[1].channels = 0;
        assert!(build_grid(&plan).is_err());
    }

    #[test]
    fn negative_gap_rejected() {
        let mut plan = BandPlan::reference();
        plan.gaps_nm[0] = -1.0;
        assert!(build_grid(&plan).is_err());
    }

    #[test]
    fn deterministic() {
        let a = build_grid(&BandPlan::reference()).unwrap();
        let b = build_grid(&BandPlan::reference()).unwrap();
        assert!(a
            .frequencies()
            .iter()
            .zip(b.frequencies())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn reduced_grid_spans_similar_band() {
        let g = build_grid(&BandPlan::reduced()).unwrap();
        assert_eq!(g.len(), 41);
        let span_thz = (g.frequency(40) - g.frequency(0)) / 1e12;
        assert!(span_thz > 12.0 && span_thz < 16.0, "{span_thz}");
    }

    #[test]
    fn from_total_splits_evenly() {
        let lp = LaunchProfile::from_total(131, 18.75);
        assert!((lp.total_dbm() - 18.75).abs() < 1e-12);
        assert!((lp.per_channel_dbm[0] - (18.75 - 10.0 * 131f64.log10())).abs() < 1e-12);
    }

    #[test]
    fn pump_window_enforced() {
        let p = PumpSet::new(vec![Pump {
            wavelength_m: 1500e-9,
            power_w: 0.1,
            direction: Direction::Forward,
        }]);
        assert!(p.validate().is_err());
        let p = PumpSet::new(vec![Pump {
            wavelength_m: 1450e-9,
            power_w: -0.1,
            direction: Direction::Forward,
        }]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn default_noise_figures() {
        let a = AmplifierSpec::default();
        assert_eq!(a.noise_figure(Band::S).unwrap(), 7.0);
        assert_eq!(a.noise_figure(Band::C).unwrap(), 4.5);
        assert_eq!(a.noise_figure(Band::L).unwrap(), 6.0);
    }
}
