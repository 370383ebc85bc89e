//! Per-channel SNR and throughput of a chain of identical spans.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::export::{csv_line, sig9};
use crate::nli::{
    accumulate_nli, closed_form_nli, gn_numerical_oracle, ClosedFormOptions, NliPerChannel, OracleOptions,
};
use crate::noise::{distributed_ase, lumped_ase, AsePerChannel};
use crate::raman::{solve_boundary_value, span_boundary, BvpOptions, BvpSolution, WaveSet};
use crate::system::{Band, LinkSpec, WdmGrid};
use crate::units::{db_to_linear, linear_to_db};

/// Reported SNRs are capped here so noiseless corner cases stay finite.
pub const SNR_CAP_DB: f64 = 60.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineOptions {
    pub bvp: BvpOptions,
    pub nli: ClosedFormOptions,
    /// Noise bandwidth; the symbol rate when `None`.
    pub reference_bandwidth: Option<f64>,
}

/// Noise added by one span, referred to the output of its lumped amplifier
/// (equivalently, to the launch plane of the next span).
#[derive(Debug, Clone)]
pub struct SpanNoise {
    pub launch_w: Vec<f64>,
    pub ase: AsePerChannel,
    pub nli: NliPerChannel,
    pub solution: BvpSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrReport {
    pub wavelength_nm: Vec<f64>,
    pub bands: Vec<Band>,
    pub snr_ase: Vec<f64>,
    pub snr_nli: Vec<f64>,
    pub snr_total: Vec<f64>,
    /// Tb/s
    pub throughput_total: f64,
    pub n_spans: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub n_spans: usize,
    pub channels: usize,
    pub throughput_tbps: f64,
    pub mean_snr_total_db: f64,
    pub mean_snr_ase_db: f64,
    pub mean_snr_nli_db: f64,
    pub min_snr_total_db: f64,
    pub max_snr_total_db: f64,
    pub mean_snr_total_db_per_band: Vec<(Band, f64)>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl SnrReport {
    /// `wavelength_nm,snr_ase_db,snr_nli_db,snr_total_db`, one row per channel.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("wavelength_nm,snr_ase_db,snr_nli_db,snr_total_db\n");
        for k in 0..self.wavelength_nm.len() {
            out.push_str(&csv_line([
                sig9(self.wavelength_nm[k]),
                sig9(self.snr_ase[k]),
                sig9(self.snr_nli[k]),
                sig9(self.snr_total[k]),
            ]));
        }
        out
    }

    /// Arithmetic means are taken over the dB values.
    pub fn summary(&self) -> ReportSummary {
        let fin = |v: &[f64]| mean(v.iter().copied());
        let mut per_band = Vec::new();
        for band in [Band::S, Band::C, Band::L] {
            let m = mean(
                self.bands
                    .iter()
                    .zip(&self.snr_total)
                    .filter(|(b, _)| **b == band)
                    .map(|(_, s)| *s),
            );
            if m.is_finite() {
                per_band.push((band, m));
            }
        }
        ReportSummary {
            n_spans: self.n_spans,
            channels: self.snr_total.len(),
            throughput_tbps: self.throughput_total,
            mean_snr_total_db: fin(&self.snr_total),
            mean_snr_ase_db: fin(&self.snr_ase),
            mean_snr_nli_db: fin(&self.snr_nli),
            min_snr_total_db: self.snr_total.iter().copied().fold(f64::INFINITY, f64::min),
            max_snr_total_db: self.snr_total.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_snr_total_db_per_band: per_band,
        }
    }

    pub fn mean_snr_total_db(&self) -> f64 {
        mean(self.snr_total.iter().copied())
    }
}

/// Σ 2·R_s·log₂(1 + SNR_k) in Tb/s from linear SNRs.
pub fn throughput_linear(snr: &[f64], symbol_rate_baud: f64) -> Result<f64> {
    let mut bits = 0.0;
    for (k, &s) in snr.iter().enumerate() {
        if !(s >= 0.0) || s.is_infinite() {
            return Err(Error::invalid(format!(
                "channel {k}: SNR must be finite and non-negative, got {s}"
            )));
        }
        bits += 2.0 * (1.0 + s).log2();
    }
    Ok(bits * symbol_rate_baud * 1e-12)
}

/// Total throughput in Tb/s from per-channel SNRs in dB (−∞ dB counts as zero).
pub fn throughput(snr_total_db: &[f64], grid: &WdmGrid) -> Result<f64> {
    if snr_total_db.len() != grid.len() {
        return Err(Error::invalid("SNR vector and grid disagree on the channel count"));
    }
    let linear: Vec<f64> = snr_total_db.iter().map(|&s| db_to_linear(s)).collect();
    throughput_linear(&linear, grid.symbol_rate_baud)
}

fn reference_bandwidth(link: &LinkSpec, options: &EngineOptions) -> f64 {
    options.reference_bandwidth.unwrap_or(link.grid.symbol_rate_baud)
}

/// Solves one span and computes the noise it adds. `guess` is an optional
/// warm start for the backward pump powers at z = 0.
pub fn span_noise(link: &LinkSpec, options: &EngineOptions, guess: Option<&[f64]>) -> Result<SpanNoise> {
    link.validate()?;
    let b_ref = reference_bandwidth(link, options);
    let waves = WaveSet::for_link(&link.grid, &link.pumps, &link.fiber)?;
    let boundary = span_boundary(&link.launch, &link.pumps);
    let solution = solve_boundary_value(&waves, &boundary, link.fiber.span_length_km, &options.bvp, guess)?;
    let evo = &solution.evolution;
    // The lumped amplifier restores each channel to its launch power; dark
    // channels use the gain a vanishing probe would see.
    let mut restore_db = Vec::with_capacity(link.grid.len());
    for ch in 0..link.grid.len() {
        let rho = evo.normalized_profile(ch, &link.fiber)?;
        restore_db.push(-linear_to_db(*rho.last().unwrap()));
    }
    let dist = distributed_ase(evo, &link.fiber, &link.grid, b_ref)?;
    let lumped = lumped_ase(&restore_db, &link.amplifier, &link.grid, b_ref)?;
    let dist_out: Vec<f64> = dist
        .iter()
        .zip(&restore_db)
        .map(|(a, g)| a * db_to_linear(*g))
        .collect();
    let nli = closed_form_nli(evo, &link.fiber, &link.grid, b_ref, &options.nli)?;
    Ok(SpanNoise {
        launch_w: link.launch.watts(),
        ase: AsePerChannel {
            distributed_ase: dist_out,
            lumped_ase: lumped,
            reference_bandwidth: b_ref,
        },
        nli,
        solution,
    })
}

fn capped_db(signal: f64, noise: f64) -> f64 {
    if noise > 0.0 {
        linear_to_db(signal / noise).min(SNR_CAP_DB)
    } else {
        SNR_CAP_DB
    }
}

/// SNR report for `n_spans` repetitions of the span described by `noise`.
pub fn report_from_span(noise: &SpanNoise, grid: &WdmGrid, n_spans: usize) -> Result<SnrReport> {
    if n_spans < 1 {
        return Err(Error::invalid("n_spans must be at least 1"));
    }
    let ase: Vec<f64> = noise.ase.total().iter().map(|a| a * n_spans as f64).collect();
    let nli = accumulate_nli(std::slice::from_ref(&noise.nli), n_spans)?;
    let n = grid.len();
    let mut snr_ase = Vec::with_capacity(n);
    let mut snr_nli = Vec::with_capacity(n);
    let mut snr_total = Vec::with_capacity(n);
    for k in 0..n {
        let p = noise.launch_w[k];
        snr_ase.push(capped_db(p, ase[k]));
        snr_nli.push(capped_db(p, nli[k]));
        snr_total.push(capped_db(p, ase[k] + nli[k]));
    }
    Ok(SnrReport {
        wavelength_nm: (0..n).map(|k| grid.wavelength(k) * 1e9).collect(),
        bands: grid.bands().to_vec(),
        throughput_total: throughput(&snr_total, grid)?,
        snr_ase,
        snr_nli,
        snr_total,
        n_spans,
    })
}

pub fn simulate_link_with(
    link: &LinkSpec,
    options: &EngineOptions,
    guess: Option<&[f64]>,
) -> Result<(SnrReport, SpanNoise)> {
    // every span is identical, so only the first is solved
    let noise = span_noise(link, options, guess).map_err(|e| match e {
        Error::Invalid(_) | Error::Config { .. } => e,
        other => Error::Span {
            span: 1,
            source: Box::new(other),
        },
    })?;
    let report = report_from_span(&noise, &link.grid, link.n_spans)?;
    Ok((report, noise))
}

pub fn simulate_link(link: &LinkSpec) -> Result<SnrReport> {
    simulate_link_with(link, &EngineOptions::default(), None).map(|(r, _)| r)
}

/// Closed-form NLI next to the numerical oracle for one span of `link`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub wavelength_nm: Vec<f64>,
    pub closed_form_w: Vec<f64>,
    pub oracle_w: Vec<f64>,
    /// 10·log10(closed form / oracle) per channel.
    pub deviation_db: Vec<f64>,
    /// The same for the summed NLI power.
    pub total_deviation_db: f64,
}

impl OracleComparison {
    pub fn max_abs_deviation_db(&self) -> f64 {
        self.deviation_db.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// `wavelength_nm,closed_form_nli_w,oracle_nli_w,deviation_db`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("wavelength_nm,closed_form_nli_w,oracle_nli_w,deviation_db\n");
        for k in 0..self.wavelength_nm.len() {
            out.push_str(&csv_line([
                sig9(self.wavelength_nm[k]),
                sig9(self.closed_form_w[k]),
                sig9(self.oracle_w[k]),
                sig9(self.deviation_db[k]),
            ]));
        }
        out
    }
}

pub fn oracle_comparison(link: &LinkSpec, options: &EngineOptions, oracle: &OracleOptions) -> Result<OracleComparison> {
    link.validate()?;
    let b_ref = reference_bandwidth(link, options);
    let waves = WaveSet::for_link(&link.grid, &link.pumps, &link.fiber)?;
    let boundary = span_boundary(&link.launch, &link.pumps);
    let solution = solve_boundary_value(&waves, &boundary, link.fiber.span_length_km, &options.bvp, None)?;
    let cf = closed_form_nli(&solution.evolution, &link.fiber, &link.grid, b_ref, &options.nli)?;
    let or = gn_numerical_oracle(&solution.evolution, &link.fiber, &link.grid, b_ref, oracle)?;
    let ratio_db = |a: f64, b: f64| 10.0 * (a / b).log10();
    Ok(OracleComparison {
        wavelength_nm: (0..link.grid.len()).map(|k| link.grid.wavelength(k) * 1e9).collect(),
        deviation_db: cf
            .nli_power
            .iter()
            .zip(&or.nli_power)
            .map(|(a, b)| ratio_db(*a, *b))
            .collect(),
        total_deviation_db: ratio_db(cf.nli_power.iter().sum(), or.nli_power.iter().sum()),
        closed_form_w: cf.nli_power,
        oracle_w: or.nli_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::FiberSpec;
    use crate::system::{AmplifierSpec, LaunchProfile, PumpSet};
    use approx::assert_relative_eq;

    fn small_grid(n: usize) -> WdmGrid {
        let f0 = 193.4e12;
        WdmGrid::from_channels(
            (0..n).map(|i| f0 + i as f64 * 100e9).collect(),
            vec![Band::C; n],
            100e9,
            96e9,
            1550e-9,
        )
        .unwrap()
    }

    fn link(n: usize, dbm: f64) -> LinkSpec {
        LinkSpec {
            n_spans: 10,
            fiber: FiberSpec::standard(),
            grid: small_grid(n),
            amplifier: AmplifierSpec::default(),
            pumps: PumpSet::none(),
            launch: LaunchProfile::uniform(n, dbm),
        }
    }

    #[test]
    fn throughput_examples() {
        let one = small_grid(1);
        assert_relative_eq!(throughput(&[0.0], &one).unwrap(), 0.192, max_relative = 1e-12);
        assert_eq!(throughput(&[f64::NEG_INFINITY; 3], &small_grid(3)).unwrap(), 0.0);
        assert!(throughput_linear(&[-0.1], 96e9).is_err());
        assert!(throughput(&[f64::NAN], &one).is_err());
    }

    #[test]
    fn snr_composition() {
        let r = simulate_link(&link(5, 0.0)).unwrap();
        for k in 0..5 {
            let inv = 1.0 / db_to_linear(r.snr_ase[k]) + 1.0 / db_to_linear(r.snr_nli[k]);
            assert_relative_eq!(1.0 / db_to_linear(r.snr_total[k]), inv, max_relative = 1e-9);
        }
        assert_relative_eq!(r.throughput_total, throughput(&r.snr_total, &small_grid(5)).unwrap());
    }

    #[test]
    fn span_count_scaling() {
        let l = link(4, 1.0);
        let (one, noise) = simulate_link_with(
            &LinkSpec {
                n_spans: 1,
                ..l.clone()
            },
            &EngineOptions::default(),
            None,
        )
        .unwrap();
        let ten = simulate_link(&l).unwrap();
        assert_eq!(report_from_span(&noise, &l.grid, 10).unwrap(), ten);
        for k in 0..4 {
            assert_relative_eq!(one.snr_nli[k] - ten.snr_nli[k], 10.0, max_relative = 1e-12);
            assert_relative_eq!(one.snr_ase[k] - ten.snr_ase[k], 10.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn dark_link_has_no_throughput() {
        let r = simulate_link(&link(3, f64::NEG_INFINITY)).unwrap();
        assert_eq!(r.throughput_total, 0.0);
    }

    #[test]
    fn noiseless_link_is_capped() {
        let mut l = link(2, 0.0);
        l.fiber.nonlinear_coefficient = 0.0;
        l.fiber.attenuation = crate::spectra::SampledCurve::new(vec![(1400.0, 1e-12), (1610.0, 1e-12)]).unwrap();
        for nf in l.amplifier.noise_figure_db.values_mut() {
            *nf = 0.0;
        }
        let r = simulate_link(&l).unwrap();
        assert!(r.snr_total.iter().all(|s| *s == SNR_CAP_DB));
        let expect = throughput(&[SNR_CAP_DB; 2], &l.grid).unwrap();
        assert_eq!(r.throughput_total, expect);
    }

    #[test]
    fn csv_shape() {
        let r = simulate_link(&link(3, 0.0)).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "wavelength_nm,snr_ase_db,snr_nli_db,snr_total_db");
        assert_eq!(lines.len(), 4);
    }
}
