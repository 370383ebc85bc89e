//! Two-stage launch power and pump optimization.
//!
//! Stage 1 searches pump powers (and optionally wavelengths) together with a
//! spectrally uniform total launch power; stage 2 keeps those pumps and
//! optimizes every channel's launch power.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{simulate_link_with, EngineOptions, ReportSummary};
use crate::pso::{pso_maximize, PsoConfig, StageResult, PENALTY};
use crate::savgol::savitzky_golay_smooth;
use crate::system::{Direction, LaunchProfile, LinkSpec, Pump, PumpSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Mode {
    /// Pump powers plus total launch power; wavelengths stay at the slot values.
    PowersOnly,
    /// Pump powers, pump wavelengths and total launch power.
    PowersAndWavelengths,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSlot {
    pub direction: Direction,
    pub wavelength_nm: f64,
}

/// Swarm parameters shared by both stages; bounds come from the stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmSettings {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub stall_tolerance: f64,
}

impl SwarmSettings {
    pub fn new(particles: usize, iterations: usize) -> Self {
        Self {
            particles,
            iterations,
            inertia: 0.729,
            cognitive: 1.494_45,
            social: 1.494_45,
            stall_tolerance: 0.0,
        }
    }

    fn config(&self, lower: Vec<f64>, upper: Vec<f64>, seed: u64) -> PsoConfig {
        PsoConfig {
            inertia: self.inertia,
            cognitive: self.cognitive,
            social: self.social,
            stall_tolerance: self.stall_tolerance,
            ..PsoConfig::new(self.particles, self.iterations, lower, upper, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage1Settings {
    pub mode: Stage1Mode,
    pub slots: Vec<PumpSlot>,
    pub power_bounds_mw: (f64, f64),
    pub wavelength_bounds_nm: (f64, f64),
    pub total_lp_bounds_dbm: (f64, f64),
    /// Pumps below this are reported as negligible.
    pub negligible_mw: f64,
    pub swarm: SwarmSettings,
    pub seed: u64,
}

/// Six forward and six backward slots. The wavelengths of the eight pumps the
/// reference optimum kept are used as-is; the remaining slots are spread over
/// unused parts of the pump window.
pub fn reference_slots() -> Vec<PumpSlot> {
    let f = |nm| PumpSlot {
        direction: Direction::Forward,
        wavelength_nm: nm,
    };
    let b = |nm| PumpSlot {
        direction: Direction::Backward,
        wavelength_nm: nm,
    };
    vec![
        f(1405.0),
        f(1410.0),
        f(1425.0),
        f(1440.0),
        f(1455.0),
        f(1470.0),
        b(1422.0),
        b(1428.0),
        b(1437.0),
        b(1452.0),
        b(1465.0),
        b(1483.0),
    ]
}

impl Stage1Settings {
    pub fn reference(seed: u64) -> Self {
        Self {
            mode: Stage1Mode::PowersOnly,
            slots: reference_slots(),
            power_bounds_mw: (0.0, 250.0),
            wavelength_bounds_nm: (1405.0, 1490.0),
            total_lp_bounds_dbm: (10.0, 25.0),
            negligible_mw: 1.0,
            swarm: SwarmSettings::new(50, 50),
            seed,
        }
    }

    pub fn dimension(&self) -> usize {
        match self.mode {
            Stage1Mode::PowersOnly => self.slots.len() + 1,
            Stage1Mode::PowersAndWavelengths => 2 * self.slots.len() + 1,
        }
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.slots.len();
        let mut lo = vec![self.power_bounds_mw.0; n];
        let mut hi = vec![self.power_bounds_mw.1; n];
        if self.mode == Stage1Mode::PowersAndWavelengths {
            lo.extend(std::iter::repeat_n(self.wavelength_bounds_nm.0, n));
            hi.extend(std::iter::repeat_n(self.wavelength_bounds_nm.1, n));
        }
        lo.push(self.total_lp_bounds_dbm.0);
        hi.push(self.total_lp_bounds_dbm.1);
        (lo, hi)
    }

    /// Pump set and total launch power encoded by a swarm position.
    pub fn decode(&self, x: &[f64], window_nm: (f64, f64)) -> (PumpSet, f64) {
        let n = self.slots.len();
        let pumps = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let nm = match self.mode {
                    Stage1Mode::PowersOnly => s.wavelength_nm,
                    Stage1Mode::PowersAndWavelengths => x[n + i],
                };
                Pump {
                    wavelength_m: nm * 1e-9,
                    power_w: x[i] * 1e-3,
                    direction: s.direction,
                }
            })
            .collect();
        (PumpSet { pumps, window_nm }, x[x.len() - 1])
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("power_bounds_mw", self.power_bounds_mw),
            ("wavelength_bounds_nm", self.wavelength_bounds_nm),
            ("total_lp_bounds_dbm", self.total_lp_bounds_dbm),
        ] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must satisfy lower <= upper, got [{lo}, {hi}]"
                )));
            }
        }
        if self.power_bounds_mw.0 < 0.0 {
            return Err(Error::invalid("pump powers cannot be negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Outcome {
    pub pumps: Vec<PumpReport>,
    pub total_lp_dbm: f64,
    pub per_channel_lp_dbm: f64,
    pub result: StageResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpReport {
    pub direction: Direction,
    pub wavelength_nm: f64,
    pub power_mw: f64,
    pub negligible: bool,
}

impl Stage1Outcome {
    pub fn pump_set(&self, window_nm: (f64, f64)) -> PumpSet {
        PumpSet {
            pumps: self
                .pumps
                .iter()
                .map(|p| Pump {
                    wavelength_m: p.wavelength_nm * 1e-9,
                    power_w: p.power_mw * 1e-3,
                    direction: p.direction,
                })
                .collect(),
            window_nm,
        }
    }
}

fn single_span(link: &LinkSpec) -> LinkSpec {
    LinkSpec {
        n_spans: 1,
        ..link.clone()
    }
}

fn objective(link: &LinkSpec, options: &EngineOptions, guess: Option<&[f64]>) -> f64 {
    match simulate_link_with(link, options, guess) {
        Ok((report, _)) => report.throughput_total,
        Err(e) => {
            log::debug!("cost evaluation failed: {e}");
            PENALTY
        }
    }
}

/// Maximizes single-span throughput over pump settings and a uniform launch
/// power. `link_template` supplies everything else.
pub fn stage1_pump_and_uniform_lp(
    link_template: &LinkSpec,
    settings: &Stage1Settings,
    options: &EngineOptions,
) -> Result<Stage1Outcome> {
    settings.validate()?;
    let n_ch = link_template.grid.len();
    let window = link_template.pumps.window_nm;
    let base = single_span(link_template);
    let (lo, hi) = settings.bounds();
    let cfg = settings.swarm.config(lo, hi, settings.seed);
    let cost = |x: &[f64]| {
        let (pumps, total) = settings.decode(x, window);
        let link = LinkSpec {
            pumps,
            launch: LaunchProfile::from_total(n_ch, total),
            ..base.clone()
        };
        objective(&link, options, None)
    };
    let result = pso_maximize(cost, &cfg, &[])?;
    if result.penalties > 0 {
        log::warn!(
            "stage 1: {} of {} evaluations failed",
            result.penalties,
            result.evaluations
        );
    }
    let (pumps, total) = settings.decode(&result.best_vector, window);
    Ok(Stage1Outcome {
        pumps: pumps
            .pumps
            .iter()
            .map(|p| PumpReport {
                direction: p.direction,
                wavelength_nm: p.wavelength_m * 1e9,
                power_mw: p.power_w * 1e3,
                negligible: p.power_w * 1e3 < settings.negligible_mw,
            })
            .collect(),
        total_lp_dbm: total,
        per_channel_lp_dbm: total - 10.0 * (n_ch as f64).log10(),
        result,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage2Settings {
    pub bounds_dbm: (f64, f64),
    pub swarm: SwarmSettings,
    /// Half-width of the uniform jitter around the starting profile, dB.
    pub jitter_db: f64,
    pub seed: u64,
}

impl Stage2Settings {
    /// Ten particles per channel and 75 iterations within `bounds_dbm`.
    pub fn reference(channels: usize, bounds_dbm: (f64, f64), seed: u64) -> Self {
        Self {
            bounds_dbm,
            swarm: SwarmSettings::new(10 * channels, 75),
            jitter_db: 3.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage2Outcome {
    pub launch_dbm: Vec<f64>,
    /// Objective of the unmodified starting profile.
    pub start_objective: f64,
    pub result: StageResult,
}

impl Stage2Outcome {
    pub fn launch(&self) -> LaunchProfile {
        LaunchProfile {
            per_channel_dbm: self.launch_dbm.clone(),
        }
    }
}

/// Starting positions: the given profile, then jittered copies of it.
fn stage2_seeds(start: &[f64], settings: &Stage2Settings) -> Vec<Vec<f64>> {
    let (lo, hi) = settings.bounds_dbm;
    let clamp = |v: f64| v.clamp(lo, hi);
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5eed_0f57_a6e2);
    (0..settings.swarm.particles)
        .map(|i| {
            if i == 0 {
                start.iter().map(|&v| clamp(v)).collect()
            } else {
                start
                    .iter()
                    .map(|&v| clamp(v + settings.jitter_db * (2.0 * rng.random::<f64>() - 1.0)))
                    .collect()
            }
        })
        .collect()
}

/// Maximizes single-span throughput over per-channel launch powers, keeping
/// the pumps of `link_with_pumps` and starting from its launch profile.
pub fn stage2_per_channel_lp(
    link_with_pumps: &LinkSpec,
    settings: &Stage2Settings,
    options: &EngineOptions,
) -> Result<Stage2Outcome> {
    let (lo, hi) = settings.bounds_dbm;
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid(format!(
            "stage-2 bounds must satisfy lower <= upper, got [{lo}, {hi}]"
        )));
    }
    if !(settings.jitter_db >= 0.0) {
        return Err(Error::invalid("jitter must be non-negative"));
    }
    let n_ch = link_with_pumps.grid.len();
    let base = single_span(link_with_pumps);
    // Every evaluation warm-starts from the same reference solution, so the
    // cost stays a pure function of the position.
    let (reference, noise) = simulate_link_with(&base, options, None)?;
    let guess = noise.solution.backward_start();
    let cfg = settings.swarm.config(vec![lo; n_ch], vec![hi; n_ch], settings.seed);
    let cost = |x: &[f64]| {
        let link = base.with_launch(LaunchProfile {
            per_channel_dbm: x.to_vec(),
        });
        objective(&link, options, Some(&guess))
    };
    let seeds = stage2_seeds(&base.launch.per_channel_dbm, settings);
    let result = pso_maximize(cost, &cfg, &seeds)?;
    if result.penalties > 0 {
        log::warn!(
            "stage 2: {} of {} evaluations failed",
            result.penalties,
            result.evaluations
        );
    }
    Ok(Stage2Outcome {
        launch_dbm: result.best_vector.clone(),
        start_objective: reference.throughput_total,
        result,
    })
}

/// Uniform, optimized and smoothed profiles compared over the full link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileEvaluation {
    pub n_spans: usize,
    pub uniform: ReportSummary,
    pub optimized: ReportSummary,
    pub smoothed: ReportSummary,
    /// Mean per-channel SNR of the smoothed profile minus that of the uniform one, dB.
    pub mean_snr_gain_db: f64,
    pub mean_snr_gain_raw_db: f64,
    /// Throughput lost by smoothing, relative to the raw optimum, percent.
    pub smoothing_loss_percent: f64,
}

/// Evaluates `link.launch` (the uniform start), `optimized` and its
/// Savitzky–Golay smoothing over `link.n_spans` spans.
pub fn evaluate_profiles(
    link: &LinkSpec,
    optimized: &LaunchProfile,
    window: usize,
    order: usize,
    options: &EngineOptions,
) -> Result<(ProfileEvaluation, LaunchProfile)> {
    let smoothed = savitzky_golay_smooth(optimized, window, order)?;
    let run =
        |launch: &LaunchProfile| simulate_link_with(&link.with_launch(launch.clone()), options, None).map(|(r, _)| r);
    let uniform = run(&link.launch)?;
    let raw = run(optimized)?;
    let smooth = run(&smoothed)?;
    let evaluation = ProfileEvaluation {
        n_spans: link.n_spans,
        mean_snr_gain_db: smooth.mean_snr_total_db() - uniform.mean_snr_total_db(),
        mean_snr_gain_raw_db: raw.mean_snr_total_db() - uniform.mean_snr_total_db(),
        smoothing_loss_percent: 100.0 * (raw.throughput_total - smooth.throughput_total) / raw.throughput_total,
        uniform: uniform.summary(),
        optimized: raw.summary(),
        smoothed: smooth.summary(),
    };
    Ok((evaluation, smoothed))
}
