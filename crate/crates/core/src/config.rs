//! Scenario files. A JSON document is overlaid on the defaults of its mode
//! (`hybrid` or `lumped`), validated, and echoed back fully populated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::link::EngineOptions;
use crate::raman::BvpOptions;
use crate::spectra::{
    FiberSpec, SampledCurve, ATTENUATION_HEADER, DEFAULT_ATTENUATION_CSV, DEFAULT_RAMAN_GAIN_CSV, RAMAN_GAIN_HEADER,
};
use crate::stages::{reference_slots, PumpSlot, Stage1Mode, Stage1Settings, Stage2Settings, SwarmSettings};
use crate::system::{
    build_grid, AmplifierSpec, Band, BandAllocation, BandPlan, Direction, GainPolicy, LaunchProfile, LinkSpec, Pump,
    PumpSet, WdmGrid, REFERENCE_PUMPS,
};

/// Spectrum path value selecting the curve compiled into the crate.
pub const BUILTIN: &str = "builtin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Hybrid,
    Lumped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub link: LinkConfig,
    pub engine: EngineConfig,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub n_spans: usize,
    pub span_length_km: f64,
    pub grid: GridConfig,
    pub fiber: FiberConfig,
    pub amplifier: AmplifierConfig,
    pub pump_window_nm: [f64; 2],
    pub pumps: Vec<PumpConfig>,
    pub launch: LaunchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Short to long wavelength.
    pub bands: Vec<BandAllocation>,
    pub gaps_nm: Vec<f64>,
    pub channel_spacing_ghz: f64,
    pub symbol_rate_gbaud: f64,
    pub center_wavelength_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    /// CSV path, relative to the config file, or `builtin`.
    pub attenuation_csv: String,
    pub raman_gain_csv: String,
    pub effective_area_um2: f64,
    pub nonlinear_coefficient_per_w_per_km: f64,
    pub nonlinear_index_m2_per_w: f64,
    pub dispersion_ps_per_nm_per_km: f64,
    pub dispersion_slope_ps_per_nm2_per_km: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierConfig {
    pub noise_figure_db: BTreeMap<Band, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub direction: Direction,
    pub wavelength_nm: f64,
    pub power_mw: f64,
}

/// Exactly one of the two fields is set. A `launch` object in a file
/// replaces the default one as a whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_channel_dbm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub bvp_tolerance: f64,
    pub bvp_max_iterations: usize,
    pub bvp_damping: f64,
    pub z_points: usize,
    pub ode_rtol: f64,
    /// Noise bandwidth; the symbol rate when null.
    pub reference_bandwidth_ghz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub smoothing: SmoothingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwarmConfig {
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub stall_tolerance: f64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        let s = SwarmSettings::new(1, 1);
        Self {
            inertia: s.inertia,
            cognitive: s.cognitive,
            social: s.social,
            stall_tolerance: s.stall_tolerance,
        }
    }
}

impl SwarmConfig {
    fn settings(&self, particles: usize, iterations: usize) -> SwarmSettings {
        SwarmSettings {
            particles,
            iterations,
            inertia: self.inertia,
            cognitive: self.cognitive,
            social: self.social,
            stall_tolerance: self.stall_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Config {
    pub variables: Stage1Mode,
    pub slots: Vec<PumpSlot>,
    pub power_bounds_mw: [f64; 2],
    pub wavelength_bounds_nm: [f64; 2],
    pub total_lp_bounds_dbm: [f64; 2],
    pub negligible_mw: f64,
    pub particles: usize,
    pub iterations: usize,
    pub swarm: SwarmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage2Config {
    pub bounds_dbm: [f64; 2],
    pub particles_per_channel: usize,
    pub iterations: usize,
    pub jitter_db: f64,
    pub swarm: SwarmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub window: usize,
    pub order: usize,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub n_spans: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Reference system: 131 channels, 96 GBd, 10 × 100 km, NF 7/4.5/6 dB.
    pub fn defaults(mode: Mode) -> Self {
        let fiber = FiberSpec::standard();
        let plan = BandPlan::reference();
        let (pumps, launch, slots, stage2_bounds) = match mode {
            Mode::Hybrid => (
                REFERENCE_PUMPS
                    .iter()
                    .map(|&(direction, wavelength_nm, power_mw)| PumpConfig {
                        direction,
                        wavelength_nm,
                        power_mw,
                    })
                    .collect(),
                18.75,
                reference_slots(),
                [-10.0, 10.0],
            ),
            Mode::Lumped => (Vec::new(), 23.85, Vec::new(), [-5.0, 15.0]),
        };
        let bvp = BvpOptions::default();
        Self {
            mode,
            output_dir: PathBuf::from("uwb-out"),
            link: LinkConfig {
                n_spans: 10,
                span_length_km: fiber.span_length_km,
                grid: GridConfig {
                    bands: plan.bands,
                    gaps_nm: plan.gaps_nm,
                    channel_spacing_ghz: 100.0,
                    symbol_rate_gbaud: 96.0,
                    center_wavelength_nm: 1550.0,
                },
                fiber: FiberConfig {
                    attenuation_csv: BUILTIN.into(),
                    raman_gain_csv: BUILTIN.into(),
                    effective_area_um2: fiber.effective_area_um2,
                    nonlinear_coefficient_per_w_per_km: fiber.nonlinear_coefficient,
                    nonlinear_index_m2_per_w: fiber.nonlinear_index,
                    dispersion_ps_per_nm_per_km: fiber.dispersion,
                    dispersion_slope_ps_per_nm2_per_km: fiber.dispersion_slope,
                    temperature_k: fiber.temperature_k,
                },
                amplifier: AmplifierConfig {
                    noise_figure_db: AmplifierSpec::default().noise_figure_db,
                },
                pump_window_nm: [1405.0, 1490.0],
                pumps,
                launch: LaunchConfig {
                    total_dbm: Some(launch),
                    per_channel_dbm: None,
                },
            },
            engine: EngineConfig {
                bvp_tolerance: bvp.tolerance,
                bvp_max_iterations: bvp.max_iterations,
                bvp_damping: bvp.damping,
                z_points: bvp.z_points,
                ode_rtol: bvp.ode.rtol,
                reference_bandwidth_ghz: None,
            },
            optimizer: OptimizerConfig {
                seed: 42,
                stage1: Stage1Config {
                    variables: Stage1Mode::PowersOnly,
                    slots,
                    power_bounds_mw: [0.0, 250.0],
                    wavelength_bounds_nm: [1405.0, 1490.0],
                    total_lp_bounds_dbm: [10.0, 25.0],
                    negligible_mw: 1.0,
                    particles: 50,
                    iterations: 50,
                    swarm: SwarmConfig::default(),
                },
                stage2: Stage2Config {
                    bounds_dbm: stage2_bounds,
                    particles_per_channel: 10,
                    iterations: 75,
                    jitter_db: 3.0,
                    swarm: SwarmConfig::default(),
                },
                smoothing: SmoothingConfig { window: 7, order: 2 },
            },
        }
    }

    pub fn band_plan(&self) -> BandPlan {
        let g = &self.link.grid;
        BandPlan {
            bands: g.bands.clone(),
            gaps_nm: g.gaps_nm.clone(),
            channel_spacing_hz: g.channel_spacing_ghz * 1e9,
            symbol_rate_baud: g.symbol_rate_gbaud * 1e9,
            center_wavelength_m: g.center_wavelength_nm * 1e-9,
        }
    }

    pub fn grid(&self) -> Result<WdmGrid> {
        build_grid(&self.band_plan()).map_err(|e| Error::config("/link/grid", e.to_string()))
    }

    pub fn fiber(&self) -> Result<FiberSpec> {
        let f = &self.link.fiber;
        let curve = |path: &str, builtin: &str, header, pointer: &str| -> Result<SampledCurve> {
            let r = if path == BUILTIN {
                SampledCurve::from_csv_str(builtin, header)
            } else {
                SampledCurve::from_csv_path(Path::new(path), header)
            };
            r.map_err(|e| Error::config(pointer, e.to_string()))
        };
        Ok(FiberSpec {
            attenuation: curve(
                &f.attenuation_csv,
                DEFAULT_ATTENUATION_CSV,
                ATTENUATION_HEADER,
                "/link/fiber/attenuation_csv",
            )?,
            raman_gain: curve(
                &f.raman_gain_csv,
                DEFAULT_RAMAN_GAIN_CSV,
                RAMAN_GAIN_HEADER,
                "/link/fiber/raman_gain_csv",
            )?,
            effective_area_um2: f.effective_area_um2,
            nonlinear_coefficient: f.nonlinear_coefficient_per_w_per_km,
            nonlinear_index: f.nonlinear_index_m2_per_w,
            dispersion: f.dispersion_ps_per_nm_per_km,
            dispersion_slope: f.dispersion_slope_ps_per_nm2_per_km,
            span_length_km: self.link.span_length_km,
            temperature_k: f.temperature_k,
        })
    }

    pub fn pumps(&self) -> PumpSet {
        PumpSet {
            pumps: self
                .link
                .pumps
                .iter()
                .map(|p| Pump {
                    wavelength_m: p.wavelength_nm * 1e-9,
                    power_w: p.power_mw * 1e-3,
                    direction: p.direction,
                })
                .collect(),
            window_nm: (self.link.pump_window_nm[0], self.link.pump_window_nm[1]),
        }
    }

    pub fn launch(&self, channels: usize) -> LaunchProfile {
        match (&self.link.launch.per_channel_dbm, self.link.launch.total_dbm) {
            (Some(p), _) => LaunchProfile {
                per_channel_dbm: p.clone(),
            },
            (None, Some(t)) => LaunchProfile::from_total(channels, t),
            (None, None) => unreachable!("validated launch"),
        }
    }

    pub fn link_spec(&self) -> Result<LinkSpec> {
        let grid = self.grid()?;
        let launch = self.launch(grid.len());
        let link = LinkSpec {
            n_spans: self.link.n_spans,
            fiber: self.fiber()?,
            grid,
            amplifier: AmplifierSpec {
                noise_figure_db: self.link.amplifier.noise_figure_db.clone(),
                gain_policy: GainPolicy::RestoreLaunchProfile,
            },
            pumps: self.pumps(),
            launch,
        };
        link.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config("/link", other.to_string()),
        })?;
        Ok(link)
    }

    pub fn engine_options(&self) -> EngineOptions {
        let e = &self.engine;
        let mut opts = EngineOptions::default();
        opts.bvp.tolerance = e.bvp_tolerance;
        opts.bvp.max_iterations = e.bvp_max_iterations;
        opts.bvp.damping = e.bvp_damping;
        opts.bvp.z_points = e.z_points;
        opts.bvp.ode.rtol = e.ode_rtol;
        opts.reference_bandwidth = e.reference_bandwidth_ghz.map(|g| g * 1e9);
        opts
    }

    pub fn stage1_settings(&self) -> Stage1Settings {
        let s = &self.optimizer.stage1;
        Stage1Settings {
            mode: s.variables,
            slots: s.slots.clone(),
            power_bounds_mw: (s.power_bounds_mw[0], s.power_bounds_mw[1]),
            wavelength_bounds_nm: (s.wavelength_bounds_nm[0], s.wavelength_bounds_nm[1]),
            total_lp_bounds_dbm: (s.total_lp_bounds_dbm[0], s.total_lp_bounds_dbm[1]),
            negligible_mw: s.negligible_mw,
            swarm: s.swarm.settings(s.particles, s.iterations),
            seed: self.optimizer.seed,
        }
    }

    pub fn stage2_settings(&self, channels: usize) -> Stage2Settings {
        let s = &self.optimizer.stage2;
        Stage2Settings {
            bounds_dbm: (s.bounds_dbm[0], s.bounds_dbm[1]),
            swarm: s.swarm.settings(s.particles_per_channel * channels, s.iterations),
            jitter_db: s.jitter_db,
            seed: self.optimizer.seed,
        }
    }

    /// Pretty JSON of the fully populated configuration; loading it again
    /// yields the same configuration.
    pub fn echo(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Checks everything that serde cannot, reporting the offending key.
    pub fn validate(&self) -> Result<()> {
        let l = &self.link;
        let err = |p: &str, m: String| Err(Error::config(p, m));
        if l.n_spans < 1 {
            return err("/link/n_spans", "must be at least 1".into());
        }
        for (p, v) in [
            ("/link/span_length_km", l.span_length_km),
            ("/link/grid/channel_spacing_ghz", l.grid.channel_spacing_ghz),
            ("/link/grid/symbol_rate_gbaud", l.grid.symbol_rate_gbaud),
            ("/link/grid/center_wavelength_nm", l.grid.center_wavelength_nm),
            ("/link/fiber/effective_area_um2", l.fiber.effective_area_um2),
            ("/link/fiber/nonlinear_index_m2_per_w", l.fiber.nonlinear_index_m2_per_w),
            ("/link/fiber/temperature_k", l.fiber.temperature_k),
            ("/engine/bvp_tolerance", self.engine.bvp_tolerance),
            ("/engine/bvp_damping", self.engine.bvp_damping),
            ("/engine/ode_rtol", self.engine.ode_rtol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return err(p, format!("must be positive, got {v}"));
            }
        }
        if l.grid.symbol_rate_gbaud > l.grid.channel_spacing_ghz {
            return err(
                "/link/grid/symbol_rate_gbaud",
                "must not exceed the channel spacing".into(),
            );
        }
        if l.grid.gaps_nm.len() + 1 != l.grid.bands.len() {
            return err("/link/grid/gaps_nm", "needs one gap between each pair of bands".into());
        }
        for (i, b) in l.grid.bands.iter().enumerate() {
            if b.channels == 0 {
                return err(&format!("/link/grid/bands/{i}/channels"), "must be at least 1".into());
            }
            if !l.amplifier.noise_figure_db.contains_key(&b.band) {
                return err(
                    &format!("/link/amplifier/noise_figure_db/{}", b.band),
                    "missing noise figure".into(),
                );
            }
        }
        for (band, nf) in &l.amplifier.noise_figure_db {
            if !(*nf >= 0.0) || !nf.is_finite() {
                return err(
                    &format!("/link/amplifier/noise_figure_db/{band}"),
                    format!("must be non-negative, got {nf}"),
                );
            }
        }
        let [wlo, whi] = l.pump_window_nm;
        if !(wlo < whi) {
            return err(
                "/link/pump_window_nm",
                "must be [lower, upper] with lower < upper".into(),
            );
        }
        if self.mode == Mode::Lumped && !l.pumps.is_empty() {
            return err("/link/pumps", "lumped mode takes no Raman pumps".into());
        }
        for (i, p) in l.pumps.iter().enumerate() {
            if !(p.wavelength_nm >= wlo && p.wavelength_nm <= whi) {
                return err(
                    &format!("/link/pumps/{i}/wavelength_nm"),
                    format!("{} nm outside the pump window", p.wavelength_nm),
                );
            }
            if !(p.power_mw >= 0.0) || !p.power_mw.is_finite() {
                return err(
                    &format!("/link/pumps/{i}/power_mw"),
                    format!("must be non-negative, got {}", p.power_mw),
                );
            }
        }
        let channels: usize = l.grid.bands.iter().map(|b| b.channels).sum();
        match (&l.launch.total_dbm, &l.launch.per_channel_dbm) {
            (Some(_), Some(_)) | (None, None) => {
                return err(
                    "/link/launch",
                    "set exactly one of total_dbm and per_channel_dbm".into(),
                )
            }
            (Some(t), None) if !t.is_finite() => return err("/link/launch/total_dbm", "must be finite".into()),
            (None, Some(p)) if p.len() != channels => {
                return err(
                    "/link/launch/per_channel_dbm",
                    format!("has {} entries for {channels} channels", p.len()),
                )
            }
            (None, Some(p)) => {
                if let Some(i) = p.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
                    return err(
                        &format!("/link/launch/per_channel_dbm/{i}"),
                        "must be finite or -inf".into(),
                    );
                }
            }
            _ => {}
        }
        if self.engine.bvp_max_iterations < 1 || self.engine.z_points < 2 {
            return err("/engine", "bvp_max_iterations >= 1 and z_points >= 2 required".into());
        }
        if let Some(b) = self.engine.reference_bandwidth_ghz {
            if !(b > 0.0) {
                return err("/engine/reference_bandwidth_ghz", "must be positive or null".into());
            }
        }
        self.validate_optimizer()
    }

    fn validate_optimizer(&self) -> Result<()> {
        let o = &self.optimizer;
        let err = |p: &str, m: String| Err(Error::config(p, m));
        let bounds = [
            ("/optimizer/stage1/power_bounds_mw", o.stage1.power_bounds_mw),
            ("/optimizer/stage1/wavelength_bounds_nm", o.stage1.wavelength_bounds_nm),
            ("/optimizer/stage1/total_lp_bounds_dbm", o.stage1.total_lp_bounds_dbm),
            ("/optimizer/stage2/bounds_dbm", o.stage2.bounds_dbm),
        ];
        for (p, [lo, hi]) in bounds {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return err(
                    p,
                    format!("must be [lower, upper] with lower <= upper, got [{lo}, {hi}]"),
                );
            }
        }
        if o.stage1.power_bounds_mw[0] < 0.0 {
            return err(
                "/optimizer/stage1/power_bounds_mw",
                "pump powers cannot be negative".into(),
            );
        }
        let [wlo, whi] = self.link.pump_window_nm;
        if o.stage1.variables == Stage1Mode::PowersAndWavelengths
            && (o.stage1.wavelength_bounds_nm[0] < wlo || o.stage1.wavelength_bounds_nm[1] > whi)
        {
            return err(
                "/optimizer/stage1/wavelength_bounds_nm",
                "must lie inside the pump window".into(),
            );
        }
        if self.mode == Mode::Lumped && !o.stage1.slots.is_empty() {
            return err("/optimizer/stage1/slots", "lumped mode takes no pump slots".into());
        }
        for (i, s) in o.stage1.slots.iter().enumerate() {
            if !(s.wavelength_nm >= wlo && s.wavelength_nm <= whi) {
                return err(
                    &format!("/optimizer/stage1/slots/{i}/wavelength_nm"),
                    "outside the pump window".into(),
                );
            }
        }
        for (p, v) in [
            ("/optimizer/stage1/particles", o.stage1.particles),
            ("/optimizer/stage1/iterations", o.stage1.iterations),
            (
                "/optimizer/stage2/particles_per_channel",
                o.stage2.particles_per_channel,
            ),
            ("/optimizer/stage2/iterations", o.stage2.iterations),
        ] {
            if v < 1 {
                return err(p, "must be at least 1".into());
            }
        }
        for (p, s) in [
            ("/optimizer/stage1/swarm", &o.stage1.swarm),
            ("/optimizer/stage2/swarm", &o.stage2.swarm),
        ] {
            for (k, v) in [("inertia", s.inertia), ("cognitive", s.cognitive), ("social", s.social)] {
                if !(v > 0.0) || !v.is_finite() {
                    return err(&format!("{p}/{k}"), format!("must be positive, got {v}"));
                }
            }
            if !(s.stall_tolerance >= 0.0) {
                return err(&format!("{p}/stall_tolerance"), "must be non-negative".into());
            }
        }
        if !(o.stage2.jitter_db >= 0.0) {
            return err("/optimizer/stage2/jitter_db", "must be non-negative".into());
        }
        if !(o.stage1.negligible_mw >= 0.0) {
            return err("/optimizer/stage1/negligible_mw", "must be non-negative".into());
        }
        let sm = &o.smoothing;
        if sm.window.is_multiple_of(2) || sm.order >= sm.window {
            return err(
                "/optimizer/smoothing",
                "window must be odd and larger than the order".into(),
            );
        }
        Ok(())
    }
}

/// Objects replaced whole by a file instead of merged key by key: the two
/// launch variants must not mix, and a noise-figure map lists every band.
const ATOMIC_KEYS: [&str; 2] = ["launch", "noise_figure_db"];

/// Recursively overlays `top` on `base`.
fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if !ATOMIC_KEYS.contains(&k.as_str()) && slot.is_object() && v.is_object() => {
                        overlay(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

fn resolve_path(value: &mut String, dir: &Path) {
    if value != BUILTIN && Path::new(value.as_str()).is_relative() {
        *value = dir.join(value.as_str()).to_string_lossy().into_owned();
    }
}

/// Parses a scenario document. Relative spectrum paths are resolved against
/// `base_dir` and stored resolved.
pub fn parse_config(text: &str, base_dir: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let user: Value = serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
    let Value::Object(mut user) = user else {
        return Err(Error::config("", "the document must be a JSON object"));
    };
    if let Some(m) = overrides.mode {
        user.insert("mode".into(), serde_json::to_value(m).expect("mode serializes"));
    }
    let mode: Mode = match user.get("mode") {
        None => return Err(Error::config("/mode", "missing; expected \"hybrid\" or \"lumped\"")),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::config("/mode", e.to_string()))?,
    };
    let mut merged = serde_json::to_value(ScenarioConfig::defaults(mode)).expect("defaults serialize");
    overlay(&mut merged, Value::Object(user));
    let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
        let pointer: String = e
            .path()
            .iter()
            .map(|seg| match seg {
                serde_path_to_error::Segment::Seq { index } => format!("/{index}"),
                serde_path_to_error::Segment::Map { key } => format!("/{key}"),
                serde_path_to_error::Segment::Enum { variant } => format!("/{variant}"),
                serde_path_to_error::Segment::Unknown => String::new(),
            })
            .collect();
        Error::config(pointer, e.into_inner().to_string())
    })?;
    if let Some(seed) = overrides.seed {
        cfg.optimizer.seed = seed;
    }
    if let Some(n) = overrides.n_spans {
        cfg.link.n_spans = n;
    }
    if let Some(out) = &overrides.output_dir {
        cfg.output_dir.clone_from(out);
    }
    resolve_path(&mut cfg.link.fiber.attenuation_csv, base_dir);
    resolve_path(&mut cfg.link.fiber.raman_gain_csv, base_dir);
    cfg.validate()?;
    cfg.link_spec()?;
    Ok(cfg)
}

pub fn load_config_with(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        dir
    };
    parse_config(&text, &dir, overrides)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    load_config_with(path, &Overrides::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        parse_config(text, Path::new("."), &Overrides::default())
    }

    fn pointer(e: Error) -> String {
        match e {
            Error::Config { pointer, .. } => pointer,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn mode_alone_gives_reference_system() {
        let cfg = parse(r#"{"mode":"hybrid"}"#).unwrap();
        assert_eq!(cfg, ScenarioConfig::defaults(Mode::Hybrid));
        let link = cfg.link_spec().unwrap();
        assert_eq!(link.grid.len(), 131);
        assert_eq!(link.grid.symbol_rate_baud, 96e9);
        assert_eq!(link.n_spans, 10);
        assert_eq!(link.fiber.span_length_km, 100.0);
        assert_eq!(link.amplifier.noise_figure_db[&Band::S], 7.0);
        assert_eq!(link.amplifier.noise_figure_db[&Band::C], 4.5);
        assert_eq!(link.amplifier.noise_figure_db[&Band::L], 6.0);
        assert_eq!(link.pumps.pumps.len(), 8);
        let lumped = parse(r#"{"mode":"lumped"}"#).unwrap().link_spec().unwrap();
        assert!(lumped.pumps.pumps.is_empty());
    }

    #[test]
    fn errors_name_the_key() {
        let e = parse(r#"{"mode":"hybrid","link":{"span_length_km":-3}}"#).unwrap_err();
        assert_eq!(pointer(e), "/link/span_length_km");
        let e = parse(r#"{"mode":"hybrid","link":{"fiber":{"colour":1}}}"#).unwrap_err();
        assert!(pointer(e).starts_with("/link/fiber"));
        let e = parse(r#"{"mode":"hybrid","link":{"n_spans":"ten"}}"#).unwrap_err();
        assert_eq!(pointer(e), "/link/n_spans");
        let e = parse(r#"{"link":{}}"#).unwrap_err();
        assert_eq!(pointer(e), "/mode");
        let e = parse(r#"{"mode":"hybrid","link":{"amplifier":{"noise_figure_db":{"S":7,"C":4.5}}}}"#).unwrap_err();
        assert_eq!(pointer(e), "/link/amplifier/noise_figure_db/L");
        let e =
            parse(r#"{"mode":"lumped","link":{"pumps":[{"direction":"forward","wavelength_nm":1420,"power_mw":5}]}}"#)
                .unwrap_err();
        assert_eq!(pointer(e), "/link/pumps");
    }

    #[test]
    fn launch_is_replaced_whole() {
        let per: Vec<f64> = (0..131).map(|i| -1.0 + 0.01 * i as f64).collect();
        let text = serde_json::json!({"mode": "hybrid", "link": {"launch": {"per_channel_dbm": per}}}).to_string();
        let cfg = parse(&text).unwrap();
        assert_eq!(cfg.link.launch.total_dbm, None);
        assert_eq!(cfg.link_spec().unwrap().launch.per_channel_dbm, per);
    }

    #[test]
    fn echo_round_trip() {
        let text = r#"{"mode":"lumped","optimizer":{"seed":7,"stage2":{"iterations":3}},"link":{"n_spans":4}}"#;
        let cfg = parse(text).unwrap();
        let again = parse(&cfg.echo()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.echo(), again.echo());
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            mode: Some(Mode::Lumped),
            seed: Some(3),
            n_spans: Some(2),
            output_dir: Some("x".into()),
        };
        let cfg = parse_config(
            r#"{"mode":"hybrid","link":{"pumps":[]},"optimizer":{"stage1":{"slots":[]}}}"#,
            Path::new("."),
            &o,
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Lumped);
        assert_eq!(cfg.optimizer.seed, 3);
        assert_eq!(cfg.link.n_spans, 2);
        assert_eq!(cfg.output_dir, PathBuf::from("x"));
    }
}
