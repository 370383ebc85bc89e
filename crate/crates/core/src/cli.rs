//! The `uwb` command line. Every run writes the echoed configuration and a
//! manifest next to its artifacts; none of them record timestamps or thread
//! counts, so identical inputs give byte-identical files.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{load_config_with, parse_config, Mode, Overrides, ScenarioConfig};
use crate::error::{Error, Result};
use crate::export::{csv_line, sig9};
use crate::link::{oracle_comparison, simulate_link_with};
use crate::nli::OracleOptions;
use crate::savgol::savitzky_golay_smooth;
use crate::stages::{evaluate_profiles, stage1_pump_and_uniform_lp, stage2_per_channel_lp, Stage1Outcome};
use crate::system::{LaunchProfile, LinkSpec};

#[derive(Parser, Debug)]
#[command(
    name = "uwb",
    version,
    about = "Hybrid Raman/lumped S+C+L link simulator and launch-power optimizer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario JSON; without it the defaults of --mode are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    spans: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory (overrides output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Hybrid,
    Lumped,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-channel SNR and throughput of the configured link.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Stage 1: pump settings and a uniform launch power.
    OptimizePumps {
        #[command(flatten)]
        common: Common,
    },
    /// Stage 2: per-channel launch powers with frozen pumps.
    OptimizePower {
        #[command(flatten)]
        common: Common,
        /// stage1.json from optimize-pumps; otherwise the configured pumps and launch power are the start.
        #[arg(long)]
        stage1: Option<PathBuf>,
    },
    /// Savitzky–Golay smoothing of a launch profile and its throughput change.
    Smooth {
        #[command(flatten)]
        common: Common,
        /// CSV with a launch_dbm column (e.g. stage2_profile.csv); otherwise the configured launch.
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Plot-ready CSVs: power evolution, launch profile and SNR.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form NLI against the numerical oracle on a channel subset.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        channels: usize,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::OptimizePumps { common }
            | Command::OptimizePower { common, .. }
            | Command::Smooth { common, .. }
            | Command::Report { common }
            | Command::OracleCheck { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::OptimizePumps { .. } => "optimize-pumps",
            Command::OptimizePower { .. } => "optimize-power",
            Command::Smooth { .. } => "smooth",
            Command::Report { .. } => "report",
            Command::OracleCheck { .. } => "oracle-check",
        }
    }
}

/// Runs one invocation and returns the process exit status: 0 on success,
/// 2 for usage or validation errors, 3 for numerical failures.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let overrides = Overrides {
        mode: common.mode.map(|m| match m {
            ModeArg::Hybrid => Mode::Hybrid,
            ModeArg::Lumped => Mode::Lumped,
        }),
        seed: common.seed,
        n_spans: common.spans,
        output_dir: common.out.clone(),
    };
    match &common.config {
        Some(path) => load_config_with(path, &overrides),
        None => parse_config("{}", Path::new("."), &overrides),
    }
}

struct Output {
    dir: PathBuf,
    written: Vec<String>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    mode: Mode,
    seed: u64,
    n_spans: usize,
    channels: usize,
    config: &'a str,
    artifacts: &'a [String],
}

fn execute(command: &Command) -> Result<()> {
    let cfg = load(command.common())?;
    let link = cfg.link_spec()?;
    let options = cfg.engine_options();
    let mut out = Output::new(&cfg.output_dir)?;
    out.write("config.json", &cfg.echo())?;
    match command {
        Command::Simulate { .. } => {
            let (report, _) = simulate_link_with(&link, &options, None)?;
            let summary = report.summary();
            out.write("snr.csv", &report.to_csv())?;
            out.write_json("summary.json", &summary)?;
            println!(
                "{} channels, {} spans: throughput {:.3} Tb/s, mean SNR {:.3} dB (ASE {:.3} dB, NLI {:.3} dB)",
                summary.channels,
                summary.n_spans,
                summary.throughput_tbps,
                summary.mean_snr_total_db,
                summary.mean_snr_ase_db,
                summary.mean_snr_nli_db
            );
        }
        Command::OptimizePumps { .. } => {
            let outcome = stage1_pump_and_uniform_lp(&link, &cfg.stage1_settings(), &options)?;
            out.write_json("stage1.json", &outcome)?;
            let mut csv = String::from("direction,wavelength_nm,power_mw,negligible\n");
            for p in &outcome.pumps {
                csv.push_str(&csv_line([
                    serde_json::to_value(p.direction)?
                        .as_str()
                        .unwrap_or_default()
                        .to_string(),
                    sig9(p.wavelength_nm),
                    sig9(p.power_mw),
                    p.negligible.to_string(),
                ]));
            }
            out.write("stage1_pumps.csv", &csv)?;
            println!(
                "stage 1: {:.3} Tb/s over one span, total launch {:.3} dBm ({:.3} dBm per channel)",
                outcome.result.best_objective, outcome.total_lp_dbm, outcome.per_channel_lp_dbm
            );
            for p in outcome.pumps.iter().filter(|p| !p.negligible) {
                println!(
                    "  {:?} pump {:.1} nm {:.1} mW",
                    p.direction, p.wavelength_nm, p.power_mw
                );
            }
        }
        Command::OptimizePower { stage1, .. } => {
            let start = match stage1 {
                Some(path) => stage1_start(&link, path)?,
                None => link.clone(),
            };
            let outcome = stage2_per_channel_lp(&start, &cfg.stage2_settings(link.grid.len()), &options)?;
            let sm = &cfg.optimizer.smoothing;
            let (evaluation, smoothed) = evaluate_profiles(&start, &outcome.launch(), sm.window, sm.order, &options)?;
            out.write_json("stage2.json", &outcome)?;
            out.write_json("stage2_evaluation.json", &evaluation)?;
            out.write(
                "stage2_profile.csv",
                &profile_csv(
                    &link,
                    &[
                        ("start_dbm", &start.launch),
                        ("launch_dbm", &outcome.launch()),
                        ("smoothed_dbm", &smoothed),
                    ],
                ),
            )?;
            println!(
                "stage 2: {:.3} Tb/s over one span (start {:.3} Tb/s)",
                outcome.result.best_objective, outcome.start_objective
            );
            println!(
                "{} spans: uniform {:.3} Tb/s, optimized {:.3} Tb/s, smoothed {:.3} Tb/s; mean SNR gain {:.3} dB",
                evaluation.n_spans,
                evaluation.uniform.throughput_tbps,
                evaluation.optimized.throughput_tbps,
                evaluation.smoothed.throughput_tbps,
                evaluation.mean_snr_gain_db
            );
        }
        Command::Smooth { profile, .. } => {
            let raw = match profile {
                Some(path) => read_profile(path, link.grid.len())?,
                None => link.launch.clone(),
            };
            let sm = &cfg.optimizer.smoothing;
            let smoothed = savitzky_golay_smooth(&raw, sm.window, sm.order)?;
            let (before, _) = simulate_link_with(&link.with_launch(raw.clone()), &options, None)?;
            let (after, _) = simulate_link_with(&link.with_launch(smoothed.clone()), &options, None)?;
            let delta = after.throughput_total - before.throughput_total;
            out.write(
                "smoothed_profile.csv",
                &profile_csv(&link, &[("launch_dbm", &raw), ("smoothed_dbm", &smoothed)]),
            )?;
            out.write_json(
                "smooth.json",
                &SmoothSummary {
                    n_spans: link.n_spans,
                    window: sm.window,
                    order: sm.order,
                    throughput_raw_tbps: before.throughput_total,
                    throughput_smoothed_tbps: after.throughput_total,
                    delta_tbps: delta,
                    delta_percent: 100.0 * delta / before.throughput_total,
                },
            )?;
            println!(
                "smoothing ({}, {}): {:.3} -> {:.3} Tb/s (delta {:+.4} Tb/s)",
                sm.window, sm.order, before.throughput_total, after.throughput_total, delta
            );
        }
        Command::Report { .. } => {
            let (report, noise) = simulate_link_with(&link, &options, None)?;
            out.write("fig2_power_evolution.csv", &noise.solution.evolution.to_csv())?;
            out.write(
                "fig3_launch_profile.csv",
                &profile_csv(&link, &[("launch_dbm", &link.launch)]),
            )?;
            out.write("fig4_snr.csv", &report.to_csv())?;
            out.write_json("summary.json", &report.summary())?;
            println!("report written to {}", cfg.output_dir.display());
        }
        Command::OracleCheck { channels, .. } => {
            let n = link.grid.len();
            if *channels < 1 || *channels > n.min(OracleOptions::default().max_channels) {
                return Err(Error::invalid(format!(
                    "--channels must be between 1 and {}",
                    n.min(OracleOptions::default().max_channels)
                )));
            }
            let indices: Vec<usize> = if *channels == 1 {
                vec![n / 2]
            } else {
                (0..*channels)
                    .map(|k| (k * (n - 1) + (channels - 1) / 2) / (channels - 1))
                    .collect()
            };
            let sub = LinkSpec {
                grid: link.grid.subset(&indices)?,
                launch: LaunchProfile {
                    per_channel_dbm: indices.iter().map(|&i| link.launch.per_channel_dbm[i]).collect(),
                },
                ..link.clone()
            };
            let cmp = oracle_comparison(&sub, &options, &OracleOptions::default())?;
            out.write("oracle_check.csv", &cmp.to_csv())?;
            println!("wavelength_nm  closed_form_w  oracle_w  deviation_db");
            for k in 0..indices.len() {
                println!(
                    "{:>12.3}  {:>12.4e}  {:>9.4e}  {:>+8.3}",
                    cmp.wavelength_nm[k], cmp.closed_form_w[k], cmp.oracle_w[k], cmp.deviation_db[k]
                );
            }
            println!(
                "max |deviation| {:.3} dB, total {:+.3} dB",
                cmp.max_abs_deviation_db(),
                cmp.total_deviation_db
            );
        }
    }
    let mut artifacts = out.written.clone();
    artifacts.push("manifest.json".into());
    let manifest = Manifest {
        command: command.name(),
        version: env!("CARGO_PKG_VERSION"),
        mode: cfg.mode,
        seed: cfg.optimizer.seed,
        n_spans: link.n_spans,
        channels: link.grid.len(),
        config: "config.json",
        artifacts: &artifacts,
    };
    out.write_json("manifest.json", &manifest)
}

#[derive(Serialize)]
struct SmoothSummary {
    n_spans: usize,
    window: usize,
    order: usize,
    throughput_raw_tbps: f64,
    throughput_smoothed_tbps: f64,
    delta_tbps: f64,
    delta_percent: f64,
}

fn stage1_start(link: &LinkSpec, path: &Path) -> Result<LinkSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let outcome: Stage1Outcome = serde_json::from_str(&text)?;
    Ok(LinkSpec {
        pumps: outcome.pump_set(link.pumps.window_nm),
        launch: LaunchProfile::from_total(link.grid.len(), outcome.total_lp_dbm),
        ..link.clone()
    })
}

/// `wavelength_nm,band,<columns...>`, one row per channel.
fn profile_csv(link: &LinkSpec, columns: &[(&str, &LaunchProfile)]) -> String {
    let mut out = String::from("wavelength_nm,band");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for k in 0..link.grid.len() {
        let mut fields = vec![sig9(link.grid.wavelength(k) * 1e9), link.grid.band_of(k).to_string()];
        fields.extend(columns.iter().map(|(_, p)| sig9(p.per_channel_dbm[k])));
        out.push_str(&csv_line(fields));
    }
    out
}

fn read_profile(path: &Path, channels: usize) -> Result<LaunchProfile> {
    let io = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(io)?;
    let column = reader
        .headers()
        .map_err(io)?
        .iter()
        .position(|h| h == "launch_dbm")
        .ok_or_else(|| Error::invalid(format!("{}: no launch_dbm column", path.display())))?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(io)?;
        let v: f64 = record
            .get(column)
            .unwrap_or_default()
            .parse()
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        values.push(v);
    }
    let profile = LaunchProfile {
        per_channel_dbm: values,
    };
    profile.validate(channels)?;
    Ok(profile)
}
