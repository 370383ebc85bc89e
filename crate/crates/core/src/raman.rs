//! Coupled CW Raman power equations for signals and pumps along one span,
//! including ISRS, pump–pump interaction, pump depletion, and backward pumps
//! solved by shooting.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::export::{csv_line, sig9};
use crate::ode::{ClampEvent, Dopri5};
use crate::spectra::FiberSpec;
use crate::system::{Direction, LaunchProfile, PumpSet, WdmGrid};
use crate::units;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveLabel {
    Channel(usize),
    Pump(usize),
}

impl WaveLabel {
    pub fn id(&self) -> String {
        match self {
            WaveLabel::Channel(i) => format!("ch{i}"),
            WaveLabel::Pump(i) => format!("pump{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub frequency: f64,
    pub direction: Direction,
    /// Power attenuation in 1/km.
    pub attenuation: f64,
    pub label: WaveLabel,
}

/// The set of co-propagating and counter-propagating waves of one span with
/// their precomputed Raman coupling matrix.
#[derive(Debug, Clone)]
pub struct WaveSet {
    waves: Vec<Wave>,
    /// Row-major `n × n`; entry `(k, j)` multiplies `P_j P_k` in wave k's equation.
    coupling: Vec<f64>,
}

impl WaveSet {
    pub fn new(entries: &[(f64, Direction, WaveLabel)], fiber: &FiberSpec) -> Result<Self> {
        let mut waves = Vec::with_capacity(entries.len());
        for &(frequency, direction, label) in entries {
            if !(frequency > 0.0) {
                return Err(Error::invalid(format!(
                    "wave {} has non-positive frequency",
                    label.id()
                )));
            }
            waves.push(Wave {
                frequency,
                direction,
                attenuation: fiber.attenuation_per_km(frequency)?,
                label,
            });
        }
        let n = waves.len();
        let mut coupling = vec![0.0; n * n];
        for k in 0..n {
            for j in 0..n {
                let fk = waves[k].frequency;
                let fj = waves[j].frequency;
                coupling[k * n + j] = if fj > fk {
                    fiber.raman_gain(fj - fk)?
                } else if fj < fk {
                    -(fk / fj) * fiber.raman_gain(fk - fj)?
                } else {
                    0.0
                };
            }
        }
        Ok(Self { waves, coupling })
    }

    /// Channels first (in grid order), then pumps (in pump-set order).
    pub fn for_link(grid: &WdmGrid, pumps: &PumpSet, fiber: &FiberSpec) -> Result<Self> {
        let mut entries: Vec<(f64, Direction, WaveLabel)> = grid
            .frequencies()
            .iter()
            .enumerate()
            .map(|(i, &f)| (f, Direction::Forward, WaveLabel::Channel(i)))
            .collect();
        entries.extend(
            pumps
                .pumps
                .iter()
                .enumerate()
                .map(|(i, p)| (p.frequency(), p.direction, WaveLabel::Pump(i))),
        );
        Self::new(&entries, fiber)
    }

    pub fn len(&self) -> usize {
        self.waves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waves.is_empty()
    }

    pub fn waves(&self) -> &[Wave] {
        &self.waves
    }

    pub fn coupling(&self, k: usize, j: usize) -> f64 {
        self.coupling[k * self.waves.len() + j]
    }

    fn backward_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.waves
            .iter()
            .enumerate()
            .filter(|(_, w)| w.direction == Direction::Backward)
            .map(|(i, _)| i)
    }
}

/// Evaluates dP/dz for every wave at one position.
///
/// For wave k with direction sign s_k:
/// s_k·dP_k/dz = −α_k P_k + Σ_{f_j>f_k} g(f_j−f_k) P_j P_k − Σ_{f_j<f_k} (f_k/f_j) g(f_k−f_j) P_j P_k.
pub fn coupled_rhs(waves: &WaveSet, powers: &[f64], out: &mut [f64]) -> Result<()> {
    let n = waves.len();
    if powers.len() != n || out.len() != n {
        return Err(Error::invalid("power/derivative vectors must match the wave count"));
    }
    if let Some(i) = powers.iter().position(|p| !(*p >= 0.0)) {
        return Err(Error::Contract(format!(
            "negative or NaN power {} on wave {}",
            powers[i],
            waves.waves[i].label.id()
        )));
    }
    for k in 0..n {
        let row = &waves.coupling[k * n..(k + 1) * n];
        let interaction: f64 = row.iter().zip(powers).map(|(c, p)| c * p).sum();
        let w = &waves.waves[k];
        out[k] = w.direction.sign() * (-w.attenuation + interaction) * powers[k];
    }
    Ok(())
}

/// Per-wave power along one span, sampled on a uniform z grid.
#[derive(Debug, Clone)]
pub struct PowerEvolution {
    pub z_km: Vec<f64>,
    /// `power[wave][z]` in W.
    pub power: Vec<Vec<f64>>,
    pub waves: Vec<Wave>,
    pub clamps: Vec<ClampEvent>,
}

impl PowerEvolution {
    pub fn span_length(&self) -> f64 {
        *self.z_km.last().unwrap()
    }

    pub fn wave_index(&self, label: WaveLabel) -> Option<usize> {
        self.waves.iter().position(|w| w.label == label)
    }

    pub fn channel_count(&self) -> usize {
        self.waves
            .iter()
            .filter(|w| matches!(w.label, WaveLabel::Channel(_)))
            .count()
    }

    /// Power profile of channel `ch`, assuming channels occupy the first wave slots.
    pub fn channel(&self, ch: usize) -> &[f64] {
        debug_assert_eq!(self.waves[ch].label, WaveLabel::Channel(ch));
        &self.power[ch]
    }

    pub fn pump_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.waves
            .iter()
            .enumerate()
            .filter(|(_, w)| matches!(w.label, WaveLabel::Pump(_)))
            .map(|(i, _)| i)
    }

    /// Σ s_k P_k(z)/f_k at grid point `zi` (proportional to the net photon flux).
    pub fn photon_flux(&self, zi: usize) -> f64 {
        self.waves
            .iter()
            .zip(&self.power)
            .map(|(w, p)| w.direction.sign() * p[zi] / w.frequency)
            .sum()
    }

    /// Normalized power profile ρ_k(z) = P_k(z)/P_k(0) of channel `ch`. A dark
    /// channel gets the profile it would have as a vanishing probe, from its
    /// local gain coefficient.
    pub fn normalized_profile(&self, ch: usize, fiber: &FiberSpec) -> Result<Vec<f64>> {
        let p = self.channel(ch);
        if p.iter().all(|x| *x > 0.0) {
            return Ok(p.iter().map(|x| x / p[0]).collect());
        }
        let f = self.waves[ch].frequency;
        let mut rate = vec![-self.waves[ch].attenuation; p.len()];
        for (w, pw) in self.waves.iter().zip(&self.power) {
            let c = if w.frequency > f {
                fiber.raman_gain(w.frequency - f)?
            } else if w.frequency < f {
                -(f / w.frequency) * fiber.raman_gain(f - w.frequency)?
            } else {
                0.0
            };
            if c != 0.0 {
                for (r, pj) in rate.iter_mut().zip(pw) {
                    *r += c * pj;
                }
            }
        }
        let mut out = vec![1.0; p.len()];
        let mut acc = 0.0;
        for i in 1..p.len() {
            acc += 0.5 * (rate[i - 1] + rate[i]) * (self.z_km[i] - self.z_km[i - 1]);
            out[i] = acc.exp();
        }
        Ok(out)
    }

    /// Multiplies every power by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for p in out.power.iter_mut().flatten() {
            *p *= factor;
        }
        out
    }

    /// `z_km,wave_id,power_mw` rows for every grid point and wave.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("z_km,wave_id,power_mw\n");
        for (zi, z) in self.z_km.iter().enumerate() {
            for (w, p) in self.waves.iter().zip(&self.power) {
                out.push_str(&csv_line([sig9(*z), w.label.id(), sig9(p[zi] * 1e3)]));
            }
        }
        out
    }
}

fn uniform_grid(span_length: f64, z_points: usize) -> Result<Vec<f64>> {
    if !(span_length > 0.0) {
        return Err(Error::invalid("span length must be positive"));
    }
    if z_points < 2 || ((z_points - 1) as f64) < span_length - 1e-9 {
        return Err(Error::invalid(format!(
            "z grid of {z_points} points is coarser than one step per km over {span_length} km"
        )));
    }
    let dz = span_length / (z_points - 1) as f64;
    Ok((0..z_points)
        .map(|i| if i + 1 == z_points { span_length } else { i as f64 * dz })
        .collect())
}

/// Integrates all waves from z = 0 to z = L starting from `initial` (the
/// z = 0 power of every wave, including trial values for backward pumps).
///
/// The state is advanced in integrating-factor form, Q_k = P_k·exp(s_k α_k z),
/// which leaves pure attenuation exact and keeps Q of the order of the launch
/// power over the whole span.
pub fn integrate_span(
    waves: &WaveSet,
    initial: &[f64],
    span_length: f64,
    z_points: usize,
    ode: &Dopri5,
) -> Result<PowerEvolution> {
    let n = waves.len();
    if initial.len() != n {
        return Err(Error::invalid("initial state must list every wave"));
    }
    if let Some(i) = initial.iter().position(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Contract(format!(
            "initial power {} on wave {} must be finite and non-negative",
            initial[i],
            waves.waves[i].label.id()
        )));
    }
    let z = uniform_grid(span_length, z_points)?;
    let rates: Vec<f64> = waves.waves.iter().map(|w| w.direction.sign() * w.attenuation).collect();
    let signs: Vec<f64> = waves.waves.iter().map(|w| w.direction.sign()).collect();
    let mut p = vec![0.0; n];
    let rhs = |zz: f64, q: &[f64], dq: &mut [f64]| {
        for j in 0..n {
            p[j] = (q[j] * (-rates[j] * zz).exp()).max(0.0);
        }
        for k in 0..n {
            if q[k] == 0.0 {
                dq[k] = 0.0;
                continue;
            }
            let row = &waves.coupling[k * n..(k + 1) * n];
            let interaction: f64 = row.iter().zip(&p).map(|(c, pj)| c * pj).sum();
            dq[k] = signs[k] * q[k] * interaction;
        }
    };
    let traj = ode.integrate(rhs, initial, &z, true)?;
    let mut power = vec![vec![0.0; z.len()]; n];
    for (zi, (zz, q)) in z.iter().zip(&traj.states).enumerate() {
        for k in 0..n {
            power[k][zi] = q[k] * (-rates[k] * zz).exp();
        }
    }
    if !traj.clamps.is_empty() {
        log::warn!("{} power underflow events clamped to zero", traj.clamps.len());
    }
    Ok(PowerEvolution {
        z_km: z,
        power,
        waves: waves.waves.clone(),
        clamps: traj.clamps,
    })
}

/// Evaluates a stored profile at arbitrary z by log-linear interpolation on
/// the uniform grid (exact for pure exponential decay between grid points).
fn sample_profile(profile: &[f64], dz: f64, z: f64) -> f64 {
    let last = profile.len() - 1;
    let x = (z / dz).clamp(0.0, last as f64);
    let i = (x.floor() as usize).min(last - 1);
    let t = x - i as f64;
    let (a, b) = (profile[i], profile[i + 1]);
    if a > 0.0 && b > 0.0 {
        a * (b / a).powf(t)
    } else {
        a + (b - a) * t
    }
}

/// Integrates the `active` waves along their own propagation direction while
/// every other wave follows its stored profile in `table`, overwriting the
/// active rows of `table`.
fn directional_sweep(
    waves: &WaveSet,
    active: &[usize],
    boundary: &[f64],
    z: &[f64],
    table: &mut [Vec<f64>],
    backward: bool,
    ode: &Dopri5,
) -> Result<()> {
    if active.is_empty() {
        return Ok(());
    }
    let n = waves.len();
    let span = *z.last().unwrap();
    let dz = z[1] - z[0];
    let mut is_active = vec![false; n];
    for &k in active {
        is_active[k] = true;
    }
    let alpha: Vec<f64> = active.iter().map(|&k| waves.waves[k].attenuation).collect();
    let frozen: &[Vec<f64>] = table;
    let mut p = vec![0.0; n];
    let rhs = |u: f64, q: &[f64], dq: &mut [f64]| {
        let zz = if backward { span - u } else { u };
        for j in 0..n {
            if !is_active[j] {
                p[j] = sample_profile(&frozen[j], dz, zz);
            }
        }
        for (a, &k) in active.iter().enumerate() {
            p[k] = (q[a] * (-alpha[a] * u).exp()).max(0.0);
        }
        for (a, &k) in active.iter().enumerate() {
            if q[a] == 0.0 {
                dq[a] = 0.0;
                continue;
            }
            let row = &waves.coupling[k * n..(k + 1) * n];
            let interaction: f64 = row.iter().zip(&p).map(|(c, pj)| c * pj).sum();
            dq[a] = q[a] * interaction;
        }
    };
    let q0: Vec<f64> = active.iter().map(|&k| boundary[k]).collect();
    let traj = ode.integrate(rhs, &q0, z, true)?;
    let last = z.len() - 1;
    for (ui, (u, q)) in z.iter().zip(&traj.states).enumerate() {
        let zi = if backward { last - ui } else { ui };
        for (a, &k) in active.iter().enumerate() {
            table[k][zi] = q[a] * (-alpha[a] * u).exp();
        }
    }
    Ok(())
}

/// Alternating forward/backward relaxation: each group of waves is
/// integrated in its physical direction against the other group's latest
/// profile. Returns the power table on `z`.
fn relax(
    waves: &WaveSet,
    boundary: &[f64],
    z: &[f64],
    sweeps: usize,
    tolerance: f64,
    ode: &Dopri5,
) -> Result<Vec<Vec<f64>>> {
    let span = *z.last().unwrap();
    let (backward, forward): (Vec<usize>, Vec<usize>) =
        (0..waves.len()).partition(|&k| waves.waves[k].direction == Direction::Backward);
    let mut table: Vec<Vec<f64>> = waves
        .waves
        .iter()
        .zip(boundary)
        .map(|(w, &b)| {
            z.iter()
                .map(|&zz| {
                    let travelled = if w.direction == Direction::Backward {
                        span - zz
                    } else {
                        zz
                    };
                    b * (-w.attenuation * travelled).exp()
                })
                .collect()
        })
        .collect();
    let last = z.len() - 1;
    let ends = |t: &[Vec<f64>]| -> Vec<f64> {
        (0..waves.len())
            .map(|k| {
                if waves.waves[k].direction == Direction::Backward {
                    t[k][0]
                } else {
                    t[k][last]
                }
            })
            .collect()
    };
    // The backward update is blended with the previous profile in the log
    // domain; ω is halved whenever the update grows, which breaks the
    // two-cycle strongly coupled pump sets fall into.
    let mut omega = 1.0f64;
    let mut last_change = f64::INFINITY;
    for sweep in 0..sweeps {
        let before = ends(&table);
        let old: Vec<Vec<f64>> = backward.iter().map(|&k| table[k].clone()).collect();
        directional_sweep(waves, &forward, boundary, z, &mut table, false, ode)?;
        directional_sweep(waves, &backward, boundary, z, &mut table, true, ode)?;
        let after = ends(&table);
        let change = after
            .iter()
            .zip(&before)
            .filter(|(c, _)| **c > 0.0)
            .map(|(c, p)| ((c - p) / c).abs())
            .fold(0.0, f64::max);
        log::trace!("relaxation sweep {sweep}: change {change:e}, omega {omega}");
        if change < tolerance {
            break;
        }
        if change > last_change {
            omega = (0.5 * omega).max(1.0 / 16.0);
        }
        last_change = change;
        if omega < 1.0 {
            for (row, &k) in old.iter().zip(&backward) {
                for (new, &prev) in table[k].iter_mut().zip(row) {
                    if *new > 0.0 && prev > 0.0 {
                        *new = prev * (*new / prev).powf(omega);
                    }
                }
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpOptions {
    /// Exponent of the multiplicative correction in the log-power domain.
    pub damping: f64,
    /// Maximum relative mismatch of backward-pump powers at z = L.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub z_points: usize,
    /// Cap on forward/backward relaxation sweeps used to seed the shooting.
    pub relaxation_sweeps: usize,
    /// Relative change of the boundary powers at which relaxation stops.
    pub relaxation_tolerance: f64,
    pub ode: Dopri5,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-4,
            max_iterations: 100,
            z_points: 101,
            relaxation_sweeps: 50,
            relaxation_tolerance: 1e-3,
            ode: Dopri5::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub evolution: PowerEvolution,
    pub iterations: usize,
    pub residual: f64,
}

impl BvpSolution {
    /// z = 0 powers of the backward waves, usable as a warm start.
    pub fn backward_start(&self) -> Vec<f64> {
        self.evolution
            .waves
            .iter()
            .zip(&self.evolution.power)
            .filter(|(w, _)| w.direction == Direction::Backward)
            .map(|(_, p)| p[0])
            .collect()
    }
}

/// Solves the two-point boundary-value problem.
///
/// `boundary[k]` is the z = 0 power of forward wave k or the z = L injection
/// power of backward wave k. `guess` optionally supplies the z = 0 powers of
/// the backward waves (in wave order), e.g. from a neighbouring solution.
///
/// The returned profile is always a single initial-value integration from
/// z = 0 whose backward waves end within `tolerance` of their injection
/// powers. Its start is found by damped multiplicative shooting, seeded from
/// `guess` if given and otherwise from a forward/backward relaxation.
pub fn solve_boundary_value(
    waves: &WaveSet,
    boundary: &[f64],
    span_length: f64,
    options: &BvpOptions,
    guess: Option<&[f64]>,
) -> Result<BvpSolution> {
    if boundary.len() != waves.len() {
        return Err(Error::invalid("boundary vector must list every wave"));
    }
    if !(options.damping > 0.0 && options.damping <= 1.0) {
        return Err(Error::invalid("damping must lie in (0, 1]"));
    }
    let backward: Vec<usize> = waves.backward_indices().collect();
    if backward.iter().all(|&k| boundary[k] == 0.0) {
        return shoot(waves, boundary, span_length, options, boundary.to_vec(), &backward);
    }
    if let Some(g) = guess {
        if g.len() == backward.len() {
            let mut start = boundary.to_vec();
            for (bi, &k) in backward.iter().enumerate() {
                start[k] = if boundary[k] > 0.0 { g[bi].max(0.0) } else { 0.0 };
            }
            match shoot(waves, boundary, span_length, options, start, &backward) {
                Ok(sol) => return Ok(sol),
                Err(e) if e.is_numerical() => log::debug!("warm start failed ({e}); relaxing"),
                Err(e) => return Err(e),
            }
        }
    }
    let z = uniform_grid(span_length, options.z_points)?;
    let table = relax(
        waves,
        boundary,
        &z,
        options.relaxation_sweeps,
        options.relaxation_tolerance,
        &options.ode,
    )?;
    let mut start = boundary.to_vec();
    for &k in &backward {
        start[k] = table[k][0];
    }
    shoot(waves, boundary, span_length, options, start, &backward)
}

/// Relative mismatch ln(P_k(L)/target_k) of the active backward waves.
fn boundary_mismatch(evolution: &PowerEvolution, boundary: &[f64], active: &[usize]) -> Vec<f64> {
    let last = evolution.z_km.len() - 1;
    active
        .iter()
        .map(|&k| {
            let got = evolution.power[k][last];
            if got > 0.0 {
                (got / boundary[k]).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// One Newton step on ln(start) with a forward-difference Jacobian. Returns
/// `None` if a perturbed integration fails or the Jacobian is singular.
fn newton_step(
    waves: &WaveSet,
    boundary: &[f64],
    span_length: f64,
    options: &BvpOptions,
    start: &[f64],
    active: &[usize],
    mismatch: &[f64],
) -> Option<Vec<f64>> {
    const H: f64 = 1e-4;
    let m = active.len();
    let mut jac = DMatrix::zeros(m, m);
    for (col, &k) in active.iter().enumerate() {
        let mut trial = start.to_vec();
        trial[k] *= H.exp();
        let evo = integrate_span(waves, &trial, span_length, options.z_points, &options.ode).ok()?;
        let r = boundary_mismatch(&evo, boundary, active);
        for row in 0..m {
            jac[(row, col)] = (r[row] - mismatch[row]) / H;
        }
    }
    let rhs = DVector::from_iterator(m, mismatch.iter().map(|r| -r));
    let delta = jac.lu().solve(&rhs)?;
    if delta.iter().any(|d| !d.is_finite()) {
        return None;
    }
    let mut next = start.to_vec();
    for (a, &k) in active.iter().enumerate() {
        next[k] *= delta[a].clamp(-1.0, 1.0).exp();
    }
    Some(next)
}

fn shoot(
    waves: &WaveSet,
    boundary: &[f64],
    span_length: f64,
    options: &BvpOptions,
    mut start: Vec<f64>,
    backward: &[usize],
) -> Result<BvpSolution> {
    // A trial start that runs away (strong backward pumps are unstable when
    // integrated against their direction) is pulled back towards the last
    // start that integrated, or halved if none has yet. When the damped
    // update stops contracting, a Newton step takes over.
    let active: Vec<usize> = backward.iter().copied().filter(|&k| boundary[k] > 0.0).collect();
    let mut accepted: Option<Vec<f64>> = None;
    let mut residual = f64::INFINITY;
    let mut previous = f64::INFINITY;
    for iteration in 1..=options.max_iterations {
        let evolution = match integrate_span(waves, &start, span_length, options.z_points, &options.ode) {
            Ok(e) => e,
            Err(e) if e.is_numerical() => {
                for &k in backward {
                    start[k] = match &accepted {
                        Some(prev) => (prev[k] * start[k]).sqrt(),
                        None => 0.5 * start[k],
                    };
                }
                log::debug!("shooting trial {iteration} diverged ({e}); backtracking");
                continue;
            }
            Err(e) => return Err(e),
        };
        accepted = Some(start.clone());
        let last = evolution.z_km.len() - 1;
        residual = 0.0f64;
        for &k in &active {
            let target = boundary[k];
            let got = evolution.power[k][last];
            residual = residual.max(((got - target) / target).abs());
        }
        if residual < options.tolerance {
            return Ok(BvpSolution {
                evolution,
                iterations: iteration,
                residual,
            });
        }
        let mismatch = boundary_mismatch(&evolution, boundary, &active);
        if residual > 0.5 * previous && mismatch.iter().all(|r| r.is_finite()) {
            if let Some(next) = newton_step(waves, boundary, span_length, options, &start, &active, &mismatch) {
                previous = residual;
                start = next;
                continue;
            }
        }
        previous = residual;
        for &k in &active {
            let target = boundary[k];
            let got = evolution.power[k][last];
            let ratio = if got > 0.0 { target / got } else { 10.0 };
            start[k] *= ratio.powf(options.damping);
        }
    }
    Err(Error::BvpNonConvergence {
        iterations: options.max_iterations,
        residual,
    })
}

/// Boundary conditions of one span: channel launch powers and pump injection
/// powers (z = 0 for forward pumps, z = L for backward pumps).
pub fn span_boundary(launch: &LaunchProfile, pumps: &PumpSet) -> Vec<f64> {
    launch
        .watts()
        .into_iter()
        .chain(pumps.pumps.iter().map(|p| p.power_w))
        .collect()
}

/// Convenience wrapper building the wave set from link components.
pub fn solve_backward_bvp(
    pumps: &PumpSet,
    launch: &LaunchProfile,
    grid: &WdmGrid,
    fiber: &FiberSpec,
    options: &BvpOptions,
) -> Result<BvpSolution> {
    let waves = WaveSet::for_link(grid, pumps, fiber)?;
    solve_boundary_value(
        &waves,
        &span_boundary(launch, pumps),
        fiber.span_length_km,
        options,
        None,
    )
}

/// Net per-channel span gain P_k(L)/P_k(0) in dB.
pub fn net_span_gain(evolution: &PowerEvolution, grid: &WdmGrid) -> Result<Vec<f64>> {
    let last = evolution.z_km.len() - 1;
    (0..grid.len())
        .map(|ch| {
            let p = evolution.channel(ch);
            if p[0] <= 0.0 {
                Err(Error::UndefinedGain { channel: ch })
            } else {
                Ok(units::linear_to_db(p[last] / p[0]))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::SampledCurve;
    use crate::system::{build_grid, BandPlan, Pump};
    use approx::assert_relative_eq;

    fn lossless(fiber: &FiberSpec) -> FiberSpec {
        let mut f = fiber.clone();
        f.attenuation = SampledCurve::new(vec![(1300.0, 1e-300), (1700.0, 1e-300)]).unwrap();
        f
    }

    fn flat_loss(db_per_km: f64) -> FiberSpec {
        let mut f = FiberSpec::standard();
        f.attenuation = SampledCurve::new(vec![(1300.0, db_per_km), (1700.0, db_per_km)]).unwrap();
        f
    }

    #[test]
    fn single_wave_is_pure_attenuation() {
        let fiber = FiberSpec::standard();
        let ws = WaveSet::new(&[(193.4e12, Direction::Forward, WaveLabel::Channel(0))], &fiber).unwrap();
        let mut d = [0.0];
        coupled_rhs(&ws, &[2e-3], &mut d).unwrap();
        assert_relative_eq!(d[0], -ws.waves()[0].attenuation * 2e-3, max_relative = 1e-15);
    }

    #[test]
    fn two_wave_photon_flux_derivative_vanishes() {
        let fiber = lossless(&FiberSpec::standard());
        let ws = WaveSet::new(
            &[
                (200e12, Direction::Forward, WaveLabel::Pump(0)),
                (190e12, Direction::Forward, WaveLabel::Channel(0)),
            ],
            &fiber,
        )
        .unwrap();
        let p = [0.3, 1e-3];
        let mut d = [0.0; 2];
        coupled_rhs(&ws, &p, &mut d).unwrap();
        let flux_rate = d[0] / 200e12 + d[1] / 190e12;
        assert!(flux_rate.abs() < 1e-15 * (d[0] / 200e12).abs());
    }

    #[test]
    fn three_wave_rhs_matches_hand_assembly() {
        let fiber = FiberSpec::standard();
        let f = [205e12, 195e12, 190e12];
        let dirs = [Direction::Backward, Direction::Forward, Direction::Forward];
        let entries: Vec<_> = (0..3).map(|i| (f[i], dirs[i], WaveLabel::Channel(i))).collect();
        let ws = WaveSet::new(&entries, &fiber).unwrap();
        let p = [0.2, 3e-3, 1e-3];
        let mut d = [0.0; 3];
        coupled_rhs(&ws, &p, &mut d).unwrap();

        // independent scalar evaluation
        let g = |df: f64| fiber.raman_gain(df).unwrap();
        let a = |fr: f64| units::db_per_km_to_neper(fiber.attenuation_db_per_km(units::SPEED_OF_LIGHT / fr).unwrap());
        let backward = -1.0;
        let d0 = backward
            * (-a(f[0]) * p[0]
                - (f[0] / f[1]) * g(f[0] - f[1]) * p[1] * p[0]
                - (f[0] / f[2]) * g(f[0] - f[2]) * p[2] * p[0]);
        let d1 = -a(f[1]) * p[1] + g(f[0] - f[1]) * p[0] * p[1] - (f[1] / f[2]) * g(f[1] - f[2]) * p[2] * p[1];
        let d2 = -a(f[2]) * p[2] + g(f[0] - f[2]) * p[0] * p[2] + g(f[1] - f[2]) * p[1] * p[2];
        assert_relative_eq!(d[0], d0, max_relative = 1e-12);
        assert_relative_eq!(d[1], d1, max_relative = 1e-12);
        assert_relative_eq!(d[2], d2, max_relative = 1e-12);
    }

    #[test]
    fn negative_power_is_contract_violation() {
        let fiber = FiberSpec::standard();
        let ws = WaveSet::new(&[(193.4e12, Direction::Forward, WaveLabel::Channel(0))], &fiber).unwrap();
        let mut d = [0.0];
        assert!(matches!(coupled_rhs(&ws, &[-1.0], &mut d), Err(Error::Contract(_))));
    }

    #[test]
    fn attenuation_only_span() {
        let fiber = flat_loss(0.2);
        let ws = WaveSet::new(&[(193.4e12, Direction::Forward, WaveLabel::Channel(0))], &fiber).unwrap();
        let evo = integrate_span(&ws, &[1e-3], 100.0, 101, &Dopri5::default()).unwrap();
        let end_dbm = units::w_to_dbm(evo.power[0][100]).unwrap();
        assert!((end_dbm + 20.0).abs() < 1e-9, "{end_dbm}");
    }

    #[test]
    fn zero_launch_stays_zero() {
        let fiber = FiberSpec::standard();
        let grid = build_grid(&BandPlan::reduced()).unwrap();
        let ws = WaveSet::for_link(&grid, &PumpSet::none(), &fiber).unwrap();
        let evo = integrate_span(&ws, &vec![0.0; grid.len()], 100.0, 101, &Dopri5::default()).unwrap();
        assert!(evo.power.iter().flatten().all(|p| *p == 0.0));
    }

    #[test]
    fn coarse_grid_rejected() {
        let fiber = FiberSpec::standard();
        let ws = WaveSet::new(&[(193.4e12, Direction::Forward, WaveLabel::Channel(0))], &fiber).unwrap();
        assert!(integrate_span(&ws, &[1e-3], 100.0, 50, &Dopri5::default()).is_err());
    }

    #[test]
    fn no_backward_power_converges_immediately() {
        let fiber = FiberSpec::standard();
        let grid = build_grid(&BandPlan::reduced()).unwrap();
        let pumps = PumpSet::new(vec![
            Pump {
                wavelength_m: 1430e-9,
                power_w: 0.15,
                direction: Direction::Forward,
            },
            Pump {
                wavelength_m: 1450e-9,
                power_w: 0.0,
                direction: Direction::Backward,
            },
        ]);
        let launch = LaunchProfile::uniform(grid.len(), 0.0);
        let sol = solve_backward_bvp(&pumps, &launch, &grid, &fiber, &BvpOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.residual, 0.0);

        // identical to a plain initial-value integration
        let ws = WaveSet::for_link(&grid, &pumps, &fiber).unwrap();
        let ivp = integrate_span(&ws, &span_boundary(&launch, &pumps), 100.0, 101, &Dopri5::default()).unwrap();
        assert_eq!(ivp.power, sol.evolution.power);
    }

    #[test]
    fn backward_pumped_span_converges() {
        let fiber = FiberSpec::standard();
        let grid = build_grid(&BandPlan::reduced()).unwrap();
        let pumps = PumpSet::new(vec![
            Pump {
                wavelength_m: 1425e-9,
                power_w: 0.25,
                direction: Direction::Backward,
            },
            Pump {
                wavelength_m: 1455e-9,
                power_w: 0.2,
                direction: Direction::Backward,
            },
            Pump {
                wavelength_m: 1480e-9,
                power_w: 0.2,
                direction: Direction::Backward,
            },
        ]);
        let launch = LaunchProfile::uniform(grid.len(), 0.0);
        let sol = solve_backward_bvp(&pumps, &launch, &grid, &fiber, &BvpOptions::default()).unwrap();
        assert!(sol.residual < 1e-4);
        // re-integrating from the converged start reproduces the injected powers
        let ws = WaveSet::for_link(&grid, &pumps, &fiber).unwrap();
        let start: Vec<f64> = sol.evolution.power.iter().map(|p| p[0]).collect();
        let again = integrate_span(&ws, &start, 100.0, 101, &Dopri5::default()).unwrap();
        for (k, p) in pumps.pumps.iter().enumerate() {
            let got = again.power[grid.len() + k][100];
            assert!(((got - p.power_w) / p.power_w).abs() < 1e-4);
        }
        assert!(sol.evolution.power.iter().flatten().all(|p| *p >= 0.0));
    }

    #[test]
    fn lossless_photon_flux_conserved() {
        let fiber = lossless(&FiberSpec::standard());
        let ws = WaveSet::new(
            &[
                (196e12, Direction::Forward, WaveLabel::Channel(0)),
                (188e12, Direction::Forward, WaveLabel::Channel(1)),
            ],
            &fiber,
        )
        .unwrap();
        let evo = integrate_span(&ws, &[0.5, 0.01], 100.0, 101, &Dopri5::default()).unwrap();
        let f0 = evo.photon_flux(0);
        for zi in 0..evo.z_km.len() {
            assert!(((evo.photon_flux(zi) - f0) / f0).abs() < 1e-8);
        }
        // substantial transfer actually happened
        assert!(evo.power[1][100] > 0.05);
    }

    #[test]
    fn net_gain_of_lossy_span() {
        let fiber = flat_loss(0.2);
        let grid = build_grid(&BandPlan::reduced()).unwrap();
        let launch = LaunchProfile::uniform(grid.len(), -30.0);
        let ws = WaveSet::for_link(&grid, &PumpSet::none(), &fiber).unwrap();
        let evo = integrate_span(&ws, &launch.watts(), 100.0, 101, &Dopri5::default()).unwrap();
        for g in net_span_gain(&evo, &grid).unwrap() {
            assert!((g + 20.0).abs() < 1e-3, "{g}");
        }
        let dark = LaunchProfile::uniform(grid.len(), f64::NEG_INFINITY);
        let evo = integrate_span(&ws, &dark.watts(), 100.0, 101, &Dopri5::default()).unwrap();
        assert!(matches!(
            net_span_gain(&evo, &grid),
            Err(Error::UndefinedGain { channel: 0 })
        ));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let fiber = FiberSpec::standard();
        let ws = WaveSet::new(&[(193.4e12, Direction::Forward, WaveLabel::Channel(0))], &fiber).unwrap();
        let evo = integrate_span(&ws, &[1e-3], 100.0, 101, &Dopri5::default()).unwrap();
        let csv = evo.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("z_km,wave_id,power_mw"));
        assert_eq!(lines.next(), Some("0,ch0,1"));
        assert_eq!(csv.lines().count(), 102);
    }
}
