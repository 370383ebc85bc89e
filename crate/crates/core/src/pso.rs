//! Bound-constrained global-best particle swarm maximization.
//!
//! Every particle draws from its own ChaCha stream (seed, stream = particle
//! index), and the swarm update is sequential in particle order, so a run is
//! bit-reproducible whatever the number of worker threads evaluating costs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective assigned to failed or non-finite cost evaluations.
pub const PENALTY: f64 = -1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub max_iterations: usize,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub rng_seed: u64,
    /// Stop once the best objective has improved by less than this over
    /// `stall_iterations` iterations; 0 disables the check.
    pub stall_tolerance: f64,
    pub stall_iterations: usize,
    /// Velocity limit as a fraction of each box width.
    pub velocity_clamp: f64,
}

impl PsoConfig {
    pub fn new(
        n_particles: usize,
        max_iterations: usize,
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
        rng_seed: u64,
    ) -> Self {
        Self {
            n_particles,
            max_iterations,
            lower_bounds,
            upper_bounds,
            inertia: 0.729,
            cognitive: 1.494_45,
            social: 1.494_45,
            rng_seed,
            stall_tolerance: 0.0,
            stall_iterations: 10,
            velocity_clamp: 0.2,
        }
    }

    pub fn dimension(&self) -> usize {
        self.lower_bounds.len()
    }

    /// Bounds may collapse to a point (lower == upper), which pins that variable.
    pub fn validate(&self) -> Result<()> {
        if self.n_particles < 1 || self.max_iterations < 1 {
            return Err(Error::invalid("particle and iteration counts must be at least 1"));
        }
        if self.lower_bounds.len() != self.upper_bounds.len() || self.lower_bounds.is_empty() {
            return Err(Error::invalid("bounds must be non-empty and of equal length"));
        }
        for (d, (lo, hi)) in self.lower_bounds.iter().zip(&self.upper_bounds).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::invalid(format!(
                    "bounds of variable {d} are invalid: [{lo}, {hi}]"
                )));
            }
        }
        for (name, v) in [
            ("inertia", self.inertia),
            ("cognitive", self.cognitive),
            ("social", self.social),
            ("velocity_clamp", self.velocity_clamp),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.stall_tolerance >= 0.0) {
            return Err(Error::invalid("stall_tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub best_vector: Vec<f64>,
    pub best_objective: f64,
    /// Best objective after each iteration (the first entry is the initial swarm).
    pub iteration_trace: Vec<f64>,
    pub evaluations: usize,
    /// Evaluations that returned the penalty.
    pub penalties: usize,
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v.max(PENALTY)
    } else {
        PENALTY
    }
}

/// Maximizes `cost` over the box. `seeds` optionally fixes the starting
/// positions of the first particles (clamped into the box); the remaining
/// particles start uniformly at random.
pub fn pso_maximize<F>(cost: F, config: &PsoConfig, seeds: &[Vec<f64>]) -> Result<StageResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = config.dimension();
    let (lo, hi) = (&config.lower_bounds, &config.upper_bounds);
    if seeds.len() > config.n_particles || seeds.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid("seed positions must fit the swarm and the dimension"));
    }
    let vmax: Vec<f64> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| config.velocity_clamp * (b - a))
        .collect();

    let mut rngs: Vec<ChaCha8Rng> = (0..config.n_particles)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(config.rng_seed);
            r.set_stream(i as u64);
            r
        })
        .collect();
    let mut pos: Vec<Vec<f64>> = Vec::with_capacity(config.n_particles);
    let mut vel: Vec<Vec<f64>> = Vec::with_capacity(config.n_particles);
    for (i, rng) in rngs.iter_mut().enumerate() {
        let p: Vec<f64> = match seeds.get(i) {
            Some(s) => s
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (a, b))| x.clamp(*a, *b))
                .collect(),
            None => (0..dim)
                .map(|d| lo[d] + rng.random::<f64>() * (hi[d] - lo[d]))
                .collect(),
        };
        let v: Vec<f64> = (0..dim).map(|d| (2.0 * rng.random::<f64>() - 1.0) * vmax[d]).collect();
        pos.push(p);
        vel.push(v);
    }

    let evaluate = |pos: &[Vec<f64>]| -> Vec<f64> { pos.par_iter().map(|p| sanitize(cost(p))).collect() };
    let mut values = evaluate(&pos);
    let mut evaluations = values.len();
    let mut penalties = values.iter().filter(|v| **v <= PENALTY).count();
    let mut personal = pos.clone();
    let mut personal_val = values.clone();
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    let mut best_vec = pos[best].clone();
    let mut best_val = values[best];
    let mut trace = vec![best_val];

    for _ in 1..config.max_iterations {
        for i in 0..config.n_particles {
            let rng = &mut rngs[i];
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let mut v = config.inertia * vel[i][d]
                    + config.cognitive * r1 * (personal[i][d] - pos[i][d])
                    + config.social * r2 * (best_vec[d] - pos[i][d]);
                v = v.clamp(-vmax[d], vmax[d]);
                let mut x = pos[i][d] + v;
                if x < lo[d] {
                    x = lo[d];
                    v = 0.0;
                } else if x > hi[d] {
                    x = hi[d];
                    v = 0.0;
                }
                vel[i][d] = v;
                pos[i][d] = x;
            }
        }
        values = evaluate(&pos);
        evaluations += values.len();
        penalties += values.iter().filter(|v| **v <= PENALTY).count();
        for i in 0..config.n_particles {
            if values[i] > personal_val[i] {
                personal_val[i] = values[i];
                personal[i].clone_from(&pos[i]);
            }
            if values[i] > best_val {
                best_val = values[i];
                best_vec.clone_from(&pos[i]);
            }
        }
        trace.push(best_val);
        log::debug!("pso iteration {}: best {best_val}", trace.len());
        let window = config.stall_iterations;
        if config.stall_tolerance > 0.0 && trace.len() > window {
            let gain = best_val - trace[trace.len() - 1 - window];
            if gain < config.stall_tolerance {
                break;
            }
        }
    }
    if best_val <= PENALTY {
        return Err(Error::Optimizer(format!(
            "every one of {evaluations} cost evaluations failed"
        )));
    }
    Ok(StageResult {
        best_vector: best_vec,
        best_objective: best_val,
        iteration_trace: trace,
        evaluations,
        penalties,
    })
}
