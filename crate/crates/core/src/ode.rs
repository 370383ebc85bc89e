//! Dormand–Prince 5(4) integrator with embedded error control and the
//! fourth-order continuous extension for output on a fixed grid.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    // fifth-order weights (FSAL)
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub max_steps: usize,
    pub safety: f64,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-6,
            atol: 1e-15,
            h_min: 1e-9,
            max_steps: 100_000,
            safety: 0.9,
        }
    }
}

/// A component that went negative after an accepted step and was reset to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampEvent {
    pub t: f64,
    pub component: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `states[i]` is the solution at `t_out[i]`.
    pub states: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub clamps: Vec<ClampEvent>,
}

impl Dopri5 {
    pub fn with_rtol(rtol: f64) -> Self {
        Self {
            rtol,
            ..Self::default()
        }
    }

    /// Integrates `dy/dt = f(t, y)` from `t_out[0]` with `y(t_out[0]) = y0` and
    /// samples the solution at every entry of the increasing grid `t_out`.
    ///
    /// With `clamp_nonnegative`, negative components produced by an accepted
    /// step are set to zero and reported.
    pub fn integrate<F>(&self, mut f: F, y0: &[f64], t_out: &[f64], clamp_nonnegative: bool) -> Result<Trajectory>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        if t_out.is_empty() {
            return Err(Error::invalid("empty output grid"));
        }
        if t_out.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("output grid must be strictly increasing"));
        }
        let n = y0.len();
        let t0 = t_out[0];
        let t_end = *t_out.last().unwrap();
        let mut states = Vec::with_capacity(t_out.len());
        states.push(y0.to_vec());
        let mut traj = Trajectory {
            states,
            accepted_steps: 0,
            rejected_steps: 0,
            clamps: Vec::new(),
        };
        if t_out.len() == 1 {
            return Ok(traj);
        }

        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        let mut y = y0.to_vec();
        let mut y_new = vec![0.0; n];
        let mut y_stage = vec![0.0; n];
        let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        let mut t = t0;
        f(t, &y, &mut k[0]);

        let mut h = self.initial_step(&mut f, t, &y, &k[0], t_end - t0);
        let mut next_out = 1;
        let mut fac_old = 1e-4f64;
        let mut steps = 0usize;

        while next_out < t_out.len() {
            if steps >= self.max_steps {
                return Err(Error::Stiffness { z: t, step: h });
            }
            steps += 1;
            if t + h > t_end {
                h = t_end - t;
            }
            if h < self.h_min {
                return Err(Error::Stiffness { z: t, step: h });
            }

            for s in 1..7 {
                for i in 0..n {
                    let mut acc = 0.0;
                    for (j, a) in A[s].iter().enumerate().take(s) {
                        acc += a * k[j][i];
                    }
                    y_stage[i] = y[i] + h * acc;
                }
                f(t + C[s] * h, &y_stage, &mut k[s]);
                if s == 6 {
                    y_new.copy_from_slice(&y_stage);
                }
            }

            let mut err = 0.0;
            for i in 0..n {
                let mut e = 0.0;
                for s in 0..7 {
                    e += E[s] * k[s][i];
                }
                let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                let r = h * e / scale;
                err += r * r;
            }
            let err = (err / n.max(1) as f64).sqrt();

            if !err.is_finite() {
                h *= 0.2;
                traj.rejected_steps += 1;
                continue;
            }

            // PI step-size controller (Hairer's beta = 0.04)
            let fac11 = err.powf(0.2 - 0.04 * 0.75);
            let fac = (fac11 / fac_old.powf(0.04) / self.safety).clamp(0.1, 5.0);

            if err <= 1.0 {
                fac_old = err.max(1e-4);
                for i in 0..n {
                    let ydiff = y_new[i] - y[i];
                    let bspl = h * k[0][i] - ydiff;
                    cont[0][i] = y[i];
                    cont[1][i] = ydiff;
                    cont[2][i] = bspl;
                    cont[3][i] = ydiff - h * k[6][i] - bspl;
                    let mut dsum = 0.0;
                    for s in 0..7 {
                        dsum += D[s] * k[s][i];
                    }
                    cont[4][i] = h * dsum;
                }
                let t_new = if t + h >= t_end { t_end } else { t + h };
                while next_out < t_out.len() && t_out[next_out] <= t_new {
                    let theta = (t_out[next_out] - t) / h;
                    let theta1 = 1.0 - theta;
                    let mut out = vec![0.0; n];
                    for i in 0..n {
                        out[i] = cont[0][i]
                            + theta * (cont[1][i] + theta1 * (cont[2][i] + theta * (cont[3][i] + theta1 * cont[4][i])));
                    }
                    if next_out == t_out.len() - 1 {
                        // end point taken from the step itself, not the interpolant
                        out.copy_from_slice(&y_new);
                    }
                    if clamp_nonnegative {
                        for (i, v) in out.iter_mut().enumerate() {
                            if *v < 0.0 {
                                traj.clamps.push(ClampEvent {
                                    t: t_out[next_out],
                                    component: i,
                                    value: *v,
                                });
                                *v = 0.0;
                            }
                        }
                    }
                    traj.states.push(out);
                    next_out += 1;
                }
                if clamp_nonnegative {
                    for (i, v) in y_new.iter_mut().enumerate() {
                        if *v < 0.0 {
                            traj.clamps.push(ClampEvent {
                                t: t_new,
                                component: i,
                                value: *v,
                            });
                            *v = 0.0;
                        }
                    }
                }
                y.copy_from_slice(&y_new);
                // FSAL
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                if clamp_nonnegative && traj.clamps.last().is_some_and(|c| c.t == t_new) {
                    f(t_new, &y, &mut k[0]);
                }
                t = t_new;
                traj.accepted_steps += 1;
                h /= fac;
            } else {
                traj.rejected_steps += 1;
                h /= (fac11 / self.safety).min(10.0);
            }
        }
        Ok(traj)
    }

    // Hairer & Wanner's starting step heuristic.
    fn initial_step<F>(&self, f: &mut F, t: f64, y: &[f64], f0: &[f64], span: f64) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len().max(1) as f64;
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..y.len() {
            let sk = self.atol + self.rtol * y[i].abs();
            dnf += (f0[i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6 * span
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(span);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(yi, fi)| yi + h * fi).collect();
        let mut f1 = vec![0.0; y.len()];
        f(t + h, &y1, &mut f1);
        let mut der2 = 0.0;
        for i in 0..y.len() {
            let sk = self.atol + self.rtol * y[i].abs();
            der2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        let der2 = (der2 / n).sqrt() / h;
        let der12 = der2.max((dnf / n).sqrt());
        let h1 = if der12 <= 1e-15 {
            (1e-6f64).max(h * 1e-3)
        } else {
            (0.01 / der12).powf(0.2)
        };
        (100.0 * h).min(h1).min(span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let traj = Dopri5::with_rtol(1e-10)
            .integrate(|_, y, dy| dy[0] = -0.5 * y[0], &[1.0], &grid, false)
            .unwrap();
        for (t, s) in grid.iter().zip(&traj.states) {
            let exact = (-0.5 * t).exp();
            assert!(
                (s[0] - exact).abs() < 1e-8 * exact.max(1e-3),
                "t={t}: {} vs {exact}",
                s[0]
            );
        }
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let grid: Vec<f64> = (0..=64).map(|i| i as f64 * 0.1).collect();
        let traj = Dopri5::with_rtol(1e-9)
            .integrate(
                |_, y, dy| {
                    dy[0] = y[1];
                    dy[1] = -y[0];
                },
                &[1.0, 0.0],
                &grid,
                false,
            )
            .unwrap();
        for (t, s) in grid.iter().zip(&traj.states) {
            assert!((s[0] - t.cos()).abs() < 1e-7);
            assert!((s[1] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn linear_invariant_is_preserved() {
        // d/dt (y0 + y1) = 0 for this nonlinear system
        let grid: Vec<f64> = (0..=10).map(|i| i as f64).collect();
        let traj = Dopri5::default()
            .integrate(
                |_, y, dy| {
                    dy[0] = -0.3 * y[0] * y[1];
                    dy[1] = 0.3 * y[0] * y[1];
                },
                &[0.9, 0.1],
                &grid,
                true,
            )
            .unwrap();
        for s in &traj.states {
            assert!((s[0] + s[1] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn blow_up_reports_stiffness() {
        let grid = [0.0, 2.0];
        let err = Dopri5::default()
            .integrate(|_, y, dy| dy[0] = y[0] * y[0], &[1.0], &grid, false)
            .unwrap_err();
        assert!(matches!(err, Error::Stiffness { .. }));
    }

    #[test]
    fn clamps_negative_components() {
        let grid = [0.0, 1.0, 2.0];
        let traj = Dopri5::default()
            .integrate(|_, _, dy| dy[0] = -1.0, &[0.5], &grid, true)
            .unwrap();
        assert!(!traj.clamps.is_empty());
        assert!(traj.states.iter().all(|s| s[0] >= 0.0));
    }
}
