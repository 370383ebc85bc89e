//! Savitzky–Golay smoothing of launch-power spectra (in dBm).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::LaunchProfile;

fn check(window: usize, order: usize) -> Result<()> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("window must be odd and positive, got {window}")));
    }
    if order >= window {
        return Err(Error::invalid(format!(
            "order {order} must be below the window {window}"
        )));
    }
    Ok(())
}

/// Weights that evaluate the least-squares polynomial of degree `order`
/// through the samples at `offsets` (relative to the output point) at 0.
fn fit_weights(offsets: &[f64], order: usize) -> Vec<f64> {
    let degree = order.min(offsets.len() - 1);
    let a = DMatrix::from_fn(offsets.len(), degree + 1, |r, c| offsets[r].powi(c as i32));
    let normal = a.transpose() * &a;
    let chol = normal
        .cholesky()
        .expect("distinct sample offsets give a definite system");
    let mut e0 = DVector::zeros(degree + 1);
    e0[0] = 1.0;
    let row = a * chol.solve(&e0);
    row.iter().copied().collect()
}

/// Convolution kernel for interior points.
pub fn savgol_coefficients(window: usize, order: usize) -> Result<Vec<f64>> {
    check(window, order)?;
    let h = (window / 2) as f64;
    let offsets: Vec<f64> = (0..window).map(|j| j as f64 - h).collect();
    Ok(fit_weights(&offsets, order))
}

/// Smooths `values`; near the ends the polynomial is fitted over the
/// truncated window instead of padding the data.
pub fn smooth_values(values: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    check(window, order)?;
    if values.len() < window {
        return Err(Error::invalid(format!(
            "profile of {} points is shorter than the window {window}",
            values.len()
        )));
    }
    let interior = savgol_coefficients(window, order)?;
    let h = window / 2;
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(h);
        let hi = (i + h).min(n - 1);
        let weights = if hi - lo + 1 == window {
            interior.clone()
        } else {
            let offsets: Vec<f64> = (lo..=hi).map(|j| j as f64 - i as f64).collect();
            fit_weights(&offsets, order)
        };
        out.push(weights.iter().zip(&values[lo..=hi]).map(|(w, v)| w * v).sum());
    }
    Ok(out)
}

pub fn savitzky_golay_smooth(profile: &LaunchProfile, window: usize, order: usize) -> Result<LaunchProfile> {
    if profile.per_channel_dbm.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("smoothing needs a finite dBm profile"));
    }
    Ok(LaunchProfile {
        per_channel_dbm: smooth_values(&profile.per_channel_dbm, window, order)?,
    })
}
