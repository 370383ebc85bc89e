//! ASE noise from distributed Raman gain and from the lumped amplifiers.

use crate::error::{Error, Result};
use crate::quadrature::simpson;
use crate::raman::{PowerEvolution, WaveLabel};
use crate::spectra::FiberSpec;
use crate::system::{AmplifierSpec, WdmGrid};
use crate::units::{db_to_linear, phonon_occupancy, PLANCK};

#[derive(Debug, Clone, PartialEq)]
pub struct AsePerChannel {
    /// W in the reference bandwidth, referred to the receiver.
    pub distributed_ase: Vec<f64>,
    /// W in the reference bandwidth.
    pub lumped_ase: Vec<f64>,
    pub reference_bandwidth: f64,
}

impl AsePerChannel {
    pub fn total(&self) -> Vec<f64> {
        self.distributed_ase
            .iter()
            .zip(&self.lumped_ase)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Net gain from every grid point to the span end for channel `ch`.
fn gain_to_end(evolution: &PowerEvolution, fiber: &FiberSpec, ch: usize) -> Result<Vec<f64>> {
    let rho = evolution.normalized_profile(ch, fiber)?;
    let end = *rho.last().unwrap();
    Ok(rho.iter().map(|r| end / r).collect())
}

/// Spontaneous Raman emission generated along the span and carried to z = L
/// with each channel's own net gain (W in `reference_bandwidth`, both
/// polarizations).
pub fn distributed_ase(
    evolution: &PowerEvolution,
    fiber: &FiberSpec,
    grid: &WdmGrid,
    reference_bandwidth: f64,
) -> Result<Vec<f64>> {
    if evolution.channel_count() != grid.len() {
        return Err(Error::invalid("evolution and grid disagree on the channel count"));
    }
    let pumps: Vec<usize> = evolution
        .pump_indices()
        .filter(|&j| evolution.power[j].iter().any(|p| *p > 0.0))
        .collect();
    let dz = evolution.z_km[1] - evolution.z_km[0];
    let mut out = vec![0.0; grid.len()];
    for (ch, slot) in out.iter_mut().enumerate() {
        debug_assert_eq!(evolution.waves[ch].label, WaveLabel::Channel(ch));
        let f = grid.frequency(ch);
        let above: Vec<usize> = pumps
            .iter()
            .copied()
            .filter(|&j| evolution.waves[j].frequency > f)
            .collect();
        if above.is_empty() {
            continue;
        }
        let mut source = vec![0.0; evolution.z_km.len()];
        for &j in &above {
            let df = evolution.waves[j].frequency - f;
            let weight = fiber.raman_gain(df)? * (1.0 + phonon_occupancy(df, fiber.temperature_k));
            for (s, pp) in source.iter_mut().zip(&evolution.power[j]) {
                *s += weight * pp;
            }
        }
        let gain = gain_to_end(evolution, fiber, ch)?;
        let integrand: Vec<f64> = source.iter().zip(&gain).map(|(s, g)| s * g).collect();
        *slot = (2.0 * PLANCK * f * reference_bandwidth * simpson(&integrand, dz)).max(0.0);
    }
    Ok(out)
}

/// ASE of the lumped amplifiers, h·f·B·(G·F − 1) per channel, where `gain_db`
/// is each channel's amplifier gain. Gains below 0 dB are treated as 0 dB.
pub fn lumped_ase(
    gain_db: &[f64],
    amplifier: &AmplifierSpec,
    grid: &WdmGrid,
    reference_bandwidth: f64,
) -> Result<Vec<f64>> {
    if gain_db.len() != grid.len() {
        return Err(Error::invalid("gain vector and grid disagree on the channel count"));
    }
    let mut clamped = 0;
    let out = gain_db
        .iter()
        .enumerate()
        .map(|(ch, &g)| {
            let f_nf = db_to_linear(amplifier.noise_figure(grid.band_of(ch))?);
            let mut gain = db_to_linear(g);
            if !(gain >= 1.0) {
                clamped += 1;
                gain = 1.0;
            }
            Ok((PLANCK * grid.frequency(ch) * reference_bandwidth * (gain * f_nf - 1.0)).max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    if clamped > 0 {
        log::info!("{clamped} channels have net span gain above 0 dB; amplifier gain taken as 0 dB");
    }
    Ok(out)
}

/// Element-wise sum over spans.
pub fn accumulate_ase(per_span: &[AsePerChannel]) -> Result<AsePerChannel> {
    let first = per_span
        .first()
        .ok_or_else(|| Error::invalid("no spans to accumulate"))?;
    let n = first.distributed_ase.len();
    let mut out = AsePerChannel {
        distributed_ase: vec![0.0; n],
        lumped_ase: vec![0.0; n],
        reference_bandwidth: first.reference_bandwidth,
    };
    for span in per_span {
        if span.distributed_ase.len() != n || span.lumped_ase.len() != n {
            return Err(Error::invalid("spans disagree on the channel count"));
        }
        if span.reference_bandwidth != first.reference_bandwidth {
            return Err(Error::invalid("spans disagree on the reference bandwidth"));
        }
        for i in 0..n {
            out.distributed_ase[i] += span.distributed_ase[i];
            out.lumped_ase[i] += span.lumped_ase[i];
        }
    }
    Ok(out)
}
