//! Gate-voltage to κ conversion and the measured transconductance.

use serde::{Deserialize, Serialize};

use super::fit::{first_crossing, interp_index, SubbandFit};
use crate::error::{Error, Result};
use crate::numerics::{gradient_uniform, interp_linear, savgol_smooth};
use crate::synthesis::ConductanceTrace;
use crate::units::MEV_PER_VOLT;

/// Conductance resampled on a uniform κ grid with κ = 0 at the
/// (N − 1/2) G_Q crossing of the fitted subband.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaTrace {
    pub subband: u32,
    pub kappa: Vec<f64>,
    pub g: Vec<f64>,
    pub step: f64,
    /// Gate voltage at κ = 0.
    pub v_cross: f64,
    pub e_x: f64,
    pub lever_arm: f64,
}

impl KappaTrace {
    pub fn gate_at(&self, kappa: f64) -> f64 {
        self.v_cross + kappa * self.e_x / (MEV_PER_VOLT * self.lever_arm)
    }

    pub fn g_at(&self, kappa: f64) -> f64 {
        interp_linear(&self.kappa, &self.g, kappa)
    }
}

pub fn to_kappa(trace: &ConductanceTrace, fit: &SubbandFit) -> Result<KappaTrace> {
    to_kappa_with(trace, fit, 1)
}

/// As [`to_kappa`], with a grid spacing of `decimation` times the trace's
/// mean sample spacing.
pub fn to_kappa_with(trace: &ConductanceTrace, fit: &SubbandFit, decimation: usize) -> Result<KappaTrace> {
    if decimation < 1 {
        return Err(Error::Argument("κ grid decimation must be >= 1".into()));
    }
    trace.validate()?;
    let (v, g) = trace.ascending();
    let mid = fit.subband as f64 - 0.5;
    let pos = first_crossing(&g, mid)
        .ok_or_else(|| Error::Transform(format!("trace never crosses {mid} G_Q")))?;
    let v_cross = interp_index(&v, pos);
    let scale = MEV_PER_VOLT * fit.lever_arm / fit.e_x;
    let k: Vec<f64> = v.iter().map(|x| scale * (x - v_cross)).collect();
    let step = decimation as f64 * (k[k.len() - 1] - k[0]) / (k.len() - 1) as f64;
    let first = (k[0] / step).ceil() as i64;
    let last = (k[k.len() - 1] / step).floor() as i64;
    let kappa: Vec<f64> = (first..=last).map(|i| i as f64 * step).collect();
    let gk = kappa.iter().map(|x| interp_linear(&k, &g, *x)).collect();
    Ok(KappaTrace {
        subband: fit.subband,
        kappa,
        g: gk,
        step,
        v_cross,
        e_x: fit.e_x,
        lever_arm: fit.lever_arm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub window: usize,
    pub order: usize,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { window: 11, order: 3 }
    }
}

/// dG/dκ of the Savitzky-Golay smoothed conductance.
pub fn transconductance(kt: &KappaTrace, smoothing: &Smoothing) -> Result<Vec<f64>> {
    transconductance_of(&kt.g, kt.step, smoothing)
}

pub fn transconductance_of(g: &[f64], step: f64, smoothing: &Smoothing) -> Result<Vec<f64>> {
    let s = savgol_smooth(g, smoothing.window, smoothing.order)?;
    Ok(gradient_uniform(&s, step))
}

/// Standard deviation of the transconductance produced by unit white noise
/// on a unit-spaced grid, away from the edges.
pub fn transconductance_noise_gain(smoothing: &Smoothing) -> Result<f64> {
    let n = 2 * smoothing.window + 3;
    let c = n / 2;
    // Response at the centre to a unit impulse at each sample.
    let mut acc = 0.0;
    for j in 0..n {
        let mut y = vec![0.0; n];
        y[j] = 1.0;
        let d = transconductance_of(&y, 1.0, smoothing)?;
        acc += d[c] * d[c];
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_segment_has_constant_tc() {
        let g: Vec<f64> = (0..50).map(|i| 0.3 + 0.02 * i as f64).collect();
        let tc = transconductance_of(&g, 0.01, &Smoothing::default()).unwrap();
        for v in tc {
            assert!((v - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn window_longer_than_trace_is_error() {
        assert!(transconductance_of(&[0.0; 5], 0.1, &Smoothing::default()).is_err());
    }

    #[test]
    fn noise_gain_is_small() {
        let gain = transconductance_noise_gain(&Smoothing::default()).unwrap();
        assert!(gain > 0.0 && gain < 3.0 / 11.0, "{gain}");
    }
}
