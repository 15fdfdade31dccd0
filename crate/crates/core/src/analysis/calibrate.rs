//! Series-resistance calibration against the first plateau.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::median;
use crate::synthesis::ConductanceTrace;
use crate::units::G_Q_SIEMENS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateauCriteria {
    /// Raw conductance range (G_Q) that may hold the first plateau.
    pub g_range: (f64, f64),
    /// Half-width (samples) of the local regression used for the slope.
    pub slope_half_window: usize,
    /// A sample is flat when its slope is below this fraction of the
    /// steepest slope in the trace.
    pub slope_fraction: f64,
    pub min_samples: usize,
}

impl Default for PlateauCriteria {
    fn default() -> Self {
        Self {
            g_range: (0.8, 1.2),
            slope_half_window: 10,
            slope_fraction: 0.1,
            min_samples: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Ohms.
    pub series_resistance: f64,
    /// Median raw conductance over the central half of the plateau.
    pub plateau_value: f64,
    /// Gate-voltage span of the detected plateau.
    pub plateau_span: (f64, f64),
    /// White-noise level estimated from plateau sample differences.
    pub noise_sigma: f64,
    pub corrected: ConductanceTrace,
}

/// Least-squares slope over a sliding window of `2·half + 1` samples,
/// truncated at the ends.
fn local_slope(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let m = (hi - lo + 1) as f64;
            let xm = (lo + hi) as f64 / 2.0;
            let ym = y[lo..=hi].iter().sum::<f64>() / m;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (k, v) in y[lo..=hi].iter().enumerate() {
                let dx = (lo + k) as f64 - xm;
                sxy += dx * (v - ym);
                sxx += dx * dx;
            }
            if sxx > 0.0 {
                sxy / sxx
            } else {
                0.0
            }
        })
        .collect()
}

/// Inverts the two-terminal division `g_meas = g / (1 + R g)`.
pub fn remove_series_resistance(g_meas: f64, r_ohm: f64) -> f64 {
    let r = r_ohm * G_Q_SIEMENS;
    g_meas / (1.0 - r * g_meas).max(1e-9)
}

pub fn correct_trace(trace: &ConductanceTrace, r_ohm: f64) -> ConductanceTrace {
    let mut out = trace.clone();
    if r_ohm != 0.0 {
        for g in &mut out.g_sd {
            *g = remove_series_resistance(*g, r_ohm);
        }
    }
    out
}

pub fn calibrate_series_resistance(trace: &ConductanceTrace) -> Result<Calibration> {
    calibrate_with(trace, &PlateauCriteria::default())
}

pub fn calibrate_with(trace: &ConductanceTrace, crit: &PlateauCriteria) -> Result<Calibration> {
    trace.validate()?;
    let (v, g) = trace.ascending();
    let slope = local_slope(&g, crit.slope_half_window);
    let steepest = slope.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if steepest == 0.0 {
        return Err(Error::Calibration("trace is flat".into()));
    }
    let smooth = local_mean(&g, crit.slope_half_window);
    let flat: Vec<bool> = (0..g.len())
        .map(|i| {
            smooth[i] >= crit.g_range.0
                && smooth[i] <= crit.g_range.1
                && slope[i].abs() < crit.slope_fraction * steepest
        })
        .collect();
    let (mut best, mut start) = ((0, 0), None);
    for i in 0..=flat.len() {
        let on = i < flat.len() && flat[i];
        match (on, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 {
                    best = (s, i);
                }
                start = None;
            }
            _ => {}
        }
    }
    let (s, e) = best;
    if e - s < crit.min_samples {
        return Err(Error::Calibration(format!(
            "no first plateau found (longest flat run {} samples)",
            e - s
        )));
    }
    let quarter = (e - s) / 4;
    let core = &g[s + quarter..e - quarter];
    let plateau_value = median(core).ok_or_else(|| Error::Calibration("empty plateau".into()))?;
    let r_ohm = ((1.0 / plateau_value - 1.0) / G_Q_SIEMENS).max(0.0);
    let diffs: Vec<f64> = g[s..e].windows(2).map(|w| w[1] - w[0]).collect();
    let dm = median(&diffs).unwrap_or(0.0);
    let mad = median(&diffs.iter().map(|d| (d - dm).abs()).collect::<Vec<_>>()).unwrap_or(0.0);
    let noise_sigma = mad / 0.674_489_75 / std::f64::consts::SQRT_2;
    Ok(Calibration {
        series_resistance: r_ohm,
        plateau_value,
        plateau_span: (v[s], v[e - 1]),
        noise_sigma,
        corrected: correct_trace(trace, r_ohm),
    })
}

fn local_mean(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}
