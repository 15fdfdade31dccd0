//! DC-bias spectroscopy of the first subband spacing.

use serde::{Deserialize, Serialize};

use super::calibrate::remove_series_resistance;
use super::fit::{first_crossing, interp_index};
use super::kappa::{transconductance_of, Smoothing};
use crate::error::{Error, Result};
use crate::numerics::{find_peaks, interp_linear};
use crate::synthesis::ConductanceTrace;
use crate::units::{G_Q_SIEMENS, MEV_PER_VOLT};

fn check_family(family: &[ConductanceTrace]) -> Result<()> {
    let first = family
        .first()
        .ok_or_else(|| Error::Argument("empty bias family".into()))?;
    for t in family {
        t.validate()?;
        if t.sweep_direction != first.sweep_direction || t.gate_voltage.len() != first.gate_voltage.len() {
            return Err(Error::Argument("bias family traces must share one gate sweep".into()));
        }
        let same = t
            .gate_voltage
            .iter()
            .zip(&first.gate_voltage)
            .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        if !same {
            return Err(Error::Argument("bias family traces must share one gate sweep".into()));
        }
    }
    Ok(())
}

/// Bias across the device for the family member at `v_dc`, one value per
/// gate point in the family's sample order.
///
/// The drop on the series resistance is `R_s·I` with `I` the integral of
/// the measured differential conductance from zero bias up to `v_dc`,
/// taken by the trapezoid rule over the family's bias values.
pub fn correct_dc_bias(v_dc: f64, family: &[ConductanceTrace], r_s: f64) -> Result<Vec<f64>> {
    check_family(family)?;
    let n = family[0].gate_voltage.len();
    if v_dc == 0.0 {
        return Ok(vec![0.0; n]);
    }
    if r_s == 0.0 {
        return Ok(vec![v_dc; n]);
    }
    let mut members: Vec<&ConductanceTrace> = family
        .iter()
        .filter(|t| t.v_sd_dc == 0.0 || (t.v_sd_dc.signum() == v_dc.signum() && t.v_sd_dc.abs() <= v_dc.abs()))
        .collect();
    members.sort_by(|a, b| a.v_sd_dc.abs().total_cmp(&b.v_sd_dc.abs()));
    members.dedup_by(|a, b| a.v_sd_dc == b.v_sd_dc);
    if members.first().is_none_or(|t| t.v_sd_dc != 0.0) {
        return Err(Error::Argument("bias family must contain a zero-bias trace".into()));
    }
    if members.last().is_none_or(|t| t.v_sd_dc != v_dc) {
        return Err(Error::Argument(format!("bias family has no trace at {v_dc} V")));
    }
    let r = r_s * G_Q_SIEMENS;
    Ok((0..n)
        .map(|j| {
            let current: f64 = members
                .windows(2)
                .map(|w| 0.5 * (w[0].g_sd[j] + w[1].g_sd[j]) * (w[1].v_sd_dc - w[0].v_sd_dc))
                .sum();
            v_dc - r * current
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectroscopyConfig {
    pub smoothing: Smoothing,
    pub prominence_fraction: f64,
    pub height_fraction: f64,
    pub min_points: usize,
    /// Minimum spacing between tracked peaks and their neighbours, in units
    /// of the zero-bias first-riser peak width (FWHM).
    pub min_separation: f64,
}

impl Default for SpectroscopyConfig {
    fn default() -> Self {
        Self {
            smoothing: Smoothing { window: 31, order: 3 },
            prominence_fraction: 0.1,
            height_fraction: 0.2,
            min_points: 3,
            min_separation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandSpacing {
    /// meV.
    pub delta_e: f64,
    /// Device bias (V) where the tracked peaks meet.
    pub v_sd_cross: f64,
    /// Lever arm implied by the track slopes.
    pub lever_arm_estimate: f64,
    /// (V_SD, V_G) loci of the first riser's upper branch.
    pub lower_track: Vec<(f64, f64)>,
    /// (V_SD, V_G) loci of the second riser's lower branch.
    pub upper_track: Vec<(f64, f64)>,
}

fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Sub-sample peak position by a parabola through the three top samples.
fn refine(x: &[f64], y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= y.len() {
        return x[i];
    }
    let den = y[i - 1] - 2.0 * y[i] + y[i + 1];
    if den >= 0.0 {
        return x[i];
    }
    let d = 0.5 * (y[i - 1] - y[i + 1]) / den;
    x[i] + d * (x[i + 1] - x[i])
}

/// Full width at half maximum of the tallest peak of `y` below `limit`,
/// searched around `centre`.
fn peak_width(x: &[f64], y: &[f64], centre: f64, limit: f64) -> f64 {
    let end = x.partition_point(|v| *v < limit).max(1);
    let start = x.partition_point(|v| *v < 2.0 * centre - limit);
    let i = (start..end).max_by(|a, b| y[*a].total_cmp(&y[*b])).unwrap_or(0);
    let half = 0.5 * y[i];
    let mut l = i;
    while l > 0 && y[l] > half {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < y.len() && y[r] > half {
        r += 1;
    }
    x[r] - x[l]
}

pub fn extract_subband_spacing(family: &[ConductanceTrace], r_s: f64) -> Result<SubbandSpacing> {
    extract_with(family, r_s, &SpectroscopyConfig::default())
}

pub fn extract_with(family: &[ConductanceTrace], r_s: f64, cfg: &SpectroscopyConfig) -> Result<SubbandSpacing> {
    check_family(family)?;
    let zero = family
        .iter()
        .find(|t| t.v_sd_dc == 0.0)
        .ok_or_else(|| Error::Extraction("bias family has no zero-bias trace".into()))?;
    // Work on whichever bias polarity has more members.
    let pos = family.iter().filter(|t| t.v_sd_dc > 0.0).count();
    let neg = family.iter().filter(|t| t.v_sd_dc < 0.0).count();
    let sign = if pos >= neg { 1.0 } else { -1.0 };
    let mut biased: Vec<&ConductanceTrace> = family.iter().filter(|t| t.v_sd_dc * sign > 0.0).collect();
    if biased.len() < cfg.min_points {
        return Err(Error::Extraction(format!(
            "{} nonzero biases in family, need at least {}",
            biased.len(),
            cfg.min_points
        )));
    }
    biased.sort_by(|a, b| a.v_sd_dc.abs().total_cmp(&b.v_sd_dc.abs()));

    let ascending = |vals: &[f64]| -> Vec<f64> {
        let mut v = vals.to_vec();
        if zero.sweep_direction == crate::synthesis::SweepDirection::Forward {
            v.reverse();
        }
        v
    };
    let gates = ascending(&zero.gate_voltage);
    let dv = (gates[gates.len() - 1] - gates[0]) / (gates.len() - 1) as f64;
    let intrinsic = |t: &ConductanceTrace| -> Vec<f64> {
        ascending(&t.g_sd).iter().map(|g| remove_series_resistance(*g, r_s)).collect()
    };

    let g0 = intrinsic(zero);
    let c1 = first_crossing(&g0, 0.5).ok_or_else(|| Error::Extraction("zero-bias trace never reaches 0.5 G_Q".into()))?;
    let c2 = first_crossing(&g0, 1.5).ok_or_else(|| Error::Extraction("zero-bias trace never reaches 1.5 G_Q".into()))?;
    let (v1, v2) = (interp_index(&gates, c1), interp_index(&gates, c2));
    let span = v2 - v1;
    let width = peak_width(&gates, &transconductance_of(&g0, dv, &cfg.smoothing)?, v1, 0.5 * (v1 + v2));

    let mut lower_track = Vec::new();
    let mut upper_track = Vec::new();
    let mut v_sd_max = 0.0f64;
    for t in &biased {
        let v_sd = ascending(&correct_dc_bias(t.v_sd_dc, family, r_s)?);
        let tc = transconductance_of(&intrinsic(t), dv, &cfg.smoothing)?;
        let lo = gates.partition_point(|g| *g < v1 - 0.5 * span);
        let hi = gates.partition_point(|g| *g <= v2 + 0.5 * span);
        let top = tc[lo..hi].iter().fold(0.0f64, |m, v| m.max(*v));
        v_sd_max = v_sd_max.max(v_sd.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        if top <= 0.0 {
            continue;
        }
        let peaks: Vec<(f64, f64, f64)> = find_peaks(&tc[lo..hi])
            .into_iter()
            .filter(|p| p.prominence >= cfg.prominence_fraction * top && p.height >= cfg.height_fraction * top)
            .map(|p| {
                let vg = refine(&gates[lo..hi], &tc[lo..hi], p.index);
                (vg, p.prominence, interp_linear(&gates, &v_sd, vg).abs())
            })
            .collect();
        // Both risers must show their outer branch too, otherwise the inner
        // peaks are unresolved pairs sitting at the zero-bias positions.
        let below = peaks.iter().filter(|p| p.0 < v1).map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let above = peaks.iter().filter(|p| p.0 > v2).map(|p| p.0).fold(f64::INFINITY, f64::min);
        let mut inside: Vec<(f64, f64, f64)> = peaks.into_iter().filter(|p| p.0 > v1 && p.0 < v2).collect();
        if inside.len() < 2 || !below.is_finite() || !above.is_finite() {
            continue;
        }
        inside.sort_by(|a, b| b.1.total_cmp(&a.1));
        inside.truncate(2);
        inside.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Overlapping peaks pull each other together; keep well-separated loci.
        let sep = cfg.min_separation * width;
        if inside[0].0 - below < sep || inside[1].0 - inside[0].0 < sep || above - inside[1].0 < sep {
            continue;
        }
        lower_track.push((inside[0].2, inside[0].0));
        upper_track.push((inside[1].2, inside[1].0));
    }
    if lower_track.len() < cfg.min_points {
        return Err(Error::Extraction(format!(
            "split riser peaks resolved at {} biases, need {}",
            lower_track.len(),
            cfg.min_points
        )));
    }
    let (a1, b1) = line_fit(&lower_track);
    let (a2, b2) = line_fit(&upper_track);
    if !(b1 > 0.0 && b2 < 0.0) {
        return Err(Error::Extraction("tracked peaks do not converge with bias".into()));
    }
    let v_cross = (a2 - a1) / (b1 - b2);
    if !(v_cross > 0.0 && v_cross <= v_sd_max) {
        return Err(Error::Extraction(format!(
            "tracked peaks cross at {v_cross:.4} V, outside the family range {v_sd_max:.4} V"
        )));
    }
    Ok(SubbandSpacing {
        delta_e: MEV_PER_VOLT * v_cross,
        v_sd_cross: v_cross,
        lever_arm_estimate: 1.0 / (b1 - b2),
        lower_track,
        upper_track,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{DeviceId, SweepDirection, TraceMetadata};

    fn flat_family(g: f64, biases: &[f64]) -> Vec<ConductanceTrace> {
        biases
            .iter()
            .map(|&v| ConductanceTrace {
                gate_voltage: vec![-0.5, -0.4, -0.3],
                g_sd: vec![g; 3],
                sweep_direction: SweepDirection::Backward,
                temperature: 0.04,
                v_sd_dc: v,
                metadata: TraceMetadata {
                    device: DeviceId::new(1, 1, 1).unwrap(),
                    cooldown: 1,
                    illuminated: false,
                    lever_arm: 0.05,
                    width_um: 0.6,
                    length_um: 0.2,
                },
            })
            .collect()
    }

    #[test]
    fn zero_resistance_and_zero_bias() {
        let fam = flat_family(0.8, &[0.0, 0.001, 0.002]);
        assert_eq!(correct_dc_bias(0.002, &fam, 0.0).unwrap(), vec![0.002; 3]);
        assert_eq!(correct_dc_bias(0.0, &fam, 1000.0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn constant_conductance() {
        let fam = flat_family(0.8, &[0.0, 0.001, 0.002, 0.003]);
        let r = 2000.0;
        for v in correct_dc_bias(0.003, &fam, r).unwrap() {
            let expect = 0.003 * (1.0 - r * G_Q_SIEMENS * 0.8);
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_only_family_fails() {
        let fam = flat_family(0.8, &[0.0]);
        assert!(matches!(extract_subband_spacing(&fam, 0.0), Err(Error::Extraction(_))));
    }
}
