//! Lower-half-step fit of the saddle-point conductance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{levenberg_marquardt, LeastSquaresOptions};
use crate::synthesis::{ConductanceTrace, SweepDirection};
use crate::transport::thermal_step_exact;
use crate::units::{thermal_energy, MEV_PER_VOLT};

/// Conductance bounds, relative to the subband offset N−1, that select the
/// samples entering the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub lower: f64,
    pub upper: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self { lower: 0.02, upper: 0.5 }
    }
}

impl FitWindow {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let w = Self { lower, upper };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower >= 0.0 && self.lower < self.upper && self.upper <= 1.0) {
            return Err(Error::Argument(format!(
                "fit window needs 0 <= lower < upper <= 1, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub min_samples: usize,
    pub good_fit_rms: f64,
    pub e_x_bounds: (f64, f64),
    /// Multipliers applied to the initial E_x guess on successive restarts.
    pub restarts: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_samples: 10,
            good_fit_rms: 0.02,
            e_x_bounds: (1e-3, 100.0),
            restarts: vec![1.0, 0.5, 2.0, 0.25, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandFit {
    pub subband: u32,
    pub sweep_direction: SweepDirection,
    /// meV.
    pub e_x: f64,
    /// Gate voltage of the fitted riser centre.
    pub v_riser: f64,
    /// Lever arm the gate axis was converted with (held fixed: only the
    /// ratio lever_arm/E_x is identifiable from one step).
    pub lever_arm: f64,
    pub temperature: f64,
    /// RMS residual in G_Q over the fit window.
    pub rms: f64,
    pub n_samples: usize,
    pub good: bool,
    pub at_bound: bool,
}

impl SubbandFit {
    pub fn kappa(&self, v_g: f64) -> f64 {
        MEV_PER_VOLT * self.lever_arm * (v_g - self.v_riser) / self.e_x
    }

    /// Noninteracting single-subband step (no offset) and its κ-derivative.
    pub fn model(&self, kappa: f64) -> [f64; 2] {
        thermal_step_exact(kappa, thermal_energy(self.temperature) / self.e_x)
    }
}

/// Index of the first upward crossing of `level` in ascending-gate data, as
/// a fractional sample position.
pub(crate) fn first_crossing(g: &[f64], level: f64) -> Option<f64> {
    g.windows(2).position(|w| w[0] < level && w[1] >= level).map(|i| {
        let t = (level - g[i]) / (g[i + 1] - g[i]);
        i as f64 + t
    })
}

pub(crate) fn interp_index(v: &[f64], pos: f64) -> f64 {
    let i = (pos.floor() as usize).min(v.len() - 2);
    v[i] + (pos - i as f64) * (v[i + 1] - v[i])
}

pub fn fit_ex(trace: &ConductanceTrace, subband: u32, window: &FitWindow) -> Result<SubbandFit> {
    fit_ex_with(trace, subband, window, trace.metadata.lever_arm, &FitOptions::default())
}

pub fn fit_ex_with(
    trace: &ConductanceTrace,
    subband: u32,
    window: &FitWindow,
    lever_arm: f64,
    opts: &FitOptions,
) -> Result<SubbandFit> {
    trace.validate()?;
    window.validate()?;
    if subband < 1 {
        return Err(Error::Argument("subband index starts at 1".into()));
    }
    if !(lever_arm > 0.0) {
        return Err(Error::Argument(format!("lever arm must be > 0, got {lever_arm}")));
    }
    let (v, g) = trace.ascending();
    let offset = (subband - 1) as f64;
    let mid = offset + 0.5;
    let cross = first_crossing(&g, mid)
        .ok_or_else(|| Error::Fit(format!("trace never reaches {mid} G_Q")))?;

    let (lo, hi) = (offset + window.lower, offset + window.upper);
    let mut idx = Vec::new();
    let mut i = cross.floor() as usize + 1;
    while i > 0 {
        i -= 1;
        if g[i] < lo {
            break;
        }
        if g[i] <= hi {
            idx.push(i);
        }
    }
    idx.reverse();
    if idx.len() < opts.min_samples {
        return Err(Error::Fit(format!(
            "{} samples in the fit window of subband {subband}, need {}",
            idx.len(),
            opts.min_samples
        )));
    }
    let xs: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| g[i] - offset).collect();

    let v_cross = interp_index(&v, cross);
    // Initial E_x from the steepest slope near the crossing.
    let c = cross.round() as usize;
    let (a, b) = (c.saturating_sub(2), (c + 2).min(v.len() - 1));
    let slope = (g[b] - g[a]) / (v[b] - v[a]);
    let span_guess = if slope > 0.0 {
        std::f64::consts::FRAC_PI_2 * MEV_PER_VOLT * lever_arm / slope
    } else {
        1.0
    };
    let e_x0 = span_guess.clamp(opts.e_x_bounds.0 * 2.0, opts.e_x_bounds.1 / 2.0);
    let kt = thermal_energy(trace.temperature);
    let scale = MEV_PER_VOLT * lever_arm;
    let (lb, ub) = (opts.e_x_bounds.0.ln(), opts.e_x_bounds.1.ln());

    // Parameters: ln E_x and the riser shift in units of the initial κ scale.
    let resid = |p: &[f64]| -> Vec<f64> {
        let e_x = p[0].clamp(lb, ub).exp();
        let v_r = v_cross + p[1] * e_x0 / scale;
        let theta = kt / e_x;
        xs.iter()
            .zip(&ys)
            .map(|(x, y)| thermal_step_exact(scale * (x - v_r) / e_x, theta)[0] - y)
            .collect()
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for m in &opts.restarts {
        let x0 = [(e_x0 * m).ln().clamp(lb, ub), 0.0];
        let sol = levenberg_marquardt(resid, &x0, &LeastSquaresOptions::default());
        if !sol.cost.is_finite() {
            continue;
        }
        let better = best.as_ref().is_none_or(|(c, _)| sol.cost < *c);
        if better {
            best = Some((sol.cost, sol.x.clone()));
        }
        let rms = (sol.cost / xs.len() as f64).sqrt();
        if sol.converged && rms < opts.good_fit_rms {
            break;
        }
    }
    let (cost, p) = best.ok_or_else(|| Error::Fit("no restart produced a finite fit".into()))?;
    let e_x = p[0].clamp(lb, ub).exp();
    let rms = (cost / xs.len() as f64).sqrt();
    let at_bound = p[0] <= lb + 0.01 || p[0] >= ub - 0.01;
    Ok(SubbandFit {
        subband,
        sweep_direction: trace.sweep_direction,
        e_x,
        v_riser: v_cross + p[1] * e_x0 / scale,
        lever_arm,
        temperature: trace.temperature,
        rms,
        n_samples: xs.len(),
        good: rms < opts.good_fit_rms && !at_bound,
        at_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{DeviceId, TraceMetadata};

    fn step_trace(e_x: f64, alpha: f64, temperature: f64) -> ConductanceTrace {
        let v: Vec<f64> = (0..400).map(|i| -0.7 + i as f64 * 0.0005).collect();
        let theta = thermal_energy(temperature) / e_x;
        let g = v
            .iter()
            .map(|x| thermal_step_exact(1000.0 * alpha * (x + 0.6) / e_x, theta)[0])
            .collect();
        ConductanceTrace {
            gate_voltage: v,
            g_sd: g,
            sweep_direction: SweepDirection::Backward,
            temperature,
            v_sd_dc: 0.0,
            metadata: TraceMetadata {
                device: DeviceId::new(1, 1, 1).unwrap(),
                cooldown: 1,
                illuminated: false,
                lever_arm: alpha,
                width_um: 0.6,
                length_um: 0.2,
            },
        }
    }

    #[test]
    fn recovers_single_step() {
        for (e_x, t) in [(1.0, 0.04), (0.4, 1.4)] {
            let tr = step_trace(e_x, 0.05, t);
            let fit = fit_ex(&tr, 1, &FitWindow::default()).unwrap();
            assert!((fit.e_x - e_x).abs() < 1e-6, "{} vs {e_x}", fit.e_x);
            assert!((fit.v_riser + 0.6).abs() < 1e-8);
            assert!(fit.good && fit.rms < 1e-8);
        }
    }

    #[test]
    fn too_few_samples_is_error() {
        let mut tr = step_trace(1.0, 0.05, 0.04);
        tr.gate_voltage = tr.gate_voltage.iter().step_by(20).copied().collect();
        tr.g_sd = tr.g_sd.iter().step_by(20).copied().collect();
        assert!(matches!(fit_ex(&tr, 1, &FitWindow::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn window_validation() {
        assert!(FitWindow::new(0.5, 0.2).is_err());
        assert!(FitWindow::new(0.02, 0.5).is_ok());
    }
}
