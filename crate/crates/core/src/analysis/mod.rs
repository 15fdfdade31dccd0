//! Extraction pipeline: series-resistance calibration, E_x fits, κ
//! transform, suppression metrics, riser splitting and bias spectroscopy.

mod calibrate;
mod fit;
mod kappa;
mod spectroscopy;
mod splitting;
mod suppression;

pub use calibrate::{
    calibrate_series_resistance, calibrate_with, correct_trace, remove_series_resistance, Calibration,
    PlateauCriteria,
};
pub use fit::{fit_ex, fit_ex_with, FitOptions, FitWindow, SubbandFit};
pub use kappa::{to_kappa, to_kappa_with, transconductance, transconductance_noise_gain, transconductance_of, KappaTrace, Smoothing};
pub use spectroscopy::{correct_dc_bias, extract_subband_spacing, extract_with, SpectroscopyConfig, SubbandSpacing};
pub use splitting::{detect_in_riser, detect_riser_splitting, riser_window, SplitDetection, SplittingConfig};
pub use suppression::{
    conductance_suppression, reference_curves, suppression_metrics, ConductanceSuppression, ReferenceMode,
    SuppressionConfig, SuppressionMetrics, SuppressionMinimum,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::synthesis::{ConductanceTrace, DeviceId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub plateau: PlateauCriteria,
    pub fit_window: FitWindow,
    pub fit: FitOptions,
    pub n_subbands: u32,
    /// κ grid spacing in units of the mean gate sample spacing.
    pub kappa_decimation: usize,
    pub smoothing: Smoothing,
    pub suppression: SuppressionConfig,
    pub splitting: SplittingConfig,
    pub spectroscopy: SpectroscopyConfig,
    /// κ range of the curves kept in [`AnalysisResult::curves`].
    pub curve_window: (f64, f64),
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            plateau: PlateauCriteria::default(),
            fit_window: FitWindow::default(),
            fit: FitOptions::default(),
            n_subbands: 3,
            kappa_decimation: 4,
            smoothing: Smoothing::default(),
            suppression: SuppressionConfig::default(),
            splitting: SplittingConfig::default(),
            spectroscopy: SpectroscopyConfig::default(),
            curve_window: (-1.0, 5.0),
        }
    }
}

/// Per-subband κ-domain results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandAnalysis {
    pub fit: SubbandFit,
    pub kappa: KappaTrace,
    pub transconductance: Vec<f64>,
    pub suppression: SuppressionMetrics,
    /// One-sigma noise on S_TC at the minimum.
    pub s_tc_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAnalysis {
    pub calibration: Calibration,
    pub subbands: Vec<SubbandAnalysis>,
    /// Subbands whose fit or transform failed, with the reason.
    pub failures: Vec<(u32, String)>,
    pub conductance_suppression: Option<ConductanceSuppression>,
    pub splitting: Option<SplitDetection>,
}

impl TraceAnalysis {
    pub fn subband(&self, n: u32) -> Option<&SubbandAnalysis> {
        self.subbands.iter().find(|s| s.fit.subband == n)
    }

    /// True when the first subband fit passed the quality gate.
    pub fn good_fit(&self) -> bool {
        self.subband(1).is_some_and(|s| s.fit.good)
    }
}

fn analyze_subband(trace: &ConductanceTrace, n: u32, noise: f64, cfg: &AnalysisConfig) -> Result<SubbandAnalysis> {
    let fit = fit_ex_with(trace, n, &cfg.fit_window, trace.metadata.lever_arm, &cfg.fit)?;
    let kt = to_kappa_with(trace, &fit, cfg.kappa_decimation)?;
    let tc = transconductance(&kt, &cfg.smoothing)?;
    let sup = suppression_metrics(&kt, &tc, &fit, &cfg.suppression)?;
    let gain = transconductance_noise_gain(&cfg.smoothing)?;
    let s_tc_sigma = sup.minimum.map(|m| noise * gain / kt.step / sup.tc0[m.index]);
    Ok(SubbandAnalysis { fit, kappa: kt, transconductance: tc, suppression: sup, s_tc_sigma })
}

/// Full single-trace analysis. Calibration failure is an error; failures of
/// individual subbands are recorded and skipped.
pub fn analyze_trace(trace: &ConductanceTrace, cfg: &AnalysisConfig) -> Result<TraceAnalysis> {
    let calibration = calibrate_with(trace, &cfg.plateau)?;
    let corrected = &calibration.corrected;
    let mut subbands = Vec::new();
    let mut failures = Vec::new();
    for n in 1..=cfg.n_subbands {
        match analyze_subband(corrected, n, calibration.noise_sigma, cfg) {
            Ok(s) => subbands.push(s),
            Err(e) => failures.push((n, e.to_string())),
        }
    }
    let first = subbands.iter().find(|s| s.fit.subband == 1);
    let conductance_suppression = first.map(|s| {
        let fits: Vec<SubbandFit> = subbands.iter().map(|s| s.fit.clone()).collect();
        conductance_suppression(&s.kappa, &fits, &cfg.suppression)
    });
    let splitting = first.map(|s| detect_in_riser(&s.kappa, &s.transconductance, &cfg.splitting));
    Ok(TraceAnalysis { calibration, subbands, failures, conductance_suppression, splitting })
}

/// κ-domain curves of one subband, cut to the configured window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandCurve {
    pub subband: u32,
    pub kappa: Vec<f64>,
    /// Corrected conductance, G_Q units, without subband offset removal.
    pub g: Vec<f64>,
    pub s_tc: Vec<Option<f64>>,
    /// S_G against the summed reference, first subband only.
    pub s_g: Vec<Option<f64>>,
}

/// Compact per-device record used for statistics and the results index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub device: DeviceId,
    pub cooldown: u32,
    pub illuminated: bool,
    pub temperature: f64,
    pub width_um: f64,
    pub length_um: f64,
    pub series_resistance: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub good_fit: bool,
    /// E_x per subband (meV) from the forward sweep.
    pub e_x_forward: Vec<Option<f64>>,
    pub e_x_backward: Vec<Option<f64>>,
    pub fit_rms: Vec<Option<f64>>,
    pub delta_e: Option<f64>,
    pub lever_arm_estimate: Option<f64>,
    pub s_tc_07: Vec<Option<f64>>,
    pub s_tc_07_sigma: Option<f64>,
    pub kappa_tc_07: Option<f64>,
    pub g_tc_07: Option<f64>,
    pub riser_split: Option<bool>,
    pub split_peaks: Vec<f64>,
    /// S_G at the fixed κ positions.
    pub s_g_fixed: Vec<(f64, Option<f64>)>,
    pub curves: Vec<SubbandCurve>,
    pub errors: Vec<String>,
}

impl AnalysisResult {
    /// Interaction strength U_E = ΔE/E_x of the first subband.
    pub fn u_e(&self) -> Option<f64> {
        match (self.delta_e, self.e_x_forward.first().copied().flatten()) {
            (Some(d), Some(e)) if e > 0.0 => Some(d / e),
            _ => None,
        }
    }
}

/// Analyzes one device from its forward trace, optional backward trace and
/// optional forward bias family.
pub fn analyze_device(
    forward: &ConductanceTrace,
    backward: Option<&ConductanceTrace>,
    family: Option<&[ConductanceTrace]>,
    cfg: &AnalysisConfig,
) -> AnalysisResult {
    let m = &forward.metadata;
    let mut out = AnalysisResult {
        device: m.device,
        cooldown: m.cooldown,
        illuminated: m.illuminated,
        temperature: forward.temperature,
        width_um: m.width_um,
        length_um: m.length_um,
        series_resistance: None,
        noise_sigma: None,
        good_fit: false,
        e_x_forward: vec![None; cfg.n_subbands as usize],
        e_x_backward: vec![None; cfg.n_subbands as usize],
        fit_rms: vec![None; cfg.n_subbands as usize],
        delta_e: None,
        lever_arm_estimate: None,
        s_tc_07: vec![None; cfg.n_subbands as usize],
        s_tc_07_sigma: None,
        kappa_tc_07: None,
        g_tc_07: None,
        riser_split: None,
        split_peaks: vec![],
        s_g_fixed: vec![],
        curves: vec![],
        errors: vec![],
    };
    let fwd = match analyze_trace(forward, cfg) {
        Ok(a) => a,
        Err(e) => {
            out.errors.push(format!("forward: {e}"));
            return out;
        }
    };
    out.series_resistance = Some(fwd.calibration.series_resistance);
    out.noise_sigma = Some(fwd.calibration.noise_sigma);
    out.good_fit = fwd.good_fit();
    for s in &fwd.subbands {
        let i = (s.fit.subband - 1) as usize;
        out.e_x_forward[i] = Some(s.fit.e_x);
        out.fit_rms[i] = Some(s.fit.rms);
        out.s_tc_07[i] = s.suppression.minimum.map(|m| m.s_tc);
    }
    for (n, e) in &fwd.failures {
        out.errors.push(format!("forward subband {n}: {e}"));
    }
    if let Some(s) = fwd.subband(1) {
        if let Some(m) = s.suppression.minimum {
            out.kappa_tc_07 = Some(m.kappa);
            out.g_tc_07 = Some(m.g);
        }
        out.s_tc_07_sigma = s.s_tc_sigma;
    }
    if let Some(d) = &fwd.splitting {
        out.riser_split = Some(d.split);
        out.split_peaks = d.peak_kappas.clone();
    }
    if let Some(c) = &fwd.conductance_suppression {
        out.s_g_fixed = c.fixed.clone();
    }
    let (lo, hi) = cfg.curve_window;
    for s in &fwd.subbands {
        let keep: Vec<usize> = (0..s.kappa.kappa.len())
            .filter(|&i| s.kappa.kappa[i] >= lo && s.kappa.kappa[i] <= hi)
            .collect();
        let s_g = match (&fwd.conductance_suppression, s.fit.subband) {
            (Some(c), 1) => keep.iter().map(|&i| c.s_g[i]).collect(),
            _ => vec![],
        };
        out.curves.push(SubbandCurve {
            subband: s.fit.subband,
            kappa: keep.iter().map(|&i| s.kappa.kappa[i]).collect(),
            g: keep.iter().map(|&i| s.kappa.g[i]).collect(),
            s_tc: keep.iter().map(|&i| s.suppression.s_tc[i]).collect(),
            s_g,
        });
    }
    if let Some(b) = backward {
        match calibrate_with(b, &cfg.plateau) {
            Ok(cal) => {
                for n in 1..=cfg.n_subbands {
                    match fit_ex_with(&cal.corrected, n, &cfg.fit_window, b.metadata.lever_arm, &cfg.fit) {
                        Ok(f) => out.e_x_backward[(n - 1) as usize] = Some(f.e_x),
                        Err(e) => out.errors.push(format!("backward subband {n}: {e}")),
                    }
                }
            }
            Err(e) => out.errors.push(format!("backward: {e}")),
        }
    }
    if let Some(fam) = family {
        match extract_with(fam, fwd.calibration.series_resistance, &cfg.spectroscopy) {
            Ok(s) => {
                out.delta_e = Some(s.delta_e);
                out.lever_arm_estimate = Some(s.lever_arm_estimate);
            }
            Err(e) => out.errors.push(format!("spectroscopy: {e}")),
        }
    }
    out
}
