//! Transconductance and conductance suppression relative to the fitted
//! noninteracting reference.

use serde::{Deserialize, Serialize};

use super::fit::SubbandFit;
use super::kappa::KappaTrace;
use crate::error::{Error, Result};
use crate::numerics::interp_linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// TC^0 evaluated at the same κ as the measurement.
    #[default]
    SameKappa,
    /// TC^0 evaluated where the reference conductance equals the measured one.
    MatchedConductance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuppressionConfig {
    pub kappa_window: (f64, f64),
    /// Allowed G − (N−1) at the minimum.
    pub g_window: (f64, f64),
    pub tc0_floor: f64,
    pub g0_floor: f64,
    pub mode: ReferenceMode,
    pub fixed_kappas: Vec<f64>,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        Self {
            kappa_window: (-0.5, 4.0),
            g_window: (0.5, 0.95),
            tc0_floor: 1e-6,
            g0_floor: 0.05,
            mode: ReferenceMode::SameKappa,
            fixed_kappas: vec![1.0, 2.0, 3.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuppressionMinimum {
    pub s_tc: f64,
    pub kappa: f64,
    /// Conductance at the minimum, relative to the subband offset.
    pub g: f64,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionMetrics {
    pub subband: u32,
    pub mode: ReferenceMode,
    pub kappa: Vec<f64>,
    /// `None` where the reference transconductance is below the floor.
    pub s_tc: Vec<Option<f64>>,
    pub tc0: Vec<f64>,
    pub minimum: Option<SuppressionMinimum>,
}

/// Noninteracting single-subband conductance and transconductance of `fit`
/// on the κ axis of `kt`.
pub fn reference_curves(kt: &KappaTrace, fit: &SubbandFit) -> (Vec<f64>, Vec<f64>) {
    kt.kappa
        .iter()
        .map(|k| fit.model(fit.kappa(kt.gate_at(*k))))
        .map(|[g, d]| (g, d))
        .unzip()
}

pub fn suppression_metrics(
    kt: &KappaTrace,
    tc: &[f64],
    fit: &SubbandFit,
    cfg: &SuppressionConfig,
) -> Result<SuppressionMetrics> {
    if tc.len() != kt.kappa.len() {
        return Err(Error::Argument(format!(
            "transconductance has {} samples, κ-trace has {}",
            tc.len(),
            kt.kappa.len()
        )));
    }
    let offset = (kt.subband - 1) as f64;
    let (g0, tc0_same) = reference_curves(kt, fit);
    let tc0: Vec<f64> = match cfg.mode {
        ReferenceMode::SameKappa => tc0_same,
        ReferenceMode::MatchedConductance => kt
            .g
            .iter()
            .map(|g| {
                let rel = g - offset;
                if rel <= g0[0] || rel >= g0[g0.len() - 1] {
                    0.0
                } else {
                    interp_linear(&g0, &tc0_same, rel)
                }
            })
            .collect(),
    };
    let s_tc: Vec<Option<f64>> = tc
        .iter()
        .zip(&tc0)
        .map(|(t, r)| (*r >= cfg.tc0_floor).then(|| t / r))
        .collect();

    let mut minimum: Option<SuppressionMinimum> = None;
    for (i, k) in kt.kappa.iter().enumerate() {
        if *k < cfg.kappa_window.0 || *k > cfg.kappa_window.1 {
            continue;
        }
        let rel = kt.g[i] - offset;
        if rel < cfg.g_window.0 || rel > cfg.g_window.1 {
            continue;
        }
        if let Some(s) = s_tc[i] {
            if minimum.is_none_or(|m| s < m.s_tc) {
                minimum = Some(SuppressionMinimum { s_tc: s, kappa: *k, g: rel, index: i });
            }
        }
    }
    Ok(SuppressionMetrics {
        subband: kt.subband,
        mode: cfg.mode,
        kappa: kt.kappa.clone(),
        s_tc,
        tc0,
        minimum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceSuppression {
    pub kappa: Vec<f64>,
    pub g0: Vec<f64>,
    /// `None` where G^0 is below the floor.
    pub s_g: Vec<Option<f64>>,
    /// (κ, S_G) at the configured fixed positions.
    pub fixed: Vec<(f64, Option<f64>)>,
}

/// S_G = G/G^0 on the first-subband κ axis, with G^0 summed over all
/// fitted subbands.
pub fn conductance_suppression(
    kt: &KappaTrace,
    fits: &[SubbandFit],
    cfg: &SuppressionConfig,
) -> ConductanceSuppression {
    let g0: Vec<f64> = kt
        .kappa
        .iter()
        .map(|k| {
            let v = kt.gate_at(*k);
            fits.iter().map(|f| f.model(f.kappa(v))[0]).sum()
        })
        .collect();
    let s_g: Vec<Option<f64>> = kt
        .g
        .iter()
        .zip(&g0)
        .map(|(g, r)| (*r > cfg.g0_floor).then(|| g / r))
        .collect();
    let fixed = cfg
        .fixed_kappas
        .iter()
        .map(|&k| {
            let inside = k >= kt.kappa[0] && k <= kt.kappa[kt.kappa.len() - 1];
            let i = ((k - kt.kappa[0]) / kt.step).floor() as usize;
            let val = if inside && i + 1 < kt.kappa.len() {
                match (s_g[i], s_g[i + 1]) {
                    (Some(a), Some(b)) => {
                        let t = (k - kt.kappa[i]) / kt.step;
                        Some(a + t * (b - a))
                    }
                    _ => None,
                }
            } else if inside {
                s_g[i]
            } else {
                None
            };
            (k, val)
        })
        .collect();
    ConductanceSuppression { kappa: kt.kappa.clone(), g0, s_g, fixed }
}
