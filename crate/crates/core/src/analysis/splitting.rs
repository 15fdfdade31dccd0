//! Detection of split risers in the transconductance.

use serde::{Deserialize, Serialize};

use super::kappa::KappaTrace;
use crate::numerics::find_peaks;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplittingConfig {
    /// Minimum peak prominence as a fraction of the window maximum.
    pub prominence_fraction: f64,
    /// Minimum peak height as a fraction of the window maximum.
    pub height_fraction: f64,
    /// Lower κ edge of the riser window.
    pub kappa_start: f64,
    /// The window ends where G − (N−1) first reaches this level above κ = 0.
    pub plateau_level: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            prominence_fraction: 0.1,
            height_fraction: 0.2,
            kappa_start: -1.5,
            plateau_level: 0.97,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDetection {
    pub split: bool,
    pub peak_kappas: Vec<f64>,
    pub peak_heights: Vec<f64>,
}

/// Peaks of `tc` qualifying under the prominence and height thresholds.
pub fn detect_riser_splitting(kappa: &[f64], tc: &[f64], cfg: &SplittingConfig) -> SplitDetection {
    let top = tc.iter().fold(0.0f64, |m, v| m.max(*v));
    let mut peak_kappas = Vec::new();
    let mut peak_heights = Vec::new();
    if top > 0.0 {
        for p in find_peaks(tc) {
            if p.prominence >= cfg.prominence_fraction * top && p.height >= cfg.height_fraction * top {
                peak_kappas.push(kappa[p.index]);
                peak_heights.push(p.height);
            }
        }
    }
    SplitDetection { split: peak_kappas.len() >= 2, peak_kappas, peak_heights }
}

/// Index range of the riser window of subband `kt.subband`.
pub fn riser_window(kt: &KappaTrace, cfg: &SplittingConfig) -> std::ops::Range<usize> {
    let offset = (kt.subband - 1) as f64;
    let start = kt.kappa.iter().position(|k| *k >= cfg.kappa_start).unwrap_or(0);
    let end = kt
        .kappa
        .iter()
        .zip(&kt.g)
        .position(|(k, g)| *k > 0.0 && g - offset >= cfg.plateau_level)
        .map(|i| i + 1)
        .unwrap_or(kt.kappa.len());
    start..end.max(start)
}

pub fn detect_in_riser(kt: &KappaTrace, tc: &[f64], cfg: &SplittingConfig) -> SplitDetection {
    let r = riser_window(kt, cfg);
    detect_riser_splitting(&kt.kappa[r.clone()], &tc[r], cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(k: f64, c: f64, w: f64) -> f64 {
        (-(k - c).powi(2) / (2.0 * w * w)).exp()
    }

    #[test]
    fn single_and_double_peaks() {
        let k: Vec<f64> = (0..500).map(|i| -1.0 + i as f64 * 0.01).collect();
        let cfg = SplittingConfig::default();
        let one: Vec<f64> = k.iter().map(|x| bump(*x, 1.0, 0.3)).collect();
        assert!(!detect_riser_splitting(&k, &one, &cfg).split);
        let two: Vec<f64> = k.iter().map(|x| bump(*x, 0.5, 0.2) + 0.6 * bump(*x, 2.5, 0.2)).collect();
        let d = detect_riser_splitting(&k, &two, &cfg);
        assert!(d.split);
        assert!((d.peak_kappas[0] - 0.5).abs() < 0.02 && (d.peak_kappas[1] - 2.5).abs() < 0.02);
    }

    #[test]
    fn small_ripple_is_ignored() {
        let k: Vec<f64> = (0..500).map(|i| -1.0 + i as f64 * 0.01).collect();
        let y: Vec<f64> = k.iter().map(|x| bump(*x, 1.0, 0.3) + 0.05 * bump(*x, 3.0, 0.1)).collect();
        assert!(!detect_riser_splitting(&k, &y, &SplittingConfig::default()).split);
    }
}
