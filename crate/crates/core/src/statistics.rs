//! Cohort-level yields, correlations and scatter tables.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisResult;
use crate::error::{Error, Result};
use crate::numerics::percentile;
use crate::rng;

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Statistics { reason: "pearson needs at least 3 pairs".into(), count: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Statistics { reason: "correlation undefined for constant input".into(), count: x.len() });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Keeps only the pairs where both values are present and finite.
pub fn complete_pairs(x: &[Option<f64>], y: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .zip(y)
        .filter_map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => Some((*a, *b)),
            _ => None,
        })
        .unzip()
}

/// Percentile bootstrap interval of the Pearson coefficient. Resamples with
/// constant columns are skipped.
pub fn bootstrap_ci(x: &[f64], y: &[f64], resamples: usize, level: f64, seed: u64) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 3 || resamples == 0 {
        return None;
    }
    let mut r = rng::stream(seed, "bootstrap", &[n as u64]);
    let mut rhos = Vec::with_capacity(resamples);
    let (mut xs, mut ys) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..resamples {
        for k in 0..n {
            let i = r.random_range(0..n);
            xs[k] = x[i];
            ys[k] = y[i];
        }
        if let Ok(rho) = pearson(&xs, &ys) {
            rhos.push(rho);
        }
    }
    let tail = 50.0 * (1.0 - level);
    Some((percentile(&rhos, tail)?, percentile(&rhos, 100.0 - tail)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatisticsConfig {
    /// A device counts as suppressed when S_TC^0.7 < 1 − k·σ_S.
    pub sigma_multiplier: f64,
    /// Lower bound on σ_S, covering smoothing bias on noiseless traces.
    pub sigma_floor: f64,
    pub fixed_kappas: Vec<f64>,
    pub min_devices: usize,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        Self {
            sigma_multiplier: 3.0,
            sigma_floor: 0.01,
            fixed_kappas: vec![1.0, 2.0, 3.0, 4.0],
            min_devices: 10,
            bootstrap_resamples: 1000,
            confidence: 0.95,
            seed: 1,
        }
    }
}

impl StatisticsConfig {
    pub fn is_suppressed(&self, r: &AnalysisResult) -> bool {
        match r.s_tc_07.first().copied().flatten() {
            Some(s) => s < 1.0 - self.sigma_multiplier * r.s_tc_07_sigma.unwrap_or(0.0).max(self.sigma_floor),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Yields {
    pub n_measured: usize,
    pub n_good_fit: usize,
    pub n_suppressed: usize,
    pub n_riser_split: usize,
    pub y_tc_07: f64,
    pub y_rs_07: f64,
}

/// Suppression and riser-splitting yields over good-fit devices.
pub fn yields(results: &[AnalysisResult], cfg: &StatisticsConfig) -> Result<Yields> {
    if results.is_empty() {
        return Err(Error::Argument("yields need at least one result".into()));
    }
    let good: Vec<&AnalysisResult> = results.iter().filter(|r| r.good_fit).collect();
    let n_suppressed = good.iter().filter(|r| cfg.is_suppressed(r)).count();
    let n_riser_split = good.iter().filter(|r| r.riser_split == Some(true)).count();
    let frac = |k: usize| if good.is_empty() { 0.0 } else { k as f64 / good.len() as f64 };
    Ok(Yields {
        n_measured: results.len(),
        n_good_fit: good.len(),
        n_suppressed,
        n_riser_split,
        y_tc_07: frac(n_suppressed),
        y_rs_07: frac(n_riser_split),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub x: String,
    pub y: String,
    pub kappa: Option<f64>,
    pub rho: f64,
    pub n: usize,
    pub ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSuite {
    /// ρ(1 − S_TC^0.7, √U_E).
    pub depth_vs_sqrt_ue: Option<Correlation>,
    /// ρ(S_G(κ), E_x) per fixed κ.
    pub s_g_vs_e_x: Vec<Correlation>,
    /// ρ(S_G(κ), 1/U_E) per fixed κ.
    pub s_g_vs_inv_ue: Vec<Correlation>,
}

fn s_g_at(r: &AnalysisResult, kappa: f64) -> Option<f64> {
    r.s_g_fixed.iter().find(|(k, _)| (k - kappa).abs() < 1e-9).and_then(|(_, v)| *v)
}

fn correlate(
    x: &[Option<f64>],
    y: &[Option<f64>],
    names: (&str, &str),
    kappa: Option<f64>,
    cfg: &StatisticsConfig,
) -> Option<Correlation> {
    let (a, b) = complete_pairs(x, y);
    let rho = pearson(&a, &b).ok()?;
    Some(Correlation {
        x: names.0.into(),
        y: names.1.into(),
        kappa,
        rho,
        n: a.len(),
        ci: bootstrap_ci(&a, &b, cfg.bootstrap_resamples, cfg.confidence, cfg.seed),
    })
}

pub fn correlation_suite(results: &[AnalysisResult], cfg: &StatisticsConfig) -> Result<CorrelationSuite> {
    let good: Vec<&AnalysisResult> = results
        .iter()
        .filter(|r| r.good_fit && r.u_e().is_some())
        .collect();
    if good.len() < cfg.min_devices {
        return Err(Error::Statistics {
            reason: format!("need {} good-fit devices with E_x and ΔE", cfg.min_devices),
            count: good.len(),
        });
    }
    let ue: Vec<Option<f64>> = good.iter().map(|r| r.u_e()).collect();
    let sqrt_ue: Vec<Option<f64>> = ue.iter().map(|u| u.map(f64::sqrt)).collect();
    let inv_ue: Vec<Option<f64>> = ue.iter().map(|u| u.map(|v| 1.0 / v)).collect();
    let e_x: Vec<Option<f64>> = good.iter().map(|r| r.e_x_forward.first().copied().flatten()).collect();
    let depth: Vec<Option<f64>> = good
        .iter()
        .map(|r| r.s_tc_07.first().copied().flatten().map(|s| 1.0 - s))
        .collect();
    let depth_vs_sqrt_ue = correlate(&depth, &sqrt_ue, ("1-S_TC^0.7", "sqrt(U_E)"), None, cfg);
    let mut s_g_vs_e_x = Vec::new();
    let mut s_g_vs_inv_ue = Vec::new();
    for &k in &cfg.fixed_kappas {
        let s_g: Vec<Option<f64>> = good.iter().map(|r| s_g_at(r, k)).collect();
        if let Some(c) = correlate(&s_g, &e_x, ("S_G", "E_x"), Some(k), cfg) {
            s_g_vs_e_x.push(c);
        }
        if let Some(c) = correlate(&s_g, &inv_ue, ("S_G", "1/U_E"), Some(k), cfg) {
            s_g_vs_inv_ue.push(c);
        }
    }
    Ok(CorrelationSuite { depth_vs_sqrt_ue, s_g_vs_e_x, s_g_vs_inv_ue })
}

/// One device measured in two cooldowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub device: String,
    pub first: f64,
    pub second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryRow {
    pub device: String,
    pub cooldown: u32,
    pub illuminated: bool,
    pub length_um: f64,
    pub width_um: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterTables {
    /// Cooldowns compared by the pair tables.
    pub cooldowns: Option<(u32, u32)>,
    pub e_x_cooldowns: Vec<PairRow>,
    pub delta_e_cooldowns: Vec<PairRow>,
    pub e_x_vs_length: Vec<GeometryRow>,
    pub delta_e_vs_length: Vec<GeometryRow>,
}

fn pair_rows(
    results: &[AnalysisResult],
    (a, b): (u32, u32),
    value: impl Fn(&AnalysisResult) -> Option<f64>,
) -> Vec<PairRow> {
    let pick = |c: u32| {
        results
            .iter()
            .filter(move |r| r.cooldown == c && !r.illuminated && r.good_fit)
            .filter_map(|r| value(r).map(|v| (r.device, v)))
    };
    let second: Vec<_> = pick(b).collect();
    pick(a)
        .filter_map(|(d, v)| {
            second
                .iter()
                .find(|(e, _)| *e == d)
                .map(|(_, w)| PairRow { device: d.to_string(), first: v, second: *w })
        })
        .collect()
}

pub fn scatter_tables(results: &[AnalysisResult]) -> ScatterTables {
    let cooldowns: Vec<u32> = results
        .iter()
        .filter(|r| !r.illuminated)
        .map(|r| r.cooldown)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pair = (cooldowns.len() >= 2).then(|| (cooldowns[0], cooldowns[1]));
    let e_x = |r: &AnalysisResult| r.e_x_forward.first().copied().flatten();
    let d_e = |r: &AnalysisResult| r.delta_e;
    let geometry = |value: &dyn Fn(&AnalysisResult) -> Option<f64>| -> Vec<GeometryRow> {
        results
            .iter()
            .filter(|r| r.good_fit)
            .filter_map(|r| {
                value(r).map(|v| GeometryRow {
                    device: r.device.to_string(),
                    cooldown: r.cooldown,
                    illuminated: r.illuminated,
                    length_um: r.length_um,
                    width_um: r.width_um,
                    value: v,
                })
            })
            .collect()
    };
    ScatterTables {
        cooldowns: pair,
        e_x_cooldowns: pair.map(|p| pair_rows(results, p, e_x)).unwrap_or_default(),
        delta_e_cooldowns: pair.map(|p| pair_rows(results, p, d_e)).unwrap_or_default(),
        e_x_vs_length: geometry(&e_x),
        delta_e_vs_length: geometry(&d_e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CooldownYields {
    pub cooldown: u32,
    pub illuminated: bool,
    pub temperature: f64,
    pub yields: Yields,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub yields: Yields,
    pub by_cooldown: Vec<CooldownYields>,
    pub correlations: Option<CorrelationSuite>,
    /// Why correlations are missing, when they are.
    pub correlation_error: Option<String>,
    pub scatter: ScatterTables,
}

pub fn cohort_report(results: &[AnalysisResult], cfg: &StatisticsConfig) -> Result<CohortReport> {
    let total = yields(results, cfg)?;
    let mut keys: Vec<(u32, bool, u64)> = results
        .iter()
        .map(|r| (r.cooldown, r.illuminated, r.temperature.to_bits()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    keys.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(f64::from_bits(a.2).total_cmp(&f64::from_bits(b.2))));
    let by_cooldown = keys
        .into_iter()
        .map(|(c, il, t)| {
            let subset: Vec<AnalysisResult> = results
                .iter()
                .filter(|r| r.cooldown == c && r.illuminated == il && r.temperature.to_bits() == t)
                .cloned()
                .collect();
            yields(&subset, cfg).map(|y| CooldownYields {
                cooldown: c,
                illuminated: il,
                temperature: f64::from_bits(t),
                yields: y,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (correlations, correlation_error) = match correlation_suite(results, cfg) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(CohortReport { yields: total, by_cooldown, correlations, correlation_error, scatter: scatter_tables(results) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pearson_trivial_cases() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // Σdxdy = 10, Σdx² = 10, Σdy² = 14.8
        let r = pearson(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 6.0]).unwrap();
        assert!((r - 10.0 / 148f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn pearson_rejects_constant_and_short() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Statistics { .. })));
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pairwise_complete_drops_missing() {
        let (a, b) = complete_pairs(&[Some(1.0), None, Some(3.0)], &[Some(2.0), Some(5.0), None]);
        assert_eq!((a, b), (vec![1.0], vec![2.0]));
    }

    #[test]
    fn bootstrap_interval_brackets_estimate() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v + 10.0 * (v * 1.3).sin()).collect();
        let rho = pearson(&x, &y).unwrap();
        let (lo, hi) = bootstrap_ci(&x, &y, 500, 0.95, 3).unwrap();
        assert!(lo <= rho && rho <= hi && hi <= 1.0);
        assert_eq!(bootstrap_ci(&x, &y, 500, 0.95, 3), Some((lo, hi)));
    }

    #[test]
    fn yields_of_empty_input_is_error() {
        assert!(yields(&[], &StatisticsConfig::default()).is_err());
    }

    fn sample() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (5usize..200).prop_flat_map(|n| {
            (prop::collection::vec(-100.0..100.0f64, n), prop::collection::vec(-100.0..100.0f64, n))
        })
    }

    proptest! {
        #[test]
        fn pearson_is_affine_invariant((x, y) in sample(), a in 0.1..10.0f64, b in -50.0..50.0f64, c in -10.0..-0.1f64) {
            let Ok(r) = pearson(&x, &y) else { return Ok(()) };
            let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let ys: Vec<f64> = y.iter().map(|v| c * v - b).collect();
            prop_assert!((pearson(&xs, &ys).unwrap() + r).abs() < 1e-9);
            prop_assert!(r.abs() <= 1.0 + 1e-12);
            prop_assert!((pearson(&y, &x).unwrap() - r).abs() < 1e-14);
        }
    }
}
