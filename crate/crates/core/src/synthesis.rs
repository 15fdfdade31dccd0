//! Synthetic devices, traces and cohorts.
//!
//! A device's intrinsic conductance is `Σ_N g(κ_h^N(κ - Δ_N))`: every
//! subband sees the thermally broadened saddle step through its own
//! first-order Hartree map, with the interaction scaled by a per-subband
//! factor. Measured traces add the series resistance (two-terminal
//! division, self-consistent at finite DC bias) and white Gaussian noise.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::transport::{SaddlePotential, ThermalState, ThermalStep};
use crate::units::{thermal_energy, G_Q_SIEMENS, MEV_PER_VOLT};
use crate::vanhove::{
    build_barrier_with, ldos_ridge_on, required_sites, BarrierOptions, HartreeMap, KappaGrid,
    LdosCurve,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceId {
    pub chip: u8,
    pub row: u8,
    pub column: u8,
}

impl DeviceId {
    pub fn new(chip: u8, row: u8, column: u8) -> Result<Self> {
        if !(1..=16).contains(&row) || !(1..=16).contains(&column) || chip == 0 {
            return Err(Error::Argument(format!(
                "device id out of range: chip {chip}, row {row}, column {column}"
            )));
        }
        Ok(Self { chip, row, column })
    }
}

impl std::fmt::Display for DeviceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "S{}-D({},{})", self.chip, self.row, self.column)
    }
}

/// Forward sweeps run towards pinch-off (decreasing gate voltage), backward
/// sweeps away from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepDirection {
    Forward,
    Backward,
}

impl SweepDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepDirection::Forward => "forward",
            SweepDirection::Backward => "backward",
        }
    }
}

impl std::str::FromStr for SweepDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Self::Forward),
            "backward" => Ok(Self::Backward),
            other => Err(Error::Argument(format!("unknown sweep direction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleDevice {
    pub id: DeviceId,
    pub width_um: f64,
    pub length_um: f64,
    pub e_x: f64,
    pub e_y: f64,
    pub lever_arm: f64,
    /// Gate voltage of the first riser, before any sweep hysteresis.
    pub v_riser: f64,
    /// Bare interaction U in meV.
    pub u: f64,
    pub series_resistance: f64,
    pub functional: bool,
}

impl SaddleDevice {
    pub fn potential(&self) -> Result<SaddlePotential> {
        SaddlePotential::new(self.e_x, self.e_y, self.lever_arm, self.v_riser)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub device: DeviceId,
    pub cooldown: u32,
    pub illuminated: bool,
    /// Nominal lever arm recorded with the measurement.
    pub lever_arm: f64,
    #[serde(default)]
    pub width_um: f64,
    #[serde(default)]
    pub length_um: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceTrace {
    pub gate_voltage: Vec<f64>,
    /// Measured conductance in units of G_Q.
    pub g_sd: Vec<f64>,
    pub sweep_direction: SweepDirection,
    pub temperature: f64,
    pub v_sd_dc: f64,
    pub metadata: TraceMetadata,
}

impl ConductanceTrace {
    pub fn validate(&self) -> Result<()> {
        let n = self.gate_voltage.len();
        if n < 2 || self.g_sd.len() != n {
            return Err(Error::Argument(format!(
                "trace needs two equal-length arrays of at least 2 samples (got {n} and {})",
                self.g_sd.len()
            )));
        }
        let monotone = match self.sweep_direction {
            SweepDirection::Forward => self.gate_voltage.windows(2).all(|w| w[1] < w[0]),
            SweepDirection::Backward => self.gate_voltage.windows(2).all(|w| w[1] > w[0]),
        };
        if !monotone {
            return Err(Error::Argument(
                "gate voltage must be strictly monotone in the sweep direction".into(),
            ));
        }
        Ok(())
    }

    /// Samples ordered by increasing gate voltage.
    pub fn ascending(&self) -> (Vec<f64>, Vec<f64>) {
        match self.sweep_direction {
            SweepDirection::Backward => (self.gate_voltage.clone(), self.g_sd.clone()),
            SweepDirection::Forward => (
                self.gate_voltage.iter().rev().copied().collect(),
                self.g_sd.iter().rev().copied().collect(),
            ),
        }
    }
}

/// Parameters of the tight-binding interaction model used for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InteractionModel {
    pub hopping: f64,
    pub barrier: BarrierOptions,
    pub grid: KappaGrid,
    /// Temperature at which the LDOS ridge (and hence U_eff) is evaluated.
    pub reference_temperature: f64,
    /// U_N / U for N = 1, 2, ...; missing entries are zero.
    pub subband_factors: Vec<f64>,
}

impl Default for InteractionModel {
    fn default() -> Self {
        Self {
            hopping: 100.0,
            barrier: BarrierOptions::default(),
            grid: KappaGrid::default(),
            reference_temperature: 0.04,
            subband_factors: vec![1.0, 0.5, 0.03],
        }
    }
}

impl InteractionModel {
    pub fn ldos_curve(&self, e_x: f64, e_y: f64) -> Result<LdosCurve> {
        let n = required_sites(e_x, self.hopping, self.barrier.floor_ex, 20);
        let profile = build_barrier_with(e_x, e_y, 0.0, n, self.hopping, self.barrier)?;
        ldos_ridge_on(&profile, 0.0, self.reference_temperature, &self.grid)
    }

    /// Bare U (meV) that gives the first subband a peak U_eff of `target`.
    pub fn u_for_peak(&self, e_x: f64, e_y: f64, target: f64) -> Result<f64> {
        let curve = self.ldos_curve(e_x, e_y)?;
        let f1 = self.subband_factors.first().copied().unwrap_or(0.0);
        if f1 <= 0.0 {
            return Err(Error::Configuration("first subband factor must be positive".into()));
        }
        Ok(target / (curve.ldos_max * f1))
    }

    pub fn factor(&self, n: u32) -> f64 {
        self.subband_factors.get(n as usize - 1).copied().unwrap_or(0.0)
    }
}

/// Sampling of the gate sweep, expressed in the device's own κ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub kappa_start: f64,
    /// Extent past the last riser.
    pub kappa_margin: f64,
    pub kappa_step: f64,
    /// Rigid shift of the riser gate voltage for backward sweeps (V).
    pub hysteresis: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kappa_start: -3.0,
            kappa_margin: 2.5,
            kappa_step: 0.01,
            hysteresis: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub n_subbands: u32,
    pub interaction: InteractionModel,
    pub sweep: SweepConfig,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            n_subbands: 3,
            interaction: InteractionModel::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Precomputed interaction maps of one device.
///
/// The device κ used throughout (`kappa`) is shifted so that the intrinsic
/// conductance crosses 0.5 G_Q at κ = 0 at the reference temperature; that
/// point is the device's `v_riser`.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    pub device: SaddleDevice,
    pub pot: SaddlePotential,
    n_subbands: u32,
    maps: Vec<HartreeMap>,
    offset: f64,
    sweep: SweepConfig,
}

impl DeviceModel {
    pub fn new(device: &SaddleDevice, cfg: &SynthesisConfig) -> Result<Self> {
        if !device.functional {
            return Err(Error::DeviceDefect(device.id.to_string()));
        }
        if cfg.n_subbands < 1 {
            return Err(Error::Configuration("n_subbands must be >= 1".into()));
        }
        let pot = device.potential()?;
        if !(device.u >= 0.0) || !(device.series_resistance >= 0.0) {
            return Err(Error::Argument("U and series resistance must be >= 0".into()));
        }
        let curve = cfg.interaction.ldos_curve(device.e_x, device.e_y)?;
        let base = HartreeMap::from_curve(&curve, device.u)?;
        let maps = (1..=cfg.n_subbands)
            .map(|n| base.scaled(cfg.interaction.factor(n)))
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self {
            device: device.clone(),
            pot,
            n_subbands: cfg.n_subbands,
            maps,
            offset: 0.0,
            sweep: cfg.sweep.clone(),
        };
        let step = model.thermal_step(cfg.interaction.reference_temperature)?;
        model.offset = model.find_half_crossing(&step);
        Ok(model)
    }

    pub fn n_subbands(&self) -> u32 {
        self.n_subbands
    }

    pub fn thermal_step(&self, temperature: f64) -> Result<ThermalStep> {
        ThermalStep::new(thermal_energy(temperature) / self.pot.e_x)
    }

    fn find_half_crossing(&self, step: &ThermalStep) -> f64 {
        let bare = |k: f64| -> f64 {
            (1..=self.n_subbands)
                .map(|n| {
                    let m = &self.maps[n as usize - 1];
                    step.value(m.kappa_h(k - self.pot.riser_offset(n)))
                })
                .sum()
        };
        let (mut lo, mut hi) = (-20.0, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if bare(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// κ at which the noninteracting step of subband `n` is evaluated.
    pub fn kappa_h(&self, n: u32, kappa: f64) -> f64 {
        self.maps[n as usize - 1].kappa_h(kappa + self.offset - self.pot.riser_offset(n))
    }

    pub fn u_eff(&self, n: u32, kappa: f64) -> f64 {
        self.maps[n as usize - 1].u_eff_at(kappa + self.offset - self.pot.riser_offset(n))
    }

    pub fn u_eff_max(&self, n: u32) -> f64 {
        self.maps[n as usize - 1].u_eff_max()
    }

    pub fn hartree_map(&self, n: u32) -> &HartreeMap {
        &self.maps[n as usize - 1]
    }

    /// Intrinsic zero-bias conductance.
    pub fn conductance(&self, kappa: f64, step: &ThermalStep) -> f64 {
        (1..=self.n_subbands)
            .map(|n| step.value(self.kappa_h(n, kappa)))
            .sum()
    }

    /// Exact dG/dκ of the intrinsic conductance, `Σ_N g'(κ_h^N)(1 - U_N)`.
    pub fn transconductance(&self, kappa: f64, step: &ThermalStep) -> f64 {
        (1..=self.n_subbands)
            .map(|n| step.slope(self.kappa_h(n, kappa)) * (1.0 - self.u_eff(n, kappa)))
            .sum()
    }

    /// Noninteracting TC^0 evaluated at each subband's κ_h.
    pub fn transconductance_reference(&self, kappa: f64, step: &ThermalStep) -> f64 {
        (1..=self.n_subbands)
            .map(|n| step.slope(self.kappa_h(n, kappa)))
            .sum()
    }

    pub fn gate_at(&self, kappa: f64, sweep: SweepDirection) -> f64 {
        self.riser_gate(sweep) + kappa * self.pot.e_x / (self.pot.lever_arm * MEV_PER_VOLT)
    }

    pub fn kappa_at(&self, gate: f64, sweep: SweepDirection) -> f64 {
        (gate - self.riser_gate(sweep)) * self.pot.lever_arm * MEV_PER_VOLT / self.pot.e_x
    }

    fn riser_gate(&self, sweep: SweepDirection) -> f64 {
        match sweep {
            SweepDirection::Forward => self.pot.v_riser,
            SweepDirection::Backward => self.pot.v_riser + self.sweep.hysteresis,
        }
    }

    /// Device κ values sampled by a sweep, in sweep order.
    pub fn kappa_samples(&self, sweep: SweepDirection) -> Vec<f64> {
        let s = &self.sweep;
        let end = self.pot.riser_offset(self.n_subbands) + s.kappa_margin;
        let n = ((end - s.kappa_start) / s.kappa_step).floor() as usize + 1;
        let mut k: Vec<f64> = (0..n).map(|i| s.kappa_start + i as f64 * s.kappa_step).collect();
        if sweep == SweepDirection::Forward {
            k.reverse();
        }
        k
    }

    fn metadata(&self, cooldown: u32, illuminated: bool) -> TraceMetadata {
        TraceMetadata {
            device: self.device.id,
            cooldown,
            illuminated,
            lever_arm: self.device.lever_arm,
            width_um: self.device.width_um,
            length_um: self.device.length_um,
        }
    }

    fn bias_table(&self, step: &ThermalStep, kappas: &[f64], max_shift: f64) -> BiasTable {
        let lo = kappas.iter().cloned().fold(f64::INFINITY, f64::min) - max_shift - 1.0;
        let hi = kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + max_shift + 1.0;
        let h = 0.002;
        let n = ((hi - lo) / h).ceil() as usize + 1;
        let g: Vec<f64> = (0..n).map(|i| self.conductance(lo + i as f64 * h, step)).collect();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 1..n {
            acc += 0.5 * h * (g[i] + g[i - 1]);
            cum.push(acc);
        }
        BiasTable {
            lo,
            h,
            g,
            cum,
            n_subbands: self.n_subbands as f64,
        }
    }

    /// Biased differential conductance with the symmetric bias split.
    pub fn conductance_biased(&self, kappa: f64, v_sd: f64, step: &ThermalStep) -> f64 {
        let s = 0.5 * v_sd * MEV_PER_VOLT / self.pot.e_x;
        0.5 * (self.conductance(kappa + s, step) + self.conductance(kappa - s, step))
    }

    /// Solves `v_dc = v_sd + R_s I(v_sd)` for the bias across the device.
    pub fn internal_bias(&self, kappa: f64, v_dc: f64, step: &ThermalStep) -> f64 {
        let table = self.bias_table(step, &[kappa], bias_shift(v_dc, self.pot.e_x));
        self.solve_bias(&table, kappa, v_dc, step)
    }

    fn solve_bias(&self, table: &BiasTable, kappa: f64, v_dc: f64, step: &ThermalStep) -> f64 {
        let r = self.device.series_resistance * G_Q_SIEMENS;
        if v_dc == 0.0 || r == 0.0 {
            return v_dc;
        }
        let e_x = self.pot.e_x;
        let current = |v: f64| {
            let s = 0.5 * v * MEV_PER_VOLT / e_x;
            (table.integral(kappa + s) - table.integral(kappa - s)) * e_x / MEV_PER_VOLT
        };
        let mut v = v_dc / (1.0 + r * self.conductance(kappa, step));
        for _ in 0..50 {
            let f = v + r * current(v) - v_dc;
            let df = 1.0 + r * self.conductance_biased(kappa, v, step);
            let dv = f / df;
            v -= dv;
            if dv.abs() <= 1e-15 * v_dc.abs().max(1e-12) {
                break;
            }
        }
        v
    }

    /// One measured trace.
    #[allow(clippy::too_many_arguments)]
    pub fn synthesize_trace(
        &self,
        th: &ThermalState,
        sweep: SweepDirection,
        v_sd_dc: f64,
        noise_sigma: f64,
        rng_seed: u64,
        cooldown: u32,
        illuminated: bool,
    ) -> Result<ConductanceTrace> {
        let step = self.thermal_step(th.temperature)?;
        self.trace_with_step(&step, th.temperature, sweep, v_sd_dc, noise_sigma, rng_seed, cooldown, illuminated)
    }

    #[allow(clippy::too_many_arguments)]
    fn trace_with_step(
        &self,
        step: &ThermalStep,
        temperature: f64,
        sweep: SweepDirection,
        v_sd_dc: f64,
        noise_sigma: f64,
        rng_seed: u64,
        cooldown: u32,
        illuminated: bool,
    ) -> Result<ConductanceTrace> {
        if !(noise_sigma >= 0.0) || !v_sd_dc.is_finite() {
            return Err(Error::Argument("noise sigma must be >= 0 and bias finite".into()));
        }
        let kappas = self.kappa_samples(sweep);
        let r = self.device.series_resistance * G_Q_SIEMENS;
        let table = (v_sd_dc != 0.0 && r > 0.0)
            .then(|| self.bias_table(step, &kappas, bias_shift(v_sd_dc, self.pot.e_x)));
        let intrinsic: Vec<f64> = kappas
            .par_iter()
            .map(|&k| {
                if v_sd_dc == 0.0 {
                    self.conductance(k, step)
                } else {
                    let v = match &table {
                        Some(t) => self.solve_bias(t, k, v_sd_dc, step),
                        None => v_sd_dc,
                    };
                    self.conductance_biased(k, v, step)
                }
            })
            .collect();
        let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = rng::stream(rng_seed, "trace-noise", &[]);
        let g_sd = intrinsic
            .iter()
            .map(|&g| {
                let measured = g / (1.0 + r * g);
                if noise_sigma > 0.0 {
                    measured + noise.sample(&mut rng)
                } else {
                    measured
                }
            })
            .collect();
        Ok(ConductanceTrace {
            gate_voltage: kappas.iter().map(|&k| self.gate_at(k, sweep)).collect(),
            g_sd,
            sweep_direction: sweep,
            temperature,
            v_sd_dc,
            metadata: self.metadata(cooldown, illuminated),
        })
    }

    /// One trace per DC bias, each with its own noise sub-stream.
    #[allow(clippy::too_many_arguments)]
    pub fn bias_sweep_family(
        &self,
        th: &ThermalState,
        sweep: SweepDirection,
        v_sd_list: &[f64],
        noise_sigma: f64,
        rng_seed: u64,
        cooldown: u32,
        illuminated: bool,
    ) -> Result<Vec<ConductanceTrace>> {
        let step = self.thermal_step(th.temperature)?;
        v_sd_list
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let seed = if i == 0 && v_sd_list.len() == 1 {
                    rng_seed
                } else {
                    rng::derive_seed(rng_seed, "bias", &[i as u64])
                };
                self.trace_with_step(&step, th.temperature, sweep, v, noise_sigma, seed, cooldown, illuminated)
            })
            .collect()
    }
}

fn bias_shift(v: f64, e_x: f64) -> f64 {
    0.5 * v.abs() * MEV_PER_VOLT / e_x
}

/// Running integral of the intrinsic conductance on a fine κ grid.
struct BiasTable {
    lo: f64,
    h: f64,
    g: Vec<f64>,
    cum: Vec<f64>,
    n_subbands: f64,
}

impl BiasTable {
    fn integral(&self, k: f64) -> f64 {
        let n = self.g.len();
        let pos = (k - self.lo) / self.h;
        if pos <= 0.0 {
            return 0.0;
        }
        if pos >= (n - 1) as f64 {
            return self.cum[n - 1] + (k - self.lo - (n - 1) as f64 * self.h) * self.n_subbands;
        }
        let i = pos.floor() as usize;
        let t = (pos - i as f64) * self.h;
        // exact integral of the linear interpolant inside the cell
        let slope = (self.g[i + 1] - self.g[i]) / self.h;
        self.cum[i] + self.g[i] * t + 0.5 * slope * t * t
    }
}

/// Noiseless forward trace with the default model, for quick use.
pub fn synthesize_trace(
    dev: &SaddleDevice,
    th: &ThermalState,
    sweep: SweepDirection,
    v_sd_dc: f64,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<ConductanceTrace> {
    DeviceModel::new(dev, &SynthesisConfig::default())?
        .synthesize_trace(th, sweep, v_sd_dc, noise_sigma, rng_seed, 0, false)
}

/// Noiseless forward bias family with the default model.
pub fn bias_sweep_family(
    dev: &SaddleDevice,
    th: &ThermalState,
    v_sd_list: &[f64],
) -> Result<Vec<ConductanceTrace>> {
    DeviceModel::new(dev, &SynthesisConfig::default())?.bias_sweep_family(
        th,
        SweepDirection::Forward,
        v_sd_list,
        0.0,
        0,
        0,
        false,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GeometryPlan {
    /// Rows 1-8 at the first width, rows 9-16 at the second; length set by
    /// column.
    FixedWidth {
        widths_um: [f64; 2],
        lengths_um: Vec<f64>,
    },
    /// Width set by column, length = ratio · width.
    FixedAspect {
        length_over_width: f64,
        widths_um: Vec<f64>,
    },
}

impl GeometryPlan {
    pub fn geometry(&self, row: u8, column: u8) -> (f64, f64) {
        let c = (column as usize - 1) % 16;
        match self {
            GeometryPlan::FixedWidth { widths_um, lengths_um } => {
                let w = if row <= 8 { widths_um[0] } else { widths_um[1] };
                (w, lengths_um[c % lengths_um.len()])
            }
            GeometryPlan::FixedAspect {
                length_over_width,
                widths_um,
            } => {
                let w = widths_um[c % widths_um.len()];
                (w, length_over_width * w)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum UScaling {
    Fixed { u_mev: f64 },
    /// U = coefficient · √E_y with E_y in meV.
    SqrtEy { coefficient: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub chips: Vec<GeometryPlan>,
    pub devices_per_chip: u16,
    pub e_x_median: f64,
    pub e_x_log_sigma: f64,
    pub e_y_intercept: f64,
    pub e_y_length_slope: f64,
    pub e_y_width_slope: f64,
    pub e_y_device_sigma: f64,
    pub illumination_factor: f64,
    pub u_scaling: UScaling,
    pub lever_arm: f64,
    pub lever_arm_sigma: f64,
    pub v_riser_mean: f64,
    pub v_riser_sigma: f64,
    pub series_resistance: f64,
    pub series_resistance_sigma: f64,
    pub temperatures: Vec<f64>,
    pub defect_probability: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        let lengths: Vec<f64> = (0..16).map(|i| 0.2 + 0.1 * i as f64).collect();
        let widths: Vec<f64> = (0..16).map(|i| 0.3 + 0.05 * i as f64).collect();
        Self {
            chips: vec![
                GeometryPlan::FixedWidth {
                    widths_um: [0.6, 0.4],
                    lengths_um: lengths.clone(),
                },
                GeometryPlan::FixedWidth {
                    widths_um: [0.6, 0.4],
                    lengths_um: lengths,
                },
                GeometryPlan::FixedAspect {
                    length_over_width: 0.5,
                    widths_um: widths.clone(),
                },
                GeometryPlan::FixedAspect {
                    length_over_width: 1.0,
                    widths_um: widths.clone(),
                },
                GeometryPlan::FixedAspect {
                    length_over_width: 1.5,
                    widths_um: widths,
                },
            ],
            devices_per_chip: 256,
            e_x_median: 1.0,
            e_x_log_sigma: 0.3,
            e_y_intercept: 2.5,
            e_y_length_slope: 0.5,
            e_y_width_slope: 1.0,
            e_y_device_sigma: 0.2,
            illumination_factor: 1.6,
            u_scaling: UScaling::SqrtEy { coefficient: 12.0 },
            lever_arm: 0.05,
            lever_arm_sigma: 0.0,
            v_riser_mean: -0.6,
            v_riser_sigma: 0.05,
            series_resistance: 1000.0,
            series_resistance_sigma: 0.0,
            temperatures: vec![0.04],
            defect_probability: 0.554,
            seed: 1,
        }
    }
}

impl CohortConfig {
    /// Cohort with clear plateaus and moderate interaction: E_y/E_x mostly
    /// between 3 and 8, peak U_eff mostly between 0.25 and 0.45.
    pub fn anomaly_study() -> Self {
        Self {
            e_x_median: 0.5,
            e_x_log_sigma: 0.3,
            e_y_intercept: 5.0,
            e_y_length_slope: 1.0,
            e_y_width_slope: 2.0,
            e_y_device_sigma: 0.4,
            u_scaling: UScaling::SqrtEy { coefficient: 5.5 },
            ..Self::default()
        }
    }

    /// Geometry part of the E_y model, without device noise.
    pub fn nominal_e_y(&self, width_um: f64, length_um: f64, illuminated: bool) -> f64 {
        let e = self.e_y_intercept - self.e_y_length_slope * length_um - self.e_y_width_slope * width_um;
        if illuminated {
            e * self.illumination_factor
        } else {
            e
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            self.e_x_log_sigma,
            self.e_y_device_sigma,
            self.lever_arm_sigma,
            self.v_riser_sigma,
            self.series_resistance_sigma,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Configuration("all sigmas must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.defect_probability) {
            return Err(Error::Configuration("defect probability must lie in [0, 1]".into()));
        }
        if self.chips.is_empty() || self.chips.len() > 255 {
            return Err(Error::Configuration("cohort needs 1..=255 chips".into()));
        }
        if self.devices_per_chip == 0 || self.devices_per_chip > 256 {
            return Err(Error::Configuration("devices per chip must be 1..=256".into()));
        }
        if !(self.e_x_median > 0.0) || !(self.illumination_factor > 0.0) {
            return Err(Error::Configuration("E_x median and illumination factor must be positive".into()));
        }
        if !(self.lever_arm > 0.0 && self.lever_arm <= 1.0) {
            return Err(Error::Configuration("lever arm must lie in (0, 1]".into()));
        }
        if self.temperatures.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Configuration("temperatures must be >= 0".into()));
        }
        Ok(())
    }
}

/// Row-major device coordinates of one chip.
pub fn chip_addresses(devices_per_chip: u16) -> impl Iterator<Item = (u8, u8)> {
    (0..devices_per_chip).map(|i| ((i / 16 + 1) as u8, (i % 16 + 1) as u8))
}

fn normal(rng: &mut impl Rng, mean: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        mean
    } else {
        Normal::new(mean, sigma).expect("sigma validated").sample(rng)
    }
}

/// Devices of every chip for one cooldown.
///
/// Geometry, E_y noise, lever arm, series resistance and the functional
/// flag are device-fixed (their streams ignore the cooldown); E_x and the
/// riser gate voltage are redrawn for every cooldown.
pub fn generate_cohort(cfg: &CohortConfig, cooldown_index: u32, illuminated: bool) -> Result<Vec<SaddleDevice>> {
    cfg.validate()?;
    let e_x_dist = LogNormal::new(cfg.e_x_median.ln(), cfg.e_x_log_sigma.max(0.0))
        .map_err(|e| Error::Configuration(e.to_string()))?;
    let mut out = Vec::with_capacity(cfg.chips.len() * cfg.devices_per_chip as usize);
    for (ci, plan) in cfg.chips.iter().enumerate() {
        let chip = (ci + 1) as u8;
        for (row, column) in chip_addresses(cfg.devices_per_chip) {
            let coords = [chip as u64, row as u64, column as u64];
            let (width_um, length_um) = plan.geometry(row, column);

            let mut fixed = rng::stream(cfg.seed, "cohort-device", &coords);
            let nominal = cfg.e_y_intercept
                - cfg.e_y_length_slope * length_um
                - cfg.e_y_width_slope * width_um;
            let mut e_y = -1.0;
            for _ in 0..10_000 {
                e_y = normal(&mut fixed, nominal, cfg.e_y_device_sigma);
                if e_y > 0.0 {
                    break;
                }
            }
            if !(e_y > 0.0) {
                return Err(Error::Configuration(format!(
                    "E_y model stays non-positive for W = {width_um}, L = {length_um}"
                )));
            }
            let lever_arm = normal(&mut fixed, cfg.lever_arm, cfg.lever_arm_sigma).clamp(1e-4, 1.0);
            let series_resistance = normal(&mut fixed, cfg.series_resistance, cfg.series_resistance_sigma).max(0.0);

            let mut defects = rng::stream(cfg.seed, "defects", &coords);
            let functional = defects.random::<f64>() >= cfg.defect_probability;

            let mut cool = rng::stream(
                cfg.seed,
                "cohort-cooldown",
                &[chip as u64, row as u64, column as u64, cooldown_index as u64],
            );
            let e_x = e_x_dist.sample(&mut cool);
            let v_riser = normal(&mut cool, cfg.v_riser_mean, cfg.v_riser_sigma);

            if illuminated {
                e_y *= cfg.illumination_factor;
            }
            let u = match cfg.u_scaling {
                UScaling::Fixed { u_mev } => u_mev,
                UScaling::SqrtEy { coefficient } => coefficient * e_y.sqrt(),
            };
            out.push(SaddleDevice {
                id: DeviceId { chip, row, column },
                width_um,
                length_um,
                e_x,
                e_y,
                lever_arm,
                v_riser,
                u,
                series_resistance,
                functional,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::conductance_noninteracting;

    fn device(u: f64, r: f64) -> SaddleDevice {
        SaddleDevice {
            id: DeviceId::new(1, 1, 1).unwrap(),
            width_um: 0.6,
            length_um: 0.5,
            e_x: 1.0,
            e_y: 4.0,
            lever_arm: 0.05,
            v_riser: -0.6,
            u,
            series_resistance: r,
            functional: true,
        }
    }

    #[test]
    fn noninteracting_trace_is_g0() {
        let dev = device(0.0, 0.0);
        let th = ThermalState::new(0.04, 0.0).unwrap();
        let tr = synthesize_trace(&dev, &th, SweepDirection::Forward, 0.0, 0.0, 1).unwrap();
        tr.validate().unwrap();
        let pot = dev.potential().unwrap();
        for (v, g) in tr.gate_voltage.iter().zip(&tr.g_sd).step_by(37) {
            let g0 = conductance_noninteracting(pot.kappa_at_gate(*v), &pot, &th, 3).unwrap();
            assert!((g - g0).abs() < 1e-8, "{g} vs {g0}");
        }
    }

    #[test]
    fn defective_device_is_refused() {
        let mut dev = device(0.0, 0.0);
        dev.functional = false;
        let th = ThermalState::new(0.04, 0.0).unwrap();
        assert!(matches!(
            synthesize_trace(&dev, &th, SweepDirection::Forward, 0.0, 0.0, 1),
            Err(Error::DeviceDefect(_))
        ));
    }

    #[test]
    fn interacting_plateaus_and_monotonicity() {
        let model_cfg = SynthesisConfig::default();
        let u = model_cfg.interaction.u_for_peak(1.0, 4.0, 0.7).unwrap();
        let model = DeviceModel::new(&device(u, 0.0), &model_cfg).unwrap();
        let th = ThermalState::new(0.04, 0.0).unwrap();
        let tr = model.synthesize_trace(&th, SweepDirection::Backward, 0.0, 0.0, 0, 0, false).unwrap();
        assert!(tr.g_sd.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        let step = model.thermal_step(0.04).unwrap();
        // plateau centres
        for n in 1..=2u32 {
            let k = model.pot.riser_offset(n) + 0.5 * model.pot.e_y / model.pot.e_x;
            let g = model.conductance(k, &step);
            assert!((g - n as f64).abs() < 1e-3, "plateau {n}: {g}");
        }
        assert!((model.conductance(0.0, &step) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn peak_u_eff_is_hit() {
        let cfg = SynthesisConfig::default();
        let u = cfg.interaction.u_for_peak(1.0, 4.0, 0.88).unwrap();
        let model = DeviceModel::new(&device(u, 0.0), &cfg).unwrap();
        assert!((model.u_eff_max(1) - 0.88).abs() < 1e-12);
        let too_strong = cfg.interaction.u_for_peak(1.0, 4.0, 1.01).unwrap();
        assert!(matches!(
            DeviceModel::new(&device(too_strong, 0.0), &cfg),
            Err(Error::ModelValidity { .. })
        ));
    }

    #[test]
    fn biased_family_is_symmetric_and_zero_bias_matches() {
        let dev = device(5.0, 1000.0);
        let th = ThermalState::new(0.04, 0.0).unwrap();
        let fam = bias_sweep_family(&dev, &th, &[0.0, 1e-3, -1e-3]).unwrap();
        let single = synthesize_trace(&dev, &th, SweepDirection::Forward, 0.0, 0.0, 0).unwrap();
        assert_eq!(fam[0].g_sd, single.g_sd);
        for (a, b) in fam[1].g_sd.iter().zip(&fam[2].g_sd) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn internal_bias_satisfies_ohms_law() {
        let cfg = SynthesisConfig::default();
        let model = DeviceModel::new(&device(0.0, 2000.0), &cfg).unwrap();
        let step = model.thermal_step(0.04).unwrap();
        let v_dc = 2e-3;
        let v = model.internal_bias(0.3, v_dc, &step);
        // current by direct quadrature of the differential conductance
        let i = crate::numerics::integrate_scalar(|x| model.conductance_biased(0.3, x, &step), 0.0, v, 1e-14);
        assert!((v + 2000.0 * G_Q_SIEMENS * i - v_dc).abs() < 1e-9);
    }

    #[test]
    fn cohort_is_deterministic_and_device_fixed_fields_repeat() {
        let cfg = CohortConfig {
            devices_per_chip: 32,
            ..Default::default()
        };
        let a = generate_cohort(&cfg, 0, false).unwrap();
        let b = generate_cohort(&cfg, 0, false).unwrap();
        assert_eq!(a, b);
        let c = generate_cohort(&cfg, 1, false).unwrap();
        for (x, y) in a.iter().zip(&c) {
            assert_eq!(x.e_y, y.e_y);
            assert_eq!(x.functional, y.functional);
            assert_ne!(x.e_x, y.e_x);
        }
        let lit = generate_cohort(&cfg, 0, true).unwrap();
        for (x, y) in a.iter().zip(&lit) {
            assert!((y.e_y - 1.6 * x.e_y).abs() < 1e-12);
            assert_eq!(x.e_x, y.e_x);
        }
    }

    #[test]
    fn zero_noise_geometry_classes_share_e_y() {
        let cfg = CohortConfig {
            e_y_device_sigma: 0.0,
            ..Default::default()
        };
        let devs = generate_cohort(&cfg, 0, false).unwrap();
        for a in &devs {
            for b in devs.iter().filter(|b| b.width_um == a.width_um && b.length_um == a.length_um) {
                assert_eq!(a.e_y, b.e_y);
            }
        }
    }

    #[test]
    fn kappa_gate_round_trip() {
        let model = DeviceModel::new(&device(0.0, 0.0), &SynthesisConfig::default()).unwrap();
        for sweep in [SweepDirection::Forward, SweepDirection::Backward] {
            let v = model.gate_at(1.234, sweep);
            assert!((model.kappa_at(v, sweep) - 1.234).abs() < 1e-10);
        }
    }
}
