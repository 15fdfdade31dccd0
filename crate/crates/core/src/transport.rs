//! Noninteracting saddle-point transport.
//!
//! Energies are measured from the central barrier height `V_c`, so subband
//! `N` has its transmission midpoint at `ε_N = E_y (N - 1/2)`. The
//! dimensionless gate coordinate κ is anchored on the first riser,
//! `μ = ε_1 + κ E_x`, which puts `G^0(κ = 0) = 0.5` at every temperature.
//!
//! Two evaluation paths are provided. The free functions integrate the
//! thermal window directly with adaptive quadrature. [`ThermalStep`] and
//! [`SaddleConductance`] tabulate the single-subband step once per reduced
//! temperature and interpolate, which is what the bulk synthesis and
//! fitting code uses.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use std::sync::OnceLock;

use crate::numerics::{gauss_legendre, integrate_gauss};
use crate::units::{thermal_energy, MEV_PER_VOLT};

const TWO_PI: f64 = 2.0 * PI;

/// Half-width of the thermal window in units of k_B T.
const THERMAL_WINDOW: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePotential {
    /// Barrier curvature ħω_x in meV.
    pub e_x: f64,
    /// Lateral confinement ħω_y in meV.
    pub e_y: f64,
    /// dV_SD/dV_SG.
    pub lever_arm: f64,
    /// Gate voltage (V) of the first riser midpoint.
    pub v_riser: f64,
}

impl SaddlePotential {
    pub fn new(e_x: f64, e_y: f64, lever_arm: f64, v_riser: f64) -> Result<Self> {
        let pot = Self {
            e_x,
            e_y,
            lever_arm,
            v_riser,
        };
        pot.validate()?;
        Ok(pot)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_x > 0.0 && self.e_x.is_finite()) {
            return Err(Error::Argument(format!("E_x must be positive, got {}", self.e_x)));
        }
        if !(self.e_y > 0.0 && self.e_y.is_finite()) {
            return Err(Error::Argument(format!("E_y must be positive, got {}", self.e_y)));
        }
        if !(self.lever_arm > 0.0 && self.lever_arm <= 1.0) {
            return Err(Error::Argument(format!(
                "lever arm must lie in (0, 1], got {}",
                self.lever_arm
            )));
        }
        if !self.v_riser.is_finite() {
            return Err(Error::Argument("riser gate voltage must be finite".into()));
        }
        Ok(())
    }

    /// Transmission midpoint of subband `n` relative to `V_c`, in meV.
    pub fn subband_energy(&self, n: u32) -> f64 {
        self.e_y * (n as f64 - 0.5)
    }

    /// κ offset of riser `n` relative to the first riser.
    pub fn riser_offset(&self, n: u32) -> f64 {
        (n.max(1) - 1) as f64 * self.e_y / self.e_x
    }

    /// κ reached at gate voltage `v_g`.
    pub fn kappa_at_gate(&self, v_g: f64) -> Kappa {
        Kappa(self.lever_arm * MEV_PER_VOLT * (v_g - self.v_riser) / self.e_x)
    }

    pub fn gate_at_kappa(&self, kappa: Kappa) -> f64 {
        self.v_riser + kappa.0 * self.e_x / (self.lever_arm * MEV_PER_VOLT)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    /// Kelvin.
    pub temperature: f64,
    /// meV, relative to `V_c`.
    pub chemical_potential: f64,
}

impl ThermalState {
    pub fn new(temperature: f64, chemical_potential: f64) -> Result<Self> {
        if !(temperature >= 0.0 && temperature.is_finite()) {
            return Err(Error::Argument(format!(
                "temperature must be >= 0 K, got {temperature}"
            )));
        }
        Ok(Self {
            temperature,
            chemical_potential,
        })
    }

    /// Thermal state whose chemical potential sits at `kappa`.
    pub fn at_kappa(temperature: f64, kappa: Kappa, pot: &SaddlePotential) -> Result<Self> {
        Self::new(temperature, kappa.chemical_potential(pot))
    }

    pub fn kappa(&self, pot: &SaddlePotential) -> Kappa {
        Kappa::from_chemical_potential(self.chemical_potential, pot)
    }

    /// k_B T / E_x.
    pub fn reduced_temperature(&self, pot: &SaddlePotential) -> f64 {
        thermal_energy(self.temperature) / pot.e_x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Kappa(pub f64);

impl Kappa {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Self(value))
        } else {
            Err(Error::Argument(format!("kappa must be finite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn chemical_potential(self, pot: &SaddlePotential) -> f64 {
        pot.subband_energy(1) + self.0 * pot.e_x
    }

    pub fn from_chemical_potential(mu: f64, pot: &SaddlePotential) -> Self {
        Kappa((mu - pot.subband_energy(1)) / pot.e_x)
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else if z < -35.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Reduced single-subband step `T(u) = 1/(1 + e^{-2πu})`, u in units of E_x.
pub fn reduced_transmission(u: f64) -> f64 {
    logistic(TWO_PI * u)
}

/// First three derivatives of the reduced step.
fn reduced_transmission_derivs(u: f64) -> [f64; 4] {
    let s = reduced_transmission(u);
    let a = s * (1.0 - s);
    [
        s,
        TWO_PI * a,
        TWO_PI * TWO_PI * a * (1.0 - 2.0 * s),
        TWO_PI.powi(3) * a * (1.0 - 6.0 * s + 6.0 * s * s),
    ]
}

/// −∂f/∂E in units of 1/(k_B T), as a function of s = (E − μ)/k_B T.
fn fermi_window(s: f64) -> f64 {
    let e = (-s.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Saddle-point transmission of subband `n` at `energy` (meV from `V_c`).
pub fn transmission(energy: f64, subband_index: u32, pot: &SaddlePotential) -> Result<f64> {
    if subband_index < 1 {
        return Err(Error::Argument("subband index must be >= 1".into()));
    }
    pot.validate()?;
    Ok(reduced_transmission(
        (energy - pot.subband_energy(subband_index)) / pot.e_x,
    ))
}

fn gauss_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(20))
}

/// Thermal average of the first `K` derivatives of the reduced step,
/// `∫ T^{(k)}(x + θs) w(s) ds` over |s| ≤ 20 with the window renormalised
/// to unit mass.
///
/// Panels are sized against the nearer of the two complex singularities
/// (the Fermi window's at |Im s| = π, the step's at |Im s| = 1/(2θ)), which
/// keeps a 20-point rule well below 1e-12.
fn thermal_average<const K: usize>(x: f64, theta: f64) -> [f64; K] {
    let width = 2.0f64.min(0.5 / theta);
    let panels = (2.0 * THERMAL_WINDOW / width).ceil() as usize;
    let mass = (0.5 * THERMAL_WINDOW).tanh();
    let mut v = integrate_gauss(
        |s| {
            let w = fermi_window(s);
            let d = reduced_transmission_derivs(x + theta * s);
            let mut out = [0.0; K];
            for k in 0..K {
                out[k] = d[k] * w;
            }
            out
        },
        -THERMAL_WINDOW,
        THERMAL_WINDOW,
        panels,
        gauss_rule(),
    );
    for c in &mut v {
        *c /= mass;
    }
    v
}

/// Thermally averaged reduced step and its κ-derivative at offset `x`
/// (κ units) and reduced temperature `theta`, by direct quadrature.
pub fn thermal_step_exact(x: f64, theta: f64) -> [f64; 2] {
    if theta == 0.0 {
        let d = reduced_transmission_derivs(x);
        return [d[0], d[1]];
    }
    thermal_average::<2>(x, theta)
}

fn check_subbands(n_subbands: u32) -> Result<()> {
    if n_subbands < 1 {
        return Err(Error::Argument("n_subbands must be >= 1".into()));
    }
    Ok(())
}

/// Thermally broadened zero-bias conductance G^0 in units of G_Q.
///
/// The chemical potential is set by `kappa`; only the temperature of `th`
/// is used.
pub fn conductance_noninteracting(
    kappa: Kappa,
    pot: &SaddlePotential,
    th: &ThermalState,
    n_subbands: u32,
) -> Result<f64> {
    pot.validate()?;
    check_subbands(n_subbands)?;
    let theta = th.reduced_temperature(pot);
    Ok((1..=n_subbands)
        .map(|n| thermal_step_exact(kappa.0 - pot.riser_offset(n), theta)[0])
        .sum())
}

/// Differential conductance with the bias split evenly between source and
/// drain: `½[G^0(μ + eV/2) + G^0(μ − eV/2)]`.
pub fn conductance_biased(
    kappa: Kappa,
    v_sd: f64,
    pot: &SaddlePotential,
    th: &ThermalState,
    n_subbands: u32,
) -> Result<f64> {
    if !v_sd.is_finite() {
        return Err(Error::Argument("source-drain bias must be finite".into()));
    }
    let shift = 0.5 * v_sd * MEV_PER_VOLT / pot.e_x;
    let up = conductance_noninteracting(Kappa(kappa.0 + shift), pot, th, n_subbands)?;
    let down = conductance_noninteracting(Kappa(kappa.0 - shift), pot, th, n_subbands)?;
    Ok(0.5 * (up + down))
}

/// TC^0 = dG^0/dκ in G_Q per unit κ.
pub fn transconductance_noninteracting(
    kappa: Kappa,
    pot: &SaddlePotential,
    th: &ThermalState,
    n_subbands: u32,
) -> Result<f64> {
    pot.validate()?;
    check_subbands(n_subbands)?;
    let theta = th.reduced_temperature(pot);
    Ok((1..=n_subbands)
        .map(|n| thermal_step_exact(kappa.0 - pot.riser_offset(n), theta)[1])
        .sum())
}

/// Tabulated thermally broadened single-subband step.
///
/// For a reduced temperature θ = k_B T/E_x this holds `g(x)`, its first
/// three derivatives, and the running integral `∫ g` on a uniform grid,
/// and evaluates them by quintic Hermite interpolation. At θ = 0 closed
/// forms are used and no table is built.
#[derive(Debug, Clone)]
pub struct ThermalStep {
    theta: f64,
    x0: f64,
    h: f64,
    g: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
    integral: Vec<f64>,
}

const TABLE_SPACING: f64 = 0.004;

impl ThermalStep {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::Argument(format!(
                "reduced temperature must be >= 0, got {theta}"
            )));
        }
        if theta == 0.0 {
            return Ok(Self {
                theta,
                x0: 0.0,
                h: 0.0,
                g: vec![],
                d1: vec![],
                d2: vec![],
                d3: vec![],
                integral: vec![],
            });
        }
        let half = 8.0 + 40.0 * theta;
        let n = (2.0 * half / TABLE_SPACING).ceil() as usize + 1;
        let h = 2.0 * half / (n - 1) as f64;
        let x0 = -half;
        let mut g = Vec::with_capacity(n);
        let mut d1 = Vec::with_capacity(n);
        let mut d2 = Vec::with_capacity(n);
        let mut d3 = Vec::with_capacity(n);
        for i in 0..n {
            let x = x0 + i as f64 * h;
            let v = thermal_average::<4>(x, theta);
            g.push(v[0]);
            d1.push(v[1]);
            d2.push(v[2]);
            d3.push(v[3]);
        }
        // ∫g below the table is the softplus tail at the lower edge
        let mut integral = Vec::with_capacity(n);
        let mut acc = softplus(TWO_PI * x0) / TWO_PI;
        integral.push(acc);
        for i in 1..n {
            acc += h
                * (0.5 * (g[i - 1] + g[i]) + h * (d1[i - 1] - d1[i]) / 10.0
                    + h * h * (d2[i - 1] + d2[i]) / 120.0);
            integral.push(acc);
        }
        Ok(Self {
            theta,
            x0,
            h,
            g,
            d1,
            d2,
            d3,
            integral,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn upper(&self) -> f64 {
        self.x0 + (self.g.len() - 1) as f64 * self.h
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let pos = (x - self.x0) / self.h;
        let i = (pos.floor() as usize).min(self.g.len() - 2);
        (i, pos - i as f64)
    }

    fn hermite(&self, v: &[f64], d: &[f64], s: &[f64], i: usize, t: f64) -> f64 {
        let h = self.h;
        let u = 1.0 - t;
        let h0 = |t: f64| 1.0 + t * t * t * (-10.0 + t * (15.0 - 6.0 * t));
        let h1 = |t: f64| t * (1.0 + t * t * (-6.0 + t * (8.0 - 3.0 * t)));
        let h2 = |t: f64| 0.5 * t * t * (1.0 + t * (-3.0 + t * (3.0 - t)));
        v[i] * h0(t) + v[i + 1] * h0(u) + h * (d[i] * h1(t) - d[i + 1] * h1(u))
            + h * h * (s[i] * h2(t) + s[i + 1] * h2(u))
    }

    /// Thermally averaged step `g(x)`.
    pub fn value(&self, x: f64) -> f64 {
        if self.theta == 0.0 {
            return reduced_transmission(x);
        }
        if x <= self.x0 {
            return 0.0;
        }
        if x >= self.upper() {
            return 1.0;
        }
        let (i, t) = self.locate(x);
        self.hermite(&self.g, &self.d1, &self.d2, i, t)
    }

    /// `g'(x)`.
    pub fn slope(&self, x: f64) -> f64 {
        if self.theta == 0.0 {
            return reduced_transmission_derivs(x)[1];
        }
        if x <= self.x0 || x >= self.upper() {
            return 0.0;
        }
        let (i, t) = self.locate(x);
        self.hermite(&self.d1, &self.d2, &self.d3, i, t)
    }

    /// `∫_{-∞}^x g`.
    pub fn integral(&self, x: f64) -> f64 {
        if self.theta == 0.0 {
            return softplus(TWO_PI * x) / TWO_PI;
        }
        if x <= self.x0 {
            return softplus(TWO_PI * x) / TWO_PI;
        }
        let top = self.upper();
        if x >= top {
            return self.integral[self.g.len() - 1] + (x - top);
        }
        let (i, t) = self.locate(x);
        self.hermite(&self.integral, &self.g, &self.d1, i, t)
    }
}

/// Multi-subband G^0 evaluator backed by a [`ThermalStep`] table.
#[derive(Debug, Clone)]
pub struct SaddleConductance {
    pot: SaddlePotential,
    n_subbands: u32,
    step: ThermalStep,
}

impl SaddleConductance {
    pub fn new(pot: SaddlePotential, temperature: f64, n_subbands: u32) -> Result<Self> {
        pot.validate()?;
        check_subbands(n_subbands)?;
        let th = ThermalState::new(temperature, 0.0)?;
        Ok(Self {
            pot,
            n_subbands,
            step: ThermalStep::new(th.reduced_temperature(&pot))?,
        })
    }

    /// Reuses an existing table; `step` must belong to `pot` at the
    /// intended temperature.
    pub fn with_step(pot: SaddlePotential, step: ThermalStep, n_subbands: u32) -> Result<Self> {
        pot.validate()?;
        check_subbands(n_subbands)?;
        Ok(Self {
            pot,
            n_subbands,
            step,
        })
    }

    pub fn potential(&self) -> &SaddlePotential {
        &self.pot
    }

    pub fn n_subbands(&self) -> u32 {
        self.n_subbands
    }

    pub fn step(&self) -> &ThermalStep {
        &self.step
    }

    fn offsets(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n_subbands).map(|n| self.pot.riser_offset(n))
    }

    pub fn conductance(&self, kappa: f64) -> f64 {
        self.offsets().map(|o| self.step.value(kappa - o)).sum()
    }

    pub fn transconductance(&self, kappa: f64) -> f64 {
        self.offsets().map(|o| self.step.slope(kappa - o)).sum()
    }

    /// Symmetric-split differential conductance at bias `v_sd` (V).
    pub fn conductance_biased(&self, kappa: f64, v_sd: f64) -> f64 {
        let shift = 0.5 * v_sd * MEV_PER_VOLT / self.pot.e_x;
        0.5 * (self.conductance(kappa + shift) + self.conductance(kappa - shift))
    }

    /// Current in units of G_Q·V at bias `v_sd`, i.e. ∫_0^V of the
    /// differential conductance.
    pub fn current(&self, kappa: f64, v_sd: f64) -> f64 {
        let shift = 0.5 * v_sd * MEV_PER_VOLT / self.pot.e_x;
        let span: f64 = self
            .offsets()
            .map(|o| self.step.integral(kappa + shift - o) - self.step.integral(kappa - shift - o))
            .sum();
        span * self.pot.e_x / MEV_PER_VOLT
    }
}
