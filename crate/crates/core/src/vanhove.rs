//! One-dimensional tight-binding barrier, its LDOS ridge, and the
//! first-order Hartree barrier map.
//!
//! The chain has sites `j = -M..=M` with hopping τ and onsite energies
//! `V_c - E_x² j²/(4τ)` (band bottom convention, so the local band edge
//! sits at the potential). The parabola is cut at `V_c - floor·E_x` and
//! held flat out to semi-infinite leads at that level. The interaction
//! acts on a central block of sites whose width is measured in units of
//! the harmonic length `l_x = √(2τ/E_x)` sites.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::interp_linear;
use crate::units::{thermal_energy, GAAS_EFFECTIVE_MASS, HBAR2_OVER_2ME_MEV_NM2};

/// Shape parameters of the discretised barrier that are not part of the
/// physical device description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierOptions {
    /// Depth of the flat lead region below `V_c`, in units of E_x.
    pub floor_ex: f64,
    /// Half-width of the interacting region in units of l_x.
    pub region_width: f64,
    /// Imaginary broadening as a fraction of the hopping.
    pub eta_fraction: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            floor_ex: 10.0,
            region_width: 0.5,
            eta_fraction: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for KappaGrid {
    fn default() -> Self {
        Self {
            min: -3.0,
            max: 9.0,
            points: 601,
        }
    }
}

impl KappaGrid {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min < max) || points < 2 || !min.is_finite() || !max.is_finite() {
            return Err(Error::Argument(format!(
                "invalid kappa grid [{min}, {max}] with {points} points"
            )));
        }
        Ok(Self { min, max, points })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.min + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierProfile {
    pub n_sites: usize,
    /// Lattice constant in nm for a GaAs effective mass at this hopping.
    pub site_spacing: f64,
    /// Band-bottom energy of each site, meV.
    pub onsite_potential: Vec<f64>,
    /// U_j in meV; unit strength in the central block after construction.
    pub interaction_profile: Vec<f64>,
    pub hopping: f64,
    pub e_x: f64,
    pub e_y: f64,
    pub v_c: f64,
    pub options: BarrierOptions,
}

/// Smallest odd chain that holds the truncated parabola plus `margin`
/// flat sites on each side.
pub fn required_sites(e_x: f64, hopping: f64, floor_ex: f64, margin: usize) -> usize {
    let cut = (floor_ex * 4.0 * hopping / e_x).sqrt().ceil() as usize;
    (2 * (cut + margin) + 1).max(101)
}

/// Lattice constant (nm) giving τ = ħ²/(2 m* a²).
pub fn site_spacing_for_hopping(hopping: f64) -> f64 {
    (HBAR2_OVER_2ME_MEV_NM2 / GAAS_EFFECTIVE_MASS / hopping).sqrt()
}

pub fn build_barrier(
    e_x: f64,
    e_y: f64,
    v_c: f64,
    n_sites: usize,
    hopping: f64,
) -> Result<BarrierProfile> {
    build_barrier_with(e_x, e_y, v_c, n_sites, hopping, BarrierOptions::default())
}

pub fn build_barrier_with(
    e_x: f64,
    e_y: f64,
    v_c: f64,
    n_sites: usize,
    hopping: f64,
    options: BarrierOptions,
) -> Result<BarrierProfile> {
    if !(e_x > 0.0) || !(e_y > 0.0) || !v_c.is_finite() {
        return Err(Error::Argument(format!(
            "barrier needs E_x > 0, E_y > 0 and finite V_c (got {e_x}, {e_y}, {v_c})"
        )));
    }
    if n_sites < 101 || n_sites % 2 == 0 {
        return Err(Error::Configuration(format!(
            "n_sites must be odd and >= 101, got {n_sites}"
        )));
    }
    if !(hopping > 0.0) || !(options.floor_ex > 0.0) || !(options.region_width >= 0.0) {
        return Err(Error::Configuration(
            "hopping and floor depth must be positive, region width non-negative".into(),
        ));
    }
    let half = (n_sites / 2) as i64;
    let cut = (options.floor_ex * 4.0 * hopping / e_x).sqrt();
    if (half as f64) < cut + 2.0 {
        return Err(Error::Configuration(format!(
            "{n_sites} sites cannot hold the barrier down to its floor (need at least {})",
            required_sites(e_x, hopping, options.floor_ex, 2)
        )));
    }
    let floor = v_c - options.floor_ex * e_x;
    let l_x = (2.0 * hopping / e_x).sqrt();
    let onsite_potential = (-half..=half)
        .map(|j| (v_c - e_x * e_x * (j * j) as f64 / (4.0 * hopping)).max(floor))
        .collect();
    let interaction_profile = (-half..=half)
        .map(|j| {
            if (j.abs() as f64) <= options.region_width * l_x && j.abs() < half {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let profile = BarrierProfile {
        n_sites,
        site_spacing: site_spacing_for_hopping(hopping),
        onsite_potential,
        interaction_profile,
        hopping,
        e_x,
        e_y,
        v_c,
        options,
    };
    let grid = KappaGrid::default();
    profile.check_energy_window(
        v_c + grid.min * e_x,
        v_c + (grid.max * e_x).max(e_y),
    )?;
    Ok(profile)
}

impl BarrierProfile {
    pub fn floor(&self) -> f64 {
        self.v_c - self.options.floor_ex * self.e_x
    }

    /// Harmonic length in sites.
    pub fn harmonic_length(&self) -> f64 {
        (2.0 * self.hopping / self.e_x).sqrt()
    }

    pub fn center(&self) -> usize {
        self.n_sites / 2
    }

    /// Same barrier rigidly shifted by `delta` meV.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.v_c += delta;
        for v in &mut out.onsite_potential {
            *v += delta;
        }
        out
    }

    /// Scales the interaction profile so the central sites carry `u` meV.
    pub fn with_interaction(&self, u: f64) -> Self {
        let mut out = self.clone();
        let peak = self.interaction_profile.iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            for v in &mut out.interaction_profile {
                *v *= u / peak;
            }
        }
        out
    }

    /// Rejects energies within 10% of either tight-binding band edge: the
    /// lower edge is measured against the barrier depth, the upper one
    /// against the bandwidth.
    pub fn check_energy_window(&self, lo: f64, hi: f64) -> Result<()> {
        let floor = self.floor();
        let depth = self.v_c - floor;
        if lo - floor < 0.1 * depth {
            return Err(Error::Configuration(format!(
                "energy {lo:.3} meV is within 10% of the lead band bottom {floor:.3} meV"
            )));
        }
        let top = floor + 4.0 * self.hopping;
        if top - hi < 0.1 * 4.0 * self.hopping {
            return Err(Error::Configuration(format!(
                "energy {hi:.3} meV is within 10% of the band top {top:.3} meV; raise the hopping"
            )));
        }
        Ok(())
    }

    /// E_x recovered from a least-squares parabola through the central
    /// sites `|j| ≤ l_x`.
    pub fn fitted_e_x(&self) -> f64 {
        let c = self.center() as i64;
        let reach = self.harmonic_length().ceil().max(2.0) as i64;
        let (mut s4, mut s2, mut s0, mut sv, mut svj2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in -reach..=reach {
            let v = self.onsite_potential[(c + j) as usize];
            let j2 = (j * j) as f64;
            s0 += 1.0;
            s2 += j2;
            s4 += j2 * j2;
            sv += v;
            svj2 += v * j2;
        }
        // v ≈ a + b j², normal equations
        let b = (s0 * svj2 - s2 * sv) / (s0 * s4 - s2 * s2);
        (4.0 * self.hopping * (-b)).sqrt()
    }

    fn lead_self_energy(&self, z: Complex64) -> Complex64 {
        let t = self.hopping;
        let w = (z - (self.floor() + 2.0 * t)) / (2.0 * t);
        let s = (w * w - 1.0).sqrt();
        let (r1, r2) = (w - s, w + s);
        let (a1, a2) = (r1.norm(), r2.norm());
        // inside the band both roots sit on the unit circle up to rounding,
        // so only the sign of the imaginary part separates them
        let r = if (a1 - a2).abs() < 1e-9 {
            if r1.im <= 0.0 {
                r1
            } else {
                r2
            }
        } else if a1 < a2 {
            r1
        } else {
            r2
        };
        t * r
    }

    fn inverse_diagonal(&self, energy: f64) -> (Vec<Complex64>, Vec<Complex64>, Complex64) {
        let t = self.hopping;
        let z = Complex64::new(energy, self.options.eta_fraction * t);
        let sigma = self.lead_self_energy(z);
        let n = self.n_sites;
        let mut d: Vec<Complex64> = self
            .onsite_potential
            .iter()
            .map(|&v| z - (v + 2.0 * t))
            .collect();
        d[0] -= sigma;
        d[n - 1] -= sigma;
        let t2 = t * t;
        let mut gl = vec![Complex64::new(0.0, 0.0); n];
        let mut gr = vec![Complex64::new(0.0, 0.0); n];
        gl[0] = d[0].inv();
        for i in 1..n {
            gl[i] = (d[i] - t2 * gl[i - 1]).inv();
        }
        gr[n - 1] = d[n - 1].inv();
        for i in (0..n - 1).rev() {
            gr[i] = (d[i] - t2 * gr[i + 1]).inv();
        }
        let diag = (0..n)
            .map(|i| (gl[i].inv() + gr[i].inv() - d[i]).inv())
            .collect();
        (diag, gl, sigma)
    }

    /// Site-resolved LDOS (1/meV per site) at `energy`.
    pub fn site_ldos(&self, energy: f64) -> Vec<f64> {
        let (diag, _, _) = self.inverse_diagonal(energy);
        diag.iter()
            .map(|g| (-g.im / std::f64::consts::PI).max(0.0))
            .collect()
    }

    /// LDOS averaged over the interacting region with weights U_j / U.
    pub fn region_ldos(&self, energy: f64) -> f64 {
        let ldos = self.site_ldos(energy);
        let total: f64 = self.interaction_profile.iter().sum();
        if total == 0.0 {
            return ldos[self.center()];
        }
        ldos.iter()
            .zip(&self.interaction_profile)
            .map(|(l, w)| l * w)
            .sum::<f64>()
            / total
    }

    /// Caroli transmission through the chain.
    pub fn transmission(&self, energy: f64) -> f64 {
        let (_, gl, sigma) = self.inverse_diagonal(energy);
        // G_{N,1} = τ^{N-1} Π gl_k, accumulated in log form
        let mut log_mag = 0.0;
        for g in &gl {
            log_mag += g.norm().ln();
        }
        log_mag += (self.n_sites - 1) as f64 * self.hopping.ln();
        let gamma = -2.0 * sigma.im;
        (gamma * gamma * (2.0 * log_mag).exp()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdosCurve {
    pub kappa_grid: Vec<f64>,
    /// Region-averaged LDOS in 1/meV per site.
    pub ldos: Vec<f64>,
    pub ldos_max: f64,
    pub kappa_at_max: f64,
    pub e_x: f64,
    pub mu: f64,
    pub temperature: f64,
}

impl LdosCurve {
    pub fn at(&self, kappa: f64) -> f64 {
        interp_linear(&self.kappa_grid, &self.ldos, kappa)
    }

    /// Barrier heights corresponding to the κ grid at this curve's μ.
    pub fn v_c_grid(&self) -> Vec<f64> {
        self.kappa_grid.iter().map(|k| self.mu - k * self.e_x).collect()
    }
}

pub fn ldos_ridge(profile: &BarrierProfile, mu: f64, temperature: f64) -> Result<LdosCurve> {
    ldos_ridge_on(profile, mu, temperature, &KappaGrid::default())
}

/// LDOS ridge on a κ grid. Sweeping V_c at fixed μ rigidly shifts the
/// whole chain, leads included, so it is evaluated as an energy sweep
/// `E = V_c + κ E_x` on the unshifted profile.
pub fn ldos_ridge_on(
    profile: &BarrierProfile,
    mu: f64,
    temperature: f64,
    grid: &KappaGrid,
) -> Result<LdosCurve> {
    if !(temperature >= 0.0) {
        return Err(Error::Argument(format!("temperature must be >= 0, got {temperature}")));
    }
    let e_x = profile.e_x;
    let theta = thermal_energy(temperature) / e_x;
    let kappa_grid = grid.values();
    let reach = 20.0 * theta;
    profile.check_energy_window(
        profile.v_c + (grid.min - reach) * e_x,
        profile.v_c + (grid.max + reach) * e_x,
    )?;
    let eval = |k: f64| profile.region_ldos(profile.v_c + k * e_x);

    let ldos: Vec<f64> = if theta == 0.0 {
        kappa_grid.par_iter().map(|&k| eval(k)).collect()
    } else {
        let coarse = grid.step();
        let fine = (0.5 * theta).clamp(coarse / 8.0, coarse);
        let lo = grid.min - reach;
        let n_fine = ((grid.max + reach - lo) / fine).ceil() as usize + 1;
        let fine_k: Vec<f64> = (0..n_fine).map(|i| lo + i as f64 * fine).collect();
        let fine_l: Vec<f64> = fine_k.par_iter().map(|&k| eval(k)).collect();
        let half = (reach / fine).ceil() as isize;
        kappa_grid
            .iter()
            .map(|&k| {
                let centre = ((k - lo) / fine).round() as isize;
                let (mut acc, mut norm) = (0.0, 0.0);
                for off in -half..=half {
                    let i = centre + off;
                    if i < 0 || i as usize >= n_fine {
                        continue;
                    }
                    let s = (fine_k[i as usize] - k) / theta;
                    let c = (0.5 * s).cosh();
                    let w = 1.0 / (c * c);
                    acc += w * fine_l[i as usize];
                    norm += w;
                }
                acc / norm
            })
            .collect()
    };

    let (imax, &ldos_max) = ldos
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid has points");
    Ok(LdosCurve {
        kappa_at_max: kappa_grid[imax],
        kappa_grid,
        ldos_max,
        ldos,
        e_x,
        mu,
        temperature,
    })
}

/// Dimensionless effective interaction `U · LDOS(κ)`.
pub fn u_eff(curve: &LdosCurve, u: f64) -> Result<Vec<f64>> {
    if !(u >= 0.0) {
        return Err(Error::Argument(format!("interaction U must be >= 0, got {u}")));
    }
    Ok(curve.ldos.iter().map(|l| u * l).collect())
}

/// First-order effective Hartree barrier.
///
/// Stored on an ascending κ grid; `v_c_grid` therefore runs from high
/// barriers (pinch-off) downwards. Between nodes U_eff is linear, so the
/// map is the exact piecewise-quadratic integral and its slope at every
/// node is exactly `1 - U_eff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HartreeMap {
    pub kappa_grid: Vec<f64>,
    pub v_c_grid: Vec<f64>,
    pub v_c_hartree: Vec<f64>,
    pub u_eff_grid: Vec<f64>,
    /// ∫_{κ_min}^{κ_i} U_eff at each node.
    cumulative: Vec<f64>,
    pub e_x: f64,
    pub mu: f64,
}

pub fn hartree_map(
    profile: &BarrierProfile,
    u: f64,
    mu: f64,
    temperature: f64,
    v_c_range: (f64, f64),
) -> Result<HartreeMap> {
    let (a, b) = v_c_range;
    if !(a.is_finite() && b.is_finite()) || a == b {
        return Err(Error::Argument(format!("invalid V_c range ({a}, {b})")));
    }
    let e_x = profile.e_x;
    let k_lo = (mu - a.max(b)) / e_x;
    let k_hi = (mu - a.min(b)) / e_x;
    let grid = KappaGrid::new(k_lo, k_hi, KappaGrid::default().points)?;
    let curve = ldos_ridge_on(profile, mu, temperature, &grid)?;
    HartreeMap::from_u_eff(curve.kappa_grid.clone(), u_eff(&curve, u)?, e_x, mu)
}

impl HartreeMap {
    pub fn from_curve(curve: &LdosCurve, u: f64) -> Result<Self> {
        Self::from_u_eff(curve.kappa_grid.clone(), u_eff(curve, u)?, curve.e_x, curve.mu)
    }

    pub fn from_u_eff(kappa_grid: Vec<f64>, u_eff_grid: Vec<f64>, e_x: f64, mu: f64) -> Result<Self> {
        if kappa_grid.len() != u_eff_grid.len() || kappa_grid.len() < 2 {
            return Err(Error::Argument("κ and U_eff grids must match, length >= 2".into()));
        }
        if kappa_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Argument("κ grid must be strictly increasing".into()));
        }
        let u_eff_max = u_eff_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if u_eff_max >= 1.0 {
            return Err(Error::ModelValidity { u_eff_max });
        }
        let mut cumulative = Vec::with_capacity(kappa_grid.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 1..kappa_grid.len() {
            acc += 0.5 * (u_eff_grid[i] + u_eff_grid[i - 1]) * (kappa_grid[i] - kappa_grid[i - 1]);
            cumulative.push(acc);
        }
        let v_c_grid = kappa_grid.iter().map(|k| mu - k * e_x).collect();
        let v_c_hartree = kappa_grid
            .iter()
            .zip(&cumulative)
            .map(|(k, a)| mu - (k - a) * e_x)
            .collect();
        Ok(Self {
            kappa_grid,
            v_c_grid,
            v_c_hartree,
            u_eff_grid,
            cumulative,
            e_x,
            mu,
        })
    }

    /// Same map with U_eff multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_u_eff(
            self.kappa_grid.clone(),
            self.u_eff_grid.iter().map(|u| u * factor).collect(),
            self.e_x,
            self.mu,
        )
    }

    pub fn u_eff_max(&self) -> f64 {
        self.u_eff_grid.iter().cloned().fold(0.0, f64::max)
    }

    pub fn u_eff_at(&self, kappa: f64) -> f64 {
        interp_linear(&self.kappa_grid, &self.u_eff_grid, kappa)
    }

    /// ∫_{κ_min}^{κ} U_eff, extended with constant end values off the grid.
    pub fn shift_at(&self, kappa: f64) -> f64 {
        let k = &self.kappa_grid;
        let u = &self.u_eff_grid;
        let n = k.len();
        if kappa <= k[0] {
            return u[0] * (kappa - k[0]);
        }
        if kappa >= k[n - 1] {
            return self.cumulative[n - 1] + u[n - 1] * (kappa - k[n - 1]);
        }
        let i = k.partition_point(|&v| v <= kappa) - 1;
        let h = k[i + 1] - k[i];
        let dx = kappa - k[i];
        let slope = (u[i + 1] - u[i]) / h;
        self.cumulative[i] + u[i] * dx + 0.5 * slope * dx * dx
    }

    /// Effective κ seen by the noninteracting step.
    pub fn kappa_h(&self, kappa: f64) -> f64 {
        kappa - self.shift_at(kappa)
    }

    pub fn v_c_hartree_at(&self, v_c: f64) -> f64 {
        let kappa = (self.mu - v_c) / self.e_x;
        self.mu - self.kappa_h(kappa) * self.e_x
    }

    /// Total Hartree shift across the grid, in units of E_x.
    pub fn total_shift(&self) -> f64 {
        *self.cumulative.last().expect("non-empty grid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn profile(e_x: f64, hopping: f64) -> BarrierProfile {
        let n = required_sites(e_x, hopping, 10.0, 20);
        build_barrier(e_x, 3.0, 0.0, n, hopping).unwrap()
    }

    #[test]
    fn barrier_top_and_curvature() {
        let p = profile(1.0, 100.0);
        let top = p.onsite_potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(top, 0.0);
        assert_eq!(p.onsite_potential.iter().filter(|&&v| v == top).count(), 1);
        assert!((p.fitted_e_x() - 1.0).abs() < 0.01);
    }

    #[test]
    fn shift_is_additive() {
        let p = profile(1.0, 100.0);
        let q = build_barrier(1.0, 3.0, 0.75, p.n_sites, 100.0).unwrap();
        for (a, b) in p.onsite_potential.iter().zip(&q.onsite_potential) {
            assert!((b - a - 0.75).abs() < 1e-12);
        }
        assert_eq!(p.shifted(0.75).onsite_potential, q.onsite_potential);
    }

    #[test]
    fn construction_rejections() {
        assert!(matches!(build_barrier(1.0, 3.0, 0.0, 100, 100.0), Err(Error::Configuration(_))));
        assert!(matches!(build_barrier(1.0, 3.0, 0.0, 101, 100.0), Err(Error::Configuration(_))));
        // hopping too small: the κ window reaches the band top
        assert!(matches!(build_barrier(1.0, 3.0, 0.0, 401, 5.0), Err(Error::Configuration(_))));
    }

    #[test]
    fn interaction_profile_vanishes_at_ends() {
        let p = profile(2.0, 100.0);
        assert_eq!(p.interaction_profile[0], 0.0);
        assert_eq!(*p.interaction_profile.last().unwrap(), 0.0);
        assert!(p.interaction_profile.iter().all(|&u| u >= 0.0));
        assert_eq!(p.interaction_profile[p.center()], 1.0);
    }

    #[test]
    fn flat_chain_band_centre_ldos() {
        // V ≡ floor everywhere: an infinite uniform chain, whose per-site
        // LDOS is 1/(π√(4τ² − (E − ε_0)²)) and integrates to one
        let mut p = profile(1.0, 100.0);
        let floor = p.floor();
        for v in &mut p.onsite_potential {
            *v = floor;
        }
        let centre = floor + 2.0 * p.hopping;
        for (e, expect) in [
            (centre, 1.0 / (2.0 * PI * p.hopping)),
            (centre + 50.0, 1.0 / (PI * (4.0 * p.hopping * p.hopping - 2500.0).sqrt())),
        ] {
            let l = p.site_ldos(e);
            for v in &l {
                assert!((v - expect).abs() / expect < 1e-5, "{v} vs {expect}");
            }
        }
    }

    #[test]
    fn ldos_nonnegative_and_evanescent_below() {
        let p = profile(1.0, 100.0);
        let c = ldos_ridge(&p, 0.0, 0.0).unwrap();
        assert!(c.ldos.iter().all(|&v| v >= 0.0));
        assert!(c.at(-3.0) < 0.05 * c.ldos_max);
        assert!(c.kappa_at_max > -0.2 && c.kappa_at_max < 0.6, "{}", c.kappa_at_max);
    }

    #[test]
    fn transmission_follows_saddle_formula() {
        let p = profile(1.0, 100.0);
        for k in [-0.5, 0.0, 0.5] {
            let t = p.transmission(p.v_c + k * p.e_x);
            let expect = 1.0 / (1.0 + (-2.0 * PI * k).exp());
            assert!((t - expect).abs() < 0.02, "κ {k}: {t} vs {expect}");
        }
    }

    #[test]
    fn thermal_smearing_preserves_area() {
        let p = profile(1.0, 100.0);
        let cold = ldos_ridge(&p, 0.0, 0.0).unwrap();
        let warm = ldos_ridge(&p, 0.0, 1.4).unwrap();
        assert!(warm.ldos_max < cold.ldos_max);
        let area = |c: &LdosCurve| crate::numerics::trapezoid(&c.kappa_grid[50..550], &c.ldos[50..550]);
        assert!((area(&cold) - area(&warm)).abs() / area(&cold) < 1e-3);
    }

    #[test]
    fn u_eff_is_linear_in_u() {
        let p = profile(1.0, 100.0);
        let c = ldos_ridge(&p, 0.0, 0.0).unwrap();
        assert!(u_eff(&c, 0.0).unwrap().iter().all(|&v| v == 0.0));
        let a = u_eff(&c, 10.0).unwrap();
        let b = u_eff(&c, 20.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
        let m = a.iter().cloned().fold(0.0, f64::max);
        assert_eq!(m, 10.0 * c.ldos_max);
        assert!(u_eff(&c, -1.0).is_err());
    }

    #[test]
    fn zero_interaction_map_is_identity() {
        let p = profile(1.0, 100.0);
        let m = hartree_map(&p, 0.0, 0.0, 0.0, (-9.0, 3.0)).unwrap();
        for (a, b) in m.v_c_grid.iter().zip(&m.v_c_hartree) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn triangular_bump_shift_equals_area() {
        let k: Vec<f64> = (0..=400).map(|i| -5.0 + i as f64 * 0.025).collect();
        // height 0.5, full width 2 at half maximum
        let u: Vec<f64> = k.iter().map(|&x| (0.5 * (1.0 - 0.5 * x.abs())).max(0.0)).collect();
        let m = HartreeMap::from_u_eff(k, u, 1.0, 0.0).unwrap();
        assert!((m.total_shift() - 1.0).abs() < 1e-12, "{}", m.total_shift());
        // asymptotic offsets differ by the area
        assert!((m.kappa_h(-3.0) + 3.0).abs() < 1e-12);
        assert!((m.kappa_h(3.0) - 2.0).abs() < 1e-12);
        assert!((m.v_c_hartree_at(3.0) - m.v_c_hartree_at(-3.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn too_strong_interaction_is_rejected() {
        let p = profile(1.0, 100.0);
        let c = ldos_ridge(&p, 0.0, 0.0).unwrap();
        let u = 1.05 / c.ldos_max;
        match HartreeMap::from_curve(&c, u) {
            Err(Error::ModelValidity { u_eff_max }) => assert!(u_eff_max >= 1.0),
            other => panic!("expected model validity error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn hartree_map_is_monotone(u in prop::collection::vec(0.0..0.95f64, 2..60), k in -2.0..20.0f64, d in 0.0..3.0f64) {
            let grid: Vec<f64> = (0..u.len()).map(|i| -2.0 + 0.1 * i as f64).collect();
            let map = HartreeMap::from_u_eff(grid, u, 0.7, 0.0).unwrap();
            prop_assert!(map.kappa_h(k + d) >= map.kappa_h(k) - 1e-12);
            prop_assert!(map.shift_at(k + d) >= map.shift_at(k) - 1e-12);
            // on and above the grid a stronger interaction never shifts less
            let stronger = map.scaled(1.05).unwrap();
            prop_assert!(stronger.shift_at(k) >= map.shift_at(k) - 1e-12);
        }
    }
}
