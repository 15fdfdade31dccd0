//! Physical constants and unit conversions.
//!
//! Energies are carried in meV, voltages in V, temperatures in K and
//! conductances in units of the conductance quantum `G_Q = 2e^2/h`.

/// Conductance quantum 2e²/h in siemens.
pub const G_Q_SIEMENS: f64 = 7.748091729e-5;

/// Boltzmann constant in meV/K.
pub const K_B_MEV_PER_K: f64 = 8.617333262e-2;

/// Energy (meV) acquired by one electron across one volt.
pub const MEV_PER_VOLT: f64 = 1000.0;

/// ħ²/(2 m_e) in meV·nm².
pub const HBAR2_OVER_2ME_MEV_NM2: f64 = 38.09982;

/// GaAs conduction-band effective mass in units of m_e.
pub const GAAS_EFFECTIVE_MASS: f64 = 0.067;

pub fn thermal_energy(temperature_k: f64) -> f64 {
    K_B_MEV_PER_K * temperature_k
}

/// Series resistance in ohms expressed in units of 1/G_Q.
pub fn resistance_in_quanta(ohms: f64) -> f64 {
    ohms * G_Q_SIEMENS
}

pub fn resistance_from_quanta(r: f64) -> f64 {
    r / G_Q_SIEMENS
}
