//! Noninteracting saddle-point conductance: the quantized staircase, its
//! thermal smearing and the effect of source-drain bias.

use qpc_anomaly::transport::{
    conductance_biased, reduced_transmission, Kappa, SaddleConductance, SaddlePotential, ThermalState,
};

fn main() -> qpc_anomaly::Result<()> {
    // E_x = 0.5 meV, E_y = 4 meV, lever arm 0.05, first riser at -0.6 V
    let pot = SaddlePotential::new(0.5, 4.0, 0.05, -0.6)?;

    println!("T(u) at the barrier top: {:.3}", reduced_transmission(0.0));
    println!("T(u) one unit above:     {:.6}", reduced_transmission(1.0));

    println!("\n  kappa    G(40 mK)  G(1.4 K)");
    let cold = SaddleConductance::new(pot.clone(), 0.04, 3)?;
    let warm = SaddleConductance::new(pot.clone(), 1.4, 3)?;
    for i in -4..=40 {
        let k = 0.5 * i as f64;
        if i % 4 == 0 {
            println!("{k:7.1}  {:9.4}  {:8.4}", cold.conductance(k), warm.conductance(k));
        }
    }

    // the bias window splits each riser in two, giving half-integer plateaus
    let k = 0.75 * pot.riser_offset(2);
    let th = ThermalState::new(0.04, 0.0)?;
    println!("\nbias dependence at kappa = {k:.1}:");
    for v_mv in [0.0, 2.0, 4.0, 6.0, 8.0] {
        let g = conductance_biased(Kappa(k), v_mv * 1e-3, &pot, &th, 3)?;
        println!("  V_SD = {v_mv:3.0} mV  G = {g:.4}");
    }
    Ok(())
}
