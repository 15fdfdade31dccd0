//! First-order Hartree map: an interaction U shifts the barrier by
//! U·LDOS, stretching the gate axis where the density of states is large.

use qpc_anomaly::synthesis::InteractionModel;
use qpc_anomaly::vanhove::HartreeMap;

fn main() -> qpc_anomaly::Result<()> {
    let model = InteractionModel::default();
    let curve = model.ldos_curve(0.5, 4.0)?;
    for target in [0.2, 0.5, 0.8] {
        let u = model.u_for_peak(0.5, 4.0, target)?;
        let map = HartreeMap::from_curve(&curve, u)?;
        println!("U = {u:.3} meV  peak U_eff = {:.3}  total shift = {:.3} meV", map.u_eff_max(), map.total_shift());
        for k in [-1.0, 0.0, 0.2, 0.5, 1.0, 2.0] {
            println!("  kappa {k:5.1} -> kappa_H {:7.3}  U_eff {:.3}", map.kappa_h(k), map.u_eff_at(k));
        }
    }
    Ok(())
}
