//! Local density of states at the barrier centre as the constriction opens.
//! The ridge is the van Hove singularity of the lowest subband crossing the
//! chemical potential.

use qpc_anomaly::vanhove::{build_barrier, ldos_ridge, required_sites, site_spacing_for_hopping};

fn main() -> qpc_anomaly::Result<()> {
    let (e_x, e_y, hopping) = (0.5, 4.0, 100.0);
    let n = required_sites(e_x, hopping, 10.0, 20);
    let profile = build_barrier(e_x, e_y, 0.0, n, hopping)?;
    println!(
        "{n} sites at {:.2} nm, fitted E_x = {:.4} meV",
        site_spacing_for_hopping(hopping),
        profile.fitted_e_x()
    );

    let curve = ldos_ridge(&profile, 0.0, 0.04)?;
    println!("peak {:.4} /meV at kappa = {:.2}\n", curve.ldos_max, curve.kappa_at_max);
    for k in (-8..=12).map(|i| 0.25 * i as f64) {
        let rel = curve.at(k) / curve.ldos_max;
        println!("{k:6.2} {rel:6.3} {}", "#".repeat((rel * 50.0).round() as usize));
    }
    Ok(())
}
