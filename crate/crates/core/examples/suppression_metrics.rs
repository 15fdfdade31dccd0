//! Transconductance suppression S_TC and conductance suppression S_G of an
//! interacting device, with riser-splitting detection.

use qpc_anomaly::analysis::{analyze_trace, AnalysisConfig};
use qpc_anomaly::synthesis::{DeviceId, DeviceModel, SaddleDevice, SweepDirection, SynthesisConfig};
use qpc_anomaly::transport::ThermalState;

fn main() -> qpc_anomaly::Result<()> {
    let cfg = SynthesisConfig::default();
    let th = ThermalState::new(0.04, 0.0)?;
    for peak in [0.0, 0.3, 0.6, 0.88] {
        let dev = SaddleDevice {
            id: DeviceId::new(1, 1, 1)?,
            width_um: 0.6,
            length_um: 0.4,
            e_x: 0.6,
            e_y: 5.0,
            lever_arm: 0.05,
            v_riser: -0.6,
            u: cfg.interaction.u_for_peak(0.6, 5.0, peak)?,
            series_resistance: 1000.0,
            functional: true,
        };
        let model = DeviceModel::new(&dev, &cfg)?;
        let trace = model.synthesize_trace(&th, SweepDirection::Forward, 0.0, 0.0, 0, 1, false)?;
        let a = analyze_trace(&trace, &AnalysisConfig::default())?;
        let s1 = a.subband(1).expect("first subband analysed");
        print!("peak U_eff {peak:.2}: fitted E_x {:.3}", s1.fit.e_x);
        if let Some(m) = s1.suppression.minimum {
            print!("  min S_TC {:.3} at kappa {:.2} (G = {:.2})", m.s_tc, m.kappa, m.g);
        }
        if let Some(sp) = &a.splitting {
            print!("  split {}", sp.split);
        }
        println!();
        if let Some(cs) = &a.conductance_suppression {
            for (k, s) in &cs.fixed {
                println!("    S_G(kappa = {k}) = {}", s.map_or("n/a".into(), |v| format!("{v:.3}")));
            }
        }
    }
    Ok(())
}
