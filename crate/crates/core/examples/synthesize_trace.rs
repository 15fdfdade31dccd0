//! Synthesize one measured G(V_G) trace for an interacting device, with
//! series resistance and noise, and write it as CSV.

use qpc_anomaly::io;
use qpc_anomaly::synthesis::{DeviceId, DeviceModel, SaddleDevice, SweepDirection, SynthesisConfig};
use qpc_anomaly::transport::ThermalState;

fn main() -> qpc_anomaly::Result<()> {
    let cfg = SynthesisConfig::default();
    let u = cfg.interaction.u_for_peak(0.5, 4.0, 0.4)?;
    let dev = SaddleDevice {
        id: DeviceId::new(1, 3, 7)?,
        width_um: 0.4,
        length_um: 0.5,
        e_x: 0.5,
        e_y: 4.0,
        lever_arm: 0.05,
        v_riser: -0.6,
        u,
        series_resistance: 1500.0,
        functional: true,
    };
    let model = DeviceModel::new(&dev, &cfg)?;
    let th = ThermalState::new(0.04, 0.0)?;
    let trace = model.synthesize_trace(&th, SweepDirection::Forward, 0.0, 0.003, 42, 1, false)?;

    let out = std::env::temp_dir().join("qpc_example_trace.csv");
    io::write_trace_csv(&out, &trace)?;
    println!("{} samples written to {}", trace.g_sd.len(), out.display());
    for (v, g) in trace.gate_voltage.iter().zip(&trace.g_sd).step_by(trace.g_sd.len() / 12) {
        println!("  V_G = {v:8.4} V  G = {g:.4} G_Q");
    }
    Ok(())
}
