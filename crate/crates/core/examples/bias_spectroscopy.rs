//! Subband spacing from finite-bias spectroscopy: track the transconductance
//! peaks of a DC-bias family until the first and second risers meet.

use qpc_anomaly::analysis::extract_subband_spacing;
use qpc_anomaly::synthesis::{DeviceId, DeviceModel, SaddleDevice, SweepDirection, SynthesisConfig};
use qpc_anomaly::transport::ThermalState;

fn main() -> qpc_anomaly::Result<()> {
    let dev = SaddleDevice {
        id: DeviceId::new(1, 1, 1)?,
        width_um: 0.6,
        length_um: 0.4,
        e_x: 0.4,
        e_y: 2.5,
        lever_arm: 0.05,
        v_riser: -0.6,
        u: 0.0,
        series_resistance: 1000.0,
        functional: true,
    };
    let model = DeviceModel::new(&dev, &SynthesisConfig::default())?;
    let th = ThermalState::new(0.04, 0.0)?;
    let v_max = 1.8 * dev.e_y * 1e-3;
    let biases: Vec<f64> = (0..25).map(|i| i as f64 * v_max / 24.0).collect();
    let family = model.bias_sweep_family(&th, SweepDirection::Forward, &biases, 0.003, 5, 1, false)?;

    let s = extract_subband_spacing(&family, dev.series_resistance)?;
    println!("Delta E = {:.3} meV (true {:.3})", s.delta_e, dev.e_y);
    println!("lever arm estimate {:.4} (true {:.4})", s.lever_arm_estimate, dev.lever_arm);
    println!("risers meet at V_SD = {:.2} mV", s.v_sd_cross * 1e3);
    println!("{} points on the lower track, {} on the upper", s.lower_track.len(), s.upper_track.len());
    Ok(())
}
