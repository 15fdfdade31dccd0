//! Recover the series resistance and per-subband E_x from a noisy
//! noninteracting trace.

use qpc_anomaly::analysis::{analyze_trace, AnalysisConfig};
use qpc_anomaly::synthesis::{DeviceId, DeviceModel, SaddleDevice, SweepDirection, SynthesisConfig};
use qpc_anomaly::transport::ThermalState;

fn main() -> qpc_anomaly::Result<()> {
    let dev = SaddleDevice {
        id: DeviceId::new(1, 1, 1)?,
        width_um: 0.6,
        length_um: 0.4,
        e_x: 0.8,
        e_y: 5.0,
        lever_arm: 0.05,
        v_riser: -0.6,
        u: 0.0,
        series_resistance: 1200.0,
        functional: true,
    };
    let model = DeviceModel::new(&dev, &SynthesisConfig::default())?;
    let th = ThermalState::new(0.04, 0.0)?;
    let trace = model.synthesize_trace(&th, SweepDirection::Forward, 0.0, 0.005, 7, 1, false)?;

    let a = analyze_trace(&trace, &AnalysisConfig::default())?;
    println!(
        "series resistance {:.0} ohm (true {:.0}), noise {:.4}",
        a.calibration.series_resistance, dev.series_resistance, a.calibration.noise_sigma
    );
    for s in &a.subbands {
        println!(
            "subband {}: E_x = {:.4} meV  rms {:.4}  good {}",
            s.fit.subband, s.fit.e_x, s.fit.rms, s.fit.good
        );
    }
    Ok(())
}
