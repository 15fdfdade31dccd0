//! Measure and analyse one chip of a synthetic cohort in memory, then compute
//! the anomaly yields and cohort correlations.

use qpc_anomaly::analysis::AnalysisResult;
use qpc_anomaly::pipeline::{analyze_traces, measure_device, RunConfig};
use qpc_anomaly::statistics::cohort_report;
use qpc_anomaly::synthesis::{generate_cohort, DeviceModel};

fn main() -> qpc_anomaly::Result<()> {
    let mut cfg = RunConfig::anomaly_study();
    cfg.cohort.chips.truncate(1);
    cfg.cohort.devices_per_chip = 48;
    cfg.measurement.backward = false;

    let devices = generate_cohort(&cfg.cohort, 1, false)?;
    let mut results: Vec<AnalysisResult> = Vec::new();
    for dev in devices.iter().filter(|d| d.functional) {
        let model = DeviceModel::new(dev, &cfg.synthesis)?;
        let traces = measure_device(&cfg, &model, 1, 0)?;
        results.push(analyze_traces(&traces, &cfg.analysis));
    }
    println!("{} of {} devices functional", results.len(), devices.len());

    let report = cohort_report(&results, &cfg.statistics)?;
    let y = report.yields;
    println!(
        "good fits {}  suppressed {}  split {}  y_TC = {:.2}  y_RS = {:.2}",
        y.n_good_fit, y.n_suppressed, y.n_riser_split, y.y_tc_07, y.y_rs_07
    );
    match report.correlations {
        Some(c) => {
            if let Some(d) = c.depth_vs_sqrt_ue {
                println!("rho(depth, sqrt U_E) = {:.3} over {} devices", d.rho, d.n);
            }
            for (a, b) in c.s_g_vs_e_x.iter().zip(&c.s_g_vs_inv_ue) {
                println!(
                    "kappa {}: rho(S_G, E_x) = {:.3}  rho(S_G, 1/U_E) = {:.3}",
                    a.kappa.unwrap_or(f64::NAN),
                    a.rho,
                    b.rho
                );
            }
        }
        None => println!("no correlations: {}", report.correlation_error.unwrap_or_default()),
    }
    Ok(())
}
