//! End-to-end run of a small cohort to a directory: multiplexed measurement,
//! per-device analysis, report and plot tables. Re-running from the written
//! manifest reproduces the results byte for byte.

use qpc_anomaly::pipeline::{self, RunConfig};

fn main() -> qpc_anomaly::Result<()> {
    let mut cfg = RunConfig::anomaly_study();
    cfg.cohort.chips.truncate(1);
    cfg.cohort.devices_per_chip = 32;
    cfg.measurement.bias_points = 13;

    let root = std::env::temp_dir().join(format!("qpc_example_run_{}", std::process::id()));
    let first = root.join("first");
    let summary = pipeline::run(&cfg, &first)?;
    println!(
        "{} addresses, {} functional, {} measured, {} faults",
        summary.addresses, summary.functional, summary.measured, summary.faults
    );

    let second = root.join("second");
    pipeline::run_manifest(&first.join("manifest.json"), &second)?;
    let a = std::fs::read(first.join("report.json")).expect("first report");
    let b = std::fs::read(second.join("report.json")).expect("second report");
    println!("re-run report identical: {}", a == b);

    for entry in std::fs::read_dir(first.join("plots")).expect("plots dir").flatten() {
        println!("  {}", entry.file_name().to_string_lossy());
    }
    std::fs::remove_dir_all(&root).ok();
    Ok(())
}
