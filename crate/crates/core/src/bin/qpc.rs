use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qpc_anomaly::analysis::{analyze_device, calibrate_with, extract_with, AnalysisConfig};
use qpc_anomaly::io;
use qpc_anomaly::mux;
use qpc_anomaly::pipeline::{self, RunConfig};
use qpc_anomaly::synthesis::ConductanceTrace;
use qpc_anomaly::Result;

#[derive(Parser)]
#[command(name = "qpc", version, about = "QPC cohort simulation and 0.7-anomaly analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a cohort and write its traces.
    Synthesize(RunArgs),
    /// Full pipeline: multiplexed measurement, analysis and report.
    Run(RunArgs),
    /// Analyze one device from trace files.
    Analyze(AnalyzeArgs),
    /// Subband spacing from a DC-bias trace family.
    Spectroscopy(SpectroscopyArgs),
    /// Re-aggregate the results of a run directory.
    Report {
        dir: PathBuf,
    },
    /// Exhaustive multiplexer addressing check.
    MuxCheck,
}

#[derive(Args)]
struct RunArgs {
    /// JSON RunConfig; missing fields take defaults.
    #[arg(long, conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Reuse the configuration recorded in a previous run's manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Start from the anomaly-study preset instead of the defaults.
    #[arg(long, conflicts_with_all = ["config", "manifest"])]
    anomaly_study: bool,
    /// Output directory [default: $QPC_OUTPUT_ROOT/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cooldowns: Option<u32>,
    /// Comma-separated temperatures in kelvin.
    #[arg(long, value_delimiter = ',')]
    temperatures: Option<Vec<f64>>,
    #[arg(long)]
    illuminated: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    write_traces: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = if let Some(p) = &self.config {
            io::read_json::<RunConfig>(p)?
        } else if let Some(p) = &self.manifest {
            io::read_json::<pipeline::Manifest>(p)?.config
        } else if self.anomaly_study {
            RunConfig::anomaly_study()
        } else {
            RunConfig::default()
        };
        if let Some(s) = self.seed {
            cfg.cohort.seed = s;
        }
        if let Some(c) = self.cooldowns {
            cfg.cooldowns = c;
        }
        if let Some(t) = &self.temperatures {
            cfg.cohort.temperatures = t.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.illuminated |= self.illuminated;
        cfg.write_traces |= self.write_traces;
        Ok(cfg)
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| pipeline::default_output_dir(name))
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Forward (or single) zero-bias trace CSV.
    forward: PathBuf,
    #[arg(long)]
    backward: Option<PathBuf>,
    /// Bias family trace CSVs, zero bias included.
    #[arg(long, num_args = 1..)]
    family: Vec<PathBuf>,
    /// JSON AnalysisConfig.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectroscopyArgs {
    /// Bias family trace CSVs, zero bias included.
    #[arg(required = true, num_args = 1..)]
    family: Vec<PathBuf>,
    /// Series resistance in ohms; calibrated from the zero-bias trace when absent.
    #[arg(long)]
    series_resistance: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn read_traces(paths: &[PathBuf]) -> Result<Vec<ConductanceTrace>> {
    paths.iter().map(|p| io::read_trace_csv(p)).collect()
}

fn analysis_config(path: Option<&Path>) -> Result<AnalysisConfig> {
    path.map(io::read_json).transpose().map(Option::unwrap_or_default)
}

/// Runs one command; returns the JSON to print and whether the command's
/// own check passed.
fn execute(cmd: Command) -> Result<(String, bool)> {
    let json = match cmd {
        Command::Synthesize(a) => io::to_json(&pipeline::synthesize(&a.resolve()?, &a.out("synthesize"))?)?,
        Command::Run(a) => io::to_json(&pipeline::run(&a.resolve()?, &a.out("run"))?)?,
        Command::Analyze(a) => {
            let cfg = analysis_config(a.config.as_deref())?;
            let forward = io::read_trace_csv(&a.forward)?;
            let backward = a.backward.as_deref().map(io::read_trace_csv).transpose()?;
            let family = read_traces(&a.family)?;
            let fam = (!family.is_empty()).then_some(family.as_slice());
            let r = analyze_device(&forward, backward.as_ref(), fam, &cfg);
            match a.out {
                Some(p) => {
                    io::write_json(&p, &r)?;
                    String::new()
                }
                None => io::to_json(&r)?,
            }
        }
        Command::Spectroscopy(a) => {
            let cfg = analysis_config(a.config.as_deref())?;
            let family = read_traces(&a.family)?;
            let r_s = match a.series_resistance {
                Some(r) => r,
                None => {
                    let zero = family.iter().find(|t| t.v_sd_dc == 0.0).ok_or_else(|| {
                        qpc_anomaly::Error::Argument("family has no zero-bias trace to calibrate from".into())
                    })?;
                    calibrate_with(zero, &cfg.plateau)?.series_resistance
                }
            };
            io::to_json(&extract_with(&family, r_s, &cfg.spectroscopy)?)?
        }
        Command::Report { dir } => {
            let s = pipeline::report(&dir)?;
            if s.warnings > 0 {
                eprintln!("warning: {} result file(s) skipped, see report.json", s.warnings);
            }
            io::to_json(&s)?
        }
        Command::MuxCheck => {
            let c = mux::mux_check();
            return Ok((io::to_json(&c)?, c.passed));
        }
    };
    Ok((json, true))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok((json, ok)) => {
            print!("{json}");
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.class());
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn exec(args: &[&str]) -> Result<(Value, bool)> {
        let cli = Cli::try_parse_from(std::iter::once("qpc").chain(args.iter().copied())).unwrap();
        let (json, ok) = execute(cli.command)?;
        let v = if json.is_empty() { Value::Null } else { serde_json::from_str(&json).unwrap() };
        Ok((v, ok))
    }

    fn small_config(dir: &Path) -> String {
        let mut cfg = RunConfig::anomaly_study();
        cfg.cohort.chips.truncate(1);
        cfg.cohort.devices_per_chip = 3;
        cfg.cohort.defect_probability = 0.0;
        cfg.write_traces = true;
        let p = dir.join("cfg.json");
        io::write_json(&p, &cfg).unwrap();
        p.to_string_lossy().into_owned()
    }

    fn path(dir: &Path, rel: &str) -> String {
        dir.join(rel).to_string_lossy().into_owned()
    }

    #[test]
    fn mux_check_passes() {
        let (v, ok) = exec(&["mux-check"]).unwrap();
        assert!(ok);
        assert_eq!(v["contacts"], 19);
    }

    #[test]
    fn run_then_analyze_spectroscopy_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let cfg = small_config(d);
        let run = path(d, "run");
        let (v, _) = exec(&["run", "--config", &cfg, "--out", &run]).unwrap();
        assert_eq!(v["measured"], 3);

        let stem = path(d, "run/traces/c1/T0.04K/s1_r01_c01");
        let fwd = format!("{stem}_forward.csv");
        let bwd = format!("{stem}_backward.csv");
        let family: Vec<String> = (0..25).map(|i| format!("{stem}_bias{i:02}.csv")).collect();

        let mut args = vec!["analyze", fwd.as_str(), "--backward", bwd.as_str(), "--family"];
        args.extend(family.iter().map(String::as_str));
        let (r, _) = exec(&args).unwrap();
        assert_eq!(r["good_fit"], true);
        assert!(r["e_x_backward"][0].is_f64());
        // the run analysed the same files, so the records agree
        let stored: Value = io::read_json(&d.join("run/results/c1/T0.04K/s1_r01_c01.json")).unwrap();
        assert_eq!(r, stored);

        let mut args = vec!["spectroscopy"];
        args.extend(family.iter().map(String::as_str));
        let (s, _) = exec(&args).unwrap();
        let (a, b) = (s["delta_e"].as_f64().unwrap(), r["delta_e"].as_f64().unwrap());
        assert!((a - b).abs() < 0.05 * b, "{a} vs {b}");

        let before = std::fs::read(d.join("run/report.json")).unwrap();
        let (rep, _) = exec(&["report", &run]).unwrap();
        assert_eq!(rep["files_read"], 3);
        assert_eq!(std::fs::read(d.join("run/report.json")).unwrap(), before);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let cfg = small_config(d);
        let out = path(d, "syn");
        exec(&["synthesize", "--config", &cfg, "--out", &out, "--seed", "5", "--temperatures", "0.04,1.4"]).unwrap();
        let m: pipeline::Manifest = io::read_json(&d.join("syn/manifest.json")).unwrap();
        assert_eq!(m.config.cohort.seed, 5);
        assert_eq!(m.config.cohort.temperatures, vec![0.04, 1.4]);
        assert!(d.join("syn/traces/c1/T1.4K/s1_r01_c01_forward.csv").is_file());
    }

    #[test]
    fn fatal_errors_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        assert!(matches!(exec(&["report", &path(d, "missing")]), Err(qpc_anomaly::Error::Statistics { .. })));

        std::fs::write(d.join("bad.json"), "{ not json").unwrap();
        let out = path(d, "x");
        assert!(matches!(
            exec(&["run", "--config", &path(d, "bad.json"), "--out", &out]),
            Err(qpc_anomaly::Error::Format { .. })
        ));
        assert!(!d.join("x").exists());
        assert!(matches!(exec(&["analyze", &path(d, "nope.csv")]), Err(qpc_anomaly::Error::Io { .. })));
        assert!(Cli::try_parse_from(["qpc", "run", "--config", "a", "--manifest", "b"]).is_err());
    }
}
