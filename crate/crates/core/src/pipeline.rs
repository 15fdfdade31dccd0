//! End-to-end runs: cohort generation, multiplexed measurement, analysis,
//! persistence and cohort reports with plot tables.
//!
//! Output layout of a run directory:
//!
//! ```text
//! manifest.json            resolved configuration
//! cohort.json              device records of every cooldown
//! measurement_log.jsonl    one line per visited address
//! traces/...               trace CSVs (when enabled)
//! results/c{c}/T{t}K/...   one AnalysisResult per measured device
//! results_index.json
//! report.json
//! plots/*.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze_device, AnalysisConfig, AnalysisResult};
use crate::error::{Error, Result};
use crate::io;
use crate::mux::{self, DefectMap, LogEntry, Measurement};
use crate::rng;
use crate::statistics::{cohort_report, correlation_suite, CohortReport, CorrelationSuite, StatisticsConfig};
use crate::synthesis::{
    generate_cohort, CohortConfig, ConductanceTrace, DeviceId, DeviceModel, SaddleDevice, SweepDirection,
    SynthesisConfig,
};
use crate::transport::ThermalState;
use crate::units::MEV_PER_VOLT;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "QPC_OUTPUT_ROOT";

/// `$QPC_OUTPUT_ROOT/<name>`, or `qpc-output/<name>` when unset.
pub fn default_output_dir(name: &str) -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("qpc-output"))
        .join(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BiasRange {
    /// Up to `factor` times the geometric E_y estimate of the device.
    Nominal { factor: f64 },
    Fixed { max_mv: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementConfig {
    /// White noise on the measured conductance, G_Q.
    pub noise_sigma: f64,
    pub backward: bool,
    /// Number of DC biases in the spectroscopy family, zero bias included;
    /// zero disables spectroscopy.
    pub bias_points: usize,
    pub bias_range: BiasRange,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.005,
            backward: true,
            bias_points: 25,
            bias_range: BiasRange::Nominal { factor: 1.8 },
        }
    }
}

impl MeasurementConfig {
    /// DC biases (V) for a device with geometric E_y estimate `nominal_e_y`.
    pub fn bias_list(&self, nominal_e_y: f64) -> Vec<f64> {
        if self.bias_points < 2 {
            return vec![];
        }
        let max = match self.bias_range {
            BiasRange::Nominal { factor } => factor * nominal_e_y / MEV_PER_VOLT,
            BiasRange::Fixed { max_mv } => max_mv / MEV_PER_VOLT,
        };
        let n = self.bias_points - 1;
        (0..=n).map(|i| max * i as f64 / n as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let max_ok = match self.bias_range {
            BiasRange::Nominal { factor } => factor > 0.0,
            BiasRange::Fixed { max_mv } => max_mv > 0.0,
        };
        if !(self.noise_sigma >= 0.0) || !max_ok || self.bias_points == 1 {
            return Err(Error::Configuration(
                "noise must be >= 0, bias range positive and bias_points 0 or >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Stuck multiplexer branches of one chip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipDefects {
    pub chip: u8,
    pub defects: DefectMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub cohort: CohortConfig,
    pub synthesis: SynthesisConfig,
    pub measurement: MeasurementConfig,
    pub analysis: AnalysisConfig,
    pub statistics: StatisticsConfig,
    pub cooldowns: u32,
    pub illuminated: bool,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub write_traces: bool,
    pub mux_defects: Vec<ChipDefects>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cohort: CohortConfig::default(),
            synthesis: SynthesisConfig::default(),
            measurement: MeasurementConfig::default(),
            analysis: AnalysisConfig::default(),
            statistics: StatisticsConfig::default(),
            cooldowns: 1,
            illuminated: false,
            workers: 0,
            write_traces: false,
            mux_defects: vec![],
        }
    }
}

impl RunConfig {
    /// Five chips of the anomaly-study cohort with a quiet measurement.
    pub fn anomaly_study() -> Self {
        Self {
            cohort: CohortConfig::anomaly_study(),
            measurement: MeasurementConfig { noise_sigma: 0.003, ..MeasurementConfig::default() },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cohort.validate()?;
        self.measurement.validate()?;
        if self.cooldowns == 0 {
            return Err(Error::Configuration("cooldowns must be >= 1".into()));
        }
        if self.cohort.temperatures.is_empty() {
            return Err(Error::Configuration("at least one temperature is required".into()));
        }
        Ok(())
    }

    fn defects(&self, chip: u8) -> DefectMap {
        self.mux_defects
            .iter()
            .filter(|d| d.chip == chip)
            .fold(DefectMap::default(), |mut acc, d| {
                acc.stuck.extend(d.defects.stuck.iter().copied());
                acc
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub package_version: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Self { format_version: 1, package_version: env!("CARGO_PKG_VERSION").into(), config }
    }
}

/// Traces of one device at one temperature.
#[derive(Debug, Clone)]
pub struct DeviceTraces {
    pub forward: ConductanceTrace,
    pub backward: Option<ConductanceTrace>,
    pub family: Vec<ConductanceTrace>,
}

/// Noise seed of one trace kind of one device measurement.
pub fn noise_seed(root: u64, dev: DeviceId, cooldown: u32, temperature_index: usize, kind: u64) -> u64 {
    rng::derive_seed(
        root,
        "noise",
        &[dev.chip as u64, dev.row as u64, dev.column as u64, cooldown as u64, temperature_index as u64, kind],
    )
}

/// Synthesizes every trace the measurement config asks for.
pub fn measure_device(
    cfg: &RunConfig,
    model: &DeviceModel,
    cooldown: u32,
    temperature_index: usize,
) -> Result<DeviceTraces> {
    let dev = &model.device;
    let temperature = cfg.cohort.temperatures[temperature_index];
    let th = ThermalState::new(temperature, 0.0)?;
    let m = &cfg.measurement;
    let seed = |kind| noise_seed(cfg.cohort.seed, dev.id, cooldown, temperature_index, kind);
    let il = cfg.illuminated;
    let forward = model.synthesize_trace(&th, SweepDirection::Forward, 0.0, m.noise_sigma, seed(0), cooldown, il)?;
    let backward = if m.backward {
        Some(model.synthesize_trace(&th, SweepDirection::Backward, 0.0, m.noise_sigma, seed(1), cooldown, il)?)
    } else {
        None
    };
    let biases = m.bias_list(cfg.cohort.nominal_e_y(dev.width_um, dev.length_um, il).max(0.1));
    let family = if biases.is_empty() {
        vec![]
    } else {
        model.bias_sweep_family(&th, SweepDirection::Forward, &biases, m.noise_sigma, seed(2), cooldown, il)?
    };
    Ok(DeviceTraces { forward, backward, family })
}

pub fn analyze_traces(traces: &DeviceTraces, cfg: &AnalysisConfig) -> AnalysisResult {
    analyze_device(
        &traces.forward,
        traces.backward.as_ref(),
        (!traces.family.is_empty()).then_some(traces.family.as_slice()),
        cfg,
    )
}

fn temperature_dir(t: f64) -> String {
    format!("T{t}K")
}

fn device_stem(id: DeviceId) -> String {
    format!("s{}_r{:02}_c{:02}", id.chip, id.row, id.column)
}

fn trace_files<'a>(dir: &Path, id: DeviceId, tr: &'a DeviceTraces) -> Vec<(PathBuf, &'a ConductanceTrace)> {
    let stem = device_stem(id);
    let mut out = vec![(dir.join(format!("{stem}_forward.csv")), &tr.forward)];
    if let Some(b) = &tr.backward {
        out.push((dir.join(format!("{stem}_backward.csv")), b));
    }
    for (i, t) in tr.family.iter().enumerate() {
        out.push((dir.join(format!("{stem}_bias{i:02}.csv")), t));
    }
    out
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Configuration(e.to_string()))?;
    Ok(pool.install(f))
}

fn prepare_dir(out: &Path) -> Result<()> {
    if out.exists() {
        let mut entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
        if entries.next().is_some() {
            return Err(Error::Argument(format!("output directory {} is not empty", out.display())));
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Runs `body` in a fresh output directory, removing it again on failure.
fn guarded<T>(out: &Path, body: impl FnOnce() -> Result<T>) -> Result<T> {
    prepare_dir(out)?;
    let r = body();
    if r.is_err() {
        let _ = std::fs::remove_dir_all(out);
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub cooldown: u32,
    pub illuminated: bool,
    pub devices: Vec<SaddleDevice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizeSummary {
    pub devices: usize,
    pub functional: usize,
    pub trace_files: usize,
    pub failures: Vec<String>,
}

/// Writes the manifest, cohort records and every trace of every functional
/// device.
pub fn synthesize(cfg: &RunConfig, out: &Path) -> Result<SynthesizeSummary> {
    cfg.validate()?;
    guarded(out, || {
        io::write_json(&out.join("manifest.json"), &Manifest::new(cfg.clone()))?;
        let mut records = Vec::new();
        let mut summary = SynthesizeSummary { devices: 0, functional: 0, trace_files: 0, failures: vec![] };
        for c in 1..=cfg.cooldowns {
            let devices = generate_cohort(&cfg.cohort, c, cfg.illuminated)?;
            summary.devices += devices.len();
            let functional: Vec<&SaddleDevice> = devices.iter().filter(|d| d.functional).collect();
            summary.functional += functional.len();
            for (ti, t) in cfg.cohort.temperatures.iter().enumerate() {
                let dir = out.join("traces").join(format!("c{c}")).join(temperature_dir(*t));
                let traces: Vec<(DeviceId, Result<DeviceTraces>)> = with_pool(cfg.workers, || {
                    functional
                        .par_iter()
                        .map(|d| {
                            let r = DeviceModel::new(d, &cfg.synthesis).and_then(|m| measure_device(cfg, &m, c, ti));
                            (d.id, r)
                        })
                        .collect()
                })?;
                for (id, r) in traces {
                    match r {
                        Ok(tr) => {
                            for (p, t) in trace_files(&dir, id, &tr) {
                                io::write_trace_csv(&p, t)?;
                                summary.trace_files += 1;
                            }
                        }
                        Err(e) => summary.failures.push(format!("{id} cooldown {c}: {e}")),
                    }
                }
            }
            records.push(CohortRecord { cooldown: c, illuminated: cfg.illuminated, devices });
        }
        io::write_json(&out.join("cohort.json"), &records)?;
        Ok(summary)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub device: DeviceId,
    pub cooldown: u32,
    pub temperature: f64,
    pub illuminated: bool,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub addresses: usize,
    pub functional: usize,
    pub measured: usize,
    pub faults: usize,
    pub measurement_errors: usize,
    pub report: ReportSummary,
}

/// Full pipeline into an empty directory `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    guarded(out, || run_into(cfg, out))
}

/// Re-runs the configuration recorded in a manifest.
pub fn run_manifest(manifest: &Path, out: &Path) -> Result<RunSummary> {
    let m: Manifest = io::read_json(manifest)?;
    run(&m.config, out)
}

fn run_into(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    io::write_json(&out.join("manifest.json"), &Manifest::new(cfg.clone()))?;
    let mut log: Vec<LogEntry> = Vec::new();
    let mut index: Vec<IndexEntry> = Vec::new();
    let mut records = Vec::new();
    let mut functional = 0;
    for c in 1..=cfg.cooldowns {
        let devices = generate_cohort(&cfg.cohort, c, cfg.illuminated)?;
        functional += devices.iter().filter(|d| d.functional).count();
        let chips: Vec<u8> = (1..=cfg.cohort.chips.len() as u8).collect();
        // Only functional devices on fault-free paths are measured.
        let targets: Vec<&SaddleDevice> = devices
            .iter()
            .filter(|d| d.functional)
            .filter(|d| {
                let addr = mux::MuxAddress { row: d.id.row, column: d.id.column };
                mux::check_address(addr, &cfg.defects(d.id.chip)).is_none()
            })
            .collect();
        let models: Vec<Result<DeviceModel>> = with_pool(cfg.workers, || {
            targets.par_iter().map(|d| DeviceModel::new(d, &cfg.synthesis)).collect()
        })?;
        for (ti, &t) in cfg.cohort.temperatures.iter().enumerate() {
            let outcomes: Vec<Result<(AnalysisResult, Option<DeviceTraces>)>> = with_pool(cfg.workers, || {
                models
                    .par_iter()
                    .map(|m| {
                        let m = m.as_ref().map_err(|e| Error::Argument(e.to_string()))?;
                        let tr = measure_device(cfg, m, c, ti)?;
                        let res = analyze_traces(&tr, &cfg.analysis);
                        Ok((res, cfg.write_traces.then_some(tr)))
                    })
                    .collect()
            })?;
            let mut by_id: BTreeMap<DeviceId, Result<(AnalysisResult, Option<DeviceTraces>)>> =
                targets.iter().map(|d| d.id).zip(outcomes).collect();
            let rel_dir = PathBuf::from("results").join(format!("c{c}")).join(temperature_dir(t));
            let trace_dir = out.join("traces").join(format!("c{c}")).join(temperature_dir(t));
            for &chip in &chips {
                let chip_devices: Vec<SaddleDevice> =
                    devices.iter().filter(|d| d.id.chip == chip).cloned().collect();
                let mut write_error = None;
                let entries = mux::schedule_sweep(chip, c, &chip_devices, &cfg.defects(chip), |d| {
                    match by_id.remove(&d.id) {
                        Some(Ok((res, traces))) => {
                            let rel = rel_dir.join(format!("{}.json", device_stem(d.id)));
                            let mut written = io::write_json(&out.join(&rel), &res);
                            if let (Ok(()), Some(tr)) = (&written, &traces) {
                                written = trace_files(&trace_dir, d.id, tr)
                                    .into_iter()
                                    .try_for_each(|(p, t)| io::write_trace_csv(&p, t));
                            }
                            if let Err(e) = written {
                                write_error.get_or_insert(e);
                                return Measurement { result_file: None, error: Some("write failed".into()) };
                            }
                            let file = rel.to_string_lossy().replace('\\', "/");
                            index.push(IndexEntry {
                                device: d.id,
                                cooldown: c,
                                temperature: t,
                                illuminated: cfg.illuminated,
                                file: file.clone(),
                            });
                            let error = (!res.errors.is_empty()).then(|| res.errors.join("; "));
                            Measurement { result_file: Some(file), error }
                        }
                        Some(Err(e)) => Measurement { result_file: None, error: Some(e.to_string()) },
                        None => Measurement { result_file: None, error: Some("not measured".into()) },
                    }
                });
                if let Some(e) = write_error {
                    return Err(e);
                }
                log.extend(entries);
            }
        }
        records.push(CohortRecord { cooldown: c, illuminated: cfg.illuminated, devices });
    }
    io::write_json(&out.join("cohort.json"), &records)?;
    mux::write_log(&out.join("measurement_log.jsonl"), &log)?;
    io::write_json(&out.join("results_index.json"), &index)?;
    let report = report(out)?;
    Ok(RunSummary {
        addresses: log.len(),
        functional,
        measured: log.iter().filter(|e| e.result_file.is_some()).count(),
        faults: log.iter().filter(|e| e.outcome == mux::Outcome::Fault).count(),
        measurement_errors: log.iter().filter(|e| e.outcome == mux::Outcome::MeasurementError).count(),
        report,
    })
}

/// Result files under `dir/results`, sorted.
fn result_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(p: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for e in std::fs::read_dir(p).map_err(|e| Error::io(p, e))? {
            let path = e.map_err(|e| Error::io(p, e))?.path();
            if path.is_dir() {
                walk(&path, out)?;
            } else if path.extension().is_some_and(|x| x == "json") {
                out.push(path);
            }
        }
        Ok(())
    }
    let root = dir.join("results");
    let mut out = Vec::new();
    if root.is_dir() {
        walk(&root, &mut out)?;
    }
    out.sort();
    Ok(out)
}

/// One cohort report per (temperature, illumination) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub temperature: f64,
    pub illuminated: bool,
    pub report: CohortReport,
    pub correlations_by_cooldown: Vec<(u32, Option<CorrelationSuite>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub files_read: usize,
    pub warnings: Vec<String>,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub files_read: usize,
    pub warnings: usize,
    pub groups: usize,
}

/// Loads every result file of a run directory; unreadable files become
/// warnings.
pub fn load_results(dir: &Path) -> Result<(Vec<AnalysisResult>, Vec<String>)> {
    let mut results = Vec::new();
    let mut warnings = Vec::new();
    for p in result_files(dir)? {
        match io::read_json::<AnalysisResult>(&p) {
            Ok(r) => results.push(r),
            Err(e) => warnings.push(e.to_string()),
        }
    }
    Ok((results, warnings))
}

fn statistics_config(dir: &Path) -> StatisticsConfig {
    io::read_json::<Manifest>(&dir.join("manifest.json"))
        .map(|m| m.config.statistics)
        .unwrap_or_default()
}

/// Re-aggregates the results of a run directory into `report.json` and
/// `plots/`. Never re-analyzes.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    let (results, warnings) = load_results(dir)?;
    if results.is_empty() {
        return Err(Error::Statistics { reason: "no readable result files".into(), count: 0 });
    }
    let stats = statistics_config(dir);
    let mut keys: Vec<(u64, bool)> = results.iter().map(|r| (r.temperature.to_bits(), r.illuminated)).collect();
    keys.sort_by(|a, b| f64::from_bits(a.0).total_cmp(&f64::from_bits(b.0)).then(a.1.cmp(&b.1)));
    keys.dedup();
    let mut groups = Vec::new();
    for (t, il) in keys {
        let subset: Vec<AnalysisResult> = results
            .iter()
            .filter(|r| r.temperature.to_bits() == t && r.illuminated == il)
            .cloned()
            .collect();
        let rep = cohort_report(&subset, &stats)?;
        let mut cooldowns: Vec<u32> = subset.iter().map(|r| r.cooldown).collect();
        cooldowns.sort();
        cooldowns.dedup();
        let correlations_by_cooldown = cooldowns
            .into_iter()
            .map(|c| {
                let part: Vec<AnalysisResult> = subset.iter().filter(|r| r.cooldown == c).cloned().collect();
                (c, correlation_suite(&part, &stats).ok())
            })
            .collect();
        groups.push(GroupReport {
            temperature: f64::from_bits(t),
            illuminated: il,
            report: rep,
            correlations_by_cooldown,
        });
    }
    let file = ReportFile { files_read: results.len(), warnings, groups };
    io::write_json(&dir.join("report.json"), &file)?;
    write_plots(&dir.join("plots"), &results, &file)?;
    Ok(ReportSummary { files_read: file.files_read, warnings: file.warnings.len(), groups: file.groups.len() })
}

#[derive(Serialize)]
struct CooldownPairRow<'a> {
    temperature: f64,
    illuminated: bool,
    device: &'a str,
    cooldown_a: u32,
    cooldown_b: u32,
    value_a: f64,
    value_b: f64,
}

#[derive(Serialize)]
struct GeometryPlotRow<'a> {
    temperature: f64,
    device: &'a str,
    cooldown: u32,
    illuminated: bool,
    width_um: f64,
    length_um: f64,
    value: f64,
}

#[derive(Serialize)]
struct YieldRow {
    temperature: f64,
    cooldown: u32,
    illuminated: bool,
    n_measured: usize,
    n_good_fit: usize,
    n_suppressed: usize,
    n_riser_split: usize,
    y_tc_07: f64,
    y_rs_07: f64,
}

#[derive(Serialize)]
struct CurveRow {
    temperature: f64,
    cooldown: u32,
    device: String,
    subband: u32,
    kappa: f64,
    value: Option<f64>,
}

#[derive(Serialize)]
struct DepthRow {
    temperature: f64,
    cooldown: u32,
    device: String,
    sqrt_u_e: f64,
    depth: f64,
}

#[derive(Serialize)]
struct FixedKappaRow {
    temperature: f64,
    cooldown: u32,
    device: String,
    kappa: f64,
    s_g: f64,
    e_x: Option<f64>,
    inv_u_e: Option<f64>,
}

#[derive(Serialize)]
struct RhoRow {
    temperature: f64,
    illuminated: bool,
    /// Empty for the pooled cohort.
    cooldown: Option<u32>,
    kappa: f64,
    rho_s_g_e_x: f64,
    rho_s_g_inv_u_e: f64,
    n: usize,
}

#[derive(Serialize)]
struct TemperatureRow {
    device: String,
    cooldown: u32,
    illuminated: bool,
    temperature: f64,
    s_tc_07: Option<f64>,
    kappa_tc_07: Option<f64>,
    g_tc_07: Option<f64>,
}

fn write_plots(dir: &Path, results: &[AnalysisResult], rep: &ReportFile) -> Result<()> {
    let mut pairs_ex = Vec::new();
    let mut pairs_de = Vec::new();
    let mut geo_ex = Vec::new();
    let mut geo_de = Vec::new();
    let mut yields = Vec::new();
    let mut rhos = Vec::new();
    for g in &rep.groups {
        let s = &g.report.scatter;
        if let Some((a, b)) = s.cooldowns {
            for (rows, out) in [(&s.e_x_cooldowns, &mut pairs_ex), (&s.delta_e_cooldowns, &mut pairs_de)] {
                out.extend(rows.iter().map(|r| CooldownPairRow {
                    temperature: g.temperature,
                    illuminated: g.illuminated,
                    device: &r.device,
                    cooldown_a: a,
                    cooldown_b: b,
                    value_a: r.first,
                    value_b: r.second,
                }));
            }
        }
        for (rows, out) in [(&s.e_x_vs_length, &mut geo_ex), (&s.delta_e_vs_length, &mut geo_de)] {
            out.extend(rows.iter().map(|r| GeometryPlotRow {
                temperature: g.temperature,
                device: &r.device,
                cooldown: r.cooldown,
                illuminated: r.illuminated,
                width_um: r.width_um,
                length_um: r.length_um,
                value: r.value,
            }));
        }
        yields.extend(g.report.by_cooldown.iter().map(|c| YieldRow {
            temperature: c.temperature,
            cooldown: c.cooldown,
            illuminated: c.illuminated,
            n_measured: c.yields.n_measured,
            n_good_fit: c.yields.n_good_fit,
            n_suppressed: c.yields.n_suppressed,
            n_riser_split: c.yields.n_riser_split,
            y_tc_07: c.yields.y_tc_07,
            y_rs_07: c.yields.y_rs_07,
        }));
        let suites = std::iter::once((None, g.report.correlations.as_ref()))
            .chain(g.correlations_by_cooldown.iter().map(|(c, s)| (Some(*c), s.as_ref())));
        for (cooldown, suite) in suites {
            if let Some(suite) = suite {
                for (a, b) in suite.s_g_vs_e_x.iter().zip(&suite.s_g_vs_inv_ue) {
                    rhos.push(RhoRow {
                        temperature: g.temperature,
                        illuminated: g.illuminated,
                        cooldown,
                        kappa: a.kappa.unwrap_or(f64::NAN),
                        rho_s_g_e_x: a.rho,
                        rho_s_g_inv_u_e: b.rho,
                        n: a.n.min(b.n),
                    });
                }
            }
        }
    }
    io::write_csv(&dir.join("ex_cooldowns.csv"), &pairs_ex)?;
    io::write_csv(&dir.join("ex_vs_length.csv"), &geo_ex)?;
    io::write_csv(&dir.join("delta_e_cooldowns.csv"), &pairs_de)?;
    io::write_csv(&dir.join("delta_e_vs_length.csv"), &geo_de)?;
    io::write_csv(&dir.join("yields.csv"), &yields)?;
    io::write_csv(&dir.join("correlations.csv"), &rhos)?;

    let good: Vec<&AnalysisResult> = results.iter().filter(|r| r.good_fit).collect();
    let mut curves = Vec::new();
    let mut steps = Vec::new();
    for r in &good {
        for c in &r.curves {
            let device = r.device.to_string();
            curves.extend(c.kappa.iter().zip(&c.s_tc).map(|(k, s)| CurveRow {
                temperature: r.temperature,
                cooldown: r.cooldown,
                device: device.clone(),
                subband: c.subband,
                kappa: *k,
                value: s.map(|s| 1.0 - s),
            }));
            if c.subband == 1 {
                steps.extend(c.kappa.iter().zip(&c.g).map(|(k, g)| CurveRow {
                    temperature: r.temperature,
                    cooldown: r.cooldown,
                    device: device.clone(),
                    subband: 1,
                    kappa: *k,
                    value: Some(*g),
                }));
            }
        }
    }
    io::write_csv(&dir.join("suppression_curves.csv"), &curves)?;
    io::write_csv(&dir.join("first_step.csv"), &steps)?;

    let depth: Vec<DepthRow> = good
        .iter()
        .filter_map(|r| {
            let s = r.s_tc_07.first().copied().flatten()?;
            Some(DepthRow {
                temperature: r.temperature,
                cooldown: r.cooldown,
                device: r.device.to_string(),
                sqrt_u_e: r.u_e()?.sqrt(),
                depth: 1.0 - s,
            })
        })
        .collect();
    io::write_csv(&dir.join("depth_vs_sqrt_ue.csv"), &depth)?;

    let fixed: Vec<FixedKappaRow> = good
        .iter()
        .flat_map(|r| {
            r.s_g_fixed.iter().filter_map(move |(k, s)| {
                Some(FixedKappaRow {
                    temperature: r.temperature,
                    cooldown: r.cooldown,
                    device: r.device.to_string(),
                    kappa: *k,
                    s_g: (*s)?,
                    e_x: r.e_x_forward.first().copied().flatten(),
                    inv_u_e: r.u_e().map(|u| 1.0 / u),
                })
            })
        })
        .collect();
    io::write_csv(&dir.join("s_g_fixed_kappa.csv"), &fixed)?;

    let temps: Vec<u64> = {
        let mut t: Vec<u64> = results.iter().map(|r| r.temperature.to_bits()).collect();
        t.sort();
        t.dedup();
        t
    };
    if temps.len() > 1 {
        let rows: Vec<TemperatureRow> = results
            .iter()
            .map(|r| TemperatureRow {
                device: r.device.to_string(),
                cooldown: r.cooldown,
                illuminated: r.illuminated,
                temperature: r.temperature,
                s_tc_07: r.s_tc_07.first().copied().flatten(),
                kappa_tc_07: r.kappa_tc_07,
                g_tc_07: r.g_tc_07,
            })
            .collect();
        io::write_csv(&dir.join("temperature_comparison.csv"), &rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut cfg = RunConfig::anomaly_study();
        cfg.cohort.chips.truncate(1);
        cfg.cohort.devices_per_chip = 4;
        cfg.cohort.defect_probability = 0.0;
        cfg.measurement.bias_points = 0;
        cfg.measurement.backward = false;
        cfg
    }

    #[test]
    fn bias_list_spans_range() {
        let m = MeasurementConfig { bias_points: 5, bias_range: BiasRange::Fixed { max_mv: 4.0 }, ..Default::default() };
        assert_eq!(m.bias_list(1.0), vec![0.0, 0.001, 0.002, 0.003, 0.004]);
        assert!(MeasurementConfig { bias_points: 0, ..Default::default() }.bias_list(1.0).is_empty());
    }

    #[test]
    fn synthesize_writes_one_trace_per_device() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("syn");
        let mut cfg = tiny();
        cfg.cohort.devices_per_chip = 1;
        let s = synthesize(&cfg, &out).unwrap();
        assert_eq!((s.devices, s.functional, s.trace_files), (1, 1, 1));
        assert!(out.join("manifest.json").is_file());
        assert!(out.join("traces/c1/T0.04K/s1_r01_c01_forward.csv").is_file());
    }

    #[test]
    fn run_refuses_non_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("x"), "").unwrap();
        assert!(matches!(run(&tiny(), dir.path()), Err(Error::Argument(_))));
    }

    #[test]
    fn report_on_empty_dir_is_statistics_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report(dir.path()), Err(Error::Statistics { .. })));
    }
}
