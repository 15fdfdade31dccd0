//! File formats: trace CSV with `# key,value` metadata lines, pretty JSON,
//! and plain CSV tables.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::synthesis::{ConductanceTrace, DeviceId, SweepDirection, TraceMetadata};

pub const TRACE_COLUMNS: [&str; 2] = ["gate_voltage_V", "g_sd_GQ"];

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn trace_to_csv(trace: &ConductanceTrace) -> String {
    let m = &trace.metadata;
    let mut s = String::new();
    let meta: [(&str, String); 12] = [
        ("device", m.device.to_string()),
        ("chip", m.device.chip.to_string()),
        ("row", m.device.row.to_string()),
        ("column", m.device.column.to_string()),
        ("cooldown", m.cooldown.to_string()),
        ("temperature_K", trace.temperature.to_string()),
        ("sweep_direction", trace.sweep_direction.as_str().to_string()),
        ("illuminated", m.illuminated.to_string()),
        ("v_sd_dc_V", trace.v_sd_dc.to_string()),
        ("lever_arm", m.lever_arm.to_string()),
        ("width_um", m.width_um.to_string()),
        ("length_um", m.length_um.to_string()),
    ];
    for (k, v) in meta {
        let _ = writeln!(s, "# {k},{v}");
    }
    let _ = writeln!(s, "{}", TRACE_COLUMNS.join(","));
    for (v, g) in trace.gate_voltage.iter().zip(&trace.g_sd) {
        let _ = writeln!(s, "{v},{g}");
    }
    s
}

pub fn write_trace_csv(path: &Path, trace: &ConductanceTrace) -> Result<()> {
    write_text(path, &trace_to_csv(trace))
}

pub fn read_trace_csv(path: &Path) -> Result<ConductanceTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text).map_err(|m| Error::format(path, m))
}

fn parse_trace_csv(text: &str) -> std::result::Result<ConductanceTrace, String> {
    let mut meta = HashMap::new();
    for line in text.lines().filter_map(|l| l.strip_prefix('#')) {
        if let Some((k, v)) = line.trim().split_once(',') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    fn get<T: std::str::FromStr>(meta: &HashMap<String, String>, key: &str) -> std::result::Result<T, String> {
        meta.get(key)
            .ok_or_else(|| format!("missing metadata '{key}'"))?
            .parse()
            .map_err(|_| format!("bad metadata '{key}'"))
    }
    let device = DeviceId::new(get(&meta, "chip")?, get(&meta, "row")?, get(&meta, "column")?)
        .map_err(|e| e.to_string())?;
    let sweep: SweepDirection = get::<String>(&meta, "sweep_direction")?.parse().map_err(|e: Error| e.to_string())?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != TRACE_COLUMNS {
        return Err(format!("expected columns {TRACE_COLUMNS:?}"));
    }
    let mut gate_voltage = Vec::new();
    let mut g_sd = Vec::new();
    for rec in rdr.deserialize::<(f64, f64)>() {
        let (v, g) = rec.map_err(|e| e.to_string())?;
        gate_voltage.push(v);
        g_sd.push(g);
    }
    let trace = ConductanceTrace {
        gate_voltage,
        g_sd,
        sweep_direction: sweep,
        temperature: get(&meta, "temperature_K")?,
        v_sd_dc: get(&meta, "v_sd_dc_V")?,
        metadata: TraceMetadata {
            device,
            cooldown: get(&meta, "cooldown")?,
            illuminated: get(&meta, "illuminated")?,
            lever_arm: get(&meta, "lever_arm")?,
            width_um: get(&meta, "width_um").unwrap_or(0.0),
            length_um: get(&meta, "length_um").unwrap_or(0.0),
        },
    };
    trace.validate().map_err(|e| e.to_string())?;
    Ok(trace)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes serializable rows as CSV with a header from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace() -> ConductanceTrace {
        ConductanceTrace {
            gate_voltage: vec![-0.7, -0.65, -0.6],
            g_sd: vec![1e-3, 0.5, 0.999_999_999_7],
            sweep_direction: SweepDirection::Backward,
            temperature: 1.4,
            v_sd_dc: 2.5e-4,
            metadata: TraceMetadata {
                device: DeviceId::new(3, 16, 2).unwrap(),
                cooldown: 2,
                illuminated: true,
                lever_arm: 0.05,
                width_um: 0.4,
                length_um: 0.3,
            },
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = trace();
        let text = trace_to_csv(&t);
        assert!(text.starts_with("# device,S3-D(16,2)\n"));
        assert_eq!(parse_trace_csv(&text).unwrap(), t);
    }

    #[test]
    fn bad_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let text = trace_to_csv(&trace()).replace("g_sd_GQ", "g");
        write_text(&p, &text).unwrap();
        assert!(matches!(read_trace_csv(&p), Err(Error::Format { .. })));
    }

    proptest::proptest! {
        #[test]
        fn csv_round_trip_any_trace(g in proptest::collection::vec(-0.1..3.5f64, 2..50), v0 in -2.0..0.0f64, t in 0.01..4.0f64) {
            let mut tr = trace();
            tr.gate_voltage = (0..g.len()).map(|i| v0 + 1e-3 * i as f64).collect();
            tr.g_sd = g;
            tr.temperature = t;
            proptest::prop_assert_eq!(parse_trace_csv(&trace_to_csv(&tr)).unwrap(), tr);
        }
    }
}
