//! Acceptance checks, one line per criterion. Pass criterion numbers as
//! arguments to run a subset: `cargo test --test acceptance -- 1 4`.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use qpc_anomaly::analysis::{analyze_device, analyze_trace, extract_subband_spacing, AnalysisConfig};
use qpc_anomaly::io;
use qpc_anomaly::mux;
use qpc_anomaly::pipeline::{self, ReportFile, RunConfig};
use qpc_anomaly::statistics::pearson;
use qpc_anomaly::synthesis::{
    generate_cohort, CohortConfig, DeviceId, DeviceModel, SaddleDevice, SweepDirection, SynthesisConfig,
};
use qpc_anomaly::transport::ThermalState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn device(e_x: f64, e_y: f64, u: f64, r: f64) -> SaddleDevice {
    SaddleDevice {
        id: DeviceId::new(1, 1, 1).unwrap(),
        width_um: 0.6,
        length_um: 0.4,
        e_x,
        e_y,
        lever_arm: 0.05,
        v_riser: -0.6,
        u,
        series_resistance: r,
        functional: true,
    }
}

fn percentile(mut v: Vec<f64>, p: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let pos = p * (v.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < v.len() {
        v[i] * (1.0 - f) + v[i + 1] * f
    } else {
        v[i]
    }
}

fn median(v: Vec<f64>) -> f64 {
    percentile(v, 0.5)
}

fn ldos_scaling() -> Outcome {
    let t = Instant::now();
    let model = SynthesisConfig::default().interaction;
    let e_x = [0.5, 1.0, 2.0, 4.0];
    let peaks: Vec<f64> = e_x.iter().map(|&e| model.ldos_curve(e, 8.0).unwrap().ldos_max).collect();
    let lx: Vec<f64> = e_x.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = peaks.iter().map(|p| p.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / 4.0, ly.iter().sum::<f64>() / 4.0);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let secs = t.elapsed().as_secs_f64();
    ((slope + 0.5).abs() <= 0.05 && secs < 60.0, format!("slope {slope:.4} in {secs:.1} s"))
}

fn hartree_identity() -> Outcome {
    let model = SynthesisConfig::default().interaction;
    let curve = model.ldos_curve(0.5, 4.0).unwrap();
    let u = model.u_for_peak(0.5, 4.0, 0.8).unwrap();
    let map = qpc_anomaly::vanhove::HartreeMap::from_curve(&curve, u).unwrap();
    let d = 1e-6 * map.e_x;
    let mut worst = 0.0f64;
    for (i, &v_c) in map.v_c_grid.iter().enumerate() {
        let fd = (map.v_c_hartree_at(v_c + d) - map.v_c_hartree_at(v_c - d)) / (2.0 * d);
        worst = worst.max((fd - (1.0 - map.u_eff_grid[i])).abs());
    }
    (worst < 1e-4, format!("max |dVh/dVc - (1 - U_eff)| = {worst:.2e} over {} nodes", map.v_c_grid.len()))
}

fn suppression_identity() -> Outcome {
    let cfg = SynthesisConfig::default();
    let u = cfg.interaction.u_for_peak(0.5, 4.0, 0.56).unwrap();
    let model = DeviceModel::new(&device(0.5, 4.0, u, 0.0), &cfg).unwrap();
    let th = ThermalState::new(0.04, 0.0).unwrap();
    let trace = model.synthesize_trace(&th, SweepDirection::Forward, 0.0, 0.0, 0, 1, false).unwrap();
    let step = model.thermal_step(0.04).unwrap();
    let (v, g) = trace.ascending();
    let k: Vec<f64> = v.iter().map(|&x| model.kappa_at(x, SweepDirection::Forward)).collect();
    let mut worst = 0.0f64;
    let mut n = 0;
    for i in 1..k.len() - 1 {
        // riser of the first subband, from 5% to 95% of the step
        if !(0.05..=0.95).contains(&g[i]) || k[i] > 0.5 * model.pot.riser_offset(2) {
            continue;
        }
        let tc = (g[i + 1] - g[i - 1]) / (k[i + 1] - k[i - 1]);
        let ratio = tc / model.transconductance_reference(k[i], &step);
        worst = worst.max((ratio - (1.0 - model.u_eff(1, k[i]))).abs());
        n += 1;
    }
    (n > 20 && worst < 1e-3, format!("max |TC/TC0 - (1 - U_eff)| = {worst:.2e} over {n} riser samples"))
}

fn ex_round_trip() -> Outcome {
    let dev = device(1.0, 5.0, 0.0, 1000.0);
    let model = DeviceModel::new(&dev, &SynthesisConfig::default()).unwrap();
    let th = ThermalState::new(0.04, 0.0).unwrap();
    let acfg = AnalysisConfig::default();
    let fit = |noise: f64, seed: u64| -> f64 {
        let tr = model.synthesize_trace(&th, SweepDirection::Forward, 0.0, noise, seed, 1, false).unwrap();
        analyze_trace(&tr, &acfg).unwrap().subband(1).unwrap().fit.e_x
    };
    let exact = ((fit(0.0, 0) - dev.e_x) / dev.e_x).abs();
    let errs: Vec<f64> = (0..100).map(|s| ((fit(0.005, s) - dev.e_x) / dev.e_x).abs()).collect();
    let p95 = percentile(errs, 0.95);
    (p95 < 0.02 && exact < 1e-4, format!("noisy p95 {:.2}%, noiseless {exact:.1e}", 100.0 * p95))
}

fn delta_e_round_trip() -> Outcome {
    let th = ThermalState::new(0.04, 0.0).unwrap();
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for e_y in [1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0] {
        let dev = device(0.3, e_y, 0.0, 1000.0);
        let model = DeviceModel::new(&dev, &SynthesisConfig::default()).unwrap();
        let v_max = 1.8 * e_y * 1e-3;
        let biases: Vec<f64> = (0..25).map(|i| i as f64 * v_max / 24.0).collect();
        let fam = model.bias_sweep_family(&th, SweepDirection::Forward, &biases, 0.005, 11, 1, false).unwrap();
        let rel = match extract_subband_spacing(&fam, dev.series_resistance) {
            Ok(s) => ((s.delta_e - e_y) / e_y).abs(),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(rel);
        detail.push(format!("{e_y}:{:.1}%", 100.0 * rel));
    }
    (worst < 0.05, format!("relative error by E_y {}", detail.join(" ")))
}

fn anomaly_metrics() -> Outcome {
    let cfg = SynthesisConfig::default();
    let th = ThermalState::new(0.04, 0.0).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (peak, want_s, want_split) in [(0.88, 0.12, true), (0.56, 0.44, false)] {
        let u = cfg.interaction.u_for_peak(0.5, 4.0, peak).unwrap();
        let model = DeviceModel::new(&device(0.5, 4.0, u, 1000.0), &cfg).unwrap();
        let tr = model.synthesize_trace(&th, SweepDirection::Forward, 0.0, 0.0, 0, 1, false).unwrap();
        let r = analyze_device(&tr, None, None, &AnalysisConfig::default());
        let s = r.s_tc_07[0];
        let split = r.riser_split;
        ok &= s.is_some_and(|s| (s - want_s).abs() <= 0.02) && split == Some(want_split);
        detail.push(format!(
            "U_eff {peak}: S_TC {} (want {want_s}), split {split:?} (want {want_split})",
            s.map_or("none".into(), |s| format!("{s:.3}"))
        ));
    }
    (ok, detail.join("; "))
}

/// Median suppression depth per subband over good-fit devices.
fn depth_by_subband(results: &[qpc_anomaly::analysis::AnalysisResult]) -> Vec<f64> {
    (0..3)
        .map(|n| {
            median(
                results
                    .iter()
                    .filter(|r| r.good_fit)
                    .filter_map(|r| r.s_tc_07.get(n).copied().flatten().map(|s| 1.0 - s))
                    .collect(),
            )
        })
        .collect()
}

fn plateau_ordering(run: &Path) -> Outcome {
    let (results, _) = pipeline::load_results(run).unwrap();
    let d = depth_by_subband(&results);
    let ok = d[0] > d[1] && d[1] > d[2] && d[2] < 0.05;
    (ok, format!("median depth N=1 {:.3}, N=2 {:.3}, N=3 {:.3}", d[0], d[1], d[2]))
}

fn temperature_ordering() -> Outcome {
    let cfg = SynthesisConfig::default();
    let u = cfg.interaction.u_for_peak(0.5, 4.0, 0.56).unwrap();
    let model = DeviceModel::new(&device(0.5, 4.0, u, 0.0), &cfg).unwrap();
    let cold = ThermalState::new(0.04, 0.0).unwrap();
    let tr = model.synthesize_trace(&cold, SweepDirection::Forward, 0.0, 0.0, 0, 1, false).unwrap();
    let a = analyze_trace(&tr, &AnalysisConfig::default()).unwrap();
    let s1 = a.subband(1).unwrap();
    let Some(m) = s1.suppression.minimum else {
        return (false, "no S_TC minimum at 40 mK".into());
    };
    let gate = s1.kappa.gate_at(m.kappa);
    let k = model.kappa_at(gate, SweepDirection::Forward);
    let g_cold = model.conductance(k, &model.thermal_step(0.04).unwrap());
    let g_warm = model.conductance(k, &model.thermal_step(1.4).unwrap());
    (g_warm < g_cold, format!("G at kappa_TC^0.7: 40 mK {g_cold:.4}, 1.4 K {g_warm:.4}"))
}

fn cohort_statistics(run: &Path, secs: f64) -> Outcome {
    let counts: Vec<usize> = (1..=10)
        .map(|seed| {
            let c = CohortConfig { seed, ..CohortConfig::anomaly_study() };
            generate_cohort(&c, 1, false).unwrap().iter().filter(|d| d.functional).count()
        })
        .collect();
    let count_ok = counts.iter().all(|&n| n.abs_diff(571) <= 40);

    let rep: ReportFile = io::read_json(&run.join("report.json")).unwrap();
    let g = &rep.groups[0].report;
    let yields_ok = g.by_cooldown.iter().all(|c| c.yields.y_rs_07 < c.yields.y_tc_07);
    let ys: Vec<String> = g
        .by_cooldown
        .iter()
        .map(|c| format!("c{} {:.2}/{:.2}", c.cooldown, c.yields.y_rs_07, c.yields.y_tc_07))
        .collect();

    let corr = g.correlations.as_ref().expect("correlations");
    let depth = corr.depth_vs_sqrt_ue.as_ref().map_or(f64::NAN, |c| c.rho);
    let mut s_g_ok = !corr.s_g_vs_e_x.is_empty();
    let mut sg = Vec::new();
    for (ex, inv) in corr.s_g_vs_e_x.iter().zip(&corr.s_g_vs_inv_ue) {
        s_g_ok &= inv.rho > ex.rho;
        sg.push(format!("k{} {:.3}>{:.3}", ex.kappa.unwrap_or(f64::NAN), inv.rho, ex.rho));
    }
    let ok = count_ok && yields_ok && depth > 0.0 && s_g_ok && secs < 600.0;
    (
        ok,
        format!(
            "functional {:?}; y_rs/y_tc {}; rho(depth, sqrt U_E) {depth:.3}; rho(S_G,1/U_E)>rho(S_G,E_x) {}; run {secs:.0} s",
            counts,
            ys.join(" "),
            sg.join(" ")
        ),
    )
}

fn mux_correctness() -> Outcome {
    let c = mux::mux_check();
    let contacts = mux::LINES_PER_MUX + mux::LINES_PER_MUX + mux::SHARED_CONTACTS;
    let ok = c.passed && c.contacts == 19 && contacts == 19 && c.distinct_line_states == 256 && c.healthy_singletons == 256;
    (ok, format!("{} addresses, {} distinct, {} singletons, {} contacts", c.addresses, c.distinct_line_states, c.healthy_singletons, c.contacts))
}

fn pearson_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for n in (5..=1000).step_by(7) {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.random_range(-5.0..5.0)).collect();
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let def = cov / (vx * vy).sqrt();
        worst = worst.max((pearson(&x, &y).unwrap() - def).abs());
    }
    (worst < 1e-12, format!("max deviation {worst:.1e}"))
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::anomaly_study();
    cfg.cohort.chips.truncate(1);
    cfg.cohort.devices_per_chip = 24;
    cfg.measurement.bias_points = 9;
    cfg.write_traces = true;
    let seed_run = dir.path().join("seed");
    pipeline::run(&cfg, &seed_run).unwrap();
    let manifest = seed_run.join("manifest.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pipeline::run_manifest(&manifest, &a).unwrap();
    pipeline::run_manifest(&manifest, &b).unwrap();
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    let same = ta == tb;
    (same && !ta.is_empty(), format!("{} files compared, identical {same}", ta.len()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        (1..=12).for_each(|n| println!("criterion {n}: test"));
        return ExitCode::SUCCESS;
    }
    let only: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| only.is_empty() || only.contains(&n);

    let mut cohort_run = None;
    if want(7) || want(9) {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::anomaly_study();
        cfg.cooldowns = 2;
        let t = Instant::now();
        pipeline::run(&cfg, &dir.path().join("run")).unwrap();
        cohort_run = Some((dir, t.elapsed().as_secs_f64()));
    }
    let run_dir = || cohort_run.as_ref().unwrap().0.path().join("run");

    let mut failed = 0;
    for n in 1..=12 {
        if !want(n) {
            continue;
        }
        let (ok, detail) = match n {
            1 => ldos_scaling(),
            2 => hartree_identity(),
            3 => suppression_identity(),
            4 => ex_round_trip(),
            5 => delta_e_round_trip(),
            6 => anomaly_metrics(),
            7 => plateau_ordering(&run_dir()),
            8 => temperature_ordering(),
            9 => cohort_statistics(&run_dir(), cohort_run.as_ref().unwrap().1),
            10 => mux_correctness(),
            11 => pearson_oracle(),
            _ => determinism(),
        };
        failed += usize::from(!ok);
        println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
