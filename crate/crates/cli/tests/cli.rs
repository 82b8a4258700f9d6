use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn purcell(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_purcell"))
        .args(args)
        .arg("-o")
        .arg(out)
        .env_remove("PURCELL_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn no_subcommand_prints_usage_and_fails() {
    let out = Command::new(env!("CARGO_BIN_EXE_purcell")).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    let out = Command::new(env!("CARGO_BIN_EXE_purcell")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn default_purcell_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_of(&purcell(&["purcell"], dir.path()));
    assert!((num(&v["f_ensemble"]) - 2.7).abs() < 0.15, "{v}");
    assert!((num(&v["denominator"]) - 186.0).abs() < 1.0);
    assert_eq!(num(&v["q_used"]), 500.0);
    assert!(dir.path().join("purcell.json").is_file());
}

#[test]
fn purcell_overrides_and_harmonic_convention() {
    let dir = tempfile::tempdir().unwrap();
    let v = json_of(&purcell(&["purcell", "--q-cav", "500", "--convention", "harmonic"], dir.path()));
    assert!((num(&v["q_used"]) - 250.0).abs() < 1e-9, "{v}");
}

#[test]
fn synthetic_decay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    json_of(&purcell(&["simulate-decay", "--seed", "11"], &sim));
    let csv = sim.join("histogram.csv");
    let v = json_of(&purcell(&["fit-decay", csv.to_str().unwrap(), "--rep-period-ns", "12.5"], &fit));
    let comps = v["params"]["components"].as_array().unwrap();
    let mut taus: Vec<f64> = comps.iter().map(|c| num(&c["lifetime"])).collect();
    taus.sort_by(f64::total_cmp);
    assert!((taus[0] - 0.20).abs() < 0.05 * 0.20, "{taus:?}");
    assert!((taus[1] - 2.14).abs() < 0.03 * 2.14, "{taus:?}");
    assert!(fit.join("decay.svg").is_file());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        json_of(&purcell(&["simulate-decay", "--seed", seed, "--photons", "100000"], &out));
        let csv = out.join("histogram.csv");
        let fit = out.join("fit");
        let o = purcell(&["fit-decay", csv.to_str().unwrap()], &fit);
        assert!(o.status.success());
        (fs::read(&csv).unwrap(), o.stdout)
    };
    let a = run("a", "5");
    let b = run("b", "5");
    let c = run("c", "6");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn threads_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        json_of(&purcell(&["--threads", threads, "simulate-decay", "--photons", "200000"], &out));
        fs::read(out.join("histogram.csv")).unwrap()
    };
    assert_eq!(run("one", "1"), run("two", "2"));
}

#[test]
fn bad_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = purcell(&["fit-decay", "/definitely/not/here.csv"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/definitely/not/here.csv"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "bin_start_ns,counts\n0.0,1\n0.01,-3\n").unwrap();
    let o = purcell(&["fit-decay", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));

    let o = purcell(&["purcell", "--v-eff", "-1"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));

    let o = purcell(&["purcell", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n[design]\na_m = 410.0\nholes_radius = 1.0\n").unwrap();
    let o = purcell(&["--config", cfg.to_str().unwrap(), "purcell"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("holes_radius"));
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let from_env = dir.path().join("env");
    let from_cfg = dir.path().join("cfg");
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("output_dir = {:?}\n", from_cfg.to_str().unwrap())).unwrap();
    let bin = env!("CARGO_BIN_EXE_purcell");

    let o = Command::new(bin).args(["--config", cfg.to_str().unwrap(), "purcell"]).env_remove("PURCELL_OUTPUT_DIR").output().unwrap();
    assert!(o.status.success());
    assert!(from_cfg.join("purcell.json").is_file());

    let o = Command::new(bin)
        .args(["--config", cfg.to_str().unwrap(), "purcell"])
        .env("PURCELL_OUTPUT_DIR", &from_env)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(from_env.join("purcell.json").is_file());

    let flag = dir.path().join("flag");
    let o = Command::new(bin)
        .args(["--config", cfg.to_str().unwrap(), "purcell", "-o", flag.to_str().unwrap()])
        .env("PURCELL_OUTPUT_DIR", &from_env)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(flag.join("purcell.json").is_file());
}

#[test]
fn resolved_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 77\n[decay.synthesis]\nn_photons = 50000\nbin_width = 0.02\n").unwrap();
    json_of(&purcell(&["--config", cfg.to_str().unwrap(), "simulate-decay"], &first));
    let resolved = first.join("config.resolved.toml");
    let text = fs::read_to_string(&resolved).unwrap();
    assert!(text.contains("seed = 77"), "{text}");

    let second = dir.path().join("second");
    json_of(&purcell(&["--config", resolved.to_str().unwrap(), "simulate-decay"], &second));
    assert_eq!(fs::read(first.join("histogram.csv")).unwrap(), fs::read(second.join("histogram.csv")).unwrap());
}

#[test]
fn spectrum_interferogram_and_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.csv");
    let mut s = String::from("wavelength_nm,intensity\n");
    for k in 0..401 {
        let x = 1530.0 + 0.04 * k as f64;
        s += &format!("{x},{}\n", 50.0 / (1.0 + ((x - 1538.0) / 1.5).powi(2)) + 1.0);
    }
    fs::write(&spec, s).unwrap();
    let v = json_of(&purcell(&["fit-spectrum", spec.to_str().unwrap()], &dir.path().join("s")));
    assert!((num(&v["fwhm"]) - 3.0).abs() < 1e-6, "{v}");
    assert!((num(&v["lambda0"]) - 1538.0).abs() < 1e-6);

    // Lorentzian line: contrast decays as exp(-π c Δν τ) with 1/e at λ²/(π Δλ)
    let ifg = dir.path().join("ifg.csv");
    let l_e = 1538.0f64.powi(2) / (std::f64::consts::PI * 3.0) * 1e-6;
    let mut s = String::from("delay_mm,contrast\n");
    for k in 0..200 {
        let d = 0.25 * k as f64;
        s += &format!("{d},{}\n", 0.9 * (-d / l_e).exp());
    }
    fs::write(&ifg, s).unwrap();
    let v = json_of(&purcell(&["fit-interferogram", ifg.to_str().unwrap()], &dir.path().join("i")));
    assert!((num(&v["fwhm"]) - 3.0).abs() < 1e-6, "{v}");
    assert!((num(&v["q"]) - 1538.0 / 3.0).abs() < 1e-3);

    let ll = dir.path().join("ll.csv");
    let mut s = String::from("power_uW,intensity\n");
    for k in 0..40 {
        let p = 50.0 * 1.08f64.powi(k);
        let i = if p < 385.0 { p } else { 385.0 * (p / 385.0).powi(5) };
        s += &format!("{p},{i}\n");
    }
    fs::write(&ll, s).unwrap();
    let v = json_of(&purcell(&["threshold", ll.to_str().unwrap()], &dir.path().join("t")));
    assert_eq!(v["threshold_detected"], Value::Bool(true));
    // breakpoints sit on samples, so within one 8% step of the kink
    let ratio = num(&v["threshold_power"]) / 385.0;
    assert!(ratio > 1.0 / 1.08 && ratio < 1.08, "{v}");
}

#[test]
fn simulate_then_reanalyse() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let v = json_of(&purcell(
        &["simulate", "--resolution", "8", "--steps", "1500", "--snapshot-frequency", "0.264"],
        &sim,
    ));
    for f in ["eps.pgr", "timeseries.csv", "simulation.json", "ringdown.svg", "mode_ey_re.pgr", "config.resolved.toml"] {
        assert!(sim.join(f).is_file(), "missing {f}");
    }
    let dominant = &v["dominant"];
    assert!(dominant.is_object(), "{v}");

    let csv = sim.join("timeseries.csv");
    let r = json_of(&purcell(&["resonances", csv.to_str().unwrap()], &dir.path().join("res")));
    assert_eq!(r["dominant"], *dominant);

    let wl = 410.0 / 0.264;
    let m = json_of(&purcell(
        &[
            "mode-metrics",
            "--eps",
            sim.join("eps.pgr").to_str().unwrap(),
            "--mode-dir",
            sim.to_str().unwrap(),
            "--wavelength-nm",
            &wl.to_string(),
        ],
        &dir.path().join("mm"),
    ));
    let from_sim = &v["mode_metrics"];
    let rel = (num(&m["v_eff_normalized"]) / num(&from_sim["v_eff_normalized"]) - 1.0).abs();
    assert!(rel < 1e-9, "{m} vs {from_sim}");
    assert!((num(&m["eta_spatial"]) - num(&from_sim["eta_spatial"])).abs() < 1e-9);
}
