use std::path::Path;
use std::process::{Command, Output};

fn linboltz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linboltz")).args(args).env("LINBOLTZ_THREADS", "2").output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn bakry_emery_passes_and_reports_min_a() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "be.toml", "experiment = \"bakry-emery\"\nseed = 4\n[budget]\nmc_samples = 100000\n");
    let out = tmp.path().join("out");
    let r = linboltz(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let s = summary(&out);
    assert_eq!(s["passed"], true);
    assert!(s["metrics"]["min_A"].as_f64().unwrap() >= 143.0 / 60.0);
    for a in s["assertions"].as_array().unwrap() {
        assert!(!a["constant"].as_str().unwrap().is_empty());
        assert!(!a["tolerance"].as_str().unwrap().is_empty());
    }
    assert!(out.join("bakry_emery.csv").exists() && out.join("report.txt").exists());
}

#[test]
fn malformed_kernel_exits_2_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "experiment = \"verify-inequality\"\nseed = 1\nkernel = \"hard-potential(x)\"\n");
    let r = linboltz(&["run", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("`kernel`"));
    let r = linboltz(&["validate", &cfg]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn unknown_keys_and_missing_seed_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "typo.toml", "experiment = \"simulate\"\nseed = 1\n[budget]\nparticle = 5\n");
    assert_eq!(linboltz(&["validate", &cfg]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), "noseed.toml", "experiment = \"simulate\"\n");
    assert_eq!(linboltz(&["validate", &cfg]).status.code(), Some(0));
    let r = linboltz(&["run", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("seed"));
}

#[test]
fn list_presets_names_kernels_and_constants() {
    let r = linboltz(&["list-presets"]);
    assert_eq!(r.status.code(), Some(0));
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("hard-spheres-d3") && text.contains("sqrt(theta)/4"));
    assert!(text.contains("grazing(e)") && text.contains("e^2/2"));
    assert!(text.contains("default"));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim.toml",
        "experiment = \"simulate\"\nseed = 12\nkernel = \"hard-spheres-d3\"\n[budget]\nparticles = 4000\nt_end = 1.0\npoints = 6\n",
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let r = linboltz(&["run", &cfg, "--out", dir.to_str().unwrap()]);
        assert!(matches!(r.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["trace.csv", "summary.json", "report.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    // the thread count does not change results
    let c = tmp.path().join("c");
    let r = Command::new(env!("CARGO_BIN_EXE_linboltz"))
        .args(["run", &cfg, "--out", c.to_str().unwrap()])
        .env("LINBOLTZ_THREADS", "1")
        .output()
        .unwrap();
    assert!(matches!(r.status.code(), Some(0 | 1)));
    assert_eq!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(c.join("trace.csv")).unwrap());
}

#[test]
fn lower_bound_probe_separates_the_critical_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    for (c, expect) in [("0.2", true), ("0.1", false)] {
        let cfg = write_config(tmp.path(), "lb.toml", &format!("experiment = \"lower-bound-probe\"\n[options]\nc = {c}\n"));
        let out = tmp.path().join(format!("lb{c}"));
        let r = linboltz(&["run", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stdout));
        assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap().contains("diverges = true"), expect);
    }
}

#[test]
fn bad_thread_count_is_rejected() {
    let r = Command::new(env!("CARGO_BIN_EXE_linboltz")).arg("list-presets").env("LINBOLTZ_THREADS", "zero").output().unwrap();
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let r = linboltz(&["validate", p.to_str().unwrap()]);
            assert_eq!(r.status.code(), Some(0), "{}: {}", p.display(), String::from_utf8_lossy(&r.stderr));
            n += 1;
        }
    }
    assert!(n >= 7);
}
