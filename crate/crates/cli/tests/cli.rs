use std::path::Path;
use std::process::{Command, Output};

fn gl_lab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gl-lab"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("run gl-lab")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn normal_state_solve_exits_zero_with_vanishing_lhs() {
    let dir = tempfile::tempdir().unwrap();
    let o = gl_lab(dir.path(), &["solve", "--kappa", "2", "--h", "3", "--n", "32", "--init", "normal", "--noise", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("solve.json"));
    let entries = v["report"]["entries"].as_array().unwrap();
    for id in ["infini", "cine", "dd1", "caf1", "caf2"] {
        let e = entries.iter().find(|e| e["id"] == id).unwrap();
        assert!(e["lhs"].as_f64().unwrap().abs() <= 1e-6, "{id}: {}", e["lhs"]);
    }
}

#[test]
fn misspelled_config_key_exits_two_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[solve]\nkapa = 3.0\n").unwrap();
    let o = gl_lab(dir.path(), &["--config", cfg.to_str().unwrap(), "solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kapa"));
}

#[test]
fn invalid_argument_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = gl_lab(dir.path(), &["solve", "--kappa", "-1", "--n", "16"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = gl_lab(dir.path(), &["solve", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectral_theta0_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = gl_lab(dir.path(), &["spectral", "--theta0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("mu_table.csv")).unwrap();
    assert!(csv.lines().count() > 10);
    let v = read_json(&dir.path().join("spectral.json"));
    let t = v["theta0"]["theta0"].as_f64().unwrap();
    assert!((t - 0.5901061).abs() < 1e-5, "{t}");
}

#[test]
fn sweep_is_reproducible_and_report_reaggregates() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["sweep", "--kappas", "2,3", "--rhos", "1,0.8", "--min-n", "32", "--seed", "7"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = gl_lab(&a, &args);
    let ob = gl_lab(&b, &[&args[..], &["--jobs", "2"]].concat());
    assert!(matches!(oa.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(oa.status.code(), ob.status.code());
    for name in ["sweep.csv", "sweep.json", "sweep_caf1.dat", "sweep.gp"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = std::fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("# gl-lab "));
    assert!(csv.lines().next().unwrap().contains("seed=7"));

    let r = dir.path().join("r");
    let or = gl_lab(&r, &["report", a.join("sweep.csv").to_str().unwrap()]);
    assert_eq!(or.status.code(), oa.status.code(), "{}", String::from_utf8_lossy(&or.stderr));
    let sweep = read_json(&a.join("sweep.json"));
    let report = read_json(&r.join("report.json"));
    assert_eq!(report["rows"], 4);
    assert_eq!(sweep["verdicts"], report["verdicts"]);
}

#[test]
fn check_identity_and_blowup_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = gl_lab(dir.path(), &["check-identity", "--kappa", "3", "--h", "3", "--n", "32"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&dir.path().join("identity.json"));
    assert!(v.is_object());
    let o = gl_lab(dir.path(), &["blowup", "--kappa", "4", "--h", "4", "--n", "32", "--point", "0.5,0.1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["blowup.json", "frame_argmax.bin", "frame_point.bin"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}
