use std::path::Path;
use std::process::{Command, Output};

fn pcf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcf"))
        .args(args)
        .current_dir(dir)
        .env("PCF_THREADS", "1")
        .output()
        .unwrap()
}

fn stderr_line(o: &Output) -> String {
    let s = String::from_utf8(o.stderr.clone()).unwrap();
    assert_eq!(s.trim_end().lines().count(), 1, "{s}");
    s.trim_end().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

#[test]
fn renorm_table_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcf(dir.path(), &["renorm", "--n", "32", "--eps-list", "0.2,0.1"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "eps,C");
    assert_eq!(lines.len(), 3);
    let c: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(c[1] > c[0]);
}

#[test]
fn zero_noise_minimize_converges() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcf(dir.path(), &["minimize", "--zero-noise", "--n", "32", "--out", "z/run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("z/run.json"));
    assert_eq!(s["converged"], true);
    assert!(s["residual"].as_f64().unwrap() < 1e-6);
    assert!(s["energy"].as_f64().unwrap().abs() < 1e-9);
    assert_eq!(
        files(&dir.path().join("z")),
        ["run.json", "run.remainder.pcf", "run.sharp.pcf", "run.trace.csv", "run.u.pcf"]
    );
}

#[test]
fn invalid_input_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["minimize", "--n", "48", "--out", "o/run"][..],
        &["minimize", "--alpha", "0.5", "--out", "o/run"],
        &["minimize", "--nl", "quintic:1", "--out", "o/run"],
        &["minimize", "--threshold-l", "1", "--out", "o/run"],
        &["noise", "--no-such-flag", "--out", "o/a"],
        &["sweep", "--root-seed", "1", "--n", "32,48", "--out", "o/rows.csv"],
        &["diagnose", "--triple", "missing", "--noise", "missing", "--out", "o/r.json"],
    ] {
        let o = pcf(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let line = stderr_line(&o);
        assert!(line.starts_with("pcf: error code=2 kind="), "{line}");
    }
    assert!(files(dir.path()).is_empty());
}

#[test]
fn non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = pcf(
        dir.path(),
        &["minimize", "--n", "32", "--nl", "double_well:10,1", "--max-iter", "2", "--out", "run"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr_line(&o).contains("kind=non_convergence"));
    assert!(files(dir.path()).is_empty());
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for run in ["a", "b"] {
        let noise = format!("{run}/noise");
        let out = format!("{run}/min");
        assert!(pcf(d, &["noise", "--n", "32", "--seed", "11", "--out", &noise]).status.success());
        let o = pcf(d, &["minimize", "--noise", &noise, "--nl", "double_well:10,1", "--out", &out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let o = pcf(d, &["diagnose", "--triple", &out, "--noise", &noise, "--out", &format!("{run}/report.json")]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let names = files(&d.join("a"));
    assert_eq!(names, files(&d.join("b")));
    assert_eq!(names.len(), 12, "{names:?}");
    for f in names {
        assert_eq!(std::fs::read(d.join("a").join(&f)).unwrap(), std::fs::read(d.join("b").join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.toml"), "n = 32\nseed = 5\nmu = 2.0\n").unwrap();
    assert!(pcf(d, &["noise", "--config", "run.toml", "--seed", "6", "--out", "nz"]).status.success());
    let s = json(&d.join("nz.json"));
    assert_eq!((s["n"].as_u64(), s["seed"].as_u64(), s["mu"].as_f64()), (Some(32), Some(6), Some(2.0)));

    std::fs::write(d.join("bad.toml"), "n = 32\nmuu = 2.0\n").unwrap();
    let o = pcf(d, &["noise", "--config", "bad.toml", "--out", "bad"]);
    assert_eq!(o.status.code(), Some(2));
    let line = stderr_line(&o);
    assert!(line.contains("kind=config_parse") && line.contains("line 2, column 1"), "{line}");
}

#[test]
fn gamma_reproduces_a_stored_minimizer() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(pcf(d, &["noise", "--n", "32", "--seed", "2", "--out", "nz"]).status.success());
    let o = pcf(d, &["minimize", "--noise", "nz", "--nl", "double_well:10,1", "--out", "m"]);
    assert!(o.status.success());
    let o = pcf(d, &["gamma", "--noise", "nz.json", "--sharp", "m.sharp.pcf", "--out", "g"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (m, g) = (json(&d.join("m.json")), json(&d.join("g.json")));
    assert_eq!((m["L"].clone(), m["K"].clone()), (g["L"].clone(), g["K"].clone()));
    assert_eq!(m["enhancement_id"], g["enhancement_id"]);
    let u = |p: &str| pcf_field(&d.join(p));
    let (a, b) = (u("m.u.pcf"), u("g.u.pcf"));
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-8 * scale, "{diff} vs {scale}");
}

#[test]
fn sweep_writes_rows_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = pcf(d, &["sweep", "--root-seed", "4", "--count", "2", "--n", "32,64", "--nl", "double_well:10,1", "--out", "s.csv"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(d.join("s.csv")).unwrap();
    assert_eq!(r.records().count(), 4);
    let s = json(&d.join("s.json"));
    assert_eq!(s["per_n"].as_array().unwrap().len(), 2);
    assert!(s["max_l2_growth"].as_f64().unwrap().is_finite());
}

/// Values of a PCF1 file, read independently of the core decoder.
fn pcf_field(path: &Path) -> Vec<f64> {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[..4], b"PCF1");
    bytes[29..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}
