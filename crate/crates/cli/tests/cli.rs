use std::path::Path;
use std::process::{Command, Output};

fn tdbem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdbem")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn mesh_info_level_two() {
    let o = tdbem(&["mesh-info", "--level", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("V=162 E=480 F=320"), "{text}");
    assert!(text.contains("h_max="), "{text}");
}

#[test]
fn missing_config_is_an_error() {
    let o = tdbem(&["solve-ld"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--config"));
}

#[test]
fn broken_config_reports_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("laplace.toml")).unwrap().replace("eps_minus = 4.0", "");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let o = tdbem(&["--config", path.to_str().unwrap(), "solve-ld"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("eps_minus") && err.contains("[config]"), "{err}");
}

#[test]
fn laplace_solve_then_eval_fields() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("laplace.toml")).unwrap().replace("level = 1", "level = 0");
    let cfg = dir.path().join("ld.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = tdbem(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "solve-ld"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["j.csv", "m.csv", "probes.csv", "densities.vtk", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let probes = std::fs::read_to_string(out.join("probes.csv")).unwrap();
    assert_eq!(probes.lines().count(), 3);

    let o = tdbem(&["--config", cfg.to_str().unwrap(), "--out", dir.path().join("eval").to_str().unwrap(), "eval-fields", "--densities", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let again = std::fs::read_to_string(dir.path().join("eval/fields.csv")).unwrap();
    let nums = |t: &str| t.lines().skip(1).flat_map(|l| l.split(',').skip(2).take(6).map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect::<Vec<_>>();
    let (a, b) = (nums(&probes), nums(&again));
    assert_eq!(a.len(), 12);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-10 * scale), "{probes}\n{again}");
}

#[test]
fn identities_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = tdbem(&["--out", dir.path().to_str().unwrap(), "verify", "identities"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    assert_eq!(text.matches("[PASS]").count(), 3, "{text}");
    assert!(dir.path().join("identities.json").exists());
}
