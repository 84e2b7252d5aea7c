use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn iontweezer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iontweezer")).args(args).output().expect("binary runs")
}

fn preset(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(format!("{name}.toml"))).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    r.records().map(|rec| rec.unwrap()[idx].to_string()).collect()
}

#[test]
fn modes_two_ions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = iontweezer(&["modes", "--config", "fig2", "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(out.join("modes.csv")).unwrap();
    let ratios: Vec<f64> = column(&text, "frequency_over_com").iter().map(|s| s.parse().unwrap()).collect();
    assert!((ratios[0] - 1.0).abs() < 1e-12);
    assert!((ratios[1] - 3f64.sqrt()).abs() < 1e-9);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    assert!(column(&text, "config_hash").iter().all(|h| h == hash));
}

#[test]
fn modes_single_ion() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset("fig2").replace("n_ions = 2", "n_ions = 1");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    let res = iontweezer(&["modes", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(out.join("modes.csv")).unwrap();
    assert_eq!(column(&text, "frequency_hz").len(), 1);
    assert!((column(&text, "frequency_hz")[0].parse::<f64>().unwrap() - 1e6).abs() < 1e-6);
    assert_eq!(iontweezer(&["gate", "--config", &cfg, "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn malformed_config_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write_config(dir.path(), "[trap]\nn_ions = 2\naxial_frequency_hz = \"fast\"\n");
    let res = iontweezer(&["modes", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());

    let cfg = write_config(dir.path(), &preset("fig2").replace("[numerics]", "[numerics]\nsolver = \"rk4\""));
    assert_eq!(iontweezer(&["gate", "--config", &cfg, "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
    assert!(!out.exists());

    assert_eq!(iontweezer(&["modes", "--config", "no_such_preset", "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(iontweezer(&["gate", "--config", "fig2", "--tol", "1e-2", "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn empty_sweep_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset("fig3_delta1kHz");
    let start = text.find("grid = [").unwrap();
    let end = start + text[start..].find('\n').unwrap();
    let cfg = write_config(dir.path(), &format!("{}grid = []{}", &text[..start], &text[end..]));
    let out = dir.path().join("o");
    assert_eq!(iontweezer(&["sweep", "--config", &cfg, "--out-dir", out.to_str().unwrap()]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &preset("fig2").replace("tweezer_ratio = 0.25", "tweezer_ratio = 1.5"));
    let res = iontweezer(&["gate", "--config", &cfg, "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn phasespace_loops_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let res = iontweezer(&["phasespace", "--config", "fig2", "--out-dir", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let max = |label: &str| -> f64 {
        let text = fs::read_to_string(a.join(format!("trajectory_{label}.csv"))).unwrap();
        let re = column(&text, "re_alpha");
        let im = column(&text, "im_alpha");
        assert!(re.len() >= 800);
        re.iter().zip(&im).map(|(r, i)| r.parse::<f64>().unwrap().hypot(i.parse().unwrap())).fold(0.0, f64::max)
    };
    let (m01, m11, m00, m10) = (max("01"), max("11"), max("00"), max("10"));
    assert!(m01 > 10.0 * m11 && m10 > 10.0 * m00, "{m01} {m11} {m10} {m00}");
    for f in ["trajectory_00.csv", "trajectory_01.csv", "trajectory_10.csv", "trajectory_11.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between runs");
    }
}

#[test]
fn phasespace_without_field_stays_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset("fig2").replace("field_amplitude_v_per_m = 0.269e-3", "field_amplitude_v_per_m = 0.0").replace("cutoffs = [20]", "cutoffs = [4]").replace("nbar = [[0.0], [0.6], [1.0]]", "nbar = [[0.0]]");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    let res = iontweezer(&["phasespace", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for label in ["00", "01", "10", "11"] {
        let text = fs::read_to_string(out.join(format!("trajectory_{label}.csv"))).unwrap();
        for v in column(&text, "re_alpha").iter().chain(&column(&text, "im_alpha")) {
            assert!(v.parse::<f64>().unwrap().abs() < 1e-9);
        }
    }
}

#[test]
fn small_sweep_and_gate_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = preset("fig3_delta1kHz")
        .replace("cutoffs = [20]", "cutoffs = [8]")
        .replace("nbar = [[0.6], [1.0]]", "nbar = [[0.0], [0.1]]")
        .replace("tol = 1e-8", "tol = 1e-6");
    let start = text.find("grid = [").unwrap();
    let end = start + text[start..].find('\n').unwrap();
    let text = format!("{}grid = [0.2, 0.25]{}", &text[..start], &text[end..]);
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("o");
    let res = iontweezer(&["sweep", "--config", &cfg, "--out-dir", out.to_str().unwrap(), "--jobs", "1"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(column(&sweep, "axis"), ["0.2", "0.2", "0.25", "0.25"]);
    let fid: Vec<f64> = column(&sweep, "fidelity").iter().map(|s| s.parse().unwrap()).collect();
    assert!(fid.iter().all(|&f| f > 0.999 && f <= 1.0 + 1e-12), "{fid:?}");

    let first = fs::read(out.join("sweep.json")).unwrap();
    let res = iontweezer(&["sweep", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success());
    assert_eq!(first, fs::read(out.join("sweep.json")).unwrap());

    let text = text.replace("tweezer_ratio = 0.25", "tweezer_ratio = 0.2");
    let cfg = write_config(dir.path(), &text);
    let res = iontweezer(&["gate", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let gate = fs::read_to_string(out.join("gate.csv")).unwrap();
    let direct: f64 = column(&gate, "fidelity")[0].parse().unwrap();
    assert!((direct - fid[0]).abs() < 1e-12, "single point {direct} vs sweep {}", fid[0]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["consistency"]["field"]["field_ratio"].as_f64().unwrap() > 4.0);
    assert!(report["consistency"]["relative_phase_deviation"].as_f64().unwrap() < 0.02);
}
