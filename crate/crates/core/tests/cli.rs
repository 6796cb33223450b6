use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracimp"));
    c.env("FRACIMP_LOG", "quiet");
    c
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn parse_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn check_exit_codes() {
    let ok = run(&["check", config("example2.cfg").to_str().unwrap()]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let report = String::from_utf8(ok.stdout).unwrap();
    assert!(report.contains("mainass_value"));

    let bad = run(&["check", config("example2-bad-q.cfg").to_str().unwrap()]);
    assert_eq!(code(&bad), 2);
    let doc: toml::Table = toml::from_str(&String::from_utf8(bad.stdout).unwrap()).unwrap();
    assert_eq!(doc["checks"]["H0"]["pass"].as_bool(), Some(false));

    assert_eq!(code(&run(&["check", "/nonexistent/config.cfg"])), 1);
}

#[test]
fn unknown_keys_fail_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("scalar-linear.cfg")).unwrap().replace("[initial]", "[initial]\nz1 = [0.0]");
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, text).unwrap();
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("z1") && msg.contains("line"), "{msg}");
}

#[test]
fn scalar_benchmark_matches_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("z.csv");
    let o = run(&["solve", config("scalar-linear.cfg").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("t,interval_index,branch,comp_0,weighted_norm\n"));
    let rows = parse_rows(&csv);
    let last = rows.last().unwrap();
    assert_eq!(last[0].parse::<f64>().unwrap(), 1.0);
    // t^{eta-1} E_{eta,eta}(-t^eta) at t = 1, eta = 2/3
    let oracle = 0.196683792215539008479306590045;
    let z: f64 = last[3].parse().unwrap();
    assert!((z - oracle).abs() <= 1e-4 * oracle, "{z}");
    let side = std::fs::read_to_string(dir.path().join("z.csv.report.toml")).unwrap();
    let doc: toml::Table = toml::from_str(&side).unwrap();
    assert!(doc["initial_condition_defect"].as_float().unwrap() <= 1e-3);
}

#[test]
fn contraction_guard_and_force() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("impulsive-2interval.cfg")).unwrap().replace("gain = 0.1, rate", "gain = 0.9, rate");
    let path = dir.path().join("large-nu.cfg");
    std::fs::write(&path, text).unwrap();
    let o = run(&["solve", path.to_str().unwrap(), "--out", dir.path().join("z.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nu"));
    let forced = run(&["solve", path.to_str().unwrap(), "--force", "--out", dir.path().join("z.csv").to_str().unwrap()]);
    assert_eq!(code(&forced), 0, "{}", String::from_utf8_lossy(&forced.stderr));
}

#[test]
fn impulse_rows_follow_the_window_map() {
    let o = run(&["solve", config("impulsive-2interval.cfg").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows = parse_rows(&csv);
    let t: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    let left = rows.iter().filter(|r| r[2] == "flow" && r[1] == "0").last().unwrap();
    let (t1, z1): (f64, Vec<f64>) = (left[0].parse().unwrap(), left[3..5].iter().map(|x| x.parse().unwrap()).collect());
    assert_eq!(t1, 0.4);
    let imp: Vec<_> = rows.iter().filter(|r| r[2] == "impulse").collect();
    assert!(!imp.is_empty());
    for r in imp {
        let t: f64 = r[0].parse().unwrap();
        assert!(t > 0.4 && t <= 0.6);
        for c in 0..2 {
            let v: f64 = r[3 + c].parse().unwrap();
            let expect = 0.1 * (-(t - 0.4)).exp() * z1[c];
            assert!((v - expect).abs() <= 1e-14 * expect.abs().max(1.0));
        }
    }
    assert!(rows.iter().any(|r| r[2] == "flow" && r[1] == "1"));
}

#[test]
fn uncontrolled_target_needs_no_control() {
    let dir = tempfile::tempdir().unwrap();
    let base = std::fs::read_to_string(config("impulsive-2interval.cfg")).unwrap();
    let o = run(&["solve", config("impulsive-2interval.cfg").to_str().unwrap()]);
    let csv = String::from_utf8(o.stdout).unwrap();
    let last = parse_rows(&csv).pop().unwrap();
    let text = format!("{base}\n[steering]\ntarget = [{}, {}]\nepsilon = 1e-6\nallow_violation = true\n", last[3], last[4]);
    let path = dir.path().join("steer.cfg");
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("out");
    let s = run(&["steer", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&s), 0, "{}", String::from_utf8_lossy(&s.stderr));
    let run_csv = std::fs::read_to_string(out.join("run.csv")).unwrap();
    let rows = parse_rows(&run_csv);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1] == "1"));
    let control = std::fs::read_to_string(out.join("control.csv")).unwrap();
    assert!(parse_rows(&control).iter().all(|r| r[1..].iter().all(|x| x.parse::<f64>().unwrap() == 0.0)));
}

#[test]
fn rank_deficient_steering_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["steer", config("counterexample-rankdef.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("decay ratio"));
}

#[test]
fn steer_without_section_is_a_load_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["steer", config("scalar-linear.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn control_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ctl = dir.path().join("u.csv");
    let rows: String = (0..=20).map(|j| format!("{},{}\n", j as f64 / 20.0, 0.5)).collect();
    std::fs::write(&ctl, format!("t,u_0\n{rows}")).unwrap();
    let a = run(&["solve", config("scalar-linear.cfg").to_str().unwrap(), "--control", ctl.to_str().unwrap()]);
    let b = run(&["solve", config("scalar-linear.cfg").to_str().unwrap()]);
    assert_eq!(code(&a), 0);
    assert_ne!(a.stdout, b.stdout);
    std::fs::write(&ctl, "t,u_0\n0.0,1.0,2.0\n").unwrap();
    assert_eq!(code(&run(&["solve", config("scalar-linear.cfg").to_str().unwrap(), "--control", ctl.to_str().unwrap()])), 1);
}
