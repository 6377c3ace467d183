use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn polaris(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polaris")).args(args).output().expect("spawn polaris")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.conf")).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

#[test]
fn run_with_zero_t_end_writes_only_initial_snapshot() {
    let dir = scratch("t0");
    let o = polaris(&["run", "--config", &scenario("small-data"), "--t-end", "0", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&dir), ["snapshot_0000.txt"]);
}

#[test]
fn run_is_deterministic() {
    let (a, b) = (scratch("det_a"), scratch("det_b"));
    for d in [&a, &b] {
        let o = polaris(&["run", "--config", &scenario("beta-zero"), "--t-end", "1", "--out-dir", d.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(listing(&a), ["diagnostics.csv", "snapshot_0000.txt", "snapshot_final.txt", "summary.txt"]);
    for f in listing(&a) {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f} differs");
    }
    let csv = fs::read_to_string(a.join("diagnostics.csv")).unwrap();
    assert!(csv.starts_with("t,dt,M,Q_2,Q_4,"), "{}", csv.lines().next().unwrap());
    assert!(stdout(&polaris(&["run", "--config", &scenario("beta-zero"), "--t-end", "1", "--out-dir", a.to_str().unwrap()])).contains("termination: reached_t_end"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = scratch("cfg_err");
    fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.conf");
    fs::write(&bad, "scenario = x\n[geometry]\nkind = cube\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["run".into(), "--config".into(), bad.display().to_string()],
        vec!["run".into(), "--config".into(), dir.join("missing.conf").display().to_string()],
        vec!["run".into(), "--config".into(), scenario("small-data"), "--t-end".into(), "-1".into()],
        vec!["steady-spherical".into(), "--config".into(), scenario("small-data"), "--mass".into(), "1".into()],
        vec!["sweep".into(), "--config".into(), scenario("beta-zero"), "--param".into(), "nonsense".into(), "--values".into(), "1".into()],
        vec!["sweep".into(), "--config".into(), scenario("beta-zero"), "--param".into(), "beta".into(), "--values".into(), "abc".into()],
    ];
    for args in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = polaris(&refs);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn steady_spherical_reports_pinned_root() {
    let dir = scratch("sph");
    let o = polaris(&["steady-spherical", "--config", &scenario("steady-validate"), "--mass", "1", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let u0: f64 = out.lines().find_map(|l| l.strip_prefix("u0: ")).unwrap().parse().unwrap();
    assert!((u0 - 0.0598559123430325).abs() <= 1e-10, "{u0}");
    assert!(dir.join("spherical_snapshot.txt").exists());

    let o = polaris(&["steady-spherical", "--config", &scenario("steady-validate"), "--mass", "0", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("u0: 0.0000000000000000e0"));
}

#[test]
fn steady_fixed_point_converges() {
    let dir = scratch("fp");
    let o = polaris(&["steady", "--config", &scenario("small-data"), "--mu", "0.5", "--out-dir", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("converged = true"));
    assert!(dir.join("steady_snapshot.txt").exists());
}

#[test]
fn sweep_writes_one_directory_per_value_in_order() {
    let dir = scratch("sweep");
    fs::create_dir_all(&dir).unwrap();
    let short = dir.join("short.conf");
    fs::write(&short, fs::read_to_string(scenario("beta-zero")).unwrap().replace("t_end = 60", "t_end = 2")).unwrap();
    let short = short.display().to_string();
    let out = dir.join("runs");
    let o = Command::new(env!("CARGO_BIN_EXE_polaris"))
        .args(["sweep", "--config", &short, "--param", "beta", "--values", "0.5,0,0.25"])
        .args(["--out-dir", out.to_str().unwrap()])
        .env("POLARIS_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = stdout(&o).lines().map(|l| l.split(':').next().unwrap().to_string()).collect();
    assert_eq!(lines, ["beta=0.5", "beta=0", "beta=0.25"]);
    assert_eq!(listing(&out), ["beta=0", "beta=0.25", "beta=0.5"]);
    for sub in listing(&out) {
        assert!(out.join(&sub).join("summary.txt").exists(), "{sub}");
    }

    let o = Command::new(env!("CARGO_BIN_EXE_polaris"))
        .args(["sweep", "--config", &short, "--param", "beta", "--values", "0"])
        .args(["--out-dir", out.to_str().unwrap()])
        .env("POLARIS_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_single_criterion() {
    let o = polaris(&["verify", "--only", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().starts_with("PASS [8]"), "{out}");
    assert!(polaris(&["verify", "--only", "99"]).status.code() == Some(2));
}
