use std::path::Path;
use std::process::{Command, Output};

fn kwi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kwi"))
        .args(args)
        .env_remove("KWI_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// `key = value # source` line from the echoed config.
fn echoed<'a>(err: &'a str, key: &str) -> (&'a str, &'a str) {
    let line = err.lines().find(|l| l.starts_with(&format!("{key} = "))).expect("key echoed");
    let (value, source) = line[key.len() + 3..].split_once(" # ").unwrap();
    (value, source)
}

/// Numbers inside `name = [..]` or `name = (..)` on a line.
fn list(line: &str, name: &str) -> Vec<f64> {
    let start = line.find(&format!("{name} = ")).unwrap() + name.len() + 4;
    let end = start + line[start..].find([')', ']']).unwrap();
    line[start..end].split(", ").map(|v| v.parse().unwrap()).collect()
}

#[test]
fn equilibria_at_zero_phase_lag() {
    let o = kwi(&["equilibria", "--alpha", "0", "--mu", "0.06"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let s31 = out.lines().find(|l| l.starts_with("S31^(0,0)")).unwrap();
    assert_eq!(list(s31, "state"), vec![std::f64::consts::PI, 0.0, 0.0, 0.0]);
    let o_line = out.lines().find(|l| l.starts_with("O^(0,0)")).unwrap();
    assert_eq!(list(o_line, "state"), vec![0.0; 4]);
    // Linearizing inside E31 at alpha = 0 gives l^2 + eps l - mu = 0, roots 0.2 and -0.3.
    let par = list(s31, "parallel");
    assert!((par[0] - 0.2).abs() < 1e-12 && (par[1] + 0.3).abs() < 1e-12, "{s31}");
}

#[test]
fn printed_numbers_round_trip() {
    let o = kwi(&["equilibria", "--alpha", "0.3", "--mu", "0.06"]);
    let out = stdout(&o);
    let s31 = out.lines().find(|l| l.starts_with("S31^(0,0)")).unwrap();
    let values = list(s31, "state");
    let p = kwi::model::Params::new(0.3, 0.06);
    let id = kwi::model::EquilibriumId::new(kwi::model::EquilibriumKind::S31, 0, 0);
    let s = kwi::model::equilibrium(id, &p).unwrap();
    for (v, w) in values.iter().zip(s.0) {
        assert_eq!(v.to_bits(), w.to_bits());
    }
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(kwi(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(kwi(&["equilibria", "--alpha", "x", "--mu", "0.06"]).status.code(), Some(2));
    let o = kwi(&["--q", "2", "equilibria", "--alpha", "1", "--mu", "0.06"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`q`"));
    assert_eq!(kwi(&["equilibria", "--alpha", "1", "--mu", "-0.5"]).status.code(), Some(2));
    assert_eq!(kwi(&["sweep", "--kind", "slips", "--alpha", "1.6", "1.8", "2.5", "--mu", "0.02", "0.07", "2"]).status.code(), Some(2));
    assert_eq!(
        kwi(&["integrate", "--alpha", "1.7", "--mu", "0.06", "--state", "0", "-1", "0", "0", "--t1", "-5"]).status.code(),
        Some(2)
    );
}

#[test]
fn solver_failure_exits_one() {
    // Below the pitchfork of cycles the transverse multiplier stays inside the unit circle.
    let o = kwi(&["detect", "--mu", "0.06", "--from", "1.5", "--to", "1.6", "--target", "plus-one"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("error:"));
}

#[test]
fn config_precedence_flag_file_default() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\ntol = 1e-8\nq = 0.25\nthreads = 3\n").unwrap();
    let o = kwi(&["--config", cfg.to_str().unwrap(), "--tol", "1e-9", "equilibria", "--alpha", "1", "--mu", "0.06"]);
    assert_eq!(o.status.code(), Some(0));
    let err = stderr(&o);
    assert_eq!(echoed(&err, "tol"), ("0.000000001", "flag"));
    assert_eq!(echoed(&err, "q"), ("0.25", "file"));
    assert_eq!(echoed(&err, "m"), ("20", "default"));
    assert_eq!(echoed(&err, "threads"), ("3", "file"));
}

#[test]
fn threads_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_kwi"))
        .args(["equilibria", "--alpha", "1", "--mu", "0.06"])
        .env("KWI_THREADS", "5")
        .output()
        .unwrap();
    assert_eq!(echoed(&stderr(&o), "threads"), ("5", "KWI_THREADS"));
    let o = Command::new(env!("CARGO_BIN_EXE_kwi"))
        .args(["--threads", "2", "equilibria", "--alpha", "1", "--mu", "0.06"])
        .env("KWI_THREADS", "5")
        .output()
        .unwrap();
    assert_eq!(echoed(&stderr(&o), "threads"), ("2", "flag"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = kwi(&["--delta", "0.00012345678901234567", "--m", "7", "equilibria", "--alpha", "1", "--mu", "0.06"]);
    let cfg = dir.path().join("echo.cfg");
    std::fs::write(&cfg, stderr(&o)).unwrap();
    let again = kwi(&["--config", cfg.to_str().unwrap(), "equilibria", "--alpha", "1", "--mu", "0.06"]);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
    let err = stderr(&again);
    assert_eq!(echoed(&err, "delta").0.parse::<f64>().unwrap(), 0.00012345678901234567);
    assert_eq!(echoed(&err, "m"), ("7", "file"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "speed = 3\n").unwrap();
    let o = kwi(&["--config", cfg.to_str().unwrap(), "equilibria", "--alpha", "1", "--mu", "0.06"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn integrate_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = kwi(&[
        "integrate", "--alpha", "1.7", "--mu", "0.06", "--state", "0", "-1", "0", "0", "--t1", "10", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,eta1,psi1,eta2,psi2"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() > 10);
    assert_eq!(rows[0], vec![0.0, 0.0, -1.0, 0.0, 0.0]);
    assert_eq!(rows.last().unwrap()[0], 10.0);
}

fn read_ppm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = std::fs::read(path).unwrap();
    let header: Vec<&[u8]> = bytes.splitn(4, |b| b.is_ascii_whitespace()).collect();
    assert_eq!(header[0], b"P6");
    let w: usize = std::str::from_utf8(header[1]).unwrap().parse().unwrap();
    let h: usize = std::str::from_utf8(header[2]).unwrap().parse().unwrap();
    let rest = header[3];
    let pixels = rest[rest.iter().position(|b| b.is_ascii_whitespace()).unwrap() + 1..].to_vec();
    (w, h, pixels)
}

#[test]
fn sweep_writes_csv_and_image_and_render_matches() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let img = dir.path().join("grid.ppm");
    let o = kwi(&[
        "--t-final", "400", "sweep", "--kind", "slips", "--alpha", "1.6", "1.8", "4", "--mu", "0.02", "0.07", "3",
        "--out", csv.to_str().unwrap(), "--img", img.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("alpha,mu,K12,K23,K31"));
    assert_eq!(text.lines().count(), 1 + 12);
    let (w, h, px) = read_ppm(&img);
    assert_eq!((w, h, px.len()), (4, 3, 36));

    let again = dir.path().join("again.ppm");
    let o = kwi(&["render", "--input", csv.to_str().unwrap(), "--img", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(&img).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn mean_d_sweep_to_stdout() {
    let o = kwi(&["--t-final", "200", "sweep", "--kind", "mean-d", "--alpha", "1.6", "1.8", "2", "--mu", "0.05", "0.06", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("alpha,mu,value"));
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn version_and_help() {
    let o = kwi(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("kwi "));
    let help = stdout(&kwi(&["--help"]));
    for sub in [
        "equilibria", "integrate", "homoclinic", "curve", "gap", "point-b", "point-c", "orbit", "floquet", "detect", "sweep",
        "render",
    ] {
        assert!(help.contains(sub), "missing {sub}");
    }
    for flag in ["--config", "--epsilon", "--t-final", "--transient", "--tol", "--bvp-t", "--q", "--m", "--delta", "--threads"] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn point_b_example() {
    let o = kwi(&["point-b", "--bracket", "1.65", "1.75", "--mu-seed", "0.035"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("alpha=1.701"), "{out}");
    assert!(out.contains(" mu=0.0331"), "{out}");
}
