use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const GAUSS: &str = r#"{"source":{"gauss_markov":{"A":[[0.9]],"B":[[1]],"C":[[1]],"N":[[0.1]]}},
 "parameters":{"D":0.5,"D_grid":[0.2,0.5,1,2,3,4,5,6,7,8],"T":5000,"seed":7}}"#;
const FINITE: &str = r#"{"source":{"finite":{"pmf":[0.6,0.4],"transition":[[0.8,0.2],[0.3,0.7]],"distortion":[[0,1],[1,0]],"horizon":2}},
 "parameters":{"D":0.15}}"#;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causal-rd"))
        .args(args)
        .arg("--config")
        .arg(config)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn validate_reports_structure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSS);
    let out = dir.path().join("v.csv");
    let o = run(&["validate", "--out", out.to_str().unwrap()], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("detectable: yes, stabilizable: yes"));
    let csv = std::fs::read_to_string(out).unwrap();
    assert!(csv.starts_with("check,value,passes\n"));
}

#[test]
fn csv_goes_to_stdout_without_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSS);
    let o = run(&["stationary"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("D,rate_nats,rate_bits,power,capacity_nats,iterations,residual"));
    assert!(lines.next().unwrap().starts_with("5.00000000000e-1,"));
    assert!(stderr(&o).contains("power:"));
}

#[test]
fn rd_curve_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSS);
    let o = run(&["rd-curve"], &cfg);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "D,rate_nats,rate_bits,power,converged");
    assert_eq!(rows.len(), 11);
    let rates: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn simulate_summary_and_mean_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSS);
    let out = dir.path().join("s.csv");
    let o = run(&["simulate", "--out", out.to_str().unwrap()], &cfg);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("empirical distortion"));
    let csv = std::fs::read_to_string(out).unwrap();
    assert_eq!(csv.lines().count(), 5002);
    assert!(csv.lines().last().unwrap().starts_with("mean,"));
}

#[test]
fn reruns_are_byte_identical_and_seed_matters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "g.json", GAUSS);
    let a = run(&["simulate", "--seed", "3"], &cfg);
    let b = run(&["simulate", "--seed", "3"], &cfg);
    let c = run(&["simulate", "--seed", "4"], &cfg);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn kernel_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.json", FINITE);
    let dump = dir.path().join("k.txt");
    let o = run(&["solve-kernel", "--kernel-out", dump.to_str().unwrap()], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("s,rate_nats,distortion,iterations,converged\n"));
    let dump = std::fs::read_to_string(dump).unwrap();
    assert!(dump.starts_with("# D = 1.50000000000e-1"));
    assert!(dump.contains("# stage 1: y = (y_0..y_0), x = (x_0..x_1)"));

    let o = run(&["oracle-check"], &cfg);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.ends_with(",true"), "{row}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    assert_eq!(run(&["stationary"], &missing).status.code(), Some(2));

    let unknown = write(dir.path(), "u.json", r#"{"source":{"finite":{"pmf":[1],"distortion":[[0]],"horizon":1}},"extra":1}"#);
    assert_eq!(run(&["solve-kernel"], &unknown).status.code(), Some(2));

    let wrong_source = write(dir.path(), "g.json", GAUSS);
    assert_eq!(run(&["solve-kernel"], &wrong_source).status.code(), Some(2));

    let infeasible = write(
        dir.path(),
        "bad.json",
        r#"{"source":{"finite":{"pmf":[0.5,0.5],"distortion":[[0,1],[1,0]],"horizon":1}},"parameters":{"D":-1}}"#,
    );
    assert_eq!(run(&["solve-kernel"], &infeasible).status.code(), Some(1));

    let o = Command::new(env!("CARGO_BIN_EXE_causal-rd")).arg("no-such-command").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn command_in_config_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"command":"rd-curve","source":{"gauss_markov":{"A":[[0.5]],"B":[[1]],"C":[[1]],"N":[[1]]}},"parameters":{"D":0.5}}"#,
    );
    let o = run(&["stationary"], &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rd-curve"));
}
