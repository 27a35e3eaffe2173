use std::process::{Command, Output};

fn qcavity(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcavity")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const LEFT: [&str; 8] = ["--n", "5", "--omega0", "10", "--coupling", "1", "--mass", "0.5"];

#[test]
fn fixed_point_agrees_with_iteration() {
    let o = qcavity(&[&LEFT[..], &["fixed-point"]].concat());
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# tool=qcavity version="));
    assert!(header.contains("command=fixed-point"));
    assert_eq!(lines.next().unwrap(), "lambda,closed_form,iterated,iterations,rel_diff,residual,flag");
    let mut rows = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[6], "ok");
        let rel: f64 = cells[4].parse().unwrap();
        assert!(rel <= 1e-10, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 200);
}

#[test]
fn exit_codes() {
    // positivity bound violated
    let o = qcavity(&["--omega0", "0.1", "--coupling=-1", "--n", "2", "phase"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error: code=positivity-bound"), "{err}");
    assert_eq!(err.lines().count(), 1);

    // band undefined beyond the critical coupling
    let o = qcavity(&["--n", "3", "--omega0", "1", "--coupling", "20", "multiplier"]);
    assert_eq!(o.status.code(), Some(3));

    // bad configuration values and unknown subcommands
    assert_eq!(qcavity(&["--tol=-1", "phase"]).status.code(), Some(2));
    assert_eq!(qcavity(&["--n", "1", "phase"]).status.code(), Some(2));
    assert_eq!(qcavity(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bad_config_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[params]\nn = 5\nbogus = 1\n").unwrap();
    let o = qcavity(&["--config", path.to_str().unwrap(), "phase"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("code=config"));
}

#[test]
fn config_file_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "[params]\nn = 3\ncoupling = 0.5\n\n[grids.lambda]\ncount = 7\n").unwrap();
    let o = qcavity(&["--config", path.to_str().unwrap(), "--coupling", "0.25", "phase"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().contains("params=n:3,omega0:10,coupling:0.25,mass:0.5"));
    assert_eq!(text.lines().count(), 2 + 7);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [&LEFT[..], &["--pool-size", "2000", "--sweeps", "4", "--seed", "7", "population"]].concat();
    let a = qcavity(&args);
    let b = qcavity(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = qcavity(&[&args[..args.len() - 3], &["8", "population"]].concat());
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn json_output() {
    let o = qcavity(&["--format", "json", "--nu-count", "11", "multiplier"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["meta"]["command"], "multiplier");
    assert_eq!(v["columns"][3], "A");
    assert_eq!(v["rows"].as_array().unwrap().len(), 11);
}

#[test]
fn out_dir_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let plot = dir.path().join("k.svg");
    let o = qcavity(&[
        "--tau-max",
        "1",
        "--tau-count",
        "201",
        "--out-dir",
        out.to_str().unwrap(),
        "--plot",
        plot.to_str().unwrap(),
        "kernel",
        "--method",
        "bessel",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let csv = std::fs::read_to_string(out.join("kernel.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 201);
    let svg = std::fs::read_to_string(plot).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn kernel_methods_agree() {
    let get = |m: &str| -> Vec<f64> {
        let o = qcavity(&["--tau-max", "2", "--tau-count", "101", "--depth", "5", "kernel", "--method", m]);
        assert!(o.status.success(), "{m}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o).lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
    };
    let bc = get("branch-cut");
    let scale = bc.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for m in ["bessel", "oracle"] {
        let other = get(m);
        let diff = bc.iter().zip(&other).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(diff <= 1e-5 * scale, "{m}: {diff:e}");
    }
}

#[test]
fn orbit_beyond_threshold_does_not_converge() {
    let o = qcavity(&["--n", "3", "--omega0", "1", "--coupling", "20", "--lambda", "0.1", "--steps", "200", "orbit"]);
    assert!(o.status.success());
    let header = stdout(&o).lines().next().unwrap().to_string();
    assert!(header.contains("k_star=none"), "{header}");
    assert!(!header.contains("class=converged"), "{header}");
}

#[test]
fn check_subset() {
    let o = qcavity(&["check", "--only", "1,6"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("criterion")).count(), 2);
    assert!(text.contains("criterion  1 ") && text.contains("criterion  6 "));
}
