use std::path::PathBuf;
use std::process::{Command, Output};

fn solver(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solver"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn converge_writes_identical_csv_twice() {
    let a = scratch("small_a.csv");
    let b = scratch("small_b.csv");
    for out in [&a, &b] {
        let o = solver(&[
            "converge",
            "--case",
            "I-a",
            "--grids",
            "4,8",
            "--dts",
            "0.25,0.125",
            "--estimate",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let table = String::from_utf8(o.stdout).unwrap();
        assert!(table.contains("8x8") && table.contains("galerkin") && table.contains("asgs"));
    }
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());
    let text = String::from_utf8(first).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "case,method,theta,n_div,dt,total_error,roc,eta,walltime_s");
    assert_eq!(lines.len(), 5);
    // roc blank on the coarsest level only
    assert_eq!(lines[1].split(',').nth(6), Some(""));
    assert_ne!(lines[2].split(',').nth(6), Some(""));
    assert!(lines.iter().skip(1).all(|l| l.starts_with("I-a,") && l.ends_with(',')));
}

#[test]
fn config_file_with_overrides() {
    let cfg = scratch("study.cfg");
    std::fs::write(
        &cfg,
        "# small study\ncase = II-a\ngrids = 4\ndts = 0.5\nmethods = asgs\n",
    )
    .unwrap();
    let out = scratch("study.csv");
    let o = solver(&[
        "converge",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "stab.c1=8",
        "--theta",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("II-a,asgs,0,4,0.5,"));
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        &["converge", "--case", "I-a", "--grids", "10,20", "--dts", "0.1"][..],
        &["converge", "--case", "I-a", "--set", "stab.bogus=1"][..],
        &["converge", "--grids", "10"][..],
        &["run", "--case", "I-a", "--grid", "4", "--dt", "0.3"][..],
    ] {
        let o = solver(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("configuration error"));
    }
    let o = solver(&["converge", "--case", "I-a", "--grids", "10,20", "--dts", "0.1"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("length mismatch"));
}

#[test]
fn numerical_failures_exit_with_three() {
    // without the pressure mass term the equal-order Galerkin system is singular
    let o = solver(&[
        "run",
        "--case",
        "I-a",
        "--grid",
        "4",
        "--method",
        "galerkin",
        "--set",
        "stab.pressure_eps=0",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("I-a galerkin n=4"));
}

#[test]
fn run_and_mesh_dump() {
    let mesh = scratch("mesh.txt");
    let o = solver(&[
        "run",
        "--case",
        "I-b",
        "--grid",
        "4",
        "--estimate",
        "--dump-mesh",
        mesh.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("I-b asgs n=4 dt=0.25"));
    assert!(text.contains("eta "));
    let dump = std::fs::read_to_string(&mesh).unwrap();
    assert!(dump.lines().count() >= 25);
}

#[test]
fn compare_and_selftest() {
    let o = solver(&[
        "compare",
        "--case",
        "II-b",
        "--grids",
        "4,8",
        "--dts",
        "0.25,0.125",
        "--methods",
        "asgs",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("Galerkin") && text.contains("ASGS"));
    assert_eq!(text.lines().count(), 4);

    let o = solver(&["selftest"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 8);
}
