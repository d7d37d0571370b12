use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
[topology]
n = 5
f = 2
[schedule]
steps = 30
[training]
batch = 10
eval_every = 10
[privacy]
epsilon = 0.5
[attack]
kind = foe
[data]
train = 600
";

fn dpbyz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpbyz")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn feasibility_lists_every_resilient_rule() {
    let o = dpbyz(&["feasibility"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 8);
    let mda = out.lines().find(|l| l.starts_with("mda")).unwrap();
    assert!(mda.contains("1038"), "{mda}");
    assert!(out.lines().any(|l| l.starts_with("krum") && l.contains("not applicable")));
}

#[test]
fn feasibility_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let o = dpbyz(&["feasibility", "--gar", "mda,median", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn errors_are_one_machine_readable_line() {
    let o = dpbyz(&["feasibility", "--gar", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error kind=parameter message=\""), "{err}");

    let o = dpbyz(&["feasibility", "--gar", "average"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("unsupported"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[privacy]\nepsilon = 2.0\n").unwrap();
    let o = dpbyz(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("privacy.epsilon"));

    let o = dpbyz(&["simulate", "--config", dir.path().join("missing.ini").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(8));
}

#[test]
fn simulate_rejects_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.ini");
    fs::write(&cfg, SMALL).unwrap();
    let o = dpbyz(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "training.batch=10,20"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn overrides_equal_file_edits_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.ini");
    fs::write(&base, SMALL).unwrap();
    let edited = dir.path().join("edited.ini");
    fs::write(&edited, SMALL.replace("epsilon = 0.5", "epsilon = 0.2").replace("kind = foe", "kind = alie")).unwrap();

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let o = dpbyz(&[
        "simulate",
        "--config",
        base.to_str().unwrap(),
        "--set",
        "privacy.epsilon=0.2",
        "--set",
        "attack.kind=alie",
        "--seed",
        "4",
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = dpbyz(&[
        "simulate",
        "--config",
        edited.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (a, b) = (read_dir_sorted(&out_a), read_dir_sorted(&out_b));
    assert_eq!(a.len(), 2);
    assert_eq!(a, b);
}

#[test]
fn grid_writes_one_file_per_cell_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.ini");
    fs::write(&cfg, SMALL.replace("epsilon = 0.5", "epsilon = inf, 0.5")).unwrap();
    let out = dir.path().join("out");
    let o = dpbyz(&["grid", "--config", cfg.to_str().unwrap(), "--seeds", "1..3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = read_dir_sorted(&out);
    assert_eq!(files.len(), 3);
    let summary = files.iter().find(|(n, _)| n == "summary.csv").expect("summary.csv");
    let text = String::from_utf8_lossy(&summary.1);
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().skip(1).all(|l| l.contains(",ok,")), "{text}");
    let cell = files.iter().find(|(n, _)| n.starts_with("cell-000")).unwrap();
    // 3 seeds × (T + 1) rows plus the header.
    assert_eq!(String::from_utf8_lossy(&cell.1).lines().count(), 1 + 3 * 31);
}

#[test]
fn bounds_and_testbed_print_key_values() {
    let o = dpbyz(&["bounds", "--noise-std", "0.01", "--b", "10", "--d", "100", "--steps", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lower: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("lower_bound="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((lower - (0.1 + 100.0 * 1e-4) / 200.0).abs() < 1e-15);
    assert!(out.contains("upper_bound="));

    let o = dpbyz(&["testbed", "--d", "10", "--trials", "200", "--steps", "50"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("empirical_error="));

    let o = dpbyz(&["bounds", "--noise-std", "0.01", "--epsilon", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
}
