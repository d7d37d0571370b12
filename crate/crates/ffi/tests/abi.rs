use std::ffi::{c_char, CStr, CString};
use std::ptr;

use dpbyz_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    dpbyz_last_error(buf.as_mut_ptr(), buf.len());
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

const SHORT_RUN: &str = "\
[topology]
n = 5
f = 1
[schedule]
steps = 20
momentum_site = worker
[training]
batch = 10
eval_every = 10
[privacy]
epsilon = 0.5
[gar]
rule = mda
baseline = same
[data]
train = 400
";

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(dpbyz_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn kf_reference_values() {
    let mut k = 0.0;
    assert_eq!(dpbyz_kf(DpbyzGar::Krum, 13, 5, &mut k), DpbyzStatus::Ok);
    assert!((k - 1.0 / 426f64.sqrt()).abs() < 1e-15);
    assert_eq!(dpbyz_kf(DpbyzGar::Mda, 11, 0, &mut k), DpbyzStatus::Ok);
    assert!(k.is_infinite());
}

#[test]
fn precondition_violation_sets_status_and_message() {
    let mut k = 0.0;
    assert_eq!(dpbyz_kf(DpbyzGar::Krum, 11, 5, &mut k), DpbyzStatus::Precondition);
    assert!(last_error().contains("n=11"), "{}", last_error());
}

#[test]
fn null_out_pointer_is_reported() {
    assert_eq!(dpbyz_kf(DpbyzGar::Mda, 11, 5, ptr::null_mut()), DpbyzStatus::NullPointer);
    assert!(last_error().contains("out_kf"));
}

#[test]
fn last_error_truncates_and_reports_full_length() {
    let mut k = 0.0;
    dpbyz_kf(DpbyzGar::Krum, 11, 5, &mut k);
    let full = dpbyz_last_error(ptr::null_mut(), 0);
    let mut small = [1 as c_char; 4];
    assert_eq!(dpbyz_last_error(small.as_mut_ptr(), small.len()), full);
    assert_eq!(small[3], 0);
    assert!(full > 4);
}

#[test]
fn calibrate_matches_closed_form() {
    let (mut sens, mut std) = (0.0, 0.0);
    assert_eq!(dpbyz_calibrate(0.2, 1e-6, 0.01, 50, &mut sens, &mut std), DpbyzStatus::Ok);
    assert!((sens - 2.0 * 0.01 / 50.0).abs() < 1e-18);
    let expected = sens * (2.0 * (1.25f64 / 1e-6).ln()).sqrt() / 0.2;
    assert!((std - expected).abs() < 1e-15);
    assert_eq!(dpbyz_calibrate(-1.0, 1e-6, 0.01, 50, &mut sens, &mut std), DpbyzStatus::Parameter);
}

#[test]
fn aggregate_row_major_median() {
    #[rustfmt::skip]
    let reports = [
        1.0, 10.0,
        2.0, 20.0,
        3.0, 30.0,
        4.0, 40.0,
        100.0, -100.0,
    ];
    let mut out = [0.0; 2];
    let status = dpbyz_aggregate(DpbyzGar::Median, 5, 1, 2, reports.as_ptr(), out.as_mut_ptr());
    assert_eq!(status, DpbyzStatus::Ok);
    assert_eq!(out, [3.0, 20.0]);
    let status = dpbyz_aggregate(DpbyzGar::Median, 5, 1, 2, ptr::null(), out.as_mut_ptr());
    assert_eq!(status, DpbyzStatus::NullPointer);
}

#[test]
fn feasibility_reference_cell() {
    let mut r = DpbyzFeasibility {
        c_constant: 0.0,
        threshold: 0.0,
        inverse_kf: 0.0,
        vn_can_hold: true,
        table1_condition: false,
        min_batch: 0,
        max_byz_fraction: 0.0,
    };
    let status = dpbyz_feasibility(DpbyzGar::Mda, 11, 5, 50, 69, 0.2, 1e-6, &mut r);
    assert_eq!(status, DpbyzStatus::Ok);
    assert!(!r.vn_can_hold);
    assert_eq!(r.min_batch, 1038);
    assert!(!r.table1_condition);
    assert_eq!(
        dpbyz_feasibility(DpbyzGar::Average, 11, 5, 50, 69, 0.2, 1e-6, &mut r),
        DpbyzStatus::Unsupported
    );
}

#[test]
fn bounds_follow_closed_forms() {
    let mut lower = 0.0;
    assert_eq!(dpbyz_lower_bound(1.0, 10, 4, 100, 0.5, &mut lower), DpbyzStatus::Ok);
    assert!((lower - (0.1 + 4.0 * 0.25) / 200.0).abs() < 1e-15);
    let q = DpbyzRateQuery {
        mu: 1.0,
        lambda: 1.0,
        alpha: 0.0,
        c: 1.0,
        sigma: 1.0,
        b: 10,
        d: 4,
        steps: 99,
        noise_std: 0.5,
        g_max: 1.0,
    };
    let mut upper = 0.0;
    assert_eq!(dpbyz_upper_bound(&q, &mut upper), DpbyzStatus::Ok);
    assert!((upper - (0.1 + 1.0 + 1.0) / 200.0).abs() < 1e-15);
    assert_eq!(dpbyz_upper_bound(ptr::null(), &mut upper), DpbyzStatus::NullPointer);
}

fn new_sim(text: &str, seed: u64) -> (DpbyzStatus, *mut DpbyzSimulation) {
    let c = CString::new(text).unwrap();
    let mut h = ptr::null_mut();
    let status = dpbyz_simulation_new(c.as_ptr(), seed, &mut h);
    (status, h)
}

fn losses(h: *mut DpbyzSimulation) -> Vec<f64> {
    let mut n = 0;
    let status = dpbyz_simulation_losses(h, ptr::null_mut(), 0, &mut n);
    assert!(matches!(status, DpbyzStatus::Ok | DpbyzStatus::BufferTooSmall));
    let mut buf = vec![0.0; n];
    assert_eq!(dpbyz_simulation_losses(h, buf.as_mut_ptr(), n, &mut n), DpbyzStatus::Ok);
    buf
}

#[test]
fn simulation_lifecycle() {
    let (status, h) = new_sim(SHORT_RUN, 7);
    assert_eq!(status, DpbyzStatus::Ok, "{}", last_error());
    assert!(!h.is_null());

    let mut running = false;
    assert_eq!(dpbyz_simulation_step(h, &mut running), DpbyzStatus::Ok);
    assert!(running);
    assert_eq!(dpbyz_simulation_run(h), DpbyzStatus::Ok);
    assert_eq!(dpbyz_simulation_step(h, &mut running), DpbyzStatus::Ok);
    assert!(!running);

    let (mut steps, mut diverged) = (0, 0);
    assert_eq!(dpbyz_simulation_progress(h, &mut steps, &mut diverged), DpbyzStatus::Ok);
    assert_eq!((steps, diverged), (20, -1));

    assert_eq!(losses(h).len(), 20);
    let mut n = 0;
    let mut acc = [0.0; 8];
    assert_eq!(dpbyz_simulation_accuracies(h, acc.as_mut_ptr(), acc.len(), &mut n), DpbyzStatus::Ok);
    assert_eq!(n, 3);
    assert!(acc[..n].iter().all(|a| (0.0..=1.0).contains(a)));

    let mut params = [0.0; 4];
    let status = dpbyz_simulation_params(h, params.as_mut_ptr(), params.len(), &mut n);
    assert_eq!(status, DpbyzStatus::BufferTooSmall);
    assert_eq!(n, 69);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("run.csv").to_str().unwrap()).unwrap();
    assert_eq!(dpbyz_simulation_write_csv(h, path.as_ptr()), DpbyzStatus::Ok);
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 21);

    dpbyz_simulation_free(h);
    dpbyz_simulation_free(ptr::null_mut());
}

#[test]
fn simulation_is_deterministic_per_seed() {
    let run = |seed| {
        let (status, h) = new_sim(SHORT_RUN, seed);
        assert_eq!(status, DpbyzStatus::Ok);
        assert_eq!(dpbyz_simulation_run(h), DpbyzStatus::Ok);
        let l = losses(h);
        dpbyz_simulation_free(h);
        l
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}

#[test]
fn simulation_rejects_sweeps_and_bad_text() {
    let (status, h) = new_sim("[privacy]\nepsilon = 0.1, 0.2\n", 1);
    assert_eq!(status, DpbyzStatus::Config);
    assert!(h.is_null());
    let (status, _) = new_sim("[nonsense]\nx = 1\n", 1);
    assert!(matches!(status, DpbyzStatus::Config | DpbyzStatus::Parse), "{status:?}");
    let (status, _) = new_sim("[topology]\nn = 11\nf = 5\n[gar]\nrule = krum\nbaseline = same\n", 1);
    assert_eq!(status, DpbyzStatus::Precondition);
    let mut h = ptr::null_mut();
    assert_eq!(dpbyz_simulation_new(ptr::null(), 1, &mut h), DpbyzStatus::NullPointer);
    let mut running = false;
    assert_eq!(dpbyz_simulation_step(ptr::null_mut(), &mut running), DpbyzStatus::NullPointer);
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/dpbyz.h");
    let source = include_str!("../src/lib.rs");
    let exports: Vec<&str> = source
        .split("pub extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}
