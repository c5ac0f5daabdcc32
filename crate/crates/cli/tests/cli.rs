//! End-to-end subcommand tests against the bundled configuration files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cycledeg")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn tmp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("cycledeg-test-{}-{name}", std::process::id()))
}

#[test]
fn find_cycle_reports_solved_period() {
    let cfg = configs().join("circle.json");
    let out = run(&["find-cycle", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("T = 6.283185307"), "{text}");
    assert!(text.contains("p = 1"), "{text}");
}

#[test]
fn floquet_reports_multipliers_and_beta() {
    let cfg = configs().join("circle.json");
    let out = run(&["floquet", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    assert!(text.contains("beta = 0"), "{text}");
    assert!(text.contains("nondegenerate = true"), "{text}");
    assert!(text.contains("(trivial)"), "{text}");
}

#[test]
fn adjoint_reports_unit_perron_constant() {
    let cfg = configs().join("circle.json");
    let out = run(&["adjoint", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout_of(&out);
    let c: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("perron constant = "))
        .expect("constant line")
        .trim()
        .parse()
        .unwrap();
    assert!((c - 1.0).abs() <= 1e-8, "{text}");
    assert!(text.contains("sign factor = 1"), "{text}");
}

#[test]
fn bifurcation_writes_csv_with_grid_rows_and_zero_table() {
    let cfg = configs().join("circle.json");
    let out_path = tmp_path("f.csv");
    let out = run(&[
        "bifurcation",
        cfg.to_str().unwrap(),
        "--samples",
        "256",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("sign_change"), "{text}");
    // zeros at 0 and pi
    assert!(text.contains("3.14159265"), "{text}");
    let csv = std::fs::read_to_string(&out_path).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "theta,f");
    assert_eq!(rows.len(), 258); // header + 257 grid rows
    std::fs::remove_file(&out_path).ok();
}

#[test]
fn csv_output_is_byte_identical_across_runs() {
    let cfg = configs().join("circle.json");
    let p1 = tmp_path("det1.csv");
    let p2 = tmp_path("det2.csv");
    for p in [&p1, &p2] {
        let out = run(&[
            "bifurcation",
            cfg.to_str().unwrap(),
            "--samples",
            "64",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read(&p1).unwrap();
    let b = std::fs::read(&p2).unwrap();
    assert_eq!(a, b, "CSV outputs must be byte-identical");
    std::fs::remove_file(&p1).ok();
    std::fs::remove_file(&p2).ok();
}

#[test]
fn predict_total_two_for_negative_forcing_box() {
    let cfg = configs().join("circle_box.json");
    let out = run(&["predict", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("total = 2"), "{text}");
    assert!(text.contains("nonzero-degree route: applies"), "{text}");
}

#[test]
fn predict_total_zero_for_positive_forcing_box() {
    let cfg = configs().join("circle_box_plus.json");
    let out = run(&["predict", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("total = 0"), "{text}");
    assert!(text.contains("sign-change route: applies"), "{text}");
}

#[test]
fn predict_writes_contribution_csv() {
    let cfg = configs().join("circle_box.json");
    let path = tmp_path("contrib.csv");
    let out = run(&[
        "predict",
        cfg.to_str().unwrap(),
        "--csv",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(&path).unwrap();
    assert!(csv.starts_with("contact_phase,entering,beta,theta_exit,interval_degree"));
    assert!(csv.contains(",true,0,"), "{csv}");
    std::fs::remove_file(&path).ok();
}

#[test]
fn verify_solves_perturbed_orbit() {
    let cfg = configs().join("circle.json");
    let out = run(&["verify", cfg.to_str().unwrap(), "--eps", "1e-3"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("residual = 0.000000000"), "{text}");
}

#[test]
fn missing_config_exits_two_naming_path() {
    let out = run(&["predict", "/no/such/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("/no/such/config.json"), "{err}");
}

#[test]
fn unknown_config_field_exits_two() {
    let path = tmp_path("bad.json");
    std::fs::write(
        &path,
        r#"{"dimension":2,"period":1.0,"psi":["x1","x2"],"phi":["0","0"],
            "seed":[1,0],"section":{"coord":1,"value":0.0,"direction":1},
            "region":{"type":"ball","center":[0,0],"radius":1.0},
            "numerics":{},"extra_field":true}"#,
    )
    .unwrap();
    let out = run(&["predict", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_file(&path).ok();
}

#[test]
fn out_of_range_numerics_exit_two() {
    let path = tmp_path("bad_tol.json");
    std::fs::write(
        &path,
        r#"{"dimension":2,"period":"solve",
            "psi":["-x2 + x1*(1 - x1^2 - x2^2)","x1 + x2*(1 - x1^2 - x2^2)"],
            "phi":["cos(t)","sin(t)"],"seed":[1.1,0.0],
            "section":{"coord":2,"value":0.0,"direction":1},
            "region":{"type":"ball","center":[0,0],"radius":2.0},
            "numerics":{"tol":0.5}}"#,
    )
    .unwrap();
    let out = run(&["predict", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("numerics.tol"), "{err}");
    std::fs::remove_file(&path).ok();
}

#[test]
fn bad_expression_exits_two() {
    let path = tmp_path("bad_expr.json");
    std::fs::write(
        &path,
        r#"{"dimension":2,"period":1.0,"psi":["x3","x2"],"phi":["0","0"],
            "seed":[1,0],"section":{"coord":1,"value":0.0,"direction":1},
            "region":{"type":"ball","center":[0,0],"radius":1.0}}"#,
    )
    .unwrap();
    let out = run(&["predict", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("UnknownVariable"), "{err}");
    std::fs::remove_file(&path).ok();
}

#[test]
fn computational_error_exits_one_with_typed_name() {
    // ball of radius 1: the cycle lies on the boundary -> GrazingContact
    let path = tmp_path("graze.json");
    std::fs::write(
        &path,
        r#"{"dimension":2,"period":"solve",
            "psi":["-x2 + x1*(1 - x1^2 - x2^2)","x1 + x2*(1 - x1^2 - x2^2)"],
            "phi":["cos(t)","sin(t)"],"seed":[1.1,0.0],
            "section":{"coord":2,"value":0.0,"direction":1},
            "region":{"type":"ball","center":[0,0],"radius":1.0}}"#,
    )
    .unwrap();
    let out = run(&["predict", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("GrazingContact"), "{err}");
    std::fs::remove_file(&path).ok();
}

#[test]
fn van_der_pol_config_analyzes() {
    let cfg = configs().join("vdp.json");
    let out = run(&["find-cycle", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("T = 6.663"), "{text}");
}

#[test]
fn selftest_passes() {
    let out = run(&["selftest"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout_of(&out);
    assert!(text.contains("all") && text.contains("checks passed"), "{text}");
}
