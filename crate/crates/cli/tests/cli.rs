use std::fs;
use std::path::Path;
use std::process::Command;

use biot_cli::config::{parse_config, KEYS};
use biot_cli::output::{float, read_trajectory};
use proptest::prelude::*;

fn biotlab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_biotlab")).args(args).output().expect("spawn biotlab");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

/// Lines of a CSV after its `#` header block.
fn table(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

const ZERO: &str = "mesh.n = 4\nmesh.bc = mixed_left\ncase = zero\nperm.model = carman_kozeny\ntime.dt = 0.1\ntime.T = 0.3\n";

#[test]
fn zero_data_run_writes_all_zero_files() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, stderr) = biotlab(&["run", &config(dir.path(), ZERO)]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("converged = true"));
    let out = dir.path().join("out");
    let traj = read_trajectory(&fs::read_to_string(out.join("trajectory.dat")).unwrap()).unwrap();
    assert_eq!(traj.len(), 3);
    for s in &traj.steps {
        for f in [&s.u, &s.p, &s.zeta, &s.z] {
            assert!(f.coefficients.iter().all(|v| *v == 0.0));
        }
    }
    let energy = fs::read_to_string(out.join("energy.csv")).unwrap();
    let rows = table(&energy);
    assert_eq!(rows[0], "step,time,u_energy,dissipation_cum,lhs,rhs,margin");
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        assert!(r.split(',').skip(2).all(|v| v.parse::<f64>().unwrap() == 0.0), "{r}");
    }
    let picard = fs::read_to_string(out.join("picard.csv")).unwrap();
    assert_eq!(table(&picard)[0], "iteration,residual");
    let vtk = fs::read_to_string(out.join("fields_0003.vtk")).unwrap();
    let lines: Vec<&str> = vtk.lines().collect();
    assert_eq!(lines[0], "# vtk DataFile Version 3.0");
    assert_eq!(lines[3], "DATASET UNSTRUCTURED_GRID");
    for tag in ["POINTS 25 double", "CELLS 32 128", "CELL_TYPES 32", "POINT_DATA 25", "VECTORS u double", "SCALARS p double 1", "SCALARS zeta double 1", "SCALARS perm double 1"] {
        assert!(lines.contains(&tag), "missing {tag}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["energy"]["holds"], true);
    assert_eq!(summary["config"]["physics.alpha"], "1.0");
}

#[test]
fn every_file_declares_version_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = biotlab(&["run", &config(dir.path(), ZERO)]);
    assert_eq!(code, 0, "{stderr}");
    let out = dir.path().join("out");
    for name in ["trajectory.dat", "energy.csv", "picard.csv", "config.resolved"] {
        let text = fs::read_to_string(out.join(name)).unwrap();
        assert!(text.starts_with(&format!("# biotlab {}\n", biot_core::VERSION)), "{name}");
        for key in KEYS {
            assert!(text.contains(&format!("# {key} = ")), "{name} lacks {key}");
        }
    }
    // the sidecar parses back to the same configuration
    let sidecar = fs::read_to_string(out.join("config.resolved")).unwrap();
    let echoed: String = sidecar
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter(|l| KEYS.iter().any(|k| l.starts_with(&format!("{k} = "))))
        .map(|l| format!("{l}\n"))
        .collect();
    assert_eq!(parse_config(&echoed).unwrap(), parse_config(ZERO).unwrap());
    let vtk = fs::read_to_string(out.join("fields_0001.vtk")).unwrap();
    assert!(vtk.lines().nth(1).unwrap().starts_with(&format!("biotlab {}", biot_core::VERSION)));
}

#[test]
fn starved_picard_exits_with_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let body = "mesh.n = 6\nmesh.bc = dirichlet\ncase = smooth_forcing\nperm.model = carman_kozeny\n\
                time.dt = 0.1\ntime.T = 0.5\npicard.max_iter = 1\n";
    let (code, _, stderr) = biotlab(&["run", &config(dir.path(), body)]);
    assert_eq!(code, 3);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["error"], "NonConvergence");
    assert_eq!(record["iterations"], 1);
    let picard = fs::read_to_string(dir.path().join("out/picard.csv")).unwrap();
    assert_eq!(table(&picard).len(), 2);
    assert!(!dir.path().join("out/trajectory.dat").exists());
}

#[test]
fn config_errors_exit_2_with_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = biotlab(&["run", &config(dir.path(), &format!("{ZERO}physics.c0 = -1\n"))]);
    assert_eq!(code, 2);
    let record: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(record["error"], "Config");
    assert_eq!(record["line"], 7);
    assert_eq!(record["key"], "physics.c0");

    let (code, _, stderr) = biotlab(&["run", &config(dir.path(), "")]);
    assert_eq!(code, 2);
    assert!(stderr.contains("mesh.n"));
    let (code, _, _) = biotlab(&["run", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(code, 2);
    let (code, _, stderr) = biotlab(&["frobnicate"]);
    assert_eq!(code, 2);
    assert_eq!(stderr.lines().count(), 1);
}

#[test]
fn operators_writes_one_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ops");
    let (code, _, stderr) = biotlab(&["operators", "--n", "4,8", "--bc", "neumann", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(out.join("operators.csv")).unwrap();
    let rows = table(&csv);
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("4,neumann,25,1,"));
    assert!(rows[2].starts_with("8,neumann,81,1,"));
    let (code, _, _) = biotlab(&["operators", "--bc", "sideways"]);
    assert_eq!(code, 2);
}

#[test]
fn mms_writes_rates_and_fails_on_unreachable_orders() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mms");
    let o = out.to_str().unwrap();
    let (code, _, stderr) = biotlab(&["mms", "--levels", "4,8", "--no-temporal", "--min-order", "1.5", "--out", o]);
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(out.join("rates.csv")).unwrap();
    let rows = table(&csv);
    assert_eq!(rows[0], "level,n,h,err_u_h1,err_p_l2,err_p_h1semi,order_u,order_p");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].ends_with(",nan,nan"));

    let (code, _, stderr) = biotlab(&["mms", "--levels", "4,8", "--no-temporal", "--min-order", "3", "--out", o]);
    assert_eq!(code, 4);
    assert!(stderr.contains("InvariantViolation"));

    assert_eq!(biotlab(&["mms", "--case", "nope", "--out", o]).0, 2);
    assert_eq!(biotlab(&["mms", "--levels", "8,4", "--out", o]).0, 2);
}

#[test]
fn audit_and_compare_reuse_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let body = "mesh.n = 4\nmesh.bc = neumann\ncase = smooth_forcing\nperm.model = quadratic\nperm.b = 0.5\n\
                time.dt = 0.1\ntime.T = 0.3\n";
    let cfg = config(dir.path(), body);
    assert_eq!(biotlab(&["audit", &cfg]).0, 1, "nothing stored yet");
    assert_eq!(biotlab(&["run", &cfg]).0, 0);
    let (code, stdout, stderr) = biotlab(&["audit", &cfg]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("holds = true"));
    let out = dir.path().join("out");
    let fresh = fs::read_to_string(out.join("energy.csv")).unwrap();
    let again = fs::read_to_string(out.join("audit_energy.csv")).unwrap();
    assert_eq!(table(&fresh), table(&again));

    let (code, _, stderr) = biotlab(&["compare", &cfg]);
    assert_eq!(code, 0, "{stderr}");
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    assert_eq!(table(&csv).len(), 4);
}

proptest! {
    #[test]
    fn floats_round_trip(bits in any::<u64>()) {
        let v = f64::from_bits(bits);
        prop_assume!(v.is_finite());
        prop_assert_eq!(float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn resolved_config_parses_back(n in 1usize..40, layout in 0usize..3, c0 in 0.0f64..10.0, tol in 1e-14f64..1e-2, steps in 1usize..20) {
        let bc = ["dirichlet", "neumann", "mixed_left"][layout];
        let dt = 0.05;
        let text = format!(
            "mesh.n = {n}\nmesh.bc = {bc}\ncase = source_only\nperm.model = quadratic\nphysics.c0 = {c0:?}\n\
             picard.tol = {tol:?}\ntime.dt = {dt}\ntime.T = {:?}\n",
            dt * steps as f64
        );
        let cfg = parse_config(&text).unwrap();
        let echoed: String = cfg.resolved().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        prop_assert_eq!(parse_config(&echoed).unwrap(), cfg);
    }
}
