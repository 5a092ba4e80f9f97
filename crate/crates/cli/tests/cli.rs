mod common;

use common::{swave, SMALL};

fn root() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

#[test]
fn geometry_reports_waiting_time_and_stamps_tables() {
    let r = root();
    let out = swave(r.path(), "g", "geometry", "", None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let text = out.file("geometry.csv");
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "quantity,value,margin");
    assert_eq!(out.quantity("geometry.csv", "tstar"), "2.2");
    assert_eq!(out.quantity("geometry.csv", "gamma0"), "x1+");
    assert_eq!(out.quantity("geometry.csv", "condition3"), "true");
}

#[test]
fn two_dimensional_geometry_lists_two_faces() {
    let r = root();
    let toml = "[geometry]\nlo = [0.0, 0.0]\nhi = [1.0, 1.0]\nx0 = [-0.1, -0.1]\n[discretization]\nnx = [10, 10]";
    let out = swave(r.path(), "g2", "geometry", toml, None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let faces: Vec<_> = out.file("geometry.csv").lines().filter(|l| l.starts_with("gamma0,")).map(String::from).collect();
    assert_eq!(faces, ["gamma0,x1+,", "gamma0,x2+,"]);
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let r = root();
    for (label, toml) in [
        ("inside", "[geometry]\nx0 = [0.5]"),
        ("typo", "[geometry]\nkapa = 0.9"),
        ("section", "[plots]\nx = 1"),
        ("leapfrog", "[discretization]\nscheme = \"leapfrog\""),
    ] {
        let out = swave(r.path(), label, "geometry", toml, None);
        assert_eq!(out.code, 2, "{label}: {}", out.stderr);
        assert!(out.tables().is_empty(), "{label} wrote output");
    }
    let out = swave(r.path(), "workers", "geometry", "", Some(0));
    assert_eq!(out.code, 2);
}

#[test]
fn forced_small_beta_exits_three() {
    let r = root();
    let out = swave(r.path(), "b", "carleman-verify", "[carleman]\nbeta = 0.1\nr2 = 1.0", None);
    assert_eq!(out.code, 3, "{}", out.stderr);
    assert!(out.stderr.contains("condition (3) fails"), "{}", out.stderr);
    assert_eq!(out.quantity("conditions.csv", "condition3"), "false");
    let out = swave(r.path(), "b0", "carleman-verify", "[carleman]\nbeta = 0.1", None);
    assert_eq!(out.code, 3, "{}", out.stderr);
    assert_eq!(out.quantity("conditions.csv", "level_sets_nested"), "false");
}

#[test]
fn carleman_verify_tables() {
    let r = root();
    let out = swave(r.path(), "c", "carleman-verify", SMALL[1].1, None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let residuals: Vec<f64> = out.file("identity.csv").lines().skip(2).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(residuals.len(), 3);
    assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
    let positivity = out.file("positivity.csv");
    assert!(positivity.lines().skip(2).all(|l| l.ends_with(",true")), "{positivity}");
    assert_eq!(out.file("carleman.csv").lines().count(), 2 + 4);
    let ens = out.file("identity_ensemble.csv");
    let row: Vec<&str> = ens.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[3], "200");
}

#[test]
fn zero_identity_process_gives_zero_residuals() {
    let r = root();
    let toml = "[discretization]\nnx = [20]\n[carleman]\nidentity_process = \"zero\"\nlambdas = [1.0]\nmus = [1.0]\n[mc]\npaths = 10";
    let out = swave(r.path(), "z", "carleman-verify", toml, None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    for line in out.file("identity.csv").lines().skip(2) {
        assert_eq!(line.split(',').nth(2), Some("0"), "{line}");
    }
}

#[test]
fn degenerate_scan_exits_four() {
    let r = root();
    let out = swave(r.path(), "o", "observability", "[discretization]\nnx = [20]\n[control]\nfamily = [{ kind = \"zero\" }]", None);
    assert_eq!(out.code, 4, "{}", out.stderr);
    assert!(out.file("scan.csv").contains("NaN"));
}

#[test]
fn scan_ratio_is_bounded_past_the_waiting_time() {
    let r = root();
    let out = swave(r.path(), "o", "observability", SMALL[2].1, None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let ratios: Vec<f64> = out.file("scan.csv").lines().skip(2).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(ratios[0] > 100.0 * ratios[1], "{ratios:?}");
}

#[test]
fn control_runs() {
    let r = root();
    let out = swave(r.path(), "sine", "control", SMALL[3].1, None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let reduction: f64 = out.quantity("control_summary.csv", "reduction").parse().unwrap();
    assert!(reduction >= 100.0, "{reduction}");
    let tables = out.tables();
    for name in ["cg_log.csv", "control_ensemble.csv", "controls_interior.csv", "controls_boundary.csv", "snapshots.csv"] {
        assert!(tables.contains_key(name), "{name} missing");
    }
    // levels 0, 25, ..., 250 at nx = 50, dt = h/2, 51 nodes each
    assert_eq!(out.file("snapshots.csv").lines().count(), 2 + 11 * 51);

    let out = swave(r.path(), "rest", "control", "[discretization]\nnx = [20]\n[mc]\npaths = 2\n[control]\ninitial = { kind = \"zero\" }", None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.quantity("control_summary.csv", "iterations"), "0");
    assert_eq!(out.file("cg_log.csv").lines().count(), 2);
}

#[test]
fn control_guards_and_stagnation() {
    let r = root();
    let out = swave(r.path(), "short", "control", "[geometry]\nt_final = 2.0", None);
    assert_eq!(out.code, 2, "{}", out.stderr);
    assert!(out.stderr.contains("strict"));
    let out = swave(r.path(), "stall", "control", "[discretization]\nnx = [20]\n[control]\nmax_iter = 3\ntol = 1e-12", None);
    assert_eq!(out.code, 5, "{}", out.stderr);
    assert_eq!(out.file("cg_log.csv").lines().count(), 2 + 3);
}

#[test]
fn energy_band_with_large_damping() {
    let r = root();
    let out = swave(r.path(), "e", "energy-check", SMALL[4].1, None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let c: f64 = out.quantity("energy_summary.csv", "fitted_c").parse().unwrap();
    assert!(c.is_finite() && c > 0.0);
    assert_eq!(out.quantity("energy_summary.csv", "upper_bound_holds"), "true");
    let out = swave(r.path(), "free", "energy-check", "[discretization]\nnx = [40]\n[output]\ntrace_dump = true", None);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let drift: f64 = out.quantity("energy_summary.csv", "relative_drift").parse().unwrap();
    assert!(drift < 1e-10, "{drift}");
    // both end points are faces; 201 levels
    assert_eq!(out.file("trace.csv").lines().count(), 2 + 2 * 201);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let r = root();
    for (command, toml) in SMALL {
        let a = swave(r.path(), &format!("{command}-a"), command, toml, Some(1));
        let b = swave(r.path(), &format!("{command}-b"), command, toml, Some(3));
        assert_eq!(a.code, 0, "{command}: {}", a.stderr);
        let (ta, tb) = (a.tables(), b.tables());
        assert!(!ta.is_empty());
        assert_eq!(ta, tb, "{command}");
    }
}
