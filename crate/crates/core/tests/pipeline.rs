//! End-to-end runs driven through the experiment config.

use proptest::prelude::*;
use swave_core::adjoint::TerminalData;
use swave_core::carleman::{identity_field, identity_residual, ManufacturedProcess};
use swave_core::config::{ExperimentConfig, Purpose};
use swave_core::control::{apply_gramian, hum_solve, tstar_scan, HumOptions};
use swave_core::coefficients::CoefficientSet;
use swave_core::discretization::{Face, Grid, Side, SpaceGrid, TimeGrid};
use swave_core::geometry::compute_report;
use swave_core::noise::Ensemble;

fn config(toml: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(toml).unwrap()
}

#[test]
fn configured_control_reaches_rest() {
    let cfg = config("[discretization]\nnx = [50]");
    cfg.validate_for(Purpose::Control).unwrap();
    let geom = cfg.geometry().unwrap();
    let grid = cfg.grid(geom.t_final).unwrap();
    let (y0, yh0) = cfg.control.initial.fields(&grid.space).unwrap();
    let (y1, yh1) = cfg.control.target.fields(&grid.space).unwrap();
    let gamma0 = compute_report(&geom).unwrap().gamma0;
    let mut log = Vec::new();
    let out = hum_solve(&grid, &y0, &yh0, (&y1, &yh1), &cfg.coefficients().unwrap(), &gamma0, &cfg.hum_options(), |r| log.push(*r)).unwrap();
    assert!(out.achieved_error * 100.0 <= out.uncontrolled_error, "{} vs {}", out.achieved_error, out.uncontrolled_error);
    assert_eq!(log.len(), out.iterations);
    assert!(log.windows(2).all(|w| w[1].residual <= w[0].residual * (1.0 + 1e-12)));
}

#[test]
fn configured_scan_separates_short_and_long_horizons() {
    let cfg = config("[discretization]\nnx = [60]\n[control]\nhorizons = [1.0, 3.0]");
    cfg.validate_for(Purpose::Observability).unwrap();
    let space = cfg.space_grid().unwrap();
    let gamma0 = compute_report(&cfg.geometry().unwrap()).unwrap().gamma0;
    let rows = tstar_scan(&space, cfg.dt_for(&space), &cfg.coefficients().unwrap(), &gamma0, &cfg.family(), &cfg.control.horizons).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.degenerate == 0 && r.members == cfg.family().len()));
    assert!(rows[0].worst_ratio > 100.0 * rows[1].worst_ratio, "{rows:?}");
}

#[test]
fn monte_carlo_does_not_depend_on_the_thread_count() {
    let cfg = config("");
    let geom = cfg.geometry().unwrap();
    let params = cfg.carleman_params(&geom).unwrap();
    let grid = Grid::new(SpaceGrid::new(&[0.0], &[1.0], &[24]).unwrap(), TimeGrid::covering(2.5, 1.0 / 48.0).unwrap());
    let field = identity_field(&params, &geom, &grid);
    let process = ManufacturedProcess::polynomial_bump(&grid, true);
    let ens = Ensemble::new(9, 64, grid.time.dt, grid.time.steps).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| identity_residual(&field, &process, Some(&ens)).unwrap().expected_integrated.unwrap())
    };
    let (a, b) = (run(1), run(5));
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.ci_halfwidth.to_bits(), b.ci_halfwidth.to_bits());
}

#[test]
fn default_hum_options_come_from_the_config() {
    assert_eq!(config("").hum_options(), HumOptions::default());
    let raw = config("[control]\nfilter = 0\ntaper = 0").hum_options();
    assert!(raw.filter.is_none() && raw.taper.width.is_none());
}

fn smooth(s: &SpaceGrid, a: &[f64], b: &[f64]) -> TerminalData {
    let series = |c: &[f64], x: f64| c.iter().enumerate().map(|(k, v)| v * ((k + 1) as f64 * std::f64::consts::PI * x).sin()).sum::<f64>();
    TerminalData::new(s, s.sample(|x| series(a, x[0])), s.sample_interior(|x| series(b, x[0]))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// `<Λξ, ξ>` is the observed energy of the adjoint solution, so never negative.
    #[test]
    fn gramian_is_positive_semidefinite(
        a in proptest::collection::vec(-1.0f64..1.0, 4),
        b in proptest::collection::vec(-1.0f64..1.0, 4),
        t in 0.5f64..3.0,
    ) {
        let grid = Grid::new(SpaceGrid::new(&[0.0], &[1.0], &[16]).unwrap(), TimeGrid::covering(t, 1.0 / 32.0).unwrap());
        let xi = smooth(&grid.space, &a, &b);
        let app = apply_gramian(&grid, &xi, &CoefficientSet::zero(), &[Face::new(0, Side::High)], HumOptions::default().taper).unwrap();
        let q = app.pairing(&grid.space, &xi);
        let obs: f64 = app.observation.iter().sum();
        prop_assert!(q >= -1e-12 * obs.max(1e-300));
        prop_assert!((q - obs).abs() <= 1e-10 * obs.max(1e-300));
    }
}
