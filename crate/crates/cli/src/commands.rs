//! The five experiment commands. Each validates its config before solving and
//! writes its tables into `output.dir`.

use crate::output::{num, Stamp, Table};
use std::path::PathBuf;
use swave_core::adjoint::{energy_check, solve_adjoint};
use swave_core::carleman::{
    carleman_sweep, check_bv2, check_zd1, check_zd3, identity_field, identity_residual, transform, zd3_threshold, ManufacturedProcess,
    PositivityReport,
};
use swave_core::config::{ExperimentConfig, IdentityProcess, Purpose};
use swave_core::control::{hum_solve, terminal_error, tstar_scan, CgRecord};
use swave_core::discretization::{Face, Grid, Side, TimeGrid};
use swave_core::forward::{solve_forward, solve_forward_terminal};
use swave_core::geometry::{build_cutoff, compute_report, verify_conditions, CarlemanParams, ConditionReport};
use swave_core::noise::Ensemble;
use swave_core::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_CHECK: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;
pub const EXIT_STAGNATION: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CgNotConverged { .. } => EXIT_STAGNATION,
            _ => EXIT_RUNTIME,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(EXIT_RUNTIME, format!("writing output: {e}"))
    }
}

pub type Outcome = Result<(), Failure>;

/// A loaded config with its provenance stamp.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub stamp: Stamp,
}

impl Run {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let stamp = Stamp::of(&cfg);
        Self { cfg, stamp }
    }

    fn table(&self, name: &str, header: &[&str]) -> Table {
        Table::new(name, &self.stamp, header)
    }

    fn emit(&self, table: &Table) -> Result<(), Failure> {
        let path = table.write(&PathBuf::from(&self.cfg.output.dir))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    fn validate(&self, purpose: Purpose) -> Outcome {
        self.cfg.validate_for(purpose).map_err(Failure::config)
    }
}

pub fn face_label(f: Face) -> String {
    format!("x{}{}", f.axis + 1, if f.side == Side::High { "+" } else { "-" })
}

fn flag(b: bool) -> String {
    b.to_string()
}

fn condition_rows(t: &mut Table, c: &ConditionReport) {
    for (i, (ok, margin)) in [(c.cond1, c.margin1), (c.cond2, c.margin2), (c.cond3, c.margin3)].into_iter().enumerate() {
        t.row(vec![format!("condition{}", i + 1), flag(ok), num(margin)]);
    }
}

fn param_rows(t: &mut Table, p: &CarlemanParams) {
    for (q, v) in [("r2", p.r2), ("beta", p.beta), ("c0", p.c0), ("c0_tilde", p.c0_tilde), ("c1", p.c1), ("eps", p.eps), ("delta", p.delta)] {
        t.row(vec![q.into(), num(v), String::new()]);
    }
}

pub fn geometry(run: &Run) -> Outcome {
    run.validate(Purpose::Geometry)?;
    let geom = run.cfg.geometry().map_err(Failure::config)?;
    let report = compute_report(&geom).map_err(Failure::config)?;
    let kappa_t = geom.kappa * geom.t_final;
    let mut t = run.table("geometry.csv", &["quantity", "value", "margin"]);
    t.row(vec!["r1".into(), num(report.r1), String::new()]);
    t.row(vec!["tstar".into(), num(report.tstar), String::new()]);
    t.row(vec!["alpha".into(), num(report.alpha), String::new()]);
    t.row(vec!["kappa_t".into(), num(kappa_t), num(kappa_t - report.tstar)]);
    t.row(vec!["t_final".into(), num(geom.t_final), num(geom.t_final - report.tstar)]);
    for f in &report.gamma0 {
        t.row(vec!["gamma0".into(), face_label(*f), String::new()]);
    }
    println!("T* = {}, alpha = {}, observed faces: {}", num(report.tstar), num(report.alpha), faces_text(&report.gamma0));
    if kappa_t > report.tstar {
        let p = run.cfg.carleman_params(&geom)?;
        param_rows(&mut t, &p);
        let c = verify_conditions(&p, &geom);
        condition_rows(&mut t, &c);
        println!("beta = {}, conditions hold: {}", num(p.beta), c.all());
    } else {
        println!("kappa T = {kappa_t} does not exceed T*; no weight parameters exist");
    }
    run.emit(&t)
}

fn faces_text(faces: &[Face]) -> String {
    faces.iter().map(|f| face_label(*f)).collect::<Vec<_>>().join(" ")
}

fn positivity_row(t: &mut Table, r: &PositivityReport, lambda: f64, mu: f64) {
    t.row(vec![
        r.name.replace(' ', "_"),
        num(lambda),
        num(mu),
        r.nodes.to_string(),
        r.violations.to_string(),
        r.unevaluated.to_string(),
        num(r.worst_margin),
        flag(r.passed()),
    ]);
}

pub fn carleman_verify(run: &Run) -> Outcome {
    run.validate(Purpose::Carleman)?;
    let cfg = &run.cfg;
    let c = &cfg.carleman;
    let geom = cfg.geometry().map_err(Failure::config)?;
    let report = compute_report(&geom)?;
    let params = cfg.carleman_params(&geom).map_err(|e| Failure::new(EXIT_CHECK, e.to_string()))?;

    let conds = verify_conditions(&params, &geom);
    let mut t = run.table("conditions.csv", &["quantity", "value", "margin"]);
    param_rows(&mut t, &params);
    condition_rows(&mut t, &conds);
    // ε = 0 means no ε, δ make the level sets nest inside the time window
    let nested = params.eps > 0.0;
    t.row(vec!["level_sets_nested".into(), flag(nested), String::new()]);
    run.emit(&t)?;
    if !conds.all() || !nested {
        let mut failing: Vec<String> = [(conds.cond1, conds.margin1), (conds.cond2, conds.margin2), (conds.cond3, conds.margin3)]
            .iter()
            .enumerate()
            .filter(|(_, (ok, _))| !ok)
            .map(|(i, (_, m))| format!("condition ({}) fails with margin {}", i + 1, num(*m)))
            .collect();
        if !nested {
            failing.push("no eps, delta keep the level sets inside (0, T)".into());
        }
        return Err(Failure::new(EXIT_CHECK, format!("beta = {}: {}", num(params.beta), failing.join("; "))));
    }

    // identity ladder over (h, dt) halvings
    let mut id_params = params;
    id_params.lambda = c.identity_lambda;
    id_params.mu = c.identity_mu;
    let mut t = run.table("identity.csv", &["h", "dt", "residual", "order"]);
    let mut previous: Option<f64> = None;
    let mut finest = None;
    for level in 0..cfg.discretization.levels {
        let cells: Vec<usize> = c.identity_nx.iter().map(|n| n << level).collect();
        let space = cfg.space_grid_with(&cells)?;
        let h = space.min_spacing();
        let grid = Grid::new(space, TimeGrid::covering(geom.t_final, cfg.discretization.cfl * h)?);
        let field = identity_field(&id_params, &geom, &grid);
        let process = match c.identity_process {
            IdentityProcess::Bump => ManufacturedProcess::polynomial_bump(&grid, true),
            IdentityProcess::Zero => ManufacturedProcess::zero(&grid, true),
        };
        let r = identity_residual(&field, &process, None)?.interior.residual;
        let order = previous.filter(|p| *p > 0.0 && r > 0.0).map(|p| num((p / r).log2())).unwrap_or_default();
        t.row(vec![num(h), num(grid.time.dt), num(r), order]);
        println!("identity h = {}: residual {}", num(h), num(r));
        previous = Some(r);
        finest = Some((field, process));
    }
    run.emit(&t)?;

    let (field, process) = finest.expect("at least two levels");
    let time = &field.grid.time;
    let ensemble = Ensemble::new(cfg.mc.seed, cfg.mc.paths, time.dt, time.steps)?;
    let est = identity_residual(&field, &process, Some(&ensemble))?.expected_integrated.expect("process carries noise");
    let mut t = run.table("identity_ensemble.csv", &["quantity", "mean", "ci", "M"]);
    t.row(vec!["integrated_identity_residual".into(), num(est.mean), num(est.ci_halfwidth), est.count.to_string()]);
    run.emit(&t)?;
    println!("expected integrated residual {} ± {} (M = {})", num(est.mean), num(est.ci_halfwidth), est.count);

    // positivity on the main grid
    let grid = cfg.grid(geom.t_final)?;
    let mut t = run.table("positivity.csv", &["check", "lambda", "mu", "nodes", "violations", "unevaluated", "worst_margin", "passed"]);
    let mut all_passed = true;
    for &lambda in &c.lambdas {
        for &mu in &c.mus {
            let p = CarlemanParams { lambda, mu, ..params };
            let r = check_bv2(&p, &geom, &grid, c.directions, cfg.mc.seed);
            all_passed &= r.passed();
            positivity_row(&mut t, &r, lambda, mu);
        }
    }
    let r = check_zd1(&params, &geom, &grid);
    all_passed &= r.passed();
    positivity_row(&mut t, &r, params.lambda, params.mu);
    let p0 = CarlemanParams { lambda: c.lambda0, ..params };
    let mu0 = zd3_threshold(&p0, &geom, &grid, c.mu0, c.mu_cap);
    let p3 = CarlemanParams { mu: mu0.unwrap_or(c.mu_cap), ..p0 };
    let r = check_zd3(&p3, &geom, &grid);
    all_passed &= mu0.is_some() && r.passed();
    positivity_row(&mut t, &r, p3.lambda, p3.mu);
    run.emit(&t)?;

    // both sides of the estimate over the (λ, μ) ladders
    let coeffs = cfg.coefficients()?;
    let terminal = c.terminal.terminal(&grid.space)?;
    let adj = solve_adjoint(&grid, &terminal, &coeffs, grid.time.steps)?;
    let cutoff = build_cutoff(&params, &geom, &grid)?;
    let tr = transform(&adj, &cutoff)?;
    let rows = carleman_sweep(&params, &geom, &grid, &adj, &tr, &cutoff, &report.gamma0, &c.lambdas, &c.mus)?;
    let mut t = run.table("carleman.csv", &["lambda", "mu", "lhs", "rhs", "ratio", "log_scale", "resolution", "degenerate"]);
    for r in &rows {
        t.row(vec![num(r.lambda), num(r.mu), num(r.lhs), num(r.rhs), num(r.ratio), num(r.log_scale), num(r.resolution), flag(r.degenerate)]);
    }
    run.emit(&t)?;

    if !all_passed {
        return Err(Failure::new(EXIT_CHECK, "a positivity check failed; see positivity.csv"));
    }
    println!("all positivity checks passed");
    Ok(())
}

pub fn observability(run: &Run) -> Outcome {
    run.validate(Purpose::Observability)?;
    let cfg = &run.cfg;
    let geom = cfg.geometry().map_err(Failure::config)?;
    let report = compute_report(&geom)?;
    let space = cfg.space_grid()?;
    let dt = cfg.dt_for(&space);
    let coeffs = cfg.coefficients()?;
    let rows = tstar_scan(&space, dt, &coeffs, &report.gamma0, &cfg.family(), &cfg.control.horizons)?;
    let mut t = run.table("scan.csv", &["T", "ratio", "worst_member", "degenerate", "members"]);
    for r in &rows {
        t.row(vec![num(r.t_final), num(r.worst_ratio), r.worst_member.clone(), r.degenerate.to_string(), r.members.to_string()]);
        println!("T = {}: worst ratio {} ({})", num(r.t_final), num(r.worst_ratio), r.worst_member);
    }
    run.emit(&t)?;
    if rows.iter().all(|r| r.all_degenerate()) {
        return Err(Failure::new(EXIT_DEGENERATE, "every scan point is degenerate"));
    }
    Ok(())
}

pub fn control(run: &Run) -> Outcome {
    run.validate(Purpose::Control)?;
    let cfg = &run.cfg;
    let geom = cfg.geometry().map_err(Failure::config)?;
    let report = compute_report(&geom)?;
    let grid = cfg.grid(geom.t_final)?;
    let s = &grid.space;
    let coeffs = cfg.coefficients()?;
    let (y0, yh0) = cfg.control.initial.fields(s)?;
    let (y1, yh1) = cfg.control.target.fields(s)?;
    let mut history: Vec<CgRecord> = Vec::new();
    let outcome = hum_solve(&grid, &y0, &yh0, (&y1, &yh1), &coeffs, &report.gamma0, &cfg.hum_options(), |r| history.push(*r));
    let mut t = run.table("cg_log.csv", &["iteration", "residual", "terminal_error"]);
    for r in &history {
        t.row(vec![r.iteration.to_string(), num(r.residual), num(r.terminal_error)]);
    }
    run.emit(&t)?;
    let out = outcome?;

    let ensemble = Ensemble::new(cfg.mc.seed, cfg.mc.paths, grid.time.dt, grid.time.steps)?;
    let stats = ensemble
        .map_stats(|_, path| terminal_error(s, &solve_forward_terminal(&grid, &y0, &yh0, &out.controls, &coeffs, path)?, (&y1, &yh1)))?
        .estimate()?;
    let mut t = run.table("control_ensemble.csv", &["quantity", "mean", "ci", "M"]);
    t.row(vec!["terminal_error".into(), num(stats.mean), num(stats.ci_halfwidth), stats.count.to_string()]);
    run.emit(&t)?;

    let reduction = if out.achieved_error > 0.0 { out.uncontrolled_error / out.achieved_error } else { f64::INFINITY };
    let mut t = run.table("control_summary.csv", &["quantity", "value"]);
    for (q, v) in [
        ("tstar", num(report.tstar)),
        ("iterations", out.iterations.to_string()),
        ("uncontrolled_error", num(out.uncontrolled_error)),
        ("achieved_error", num(out.achieved_error)),
        ("reduction", num(reduction)),
        ("control_norm", num(out.controls.norm_sq(&grid)?.sqrt())),
    ] {
        t.row(vec![q.into(), v]);
    }
    run.emit(&t)?;
    println!(
        "{} iterations, terminal error {} of uncontrolled {} (reduction {reduction:.1}x)",
        out.iterations,
        num(out.achieved_error),
        num(out.uncontrolled_error)
    );

    let dt = grid.time.dt;
    if cfg.control.dump_controls {
        let mut t = run.table("controls_interior.csv", &["t", "node", "f", "g"]);
        for (k, (f, g)) in out.controls.f.iter().zip(&out.controls.g).enumerate() {
            for &i in s.interior() {
                t.row(vec![num((k as f64 + 0.5) * dt), i.to_string(), num(f[i]), num(g[i])]);
            }
        }
        run.emit(&t)?;
        let mut t = run.table("controls_boundary.csv", &["t", "face", "node", "h"]);
        for (k, level) in out.controls.h.iter().enumerate() {
            for (face, values) in out.controls.faces.iter().zip(level) {
                for (node, v) in s.face_nodes(*face).iter().zip(values) {
                    t.row(vec![num(grid.time.t(k)), face_label(*face), node.to_string(), num(*v)]);
                }
            }
        }
        run.emit(&t)?;
    }
    if let Some(stride) = cfg.output.snapshot_stride {
        let path = ensemble.path(0);
        let traj = solve_forward(&grid, &y0, &yh0, &out.controls, &coeffs, &path)?;
        let mut t = run.table("snapshots.csv", &["t", "node", "y", "yhat"]);
        for k in (0..traj.y.len()).step_by(stride) {
            for i in 0..s.node_count() {
                t.row(vec![num(grid.time.t(k)), i.to_string(), num(traj.y[k][i]), num(traj.yhat[k][i])]);
            }
        }
        run.emit(&t)?;
    }
    Ok(())
}

pub fn energy(run: &Run) -> Outcome {
    run.validate(Purpose::Energy)?;
    let cfg = &run.cfg;
    let geom = cfg.geometry().map_err(Failure::config)?;
    let grid = cfg.grid(geom.t_final)?;
    let coeffs = cfg.coefficients()?;
    let r2 = cfg.r2()?;
    let terminal = cfg.control.terminal.terminal(&grid.space)?;
    let adj = solve_adjoint(&grid, &terminal, &coeffs, grid.time.steps)?;
    let e = energy_check(&grid, &adj, r2, None);
    let last = e.energy.len() - 1;
    let tau = grid.time.t(last);
    let mut t = run.table("energy.csv", &["t", "energy", "observation", "lower", "upper"]);
    for k in 0..=last {
        let growth = (e.fitted_c * (r2 + 1.0) * tau).exp();
        let lower = e.energy[k] / growth;
        let upper = growth * (e.energy[k] + e.observation[k]);
        t.row(vec![num(grid.time.t(k)), num(e.energy[k]), num(e.observation[k]), num(lower), num(upper)]);
    }
    run.emit(&t)?;
    let et = e.energy[last];
    let drift = e.energy.iter().map(|v| (v - et).abs()).fold(0.0, f64::max) / et.max(f64::MIN_POSITIVE);
    let ok = e.fitted_c.is_finite() && e.forward_bound_ok && e.backward_bound_ok;
    let mut t = run.table("energy_summary.csv", &["quantity", "value"]);
    for (q, v) in [
        ("r2", num(r2)),
        ("fitted_c", num(e.fitted_c)),
        ("upper_bound_holds", flag(e.forward_bound_ok)),
        ("lower_bound_holds", flag(e.backward_bound_ok)),
        ("relative_drift", num(drift)),
        ("steps", grid.time.steps.to_string()),
    ] {
        t.row(vec![q.into(), v]);
    }
    run.emit(&t)?;
    if cfg.output.trace_dump {
        let mut t = run.table("trace.csv", &["t", "face", "node", "value"]);
        for k in 0..adj.levels() {
            for (j, face) in adj.faces.iter().enumerate() {
                for (node, v) in grid.space.face_nodes(*face).iter().zip(&adj.trace[k][j]) {
                    t.row(vec![num(grid.time.t(k)), face_label(*face), node.to_string(), num(*v)]);
                }
            }
        }
        run.emit(&t)?;
    }
    println!("fitted C = {}, relative energy drift {}", num(e.fitted_c), num(drift));
    if !ok {
        return Err(Failure::new(EXIT_CHECK, "the energy band does not hold with a finite constant"));
    }
    Ok(())
}
