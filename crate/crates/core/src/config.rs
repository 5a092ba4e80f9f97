//! Experiment configuration: one TOML file with the sections `[geometry]`,
//! `[discretization]`, `[coefficients]`, `[carleman]`, `[mc]`, `[control]` and
//! `[output]`. Unknown keys are rejected and every cross-section check runs in
//! [`ExperimentConfig::validate_for`] before any solve.

use crate::coefficients::{Coefficient, CoefficientSet};
use crate::control::{HumOptions, Taper};
use crate::discretization::{Grid, SpaceGrid, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{choose_beta_with, compute_report, params_with_beta, BetaSearch, CarlemanParams, GeometrySpec};
use crate::presets::{default_family, DataPreset};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub discretization: DiscretizationSection,
    pub coefficients: CoefficientSection,
    pub carleman: CarlemanSection,
    pub mc: McSection,
    pub control: ControlSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub x0: Vec<f64>,
    pub kappa: f64,
    pub t_final: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self { lo: vec![0.0], hi: vec![1.0], x0: vec![-0.1], kappa: 0.95, t_final: 2.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Midpoint,
    Leapfrog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    /// cells per axis
    pub nx: Vec<usize>,
    /// time step; when absent `dt = cfl · min h`
    pub dt: Option<f64>,
    pub scheme: Scheme,
    pub cfl: f64,
    /// levels of the refinement ladders used by convergence tables
    pub levels: usize,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        Self { nx: vec![100], dt: None, scheme: Scheme::Midpoint, cfl: 0.5, levels: 3 }
    }
}

/// A coefficient given as a number or an expression string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientValue {
    Number(f64),
    Expr(String),
}

impl Default for CoefficientValue {
    fn default() -> Self {
        CoefficientValue::Number(0.0)
    }
}

impl CoefficientValue {
    pub fn parse(&self) -> Result<Coefficient> {
        match self {
            CoefficientValue::Number(v) => Ok(Coefficient::constant(*v)),
            CoefficientValue::Expr(s) => Coefficient::parse(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientSection {
    pub a1: CoefficientValue,
    pub a2: CoefficientValue,
    pub a3: CoefficientValue,
    pub a4: CoefficientValue,
    pub a5: CoefficientValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityProcess {
    /// smooth manufactured process
    Bump,
    /// `u = 0`
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanSection {
    /// size of the coefficients; computed from `[coefficients]` when absent
    pub r2: Option<f64>,
    /// forces `β` instead of searching for it
    pub beta: Option<f64>,
    pub beta_cap: f64,
    /// cut-off transition width; the searched value when absent
    pub delta: Option<f64>,
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub identity_lambda: f64,
    pub identity_mu: f64,
    /// coarsest cells per axis of the identity ladder
    pub identity_nx: Vec<usize>,
    pub identity_process: IdentityProcess,
    /// random directions per node for the quadratic-form check
    pub directions: usize,
    /// `λ` at which the zero-order bound is checked, and the start of the `μ` ladder
    pub lambda0: f64,
    pub mu0: f64,
    pub mu_cap: f64,
    /// terminal datum of the estimate ratio sweep
    pub terminal: DataPreset,
}

impl Default for CarlemanSection {
    fn default() -> Self {
        Self {
            r2: None,
            beta: None,
            beta_cap: 1e9,
            delta: None,
            lambdas: vec![1.0, 10.0, 100.0, 1000.0],
            mus: vec![1.0, 2.0, 5.0, 10.0],
            identity_lambda: 0.5,
            identity_mu: 0.1,
            identity_nx: vec![16],
            identity_process: IdentityProcess::Bump,
            directions: 8,
            lambda0: 1e6,
            mu0: 1.0,
            mu_cap: 1024.0,
            terminal: DataPreset::Sine { modes: vec![1] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub paths: usize,
    pub seed: u64,
    /// worker threads; all cores when absent
    pub workers: Option<usize>,
}

impl Default for McSection {
    fn default() -> Self {
        Self { paths: 1000, seed: 42, workers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    /// horizons of the observability scan
    pub horizons: Vec<f64>,
    /// data family of the scan; low modes and bumps when absent
    pub family: Option<Vec<DataPreset>>,
    /// adjoint terminal datum for single observability and energy runs
    pub terminal: DataPreset,
    pub initial: DataPreset,
    pub target: DataPreset,
    pub tol: f64,
    pub max_iter: usize,
    /// kept fraction of the sine band; 0 disables filtering
    pub filter: f64,
    /// ramp width of the control window; 0 disables it
    pub taper: f64,
    /// refuse control runs with `T ≤ T*`
    pub strict: bool,
    pub dump_controls: bool,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self {
            horizons: vec![0.5, 1.0, 1.5, 2.0, 2.2, 2.5, 3.0, 4.0],
            family: None,
            terminal: DataPreset::Sine { modes: vec![1] },
            initial: DataPreset::Sine { modes: vec![1] },
            target: DataPreset::Zero,
            tol: 1e-8,
            max_iter: 200,
            filter: 0.6,
            taper: 0.2,
            strict: true,
            dump_controls: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// also write the boundary trace of energy runs as `(t, face, node, value)`
    pub trace_dump: bool,
    /// write controlled trajectory snapshots `(t, node, y, ŷ)` every this many steps
    pub snapshot_stride: Option<usize>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), trace_dump: false, snapshot_stride: None }
    }
}

/// What a configuration is about to be used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Geometry,
    Carleman,
    Observability,
    Control,
    Energy,
}

fn cfg_err(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Normalised TOML with every default spelled out; the reproducibility key.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn geometry(&self) -> Result<GeometrySpec> {
        let g = &self.geometry;
        GeometrySpec::new(g.lo.clone(), g.hi.clone(), g.x0.clone(), g.kappa, g.t_final)
    }

    pub fn space_grid(&self) -> Result<SpaceGrid> {
        self.space_grid_with(&self.discretization.nx)
    }

    pub fn space_grid_with(&self, cells: &[usize]) -> Result<SpaceGrid> {
        SpaceGrid::new(&self.geometry.lo, &self.geometry.hi, cells)
    }

    /// Time step for a space grid: the configured `dt` or `cfl · min h`.
    pub fn dt_for(&self, space: &SpaceGrid) -> f64 {
        self.discretization.dt.unwrap_or(self.discretization.cfl * space.min_spacing())
    }

    pub fn grid(&self, t_final: f64) -> Result<Grid> {
        let s = self.space_grid()?;
        let dt = self.dt_for(&s);
        Ok(Grid::new(s, TimeGrid::covering(t_final, dt)?))
    }

    pub fn coefficients(&self) -> Result<CoefficientSet> {
        let c = &self.coefficients;
        Ok(CoefficientSet { a1: c.a1.parse()?, a2: c.a2.parse()?, a3: c.a3.parse()?, a4: c.a4.parse()?, a5: c.a5.parse()? })
    }

    /// The configured `r2`, or the size of the coefficients on the main grid.
    pub fn r2(&self) -> Result<f64> {
        if let Some(r) = self.carleman.r2 {
            return Ok(r);
        }
        let grid = self.grid(self.geometry.t_final)?;
        self.coefficients()?.r2(&grid.space, &grid.time, &[])
    }

    pub fn beta_search(&self, dim: usize) -> BetaSearch {
        let mut s = BetaSearch::for_dim(dim);
        s.beta_cap = self.carleman.beta_cap;
        s
    }

    /// `β` searched for (or forced), with the configured `λ`, `μ` and cut-off width.
    pub fn carleman_params(&self, geom: &GeometrySpec) -> Result<CarlemanParams> {
        let r2 = self.r2()?;
        let search = self.beta_search(geom.dim());
        let mut p = match self.carleman.beta {
            Some(b) => params_with_beta(geom, r2, b, &search)?,
            None => choose_beta_with(geom, r2, &search)?,
        };
        p.lambda = self.carleman.identity_lambda;
        p.mu = self.carleman.identity_mu;
        if let Some(d) = self.carleman.delta {
            p.delta = d;
        }
        Ok(p)
    }

    pub fn hum_options(&self) -> HumOptions {
        let c = &self.control;
        HumOptions {
            tol: c.tol,
            max_iter: c.max_iter,
            filter: (c.filter > 0.0).then_some(c.filter),
            taper: if c.taper > 0.0 { Taper::new(c.taper) } else { Taper::none() },
        }
    }

    pub fn family(&self) -> Vec<DataPreset> {
        self.control.family.clone().unwrap_or_else(|| default_family(self.geometry.lo.len()))
    }

    /// Runs every check the given use depends on.
    pub fn validate_for(&self, purpose: Purpose) -> Result<()> {
        let geom = self.geometry()?;
        let dim = geom.dim();
        let d = &self.discretization;
        if d.nx.len() != dim {
            return Err(cfg_err(format!("discretization.nx has {} entries for a {dim}-dimensional box", d.nx.len())));
        }
        if d.scheme != Scheme::Midpoint {
            return Err(cfg_err("only scheme = \"midpoint\" is implemented"));
        }
        if !(d.cfl > 0.0) || d.dt.is_some_and(|v| !(v > 0.0)) {
            return Err(cfg_err("cfl and dt must be positive"));
        }
        if d.levels < 2 {
            return Err(cfg_err("discretization.levels must be at least 2"));
        }
        let grid = self.grid(geom.t_final)?;
        let coeffs = self.coefficients()?;
        coeffs.validate(&grid.space, &grid.time)?;
        if self.mc.paths < 2 {
            return Err(cfg_err("mc.paths must be at least 2"));
        }
        if self.output.snapshot_stride == Some(0) {
            return Err(cfg_err("output.snapshot_stride must be positive"));
        }
        if self.mc.workers == Some(0) {
            return Err(cfg_err("mc.workers must be positive"));
        }
        let report = compute_report(&geom)?;
        match purpose {
            Purpose::Geometry => {}
            Purpose::Carleman => {
                let c = &self.carleman;
                if c.identity_nx.len() != dim || c.identity_nx.contains(&0) {
                    return Err(cfg_err(format!("carleman.identity_nx needs {dim} positive entries")));
                }
                let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|x| *x > 0.0);
                if !positive(&c.lambdas) || !positive(&c.mus) || !(c.identity_lambda > 0.0) || !(c.identity_mu > 0.0) {
                    return Err(cfg_err("carleman λ and μ values must be positive"));
                }
                if c.beta.is_some_and(|b| !(b > 0.0)) || c.delta.is_some_and(|v| !(v > 0.0)) {
                    return Err(cfg_err("carleman.beta and carleman.delta must be positive"));
                }
                if geom.kappa * geom.t_final <= report.tstar {
                    return Err(Error::HorizonTooShort { kappa_t: geom.kappa * geom.t_final, tstar: report.tstar });
                }
                c.terminal.validate(dim)?;
            }
            Purpose::Observability => {
                if self.control.horizons.is_empty() || self.control.horizons.iter().any(|t| !(*t > 0.0)) {
                    return Err(cfg_err("control.horizons must be non-empty and positive"));
                }
                for p in self.family() {
                    p.validate(dim)?;
                }
            }
            Purpose::Control => {
                let c = &self.control;
                for p in [&c.initial, &c.target] {
                    p.validate(dim)?;
                }
                if !(c.tol > 0.0) || c.max_iter == 0 || !(0.0..=1.0).contains(&c.filter) || !(c.taper >= 0.0) {
                    return Err(cfg_err("control needs tol > 0, max_iter > 0, filter in [0, 1] and taper ≥ 0"));
                }
                if 2.0 * c.taper >= geom.t_final {
                    return Err(cfg_err("control.taper must be shorter than half the horizon"));
                }
                if c.strict && geom.t_final <= report.tstar {
                    return Err(cfg_err(format!(
                        "strict mode: T = {} does not exceed T* = {}; set control.strict = false to run anyway",
                        geom.t_final, report.tstar
                    )));
                }
            }
            Purpose::Energy => self.control.terminal.validate(dim)?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_the_default_one_dimensional_setup() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        for p in [Purpose::Geometry, Purpose::Carleman, Purpose::Observability, Purpose::Control, Purpose::Energy] {
            c.validate_for(p).unwrap();
        }
        let g = c.grid(2.5).unwrap();
        assert_eq!((g.space.cells(0), g.time.steps), (100, 500));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("[geometry]\nkapa = 0.9").is_err());
        assert!(ExperimentConfig::from_toml_str("[plots]\nx = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[control]\ninitial = { kind = \"sine\", mode = [1] }").is_err());
    }

    #[test]
    fn coefficients_accept_numbers_and_expressions() {
        let c = ExperimentConfig::from_toml_str("[coefficients]\na1 = 5\na4 = \"x*(1-x)\"").unwrap();
        let set = c.coefficients().unwrap();
        assert_eq!(set.a1.eval(0.0, &[0.3], 0.0).unwrap(), 5.0);
        assert!((set.a4.eval(0.0, &[0.5], 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!(c.r2().unwrap() > 25.0);
    }

    #[test]
    fn cross_section_checks_run_before_solves() {
        let bad_dim = ExperimentConfig::from_toml_str("[discretization]\nnx = [10, 10]").unwrap();
        assert!(bad_dim.validate_for(Purpose::Geometry).is_err());
        let inside = ExperimentConfig::from_toml_str("[geometry]\nx0 = [0.5]").unwrap();
        assert!(matches!(inside.validate_for(Purpose::Geometry), Err(Error::InvalidGeometry(_))));
        let short = ExperimentConfig::from_toml_str("[geometry]\nt_final = 2.0").unwrap();
        assert!(short.validate_for(Purpose::Control).is_err());
        assert!(matches!(short.validate_for(Purpose::Carleman), Err(Error::HorizonTooShort { .. })));
        let relaxed = ExperimentConfig::from_toml_str("[geometry]\nt_final = 2.0\n[control]\nstrict = false").unwrap();
        relaxed.validate_for(Purpose::Control).unwrap();
        let leap = ExperimentConfig::from_toml_str("[discretization]\nscheme = \"leapfrog\"").unwrap();
        assert!(leap.validate_for(Purpose::Geometry).is_err());
        let a4 = ExperimentConfig::from_toml_str("[coefficients]\na4 = 1").unwrap();
        assert!(a4.validate_for(Purpose::Geometry).is_err());
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = ExperimentConfig::from_toml_str("[mc]\nseed = 7\n[control]\nfamily = [{ kind = \"bump\", center = [0.3], radius = 0.1 }]").unwrap();
        let again = ExperimentConfig::from_toml_str(&c.canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.canonical(), again.canonical());
    }

    #[test]
    fn forced_beta_and_delta_override() {
        let c = ExperimentConfig::from_toml_str("[carleman]\nbeta = 0.1\ndelta = 0.5\nr2 = 1.0").unwrap();
        let p = c.carleman_params(&c.geometry().unwrap()).unwrap();
        assert_eq!((p.beta, p.delta, p.r2), (0.1, 0.5, 1.0));
        assert_eq!((p.lambda, p.mu), (0.5, 0.1));
        let c = ExperimentConfig::from_toml_str("[carleman]\nbeta = 0.1\nr2 = 1.0").unwrap();
        let geom = c.geometry().unwrap();
        let p = c.carleman_params(&geom).unwrap();
        assert_eq!(p.delta, 0.0);
        assert!(!crate::geometry::verify_conditions(&p, &geom).cond3);
    }
}
