//! Coefficient fields `a1..a5`, given as constants or expressions in `t`, `x`,
//! `y` and `w` (the current Brownian value `W(t)`), and the size `r2`.

use crate::discretization::{SpaceGrid, TimeGrid};
use crate::error::{Error, Result};
use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, EvalexprError,
    Function, HashMapContext, Node, Value,
};
use std::f64::consts::PI;

type Ctx = HashMapContext<DefaultNumericTypes>;

const FUNCTIONS: [(&str, fn(f64) -> f64); 11] = [
    ("sin", f64::sin),
    ("cos", f64::cos),
    ("tan", f64::tan),
    ("exp", f64::exp),
    ("ln", f64::ln),
    ("sqrt", f64::sqrt),
    ("abs", f64::abs),
    ("tanh", f64::tanh),
    ("sinh", f64::sinh),
    ("cosh", f64::cosh),
    ("atan", f64::atan),
];

fn base_context() -> Ctx {
    let mut ctx = Ctx::new();
    for (name, f) in FUNCTIONS {
        ctx.set_function(
            name.to_string(),
            Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?)))),
        )
        .expect("hash map context accepts functions");
    }
    ctx.set_value("pi".into(), Value::Float(PI)).expect("hash map context accepts values");
    ctx
}

/// A scalar field in `(t, x, y, w)`.
#[derive(Debug, Clone)]
pub struct Coefficient {
    source: String,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Const(f64),
    Expr { node: Node<DefaultNumericTypes>, uses_t: bool, uses_w: bool },
}

impl PartialEq for Coefficient {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Coefficient {
    pub fn constant(v: f64) -> Self {
        Self { source: format!("{v:?}"), kind: Kind::Const(v) }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn parse(expr: &str) -> Result<Self> {
        if let Ok(v) = expr.trim().parse::<f64>() {
            return Ok(Self { source: expr.trim().to_string(), kind: Kind::Const(v) });
        }
        let err = |e: EvalexprError<DefaultNumericTypes>| Error::Expression { expr: expr.to_string(), message: e.to_string() };
        let node = build_operator_tree::<DefaultNumericTypes>(expr).map_err(err)?;
        let mut uses_t = false;
        let mut uses_w = false;
        for id in node.iter_variable_identifiers() {
            match id {
                "t" => uses_t = true,
                "w" => uses_w = true,
                "x" | "y" | "pi" => {}
                other => {
                    return Err(Error::Expression {
                        expr: expr.to_string(),
                        message: format!("unknown variable `{other}` (allowed: t, x, y, w, pi)"),
                    })
                }
            }
        }
        let c = Self { source: expr.to_string(), kind: Kind::Expr { node, uses_t, uses_w } };
        // surface unknown functions and type errors at parse time
        c.eval(0.0, &[0.0, 0.0], 0.0)?;
        Ok(c)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, Kind::Const(v) if v == 0.0)
    }

    pub fn depends_on_time(&self) -> bool {
        matches!(self.kind, Kind::Expr { uses_t: true, .. })
    }

    /// True when the field depends on the Brownian path, i.e. is random.
    pub fn depends_on_noise(&self) -> bool {
        matches!(self.kind, Kind::Expr { uses_w: true, .. })
    }

    pub fn eval(&self, t: f64, x: &[f64], w: f64) -> Result<f64> {
        let mut ctx = base_context();
        self.eval_in(&mut ctx, t, x, w)
    }

    fn eval_in(&self, ctx: &mut Ctx, t: f64, x: &[f64], w: f64) -> Result<f64> {
        match &self.kind {
            Kind::Const(v) => Ok(*v),
            Kind::Expr { node, .. } => {
                let err = |e: EvalexprError<DefaultNumericTypes>| Error::Expression { expr: self.source.clone(), message: e.to_string() };
                ctx.set_value("t".into(), Value::Float(t)).map_err(err)?;
                ctx.set_value("x".into(), Value::Float(x[0])).map_err(err)?;
                ctx.set_value("y".into(), Value::Float(x.get(1).copied().unwrap_or(0.0))).map_err(err)?;
                ctx.set_value("w".into(), Value::Float(w)).map_err(err)?;
                let v = node.eval_number_with_context(ctx).map_err(err)?;
                if !v.is_finite() {
                    return Err(Error::Expression { expr: self.source.clone(), message: format!("non-finite value {v} at t={t}, x={x:?}") });
                }
                Ok(v)
            }
        }
    }

    /// Values at every node of `grid`.
    pub fn sample(&self, grid: &SpaceGrid, t: f64, w: f64) -> Result<Vec<f64>> {
        match &self.kind {
            Kind::Const(v) => Ok(vec![*v; grid.node_count()]),
            Kind::Expr { .. } => {
                let mut ctx = base_context();
                (0..grid.node_count())
                    .map(|i| {
                        let x = grid.coord(i);
                        self.eval_in(&mut ctx, t, &x[..grid.dim()], w)
                    })
                    .collect()
            }
        }
    }
}

/// Which backward solves are available for a coefficient set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientMode {
    /// all coefficients are deterministic functions of `(t, x)`
    Deterministic,
    /// some coefficient depends on the Brownian path
    Stochastic,
}

/// The five coefficient fields of the controlled system.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub a1: Coefficient,
    pub a2: Coefficient,
    pub a3: Coefficient,
    pub a4: Coefficient,
    pub a5: Coefficient,
}

impl Default for CoefficientSet {
    fn default() -> Self {
        Self::zero()
    }
}

impl CoefficientSet {
    pub fn zero() -> Self {
        Self {
            a1: Coefficient::zero(),
            a2: Coefficient::zero(),
            a3: Coefficient::zero(),
            a4: Coefficient::zero(),
            a5: Coefficient::zero(),
        }
    }

    pub fn all(&self) -> [&Coefficient; 5] {
        [&self.a1, &self.a2, &self.a3, &self.a4, &self.a5]
    }

    pub fn mode(&self) -> CoefficientMode {
        if self.all().iter().any(|c| c.depends_on_noise()) {
            CoefficientMode::Stochastic
        } else {
            CoefficientMode::Deterministic
        }
    }

    /// True when the noise terms `(a3 y + f) dW`, `(a2 y + g) dW` can be active.
    pub fn noise_coupled(&self) -> bool {
        !self.a2.is_zero() || !self.a3.is_zero()
    }

    /// Checks `a4 = 0` on the boundary at every time level, for `w = 0` and `w = ±1`.
    pub fn validate(&self, grid: &SpaceGrid, time: &TimeGrid) -> Result<()> {
        let boundary: Vec<usize> = (0..grid.node_count()).filter(|&i| grid.is_boundary(i)).collect();
        let levels: Vec<usize> = if self.a4.depends_on_time() { (0..time.levels()).collect() } else { vec![0] };
        let ws: &[f64] = if self.a4.depends_on_noise() { &[0.0, 1.0, -1.0] } else { &[0.0] };
        for &k in &levels {
            for &w in ws {
                let a4 = self.a4.sample(grid, time.t(k), w)?;
                let scale = a4.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                if let Some(&i) = boundary.iter().find(|&&i| a4[i].abs() > 1e-12 * scale) {
                    return Err(Error::InvalidInput(format!(
                        "a4 = `{}` must vanish on the boundary but equals {} at x = {:?}, t = {}",
                        self.a4.source(),
                        a4[i],
                        &grid.coord(i)[..grid.dim()],
                        time.t(k)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Grid sup-norm size `Σ_{k=1..3} |a_k|^2 + |a5|^2 + (|a4| + |∇a4|)^2` along the
    /// Brownian values `w[k]` (all zero for deterministic sets).
    pub fn r2(&self, grid: &SpaceGrid, time: &TimeGrid, w: &[f64]) -> Result<f64> {
        let mut sup = [0.0f64; 5];
        let mut grad_sup = 0.0f64;
        for k in 0..time.levels() {
            let t = time.t(k);
            let wk = w.get(k).copied().unwrap_or(0.0);
            for (j, c) in self.all().iter().enumerate() {
                if k > 0 && !c.depends_on_time() && !c.depends_on_noise() {
                    continue;
                }
                let s = c.sample(grid, t, wk)?;
                sup[j] = s.iter().fold(sup[j], |m, v| m.max(v.abs()));
                if j == 3 {
                    grad_sup = grad_sup.max(edge_gradient_sup(grid, &s));
                }
            }
        }
        let a4 = sup[3] + grad_sup;
        Ok(sup[0].powi(2) + sup[1].powi(2) + sup[2].powi(2) + sup[4].powi(2) + a4 * a4)
    }

    pub fn sampler<'a>(&'a self, grid: &'a SpaceGrid) -> Result<CoefficientSampler<'a>> {
        let cached = self
            .all()
            .iter()
            .map(|c| {
                if c.depends_on_time() || c.depends_on_noise() {
                    Ok(None)
                } else {
                    c.sample(grid, 0.0, 0.0).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CoefficientSampler { set: self, grid, cached })
    }
}

// largest one-sided difference quotient over grid edges
fn edge_gradient_sup(grid: &SpaceGrid, u: &[f64]) -> f64 {
    let mut m = 0.0f64;
    for i in 0..grid.node_count() {
        let mi = grid.multi_index(i);
        for a in 0..grid.dim() {
            if mi[a] < grid.cells(a) {
                let j = i + grid.stride(a);
                m = m.max((u[j] - u[i]).abs() / grid.spacing(a));
            }
        }
    }
    m
}

/// Samples coefficients on a fixed grid, evaluating static fields once.
#[derive(Debug)]
pub struct CoefficientSampler<'a> {
    set: &'a CoefficientSet,
    grid: &'a SpaceGrid,
    cached: Vec<Option<Vec<f64>>>,
}

impl CoefficientSampler<'_> {
    /// Field `a_{which}` (1-based) at time `t` and Brownian value `w`.
    pub fn get(&self, which: usize, t: f64, w: f64) -> Result<std::borrow::Cow<'_, [f64]>> {
        assert!((1..=5).contains(&which), "coefficient index {which} out of range");
        match &self.cached[which - 1] {
            Some(v) => Ok(std::borrow::Cow::Borrowed(v.as_slice())),
            None => Ok(std::borrow::Cow::Owned(self.set.all()[which - 1].sample(self.grid, t, w)?)),
        }
    }

    pub fn is_zero(&self, which: usize) -> bool {
        self.set.all()[which - 1].is_zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpaceGrid {
        SpaceGrid::new(&[0.0], &[1.0], &[20]).unwrap()
    }

    #[test]
    fn parses_constants_and_expressions() {
        let c = Coefficient::parse("2.5").unwrap();
        assert_eq!(c.eval(1.0, &[0.3], 0.0).unwrap(), 2.5);
        let e = Coefficient::parse("sin(pi*x) * (1 + t) + 2 * y").unwrap();
        let v = e.eval(0.5, &[0.25, 0.1], 0.0).unwrap();
        assert!((v - ((PI * 0.25).sin() * 1.5 + 0.2)).abs() < 1e-15);
        assert!(e.depends_on_time() && !e.depends_on_noise());
        let w = Coefficient::parse("1 + w^2").unwrap();
        assert!(w.depends_on_noise());
        assert_eq!(w.eval(0.0, &[0.0], 2.0).unwrap(), 5.0);
    }

    #[test]
    fn rejects_bad_expressions() {
        assert!(Coefficient::parse("sin(").is_err());
        assert!(Coefficient::parse("z + 1").is_err());
        assert!(Coefficient::parse("foo(x)").is_err());
        assert!(Coefficient::parse("1 / (x - x)").is_err() || Coefficient::parse("1 / (x - x)").unwrap().eval(0.0, &[0.5], 0.0).is_err());
    }

    #[test]
    fn a4_must_vanish_on_boundary() {
        let g = grid();
        let time = TimeGrid::covering(1.0, 0.1).unwrap();
        let mut set = CoefficientSet::zero();
        set.a4 = Coefficient::parse("x * (1 - x)").unwrap();
        assert!(set.validate(&g, &time).is_ok());
        set.a4 = Coefficient::parse("x").unwrap();
        assert!(set.validate(&g, &time).is_err());
        set.a4 = Coefficient::parse("x * (1 - x) + t * x").unwrap();
        assert!(set.validate(&g, &time).is_err());
    }

    #[test]
    fn r2_by_hand() {
        let g = grid();
        let time = TimeGrid::covering(1.0, 0.1).unwrap();
        let mut set = CoefficientSet::zero();
        set.a1 = Coefficient::constant(5.0);
        assert_eq!(set.r2(&g, &time, &[]).unwrap(), 25.0);
        set.a2 = Coefficient::constant(-1.0);
        set.a3 = Coefficient::parse("2 * t").unwrap();
        set.a5 = Coefficient::constant(0.5);
        set.a4 = Coefficient::parse("x * (1 - x)").unwrap();
        // |a4| = 1/4 at x = 1/2, steepest edge slope (1 - 2h) / 1 with h = 1/20
        let expected = 25.0 + 1.0 + 4.0 + 0.25 + (0.25 + 0.95f64).powi(2);
        assert!((set.r2(&g, &time, &[]).unwrap() - expected).abs() < 1e-12);
        assert_eq!(set.mode(), CoefficientMode::Deterministic);
        set.a2 = Coefficient::parse("w").unwrap();
        assert_eq!(set.mode(), CoefficientMode::Stochastic);
    }

    #[test]
    fn sampler_caches_static_fields() {
        let g = grid();
        let mut set = CoefficientSet::zero();
        set.a1 = Coefficient::parse("x").unwrap();
        set.a5 = Coefficient::parse("t").unwrap();
        let s = set.sampler(&g).unwrap();
        assert!(matches!(s.get(1, 3.0, 0.0).unwrap(), std::borrow::Cow::Borrowed(_)));
        assert_eq!(s.get(5, 3.0, 0.0).unwrap()[4], 3.0);
        assert!(s.is_zero(2));
    }
}
