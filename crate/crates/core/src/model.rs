//! Model coefficients and cost functions.
//!
//! Dependence on the law of the state is channeled through its first two
//! moments `(m1, m2)`. Both sets carry optional declared constants from the
//! growth and Lipschitz conditions, which can be checked on random probes.

use crate::controls::ActionSet;
use crate::error::{Error, Result};
use crate::expr::{signature, Bindings, Expr, Var};
use crate::measure::{w2_distance, EmpiricalMeasure};
use crate::rng::ParticleStream;
use std::fmt;
use std::sync::Arc;

/// Time, particle position and the first two moments of the current law.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub t: f64,
    pub x: f64,
    pub m1: f64,
    pub m2: f64,
}

impl State {
    pub fn new(t: f64, x: f64, m1: f64, m2: f64) -> Self {
        Self { t, x, m1, m2 }
    }

    fn bind(&self, a: f64) -> Bindings {
        Bindings {
            t: self.t,
            x: self.x,
            m1: self.m1,
            m2: self.m2,
            a,
        }
    }
}

pub type ControlledFn = Arc<dyn Fn(&State, f64) -> Result<f64> + Send + Sync>;
pub type StateFn = Arc<dyn Fn(&State) -> Result<f64> + Send + Sync>;
pub type TerminalFn = Arc<dyn Fn(f64, f64, f64) -> Result<f64> + Send + Sync>;

fn controlled_expr(e: Expr) -> ControlledFn {
    Arc::new(move |s: &State, a| e.eval(&s.bind(a)))
}

fn state_expr(e: Expr) -> StateFn {
    Arc::new(move |s: &State| e.eval(&s.bind(0.0)))
}

fn require_control_free(e: &Expr, slot: &str) -> Result<()> {
    if e.uses(Var::A) {
        return Err(Error::UnknownVariable {
            name: format!("a (not allowed in {slot})"),
            line: 1,
            column: 1,
        });
    }
    Ok(())
}

/// Drift `b(t, x, μ, a)` and diffusion `σ(t, x, μ)`.
#[derive(Clone)]
pub struct CoefficientSet {
    drift: ControlledFn,
    diffusion: StateFn,
    pub growth_c1: Option<f64>,
    pub lipschitz_c2: Option<f64>,
}

impl CoefficientSet {
    pub fn new(drift: ControlledFn, diffusion: StateFn) -> Self {
        Self {
            drift,
            diffusion,
            growth_c1: None,
            lipschitz_c2: None,
        }
    }

    pub fn from_fns<B, S>(drift: B, diffusion: S) -> Self
    where
        B: Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            Arc::new(move |s: &State, a| Ok(drift(s.t, s.x, s.m1, s.m2, a))),
            Arc::new(move |s: &State| Ok(diffusion(s.t, s.x, s.m1, s.m2))),
        )
    }

    pub fn from_exprs(drift: Expr, diffusion: Expr) -> Result<Self> {
        require_control_free(&diffusion, "diffusion")?;
        Ok(Self::new(controlled_expr(drift), state_expr(diffusion)))
    }

    pub fn parse(drift: &str, diffusion: &str) -> Result<Self> {
        Self::from_exprs(
            Expr::parse(drift, signature::DRIFT)?,
            Expr::parse(diffusion, signature::DIFFUSION)?,
        )
    }

    pub fn with_constants(mut self, c1: Option<f64>, c2: Option<f64>) -> Self {
        self.growth_c1 = c1;
        self.lipschitz_c2 = c2;
        self
    }

    pub fn drift(&self, s: &State, a: f64) -> Result<f64> {
        (self.drift)(s, a)
    }

    pub fn diffusion(&self, s: &State) -> Result<f64> {
        (self.diffusion)(s)
    }

    /// Sample the growth bound `|b|² + σ² <= C1 (1 + x² + m2)` and the joint
    /// Lipschitz bound in `(x, W2)` for whichever constants are declared.
    pub fn check_assumptions(&self, domain: &ProbeDomain) -> Result<()> {
        let mut probes = domain.sampler();
        for _ in 0..domain.count {
            let (s, mu, a) = probes.draw();
            let b = self.drift(&s, a)?;
            let sig = self.diffusion(&s)?;
            if let Some(c1) = self.growth_c1 {
                let lhs = b * b + sig * sig;
                let rhs = c1 * (1.0 + s.x * s.x + s.m2);
                if !(lhs <= rhs) {
                    return Err(violation("drift growth", &s, a, lhs, rhs));
                }
            }
            if let Some(c2) = self.lipschitz_c2 {
                let (s2, mu2, _) = probes.draw();
                let s2 = State { t: s.t, ..s2 };
                let lhs = (b - self.drift(&s2, a)?).abs() + (sig - self.diffusion(&s2)?).abs();
                let rhs = c2 * ((s.x - s2.x).abs() + w2_distance(&mu, &mu2));
                if !(lhs <= rhs * (1.0 + 1e-12) + 1e-12) {
                    return Err(violation("drift Lipschitz", &s, a, lhs, rhs));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("growth_c1", &self.growth_c1)
            .field("lipschitz_c2", &self.lipschitz_c2)
            .finish_non_exhaustive()
    }
}

/// Running cost `f(t, x, μ, a)`, reflection cost `c(t, x, μ)` paid against
/// `dK`, and terminal cost `g(x, μ)`.
#[derive(Clone)]
pub struct CostSet {
    running: ControlledFn,
    reflection: StateFn,
    terminal: TerminalFn,
    pub growth_c3: Option<f64>,
}

impl CostSet {
    pub fn new(running: ControlledFn, reflection: StateFn, terminal: TerminalFn) -> Self {
        Self {
            running,
            reflection,
            terminal,
            growth_c3: None,
        }
    }

    pub fn from_fns<F, C, G>(running: F, reflection: C, terminal: G) -> Self
    where
        F: Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            Arc::new(move |s: &State, a| Ok(running(s.t, s.x, s.m1, s.m2, a))),
            Arc::new(move |s: &State| Ok(reflection(s.t, s.x, s.m1, s.m2))),
            Arc::new(move |x, m1, m2| Ok(terminal(x, m1, m2))),
        )
    }

    pub fn from_exprs(running: Expr, reflection: Expr, terminal: Expr) -> Result<Self> {
        require_control_free(&reflection, "reflection cost")?;
        require_control_free(&terminal, "terminal cost")?;
        if terminal.uses(Var::T) {
            return Err(Error::UnknownVariable {
                name: "t (not allowed in terminal cost)".into(),
                line: 1,
                column: 1,
            });
        }
        let terminal: TerminalFn = Arc::new(move |x, m1, m2| {
            terminal.eval(&Bindings {
                x,
                m1,
                m2,
                ..Default::default()
            })
        });
        Ok(Self::new(
            controlled_expr(running),
            state_expr(reflection),
            terminal,
        ))
    }

    pub fn parse(running: &str, reflection: &str, terminal: &str) -> Result<Self> {
        Self::from_exprs(
            Expr::parse(running, signature::RUNNING)?,
            Expr::parse(reflection, signature::REFLECTION)?,
            Expr::parse(terminal, signature::TERMINAL)?,
        )
    }

    pub fn with_constant(mut self, c3: Option<f64>) -> Self {
        self.growth_c3 = c3;
        self
    }

    pub fn running(&self, s: &State, a: f64) -> Result<f64> {
        (self.running)(s, a)
    }

    pub fn reflection(&self, s: &State) -> Result<f64> {
        (self.reflection)(s)
    }

    pub fn terminal(&self, x: f64, m1: f64, m2: f64) -> Result<f64> {
        (self.terminal)(x, m1, m2)
    }

    /// Sample the quadratic growth of `f + c + g` and the Lipschitz bound
    /// of `f` when `C3` is declared.
    pub fn check_assumptions(&self, domain: &ProbeDomain) -> Result<()> {
        let Some(c3) = self.growth_c3 else {
            return Ok(());
        };
        let mut probes = domain.sampler();
        for _ in 0..domain.count {
            let (s, mu, a) = probes.draw();
            let f = self.running(&s, a)?;
            let lhs = f.abs() + self.reflection(&s)?.abs() + self.terminal(s.x, s.m1, s.m2)?.abs();
            let rhs = c3 * (1.0 + s.x * s.x + s.m2);
            if !(lhs <= rhs) {
                return Err(violation("cost growth", &s, a, lhs, rhs));
            }
            let (s2, mu2, _) = probes.draw();
            let s2 = State { t: s.t, ..s2 };
            let lhs = (f - self.running(&s2, a)?).abs();
            let rhs = c3 * ((s.x - s2.x).abs() + w2_distance(&mu, &mu2));
            if !(lhs <= rhs * (1.0 + 1e-12) + 1e-12) {
                return Err(violation("cost Lipschitz", &s, a, lhs, rhs));
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CostSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CostSet")
            .field("growth_c3", &self.growth_c3)
            .finish_non_exhaustive()
    }
}

fn violation(assumption: &'static str, s: &State, a: f64, lhs: f64, rhs: f64) -> Error {
    Error::AssumptionViolation {
        assumption,
        detail: format!(
            "at t={}, x={}, m1={}, m2={}, a={}: {lhs} > {rhs}",
            s.t, s.x, s.m1, s.m2, a
        ),
    }
}

/// Where assumption probes are drawn: `t` uniform on `[0, horizon]`, `x`
/// uniform on `[0, x_max]`, the law an empirical measure of 1 to 8 atoms
/// uniform on `[0, x_max]`, and `a` uniform over the action points.
#[derive(Debug, Clone)]
pub struct ProbeDomain {
    pub horizon: f64,
    pub x_max: f64,
    pub actions: ActionSet,
    pub count: usize,
    pub seed: u64,
}

impl ProbeDomain {
    pub fn new(horizon: f64, actions: ActionSet) -> Self {
        Self {
            horizon,
            x_max: 10.0,
            actions,
            count: 1000,
            seed: 0x5eed,
        }
    }

    fn sampler(&self) -> ProbeSampler<'_> {
        ProbeSampler {
            domain: self,
            rng: ParticleStream::new(self.seed, u64::MAX),
        }
    }
}

struct ProbeSampler<'a> {
    domain: &'a ProbeDomain,
    rng: ParticleStream,
}

impl ProbeSampler<'_> {
    fn draw(&mut self) -> (State, EmpiricalMeasure, f64) {
        let d = self.domain;
        let t = self.rng.uniform() * d.horizon;
        let x = self.rng.uniform() * d.x_max;
        let atoms = 1 + (self.rng.uniform() * 8.0) as usize;
        let samples: Vec<f64> = (0..atoms).map(|_| self.rng.uniform() * d.x_max).collect();
        let mu = EmpiricalMeasure::from_samples(&samples).expect("nonempty nonnegative samples");
        let pts = d.actions.points();
        let a = pts[((self.rng.uniform() * pts.len() as f64) as usize).min(pts.len() - 1)];
        (State::new(t, x, mu.mean(), mu.second_moment()), mu, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain() -> ProbeDomain {
        ProbeDomain::new(1.0, ActionSet::grid(-1.0, 1.0, 5).unwrap())
    }

    #[test]
    fn parsed_coefficients_evaluate() {
        let c = CoefficientSet::parse("a - x + 0.5*m1", "0.1").unwrap();
        let s = State::new(0.0, 2.0, 4.0, 16.0);
        assert_eq!(c.drift(&s, 1.0).unwrap(), 1.0);
        assert_eq!(c.diffusion(&s).unwrap(), 0.1);
    }

    #[test]
    fn control_free_slots() {
        assert!(matches!(
            CoefficientSet::parse("a", "a"),
            Err(Error::UnknownVariable { .. })
        ));
        let e = |s| Expr::parse(s, signature::DRIFT).unwrap();
        assert!(CoefficientSet::from_exprs(e("a"), e("x * a")).is_err());
        assert!(CostSet::from_exprs(e("a"), e("a"), e("0")).is_err());
        assert!(CostSet::from_exprs(e("a"), e("0"), e("t")).is_err());
        assert!(CostSet::parse("x^2 + (a^2 - 1)^2", "1", "x").is_ok());
    }

    #[test]
    fn lipschitz_model_passes_probes() {
        // |b|² + σ² <= 2(1 + x)² + ... ≤ C1 (1 + x² + m2) for C1 = 8
        let c = CoefficientSet::parse("a - x + 0.5*m1", "0.5 + 0.1*x")
            .unwrap()
            .with_constants(Some(8.0), Some(2.0));
        c.check_assumptions(&domain()).unwrap();
    }

    #[test]
    fn superlinear_drift_fails_growth() {
        let c = CoefficientSet::parse("x^2", "0").unwrap().with_constants(Some(10.0), None);
        assert!(matches!(
            c.check_assumptions(&domain()),
            Err(Error::AssumptionViolation { assumption: "drift growth", .. })
        ));
    }

    #[test]
    fn non_lipschitz_diffusion_fails() {
        let c = CoefficientSet::parse("0", "sqrt(x)").unwrap().with_constants(None, Some(0.1));
        assert!(matches!(
            c.check_assumptions(&domain()),
            Err(Error::AssumptionViolation { assumption: "drift Lipschitz", .. })
        ));
    }

    #[test]
    fn cost_growth_probe() {
        let ok = CostSet::parse("x^2 + (a^2 - 1)^2", "1", "x").unwrap().with_constant(Some(4.0));
        // f is only locally Lipschitz in x, so restrict the probes.
        let mut d = domain();
        d.x_max = 1.0;
        ok.check_assumptions(&d).unwrap();
        let bad = CostSet::parse("x^3", "0", "0").unwrap().with_constant(Some(4.0));
        assert!(bad.check_assumptions(&domain()).is_err());
    }
}
