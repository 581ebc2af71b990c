//! Strict and relaxed controls over a finite action set, and the chattering
//! construction that turns a relaxed control into a fast-switching strict one.

use crate::error::{Error, Result};
use crate::expr::{Bindings, Expr};
use crate::skorokhod::validate_times;
use std::fmt;
use std::sync::Arc;

/// Tolerance on the total mass of a relaxed weight vector.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Midpoint subcells per merged piece when a test function has no closed form.
pub const QUADRATURE_SUBCELLS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    points: Vec<f64>,
    interval: Option<(f64, f64)>,
}

impl ActionSet {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("action set is empty"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("action values must be finite"));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("action values must be sorted and distinct"));
        }
        Ok(Self {
            points,
            interval: None,
        })
    }

    /// `count` evenly spaced actions covering `[lo, hi]`, endpoints included.
    pub fn grid(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 || !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::domain("grid needs count >= 1 and finite bounds"));
        }
        if count == 1 {
            return Self::new(vec![lo])?.with_interval(lo, hi);
        }
        if !(hi > lo) {
            return Err(Error::domain("grid interval must have hi > lo"));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
        points[count - 1] = hi;
        Self::new(points)?.with_interval(lo, hi)
    }

    pub fn with_interval(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || self.points.iter().any(|p| *p < lo || *p > hi) {
            return Err(Error::domain(format!("action points fall outside [{lo}, {hi}]")));
        }
        self.interval = Some((lo, hi));
        Ok(self)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn interval(&self) -> Option<(f64, f64)> {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, a: f64) -> Option<usize> {
        self.points.iter().position(|p| *p == a)
    }

    /// Nearest action point; ties go to the smaller action.
    pub fn snap(&self, a: f64) -> f64 {
        let mut best = self.points[0];
        for &p in &self.points[1..] {
            if (p - a).abs() < (best - a).abs() {
                best = p;
            }
        }
        best
    }
}

/// Uniform partition of `[0, horizon]` into `cells` cells, last node exactly
/// `horizon`.
pub fn uniform_grid(horizon: f64, cells: usize) -> Vec<f64> {
    let mut g: Vec<f64> = (0..=cells)
        .map(|k| k as f64 * horizon / cells as f64)
        .collect();
    g[cells] = horizon;
    g
}

fn cell_index(boundaries: &[f64], t: f64) -> usize {
    let cells = boundaries.len() - 1;
    boundaries
        .partition_point(|b| *b <= t)
        .saturating_sub(1)
        .min(cells - 1)
}

fn check_grid(boundaries: &[f64], cells: usize) -> Result<()> {
    validate_times(boundaries)?;
    if boundaries.len() != cells + 1 || cells == 0 {
        return Err(Error::shape(format!(
            "{} boundaries for {cells} cells",
            boundaries.len()
        )));
    }
    Ok(())
}

/// Piecewise-constant strict control on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenLoopControl {
    actions: ActionSet,
    boundaries: Vec<f64>,
    values: Vec<f64>,
}

impl OpenLoopControl {
    pub fn new(actions: ActionSet, boundaries: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&boundaries, values.len())?;
        if let Some(v) = values.iter().find(|v| actions.index_of(**v).is_none()) {
            return Err(Error::UnsupportedPolicyForm(format!(
                "action {v} is not a member of the action set"
            )));
        }
        Ok(Self {
            actions,
            boundaries,
            values,
        })
    }

    pub fn constant(actions: ActionSet, a: f64, horizon: f64) -> Result<Self> {
        Self::new(actions, vec![0.0, horizon], vec![a])
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }

    /// Action on the cell containing `t` (cells are closed on the left).
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[cell_index(&self.boundaries, t)]
    }

    /// Total time spent at `a` inside `[s, e]`.
    pub fn occupation(&self, a: f64, s: f64, e: f64) -> f64 {
        self.boundaries
            .windows(2)
            .zip(&self.values)
            .filter(|(_, v)| **v == a)
            .map(|(w, _)| (w[1].min(e) - w[0].max(s)).max(0.0))
            .sum()
    }
}

pub type FeedbackRule = Arc<dyn Fn(f64, f64, f64, f64) -> Result<f64> + Send + Sync>;

/// State-feedback strict control `(t, x, m1, m2) -> a`, snapped to the
/// nearest point of the action set.
#[derive(Clone)]
pub struct FeedbackControl {
    actions: ActionSet,
    rule: FeedbackRule,
    label: String,
}

impl FeedbackControl {
    pub fn new(actions: ActionSet, label: impl Into<String>, rule: FeedbackRule) -> Self {
        Self {
            actions,
            rule,
            label: label.into(),
        }
    }

    pub fn from_expr(actions: ActionSet, expr: Expr) -> Self {
        let label = expr.to_string();
        let rule: FeedbackRule = Arc::new(move |t, x, m1, m2| {
            expr.eval(&Bindings {
                t,
                x,
                m1,
                m2,
                a: 0.0,
            })
        });
        Self::new(actions, label, rule)
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn action(&self, t: f64, x: f64, m1: f64, m2: f64) -> Result<f64> {
        let raw = (self.rule)(t, x, m1, m2)?;
        if !raw.is_finite() {
            return Err(Error::NumericalBlowup {
                step: 0,
                detail: format!("feedback rule `{}` returned {raw}", self.label),
            });
        }
        Ok(self.actions.snap(raw))
    }
}

impl fmt::Debug for FeedbackControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeedbackControl")
            .field("actions", &self.actions)
            .field("label", &self.label)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum StrictControlPolicy {
    OpenLoop(OpenLoopControl),
    Feedback(FeedbackControl),
}

impl StrictControlPolicy {
    pub fn actions(&self) -> &ActionSet {
        match self {
            StrictControlPolicy::OpenLoop(u) => u.actions(),
            StrictControlPolicy::Feedback(u) => u.actions(),
        }
    }

    pub fn as_open_loop(&self) -> Result<&OpenLoopControl> {
        match self {
            StrictControlPolicy::OpenLoop(u) => Ok(u),
            StrictControlPolicy::Feedback(u) => Err(Error::UnsupportedPolicyForm(format!(
                "feedback policy `{}` has no open-loop form",
                u.label()
            ))),
        }
    }
}

impl From<OpenLoopControl> for StrictControlPolicy {
    fn from(u: OpenLoopControl) -> Self {
        StrictControlPolicy::OpenLoop(u)
    }
}

impl From<FeedbackControl> for StrictControlPolicy {
    fn from(u: FeedbackControl) -> Self {
        StrictControlPolicy::Feedback(u)
    }
}

/// Time-dependent probability weights over the action set, constant on the
/// cells of a grid partitioning `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedControlPolicy {
    actions: ActionSet,
    boundaries: Vec<f64>,
    weights: Vec<Vec<f64>>,
}

impl RelaxedControlPolicy {
    pub fn new(actions: ActionSet, boundaries: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self> {
        check_grid(&boundaries, weights.len())?;
        for (c, w) in weights.iter().enumerate() {
            if w.len() != actions.len() {
                return Err(Error::shape(format!(
                    "cell {c}: {} weights for {} actions",
                    w.len(),
                    actions.len()
                )));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::domain(format!("cell {c}: weights must be finite and >= 0")));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                return Err(Error::domain(format!("cell {c}: weights sum to {total}, not 1")));
            }
        }
        Ok(Self {
            actions,
            boundaries,
            weights,
        })
    }

    pub fn on_uniform_cells(actions: ActionSet, horizon: f64, weights: Vec<Vec<f64>>) -> Result<Self> {
        let n = weights.len();
        if n == 0 {
            return Err(Error::shape("relaxed policy needs at least one cell"));
        }
        Self::new(actions, uniform_grid(horizon, n), weights)
    }

    pub fn dirac(actions: ActionSet, a: f64, horizon: f64) -> Result<Self> {
        let j = actions.index_of(a).ok_or_else(|| {
            Error::UnsupportedPolicyForm(format!("action {a} is not a member of the action set"))
        })?;
        let mut w = vec![0.0; actions.len()];
        w[j] = 1.0;
        Self::new(actions, vec![0.0, horizon], vec![w])
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn cells(&self) -> usize {
        self.weights.len()
    }

    pub fn horizon(&self) -> f64 {
        self.boundaries[self.boundaries.len() - 1]
    }

    pub fn weights_at(&self, t: f64) -> &[f64] {
        &self.weights[cell_index(&self.boundaries, t)]
    }

    /// Total mass `q([0, t] × A)`.
    pub fn mass_until(&self, t: f64) -> f64 {
        self.boundaries
            .windows(2)
            .zip(&self.weights)
            .map(|(w, weights)| {
                let overlap = (w[1].min(t) - w[0]).max(0.0);
                overlap * weights.iter().sum::<f64>()
            })
            .sum()
    }

    /// Weight vector averaged over `[s, e]`.
    pub fn time_average(&self, s: f64, e: f64) -> Vec<f64> {
        let len = e - s;
        let mut avg = vec![0.0; self.actions.len()];
        for (w, weights) in self.boundaries.windows(2).zip(&self.weights) {
            let overlap = w[1].min(e) - w[0].max(s);
            if overlap <= 0.0 {
                continue;
            }
            let frac = overlap / len;
            for (acc, v) in avg.iter_mut().zip(weights) {
                *acc += frac * v;
            }
        }
        avg
    }

    pub fn is_dirac_per_cell(&self) -> bool {
        self.weights.iter().all(|w| w.contains(&1.0))
    }
}

/// Embed an open-loop strict control as a relaxed control of Dirac masses.
pub fn as_relaxed(u: &StrictControlPolicy) -> Result<RelaxedControlPolicy> {
    let u = u.as_open_loop()?;
    let weights = u
        .values()
        .iter()
        .map(|v| {
            let mut w = vec![0.0; u.actions().len()];
            w[u.actions().index_of(*v).expect("validated at construction")] = 1.0;
            w
        })
        .collect();
    RelaxedControlPolicy::new(u.actions().clone(), u.boundaries().to_vec(), weights)
}

/// Chattering approximation at level `n`: each of the `n` uniform blocks,
/// further cut at the cell boundaries of `q`, is split into consecutive
/// sub-intervals, one per action in ascending order, whose lengths are
/// proportional to the averaged weights. Adjacent pieces with the same
/// action are merged, so a policy that is Dirac on every cell is returned
/// unchanged.
pub fn chattering_approximation(q: &RelaxedControlPolicy, n: usize) -> Result<StrictControlPolicy> {
    if n == 0 {
        return Err(Error::domain("chattering level n must be >= 1"));
    }
    let horizon = q.horizon();
    let slack = 1e-12 * horizon;
    let mut blocks: Vec<f64> = q.boundaries().to_vec();
    for t in uniform_grid(horizon, n) {
        if blocks.iter().all(|b| (b - t).abs() > slack) {
            blocks.push(t);
        }
    }
    blocks.sort_by(f64::total_cmp);

    let points = q.actions().points();
    let mut boundaries = vec![0.0];
    let mut values: Vec<f64> = Vec::new();
    for b in blocks.windows(2) {
        let (start, end) = (b[0], b[1]);
        let avg = q.time_average(start, end);
        let last = avg.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        let mut cursor = start;
        for (j, w) in avg.iter().enumerate() {
            if *w <= 0.0 {
                continue;
            }
            let stop = if j == last {
                end
            } else {
                cursor + (end - start) * w
            };
            if stop > cursor {
                if values.last() == Some(&points[j]) {
                    *boundaries.last_mut().expect("nonempty") = stop;
                } else {
                    boundaries.push(stop);
                    values.push(points[j]);
                }
                cursor = stop;
            }
        }
    }
    let last = boundaries.len() - 1;
    boundaries[last] = horizon;
    Ok(OpenLoopControl::new(q.actions().clone(), boundaries, values)?.into())
}

/// One term `coef · t^t_pow · a^a_pow` of a polynomial test function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub t_pow: u32,
    pub a_pow: u32,
}

#[derive(Clone)]
pub enum TestFunction {
    Polynomial(Vec<Monomial>),
    General(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl TestFunction {
    pub fn monomial(t_pow: u32, a_pow: u32) -> Self {
        TestFunction::Polynomial(vec![Monomial {
            coef: 1.0,
            t_pow,
            a_pow,
        }])
    }

    /// `{1, a, t·a, a², t²·a}`.
    pub fn standard_family() -> Vec<TestFunction> {
        vec![
            Self::monomial(0, 0),
            Self::monomial(0, 1),
            Self::monomial(1, 1),
            Self::monomial(0, 2),
            Self::monomial(2, 1),
        ]
    }

    /// `∫_s^e φ(t, a) dt` for a fixed action.
    fn integrate(&self, s: f64, e: f64, a: f64) -> f64 {
        match self {
            TestFunction::Polynomial(terms) => terms
                .iter()
                .map(|m| {
                    let p = m.t_pow as i32 + 1;
                    m.coef * (e.powi(p) - s.powi(p)) / p as f64 * a.powi(m.a_pow as i32)
                })
                .sum(),
            TestFunction::General(phi) => {
                let h = (e - s) / QUADRATURE_SUBCELLS as f64;
                (0..QUADRATURE_SUBCELLS)
                    .map(|i| phi(s + (i as f64 + 0.5) * h, a))
                    .sum::<f64>()
                    * h
            }
        }
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Polynomial(terms) => f.debug_tuple("Polynomial").field(terms).finish(),
            TestFunction::General(_) => f.write_str("General(..)"),
        }
    }
}

/// Largest discrepancy over `tests` between integrating against the strict
/// control's occupation measure and against the relaxed control.
pub fn weak_gap(
    u: &StrictControlPolicy,
    q: &RelaxedControlPolicy,
    tests: &[TestFunction],
) -> Result<f64> {
    if tests.is_empty() {
        return Err(Error::domain("weak gap needs at least one test function"));
    }
    let u = u.as_open_loop()?;
    if u.horizon() != q.horizon() {
        return Err(Error::shape(format!(
            "horizons differ: strict {} vs relaxed {}",
            u.horizon(),
            q.horizon()
        )));
    }
    let mut nodes: Vec<f64> = u.boundaries().iter().chain(q.boundaries()).copied().collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let points = q.actions().points();

    let mut worst = 0.0f64;
    for phi in tests {
        let mut gap = 0.0;
        for piece in nodes.windows(2) {
            let (s, e) = (piece[0], piece[1]);
            let mid = 0.5 * (s + e);
            let strict = phi.integrate(s, e, u.value_at(mid));
            let relaxed: f64 = q
                .weights_at(mid)
                .iter()
                .zip(points)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, a)| w * phi.integrate(s, e, *a))
                .sum();
            gap += strict - relaxed;
        }
        worst = worst.max(gap.abs());
    }
    Ok(worst)
}
