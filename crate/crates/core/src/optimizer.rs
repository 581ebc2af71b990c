//! Derivative-free search over piecewise-constant relaxed controls.
//!
//! A candidate is one probability vector over the action set per control
//! cell. Search strategies implement [`SearchMethod`] and are looked up by
//! name in a [`MethodRegistry`]; the built-in ones are `random-search`,
//! `cross-entropy` and `coordinate-descent`.
//!
//! Every candidate is scored with the same simulation seed (common random
//! numbers), and proposals never depend on the budget, so a longer run
//! replays the shorter one as a prefix.

use crate::controls::{chattering_approximation, ActionSet, RelaxedControlPolicy, StrictControlPolicy};
use crate::cost::{evaluate_relaxed, evaluate_strict, CostEstimate};
use crate::dynamics::SimulationConfig;
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, CostSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

/// One weight vector per control cell.
pub type Candidate = Vec<Vec<f64>>;

pub type SearchRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpec {
    pub control_cells: usize,
    pub budget: usize,
    pub method: String,
    pub seed: u64,
    pub elite_fraction: f64,
    /// Candidates proposed per iteration by population methods.
    pub batch_size: usize,
}

impl SearchSpec {
    pub fn new(method: &str, control_cells: usize, budget: usize, seed: u64) -> Self {
        Self {
            control_cells,
            budget,
            method: method.to_string(),
            seed,
            elite_fraction: 0.1,
            batch_size: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.control_cells == 0 || self.budget == 0 || self.batch_size == 0 {
            return Err(Error::domain("control_cells, budget and batch_size must be >= 1"));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::domain("elite_fraction must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Shape of the search problem handed to method factories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchContext {
    pub cells: usize,
    pub actions: usize,
    pub batch_size: usize,
    pub elite_fraction: f64,
}

pub trait SearchMethod: Send {
    fn name(&self) -> &str;

    /// Next batch of candidates. Must not be empty.
    fn propose(&mut self, rng: &mut SearchRng) -> Vec<Candidate>;

    /// Scores for the batch last proposed, in proposal order. The final
    /// batch of a run may be truncated to the remaining budget.
    fn observe(&mut self, scored: &[(Candidate, f64)]);
}

pub type MethodFactory = Arc<dyn Fn(&SearchContext) -> Box<dyn SearchMethod> + Send + Sync>;

#[derive(Clone)]
pub struct MethodRegistry {
    factories: BTreeMap<String, MethodFactory>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, factory: MethodFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, name: &str, ctx: &SearchContext) -> Result<Box<dyn SearchMethod>> {
        self.factories
            .get(name)
            .map(|f| f(ctx))
            .ok_or_else(|| Error::UnknownMethod(name.to_string()))
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("random-search", Arc::new(|ctx| Box::new(RandomSearch::new(ctx))));
        r.register("cross-entropy", Arc::new(|ctx| Box::new(CrossEntropy::new(ctx))));
        r.register("coordinate-descent", Arc::new(|ctx| Box::new(CoordinateDescent::new(ctx))));
        r
    }
}

/// Draw from a Dirichlet distribution with concentrations `alpha`. When every
/// gamma variate underflows, the mass goes to the largest concentration.
fn dirichlet(alpha: &[f64], rng: &mut SearchRng) -> Vec<f64> {
    let mut g: Vec<f64> = alpha
        .iter()
        .map(|a| Gamma::new(*a, 1.0).map(|d| d.sample(rng)).unwrap_or(0.0))
        .collect();
    let total: f64 = g.iter().sum();
    if total > 0.0 && total.is_finite() {
        g.iter_mut().for_each(|v| *v /= total);
    } else {
        let argmax = alpha
            .iter()
            .enumerate()
            .fold(0, |best, (j, a)| if *a > alpha[best] { j } else { best });
        g = vec![0.0; alpha.len()];
        g[argmax] = 1.0;
    }
    g
}

/// Independent flat-Dirichlet candidates.
pub struct RandomSearch {
    ctx: SearchContext,
}

impl RandomSearch {
    pub fn new(ctx: &SearchContext) -> Self {
        Self { ctx: *ctx }
    }
}

impl SearchMethod for RandomSearch {
    fn name(&self) -> &str {
        "random-search"
    }

    fn propose(&mut self, rng: &mut SearchRng) -> Vec<Candidate> {
        let flat = vec![1.0; self.ctx.actions];
        (0..self.ctx.batch_size)
            .map(|_| (0..self.ctx.cells).map(|_| dirichlet(&flat, rng)).collect())
            .collect()
    }

    fn observe(&mut self, _scored: &[(Candidate, f64)]) {}
}

/// Cross-entropy method with a Dirichlet proposal per cell. After each batch
/// the concentrations are refit to the elite candidates by moment matching
/// and blended with the previous ones. The initial proposal is the sparse
/// symmetric Dirichlet with total concentration 1.
pub struct CrossEntropy {
    ctx: SearchContext,
    alpha: Vec<Vec<f64>>,
    smoothing: f64,
}

impl CrossEntropy {
    const MIN_ALPHA: f64 = 1e-3;
    const MAX_PRECISION: f64 = 1e6;

    pub fn new(ctx: &SearchContext) -> Self {
        Self {
            ctx: *ctx,
            alpha: vec![vec![1.0 / ctx.actions as f64; ctx.actions]; ctx.cells],
            smoothing: 0.5,
        }
    }

    pub fn concentrations(&self) -> &[Vec<f64>] {
        &self.alpha
    }
}

impl SearchMethod for CrossEntropy {
    fn name(&self) -> &str {
        "cross-entropy"
    }

    fn propose(&mut self, rng: &mut SearchRng) -> Vec<Candidate> {
        (0..self.ctx.batch_size)
            .map(|_| self.alpha.iter().map(|a| dirichlet(a, rng)).collect())
            .collect()
    }

    fn observe(&mut self, scored: &[(Candidate, f64)]) {
        if scored.is_empty() {
            return;
        }
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&i, &j| scored[i].1.total_cmp(&scored[j].1).then(i.cmp(&j)));
        let elite_n = ((self.ctx.elite_fraction * scored.len() as f64).ceil() as usize).clamp(1, scored.len());
        let elite: Vec<&Candidate> = order[..elite_n].iter().map(|&i| &scored[i].0).collect();
        let m = self.ctx.actions;

        for (c, alpha) in self.alpha.iter_mut().enumerate() {
            let mean: Vec<f64> = (0..m)
                .map(|j| elite.iter().map(|cand| cand[c][j]).sum::<f64>() / elite_n as f64)
                .collect();
            let var: Vec<f64> = (0..m)
                .map(|j| {
                    elite.iter().map(|cand| (cand[c][j] - mean[j]).powi(2)).sum::<f64>() / elite_n as f64
                })
                .collect();
            // Dirichlet: var_j = m_j (1 − m_j) / (s + 1), pooled over components
            let spread: f64 = mean.iter().map(|mj| mj * (1.0 - mj)).sum();
            let total_var: f64 = var.iter().sum();
            let precision = if total_var > 0.0 {
                (spread / total_var - 1.0).clamp(1.0, Self::MAX_PRECISION)
            } else {
                Self::MAX_PRECISION
            };
            for (a, mj) in alpha.iter_mut().zip(&mean) {
                let fitted = precision * mj;
                *a = (self.smoothing * fitted + (1.0 - self.smoothing) * *a).max(Self::MIN_ALPHA);
            }
        }
    }
}

/// Deterministic pattern search: for each (cell, action) in turn, try moving
/// a fraction of the cell's mass toward and away from that action's vertex;
/// the step halves after a sweep without improvement.
pub struct CoordinateDescent {
    ctx: SearchContext,
    current: Candidate,
    current_value: Option<f64>,
    step: f64,
    cursor: usize,
    improved_this_sweep: bool,
}

impl CoordinateDescent {
    pub fn new(ctx: &SearchContext) -> Self {
        let uniform = vec![1.0 / ctx.actions as f64; ctx.actions];
        Self {
            ctx: *ctx,
            current: vec![uniform; ctx.cells],
            current_value: None,
            step: 0.5,
            cursor: 0,
            improved_this_sweep: false,
        }
    }

    fn toward(w: &[f64], j: usize, eta: f64) -> Vec<f64> {
        let mut out: Vec<f64> = w.iter().map(|v| (1.0 - eta) * v).collect();
        out[j] += eta;
        normalize(out)
    }

    fn away(w: &[f64], j: usize, eta: f64) -> Vec<f64> {
        let moved = eta * w[j];
        let rest: f64 = w.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, v)| v).sum();
        let others = w.len() - 1;
        let out: Vec<f64> = w
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if i == j {
                    v - moved
                } else if rest > 0.0 {
                    v + moved * v / rest
                } else {
                    v + moved / others as f64
                }
            })
            .collect();
        normalize(out)
    }
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

impl SearchMethod for CoordinateDescent {
    fn name(&self) -> &str {
        "coordinate-descent"
    }

    fn propose(&mut self, _rng: &mut SearchRng) -> Vec<Candidate> {
        if self.current_value.is_none() {
            return vec![self.current.clone()];
        }
        let m = self.ctx.actions;
        let (c, j) = (self.cursor / m, self.cursor % m);
        let w = &self.current[c];
        let mut up = self.current.clone();
        up[c] = Self::toward(w, j, self.step);
        if m == 1 {
            return vec![up];
        }
        let mut down = self.current.clone();
        down[c] = Self::away(w, j, self.step);
        vec![up, down]
    }

    fn observe(&mut self, scored: &[(Candidate, f64)]) {
        let Some(best) = scored.iter().min_by(|a, b| a.1.total_cmp(&b.1)) else {
            return;
        };
        match self.current_value {
            None => {
                self.current_value = Some(best.1);
                return;
            }
            Some(v) if best.1 < v => {
                self.current = best.0.clone();
                self.current_value = Some(best.1);
                self.improved_this_sweep = true;
            }
            _ => {}
        }
        self.cursor += 1;
        if self.cursor == self.ctx.cells * self.ctx.actions {
            self.cursor = 0;
            if !self.improved_this_sweep {
                self.step *= 0.5;
            }
            self.improved_this_sweep = false;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub digest: String,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub method: String,
    pub entries: Vec<TraceEntry>,
    pub best_policy: RelaxedControlPolicy,
    pub best_value: f64,
    pub best_stderr: f64,
}

/// FNV-1a over the bit patterns of every weight.
pub fn candidate_digest(c: &Candidate) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for cell in c {
        for w in cell {
            for byte in w.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    format!("{h:016x}")
}

pub fn minimize_relaxed(
    costs: &CostSet,
    coeffs: &CoefficientSet,
    actions: &ActionSet,
    config: &SimulationConfig,
    spec: &SearchSpec,
) -> Result<SearchTrace> {
    minimize_relaxed_with(&MethodRegistry::default(), costs, coeffs, actions, config, spec)
}

pub fn minimize_relaxed_with(
    registry: &MethodRegistry,
    costs: &CostSet,
    coeffs: &CoefficientSet,
    actions: &ActionSet,
    config: &SimulationConfig,
    spec: &SearchSpec,
) -> Result<SearchTrace> {
    spec.validate()?;
    config.validate()?;
    let ctx = SearchContext {
        cells: spec.control_cells,
        actions: actions.len(),
        batch_size: spec.batch_size,
        elite_fraction: spec.elite_fraction,
    };
    let mut method = registry.create(&spec.method, &ctx)?;
    let mut rng = SearchRng::seed_from_u64(spec.seed);

    let (pool, inner) = match config.thread_hint {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?;
            (Some(pool), SimulationConfig { thread_hint: None, ..config.clone() })
        }
        _ => (None, config.clone()),
    };
    let sequential = config.thread_hint == Some(1);

    let score = |cand: &Candidate| -> Result<CostEstimate> {
        let q = RelaxedControlPolicy::on_uniform_cells(actions.clone(), config.horizon, cand.clone())?;
        evaluate_relaxed(costs, coeffs, &q, &inner).map_err(|e| match e {
            Error::NumericalBlowup { step, detail } => Error::NumericalBlowup {
                step,
                detail: format!("candidate {}: {detail}", candidate_digest(cand)),
            },
            other => other,
        })
    };

    let mut entries = Vec::with_capacity(spec.budget);
    let mut best: Option<(Candidate, f64, f64)> = None;
    let mut iteration = 0;
    while entries.len() < spec.budget {
        let mut batch = method.propose(&mut rng);
        if batch.is_empty() {
            break;
        }
        batch.truncate(spec.budget - entries.len());
        let results: Vec<Result<CostEstimate>> = if sequential {
            batch.iter().map(score).collect()
        } else if let Some(pool) = &pool {
            pool.install(|| batch.par_iter().map(score).collect())
        } else {
            batch.par_iter().map(score).collect()
        };
        let mut scored = Vec::with_capacity(batch.len());
        for (cand, est) in batch.into_iter().zip(results) {
            let est = est?;
            entries.push(TraceEntry {
                iteration,
                digest: candidate_digest(&cand),
                value: est.value,
                stderr: est.stderr,
            });
            if best.as_ref().is_none_or(|(_, v, _)| est.value < *v) {
                best = Some((cand.clone(), est.value, est.stderr));
            }
            scored.push((cand, est.value));
        }
        method.observe(&scored);
        iteration += 1;
    }

    let (cand, best_value, best_stderr) = best.ok_or_else(|| Error::domain("search produced no candidates"))?;
    Ok(SearchTrace {
        method: method.name().to_string(),
        entries,
        best_policy: RelaxedControlPolicy::on_uniform_cells(actions.clone(), config.horizon, cand)?,
        best_value,
        best_stderr,
    })
}

/// Chattering approximation of the best relaxed candidate at level `n`, with
/// its strict cost under the same simulation seed.
pub fn strictify_best(
    trace: &SearchTrace,
    n: usize,
    costs: &CostSet,
    coeffs: &CoefficientSet,
    config: &SimulationConfig,
) -> Result<(StrictControlPolicy, CostEstimate)> {
    let u = chattering_approximation(&trace.best_policy, n)?;
    let est = evaluate_strict(costs, coeffs, &u, config)?;
    Ok((u, est))
}

pub fn write_trace_csv<W: Write>(trace: &SearchTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "iteration,candidate,digest,J,stderr,best_so_far")?;
    let mut best = f64::INFINITY;
    for (i, e) in trace.entries.iter().enumerate() {
        best = best.min(e.value);
        writeln!(
            out,
            "{},{i},{},{:?},{:?},{best:?}",
            e.iteration, e.digest, e.value, e.stderr
        )?;
    }
    Ok(())
}
