//! The classical bang-bang example: `dX = u dt`, `X(0) = 0`, cost
//! `∫ X² + (u² − 1)² dt`, actions `{−1, 0, 1}`.
//!
//! The state lives on the real line, so it is shifted by `L = T + 1`: the
//! simulated state starts at `L`, stays within `[1, 2T + 1]` for `|u| ≤ 1`
//! and never reflects, and the costs are evaluated at `X − L`. The relaxed
//! control `½(δ₋₁ + δ₁)` has cost 0, the switching control of period `2/n`
//! has cost `T / (3n²)`, and the drift/cost image set is not convex.

use crate::CliError;
use rmv_core::roxin::{check_roxin_sampled, select_strict, RoxinReport, SelectionResult};
use rmv_core::{
    evaluate_relaxed, evaluate_strict, ActionSet, CoefficientSet, CostSet, OpenLoopControl, RelaxedControlPolicy,
    SimulationConfig, State, StrictControlPolicy,
};
use std::io::{self, Write};

pub struct Example3 {
    pub horizon: f64,
    pub shift: f64,
    pub actions: ActionSet,
    pub coefficients: CoefficientSet,
    pub costs: CostSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example3Row {
    pub n: usize,
    pub value: f64,
    pub closed_form: f64,
    pub error: f64,
    /// `J(u^{n/2}) / J(u^n)`; absent on the first row.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example3Report {
    pub rows: Vec<Example3Row>,
    pub relaxed: f64,
    pub roxin: RoxinReport,
    pub selection: SelectionResult,
}

impl Example3 {
    pub fn new(horizon: f64) -> Result<Self, CliError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(CliError::Input(format!("horizon must be > 0, got {horizon}")));
        }
        let shift = horizon + 1.0;
        Ok(Self {
            horizon,
            shift,
            actions: ActionSet::new(vec![-1.0, 0.0, 1.0])?,
            coefficients: CoefficientSet::parse("a", "0")?,
            costs: CostSet::parse(&format!("(x - {shift:?})^2 + (a^2 - 1)^2"), "0", "0")?,
        })
    }

    /// Grid with 200 steps per unit of switching period `1/n`.
    pub fn config(&self, n: usize, threads: Option<usize>) -> SimulationConfig {
        let steps = (200.0 * n as f64 * self.horizon).round().max(1.0) as usize;
        let mut cfg = SimulationConfig::new(self.horizon, steps, 1, 0, self.shift);
        cfg.thread_hint = threads;
        cfg
    }

    /// `+1` on `[0, 1/n)`, `−1` on `[1/n, 2/n)`, and so on.
    pub fn switching_control(&self, n: usize) -> Result<StrictControlPolicy, CliError> {
        let width = 1.0 / n as f64;
        let mut boundaries = vec![0.0];
        let mut values = vec![];
        let mut k = 0usize;
        loop {
            let end = (k + 1) as f64 * width;
            values.push(if k.is_multiple_of(2) { 1.0 } else { -1.0 });
            if end >= self.horizon * (1.0 - 1e-12) {
                boundaries.push(self.horizon);
                break;
            }
            boundaries.push(end);
            k += 1;
        }
        Ok(OpenLoopControl::new(self.actions.clone(), boundaries, values)?.into())
    }

    pub fn relaxed_optimum(&self) -> Result<RelaxedControlPolicy, CliError> {
        Ok(RelaxedControlPolicy::on_uniform_cells(
            self.actions.clone(),
            self.horizon,
            vec![vec![0.5, 0.0, 0.5]],
        )?)
    }

    pub fn closed_form(&self, n: usize) -> f64 {
        self.horizon / (3.0 * (n * n) as f64)
    }

    /// The image set at unshifted state 0, with the law a Dirac mass there.
    pub fn origin_probe(&self) -> State {
        State::new(0.0, self.shift, self.shift, self.shift * self.shift)
    }

    pub fn report(&self, n_max: usize, threads: Option<usize>) -> Result<Example3Report, CliError> {
        if n_max == 0 {
            return Err(CliError::Input("n_max must be >= 1".into()));
        }
        let mut rows: Vec<Example3Row> = vec![];
        let mut n = 1;
        while n <= n_max {
            let est = evaluate_strict(&self.costs, &self.coefficients, &self.switching_control(n)?, &self.config(n, threads))?;
            let closed_form = self.closed_form(n);
            rows.push(Example3Row {
                n,
                value: est.value,
                closed_form,
                error: (est.value - closed_form).abs(),
                ratio: rows.last().map(|r| r.value / est.value),
            });
            n *= 2;
        }
        let relaxed = evaluate_relaxed(&self.costs, &self.coefficients, &self.relaxed_optimum()?, &self.config(1, threads))?;
        let probe = self.origin_probe();
        let roxin = check_roxin_sampled(&self.coefficients, &self.costs, &self.actions, &[probe], 1e-9)?;
        let selection = select_strict(&self.coefficients, &self.costs, &self.actions, &[0.5, 0.0, 0.5], &probe, 1e-9)?;
        Ok(Example3Report {
            rows,
            relaxed: relaxed.value,
            roxin,
            selection,
        })
    }
}

impl Example3Report {
    pub fn write_table_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,J,closed_form,error,ratio")?;
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(out, "{},{:?},{:?},{:?},{ratio}", r.n, r.value, r.closed_form, r.error)?;
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut out: W, shift: f64) -> io::Result<()> {
        writeln!(out, "{:>4}  {:>14}  {:>14}  {:>10}  {:>7}", "n", "J", "T/(3n^2)", "error", "ratio")?;
        for r in &self.rows {
            let ratio = r.ratio.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "{:>4}  {:>14.8e}  {:>14.8e}  {:>10.2e}  {:>7}",
                r.n, r.value, r.closed_form, r.error, ratio
            )?;
        }
        writeln!(out, "relaxed J(1/2 (delta_-1 + delta_1)) = {:?}", self.relaxed)?;
        match &self.roxin.witness {
            Some(w) => writeln!(
                out,
                "convexity at x = {:?}: not convex, witness pair ({:?}, {:?}), gap {:?}",
                w.probe.x - shift,
                w.pair.0,
                w.pair.1,
                w.gap
            )?,
            None => writeln!(out, "convexity at x = 0: convex")?,
        }
        writeln!(
            out,
            "strict selection of 1/2 (delta_-1 + delta_1): action {:?}, residual {:?}, representable {}",
            self.selection.action.unwrap_or(f64::NAN),
            self.selection.residual,
            self.selection.representable
        )
    }
}
