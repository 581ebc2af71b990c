//! Monte Carlo evaluation of the cost functional.
//!
//! Per particle the cost is the running cost integrated over the grid, plus
//! the reflection cost paid against `dK`, plus the terminal cost; the
//! estimate is the particle average with its standard error.
//!
//! The running cost uses the trapezoidal rule on each step with the step's
//! control held fixed: `½ (f(t_k, X_k, ·, u_k) + f(t_{k+1}, X_{k+1}, ·, u_k)) dt`.
//! The reflection cost is evaluated at the right end of each `K` increment,
//! where the state sits on the boundary.

use crate::controls::{RelaxedControlPolicy, StrictControlPolicy};
use crate::dynamics::{self, Drive, SimulationConfig, TrajectoryBundle};
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, CostSet, State};
use crate::skorokhod::stieltjes;
use rayon::prelude::*;
use std::io::{self, Write};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown {
    pub running: f64,
    pub reflection: f64,
    pub terminal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub value: f64,
    pub stderr: f64,
    pub breakdown: CostBreakdown,
}

impl CostEstimate {
    fn from_particles(per_particle: &[(f64, f64, f64)]) -> Self {
        let n = per_particle.len() as f64;
        let (mut r, mut c, mut g) = (0.0, 0.0, 0.0);
        for (ri, ci, gi) in per_particle {
            r += ri;
            c += ci;
            g += gi;
        }
        let breakdown = CostBreakdown {
            running: r / n,
            reflection: c / n,
            terminal: g / n,
        };
        let value = breakdown.running + breakdown.reflection + breakdown.terminal;
        let stderr = if per_particle.len() < 2 {
            0.0
        } else {
            let totals: Vec<f64> = per_particle.iter().map(|(a, b, c)| a + b + c).collect();
            let mean = totals.iter().sum::<f64>() / n;
            let var = totals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Self {
            value,
            stderr,
            breakdown,
        }
    }
}

pub fn evaluate_strict(
    costs: &CostSet,
    coeffs: &CoefficientSet,
    policy: &StrictControlPolicy,
    config: &SimulationConfig,
) -> Result<CostEstimate> {
    let bundle = dynamics::simulate_strict(coeffs, policy, config)?;
    cost_of_bundle(costs, &bundle, Drive::Strict(policy), config)
}

/// Running cost integrated against the relaxed weights.
pub fn evaluate_relaxed(
    costs: &CostSet,
    coeffs: &CoefficientSet,
    q: &RelaxedControlPolicy,
    config: &SimulationConfig,
) -> Result<CostEstimate> {
    let bundle = dynamics::simulate_relaxed(coeffs, q, config)?;
    cost_of_bundle(costs, &bundle, Drive::Relaxed(q), config)
}

/// Cost of a strict control on an already simulated bundle.
pub fn strict_cost_of_bundle(
    costs: &CostSet,
    bundle: &TrajectoryBundle,
    policy: &StrictControlPolicy,
    config: &SimulationConfig,
) -> Result<CostEstimate> {
    cost_of_bundle(costs, bundle, Drive::Strict(policy), config)
}

pub fn relaxed_cost_of_bundle(
    costs: &CostSet,
    bundle: &TrajectoryBundle,
    q: &RelaxedControlPolicy,
    config: &SimulationConfig,
) -> Result<CostEstimate> {
    cost_of_bundle(costs, bundle, Drive::Relaxed(q), config)
}

fn cost_of_bundle(
    costs: &CostSet,
    bundle: &TrajectoryBundle,
    drive: Drive<'_>,
    config: &SimulationConfig,
) -> Result<CostEstimate> {
    let times = bundle.times();
    let moments = bundle.moments();
    let steps = bundle.steps();
    let dt = config.dt();

    let particle = |i: usize| -> Result<(f64, f64, f64)> {
        let x = bundle.x_row(i);
        let mut running = 0.0;
        for step in 0..steps {
            let (m1, m2) = moments[step];
            let left = State::new(times[step], x[step], m1, m2);
            let (m1n, m2n) = moments[step + 1];
            let right = State::new(times[step + 1], x[step + 1], m1n, m2n);
            let control = drive.at(&left, dt)?;
            let fl = control.integrate(|a| costs.running(&left, a))?;
            let fr = control.integrate(|a| costs.running(&right, a))?;
            let inc = 0.5 * (fl + fr) * dt;
            if !inc.is_finite() {
                return Err(Error::NumericalBlowup {
                    step,
                    detail: format!("running cost {fl}, {fr} for particle {i}"),
                });
            }
            running += inc;
        }

        let k = bundle.k_row(i);
        let mut c_values = vec![0.0; x.len()];
        for j in 1..x.len() {
            if k[j] > k[j - 1] {
                let (m1, m2) = moments[j];
                c_values[j] = costs
                    .reflection(&State::new(times[j], x[j], m1, m2))
                    .map_err(|e| e.at_step(j - 1))?;
            }
        }
        let reflection = stieltjes(&c_values, k)?;

        let (m1, m2) = moments[steps];
        let terminal = costs
            .terminal(x[steps], m1, m2)
            .map_err(|e| e.at_step(steps))?;
        if !(reflection.is_finite() && terminal.is_finite()) {
            return Err(Error::NumericalBlowup {
                step: steps,
                detail: format!("reflection {reflection}, terminal {terminal} for particle {i}"),
            });
        }
        Ok((running, reflection, terminal))
    };

    let n = bundle.particles();
    let per_particle: Vec<(f64, f64, f64)> = if n >= 512 && config.thread_hint != Some(1) {
        let r: Vec<Result<_>> = (0..n).into_par_iter().map(particle).collect();
        r.into_iter().collect::<Result<_>>()?
    } else {
        (0..n).map(particle).collect::<Result<_>>()?
    };
    Ok(CostEstimate::from_particles(&per_particle))
}

pub fn write_cost_csv_header<W: Write>(mut out: W) -> io::Result<()> {
    writeln!(out, "label,J,stderr,running,reflection,terminal")
}

pub fn write_cost_csv_row<W: Write>(mut out: W, label: &str, est: &CostEstimate) -> io::Result<()> {
    writeln!(
        out,
        "{label},{:?},{:?},{:?},{:?},{:?}",
        est.value, est.stderr, est.breakdown.running, est.breakdown.reflection, est.breakdown.terminal
    )
}
