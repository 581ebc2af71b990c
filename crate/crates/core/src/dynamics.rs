//! Interacting-particle Euler–Maruyama scheme for the reflected mean-field
//! SDE.
//!
//! Each step computes the empirical moments `(m1, m2)` of the N particles in
//! index order, then advances every particle with
//!
//! ```text
//! Y  = X + b(t, X, m1, m2, u) dt + σ(t, X, m1, m2) ΔW
//! X' = max(Y, 0),  ΔK = X' − Y
//! ```
//!
//! which is the Skorokhod map applied one step at a time. Particle `i` draws
//! its increments from its own stream (see [`crate::rng`]), so the result is
//! bit-identical for any thread count.
//!
//! Open-loop controls and relaxed weights are read at the step midpoint,
//! which snaps control switching times to the nearest grid node.

use crate::controls::{RelaxedControlPolicy, StrictControlPolicy};
use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::model::{CoefficientSet, State};
use crate::rng::ParticleStream;
use crate::skorokhod::ReflectedPath;
use rayon::prelude::*;
use std::io::{self, Write};

/// Particle counts at or above this run on the global rayon pool when no
/// thread hint is given.
const PARALLEL_THRESHOLD: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Constant(f64),
    PerParticle(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub steps: usize,
    pub particles: usize,
    pub seed: u64,
    pub initial: InitialState,
    pub thread_hint: Option<usize>,
}

impl SimulationConfig {
    pub fn new(horizon: f64, steps: usize, particles: usize, seed: u64, x0: f64) -> Self {
        Self {
            horizon,
            steps,
            particles,
            seed,
            initial: InitialState::Constant(x0),
            thread_hint: None,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.thread_hint = Some(threads);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain("horizon must be finite and > 0"));
        }
        if self.steps == 0 || self.particles == 0 {
            return Err(Error::domain("steps and particles must be >= 1"));
        }
        if self.thread_hint == Some(0) {
            return Err(Error::domain("thread hint must be >= 1"));
        }
        match &self.initial {
            InitialState::Constant(x) if !(*x >= 0.0 && x.is_finite()) => {
                Err(Error::domain(format!("initial value {x} is not in [0, inf)")))
            }
            InitialState::PerParticle(v) if v.len() != self.particles => Err(Error::shape(format!(
                "{} initial values for {} particles",
                v.len(),
                self.particles
            ))),
            InitialState::PerParticle(v) if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) => {
                Err(Error::domain("initial values must lie in [0, inf)"))
            }
            _ => Ok(()),
        }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        crate::controls::uniform_grid(self.horizon, self.steps)
    }

    fn initial_value(&self, i: usize) -> f64 {
        match &self.initial {
            InitialState::Constant(x) => *x,
            InitialState::PerParticle(v) => v[i],
        }
    }
}

/// Reflected paths, reflection processes and Brownian increments of all
/// particles on a shared grid. Rows are stored particle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    times: Vec<f64>,
    particles: usize,
    x: Vec<f64>,
    k: Vec<f64>,
    noise: Vec<f64>,
    moments: Vec<(f64, f64)>,
    terminal_law: EmpiricalMeasure,
}

impl TrajectoryBundle {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        let n = self.times.len();
        &self.x[i * n..(i + 1) * n]
    }

    pub fn k_row(&self, i: usize) -> &[f64] {
        let n = self.times.len();
        &self.k[i * n..(i + 1) * n]
    }

    pub fn noise_row(&self, i: usize) -> &[f64] {
        let n = self.steps();
        &self.noise[i * n..(i + 1) * n]
    }

    pub fn path(&self, i: usize) -> ReflectedPath {
        ReflectedPath::new(self.times.clone(), self.x_row(i).to_vec(), self.k_row(i).to_vec())
            .expect("simulated rows satisfy the reflection invariants")
    }

    /// Empirical `(m1, m2)` at every grid node.
    pub fn moments(&self) -> &[(f64, f64)] {
        &self.moments
    }

    pub fn terminal_law(&self) -> &EmpiricalMeasure {
        &self.terminal_law
    }

    /// Largest empirical fourth moment over the grid.
    pub fn max_fourth_moment(&self) -> f64 {
        let n = self.times.len();
        (0..n)
            .map(|j| {
                (0..self.particles)
                    .map(|i| self.x[i * n + j].powi(4))
                    .sum::<f64>()
                    / self.particles as f64
            })
            .fold(0.0, f64::max)
    }
}

/// How the control enters one Euler step: a single action, or weights over
/// the action points.
#[derive(Debug, Clone, Copy)]
pub(crate) enum StepControl<'a> {
    Action(f64),
    Mixture(&'a [f64], &'a [f64]),
}

impl StepControl<'_> {
    /// `h(u)` for a strict action, `Σ w_j h(a_j)` over the positive weights
    /// for a mixture. A single unit weight reproduces `h(a)` bit for bit.
    pub(crate) fn integrate(&self, mut h: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        match *self {
            StepControl::Action(a) => h(a),
            StepControl::Mixture(weights, points) => {
                let mut acc: Option<f64> = None;
                for (w, a) in weights.iter().zip(points) {
                    if *w > 0.0 {
                        let term = w * h(*a)?;
                        acc = Some(acc.map_or(term, |s| s + term));
                    }
                }
                Ok(acc.unwrap_or(0.0))
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Drive<'a> {
    Strict(&'a StrictControlPolicy),
    Relaxed(&'a RelaxedControlPolicy),
}

impl<'a> Drive<'a> {
    pub(crate) fn at(&self, s: &State, dt: f64) -> Result<StepControl<'a>> {
        let mid = s.t + 0.5 * dt;
        Ok(match *self {
            Drive::Strict(StrictControlPolicy::OpenLoop(u)) => StepControl::Action(u.value_at(mid)),
            Drive::Strict(StrictControlPolicy::Feedback(u)) => {
                StepControl::Action(u.action(s.t, s.x, s.m1, s.m2)?)
            }
            Drive::Relaxed(q) => StepControl::Mixture(q.weights_at(mid), q.actions().points()),
        })
    }
}

pub(crate) fn empirical_moments(values: impl Iterator<Item = f64>, n: usize) -> (f64, f64) {
    let (mut s1, mut s2) = (0.0, 0.0);
    for v in values {
        s1 += v;
        s2 += v * v;
    }
    (s1 / n as f64, s2 / n as f64)
}

pub fn simulate_strict(
    coeffs: &CoefficientSet,
    policy: &StrictControlPolicy,
    config: &SimulationConfig,
) -> Result<TrajectoryBundle> {
    run(coeffs, Drive::Strict(policy), config)
}

/// Same scheme with the drift replaced by its mixture under the relaxed
/// weights; the diffusion is uncontrolled.
pub fn simulate_relaxed(
    coeffs: &CoefficientSet,
    q: &RelaxedControlPolicy,
    config: &SimulationConfig,
) -> Result<TrajectoryBundle> {
    run(coeffs, Drive::Relaxed(q), config)
}

pub(crate) fn run(
    coeffs: &CoefficientSet,
    drive: Drive<'_>,
    config: &SimulationConfig,
) -> Result<TrajectoryBundle> {
    config.validate()?;
    match config.thread_hint {
        Some(1) => simulate_on(coeffs, drive, config, false),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::domain(format!("cannot build thread pool: {e}")))?
            .install(|| simulate_on(coeffs, drive, config, true)),
        None => simulate_on(coeffs, drive, config, config.particles >= PARALLEL_THRESHOLD),
    }
}

struct Row<'a> {
    x: &'a mut [f64],
    k: &'a mut [f64],
    noise: &'a mut [f64],
    stream: &'a mut ParticleStream,
}

fn simulate_on(
    coeffs: &CoefficientSet,
    drive: Drive<'_>,
    config: &SimulationConfig,
    parallel: bool,
) -> Result<TrajectoryBundle> {
    let n = config.particles;
    let steps = config.steps;
    let cols = steps + 1;
    let dt = config.dt();
    let sqrt_dt = dt.sqrt();
    let times = config.times();

    let mut x = vec![0.0; n * cols];
    let mut k = vec![0.0; n * cols];
    let mut noise = vec![0.0; n * steps];
    let mut streams: Vec<ParticleStream> =
        (0..n).map(|i| ParticleStream::new(config.seed, i as u64)).collect();
    for i in 0..n {
        x[i * cols] = config.initial_value(i);
    }
    let mut moments = Vec::with_capacity(cols);

    for step in 0..steps {
        let (m1, m2) = empirical_moments((0..n).map(|i| x[i * cols + step]), n);
        moments.push((m1, m2));
        let t = times[step];

        let advance = |row: Row<'_>| -> Result<()> {
            let xi = row.x[step];
            let s = State::new(t, xi, m1, m2);
            let control = drive.at(&s, dt)?;
            let b = control.integrate(|a| coeffs.drift(&s, a))?;
            let sigma = coeffs.diffusion(&s)?;
            let dw = sqrt_dt * row.stream.standard_normal();
            row.noise[step] = dw;
            let y = xi + b * dt + sigma * dw;
            if !(b.is_finite() && sigma.is_finite() && y.is_finite()) {
                return Err(Error::NumericalBlowup {
                    step,
                    detail: format!("b = {b}, sigma = {sigma}, Y = {y} at x = {xi}"),
                });
            }
            let (next, dk) = if y < 0.0 { (0.0, -y) } else { (y, 0.0) };
            row.x[step + 1] = next;
            row.k[step + 1] = row.k[step] + dk;
            Ok(())
        };

        let mut rows = x
            .chunks_mut(cols)
            .zip(k.chunks_mut(cols))
            .zip(noise.chunks_mut(steps))
            .zip(streams.iter_mut())
            .map(|(((x, k), noise), stream)| Row { x, k, noise, stream });
        let outcome: Result<()> = if parallel {
            let rows: Vec<Row<'_>> = rows.collect();
            let results: Vec<Result<()>> = rows.into_par_iter().map(advance).collect();
            results.into_iter().collect()
        } else {
            rows.try_for_each(advance)
        };
        outcome.map_err(|e| e.at_step(step))?;
    }
    moments.push(empirical_moments((0..n).map(|i| x[i * cols + steps]), n));

    let terminal: Vec<f64> = (0..n).map(|i| x[i * cols + steps]).collect();
    Ok(TrajectoryBundle {
        times,
        particles: n,
        x,
        k,
        noise,
        moments,
        terminal_law: EmpiricalMeasure::from_samples(&terminal)?,
    })
}

/// `(t, m1, m2)` at every grid node.
pub fn mean_field_moment_curve(bundle: &TrajectoryBundle) -> Vec<(f64, f64, f64)> {
    bundle
        .times
        .iter()
        .zip(&bundle.moments)
        .map(|(t, (m1, m2))| (*t, *m1, *m2))
        .collect()
}

/// One row per (particle, node): `t,i,x,k`.
pub fn write_trajectories_csv<W: Write>(bundle: &TrajectoryBundle, mut out: W) -> io::Result<()> {
    writeln!(out, "t,i,x,k")?;
    for i in 0..bundle.particles {
        for ((t, x), k) in bundle.times.iter().zip(bundle.x_row(i)).zip(bundle.k_row(i)) {
            writeln!(out, "{t:?},{i},{x:?},{k:?}")?;
        }
    }
    Ok(())
}

pub fn write_moments_csv<W: Write>(bundle: &TrajectoryBundle, mut out: W) -> io::Result<()> {
    writeln!(out, "t,m1,m2")?;
    for (t, m1, m2) in mean_field_moment_curve(bundle) {
        writeln!(out, "{t:?},{m1:?},{m2:?}")?;
    }
    Ok(())
}
