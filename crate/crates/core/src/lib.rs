//! Simulation and optimization toolkit for one-dimensional reflected
//! McKean–Vlasov SDEs under strict and relaxed controls.
//!
//! The state lives on `[0, ∞)` and is kept there by a minimal reflection
//! process `K`. The law of the state enters the coefficients through its
//! first two moments, estimated from an interacting particle system.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controls;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod measure;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod roxin;
pub mod skorokhod;

pub use controls::{
    as_relaxed, chattering_approximation, weak_gap, ActionSet, FeedbackControl, OpenLoopControl,
    RelaxedControlPolicy, StrictControlPolicy, TestFunction,
};
pub use cost::{evaluate_relaxed, evaluate_strict, CostBreakdown, CostEstimate};
pub use dynamics::{
    mean_field_moment_curve, simulate_relaxed, simulate_strict, InitialState, SimulationConfig,
    TrajectoryBundle,
};
pub use error::{Error, Result};
pub use expr::Expr;
pub use measure::{w2_distance, EmpiricalMeasure};
pub use model::{CoefficientSet, CostSet, ProbeDomain, State};
pub use skorokhod::{reflect, stieltjes_against_k, GridPath, ReflectedPath};
pub use optimizer::{
    minimize_relaxed, minimize_relaxed_with, strictify_best, MethodRegistry, SearchMethod, SearchSpec,
    SearchTrace,
};
pub use roxin::{barycenter, check_roxin_sampled, select_strict, RoxinReport, RoxinWitness, SelectionResult};
