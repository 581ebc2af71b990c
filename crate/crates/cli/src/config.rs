//! TOML model and policy files.
//!
//! A model file looks like
//!
//! ```toml
//! horizon = 1.0
//!
//! [actions]
//! points = [-1.0, 0.0, 1.0]        # or: interval = [-1.0, 1.0], count = 41
//!
//! [coefficients]
//! drift = "a - x + 0.5*m1"
//! diffusion = "0.3"
//! C1 = 4.0                          # optional growth / Lipschitz constants
//!
//! [costs]
//! running = "x^2 + (a^2 - 1)^2"
//! reflection = "0"
//! terminal = "0"
//!
//! [simulation]
//! steps = 200
//! particles = 1000
//! seed = 7
//! initial = 1.0                     # or one value per particle
//!
//! [control]                         # optional strict control
//! kind = "constant"
//! value = 1.0
//! ```
//!
//! Expressions use the variables `t, x, m1, m2, a`; the control `a` is only
//! allowed in `drift` and `running`, and `terminal` sees only `x, m1, m2`.

use crate::CliError;
use rmv_core::expr::{signature, Expr};
use rmv_core::{
    ActionSet, CoefficientSet, CostSet, FeedbackControl, InitialState, OpenLoopControl, ProbeDomain,
    RelaxedControlPolicy, SimulationConfig, StrictControlPolicy,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    pub actions: ActionSpec,
    pub coefficients: CoefficientSpec,
    pub costs: CostSpec,
    pub simulation: SimulationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub drift: String,
    pub diffusion: String,
    #[serde(rename = "C1", default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(rename = "C2", default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub running: String,
    pub reflection: String,
    pub terminal: String,
    #[serde(rename = "C3", default, skip_serializing_if = "Option::is_none")]
    pub c3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Constant(f64),
    PerParticle(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub steps: usize,
    pub particles: usize,
    pub seed: u64,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSpec {
    Constant { value: f64 },
    OpenLoop { boundaries: Vec<f64>, values: Vec<f64> },
    Feedback { rule: String },
}

/// Relaxed or open-loop policy file, sharing the model file's TOML grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyFile {
    Relaxed {
        actions: Vec<f64>,
        boundaries: Vec<f64>,
        weights: Vec<Vec<f64>>,
    },
    OpenLoop {
        actions: Vec<f64>,
        boundaries: Vec<f64>,
        values: Vec<f64>,
    },
}

pub enum Policy {
    Relaxed(RelaxedControlPolicy),
    Strict(StrictControlPolicy),
}

/// A validated model ready for simulation.
#[derive(Debug, Clone)]
pub struct Model {
    pub horizon: f64,
    pub actions: ActionSet,
    pub coefficients: CoefficientSet,
    pub costs: CostSet,
    pub simulation: SimulationConfig,
    pub control: Option<StrictControlPolicy>,
}

fn parse_field(field: &str, src: &str, vars: &[rmv_core::expr::Var]) -> Result<Expr, CliError> {
    Expr::parse(src, vars).map_err(|e| CliError::Input(format!("{field}: {e}")))
}

fn input<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{context}: {e}"))
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(input("config"))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(input("config"))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(input(&path.display().to_string()))?;
        Self::from_toml(&text)
    }

    pub fn action_set(&self) -> Result<ActionSet, CliError> {
        let a = &self.actions;
        match (&a.points, a.interval, a.count) {
            (Some(p), None, None) => ActionSet::new(p.clone()).map_err(input("actions")),
            (None, Some([lo, hi]), Some(n)) => ActionSet::grid(lo, hi, n)
                .and_then(|g| g.with_interval(lo, hi))
                .map_err(input("actions")),
            _ => Err(CliError::Input(
                "actions: give either `points` or both `interval` and `count`".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<Model, CliError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CliError::Input(format!("horizon must be > 0, got {}", self.horizon)));
        }
        let actions = self.action_set()?;
        let c = &self.coefficients;
        let coefficients = CoefficientSet::from_exprs(
            parse_field("coefficients.drift", &c.drift, signature::DRIFT)?,
            parse_field("coefficients.diffusion", &c.diffusion, signature::DIFFUSION)?,
        )
        .map_err(input("coefficients"))?
        .with_constants(c.c1, c.c2);
        let k = &self.costs;
        let costs = CostSet::from_exprs(
            parse_field("costs.running", &k.running, signature::RUNNING)?,
            parse_field("costs.reflection", &k.reflection, signature::REFLECTION)?,
            parse_field("costs.terminal", &k.terminal, signature::TERMINAL)?,
        )
        .map_err(input("costs"))?
        .with_constant(k.c3);

        let probes = ProbeDomain::new(self.horizon, actions.clone());
        if c.c1.is_some() || c.c2.is_some() {
            coefficients.check_assumptions(&probes).map_err(input("coefficients"))?;
        }
        if k.c3.is_some() {
            costs.check_assumptions(&probes).map_err(input("costs"))?;
        }

        let s = &self.simulation;
        let mut simulation = SimulationConfig::new(self.horizon, s.steps, s.particles, s.seed, 0.0);
        simulation.initial = match &s.initial {
            InitialSpec::Constant(x) => InitialState::Constant(*x),
            InitialSpec::PerParticle(v) => InitialState::PerParticle(v.clone()),
        };
        simulation.validate().map_err(input("simulation"))?;

        let control = match &self.control {
            None => None,
            Some(spec) => Some(build_control(spec, &actions, self.horizon)?),
        };
        Ok(Model {
            horizon: self.horizon,
            actions,
            coefficients,
            costs,
            simulation,
            control,
        })
    }
}

fn build_control(spec: &ControlSpec, actions: &ActionSet, horizon: f64) -> Result<StrictControlPolicy, CliError> {
    let u = match spec {
        ControlSpec::Constant { value } => OpenLoopControl::constant(actions.clone(), *value, horizon)
            .map_err(input("control"))?
            .into(),
        ControlSpec::OpenLoop { boundaries, values } => check_horizon(boundaries, horizon)
            .and_then(|_| {
                OpenLoopControl::new(actions.clone(), boundaries.clone(), values.clone()).map_err(input("control"))
            })?
            .into(),
        ControlSpec::Feedback { rule } => {
            FeedbackControl::from_expr(actions.clone(), parse_field("control.rule", rule, signature::FEEDBACK)?)
                .into()
        }
    };
    Ok(u)
}

fn check_horizon(boundaries: &[f64], horizon: f64) -> Result<(), CliError> {
    match boundaries.last() {
        Some(&end) if end == horizon => Ok(()),
        _ => Err(CliError::Input(format!(
            "policy boundaries must end at the horizon {horizon}"
        ))),
    }
}

impl PolicyFile {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(input("policy"))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(input("policy"))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(input(&path.display().to_string()))?;
        Self::from_toml(&text)
    }

    pub fn from_relaxed(q: &RelaxedControlPolicy) -> Self {
        PolicyFile::Relaxed {
            actions: q.actions().points().to_vec(),
            boundaries: q.boundaries().to_vec(),
            weights: q.weights().to_vec(),
        }
    }

    pub fn from_strict(u: &StrictControlPolicy) -> Result<Self, CliError> {
        let u = u.as_open_loop().map_err(input("policy"))?;
        Ok(PolicyFile::OpenLoop {
            actions: u.actions().points().to_vec(),
            boundaries: u.boundaries().to_vec(),
            values: u.values().to_vec(),
        })
    }

    /// Build the policy against a model's horizon.
    pub fn policy(&self, horizon: f64) -> Result<Policy, CliError> {
        match self {
            PolicyFile::Relaxed {
                actions,
                boundaries,
                weights,
            } => {
                check_horizon(boundaries, horizon)?;
                let a = ActionSet::new(actions.clone()).map_err(input("policy"))?;
                RelaxedControlPolicy::new(a, boundaries.clone(), weights.clone())
                    .map(Policy::Relaxed)
                    .map_err(input("policy"))
            }
            PolicyFile::OpenLoop {
                actions,
                boundaries,
                values,
            } => {
                check_horizon(boundaries, horizon)?;
                let a = ActionSet::new(actions.clone()).map_err(input("policy"))?;
                OpenLoopControl::new(a, boundaries.clone(), values.clone())
                    .map(|u| Policy::Strict(u.into()))
                    .map_err(input("policy"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = r#"
horizon = 1.0

[actions]
points = [-1.0, 0.0, 1.0]

[coefficients]
drift = "a - x + 0.5*m1"
diffusion = "0.3"

[costs]
running = "x^2 + (a^2 - 1)^2"
reflection = "1"
terminal = "x"

[simulation]
steps = 20
particles = 10
seed = 3
initial = 1.0

[control]
kind = "open-loop"
boundaries = [0.0, 0.5, 1.0]
values = [1.0, -1.0]
"#;

    #[test]
    fn sample_builds_and_round_trips() {
        let cfg = ModelConfig::from_toml(SAMPLE).unwrap();
        let model = cfg.build().unwrap();
        assert_eq!(model.actions.len(), 3);
        assert!(model.control.is_some());
        let again = ModelConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn interval_actions_and_per_particle_initial() {
        let text = SAMPLE
            .replace("points = [-1.0, 0.0, 1.0]", "interval = [-1.0, 1.0]\ncount = 5")
            .replace("initial = 1.0", "initial = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]");
        let cfg = ModelConfig::from_toml(&text).unwrap();
        let m = cfg.build().unwrap();
        assert_eq!(m.actions.points(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(ModelConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn control_in_diffusion_is_rejected_with_position() {
        let text = SAMPLE.replace("diffusion = \"0.3\"", "diffusion = \"0.3 + a\"");
        let err = ModelConfig::from_toml(&text).unwrap().build().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("coefficients.diffusion") && msg.contains("column 7"), "{msg}");
    }

    #[test]
    fn malformed_sections_are_input_errors() {
        assert!(matches!(ModelConfig::from_toml("horizon = "), Err(CliError::Input(_))));
        let bad = SAMPLE.replace("horizon = 1.0", "horizon = -1.0");
        assert!(ModelConfig::from_toml(&bad).unwrap().build().is_err());
        let both = SAMPLE.replace("points = [-1.0, 0.0, 1.0]", "points = [0.0]\ncount = 3");
        assert!(ModelConfig::from_toml(&both).unwrap().build().is_err());
        let off = SAMPLE.replace("values = [1.0, -1.0]", "values = [1.0, 0.5]");
        assert!(ModelConfig::from_toml(&off).unwrap().build().is_err());
    }

    #[test]
    fn policy_files_round_trip() {
        let q = PolicyFile::Relaxed {
            actions: vec![-1.0, 1.0],
            boundaries: vec![0.0, 0.25, 1.0],
            weights: vec![vec![0.5, 0.5], vec![0.1, 0.9]],
        };
        let text = q.to_toml().unwrap();
        assert_eq!(PolicyFile::from_toml(&text).unwrap(), q);
        assert!(matches!(q.policy(1.0), Ok(Policy::Relaxed(_))));
        assert!(q.policy(2.0).is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
    }

    fn opt<T: std::fmt::Debug + Clone + 'static>(s: impl Strategy<Value = T> + 'static) -> BoxedStrategy<Option<T>> {
        prop_oneof![Just(None), s.prop_map(Some)].boxed()
    }

    fn model_config() -> impl Strategy<Value = ModelConfig> {
        let text = "[ -~]{0,24}";
        let actions = (opt(prop::collection::vec(finite(), 1..5)), opt([finite(), finite()]), opt(0usize..100))
            .prop_map(|(points, interval, count)| ActionSpec { points, interval, count });
        let coefficients = (text, text, opt(finite()), opt(finite()))
            .prop_map(|(drift, diffusion, c1, c2)| CoefficientSpec { drift, diffusion, c1, c2 });
        let costs = (text, text, text, opt(finite()))
            .prop_map(|(running, reflection, terminal, c3)| CostSpec { running, reflection, terminal, c3 });
        let initial = prop_oneof![
            finite().prop_map(InitialSpec::Constant),
            prop::collection::vec(finite(), 0..4).prop_map(InitialSpec::PerParticle),
        ];
        let simulation = (0usize..10_000, 0usize..10_000, any::<u64>(), initial)
            .prop_map(|(steps, particles, seed, initial)| SimulationSpec { steps, particles, seed, initial });
        let control = opt(prop_oneof![
            finite().prop_map(|value| ControlSpec::Constant { value }),
            (prop::collection::vec(finite(), 0..4), prop::collection::vec(finite(), 0..4))
                .prop_map(|(boundaries, values)| ControlSpec::OpenLoop { boundaries, values }),
            text.prop_map(|rule| ControlSpec::Feedback { rule }),
        ]);
        (finite(), actions, coefficients, costs, simulation, control).prop_map(
            |(horizon, actions, coefficients, costs, simulation, control)| ModelConfig {
                horizon,
                actions,
                coefficients,
                costs,
                simulation,
                control,
            },
        )
    }

    proptest! {
        #[test]
        fn any_config_round_trips(cfg in model_config()) {
            let text = cfg.to_toml().unwrap();
            prop_assert_eq!(ModelConfig::from_toml(&text).unwrap(), cfg);
        }
    }
}
