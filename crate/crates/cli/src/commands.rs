use crate::config::{Model, ModelConfig, Policy, PolicyFile};
use crate::example3::Example3;
use crate::{selftest, Cli, CliError, Command, GlobalArgs};
use rmv_core::cost::{write_cost_csv_header, write_cost_csv_row};
use rmv_core::dynamics::{write_moments_csv, write_trajectories_csv};
use rmv_core::optimizer::write_trace_csv;
use rmv_core::roxin::{check_roxin_sampled, select_strict};
use rmv_core::{
    chattering_approximation, evaluate_relaxed, evaluate_strict, minimize_relaxed, simulate_strict, strictify_best,
    weak_gap, SearchSpec, SimulationConfig, State, TestFunction,
};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let g = &cli.global;
    if g.threads == Some(0) {
        return Err(CliError::Input("--threads must be >= 1".into()));
    }
    match &cli.command {
        Command::Simulate => simulate(g, out),
        Command::Cost { policy } => cost(g, policy.as_deref(), out),
        Command::Chatter {
            policy,
            levels,
            steps_per_level,
        } => chatter(g, policy, levels, *steps_per_level, out),
        Command::Optimize {
            method,
            cells,
            budget,
            search_seed,
            elite_fraction,
            batch_size,
            strict_level,
        } => {
            let model = load_model(g)?;
            let spec = SearchSpec {
                control_cells: *cells,
                budget: *budget,
                method: method.clone(),
                seed: search_seed.unwrap_or(model.simulation.seed),
                elite_fraction: *elite_fraction,
                batch_size: *batch_size,
            };
            optimize(g, &model, &spec, *strict_level, out)
        }
        Command::Example3 { n_max, horizon } => example3(g, *n_max, *horizon, out),
        Command::Roxin {
            x,
            t,
            tolerance,
            weights,
        } => roxin(g, x, *t, *tolerance, weights.as_deref(), out),
        Command::Selftest { tamper } => selftest::run(g.seed.unwrap_or(0), tamper.as_deref(), out),
    }
}

fn load_model(g: &GlobalArgs) -> Result<Model, CliError> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| CliError::Input("--config is required for this command".into()))?;
    let mut model = ModelConfig::load(path)?.build()?;
    let sim = &mut model.simulation;
    if let Some(s) = g.seed {
        sim.seed = s;
    }
    if let Some(s) = g.steps {
        sim.steps = s;
    }
    if let Some(n) = g.particles {
        sim.particles = n;
    }
    sim.thread_hint = g.threads;
    sim.validate()?;
    Ok(model)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf, CliError> {
    let mut f = create(dir, name)?;
    f.write_all(body.as_bytes())?;
    f.flush()?;
    Ok(dir.join(name))
}

fn simulate(g: &GlobalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(g)?;
    let u = model
        .control
        .as_ref()
        .ok_or_else(|| CliError::Input("simulate needs a [control] section in the config".into()))?;
    let bundle = simulate_strict(&model.coefficients, u, &model.simulation)?;

    let mut f = create(&g.out, "trajectories.csv")?;
    write_trajectories_csv(&bundle, &mut f)?;
    f.flush()?;
    let mut f = create(&g.out, "moments.csv")?;
    write_moments_csv(&bundle, &mut f)?;
    f.flush()?;

    let n = bundle.particles();
    let (mut lo, mut hi, mut k_total) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for i in 0..n {
        for x in bundle.x_row(i) {
            lo = lo.min(*x);
            hi = hi.max(*x);
        }
        k_total += bundle.k_row(i).last().copied().unwrap_or(0.0);
    }
    let (m1, m2) = *bundle.moments().last().expect("grid has nodes");
    writeln!(out, "particles {n}, steps {}", bundle.steps())?;
    writeln!(out, "min X {lo:?}")?;
    writeln!(out, "max X {hi:?}")?;
    writeln!(out, "total K (particle mean) {:?}", k_total / n as f64)?;
    writeln!(out, "terminal m1 {m1:?}")?;
    writeln!(out, "terminal m2 {m2:?}")?;
    Ok(())
}

fn cost(g: &GlobalArgs, policy: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(g)?;
    let (label, est) = match policy {
        Some(p) => match PolicyFile::load(p)?.policy(model.horizon)? {
            Policy::Relaxed(q) => ("relaxed", evaluate_relaxed(&model.costs, &model.coefficients, &q, &model.simulation)?),
            Policy::Strict(u) => ("strict", evaluate_strict(&model.costs, &model.coefficients, &u, &model.simulation)?),
        },
        None => {
            let u = model
                .control
                .as_ref()
                .ok_or_else(|| CliError::Input("cost needs --policy or a [control] section".into()))?;
            ("strict", evaluate_strict(&model.costs, &model.coefficients, u, &model.simulation)?)
        }
    };
    let mut f = create(&g.out, "cost.csv")?;
    write_cost_csv_header(&mut f)?;
    write_cost_csv_row(&mut f, label, &est)?;
    f.flush()?;
    write_cost_csv_header(&mut *out)?;
    write_cost_csv_row(&mut *out, label, &est)?;
    Ok(())
}

fn chatter(
    g: &GlobalArgs,
    policy: &Path,
    levels: &[usize],
    steps_per_level: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if levels.is_empty() || levels.contains(&0) {
        return Err(CliError::Input("chattering levels must be >= 1".into()));
    }
    if steps_per_level == Some(0) {
        return Err(CliError::Input("--steps-per-level must be >= 1".into()));
    }
    let model = load_model(g)?;
    let q = match PolicyFile::load(policy)?.policy(model.horizon)? {
        Policy::Relaxed(q) => q,
        Policy::Strict(_) => return Err(CliError::Input("chatter needs a relaxed policy file".into())),
    };
    let tests = TestFunction::standard_family();
    let mut table = String::from("n,J_strict,J_relaxed,gap,weak_gap\n");
    for &n in levels {
        let cfg = SimulationConfig {
            steps: steps_per_level.map_or(model.simulation.steps, |k| k * n),
            ..model.simulation.clone()
        };
        let relaxed = evaluate_relaxed(&model.costs, &model.coefficients, &q, &cfg)?;
        let strict_cfg = if g.common_rng {
            cfg.clone()
        } else {
            SimulationConfig {
                seed: cfg.seed.wrapping_add(n as u64),
                ..cfg.clone()
            }
        };
        let u = chattering_approximation(&q, n)?;
        let strict = evaluate_strict(&model.costs, &model.coefficients, &u, &strict_cfg)?;
        let weak = weak_gap(&u, &q, &tests)?;
        table.push_str(&format!(
            "{n},{:?},{:?},{:?},{weak:?}\n",
            strict.value,
            relaxed.value,
            strict.value - relaxed.value
        ));
    }
    write_file(&g.out, "chatter_table.csv", &table)?;
    out.write_all(table.as_bytes())?;
    Ok(())
}

fn optimize(
    g: &GlobalArgs,
    model: &Model,
    spec: &SearchSpec,
    strict_level: usize,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if !g.common_rng {
        return Err(CliError::Input("optimize always uses common random numbers".into()));
    }
    if strict_level == 0 {
        return Err(CliError::Input("--strict-level must be >= 1".into()));
    }
    let trace = minimize_relaxed(&model.costs, &model.coefficients, &model.actions, &model.simulation, spec)?;
    let mut f = create(&g.out, "trace.csv")?;
    write_trace_csv(&trace, &mut f)?;
    f.flush()?;
    write_file(&g.out, "best_policy.toml", &PolicyFile::from_relaxed(&trace.best_policy).to_toml()?)?;

    let (u, est) = strictify_best(&trace, strict_level, &model.costs, &model.coefficients, &model.simulation)?;
    write_file(&g.out, "strict_policy.toml", &PolicyFile::from_strict(&u)?.to_toml()?)?;
    let mut f = create(&g.out, "strict_cost.csv")?;
    write_cost_csv_header(&mut f)?;
    write_cost_csv_row(&mut f, &format!("chattering-{strict_level}"), &est)?;
    f.flush()?;

    writeln!(out, "method {}, evaluations {}", trace.method, trace.entries.len())?;
    writeln!(out, "best relaxed J {:?} (stderr {:?})", trace.best_value, trace.best_stderr)?;
    writeln!(out, "best weights {:?}", trace.best_policy.weights())?;
    writeln!(out, "strict J at level {strict_level} {:?} (stderr {:?})", est.value, est.stderr)?;
    Ok(())
}

fn example3(g: &GlobalArgs, n_max: usize, horizon: f64, out: &mut dyn Write) -> Result<(), CliError> {
    let e = Example3::new(horizon)?;
    let report = e.report(n_max, g.threads)?;
    let mut f = create(&g.out, "example3_table.csv")?;
    report.write_table_csv(&mut f)?;
    f.flush()?;
    report.write_summary(&mut *out, e.shift)?;
    Ok(())
}

fn roxin(
    g: &GlobalArgs,
    xs: &[f64],
    t: f64,
    tolerance: f64,
    weights: Option<&[f64]>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let model = load_model(g)?;
    if xs.iter().any(|x| !(*x >= 0.0)) {
        return Err(CliError::Input("probe states must be >= 0".into()));
    }
    let probes: Vec<State> = xs.iter().map(|&x| State::new(t, x, x, x * x)).collect();
    let report = check_roxin_sampled(&model.coefficients, &model.costs, &model.actions, &probes, tolerance)?;
    match report.witness {
        Some(w) => writeln!(
            out,
            "not convex: witness pair ({:?}, {:?}) at t = {:?}, x = {:?}, gap {:?}",
            w.pair.0, w.pair.1, w.probe.t, w.probe.x, w.gap
        )?,
        None => writeln!(out, "convex at all {} probes (tolerance {tolerance:?})", probes.len())?,
    }
    if let Some(w) = weights {
        let s = select_strict(&model.coefficients, &model.costs, &model.actions, w, &probes[0], tolerance)?;
        writeln!(
            out,
            "selection: action {:?}, residual {:?}, representable {}",
            s.action.unwrap_or(f64::NAN),
            s.residual,
            s.representable
        )?;
    }
    Ok(())
}
