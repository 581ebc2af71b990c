use rmv_core::*;

fn example3() -> (CostSet, CoefficientSet, ActionSet) {
    (
        CostSet::parse("(x - 2)^2 + (a^2 - 1)^2", "0", "0").unwrap(),
        CoefficientSet::parse("a", "0").unwrap(),
        ActionSet::new(vec![-1.0, 0.0, 1.0]).unwrap(),
    )
}

#[test]
fn budget_one_gives_single_entry() {
    let (f, b, a) = example3();
    let cfg = SimulationConfig::new(1.0, 32, 1, 0, 2.0);
    for method in ["random-search", "cross-entropy", "coordinate-descent"] {
        let tr = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new(method, 2, 1, 7)).unwrap();
        assert_eq!(tr.entries.len(), 1);
        assert_eq!(tr.best_value, tr.entries[0].value);
    }
}

#[test]
fn unknown_method_is_rejected() {
    let (f, b, a) = example3();
    let cfg = SimulationConfig::new(1.0, 32, 1, 0, 2.0);
    let err = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new("newton", 1, 5, 0)).unwrap_err();
    assert!(matches!(err, Error::UnknownMethod(_)));
}

#[test]
fn cross_entropy_reaches_bang_bang_infimum() {
    let (f, b, a) = example3();
    let cfg = SimulationConfig::new(1.0, 1600, 1, 0, 2.0);
    let tr = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new("cross-entropy", 1, 500, 11)).unwrap();
    assert!(tr.entries.len() <= 500);
    let min = tr.entries.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    assert_eq!(tr.best_value, min);
    assert!(tr.best_value <= 1e-3, "best {}", tr.best_value);

    let (_, strict) = strictify_best(&tr, 16, &f, &b, &cfg).unwrap();
    assert!(strict.value <= 1.0 / (3.0 * 256.0) + 5e-4, "strict {}", strict.value);
    assert!(strict.value >= tr.best_value - 2.0 * tr.best_stderr);

    let (_, n1) = strictify_best(&tr, 1, &f, &b, &cfg).unwrap();
    let (_, n8) = strictify_best(&tr, 8, &f, &b, &cfg).unwrap();
    assert!((n8.value - tr.best_value).abs() <= (n1.value - tr.best_value).abs());
}

#[test]
fn convex_mixture_concentrates_at_pointwise_minimizer() {
    let f = CostSet::parse("(a - 0.5)^2", "0", "0").unwrap();
    let b = CoefficientSet::parse("0", "0").unwrap();
    let a = ActionSet::grid(0.0, 1.0, 101).unwrap();
    let cfg = SimulationConfig::new(1.0, 20, 1, 0, 1.0);
    let tr = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new("cross-entropy", 1, 500, 3)).unwrap();
    assert!(tr.best_value <= 1e-3, "best {}", tr.best_value);
    let w = &tr.best_policy.weights()[0];
    let mean: f64 = w.iter().zip(a.points()).map(|(w, p)| w * p).sum();
    assert!((mean - 0.5).abs() < 0.05, "mean {mean}");
}

#[test]
fn nested_budgets_replay_prefix() {
    let (f, b, a) = example3();
    let cfg = SimulationConfig::new(1.0, 40, 4, 5, 2.0);
    for method in ["random-search", "cross-entropy", "coordinate-descent"] {
        let short = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new(method, 2, 37, 9)).unwrap();
        let long = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new(method, 2, 120, 9)).unwrap();
        assert_eq!(short.entries[..], long.entries[..37], "{method}");
        assert!(long.best_value <= short.best_value);
    }
}

#[test]
fn candidates_keep_exact_marginal() {
    let (f, b, a) = example3();
    let cfg = SimulationConfig::new(1.0, 30, 2, 1, 2.0);
    for method in ["random-search", "cross-entropy", "coordinate-descent"] {
        let tr = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new(method, 3, 60, 2)).unwrap();
        for w in tr.best_policy.weights() {
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!((tr.best_policy.mass_until(1.0) - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn thread_count_does_not_change_trace() {
    let f = CostSet::parse("x^2 + (a^2 - 1)^2", "x", "x").unwrap();
    let b = CoefficientSet::parse("a - 0.2*m1", "0.4").unwrap();
    let a = ActionSet::new(vec![-1.0, 0.0, 1.0]).unwrap();
    let spec = SearchSpec::new("cross-entropy", 2, 80, 4);
    let one = minimize_relaxed(&f, &b, &a, &SimulationConfig::new(1.0, 20, 50, 3, 0.5).with_threads(1), &spec).unwrap();
    let four = minimize_relaxed(&f, &b, &a, &SimulationConfig::new(1.0, 20, 50, 3, 0.5).with_threads(4), &spec).unwrap();
    assert_eq!(one, four);
}

#[test]
fn dirac_best_strictifies_exactly() {
    let f = CostSet::parse("(a - 1)^2 + x", "0", "x").unwrap();
    let b = CoefficientSet::parse("a", "0.2").unwrap();
    let a = ActionSet::new(vec![0.0, 1.0]).unwrap();
    let cfg = SimulationConfig::new(1.0, 40, 20, 8, 1.0);
    let mut tr = minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new("random-search", 2, 1, 0)).unwrap();
    tr.best_policy = RelaxedControlPolicy::on_uniform_cells(a.clone(), 1.0, vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    tr.best_value = evaluate_relaxed(&f, &b, &tr.best_policy, &cfg).unwrap().value;
    let (_, est) = strictify_best(&tr, 4, &f, &b, &cfg).unwrap();
    assert_eq!(est.value.to_bits(), tr.best_value.to_bits());
}

#[test]
fn blowup_reports_candidate_digest() {
    let f = CostSet::parse("1 / (x - 2)", "0", "0").unwrap();
    let b = CoefficientSet::parse("0", "0").unwrap();
    let a = ActionSet::new(vec![0.0, 1.0]).unwrap();
    let cfg = SimulationConfig::new(1.0, 10, 1, 0, 2.0);
    match minimize_relaxed(&f, &b, &a, &cfg, &SearchSpec::new("random-search", 1, 5, 0)) {
        Err(Error::NumericalBlowup { detail, .. }) => assert!(detail.contains("candidate "), "{detail}"),
        other => panic!("{other:?}"),
    }
}
