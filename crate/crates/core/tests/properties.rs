use proptest::prelude::*;

use robust_choice::decision_problems::{restricted_value_check, solve};
use robust_choice::divergences::{misspecification_index, penalty};
use robust_choice::document::{emit_problem, parse_problem};
use robust_choice::preferences::dominance;
use robust_choice::robust_solver::{criterion_value, lambda_sweep, maxmin_value};
use robust_choice::{Act, DecisionProblem, DivergenceSpec, HullMode, Lambda, Model, ModelSet, PhiFunction};

const TOL: f64 = 1e-9;

fn model(n: usize) -> impl Strategy<Value = Model> {
    proptest::collection::vec(0.01f64..1.0, n).prop_map(|w| Model::from_unnormalized(w).unwrap())
}

fn model_set(n: usize, hull: HullMode) -> impl Strategy<Value = ModelSet> {
    proptest::collection::vec(model(n), 1..=3).prop_map(move |mut models| {
        let mut kept: Vec<Model> = Vec::new();
        for m in models.drain(..) {
            if kept.iter().all(|k| !k.approx_eq(&m)) {
                kept.push(m);
            }
        }
        ModelSet::new(kept, hull).unwrap()
    })
}

fn utils(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-3.0f64..3.0, n)
}

fn spec() -> impl Strategy<Value = DivergenceSpec> {
    prop_oneof![
        (0.1f64..5.0).prop_map(|l| DivergenceSpec::relative_entropy(l).unwrap()),
        (0.1f64..5.0).prop_map(|l| DivergenceSpec::gini(l).unwrap()),
        Just(DivergenceSpec::indicator()),
    ]
}

fn act(name: &str, u: Vec<f64>) -> Act {
    Act::new(name, u).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn criterion_lies_between_min_utility_and_maxmin(set in model_set(3, HullMode::ExtremePointsOnly), u in utils(3), spec in spec()) {
        let f = act("f", u.clone());
        let v = criterion_value(&f, &set, &spec).unwrap().value;
        let maxmin = maxmin_value(&f, &set).unwrap().value;
        let lowest = u.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(v <= maxmin + TOL);
        prop_assert!(v >= lowest - TOL);
    }

    #[test]
    fn criterion_is_translation_equivariant(set in model_set(3, HullMode::ExtremePointsOnly), u in utils(3), spec in spec(), k in -2.0f64..2.0) {
        let f = act("f", u);
        let v = criterion_value(&f, &set, &spec).unwrap().value;
        let shifted = criterion_value(&f.translated(k).unwrap(), &set, &spec).unwrap().value;
        prop_assert!((shifted - v - k).abs() <= 1e-9, "{shifted} vs {v} + {k}");
    }

    #[test]
    fn criterion_is_monotone_in_utilities(set in model_set(3, HullMode::ExtremePointsOnly), u in utils(3), bump in proptest::collection::vec(0.0f64..1.0, 3), spec in spec()) {
        let g = act("g", u.clone());
        let f = act("f", u.iter().zip(&bump).map(|(a, b)| a + b).collect());
        let vf = criterion_value(&f, &set, &spec).unwrap().value;
        let vg = criterion_value(&g, &set, &spec).unwrap().value;
        prop_assert!(vf >= vg - TOL);
        prop_assert!(dominance(&f, &g, &set, &spec).unwrap().weakly_dominates());
    }

    #[test]
    fn hull_is_at_most_extreme_points(set in model_set(3, HullMode::ExtremePointsOnly), u in utils(3), lambda in 0.1f64..5.0) {
        let f = act("f", u);
        let spec = DivergenceSpec::gini(lambda).unwrap();
        let extreme = criterion_value(&f, &set, &spec).unwrap().value;
        let hull = criterion_value(&f, &set.clone().with_hull_mode(HullMode::ConvexHull), &spec).unwrap().value;
        prop_assert!(hull <= extreme + TOL);
    }

    #[test]
    fn weak_dominance_is_transitive(
        set in model_set(2, HullMode::ExtremePointsOnly),
        spec in spec(),
        u in utils(2),
        k1 in -0.5f64..0.5,
        k2 in -0.5f64..0.5,
        swap in proptest::collection::vec(-0.1f64..0.1, 2),
    ) {
        let f = act("f", u.clone());
        let g = f.translated(-k1.abs()).unwrap().renamed("g");
        let h = act("h", g.utils().iter().zip(&swap).map(|(x, s)| x - k2.abs() + s).collect());
        let fg = dominance(&f, &g, &set, &spec).unwrap().weakly_dominates();
        let gh = dominance(&g, &h, &set, &spec).unwrap().weakly_dominates();
        let fh = dominance(&f, &h, &set, &spec).unwrap();
        if fg && gh {
            // Each link holds within the tolerance, so the composite within twice it.
            prop_assert!(fh.uniform_gap >= -2.0 * TOL);
        }
    }

    #[test]
    fn indicator_dominance_is_unanimity(set in model_set(3, HullMode::ExtremePointsOnly), u in utils(3), v in utils(3)) {
        let f = act("f", u.clone());
        let g = act("g", v.clone());
        let unanimous = set.models().iter().all(|q| q.expectation(&u).unwrap() >= q.expectation(&v).unwrap() - TOL);
        let verdict = dominance(&f, &g, &set, &DivergenceSpec::indicator()).unwrap();
        prop_assert_eq!(verdict.weakly_dominates(), unanimous);
    }

    #[test]
    fn index_is_below_every_member_penalty(set in model_set(3, HullMode::ExtremePointsOnly), p in model(3), lambda in 0.1f64..5.0) {
        for spec in [DivergenceSpec::relative_entropy(lambda).unwrap(), DivergenceSpec::gini(lambda).unwrap()] {
            let index = misspecification_index(&p, &set, &spec).unwrap();
            for q in set.models() {
                prop_assert!(index <= penalty(&p, q, &spec).unwrap());
            }
            let hull = misspecification_index(&p, &set.clone().with_hull_mode(HullMode::ConvexHull), &spec).unwrap();
            prop_assert!(hull <= index + TOL);
        }
    }

    #[test]
    fn removing_strongly_dominated_acts_keeps_the_value(
        set in model_set(3, HullMode::ExtremePointsOnly),
        spec in spec(),
        rows in proptest::collection::vec(utils(3), 2..5),
        drop in 0.01f64..1.0,
    ) {
        let mut acts: Vec<Act> = rows.into_iter().enumerate().map(|(i, u)| act(&format!("a{i}"), u)).collect();
        acts.push(acts[0].translated(-drop).unwrap().renamed("dominated"));
        let problem = DecisionProblem::with_indexed_states(acts.clone(), set.clone(), spec.clone()).unwrap();
        let report = solve(&problem).unwrap();
        prop_assert!(!report.weakly_admissible.contains(&"dominated".to_string()));
        acts.pop();
        let trimmed = DecisionProblem::with_indexed_states(acts, set, spec).unwrap();
        prop_assert_eq!(trimmed.value().unwrap(), report.value);
        prop_assert!(restricted_value_check(&problem).unwrap());
    }

    #[test]
    fn sweep_matches_direct_evaluation(set in model_set(3, HullMode::ExtremePointsOnly), u in utils(3), mut lambdas in proptest::collection::vec(0.05f64..50.0, 1..5)) {
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        let f = act("f", u);
        let phi = PhiFunction::gini();
        let grid: Vec<Lambda> = lambdas.iter().map(|&l| Lambda::Finite(l)).chain([Lambda::Infinite]).collect();
        for (lambda, value) in lambda_sweep(&f, &set, &phi, &grid).unwrap() {
            let spec = DivergenceSpec::new(phi.clone(), lambda).unwrap();
            prop_assert_eq!(value.to_bits(), criterion_value(&f, &set, &spec).unwrap().value.to_bits());
        }
    }

    #[test]
    fn documents_round_trip(set in model_set(3, HullMode::ConvexHull), rows in proptest::collection::vec(utils(3), 1..4), spec in spec()) {
        let acts = rows.into_iter().enumerate().map(|(i, u)| act(&format!("act {i}"), u)).collect();
        let problem = DecisionProblem::with_indexed_states(acts, set, spec).unwrap();
        let text = emit_problem(&problem).unwrap();
        let again = parse_problem(&text).unwrap();
        for (a, b) in again.models().models().iter().zip(problem.models().models()) {
            for (x, y) in a.weights().iter().zip(b.weights()) {
                // 15 significant digits or better.
                prop_assert!((x - y).abs() <= 1e-15 * y.abs().max(1e-300), "{x} vs {y}");
            }
        }
        prop_assert_eq!(again.models().labels(), problem.models().labels());
        prop_assert_eq!(again.models().hull_mode(), problem.models().hull_mode());
        prop_assert_eq!(again.acts(), problem.acts());
        prop_assert_eq!(again.spec().kind_str(), problem.spec().kind_str());
        prop_assert_eq!(again.spec().lambda(), problem.spec().lambda());
        prop_assert_eq!(emit_problem(&again).unwrap(), text);
    }
}
