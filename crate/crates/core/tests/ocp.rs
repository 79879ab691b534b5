mod common;

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use riskmpc::cost::CostWeights;
use riskmpc::model::case_study_spec;
use riskmpc::ocp::*;
use riskmpc::risk::RiskLevel;
use riskmpc::uncertainty::ScenarioTree;

use common::*;

fn backend() -> ClarabelBackend {
    ClarabelBackend::default()
}

fn small_tree() -> ScenarioTree {
    ScenarioTree::new(
        1,
        1,
        vec![None, Some(0), Some(0), Some(1), Some(2)],
        vec![1.0, 0.4, 0.6, 0.4, 0.6],
        vec![
            vec![],
            vec![1.8, 1.0],
            vec![0.2, 1.3],
            vec![1.5, 0.9],
            vec![0.0, 1.5],
        ],
    )
    .unwrap()
}

fn case_problem(alpha: f64, formulation: Formulation) -> RiskAverseProblem {
    build_problem(
        &small_tree(),
        &case_study_spec(),
        &CostWeights::case_study(),
        RiskLevel::new(alpha).unwrap(),
        &[3.5],
        &[1.0],
        BuildOptions {
            formulation,
            ..BuildOptions::default()
        },
    )
    .unwrap()
}

#[test]
fn registry_lists_each_binary_once() {
    let p = case_problem(0.5, Formulation::NestedRisk);
    let set: HashSet<usize> = p.binaries.iter().copied().collect();
    assert_eq!(set.len(), p.binaries.len());
    // Root and two stage-1 switch states plus four renewable modes.
    assert_eq!(p.binaries.len(), 7);
    for &j in &p.binaries {
        assert_eq!((p.program.lower[j], p.program.upper[j]), (0.0, 1.0));
    }
}

#[test]
fn relax_stage_drops_switch_binaries() {
    let p = build_problem(
        &small_tree(),
        &case_study_spec(),
        &CostWeights::case_study(),
        RiskLevel::RISK_NEUTRAL,
        &[3.5],
        &[1.0],
        BuildOptions {
            relax_stage: 1,
            ..BuildOptions::default()
        },
    )
    .unwrap();
    assert_eq!(p.binaries.len(), 5);
}

#[test]
fn optimum_is_feasible_and_matches_nested_evaluation() {
    for alpha in [0.0, 0.5, 1.0] {
        let p = case_problem(alpha, Formulation::NestedRisk);
        let r = solve(&p, &backend(), &SolveOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!(p.program.max_violation(&r.x) < 1e-7);
        let z = p.node_costs(&r.x);
        let nested = evaluate_nested_risk(&p.tree, &z, p.alpha).unwrap();
        assert!((nested - r.objective).abs() < 1e-6, "{nested} vs {}", r.objective);
        let d = r.decision.unwrap();
        assert!(d.delta_t[0] == 0.0 || d.delta_t[0] == 1.0);
    }
}

#[test]
fn extreme_levels_match_alternative_formulations() {
    let worst = |f| solve(&case_problem(0.0, f), &backend(), &SolveOptions::default()).unwrap();
    let a = worst(Formulation::NestedRisk);
    let b = worst(Formulation::WorstCasePaths);
    assert!((a.objective - b.objective).abs() < 1e-6 * a.objective.abs().max(1.0));

    let mean = |f| solve(&case_problem(1.0, f), &backend(), &SolveOptions::default()).unwrap();
    let a = mean(Formulation::NestedRisk);
    let b = mean(Formulation::Expectation);
    assert!((a.objective - b.objective).abs() < 1e-6 * a.objective.abs().max(1.0));
}

#[test]
fn branch_and_bound_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let p = micro_instance(&mut rng, &[2, 2], 7, 6);
        let a = solve(&p, &backend(), &SolveOptions::default()).unwrap();
        let b = enumerate_binaries_solve(&p, &backend()).unwrap();
        assert_eq!(a.status == SolveStatus::Infeasible, b.status == SolveStatus::Infeasible);
        if b.status == SolveStatus::Optimal {
            let scale = b.objective.abs().max(1.0);
            assert!((a.objective - b.objective).abs() <= 1e-6 * scale, "{} vs {}", a.objective, b.objective);
        }
    }
}

#[test]
fn stored_energy_outside_bounds_is_infeasible() {
    let p = build_problem(
        &small_tree(),
        &case_study_spec(),
        &CostWeights::case_study(),
        RiskLevel::RISK_NEUTRAL,
        &[7.5],
        &[1.0],
        BuildOptions::default(),
    )
    .unwrap();
    assert!(!p.initial_state_feasible);
    assert_eq!(solve(&p, &backend(), &SolveOptions::default()).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn enumeration_capacity() {
    let path: Vec<f64> = (0..14).flat_map(|k| [0.1 * k as f64, 1.0]).collect();
    let tree = ScenarioTree::chain(1, 1, &path).unwrap();
    let p = build_problem(
        &tree,
        &case_study_spec(),
        &CostWeights::case_study(),
        RiskLevel::RISK_NEUTRAL,
        &[3.5],
        &[1.0],
        BuildOptions::default(),
    )
    .unwrap();
    assert!(p.binaries.len() > 16);
    assert!(matches!(
        enumerate_binaries_solve(&p, &backend()),
        Err(OcpError::Capacity { max: 16, .. })
    ));
}

#[test]
fn deterministic_reports() {
    let p = case_problem(0.5, Formulation::NestedRisk);
    let a = solve(&p, &backend(), &SolveOptions::default()).unwrap();
    let b = solve(&p, &backend(), &SolveOptions::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.binaries, b.binaries);
    assert_eq!(a.nodes, b.nodes);
}

#[test]
fn warm_start_hint_is_accepted() {
    let p = case_problem(0.5, Formulation::NestedRisk);
    let cold = solve(&p, &backend(), &SolveOptions::default()).unwrap();
    let hint = cold.binaries.iter().map(|&b| Some(b)).collect();
    let warm = solve(
        &p,
        &backend(),
        &SolveOptions {
            warm_start: Some(hint),
            ..SolveOptions::default()
        },
    )
    .unwrap();
    assert!((warm.objective - cold.objective).abs() < 1e-7);
    let bad = SolveOptions {
        warm_start: Some(vec![None]),
        ..SolveOptions::default()
    };
    assert!(solve(&p, &backend(), &bad).is_err());
}

#[test]
fn dump_lists_program() {
    let p = case_problem(0.5, Formulation::NestedRisk);
    let mut out = Vec::new();
    write_problem_dump(&p, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with(&format!("# nodes 5 vars {} binaries 7", p.program.num_vars)));
    assert!(text.contains("subject to"));
}
