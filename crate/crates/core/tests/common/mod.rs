#![allow(dead_code)]

use rand::Rng;
use riskmpc::cost::{node_cost, CostWeights};
use riskmpc::model::{
    case_study_spec, forward_q, state_update, ControlInput, Disturbance, MicrogridSpec, Network,
};
use riskmpc::ocp::{build_problem, evaluate_nested_risk, BuildOptions, RiskAverseProblem};
use riskmpc::risk::RiskLevel;
use riskmpc::uncertainty::ScenarioTree;

/// Tree with one renewable and one load column. `children[k]` bounds the
/// number of children of each stage-`k` node.
pub fn random_tree(rng: &mut impl Rng, children: &[usize]) -> ScenarioTree {
    let mut ancestor = vec![None];
    let mut probability = vec![1.0];
    let mut values = vec![Vec::new()];
    let mut layer = vec![0usize];
    for &max in children {
        let mut next = Vec::new();
        for &parent in &layer {
            let n = rng.gen_range(1..=max);
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for r in raw {
                next.push(ancestor.len());
                ancestor.push(Some(parent));
                probability.push(probability[parent] * r / total);
                values.push(vec![rng.gen_range(0.0..2.0), rng.gen_range(0.4..1.6)]);
            }
        }
        layer = next;
    }
    ScenarioTree::new(1, 1, ancestor, probability, values).unwrap()
}

pub fn random_spec(rng: &mut impl Rng) -> MicrogridSpec {
    let mut spec = case_study_spec();
    spec.p_t_min = vec![rng.gen_range(0.1..0.5)];
    spec.p_t_max = vec![rng.gen_range(0.8..1.4)];
    spec.x_max = vec![rng.gen_range(2.0..8.0)];
    spec.x_soft_min = vec![0.1 * spec.x_max[0]];
    spec.x_soft_max = vec![0.9 * spec.x_max[0]];
    spec.chi_t = vec![rng.gen_range(0.5..2.0)];
    spec.chi_s = vec![rng.gen_range(0.5..2.0)];
    if rng.gen_bool(0.5) {
        spec.network = Network::SingleBus;
    }
    spec
}

pub fn random_weights(rng: &mut impl Rng) -> CostWeights {
    let mut w = CostWeights::case_study();
    w.c_t = vec![rng.gen_range(0.05..0.5)];
    w.c_t_prime = vec![rng.gen_range(0.2..1.5)];
    w.c_t_double_prime = vec![rng.gen_range(0.01..0.3)];
    w.c_sw = vec![rng.gen_range(0.01..0.5)];
    w.c_r = vec![rng.gen_range(0.1..2.0)];
    w.c_s = vec![rng.gen_range(1.0..20.0)];
    w.gamma = rng.gen_range(0.8..0.99);
    w
}

/// Random problem on a random tree with at most `max_binaries` binaries.
pub fn micro_instance(
    rng: &mut impl Rng,
    children: &[usize],
    max_nodes: usize,
    max_binaries: usize,
) -> RiskAverseProblem {
    loop {
        let tree = random_tree(rng, children);
        if tree.len() > max_nodes {
            continue;
        }
        let spec = random_spec(rng);
        let weights = random_weights(rng);
        let alpha = RiskLevel::new([0.0, 0.3, 0.5, 1.0, rng.gen_range(0.0..1.0)][rng.gen_range(0..5)])
            .unwrap();
        let x0 = vec![rng.gen_range(0.2..0.8) * spec.x_max[0]];
        let prev = vec![if rng.gen_bool(0.5) { 1.0 } else { 0.0 }];
        for relax_stage in (0..=children.len()).rev() {
            let opts = BuildOptions {
                relax_stage,
                ..BuildOptions::default()
            };
            let p = build_problem(&tree, &spec, &weights, alpha, &x0, &prev, opts).unwrap();
            if p.binaries.len() <= max_binaries {
                return p;
            }
        }
    }
}

/// Nested risk of a random input tree that satisfies every hard row, or
/// `None` when the sample violates something.
pub fn random_feasible_value(p: &RiskAverseProblem, rng: &mut impl Rng) -> Option<f64> {
    let spec = &p.spec;
    let tree = &p.tree;
    let mut v: Vec<Option<ControlInput>> = vec![None; tree.len()];
    let mut x = vec![p.x0.clone(); tree.len()];
    let mut z = vec![0.0; tree.len()];
    for i in 0..tree.len() {
        if tree.is_leaf(i) {
            continue;
        }
        let on = rng.gen_bool(0.7);
        let binary = tree.stage(i) < p.options.relax_stage;
        let delta = if on {
            if binary { 1.0 } else { rng.gen_range(0.3..=1.0) }
        } else {
            0.0
        };
        let input = ControlInput {
            u_t: vec![if on { rng.gen_range(spec.p_t_min[0]..spec.p_t_max[0]) } else { 0.0 }],
            u_s: vec![rng.gen_range(-0.5..0.5)],
            u_r: vec![rng.gen_range(0.0..2.0)],
            delta_t: vec![delta],
        };
        for &j in tree.children(i) {
            let w = tree.disturbance(j);
            let out = forward_q(&input, &w, spec).ok()?;
            if !out.violations.is_empty() {
                return None;
            }
            let xj = state_update(&x[i], &out.aux, spec);
            if xj.iter().zip(&spec.x_max).any(|(x, hi)| *x < 0.0 || x > hi) {
                return None;
            }
            let prev = match tree.ancestor(i) {
                Some(g) => v[g].as_ref().unwrap().delta_t.clone(),
                None => p.delta_prev.clone(),
            };
            z[j] = node_cost(tree.stage(j), &xj, &input, &prev, &out.aux, spec, &p.weights);
            x[j] = xj;
        }
        v[i] = Some(input);
    }
    Some(evaluate_nested_risk(tree, &z, p.alpha).unwrap())
}

pub fn disturbance(w_r: f64, w_d: f64) -> Disturbance {
    Disturbance {
        w_r: vec![w_r],
        w_d: vec![w_d],
    }
}
