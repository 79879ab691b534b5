use super::{Result, ScenarioFan, ScenarioTree, UncertaintyError};

/// Euclidean distance between the remainders (steps `k..`) of two trajectories.
fn tail_distance(fan: &ScenarioFan, a: usize, b: usize, k: usize) -> f64 {
    let from = k * fan.width();
    fan.trajectory(a)[from..]
        .iter()
        .zip(&fan.trajectory(b)[from..])
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Greedy forward selection of up to `limit` representatives among `members`.
///
/// Returns the representatives and, for each member, the index into them of
/// its nearest representative.
fn select(
    fan: &ScenarioFan,
    members: &[usize],
    limit: usize,
    k: usize,
) -> (Vec<usize>, Vec<usize>) {
    let n = members.len();
    let p = fan.probabilities();
    let mut dist = vec![0.0; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let v = tail_distance(fan, members[a], members[b], k);
            dist[a * n + b] = v;
            dist[b * n + a] = v;
        }
    }
    let mut nearest = vec![f64::INFINITY; n];
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < limit {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..n {
            if chosen.contains(&c) {
                continue;
            }
            let cost: f64 = (0..n)
                .map(|m| p[members[m]] * nearest[m].min(dist[m * n + c]))
                .sum();
            if best.map_or(true, |(_, b)| cost < b) {
                best = Some((c, cost));
            }
        }
        let Some((c, cost)) = best else { break };
        let current: f64 = if chosen.is_empty() {
            f64::INFINITY
        } else {
            (0..n).map(|m| p[members[m]] * nearest[m]).sum()
        };
        if !(cost < current) {
            break;
        }
        chosen.push(c);
        for m in 0..n {
            nearest[m] = nearest[m].min(dist[m * n + c]);
        }
    }
    // Children are listed by ascending scenario index.
    chosen.sort_by_key(|&c| members[c]);
    let assignment = (0..n)
        .map(|m| {
            let mut best = 0;
            for (j, &c) in chosen.iter().enumerate() {
                if dist[m * n + c] < dist[m * n + chosen[best]] {
                    best = j;
                }
            }
            best
        })
        .collect();
    (chosen.into_iter().map(|c| members[c]).collect(), assignment)
}

/// Compresses a fan into a tree with at most `branching[j]` children per
/// node at stage `j`.
pub fn reduce_to_tree(fan: &ScenarioFan, branching: &[usize]) -> Result<ScenarioTree> {
    if fan.is_empty() {
        return Err(UncertaintyError::Empty("scenario fan"));
    }
    if branching.len() != fan.horizon() {
        return Err(UncertaintyError::Dimension {
            what: "branching limits",
            expected: fan.horizon(),
            got: branching.len(),
        });
    }
    if branching.contains(&0) {
        return Err(UncertaintyError::Config(
            "branching limits must be at least 1".into(),
        ));
    }
    let p = fan.probabilities();
    let mut ancestor = vec![None];
    let mut probability = vec![1.0];
    let mut values = vec![Vec::new()];
    let mut frontier: Vec<(usize, Vec<usize>)> = vec![(0, (0..fan.len()).collect())];

    for (k, &limit) in branching.iter().enumerate() {
        let mut next = Vec::new();
        for (node, members) in &frontier {
            let (reps, assignment) = select(fan, members, limit, k);
            let mut groups = vec![Vec::new(); reps.len()];
            for (m, &g) in members.iter().zip(&assignment) {
                groups[g].push(*m);
            }
            for (rep, group) in reps.into_iter().zip(groups) {
                let id = ancestor.len();
                ancestor.push(Some(*node));
                probability.push(group.iter().map(|m| p[*m]).sum());
                values.push(fan.value(rep, k).to_vec());
                next.push((id, group));
            }
        }
        frontier = next;
    }
    ScenarioTree::new(fan.r(), fan.d(), ancestor, probability, values)
}

/// Transport distance from the fan to the tree's scenario paths: each fan
/// scenario moves its mass to the nearest path.
pub fn kantorovich_distance(fan: &ScenarioFan, tree: &ScenarioTree) -> Result<f64> {
    if fan.horizon() != tree.horizon() || fan.width() != tree.r() + tree.d() {
        return Err(UncertaintyError::Dimension {
            what: "fan/tree horizon",
            expected: fan.horizon(),
            got: tree.horizon(),
        });
    }
    let paths: Vec<Vec<f64>> = tree.leaves().map(|l| tree.path_values(l)).collect();
    let mut total = 0.0;
    for m in 0..fan.len() {
        let t = fan.trajectory(m);
        let best = paths
            .iter()
            .map(|path| {
                path.iter()
                    .zip(t)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        total += fan.probabilities()[m] * best;
    }
    Ok(total)
}
