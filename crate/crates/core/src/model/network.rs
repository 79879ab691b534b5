use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Dims, MicrogridSpec, ModelError};

/// A transmission line between two buses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series susceptance in pu (negative for inductive lines).
    pub b: f64,
    /// Series conductance in pu; ignored by the control model.
    #[serde(default)]
    pub g: f64,
    pub p_min: f64,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Network {
    /// All units and loads on one bus; no line constraints.
    SingleBus,
    /// Explicit flow matrix over `[p; w_d]` with line limits.
    FlowMatrix {
        f: Vec<Vec<f64>>,
        p_e_min: Vec<f64>,
        p_e_max: Vec<f64>,
    },
    /// Bus/line description from which the DC flow matrix is derived.
    Lines {
        buses: usize,
        /// Bus of each unit in the order conventional, storage, renewable.
        unit_buses: Vec<usize>,
        load_buses: Vec<usize>,
        voltages: Vec<f64>,
        lines: Vec<Line>,
        /// Angle reference of the DC model.
        reference_bus: usize,
    },
}

impl Network {
    /// Four-bus case-study grid: conventional, storage and wind units on
    /// their own buses, a single load, and four identical lines.
    pub fn case_study() -> Self {
        let line = |from, to| Line {
            from,
            to,
            b: -20.0,
            g: 2.0,
            p_min: -1.3,
            p_max: 1.3,
        };
        Network::Lines {
            buses: 4,
            unit_buses: vec![0, 1, 2],
            load_buses: vec![3],
            voltages: vec![1.0; 4],
            lines: vec![line(0, 3), line(2, 1), line(1, 3), line(2, 3)],
            reference_bus: 3,
        }
    }

    pub fn line_count(&self) -> usize {
        match self {
            Network::SingleBus => 0,
            Network::FlowMatrix { f, .. } => f.len(),
            Network::Lines { lines, .. } => lines.len(),
        }
    }

    pub fn line_limits(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Network::SingleBus => (vec![], vec![]),
            Network::FlowMatrix {
                p_e_min, p_e_max, ..
            } => (p_e_min.clone(), p_e_max.clone()),
            Network::Lines { lines, .. } => (
                lines.iter().map(|l| l.p_min).collect(),
                lines.iter().map(|l| l.p_max).collect(),
            ),
        }
    }

    pub(super) fn validate(&self, d: Dims) -> Result<(), ModelError> {
        match self {
            Network::SingleBus => Ok(()),
            Network::FlowMatrix {
                f,
                p_e_min,
                p_e_max,
            } => {
                for row in f {
                    super::check_len("flow matrix row", d.units() + d.d, row.len())?;
                }
                super::check_len("p_e_min", f.len(), p_e_min.len())?;
                super::check_len("p_e_max", f.len(), p_e_max.len())?;
                check_limits(p_e_min, p_e_max)
            }
            Network::Lines {
                buses,
                unit_buses,
                load_buses,
                voltages,
                lines,
                reference_bus,
            } => {
                super::check_len("unit_buses", d.units(), unit_buses.len())?;
                super::check_len("load_buses", d.d, load_buses.len())?;
                super::check_len("voltages", *buses, voltages.len())?;
                let in_range = |b: &usize| *b < *buses;
                if !unit_buses.iter().chain(load_buses).all(in_range)
                    || !in_range(reference_bus)
                    || !lines.iter().all(|l| in_range(&l.from) && in_range(&l.to))
                {
                    return Err(ModelError::Topology("bus index out of range".into()));
                }
                if let Some(l) = lines.iter().find(|l| l.from == l.to) {
                    return Err(ModelError::Topology(format!("self-loop at bus {}", l.from)));
                }
                if let Some(v) = voltages.iter().find(|v| !(**v > 0.0)) {
                    return Err(super::invalid("voltage_positive", format!("{v}")));
                }
                if let Some(l) = lines.iter().find(|l| l.b == 0.0 || !l.b.is_finite()) {
                    return Err(super::invalid(
                        "line_susceptance_nonzero",
                        format!("line {}-{}", l.from, l.to),
                    ));
                }
                let (lo, hi) = self.line_limits();
                check_limits(&lo, &hi)?;
                if !connected(*buses, lines) {
                    return Err(ModelError::Topology("network is not connected".into()));
                }
                Ok(())
            }
        }
    }
}

fn check_limits(lo: &[f64], hi: &[f64]) -> Result<(), ModelError> {
    match lo.iter().zip(hi).find(|(l, h)| !(l <= h)) {
        Some((l, h)) => Err(super::invalid("line_limits_ordered", format!("[{l}, {h}]"))),
        None => Ok(()),
    }
}

fn connected(buses: usize, lines: &[Line]) -> bool {
    if buses == 0 {
        return false;
    }
    let mut seen = vec![false; buses];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(b) = stack.pop() {
        for l in lines {
            let other = if l.from == b {
                l.to
            } else if l.to == b {
                l.from
            } else {
                continue;
            };
            if !seen[other] {
                seen[other] = true;
                stack.push(other);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Line-by-bus incidence matrix (`+1` at the sending bus, `-1` at the receiving bus).
pub fn incidence(buses: usize, lines: &[Line]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(lines.len(), buses);
    for (e, l) in lines.iter().enumerate() {
        a[(e, l.from)] = 1.0;
        a[(e, l.to)] = -1.0;
    }
    a
}

/// DC flow matrix `F` mapping `[p; w_d]` to line flows.
pub fn flow_matrix(spec: &MicrogridSpec) -> Result<DMatrix<f64>, ModelError> {
    let d = spec.dims();
    let cols = d.units() + d.d;
    match &spec.network {
        Network::SingleBus => Ok(DMatrix::from_fn(1, cols, |_, j| {
            if j < d.units() {
                1.0
            } else {
                -1.0
            }
        })),
        Network::FlowMatrix { f, .. } => {
            for row in f {
                super::check_len("flow matrix row", cols, row.len())?;
            }
            Ok(DMatrix::from_fn(f.len(), cols, |i, j| f[i][j]))
        }
        Network::Lines {
            buses,
            unit_buses,
            load_buses,
            voltages,
            lines,
            reference_bus,
        } => {
            if !connected(*buses, lines) {
                return Err(ModelError::Topology("network is not connected".into()));
            }
            let ptdf = bus_ptdf(*buses, voltages, lines, *reference_bus)?;
            let mut f = DMatrix::zeros(lines.len(), cols);
            for (j, &bus) in unit_buses.iter().enumerate() {
                f.set_column(j, &ptdf.column(bus));
            }
            for (j, &bus) in load_buses.iter().enumerate() {
                f.set_column(d.units() + j, &(-ptdf.column(bus)));
            }
            Ok(f)
        }
    }
}

/// Line flows per unit injection at each bus, withdrawn at the reference.
fn bus_ptdf(
    buses: usize,
    voltages: &[f64],
    lines: &[Line],
    reference: usize,
) -> Result<DMatrix<f64>, ModelError> {
    let b_tilde: Vec<f64> = lines
        .iter()
        .map(|l| -voltages[l.from] * voltages[l.to] * l.b)
        .collect();
    let a = incidence(buses, lines);
    let diag = DMatrix::from_diagonal(&DVector::from_vec(b_tilde));
    let laplacian = a.transpose() * &diag * &a;
    let keep: Vec<usize> = (0..buses).filter(|&b| b != reference).collect();
    let reduced = laplacian.select_rows(&keep).select_columns(&keep);
    let inv = reduced
        .try_inverse()
        .ok_or_else(|| ModelError::Topology("singular reduced susceptance matrix".into()))?;
    let mut theta = DMatrix::zeros(buses, buses);
    for (ri, &bi) in keep.iter().enumerate() {
        for (rj, &bj) in keep.iter().enumerate() {
            theta[(bi, bj)] = inv[(ri, rj)];
        }
    }
    Ok(diag * a * theta)
}
