use nalgebra::{DMatrix, DVector};

use super::PlantError;
use crate::model::{Line, MicrogridSpec, ModelError, Network};

const MISMATCH_TOLERANCE: f64 = 1e-9;
const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct AcFlow {
    /// Bus voltage angles in rad, zero at the reference bus.
    pub angles: Vec<f64>,
    /// Active power per line measured at its `from` bus.
    pub flows: Vec<f64>,
    /// Injection the slack (storage) bus must supply.
    pub slack_injection: f64,
    /// Largest mismatch before each Newton update and after the last one.
    pub mismatches: Vec<f64>,
}

fn lines_of(spec: &MicrogridSpec) -> Result<(&[Line], &[f64], usize, &[usize], &[usize], usize), PlantError> {
    match &spec.network {
        Network::Lines {
            buses,
            unit_buses,
            load_buses,
            voltages,
            lines,
            reference_bus,
        } => Ok((lines, voltages, *buses, unit_buses, load_buses, *reference_bus)),
        _ => Err(PlantError::Model(ModelError::Topology(
            "AC power flow needs a line-level network".into(),
        ))),
    }
}

/// Net active injection per bus from unit powers `[p_t; p_s; p_r]` and loads.
pub fn bus_injections(p: &[f64], w_d: &[f64], spec: &MicrogridSpec) -> Result<Vec<f64>, PlantError> {
    let (_, _, buses, unit_buses, load_buses, _) = lines_of(spec)?;
    let mut inj = vec![0.0; buses];
    for (k, &b) in unit_buses.iter().enumerate() {
        inj[b] += p[k];
    }
    for (k, &b) in load_buses.iter().enumerate() {
        inj[b] -= w_d[k];
    }
    Ok(inj)
}

/// Sending-end active power of `line` and its angle derivative.
fn line_power(line: &Line, v: &[f64], theta: &[f64], reverse: bool) -> (f64, f64) {
    let (i, j) = if reverse {
        (line.to, line.from)
    } else {
        (line.from, line.to)
    };
    let t = theta[i] - theta[j];
    let vv = v[i] * v[j];
    let p = v[i] * v[i] * line.g - vv * (line.g * t.cos() + line.b * t.sin());
    let dp = vv * (line.g * t.sin() - line.b * t.cos());
    (p, dp)
}

fn injections_at(lines: &[Line], v: &[f64], theta: &[f64], buses: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut p = vec![0.0; buses];
    let mut jac = DMatrix::zeros(buses, buses);
    for l in lines {
        for reverse in [false, true] {
            let (i, j) = if reverse { (l.to, l.from) } else { (l.from, l.to) };
            let (pij, d) = line_power(l, v, theta, reverse);
            p[i] += pij;
            jac[(i, i)] += d;
            jac[(i, j)] -= d;
        }
    }
    (p, jac)
}

/// Newton–Raphson solve of the active-power flow equations with fixed
/// voltage magnitudes. The storage bus balances the injections.
pub fn ac_power_flow(injections: &[f64], spec: &MicrogridSpec) -> Result<AcFlow, PlantError> {
    let d = spec.dims();
    let (lines, voltages, buses, unit_buses, _, reference) = lines_of(spec)?;
    if injections.len() != buses {
        return Err(PlantError::Model(ModelError::Dimension {
            what: "bus injections",
            expected: buses,
            got: injections.len(),
        }));
    }
    let slack = unit_buses[d.t];
    let unknowns: Vec<usize> = (0..buses).filter(|&b| b != reference).collect();
    let equations: Vec<usize> = (0..buses).filter(|&b| b != slack).collect();
    let mut theta = vec![0.0; buses];
    let mut mismatches = Vec::new();
    for _ in 0..=MAX_ITERATIONS {
        let (p, jac) = injections_at(lines, voltages, &theta, buses);
        let f = DVector::from_iterator(
            equations.len(),
            equations.iter().map(|&b| p[b] - injections[b]),
        );
        let worst = f.amax();
        mismatches.push(worst);
        if worst < MISMATCH_TOLERANCE {
            let flows = lines
                .iter()
                .map(|l| line_power(l, voltages, &theta, false).0)
                .collect();
            return Ok(AcFlow {
                angles: theta,
                flows,
                slack_injection: p[slack],
                mismatches,
            });
        }
        if mismatches.len() > MAX_ITERATIONS {
            break;
        }
        let j = jac.select_rows(&equations).select_columns(&unknowns);
        let Some(step) = j.lu().solve(&f) else {
            break;
        };
        if !step.iter().all(|s| s.is_finite()) {
            break;
        }
        for (k, &b) in unknowns.iter().enumerate() {
            theta[b] -= step[k];
        }
    }
    Err(PlantError::PowerFlowDivergence {
        iterations: mismatches.len().saturating_sub(1),
        mismatch: mismatches.last().copied().unwrap_or(f64::NAN),
    })
}
