use super::PlantError;
use crate::model::{forward_q, AuxiliaryVars, ControlInput, Disturbance, MicrogridSpec};

const BALANCE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub aux: AuxiliaryVars,
    /// Per grid-forming unit (conventional, then storage): clamped at a limit.
    pub saturated: Vec<bool>,
}

/// Realized unit powers under the true disturbance. Proportional sharing is
/// applied first; units pushed past a limit are pinned there and the rest
/// of the imbalance is re-shared among the remaining units.
pub fn realize_power(
    v: &ControlInput,
    w: &Disturbance,
    spec: &MicrogridSpec,
) -> Result<Realization, PlantError> {
    let d = spec.dims();
    // The plant operates switches as on/off.
    let mut v = v.clone();
    for dl in &mut v.delta_t {
        *dl = if *dl >= 0.5 { 1.0 } else { 0.0 };
    }
    let mut aux = forward_q(&v, w, spec)?.aux;

    let n = d.t + d.s;
    let on = |i: usize| i >= d.t || v.delta_t[i] > 0.0;
    let limits = |i: usize| {
        if i < d.t {
            (spec.p_t_min[i], spec.p_t_max[i])
        } else {
            (spec.p_s_min[i - d.t], spec.p_s_max[i - d.t])
        }
    };
    let setpoint = |i: usize| if i < d.t { v.u_t[i] } else { v.u_s[i - d.t] };
    let gain = |i: usize| if i < d.t { spec.chi_t[i] } else { spec.chi_s[i - d.t] };
    let get = |a: &AuxiliaryVars, i: usize| if i < d.t { a.p_t[i] } else { a.p_s[i - d.t] };
    let set = |a: &mut AuxiliaryVars, i: usize, p: f64| {
        if i < d.t {
            a.p_t[i] = p
        } else {
            a.p_s[i - d.t] = p
        }
    };

    let mut saturated = vec![false; n];
    for _ in 0..n {
        let newly: Vec<usize> = (0..n)
            .filter(|&i| on(i) && !saturated[i])
            .filter(|&i| {
                let (lo, hi) = limits(i);
                let p = get(&aux, i);
                p < lo || p > hi
            })
            .collect();
        if newly.is_empty() {
            break;
        }
        for &i in &newly {
            let (lo, hi) = limits(i);
            let clamped = get(&aux, i).clamp(lo, hi);
            set(&mut aux, i, clamped);
            saturated[i] = true;
        }
        let pool: Vec<usize> = (0..n).filter(|&i| on(i) && !saturated[i]).collect();
        let fixed: f64 = (0..n)
            .filter(|&i| on(i) && saturated[i])
            .map(|i| get(&aux, i))
            .sum::<f64>()
            + aux.p_r.iter().sum::<f64>();
        let residual = w.w_d.iter().sum::<f64>() - fixed - pool.iter().map(|&i| setpoint(i)).sum::<f64>();
        if pool.is_empty() {
            if residual.abs() > BALANCE_TOLERANCE {
                return Err(PlantError::Blackout {
                    imbalance: residual,
                });
            }
            break;
        }
        let rho = residual / pool.iter().map(|&i| gain(i)).sum::<f64>();
        aux.rho = rho;
        for &i in &pool {
            set(&mut aux, i, setpoint(i) + rho * gain(i));
        }
    }
    // A final violation after T+S passes means every unit is pinned.
    let leftover = w.w_d.iter().sum::<f64>() - aux.powers().iter().sum::<f64>();
    if leftover.abs() > BALANCE_TOLERANCE * (1.0 + w.w_d.iter().sum::<f64>()) {
        return Err(PlantError::Blackout {
            imbalance: leftover,
        });
    }
    Ok(Realization { aux, saturated })
}
