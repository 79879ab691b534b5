use super::{
    assemble_constraints, AuxiliaryVars, ControlInput, Disturbance, MicrogridSpec, ModelError,
    RowKind,
};

/// Result of the implicit map `q = f_q(v, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutcome {
    pub aux: AuxiliaryVars,
    /// Inequality row classes that the resulting point violates.
    pub violations: Vec<RowKind>,
}

const ROW_TOLERANCE: f64 = 1e-9;

/// Auxiliary variables induced by inputs `v` under disturbance `w`.
///
/// Limits are not enforced here; violated rows are reported instead.
pub fn forward_q(
    v: &ControlInput,
    w: &Disturbance,
    spec: &MicrogridSpec,
) -> Result<ForwardOutcome, ModelError> {
    let d = spec.dims();
    v.check(d)?;
    w.check(d)?;

    let p_r: Vec<f64> = v.u_r.iter().zip(&w.w_r).map(|(u, w)| u.min(*w)).collect();
    // δ_r = 1 selects the weather-limited branch p_r = w_r.
    let delta_r: Vec<f64> = v
        .u_r
        .iter()
        .zip(&w.w_r)
        .map(|(u, w)| if u >= w { 1.0 } else { 0.0 })
        .collect();

    let enabled: Vec<bool> = v.delta_t.iter().map(|&dl| dl > 0.0).collect();
    let mut residual: f64 = w.w_d.iter().sum::<f64>() - p_r.iter().sum::<f64>();
    residual -= v.u_s.iter().sum::<f64>();
    let mut capacity: f64 = spec.chi_s.iter().sum();
    for i in 0..d.t {
        if enabled[i] {
            residual -= v.u_t[i];
            capacity += spec.chi_t[i] * v.delta_t[i];
        }
    }
    if !(capacity > 0.0) {
        return Err(ModelError::InfeasibleSharing);
    }
    let rho = residual / capacity;

    let p_t = (0..d.t)
        .map(|i| {
            if enabled[i] {
                v.u_t[i] + rho * spec.chi_t[i] * v.delta_t[i]
            } else {
                0.0
            }
        })
        .collect();
    let p_s = v
        .u_s
        .iter()
        .zip(&spec.chi_s)
        .map(|(u, chi)| u + rho * chi)
        .collect();
    let aux = AuxiliaryVars {
        p_t,
        p_s,
        p_r,
        delta_r,
        rho,
    };

    let sys = assemble_constraints(spec, w)?;
    let l = sys.layout;
    let mut z = vec![0.0; l.ncols()];
    for i in 0..d.t {
        z[l.u_t(i)] = v.u_t[i];
        z[l.delta_t(i)] = v.delta_t[i];
        z[l.p_t(i)] = aux.p_t[i];
    }
    for i in 0..d.s {
        z[l.u_s(i)] = v.u_s[i];
        z[l.p_s(i)] = aux.p_s[i];
    }
    for i in 0..d.r {
        z[l.u_r(i)] = v.u_r[i];
        z[l.p_r(i)] = aux.p_r[i];
        z[l.delta_r(i)] = aux.delta_r[i];
        z[l.w_r(i)] = w.w_r[i];
    }
    for i in 0..d.d {
        z[l.w_d(i)] = w.w_d[i];
    }
    z[l.rho()] = rho;
    let violations = sys.violated_rows(&z, ROW_TOLERANCE);
    Ok(ForwardOutcome { aux, violations })
}

/// Nominal storage dynamics `x⁺ = x − Ts p_s`.
pub fn state_update(x: &[f64], q: &AuxiliaryVars, spec: &MicrogridSpec) -> Vec<f64> {
    x.iter()
        .zip(&q.p_s)
        .map(|(x, p)| x - spec.ts * p)
        .collect()
}
