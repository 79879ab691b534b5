use super::PlantParams;

/// Lossy storage update with separate charge and discharge efficiencies.
/// Stored energy is floored at zero; the second vector flags that floor.
pub fn storage_step(x: &[f64], p_s: &[f64], params: &PlantParams, ts: f64) -> (Vec<f64>, Vec<bool>) {
    let mut depleted = vec![false; x.len()];
    let next = (0..x.len())
        .map(|i| {
            let gain = if p_s[i] <= 0.0 {
                params.eta_c[i]
            } else {
                1.0 / params.eta_d[i]
            };
            let raw = x[i] - ts * gain * p_s[i] - params.x_sd[i];
            if raw < 0.0 {
                depleted[i] = true;
                0.0
            } else {
                raw
            }
        })
        .collect();
    (next, depleted)
}
