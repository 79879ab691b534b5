use serde::{Deserialize, Serialize};

use super::{Result, UncertaintyError};

/// Seasonal ARIMA(p,d,q)(P,D,Q)_s model of the deviation of a signal from a
/// deterministic periodic baseline `level + profile[t mod len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalModel {
    pub level: f64,
    #[serde(default)]
    pub profile: Vec<f64>,
    #[serde(default)]
    pub ar: Vec<f64>,
    #[serde(default)]
    pub ma: Vec<f64>,
    #[serde(default)]
    pub seasonal_ar: Vec<f64>,
    #[serde(default)]
    pub seasonal_ma: Vec<f64>,
    #[serde(default)]
    pub d: usize,
    #[serde(default)]
    pub seasonal_d: usize,
    #[serde(default)]
    pub season: usize,
    pub sigma: f64,
}

fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Polynomial in the lag operator from `1 + sign * Σ c_k B^(k·step)`.
fn lag_poly(coeffs: &[f64], step: usize, sign: f64) -> Vec<f64> {
    let mut p = vec![0.0; coeffs.len() * step + 1];
    p[0] = 1.0;
    for (k, c) in coeffs.iter().enumerate() {
        p[(k + 1) * step] = sign * c;
    }
    p
}

/// Full autoregressive and moving-average lag polynomials, both with unit
/// leading coefficient: `a(B) y_t = m(B) ε_t`.
pub fn expand_polynomials(model: &SignalModel) -> (Vec<f64>, Vec<f64>) {
    let s = model.season.max(1);
    let mut a = multiply(
        &lag_poly(&model.ar, 1, -1.0),
        &lag_poly(&model.seasonal_ar, s, -1.0),
    );
    for _ in 0..model.d {
        a = multiply(&a, &[1.0, -1.0]);
    }
    for _ in 0..model.seasonal_d {
        a = multiply(&a, &lag_poly(&[1.0], s, -1.0));
    }
    let m = multiply(
        &lag_poly(&model.ma, 1, 1.0),
        &lag_poly(&model.seasonal_ma, s, 1.0),
    );
    (a, m)
}

impl SignalModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(UncertaintyError::Config(format!(
                "residual sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        let seasonal = !self.seasonal_ar.is_empty()
            || !self.seasonal_ma.is_empty()
            || self.seasonal_d > 0;
        if seasonal && self.season < 2 {
            return Err(UncertaintyError::Config(
                "seasonal terms require a season length of at least 2".into(),
            ));
        }
        Ok(())
    }

    /// Minimal number of past observations needed to start a forecast.
    pub fn required_history(&self) -> usize {
        let (a, m) = expand_polynomials(self);
        (a.len() - 1).max(m.len() - 1).max(1)
    }

    pub fn baseline(&self, t: usize) -> f64 {
        if self.profile.is_empty() {
            self.level
        } else {
            self.level + self.profile[t % self.profile.len()]
        }
    }

    /// Innovation-filter state after observing `history`, which starts at
    /// absolute time `start`. Innovations before the first full lag window
    /// are taken as zero.
    pub(crate) fn condition(&self, start: usize, history: &[f64]) -> Result<ArimaState> {
        let need = self.required_history();
        if history.len() < need {
            return Err(UncertaintyError::Config(format!(
                "history of {} samples is shorter than the {} required by the model orders",
                history.len(),
                need
            )));
        }
        let (a, m) = expand_polynomials(self);
        let y: Vec<f64> = history
            .iter()
            .enumerate()
            .map(|(k, v)| v - self.baseline(start + k))
            .collect();
        let p = a.len() - 1;
        let mut eps = vec![0.0; y.len()];
        for t in p..y.len() {
            let mut e = y[t];
            for k in 1..=p {
                e += a[k] * y[t - k];
            }
            for k in 1..m.len() {
                if t >= k {
                    e -= m[k] * eps[t - k];
                }
            }
            eps[t] = e;
        }
        Ok(ArimaState {
            a,
            m,
            y,
            eps,
            next_time: start + history.len(),
        })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ArimaState {
    a: Vec<f64>,
    m: Vec<f64>,
    y: Vec<f64>,
    eps: Vec<f64>,
    next_time: usize,
}

impl ArimaState {
    /// Advances one step with innovation `e`; returns the new deviation.
    pub(crate) fn step(&mut self, e: f64) -> f64 {
        let t = self.y.len();
        let mut v = e;
        for k in 1..self.a.len() {
            v -= self.a[k] * self.y[t - k];
        }
        for k in 1..self.m.len() {
            if t >= k {
                v += self.m[k] * self.eps[t - k];
            }
        }
        self.y.push(v);
        self.eps.push(e);
        self.next_time += 1;
        v
    }

    pub(crate) fn time(&self) -> usize {
        self.next_time
    }
}
