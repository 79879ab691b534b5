use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arima::{ArimaState, SignalModel};
use super::{Result, UncertaintyError};

/// Wind-speed model of one renewable unit with its cubic power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSource {
    /// Wind speed in m/s.
    pub speed: SignalModel,
    /// Power per cubed speed, pu/(m/s)³.
    pub cubic_coefficient: f64,
    /// Rated power in pu; the curve saturates here.
    pub rated_power: f64,
}

impl WindSource {
    pub fn power(&self, speed: f64) -> f64 {
        (self.cubic_coefficient * speed.powi(3)).clamp(0.0, self.rated_power)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterSpec {
    pub wind: Vec<WindSource>,
    /// Load models in pu.
    pub load: Vec<SignalModel>,
}

impl ForecasterSpec {
    pub fn validate(&self) -> Result<()> {
        for w in &self.wind {
            w.speed.validate()?;
            if !(w.rated_power > 0.0) {
                return Err(UncertaintyError::Config(format!(
                    "rated power must be positive, got {}",
                    w.rated_power
                )));
            }
            if !(w.cubic_coefficient >= 0.0) {
                return Err(UncertaintyError::Config(
                    "cubic power-curve coefficient must be nonnegative".into(),
                ));
            }
        }
        for l in &self.load {
            l.validate()?;
        }
        Ok(())
    }

    /// Longest history any of the signal models needs.
    pub fn required_history(&self) -> usize {
        self.wind
            .iter()
            .map(|w| w.speed.required_history())
            .chain(self.load.iter().map(|l| l.required_history()))
            .max()
            .unwrap_or(1)
    }

    /// Noise-free continuation of the baselines, used to seed histories.
    pub fn baseline_history(&self, start: usize, len: usize) -> History {
        History {
            start,
            wind: self
                .wind
                .iter()
                .map(|w| (0..len).map(|k| w.speed.baseline(start + k)).collect())
                .collect(),
            load: self
                .load
                .iter()
                .map(|l| (0..len).map(|k| l.baseline(start + k)).collect())
                .collect(),
        }
    }
}

/// Past observations of wind speed and load, starting at absolute time `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub start: usize,
    pub wind: Vec<Vec<f64>>,
    pub load: Vec<Vec<f64>>,
}

impl History {
    pub fn len(&self) -> usize {
        self.wind
            .iter()
            .chain(&self.load)
            .map(Vec::len)
            .min()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time index of the first value not yet observed.
    pub fn next_time(&self) -> usize {
        self.start + self.len()
    }

    pub fn push(&mut self, wind_speed: &[f64], load: &[f64]) {
        for (h, v) in self.wind.iter_mut().zip(wind_speed) {
            h.push(*v);
        }
        for (h, v) in self.load.iter_mut().zip(load) {
            h.push(*v);
        }
    }

    /// Drops old samples while keeping at least `keep` of them.
    pub fn truncate_front(&mut self, keep: usize) {
        let n = self.len();
        if n > keep {
            let drop = n - keep;
            for h in self.wind.iter_mut().chain(self.load.iter_mut()) {
                h.drain(..drop);
            }
            self.start += drop;
        }
    }
}

/// Equally weighted disturbance trajectories `w = (w_r, w_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFan {
    r: usize,
    d: usize,
    horizon: usize,
    data: Vec<f64>,
    probabilities: Vec<f64>,
}

impl ScenarioFan {
    /// Builds a uniform fan; each trajectory is `horizon` stacked vectors of
    /// `r + d` values.
    pub fn new(r: usize, d: usize, horizon: usize, trajectories: Vec<Vec<f64>>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(UncertaintyError::Empty("scenario fan"));
        }
        if horizon == 0 {
            return Err(UncertaintyError::Config("horizon must be at least 1".into()));
        }
        let width = (r + d) * horizon;
        let mut data = Vec::with_capacity(width * trajectories.len());
        for t in &trajectories {
            if t.len() != width {
                return Err(UncertaintyError::Dimension {
                    what: "fan trajectory",
                    expected: width,
                    got: t.len(),
                });
            }
            if let Some(v) = t.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
                return Err(UncertaintyError::Config(format!(
                    "disturbances must be finite and nonnegative, got {v}"
                )));
            }
            data.extend_from_slice(t);
        }
        let n = trajectories.len();
        Ok(Self {
            r,
            d,
            horizon,
            data,
            probabilities: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.r + self.d
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Whole trajectory of scenario `m` (stage-major).
    pub fn trajectory(&self, m: usize) -> &[f64] {
        let w = self.width() * self.horizon;
        &self.data[m * w..(m + 1) * w]
    }

    /// Disturbance of scenario `m` at step `k` (stage `k + 1`).
    pub fn value(&self, m: usize, k: usize) -> &[f64] {
        let w = self.width();
        &self.trajectory(m)[k * w..(k + 1) * w]
    }

    /// Probability-weighted mean trajectory.
    pub fn mean_path(&self) -> Vec<f64> {
        let w = self.width() * self.horizon;
        let mut mean = vec![0.0; w];
        for m in 0..self.len() {
            let p = self.probabilities[m];
            for (acc, v) in mean.iter_mut().zip(self.trajectory(m)) {
                *acc += p * v;
            }
        }
        mean
    }
}

/// Monte Carlo fan of `n` scenarios over `horizon` steps following `history`.
///
/// Scenario `m` draws from its own ChaCha stream `m` under `seed`, so the
/// result does not depend on the number of worker threads.
pub fn simulate_fan(
    spec: &ForecasterSpec,
    history: &History,
    horizon: usize,
    n: usize,
    seed: u64,
) -> Result<ScenarioFan> {
    spec.validate()?;
    if horizon == 0 || n == 0 {
        return Err(UncertaintyError::Config(
            "horizon and scenario count must be at least 1".into(),
        ));
    }
    if history.wind.len() != spec.wind.len() || history.load.len() != spec.load.len() {
        return Err(UncertaintyError::Dimension {
            what: "history signals",
            expected: spec.wind.len() + spec.load.len(),
            got: history.wind.len() + history.load.len(),
        });
    }
    let (wind_states, load_states) = condition_all(spec, history)?;
    let (r, d) = (spec.wind.len(), spec.load.len());
    let trajectories: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|m| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            let path = draw_path(spec, wind_states.clone(), load_states.clone(), horizon, &mut rng);
            let mut out = Vec::with_capacity(horizon * (r + d));
            for k in 0..horizon {
                for (src, v) in spec.wind.iter().zip(&path.wind_speed[k]) {
                    out.push(src.power(*v));
                }
                out.extend(&path.load[k]);
            }
            out
        })
        .collect();
    ScenarioFan::new(r, d, horizon, trajectories)
}

/// Raw signal values of one sample path, indexed `[step][unit]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPath {
    pub wind_speed: Vec<Vec<f64>>,
    /// Loads, floored at zero.
    pub load: Vec<Vec<f64>>,
}

fn condition_all(spec: &ForecasterSpec, history: &History) -> Result<(Vec<ArimaState>, Vec<ArimaState>)> {
    let wind = spec
        .wind
        .iter()
        .zip(&history.wind)
        .map(|(w, h)| w.speed.condition(history.start, h))
        .collect::<Result<Vec<_>>>()?;
    let load = spec
        .load
        .iter()
        .zip(&history.load)
        .map(|(l, h)| l.condition(history.start, h))
        .collect::<Result<Vec<_>>>()?;
    Ok((wind, load))
}

fn draw_path(
    spec: &ForecasterSpec,
    mut wind: Vec<ArimaState>,
    mut load: Vec<ArimaState>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> SignalPath {
    let mut path = SignalPath {
        wind_speed: Vec::with_capacity(horizon),
        load: Vec::with_capacity(horizon),
    };
    for _ in 0..horizon {
        let mut ws = Vec::with_capacity(wind.len());
        for (src, st) in spec.wind.iter().zip(wind.iter_mut()) {
            let z: f64 = StandardNormal.sample(rng);
            let t = st.time();
            ws.push(src.speed.baseline(t) + st.step(src.speed.sigma * z));
        }
        let mut ls = Vec::with_capacity(load.len());
        for (model, st) in spec.load.iter().zip(load.iter_mut()) {
            let z: f64 = StandardNormal.sample(rng);
            let t = st.time();
            ls.push((model.baseline(t) + st.step(model.sigma * z)).max(0.0));
        }
        path.wind_speed.push(ws);
        path.load.push(ls);
    }
    path
}

/// A single path of the signal models continuing `history`, in wind-speed
/// and load units.
pub fn sample_signal_path(
    spec: &ForecasterSpec,
    history: &History,
    horizon: usize,
    seed: u64,
) -> Result<SignalPath> {
    spec.validate()?;
    let (wind, load) = condition_all(spec, history)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw_path(spec, wind, load, horizon, &mut rng))
}
