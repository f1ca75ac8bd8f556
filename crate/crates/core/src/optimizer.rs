//! Projected ADAM ascent with global-norm gradient clipping.
//!
//! The update adds the step: the objective is welfare, which is maximised.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_grad_norm: f64,
    pub clip: bool,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_grad_norm: 10.0,
            clip: true,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.eps >= 0.0) {
            return Err(format!("eps must be nonnegative, got {}", self.eps));
        }
        if self.clip && !(self.max_grad_norm > 0.0) {
            return Err(format!("max_grad_norm must be positive, got {}", self.max_grad_norm));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Rescales `g` onto the ball of radius `max_norm` when it lies outside.
pub fn clip_gradient(g: &[f64], max_norm: f64) -> Vec<f64> {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        g.iter().map(|x| x * scale).collect()
    } else {
        g.to_vec()
    }
}

/// Bias-corrected moments `(m̂, v̂)` after one update with gradient `g`.
pub fn update_moments(state: &mut AdamState, cfg: &AdamConfig, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let mut m_hat = Vec::with_capacity(g.len());
    let mut v_hat = Vec::with_capacity(g.len());
    for ((m, v), &gi) in state.m.iter_mut().zip(state.v.iter_mut()).zip(g) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
        m_hat.push(*m / c1);
        v_hat.push(*v / c2);
    }
    (m_hat, v_hat)
}

/// One ascent step: clips `g` when enabled, updates the moments, and returns
/// the new parameters `params + lr · m̂ / (√v̂ + ε)`.
pub fn adam_step(state: &mut AdamState, cfg: &AdamConfig, params: &[f64], g: &[f64]) -> Vec<f64> {
    assert_eq!(params.len(), g.len(), "gradient length");
    assert_eq!(state.m.len(), g.len(), "state length");
    let g = if cfg.clip {
        clip_gradient(g, cfg.max_grad_norm)
    } else {
        g.to_vec()
    };
    let (m_hat, v_hat) = update_moments(state, cfg, &g);
    params
        .iter()
        .zip(m_hat.iter().zip(&v_hat))
        .map(|(p, (m, v))| {
            let den = v.sqrt() + cfg.eps;
            if den == 0.0 {
                *p
            } else {
                p + cfg.lr * m / den
            }
        })
        .collect()
}

/// Elementwise box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u), "lower > upper");
        Self { lower, upper }
    }
}

pub fn project(params: &[f64], bounds: &Bounds) -> Vec<f64> {
    params
        .iter()
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|(p, (l, u))| p.clamp(*l, *u))
        .collect()
}

/// Norm of the projected gradient: components pushing against an active
/// bound are dropped.
pub fn stationarity(params: &[f64], g: &[f64], bounds: &Bounds) -> f64 {
    params
        .iter()
        .zip(g)
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|((p, gi), (l, u))| {
            if (*p <= *l && *gi < 0.0) || (*p >= *u && *gi > 0.0) {
                0.0
            } else {
                gi * gi
            }
        })
        .sum::<f64>()
        .sqrt()
}
