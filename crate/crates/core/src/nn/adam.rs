use serde::{Deserialize, Serialize};

use super::hrnet::{ModelParams, ARCHITECTURE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, laid out like [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f32>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. Nothing is modified when any gradient
/// entry is non-finite.
pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    for (spec, g) in ARCHITECTURE.iter().zip(&grads.tensors) {
        if g.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(spec.name.to_string()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.data.len() {
            let gj = g.data[j] as f64;
            let mj = cfg.beta1 * m[j] as f64 + (1.0 - cfg.beta1) * gj;
            let vj = cfg.beta2 * v[j] as f64 + (1.0 - cfg.beta2) * gj * gj;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let update = cfg.lr * (mj / c1) / ((vj / c2).sqrt() + cfg.eps);
            p.data[j] = (p.data[j] as f64 - update) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = ModelParams::init(3);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &ModelParams::zeros(), &mut s, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = g, v̂ = g², so the step is lr·g/(|g|+ε) ≈ lr·sign(g)
        let mut p = ModelParams::zeros();
        let mut g = ModelParams::zeros();
        g.tensors[0].data[0] = 0.37;
        g.tensors[0].data[1] = -2.5;
        let mut s = AdamState::new(&p);
        adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        assert!((p.tensors[0].data[0] + 1e-3).abs() < 1e-7);
        assert!((p.tensors[0].data[1] - 1e-3).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = ModelParams::init(0);
        let before = p.clone();
        let mut g = ModelParams::zeros();
        g.tensors[5].data[2] = f32::NAN;
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("high2.bias"));
        assert_eq!(p, before);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn deterministic_over_ten_steps() {
        let run = || {
            let mut p = ModelParams::init(9);
            let mut s = AdamState::new(&p);
            for k in 0..10 {
                let mut g = ModelParams::zeros();
                for t in &mut g.tensors {
                    for (j, v) in t.data.iter_mut().enumerate() {
                        *v = ((j * 31 + k * 7) % 17) as f32 / 17.0 - 0.5;
                    }
                }
                adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
