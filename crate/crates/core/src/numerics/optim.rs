//! AdamW with linear warmup and global gradient-norm clipping.

use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    /// Full-scale schedule: warm up to 1.4e-3 over 8192 steps.
    fn default() -> Self {
        AdamWConfig {
            peak_lr: 1.4e-3,
            warmup_steps: 8192,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: 1.0,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.peak_lr > 0.0
            && self.warmup_steps > 0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.clip_norm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer config {self:?}")))
        }
    }

    /// Learning rate applied on update number `step` (1-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        self.peak_lr * (step as f64 / self.warmup_steps as f64).min(1.0)
    }
}

/// What a single update did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub step: u64,
    pub lr: f64,
    pub grad_norm: f64,
    /// Factor the gradients were multiplied by before the moment update.
    pub clip_scale: f64,
}

/// Moments and step counter; one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState<S: Scalar> {
    pub config: AdamWConfig,
    step_count: u64,
    first: Vec<Vec<S>>,
    second: Vec<Vec<S>>,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(config: AdamWConfig) -> Result<Self> {
        config.validate()?;
        Ok(OptimizerState {
            config,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moments(&self) -> &[Vec<S>] {
        &self.first
    }
}

/// Convenience owner of an [`OptimizerState`].
#[derive(Debug, Clone)]
pub struct AdamW<S: Scalar> {
    pub state: OptimizerState<S>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(config: AdamWConfig) -> Result<Self> {
        Ok(AdamW {
            state: OptimizerState::new(config)?,
        })
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<S>]) -> Result<StepStats> {
        adamw_step(params, &mut self.state)
    }
}

/// One AdamW update using the gradients stored on `params` (missing
/// gradients count as zero). Rejects the step, leaving parameters and state
/// untouched, if any gradient is non-finite.
pub fn adamw_step<S: Scalar>(params: &mut [&mut Tensor<S>], state: &mut OptimizerState<S>) -> Result<StepStats> {
    if state.first.is_empty() && state.step_count == 0 {
        state.first = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != params.len()
        || state.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.numel())
    {
        return Err(Error::shape("adamw_step", "parameters do not match optimizer moments"));
    }

    let mut sq = 0.0f64;
    for p in params.iter() {
        if let Some(g) = p.grad() {
            for &v in g {
                if !v.is_finite() {
                    return Err(Error::NonFinite("gradient passed to adamw_step".into()));
                }
                sq += v.as_f64() * v.as_f64();
            }
        }
    }
    let grad_norm = sq.sqrt();
    if !grad_norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    let cfg = &state.config;
    let clip_scale = if grad_norm > cfg.clip_norm { cfg.clip_norm / grad_norm } else { 1.0 };

    let step = state.step_count + 1;
    let lr = cfg.lr_at(step);
    let (b1, b2) = (S::lit(cfg.beta1), S::lit(cfg.beta2));
    let bc1 = S::lit(1.0 - cfg.beta1.powi(step as i32));
    let bc2 = S::lit(1.0 - cfg.beta2.powi(step as i32));
    let (lr_s, eps, decay, cs) = (S::lit(lr), S::lit(cfg.eps), S::lit(cfg.weight_decay), S::lit(clip_scale));

    for ((p, m), v) in params.iter_mut().zip(state.first.iter_mut()).zip(state.second.iter_mut()) {
        let grad = p.take_grad();
        let data = p.data_mut();
        for i in 0..data.len() {
            let gi = grad.as_ref().map_or(S::zero(), |g| g[i]) * cs;
            m[i] = b1 * m[i] + (S::one() - b1) * gi;
            v[i] = b2 * v[i] + (S::one() - b2) * gi * gi;
            let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            data[i] = data[i] - lr_s * (update + decay * data[i]);
        }
        if let Some(g) = grad {
            p.accumulate_grad(&g)?;
        }
    }
    state.step_count = step;
    Ok(StepStats {
        step,
        lr,
        grad_norm,
        clip_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(peak: f64, warmup: u64) -> AdamWConfig {
        AdamWConfig {
            peak_lr: peak,
            warmup_steps: warmup,
            weight_decay: 0.0,
            ..AdamWConfig::default()
        }
    }

    #[test]
    fn warmup_is_linear() {
        let c = cfg(0.5, 100);
        assert_eq!(c.lr_at(1), 0.5 / 100.0);
        assert_eq!(c.lr_at(50), 0.25);
        assert_eq!(c.lr_at(100), 0.5);
        assert_eq!(c.lr_at(5000), 0.5);
    }

    #[test]
    fn clips_global_norm() {
        let mut p = Tensor::<f64>::zeros([2]);
        p.accumulate_grad(&[6.0, 8.0]).unwrap();
        let mut st = OptimizerState::new(cfg(0.1, 1)).unwrap();
        let stats = adamw_step(&mut [&mut p], &mut st).unwrap();
        assert_eq!(stats.grad_norm, 10.0);
        assert!((stats.clip_scale - 0.1).abs() < 1e-15);
        // First moment is (1 - beta1) * clipped gradient.
        let m = &st.first_moments()[0];
        assert!((m[0] - 0.1 * 0.6).abs() < 1e-12);
        assert!((m[1] - 0.1 * 0.8).abs() < 1e-12);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = Tensor::<f64>::new([2], vec![1.0, 2.0]).unwrap();
        p.accumulate_grad(&[1.0, 0.0]).unwrap();
        let mut st = OptimizerState::new(cfg(0.1, 1)).unwrap();
        adamw_step(&mut [&mut p], &mut st).unwrap();
        let before = p.data().to_vec();
        p.zero_grad();
        p.accumulate_grad(&[f64::INFINITY, 0.0]).unwrap();
        let err = adamw_step(&mut [&mut p], &mut st).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p.data(), &before[..]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn decoupled_weight_decay_shrinks_without_gradient() {
        let mut p = Tensor::<f64>::new([1], vec![2.0]).unwrap();
        let mut st = OptimizerState::new(AdamWConfig {
            peak_lr: 0.1,
            warmup_steps: 1,
            weight_decay: 0.5,
            ..AdamWConfig::default()
        })
        .unwrap();
        adamw_step(&mut [&mut p], &mut st).unwrap();
        assert!((p.data()[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }
}
