//! First-order optimizers and the early-stopping controller.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnlayers::Param;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    Adagrad,
    Adadelta,
    RMSProp,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::Adam,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
        OptimizerKind::RMSProp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::RMSProp => "rmsprop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown optimizer {s:?}")))
    }
}

/// The learning rates explored by the grid runner.
pub const LEARNING_RATES: [f64; 4] = [0.0001, 0.001, 0.01, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    /// Canonical defaults of each method. Adadelta keeps `learning_rate`
    /// only for interface uniformity; its rule does not read it.
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        let epsilon = match kind {
            OptimizerKind::Adam | OptimizerKind::Adagrad => 1e-8,
            OptimizerKind::Adadelta | OptimizerKind::RMSProp => 1e-6,
        };
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.9,
            epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !unit(self.beta1) || !unit(self.beta2) || !unit(self.rho) {
            return Err(Error::Config(
                "beta1, beta2 and rho must lie in (0, 1)".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Slot {
    /// Adam m, Adagrad Σg², Adadelta / RMSProp E[g²].
    first: Tensor,
    /// Adam v, Adadelta E[Δx²]; unused elsewhere.
    second: Tensor,
}

/// Per-parameter accumulators, created at zero on the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    slots: Vec<Slot>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self {
            slots: Vec::new(),
            t: 0,
        }
    }

    pub fn slot_shapes(&self) -> Vec<Vec<usize>> {
        self.slots
            .iter()
            .map(|s| s.first.shape().to_vec())
            .collect()
    }
}

impl Default for OptimizerState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub state: OptimizerState,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: OptimizerState::new(),
        })
    }

    /// Applies one update to every parameter, in order, then zeroes the
    /// gradients. The parameter list must be the same on every call.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Param>,
    {
        let params: Vec<&mut Param> = params.into_iter().collect();
        if self.state.slots.is_empty() {
            self.state.slots = params
                .iter()
                .map(|p| Slot {
                    first: Tensor::zeros(p.value.shape()),
                    second: Tensor::zeros(p.value.shape()),
                })
                .collect();
        }
        if self.state.slots.len() != params.len()
            || self
                .state
                .slots
                .iter()
                .zip(&params)
                .any(|(s, p)| s.first.shape() != p.value.shape())
        {
            return Err(Error::ShapeMismatch(
                "parameter set changed between optimizer steps".into(),
            ));
        }
        self.state.t += 1;
        let t = self.state.t as i32;
        let cfg = self.config;
        for (param, slot) in params.into_iter().zip(&mut self.state.slots) {
            let theta = param.value.data_mut();
            let g = param.grad.data();
            let a = slot.first.data_mut();
            let b = slot.second.data_mut();
            match cfg.kind {
                OptimizerKind::Adam => {
                    let c1 = 1.0 - cfg.beta1.powi(t);
                    let c2 = 1.0 - cfg.beta2.powi(t);
                    for i in 0..theta.len() {
                        a[i] = cfg.beta1 * a[i] + (1.0 - cfg.beta1) * g[i];
                        b[i] = cfg.beta2 * b[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                        let m_hat = a[i] / c1;
                        let v_hat = b[i] / c2;
                        theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
                    }
                }
                OptimizerKind::Adagrad => {
                    for i in 0..theta.len() {
                        a[i] += g[i] * g[i];
                        theta[i] -= cfg.learning_rate * g[i] / (a[i].sqrt() + cfg.epsilon);
                    }
                }
                OptimizerKind::Adadelta => {
                    for i in 0..theta.len() {
                        a[i] = cfg.rho * a[i] + (1.0 - cfg.rho) * g[i] * g[i];
                        let dx =
                            -((b[i] + cfg.epsilon).sqrt() / (a[i] + cfg.epsilon).sqrt()) * g[i];
                        b[i] = cfg.rho * b[i] + (1.0 - cfg.rho) * dx * dx;
                        theta[i] += dx;
                    }
                }
                OptimizerKind::RMSProp => {
                    for i in 0..theta.len() {
                        a[i] = cfg.rho * a[i] + (1.0 - cfg.rho) * g[i] * g[i];
                        theta[i] -= cfg.learning_rate * g[i] / (a[i].sqrt() + cfg.epsilon);
                    }
                }
            }
            param.grad.fill(0.0);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub patience: usize,
    pub min_delta: f64,
    pub best_val_loss: f64,
    pub epochs_since_improve: usize,
    /// 1-based epoch of the best loss so far; 0 before the first update.
    pub best_epoch: usize,
    epochs_seen: usize,
}

impl EarlyStop {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience: patience.max(1),
            min_delta: min_delta.max(0.0),
            best_val_loss: f64::INFINITY,
            epochs_since_improve: 0,
            best_epoch: 0,
            epochs_seen: 0,
        }
    }

    /// True when the last update was an improvement.
    pub fn improved(&self) -> bool {
        self.best_epoch == self.epochs_seen && self.epochs_seen > 0
    }

    pub fn update(&mut self, val_loss: f64) -> Result<StopDecision> {
        if val_loss.is_nan() {
            return Err(Error::TrainingDiverged("validation loss is NaN".into()));
        }
        self.epochs_seen += 1;
        if val_loss < self.best_val_loss - self.min_delta {
            self.best_val_loss = val_loss;
            self.best_epoch = self.epochs_seen;
            self.epochs_since_improve = 0;
        } else {
            self.epochs_since_improve += 1;
        }
        Ok(if self.epochs_since_improve >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        })
    }
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self::new(10, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn param(values: &[f64]) -> Param {
        Param::new(Tensor::from_vec(&[values.len()], values.to_vec()).unwrap())
    }

    fn set_grad(p: &mut Param, g: &[f64]) {
        p.grad.data_mut().copy_from_slice(g);
    }

    #[test]
    fn zero_gradient_is_noop() {
        for kind in OptimizerKind::ALL {
            let mut p = param(&[1.0, -2.0]);
            let mut opt = Optimizer::new(OptimizerConfig::new(kind, 0.01)).unwrap();
            for _ in 0..3 {
                opt.step([&mut p]).unwrap();
            }
            assert_eq!(p.value.data(), &[1.0, -2.0], "{kind:?}");
            assert!(opt.state.slots[0].first.data().iter().all(|v| *v == 0.0));
            assert!(opt.state.slots[0].second.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn first_adam_step_is_about_lr() {
        let mut p = param(&[1.0]);
        set_grad(&mut p, &[0.5]);
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam, 0.001)).unwrap();
        opt.step([&mut p]).unwrap();
        assert!((p.value.data()[0] - 0.999).abs() < 1e-7);
        assert_eq!(p.grad.data(), &[0.0]);
        assert_eq!(opt.state.t, 1);
    }

    #[test]
    fn first_adagrad_step() {
        let mut p = param(&[1.0]);
        set_grad(&mut p, &[1.0]);
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adagrad, 0.1)).unwrap();
        opt.step([&mut p]).unwrap();
        assert!((p.value.data()[0] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn changing_parameter_set_is_rejected() {
        let mut a = param(&[1.0]);
        let mut b = param(&[1.0, 2.0]);
        let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam, 0.1)).unwrap();
        opt.step([&mut a]).unwrap();
        assert!(opt.step([&mut b]).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let mut c = OptimizerConfig::new(OptimizerKind::Adam, 0.1);
        c.beta1 = 1.0;
        assert!(Optimizer::new(c).is_err());
        assert!(Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam, 0.0)).is_err());
    }

    #[test]
    fn early_stop_flat_losses() {
        let mut es = EarlyStop::new(3, 0.0);
        let d: Vec<_> = [1.0, 1.0, 1.0, 1.0]
            .iter()
            .map(|&l| es.update(l).unwrap())
            .collect();
        assert_eq!(
            d,
            [
                StopDecision::Continue,
                StopDecision::Continue,
                StopDecision::Continue,
                StopDecision::Stop
            ]
        );
        assert_eq!(es.best_epoch, 1);
    }

    #[test]
    fn early_stop_late_improvement() {
        let mut es = EarlyStop::new(3, 0.0);
        for l in [1.0, 0.9, 1.1, 1.1, 0.89] {
            assert_eq!(es.update(l).unwrap(), StopDecision::Continue);
        }
        assert_eq!(es.best_epoch, 5);
        assert!(es.improved());
    }

    #[test]
    fn early_stop_nan() {
        assert!(matches!(
            EarlyStop::new(3, 0.0).update(f64::NAN),
            Err(Error::TrainingDiverged(_))
        ));
    }

    proptest! {
        #[test]
        fn decreasing_losses_never_stop(start in 1.0f64..100.0, steps in 1usize..50, patience in 1usize..5) {
            let mut es = EarlyStop::new(patience, 0.0);
            for i in 0..steps {
                prop_assert_eq!(es.update(start - i as f64 * 0.01).unwrap(), StopDecision::Continue);
            }
        }

        #[test]
        fn never_stops_before_patience(losses in prop::collection::vec(0.0f64..10.0, 1..40), patience in 1usize..8) {
            let mut es = EarlyStop::new(patience, 0.0);
            for l in losses {
                let d = es.update(l).unwrap();
                prop_assert_eq!(d == StopDecision::Stop, es.epochs_since_improve >= patience);
            }
        }

        #[test]
        fn slots_mirror_params(kind in 0usize..4, dims in prop::collection::vec(1usize..5, 1..4), steps in 1usize..5) {
            let kind = OptimizerKind::ALL[kind];
            let mut params: Vec<Param> = dims.iter().map(|&d| Param::new(Tensor::zeros(&[d, 2]))).collect();
            let mut opt = Optimizer::new(OptimizerConfig::new(kind, 0.01)).unwrap();
            for s in 0..steps {
                for p in params.iter_mut() {
                    p.grad.fill(s as f64 + 0.5);
                }
                opt.step(params.iter_mut()).unwrap();
            }
            let want: Vec<Vec<usize>> = params.iter().map(|p| p.value.shape().to_vec()).collect();
            prop_assert_eq!(opt.state.slot_shapes(), want);
            prop_assert!(params.iter().all(|p| p.grad.data().iter().all(|g| *g == 0.0)));
        }

        #[test]
        fn steps_are_deterministic(kind in 0usize..4, g in prop::collection::vec(-3.0f64..3.0, 1..6)) {
            let kind = OptimizerKind::ALL[kind];
            let run = || {
                let mut p = param(&vec![0.3; g.len()]);
                let mut opt = Optimizer::new(OptimizerConfig::new(kind, 0.01)).unwrap();
                for _ in 0..4 {
                    set_grad(&mut p, &g);
                    opt.step([&mut p]).unwrap();
                }
                (p.value, opt.state)
            };
            prop_assert_eq!(run(), run());
        }
    }
}
