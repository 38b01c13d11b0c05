use gemcap_core::nnlayers::Param;
use gemcap_core::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use gemcap_core::tensor::Tensor;
use serde_json::Value;

const REFERENCE: &str = include_str!("data/optim_reference.json");

fn quadratic_run(kind: OptimizerKind, lr: f64, steps: usize) -> Vec<[f64; 2]> {
    let mut p = Param::new(Tensor::from_vec(&[2], vec![0.6, -0.8]).unwrap());
    let mut opt = Optimizer::new(OptimizerConfig::new(kind, lr)).unwrap();
    let mut out = Vec::new();
    for _ in 0..steps {
        let (a, b) = (p.value.data()[0], p.value.data()[1]);
        p.grad.data_mut().copy_from_slice(&[a, 3.0 * b]);
        opt.step([&mut p]).unwrap();
        out.push([p.value.data()[0], p.value.data()[1]]);
    }
    out
}

#[test]
fn trajectories_match_reference_script() {
    let reference: Value = serde_json::from_str(REFERENCE).unwrap();
    let lr = reference["learning_rate"].as_f64().unwrap();
    for kind in OptimizerKind::ALL {
        let want = reference[kind.name()].as_array().unwrap();
        let got = quadratic_run(kind, lr, 100);
        assert_eq!(want.len(), 100);
        for (step, (w, g)) in want.iter().zip(&got).enumerate() {
            for i in 0..2 {
                let w = w[i].as_f64().unwrap();
                assert!(
                    (w - g[i]).abs() <= 1e-9,
                    "{kind:?} step {step} coord {i}: {} vs {w}",
                    g[i]
                );
            }
        }
    }
}

/// Scalar Adam on f(θ) = θ²/2, written without the tensor machinery.
fn scalar_adam(theta0: f64, lr: f64, steps: usize) -> Vec<f64> {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    (1..=steps)
        .map(|t| {
            let g = theta;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powf(t as f64));
            let vh = v / (1.0 - b2.powf(t as f64));
            theta -= lr * mh / (vh.sqrt() + eps);
            theta
        })
        .collect()
}

#[test]
fn adam_on_scalar_quadratic_matches_scalar_oracle() {
    let mut p = Param::new(Tensor::scalar(1.0));
    let mut opt = Optimizer::new(OptimizerConfig::new(OptimizerKind::Adam, 0.001)).unwrap();
    for (step, want) in scalar_adam(1.0, 0.001, 100).into_iter().enumerate() {
        p.grad.data_mut()[0] = p.value.data()[0];
        opt.step([&mut p]).unwrap();
        assert!((p.value.data()[0] - want).abs() <= 1e-9, "step {step}");
    }
}

#[test]
fn all_optimizers_descend_unit_quadratic() {
    // ‖θ‖ = 1 start, f(θ) = ½‖θ‖²
    let start = [0.6, 0.0, -0.8];
    for kind in OptimizerKind::ALL {
        for lr in [0.001, 0.01] {
            let mut p = Param::new(Tensor::from_vec(&[3], start.to_vec()).unwrap());
            let mut opt = Optimizer::new(OptimizerConfig::new(kind, lr)).unwrap();
            let mut f = 0.5;
            for step in 0..100 {
                let theta = p.value.data().to_vec();
                p.grad.data_mut().copy_from_slice(&theta);
                opt.step([&mut p]).unwrap();
                let next = 0.5 * p.value.squared_norm();
                assert!(next < f, "{kind:?} lr {lr} step {step}: {next} >= {f}");
                f = next;
            }
        }
    }
}
