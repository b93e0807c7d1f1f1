//! Parameter update rules: Adam (the default) and plain SGD.

use crate::error::{Error, Result};
use crate::model::{MlpGrads, MlpParams};

/// Update rule selection. Adam keeps per-parameter first and second moment
/// estimates with bias correction; SGD is the bare `p -= lr * g` step used
/// by gradient-check style experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptAlgorithm {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl OptAlgorithm {
    pub fn default_adam() -> OptAlgorithm {
        OptAlgorithm::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        if let OptAlgorithm::Adam { beta1, beta2, eps } = self {
            for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                if !(0.0..1.0).contains(b) {
                    return Err(Error::Config(format!("adam {name} must be in [0, 1)")));
                }
            }
            if !(eps.is_finite() && *eps > 0.0) {
                return Err(Error::Config("adam eps must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Optimizer state for one model. Must only ever be stepped with gradients
/// shaped like the parameters it was built for.
#[derive(Clone, Debug)]
pub struct Optimizer {
    alg: OptAlgorithm,
    lr: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(alg: OptAlgorithm, lr: f64, params: &MlpParams) -> Result<Optimizer> {
        alg.validate()?;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        let shapes: Vec<usize> = params.param_slices().iter().map(|s| s.len()).collect();
        Ok(Optimizer {
            alg,
            lr,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    /// Applies one update in place. A tensor whose gradient is identically
    /// zero is left bit-identical (its moments stay zero, so the Adam step
    /// is exactly zero).
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        self.t += 1;
        let param_slices = params.param_slices_mut();
        let grad_slices = grads.slices();
        assert_eq!(
            param_slices.len(),
            grad_slices.len(),
            "optimizer/model mismatch"
        );
        match self.alg {
            OptAlgorithm::Sgd => {
                for (p, g) in param_slices.into_iter().zip(grad_slices) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= self.lr * gi;
                    }
                }
            }
            OptAlgorithm::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(self.t as i32);
                let bc2 = 1.0 - beta2.powi(self.t as i32);
                for ((p, g), (m, v)) in param_slices
                    .into_iter()
                    .zip(grad_slices)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    assert_eq!(p.len(), g.len(), "optimizer/model mismatch");
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / bc1;
                        let v_hat = v[i] / bc2;
                        p[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
