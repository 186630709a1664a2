use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Learning rate, moment accumulators and step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub step: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        let (first_moment, second_moment) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (zeros(), zeros()),
        };
        Self {
            kind,
            lr,
            step: 0,
            first_moment,
            second_moment,
        }
    }

    pub fn sgd(lr: f64, params: &ParamStore) -> Self {
        Self::new(OptimizerKind::Sgd, lr, params)
    }

    pub fn adam(lr: f64, params: &ParamStore) -> Self {
        Self::new(OptimizerKind::adam(), lr, params)
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Applies one update. Parameters are left untouched if any gradient is
    /// non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(shape_err(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params.get(i).shape() {
                return Err(shape_err(format!(
                    "gradient for `{}` has shape {:?}, parameter is {:?}",
                    params.name(i),
                    g.shape(),
                    params.get(i).shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(params.name(i).to_string()));
            }
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (i, g) in grads.iter().enumerate() {
                    for (p, gv) in params.get_mut(i).data_mut().iter_mut().zip(g.data()) {
                        *p -= self.lr * gv;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (i, g) in grads.iter().enumerate() {
                    let m = self.first_moment[i].data_mut();
                    let v = self.second_moment[i].data_mut();
                    let p = params.get_mut(i).data_mut();
                    for j in 0..p.len() {
                        let gv = g.data()[j];
                        m[j] = beta1 * m[j] + (1.0 - beta1) * gv;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * gv * gv;
                        let mh = m[j] / c1;
                        let vh = v[j] / c2;
                        p[j] -= self.lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
