//! Central finite differences against reverse-mode gradients.

use rand::Rng as _;

use crate::ae::Trainable;
use crate::nn::{ParamStore, Tensor};
use crate::rng::Rng;
use crate::Result;

pub const FD_STEP: f64 = 1e-6;
pub const FD_REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
pub const FD_FLOOR: f64 = 1e-5;
pub const FD_PASS_SHARE: f64 = 0.99;

pub fn random_tensor(shape: &[usize], rng: &mut Rng, scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
    Tensor::new(shape.to_vec(), data).expect("length matches shape")
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub failures: Vec<String>,
}

impl FdReport {
    pub fn pass_share(&self) -> f64 {
        if self.checked == 0 {
            return 0.0;
        }
        1.0 - self.failures.len() as f64 / self.checked as f64
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.failures.extend(other.failures);
    }

    pub fn passes(&self) -> bool {
        self.checked > 0 && self.pass_share() >= FD_PASS_SHARE
    }

    pub fn record(&mut self, label: String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let denom = analytic.abs().max(numeric.abs()).max(FD_FLOOR);
        let rel = (analytic - numeric).abs() / denom;
        if !(rel < FD_REL_TOL) {
            self.failures.push(format!("{label}: analytic {analytic:e} numeric {numeric:e}"));
        }
    }
}

/// Up to `per_tensor` seeded entry indices of every tensor in `store`.
pub fn picks(store: &ParamStore, per_tensor: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..store.len() {
        let n = store.get(i).len();
        if n <= per_tensor {
            out.extend((0..n).map(|j| (i, j)));
        } else {
            out.extend((0..per_tensor).map(|_| (i, rng.random_range(0..n))));
        }
    }
    out
}

fn step(v: f64) -> f64 {
    FD_STEP * v.abs().max(1.0)
}

/// Central differences of `f` at the picked entries of `store`.
pub fn check_fn(
    store: &mut ParamStore,
    picks: &[(usize, usize)],
    f: impl Fn(&ParamStore) -> Result<(f64, Vec<Tensor>)>,
) -> Result<FdReport> {
    let (_, grads) = f(store)?;
    let mut report = FdReport::default();
    for &(i, j) in picks {
        let v = store.get(i).data()[j];
        let h = step(v);
        store.get_mut(i).data_mut()[j] = v + h;
        let up = f(store)?.0;
        store.get_mut(i).data_mut()[j] = v - h;
        let down = f(store)?.0;
        store.get_mut(i).data_mut()[j] = v;
        let label = format!("{}[{j}]", store.name(i));
        report.record(label, grads[i].data()[j], (up - down) / (2.0 * h));
    }
    Ok(report)
}

/// Central differences of a trainable model's per-sample loss.
pub fn check_model<M: Trainable>(model: &mut M, sample: &M::Sample, picks: &[(usize, usize)]) -> Result<FdReport> {
    let (_, grads) = model.loss_and_grads(sample)?;
    let mut report = FdReport::default();
    for &(i, j) in picks {
        let v = model.params().get(i).data()[j];
        let h = step(v);
        model.params_mut().get_mut(i).data_mut()[j] = v + h;
        let up = model.loss(sample)?;
        model.params_mut().get_mut(i).data_mut()[j] = v - h;
        let down = model.loss(sample)?;
        model.params_mut().get_mut(i).data_mut()[j] = v;
        let label = format!("{}[{j}]", model.params().name(i));
        report.record(label, grads[i].data()[j], (up - down) / (2.0 * h));
    }
    Ok(report)
}

/// Central differences of a plain function of a vector against a given
/// gradient.
pub fn check_vector(x: &[f64], grad: &[f64], f: impl Fn(&[f64]) -> f64) -> FdReport {
    let mut report = FdReport::default();
    let mut x = x.to_vec();
    for j in 0..x.len() {
        let v = x[j];
        let h = step(v);
        x[j] = v + h;
        let up = f(&x);
        x[j] = v - h;
        let down = f(&x);
        x[j] = v;
        report.record(format!("x[{j}]"), grad[j], (up - down) / (2.0 * h));
    }
    report
}
