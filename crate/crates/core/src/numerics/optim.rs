use alloc::format;
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

fn check_pairs(op: &'static str, params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(op, format!("{} parameters, {} gradients", params.len(), grads.len())));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape(op, format!("parameter {:?}, gradient {:?}", p.shape(), g.shape())));
        }
    }
    Ok(())
}

/// Plain gradient descent: `p - lr * g` for every pair. Inputs are untouched.
pub fn sgd_step(params: &[Tensor], grads: &[Tensor], lr: f64) -> Result<Vec<Tensor>> {
    check_pairs("sgd_step", params, grads)?;
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::invalid("learning rate", format!("{lr}")));
    }
    Ok(params
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            let data = p.data().iter().zip(g.data()).map(|(pv, gv)| pv - lr * gv).collect();
            Tensor::from_parts(p.shape().to_vec(), data)
        })
        .collect())
}

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with the usual 0.9 / 0.999 / 1e-8.
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Advances the moments by one step and updates `params` in place.
    ///
    /// A zero learning rate still advances the moments but leaves every
    /// parameter bit unchanged.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid("learning rate", format!("Adam needs lr >= 0, got {lr}")));
        }
        check_pairs("adam_step", params, grads)?;
        check_pairs("adam_step", &self.first_moment, grads)?;
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            let (pd, gd) = (p.data_mut(), g.data());
            for (i, &gi) in gd.iter().enumerate() {
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                if lr > 0.0 {
                    let update = (mi / c1) / (libm::sqrt(vi / c2) + self.eps);
                    pd[i] -= lr * update;
                }
            }
        }
        Ok(())
    }
}
