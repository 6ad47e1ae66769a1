use super::params::ParamSet;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Adam accumulators, aligned with a [`ParamSet`]'s ordering.
pub struct OptState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let m = params.ids().map(|id| Tensor::zeros_like(params.value(id))).collect();
        let v = params.ids().map(|id| Tensor::zeros_like(params.value(id))).collect();
        OptState {
            m,
            v,
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update from the gradients currently held in
/// `params`; increments the step counter.
pub fn adam_step(params: &mut ParamSet, opt: &mut OptState) -> Result<()> {
    if opt.m.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!("optimizer tracks {} params, set has {}", opt.m.len(), params.len()),
        ));
    }
    opt.step += 1;
    let bc1 = 1.0 - opt.beta1.powi(opt.step as i32);
    let bc2 = 1.0 - opt.beta2.powi(opt.step as i32);
    for (idx, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
        if opt.m[idx].shape() != params.value(id).shape() {
            return Err(Error::shape(
                "adam_step",
                format!("moment shape {:?} vs param {:?}", opt.m[idx].shape(), params.value(id).shape()),
            ));
        }
        let n = params.value(id).len();
        for j in 0..n {
            let g = params.grad(id).data()[j];
            let m = opt.beta1 * opt.m[idx].data()[j] + (1.0 - opt.beta1) * g;
            let v = opt.beta2 * opt.v[idx].data()[j] + (1.0 - opt.beta2) * g * g;
            opt.m[idx].data_mut()[j] = m;
            opt.v[idx].data_mut()[j] = v;
            let update = opt.lr * (m / bc1) / ((v / bc2).sqrt() + opt.eps);
            params.value_mut(id).data_mut()[j] -= update;
        }
    }
    Ok(())
}
