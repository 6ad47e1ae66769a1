use super::params::ParamSet;
use crate::Result;
use rand::Rng;

/// Compares the analytic gradients currently stored in `params` against
/// central finite differences of `loss_fn`, probing random coordinates.
///
/// Callers run one forward/backward pass first so `params` holds the
/// analytic gradient of the same loss that `loss_fn` evaluates. Returns the
/// maximum over probes of `|a - n| / max(1, |a|, |n|)`.
pub fn grad_check<F>(
    params: &mut ParamSet,
    probes: usize,
    h: f64,
    rng: &mut impl Rng,
    mut loss_fn: F,
) -> Result<f64>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let ids: Vec<_> = params.ids().collect();
    let sizes: Vec<usize> = ids.iter().map(|&id| params.value(id).len()).collect();
    let total: usize = sizes.iter().sum();
    let mut max_rel: f64 = 0.0;
    for _ in 0..probes {
        let mut flat = rng.gen_range(0..total);
        let mut which = 0;
        while flat >= sizes[which] {
            flat -= sizes[which];
            which += 1;
        }
        let id = ids[which];
        let original = params.value(id).data()[flat];
        params.value_mut(id).data_mut()[flat] = original + h;
        let up = loss_fn(params)?;
        params.value_mut(id).data_mut()[flat] = original - h;
        let down = loss_fn(params)?;
        params.value_mut(id).data_mut()[flat] = original;
        let numeric = (up - down) / (2.0 * h);
        let analytic = params.grad(id).data()[flat];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
