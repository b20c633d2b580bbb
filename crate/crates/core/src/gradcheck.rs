//! Central-difference verification of taped gradients.

use crate::error::{Error, Result};
use crate::optim::ParameterStore;
use crate::scalar::Scalar;

/// Compare the taped gradient of `f` against central differences on every
/// parameter entry and return the maximum relative error, with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `f` evaluates the loss for the current parameter values; when its second
/// argument is true it must also run the backward pass, accumulating into
/// the store's gradient buffers. Calls with `false` must leave gradients
/// untouched.
pub fn finite_difference_check<T, F>(
    mut f: F,
    store: &mut ParameterStore<T>,
    epsilon: T,
) -> Result<T>
where
    T: Scalar,
    F: FnMut(&mut ParameterStore<T>, bool) -> T,
{
    if epsilon <= T::zero() {
        return Err(Error::GradCheck("epsilon must be positive".into()));
    }
    store.zero_grads();
    let base = f(store, true);
    if !base.is_finite() {
        return Err(Error::GradCheck(format!("non-finite base loss {base}")));
    }
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let analytic: Vec<Vec<T>> = names
        .iter()
        .map(|n| store.grad(n).map(|g| g.data().to_vec()))
        .collect::<Result<_>>()?;
    let floor = T::from_f64(1e-8);
    let two = T::from_f64(2.0);
    let mut max_rel = T::zero();
    for (name, grads) in names.iter().zip(&analytic) {
        for idx in 0..grads.len() {
            let original = store.value(name)?.data()[idx];
            store.value_mut(name)?.data_mut()[idx] = original + epsilon;
            let plus = f(store, false);
            store.value_mut(name)?.data_mut()[idx] = original - epsilon;
            let minus = f(store, false);
            store.value_mut(name)?.data_mut()[idx] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::GradCheck(format!(
                    "non-finite perturbed loss at {name}[{idx}]"
                )));
            }
            let numeric = (plus - minus) / (two * epsilon);
            let a = grads[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            max_rel = max_rel.max(rel);
        }
    }
    store.zero_grads();
    Ok(max_rel)
}
