//! Named parameter storage with Adam state and the update step.

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::collections::BTreeMap;

#[derive(Clone, Debug)]
struct Entry<T> {
    value: Dense<T>,
    grad: Dense<T>,
    adam_m: Dense<T>,
    adam_v: Dense<T>,
}

/// Named parameters with matching gradient and Adam-moment buffers.
/// Iteration order is the sorted name order, so serialization and update
/// sweeps are deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<T> {
    entries: BTreeMap<String, Entry<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        Self { entries: BTreeMap::new() }
    }

    /// Register a parameter; gradient and moments start at zero.
    pub fn insert(&mut self, name: &str, value: Dense<T>) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let zeros = Dense::zeros(value.rows(), value.cols());
        self.entries.insert(
            name.to_string(),
            Entry {
                value,
                grad: zeros.clone(),
                adam_m: zeros.clone(),
                adam_v: zeros,
            },
        );
        Ok(())
    }

    fn entry(&self, name: &str) -> Result<&Entry<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    fn entry_mut(&mut self, name: &str) -> Result<&mut Entry<T>> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    pub fn value(&self, name: &str) -> Result<&Dense<T>> {
        Ok(&self.entry(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Dense<T>> {
        Ok(&mut self.entry_mut(name)?.value)
    }

    pub fn grad(&self, name: &str) -> Result<&Dense<T>> {
        Ok(&self.entry(name)?.grad)
    }

    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Dense<T>> {
        Ok(&mut self.entry_mut(name)?.grad)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Sorted parameter names.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Sorted `(name, value)` pairs.
    pub fn iter_values(&self) -> impl Iterator<Item = (&str, &Dense<T>)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    /// Total scalar parameter count across all entries.
    pub fn total_len(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(T::zero());
        }
    }

    /// One Adam update over every entry. Weight decay enters the gradient
    /// additively (`g = grad + weight_decay·value`, the classic L2 form),
    /// moments use bias correction at step `t ≥ 1`, and gradients are
    /// zeroed afterward.
    pub fn adam_step(
        &mut self,
        lr: T,
        beta1: T,
        beta2: T,
        eps: T,
        weight_decay: T,
        t: usize,
    ) {
        assert!(t >= 1, "adam step index starts at 1");
        let one = T::one();
        let bc1 = one - beta1.powi(t as i32);
        let bc2 = one - beta2.powi(t as i32);
        for e in self.entries.values_mut() {
            for idx in 0..e.value.len() {
                let g = e.grad.data()[idx] + weight_decay * e.value.data()[idx];
                let m = beta1 * e.adam_m.data()[idx] + (one - beta1) * g;
                let v = beta2 * e.adam_v.data()[idx] + (one - beta2) * g * g;
                e.adam_m.data_mut()[idx] = m;
                e.adam_v.data_mut()[idx] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                e.value.data_mut()[idx] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            e.grad.fill(T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_store(value: Dense<f64>) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.insert("w", value).unwrap();
        s
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = single_store(Dense::zeros(1, 1));
        assert!(s.insert("w", Dense::zeros(1, 1)).is_err());
        assert!(s.value("missing").is_err());
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let before = Dense::from_rows(&[vec![0.5, -1.5], vec![2.0, 0.0]]);
        let mut s = single_store(before.clone());
        s.adam_step(0.001, 0.9, 0.999, 1e-8, 0.0, 1);
        assert_eq!(s.value("w").unwrap(), &before);
    }

    #[test]
    fn lr_zero_is_identity_even_with_gradients() {
        let before = Dense::from_rows(&[vec![0.5, -1.5]]);
        let mut s = single_store(before.clone());
        s.grad_mut("w").unwrap().data_mut().copy_from_slice(&[3.0, -2.0]);
        s.adam_step(0.0, 0.9, 0.999, 1e-8, 5e-5, 1);
        assert_eq!(s.value("w").unwrap(), &before);
        // Gradients were consumed.
        assert!(s.grad("w").unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = single_store(Dense::from_rows(&[vec![0.0, 0.0]]));
        s.grad_mut("w").unwrap().data_mut().copy_from_slice(&[4.0, -0.25]);
        let lr = 0.001;
        s.adam_step(lr, 0.9, 0.999, 1e-8, 0.0, 1);
        let w = s.value("w").unwrap();
        assert!((w.get(0, 0) + lr).abs() < lr * 1e-3);
        assert!((w.get(0, 1) - lr).abs() < lr * 1e-3);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut s = single_store(Dense::from_rows(&[vec![10.0]]));
        s.adam_step(0.001, 0.9, 0.999, 1e-8, 5e-5, 1);
        let w = s.value("w").unwrap().get(0, 0);
        assert!(w < 10.0 && w > 9.99);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut s = single_store(Dense::from_rows(&[vec![0.3, -0.8], vec![1.1, 0.05]]));
            for t in 1..=10 {
                let g: Vec<f64> = (0..4).map(|i| ((t * 7 + i * 3) % 5) as f64 - 2.0).collect();
                s.grad_mut("w").unwrap().data_mut().copy_from_slice(&g);
                s.adam_step(0.01, 0.9, 0.999, 1e-8, 5e-5, t);
            }
            s.value("w").unwrap().clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn total_len_sums_entry_sizes() {
        let mut s = ParameterStore::<f64>::new();
        s.insert("a", Dense::zeros(3, 4)).unwrap();
        s.insert("b", Dense::zeros(1, 5)).unwrap();
        assert_eq!(s.total_len(), 17);
    }
}
