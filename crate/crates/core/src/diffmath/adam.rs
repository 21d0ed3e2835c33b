use super::ParamStore;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter, then zero the
/// gradients. A non-finite gradient aborts before anything is modified.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, cfg: &AdamConfig) -> Result<()> {
    if let Some(bad) = store.entries().iter().find(|e| !e.grad.is_finite()) {
        return Err(Error::Numeric(format!("gradient of {} is not finite", bad.name)));
    }
    store.step += 1;
    let t = store.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);
    for e in store.entries_mut() {
        let value = e.value.data_mut();
        let grad = e.grad.data_mut();
        let m = e.m.data_mut();
        let v = e.v.data_mut();
        for k in 0..value.len() {
            let g = grad[k];
            m[k] = b1 * m[k] + (T::one() - b1) * g;
            v[k] = b2 * v[k] + (T::one() - b2) * g * g;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            grad[k] = T::zero();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::{ParamId, Tensor};

    fn scalar_store(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(x)).unwrap();
        s
    }

    #[test]
    fn zero_gradient_keeps_values_and_counts_step() {
        let mut s = scalar_store(0.7);
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.get("x").unwrap().get(0, 0), 0.7);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for &g in &[3.0, -0.02, 250.0] {
            let mut s = scalar_store(1.0);
            let id = s.id("x").unwrap();
            s.accumulate_grad(id, &Tensor::scalar(g)).unwrap();
            adam_step(&mut s, &AdamConfig::default()).unwrap();
            let moved = 1.0 - s.get("x").unwrap().get(0, 0);
            let want = 0.001 * g / (g.abs() + 1e-8);
            assert!((moved - want).abs() < 1e-15, "g={g}: {moved} vs {want}");
            assert_eq!(s.grad(id).get(0, 0), 0.0);
        }
    }

    /// Scalar reference recurrences written out independently.
    fn reference_adam_on_square(x0: f64, steps: usize) -> f64 {
        let (lr, b1, b2, eps) = (0.001f64, 0.9f64, 0.999f64, 1e-8f64);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * x;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        x
    }

    #[test]
    fn two_hundred_steps_on_square() {
        let mut s = scalar_store(1.0);
        let id = s.id("x").unwrap();
        for _ in 0..200 {
            let x = s.value(id).get(0, 0);
            s.accumulate_grad(id, &Tensor::scalar(2.0 * x)).unwrap();
            adam_step(&mut s, &AdamConfig::default()).unwrap();
        }
        let x = s.value(id).get(0, 0);
        let reference = reference_adam_on_square(1.0, 200);
        assert!((x - reference).abs() < 1e-14);
        assert!(x.abs() < 0.9);
        assert_eq!(s.step, 200);
    }

    #[test]
    fn odd_symmetry() {
        let mut a = scalar_store(0.3);
        let mut b = scalar_store(-0.3);
        for k in 0..5 {
            let g = 0.5 - 0.2 * k as f64;
            a.accumulate_grad(ParamId(0), &Tensor::scalar(g)).unwrap();
            b.accumulate_grad(ParamId(0), &Tensor::scalar(-g)).unwrap();
            adam_step(&mut a, &AdamConfig::default()).unwrap();
            adam_step(&mut b, &AdamConfig::default()).unwrap();
            assert_eq!(a.value(ParamId(0)).get(0, 0), -b.value(ParamId(0)).get(0, 0));
        }
    }

    #[test]
    fn non_finite_gradient_aborts_with_name() {
        let mut s = scalar_store(1.0);
        s.accumulate_grad(ParamId(0), &Tensor::scalar(f64::NAN)).unwrap();
        let err = adam_step(&mut s, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains('x'));
        assert_eq!(s.step, 0);
        assert_eq!(s.value(ParamId(0)).get(0, 0), 1.0);
    }

}
