use rand::Rng as _;

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;

/// `√(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `fan_in x fan_out` tensor with entries uniform on the Glorot interval.
pub fn glorot_init<T: Scalar>(fan_in: usize, fan_out: usize, seed: u64) -> Result<Tensor<T>> {
    let mut rng = stream(seed, "glorot", 0);
    glorot_uniform(fan_in, fan_out, fan_in, fan_out, &mut rng)
}

/// Glorot-uniform tensor of arbitrary shape with explicit fans.
pub fn glorot_uniform<T: Scalar>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Argument(format!("glorot fans must be positive, got {fan_in}x{fan_out}")));
    }
    let b = glorot_bound(fan_in, fan_out);
    Ok(Tensor::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-b..=b))))
}

/// Inverted-dropout multiplier: `0` with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask<T: Scalar>(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Argument(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep = T::of(1.0 / (1.0 - rate));
    Ok(Tensor::from_fn(rows, cols, |_, _| {
        if rate > 0.0 && rng.gen::<f64>() < rate {
            T::zero()
        } else {
            keep
        }
    }))
}

pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, training: bool, seed: u64) -> Result<Tensor<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Argument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = stream(seed, "dropout", 0);
    let mask = dropout_mask(x.rows(), x.cols(), rate, &mut rng)?;
    x.zip_map(&mask, |a, b| a * b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_bound_two_by_two() {
        let t: Tensor<f64> = glorot_init(2, 2, 9).unwrap();
        assert!(t.data().iter().all(|v| v.abs() <= 1.224_744_871_391_589));
        assert!((glorot_bound(2, 2) - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn glorot_deterministic_and_centred() {
        let a: Tensor<f64> = glorot_init(300, 300, 4).unwrap();
        let b: Tensor<f64> = glorot_init(300, 300, 4).unwrap();
        assert_eq!(a, b);
        let first: Vec<f64> = a.data()[..10_000].to_vec();
        let mean = first.iter().sum::<f64>() / first.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!(glorot_init::<f64>(0, 3, 1).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::from_fn(4, 5, |i, j| (i as f64) - (j as f64) * 0.3);
        assert_eq!(dropout(&x, 0.0, true, 1).unwrap(), x);
        assert_eq!(dropout(&x, 0.7, false, 1).unwrap(), x);
        assert!(dropout(&x, 1.0, true, 1).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = Tensor::filled(1, 100_000, 1.0f64);
        let y = dropout(&x, 0.5, true, 17).unwrap();
        let mean = y.sum() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
