use super::Tensor;
use crate::error::{ensure, Result};
use crate::scalar::Scalar;

pub const DEFAULT_LN_EPS: f64 = 1e-6;

/// Rearranges `(n, c·r², h, w)` into `(n, c, h·r, w·r)`.
///
/// Output `(n, c, h·r + a, w·r + b)` reads input `(n, c·r² + a·r + b, h, w)`.
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    ensure!(r >= 1, "pixel_shuffle factor must be >= 1");
    ensure!(
        c % (r * r) == 0,
        "pixel_shuffle: channels {} not divisible by r^2 = {}",
        c,
        r * r
    );
    let oc = c / (r * r);
    let (oh, ow) = (h * r, w * r);
    let mut data = Vec::with_capacity(input.len());
    for ni in 0..n {
        for co in 0..oc {
            for y in 0..oh {
                let (hy, a) = (y / r, y % r);
                for x in 0..ow {
                    let (wx, b) = (x / r, x % r);
                    data.push(input.get(ni, co * r * r + a * r + b, hy, wx));
                }
            }
        }
    }
    Tensor::new([n, oc, oh, ow], data)
}

/// Normalizes the channel vector at every spatial position, then applies a
/// per-channel affine map.
pub fn layer_norm<T: Scalar, W: Scalar>(input: &Tensor<T>, gamma: &[W], beta: &[W], eps: f64) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.shape();
    ensure!(
        gamma.len() == c && beta.len() == c,
        "layer_norm: gamma/beta length {}/{} != channels {}",
        gamma.len(),
        beta.len(),
        c
    );
    let hw = h * w;
    let src = input.data();
    let mut out = vec![0.0f64; input.len()];
    let mut column = vec![0.0f64; c];
    for ni in 0..n {
        let base = ni * c * hw;
        for p in 0..hw {
            for (ci, v) in column.iter_mut().enumerate() {
                *v = src[base + ci * hw + p].to_f64_exact();
            }
            let mean = column.iter().sum::<f64>() / c as f64;
            let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (ci, v) in column.iter().enumerate() {
                out[base + ci * hw + p] = (v - mean) * inv * gamma[ci].to_f64_exact() + beta[ci].to_f64_exact();
            }
        }
    }
    Ok(Tensor::from_f64(input.shape(), &out))
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn mish_scalar(x: f64) -> f64 {
    x * softplus(x).tanh()
}

pub fn mish<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| T::from_f64_round(mish_scalar(v.to_f64_exact())))
}

/// Row-wise softmax of a row-major matrix with `cols` columns.
pub fn softmax_rows<T: Scalar>(input: &[T], cols: usize) -> Result<Vec<T>> {
    ensure!(cols > 0, "softmax_rows: zero columns");
    ensure!(
        input.len().is_multiple_of(cols),
        "softmax_rows: length {} not a multiple of {} columns",
        input.len(),
        cols
    );
    let mut row = vec![0.0f64; cols];
    let mut out = Vec::with_capacity(input.len());
    for chunk in input.chunks(cols) {
        for (r, v) in row.iter_mut().zip(chunk) {
            *r = v.to_f64_exact();
        }
        softmax_in_place(&mut row);
        out.extend(row.iter().map(|&v| T::from_f64_round(v)));
    }
    Ok(out)
}

/// Max-subtracted softmax; sums run left to right.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pixel_shuffle_shape_and_mapping() {
        let x = Tensor::<f32>::from_fn([1, 4, 2, 2], |_, c, _, _| c as f32);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), [1, 1, 4, 4]);
        for by in 0..2 {
            for bx in 0..2 {
                assert_eq!(y.get(0, 0, 2 * by, 2 * bx), 0.0);
                assert_eq!(y.get(0, 0, 2 * by, 2 * bx + 1), 1.0);
                assert_eq!(y.get(0, 0, 2 * by + 1, 2 * bx), 2.0);
                assert_eq!(y.get(0, 0, 2 * by + 1, 2 * bx + 1), 3.0);
            }
        }
    }

    #[test]
    fn pixel_shuffle_rejects_bad_channels() {
        assert!(pixel_shuffle(&Tensor::<f32>::zeros([1, 6, 2, 2]), 2).is_err());
    }

    #[test]
    fn layer_norm_constant_is_zero() {
        let x = Tensor::<f32>::full([1, 8, 3, 3], 4.25);
        let y = layer_norm(&x, &[1.0f32; 8], &[0.0f32; 8], DEFAULT_LN_EPS).unwrap();
        assert!(y.data().iter().all(|v| v.abs() <= 1e-3));
    }

    #[test]
    fn layer_norm_two_points() {
        let x = Tensor::<f64>::new([1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
        let y = layer_norm(&x, &[1.0f64; 2], &[0.0f64; 2], 0.0).unwrap();
        assert_eq!(y.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn layer_norm_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f32>::from_fn([2, 16, 4, 5], |_, _, _, _| rng.gen_range(-10.0..10.0));
        let y = layer_norm(&x, &[1.0f32; 16], &[0.0f32; 16], DEFAULT_LN_EPS).unwrap();
        for n in 0..2 {
            for py in 0..4 {
                for px in 0..5 {
                    let col: Vec<f64> = (0..16).map(|c| y.get(n, c, py, px) as f64).collect();
                    let mean = col.iter().sum::<f64>() / 16.0;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
                    assert!(mean.abs() <= 1e-5);
                    assert!((var - 1.0).abs() <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn mish_values() {
        assert_eq!(mish_scalar(0.0), 0.0);
        assert_abs_diff_eq!(mish_scalar(1.0), 0.865098, epsilon = 1e-5);
        assert_abs_diff_eq!(mish_scalar(-20.0), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(mish_scalar(20.0), 20.0, epsilon = 1e-4);
        assert!(mish_scalar(1e6).is_finite() && mish_scalar(-1e6).is_finite());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_rows(&[0.0f64, 0.0], 2).unwrap(), vec![0.5, 0.5]);
        let big = softmax_rows(&[1000.0f64, 1000.0, 999.0], 3).unwrap();
        assert!(big.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(big.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let logs = softmax_rows(&[1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()], 3).unwrap();
        for (got, want) in logs.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
    }
}
