//! Moving-average series decomposition.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

fn check_kernel(kernel: usize) -> Result<()> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::Config(format!("decomposition kernel must be odd, got {kernel}")));
    }
    Ok(())
}

/// `[len, len]` matrix `A` with `A·x` the centered moving average of `x`
/// using replicated edges.
pub fn moving_average_matrix(len: usize, kernel: usize) -> Result<Tensor> {
    check_kernel(kernel)?;
    if len == 0 {
        return Err(Error::shape("series_decomposition", "empty series"));
    }
    let half = (kernel / 2) as isize;
    let w = 1.0 / kernel as f64;
    let mut a = Tensor::zeros(&[len, len]);
    let last = len as isize - 1;
    for t in 0..len as isize {
        for j in -half..=half {
            let src = (t + j).clamp(0, last) as usize;
            a.data_mut()[t as usize * len + src] += w;
        }
    }
    Ok(a)
}

/// Split a plain series into `(seasonal, trend)`; `seasonal + trend == x`.
pub fn decompose(x: &[f64], kernel: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let a = moving_average_matrix(x.len(), kernel)?;
    let n = x.len();
    let trend: Vec<f64> = (0..n).map(|t| a.row(t).iter().zip(x).map(|(w, v)| w * v).sum()).collect();
    let seasonal = x.iter().zip(&trend).map(|(v, t)| v - t).collect();
    Ok((seasonal, trend))
}

/// Graph version over the rows (time axis) of a `[len, channels]` matrix.
pub fn series_decomposition(g: &mut Graph, x: Var, kernel: usize) -> Result<(Var, Var)> {
    let len = g.shape(x)[0];
    let a = g.constant(moving_average_matrix(len, kernel)?);
    let trend = g.matmul(a, x)?;
    let seasonal = g.sub(x, trend)?;
    Ok((seasonal, trend))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_series_is_all_trend() {
        let (s, t) = decompose(&[4.0; 9], 5).unwrap();
        assert!(t.iter().all(|v| (v - 4.0).abs() < 1e-15));
        assert!(s.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(matches!(decompose(&[1.0; 5], 4), Err(Error::Config(_))));
    }

    #[test]
    fn kernel_longer_than_series_uses_padding() {
        let (s, t) = decompose(&[1.0, 2.0, 3.0], 25).unwrap();
        for i in 0..3 {
            assert!((s[i] + t[i] - (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn annual_sine_is_mostly_removed() {
        // Window of 13 spans one period plus one sample, leaving -sin(t)/13.
        let x: Vec<f64> = (0..60).map(|t| (2.0 * PI * t as f64 / 12.0).sin()).collect();
        let (_, trend) = decompose(&x, 13).unwrap();
        let interior = &trend[6..54];
        let bound = 1.0 / 13.0;
        assert!(interior.iter().all(|v| v.abs() <= bound + 1e-12));
        let period = &trend[12..24];
        let mean_abs = period.iter().map(|v| v.abs()).sum::<f64>() / 12.0;
        assert!(mean_abs <= 0.05, "{mean_abs}");
    }

    proptest! {
        #[test]
        fn reconstruction_and_linearity(
            x in prop::collection::vec(-50.0f64..50.0, 2..40),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            seed in 0u64..1000,
        ) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.5 + ((i as u64 + seed) % 7) as f64).collect();
            let (sx, tx) = decompose(&x, 5).unwrap();
            for i in 0..x.len() {
                prop_assert!((sx[i] + tx[i] - x[i]).abs() <= 1e-12);
            }
            let (sy, ty) = decompose(&y, 5).unwrap();
            let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (sz, tz) = decompose(&z, 5).unwrap();
            for i in 0..x.len() {
                prop_assert!((sz[i] - (a * sx[i] + b * sy[i])).abs() <= 1e-9);
                prop_assert!((tz[i] - (a * tx[i] + b * ty[i])).abs() <= 1e-9);
            }
        }
    }
}
