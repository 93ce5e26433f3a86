//! FFT-based circular correlation.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn spectrum(x: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    buf
}

fn inverse_real(mut buf: Vec<Complex<f64>>) -> Vec<f64> {
    let n = buf.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));
    buf.into_iter().map(|c| c.re / n as f64).collect()
}

/// `out[τ] = Σ_t a[t] · b[(t − τ) mod L]`, computed as `ifft(A · conj(B))`.
pub fn circular_cross_correlation(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "correlation operands must have equal length");
    if a.is_empty() {
        return Vec::new();
    }
    let fa = spectrum(a);
    let fb = spectrum(b);
    inverse_real(fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect())
}

/// Cross-correlation of two row-major `[len, channels]` matrices summed
/// over channels.
pub fn channel_summed_correlation(a: &[f64], b: &[f64], len: usize, channels: usize) -> Vec<f64> {
    assert_eq!(a.len(), len * channels);
    assert_eq!(b.len(), len * channels);
    let mut acc = vec![Complex::new(0.0, 0.0); len];
    let mut col_a = vec![0.0; len];
    let mut col_b = vec![0.0; len];
    for c in 0..channels {
        for t in 0..len {
            col_a[t] = a[t * channels + c];
            col_b[t] = b[t * channels + c];
        }
        let fa = spectrum(&col_a);
        let fb = spectrum(&col_b);
        for ((s, x), y) in acc.iter_mut().zip(&fa).zip(&fb) {
            *s += x * y.conj();
        }
    }
    inverse_real(acc)
}
