//! Centered-lattice Fourier transforms.
//!
//! Every lattice in this crate is centered: `x_j = (j - n/2) h` with the
//! conjugate lattice `u_m = (m - n/2) g`, `g h = 2pi / n`. The helpers here
//! compute the continuum-normalized transform
//!
//! ```text
//! G[m] = h * sum_j exp(sign * i * u_m * x_j) f[j]
//! ```
//!
//! using a radix-2 FFT plus index-parity twiddles, so that forward/inverse
//! pairs are exact on the lattice. Callers supply the `1/(2pi)` factors of
//! their particular transform convention.

use ndarray::{Array2, Axis};
use num_complex::Complex;
use rustfft::FftPlanner;
use std::cell::RefCell;

pub type C64 = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized FFT: forward is `sum_j e^{-2pi i mj/n} f_j`, inverse `e^{+2pi i mj/n}`.
pub fn fft_in_place(buf: &mut [C64], inverse: bool) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let fft = if inverse {
            planner.plan_fft_inverse(buf.len())
        } else {
            planner.plan_fft_forward(buf.len())
        };
        fft.process(buf);
    });
}

/// Centered-lattice transform of one vector; both lattices are centered and
/// the length must be a multiple of 4 (all grids in this crate are).
pub fn centered_ft(values: &[C64], step: f64, sign: Sign) -> Vec<C64> {
    let n = values.len();
    assert!(n % 4 == 0, "centered_ft requires n % 4 == 0, got {n}");
    let mut buf: Vec<C64> = values
        .iter()
        .enumerate()
        .map(|(j, &v)| if j % 2 == 0 { v } else { -v })
        .collect();
    fft_in_place(&mut buf, sign == Sign::Plus);
    for (m, v) in buf.iter_mut().enumerate() {
        let parity = if m % 2 == 0 { 1.0 } else { -1.0 };
        *v *= parity * step;
    }
    buf
}

/// Apply [`centered_ft`] along `axis` of a 2-D array.
pub fn centered_ft_axis(values: &Array2<C64>, axis: usize, step: f64, sign: Sign) -> Array2<C64> {
    let mut out = values.clone();
    for mut lane in out.lanes_mut(Axis(axis)) {
        let row: Vec<C64> = lane.iter().copied().collect();
        let transformed = centered_ft(&row, step, sign);
        for (dst, src) in lane.iter_mut().zip(transformed) {
            *dst = src;
        }
    }
    out
}

/// Full 2-D centered transform with per-axis steps and signs.
pub fn centered_ft_2d(
    values: &Array2<C64>,
    steps: (f64, f64),
    signs: (Sign, Sign),
) -> Array2<C64> {
    let pass0 = centered_ft_axis(values, 0, steps.0, signs.0);
    centered_ft_axis(&pass0, 1, steps.1, signs.1)
}

/// Band-limited interpolation of a 2-D lattice function onto the doubled
/// lattice (same physical extent, half the spacing). The spectrum is
/// zero-padded, with the Nyquist row/column split symmetrically.
pub fn upsample2x_2d(values: &Array2<C64>, steps: (f64, f64)) -> Array2<C64> {
    let n = values.nrows();
    assert_eq!(n, values.ncols(), "upsample2x_2d expects a square array");
    let g0 = 2.0 * std::f64::consts::PI / (n as f64 * steps.0);
    let g1 = 2.0 * std::f64::consts::PI / (n as f64 * steps.1);

    let spectrum = centered_ft_2d(values, steps, (Sign::Minus, Sign::Minus));

    let m = 2 * n;
    let mut padded = Array2::<C64>::zeros((m, m));
    let off = n / 2;
    for i in 0..n {
        for j in 0..n {
            padded[[off + i, off + j]] = spectrum[[i, j]];
        }
    }
    // Split the most-negative frequency bins into both lattice ends so the
    // interpolant keeps the input's conjugation symmetry.
    for j in 0..n {
        let v = padded[[off, off + j]] * 0.5;
        padded[[off, off + j]] = v;
        padded[[off + n, off + j]] = v;
    }
    for i in 0..=n {
        let v = padded[[off + i, off]] * 0.5;
        padded[[off + i, off]] = v;
        padded[[off + i, off + n]] = v;
    }

    let inv = centered_ft_2d(&padded, (g0, g1), (Sign::Plus, Sign::Plus));
    let norm = 1.0 / (2.0 * std::f64::consts::PI).powi(2);
    inv.mapv(|v| v * norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn naive_centered_ft(values: &[C64], step: f64, sign: Sign) -> Vec<C64> {
        let n = values.len() as f64;
        let g = 2.0 * std::f64::consts::PI / (n * step);
        let s = match sign {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        };
        (0..values.len())
            .map(|m| {
                let u = (m as f64 - n / 2.0) * g;
                values
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let x = (j as f64 - n / 2.0) * step;
                        v * C64::from_polar(1.0, s * u * x)
                    })
                    .sum::<C64>()
                    * step
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let n = 16;
        let h = 0.35;
        let values: Vec<C64> = (0..n)
            .map(|j| C64::new((j as f64 * 0.7).sin(), (j as f64 * 0.3).cos()))
            .collect();
        for sign in [Sign::Plus, Sign::Minus] {
            let fast = centered_ft(&values, h, sign);
            let slow = naive_centered_ft(&values, h, sign);
            for (a, b) in fast.iter().zip(&slow) {
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
                assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn forward_inverse_round_trip() {
        let n = 32;
        let h = 0.25;
        let g = 2.0 * std::f64::consts::PI / (n as f64 * h);
        let values: Vec<C64> = (0..n)
            .map(|j| C64::new((j as f64 * 0.11).cos(), (j as f64 * 0.41).sin()))
            .collect();
        let forward = centered_ft(&values, h, Sign::Plus);
        let back: Vec<C64> = centered_ft(&forward, g, Sign::Minus)
            .into_iter()
            .map(|v| v / (2.0 * std::f64::consts::PI))
            .collect();
        for (a, b) in back.iter().zip(&values) {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_transform_closed_form() {
        // F_+[e^{-x^2/2}](u) = sqrt(2 pi) e^{-u^2/2}
        let n = 64;
        let length = 20.0;
        let h = length / n as f64;
        let values: Vec<C64> = (0..n)
            .map(|j| {
                let x = (j as f64 - n as f64 / 2.0) * h;
                C64::new((-x * x / 2.0).exp(), 0.0)
            })
            .collect();
        let g = 2.0 * std::f64::consts::PI / length;
        let out = centered_ft(&values, h, Sign::Plus);
        for (m, v) in out.iter().enumerate() {
            let u = (m as f64 - n as f64 / 2.0) * g;
            let expected = (2.0 * std::f64::consts::PI).sqrt() * (-u * u / 2.0).exp();
            assert_abs_diff_eq!(v.re, expected, epsilon = 1e-10);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn upsample_reproduces_band_limited_function() {
        let n = 64;
        let h = 0.4;
        let f = |x: f64, y: f64| {
            C64::from_polar((-x * x / 2.0 - y * y / 3.0).exp(), 0.7 * x - 0.2 * y)
        };
        let mut values = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let x = (i as f64 - n as f64 / 2.0) * h;
                let y = (j as f64 - n as f64 / 2.0) * h;
                values[[i, j]] = f(x, y);
            }
        }
        let fine = upsample2x_2d(&values, (h, h));
        let m = 2 * n;
        for i in 0..m {
            for j in 0..m {
                let x = (i as f64 - m as f64 / 2.0) * h / 2.0;
                let y = (j as f64 - m as f64 / 2.0) * h / 2.0;
                let expected = f(x, y);
                assert_abs_diff_eq!(fine[[i, j]].re, expected.re, epsilon = 1e-9);
                assert_abs_diff_eq!(fine[[i, j]].im, expected.im, epsilon = 1e-9);
            }
        }
    }
}
