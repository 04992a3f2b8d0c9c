//! Small quadrature helpers on uniform grids and on closures.

use crate::scalar::{lit, Scalar};

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid<T: Scalar>(samples: &[T], step: T) -> T {
    match samples.len() {
        0 | 1 => T::zero(),
        n => {
            let inner = samples[1..n - 1].iter().fold(T::zero(), |acc, &v| acc + v);
            step * (inner + (samples[0] + samples[n - 1]) * lit(0.5))
        }
    }
}

/// Composite Simpson rule for `f` on `[a, b]` with `intervals` subintervals
/// (rounded up to an even count).
pub fn simpson<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, intervals: usize) -> T {
    let n = (intervals.max(2) + 1) & !1;
    let step = (b - a) / T::from_usize(n).unwrap();
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w: T = if i % 2 == 1 { lit(4.0) } else { lit(2.0) };
        acc = acc + w * f(a + step * T::from_usize(i).unwrap());
    }
    acc * step / lit(3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_on_linear_data() {
        let samples: Vec<f64> = (0..11).map(|i| 2.0 * i as f64 * 0.1 + 1.0).collect();
        assert!((trapezoid(&samples, 0.1) - 2.0).abs() < 1e-12);
        assert_eq!(trapezoid::<f64>(&[3.0], 0.1), 0.0);
    }

    #[test]
    fn simpson_matches_closed_form() {
        let v = simpson(|s: f64| (-s).exp(), 0.0, 3.0, 2000);
        assert!((v - (1.0 - (-3.0f64).exp())).abs() < 1e-10);
    }
}
