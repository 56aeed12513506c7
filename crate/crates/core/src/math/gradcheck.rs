//! Central finite differences: the independent oracle every recorded
//! gradient is validated against.

use crate::math::Real;

/// Central-difference gradient of `f` at `x` with step `h` per coordinate.
pub fn central_diff(f: &impl Fn(&[Real]) -> Real, x: &[Real], h: Real) -> Vec<Real> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Worst relative error between an analytic gradient and its
/// finite-difference estimate, with a small floor against 0/0.
pub fn max_rel_err(analytic: &[Real], fd: &[Real]) -> Real {
    assert_eq!(analytic.len(), fd.len());
    let mut worst: Real = 0.0;
    for (&a, &d) in analytic.iter().zip(fd) {
        let denom: Real = a.abs().max(d.abs()).max(1e-6);
        worst = worst.max((a - d).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let f = |x: &[Real]| x.iter().map(|v| v * v).sum::<Real>();
        let g = central_diff(&f, &[3.0, -1.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert!((g[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn rel_err_floor_handles_zero_grads() {
        assert_eq!(max_rel_err(&[0.0], &[0.0]), 0.0);
    }
}
