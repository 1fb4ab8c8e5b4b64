//! Central-finite-difference gradient verification.
//!
//! Used by the test suites to compare every layer's analytic gradients
//! against numeric differentiation in f64.

/// Central difference d f / d x_i with step h on a scalar-valued function.
pub fn numeric_grad<Fun>(f: &mut Fun, x: &mut [f64], i: usize, h: f64) -> f64
where
    Fun: FnMut(&[f64]) -> f64,
{
    let orig = x[i];
    x[i] = orig + h;
    let fp = f(x);
    x[i] = orig - h;
    let fm = f(x);
    x[i] = orig;
    (fp - fm) / (2.0 * h)
}

/// Relative error between an analytic and a numeric gradient entry. Entries
/// smaller than the floor in magnitude are compared absolutely against it.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / denom
}

/// Checks `probes` randomly chosen coordinates of `x` against the analytic
/// gradient, returning the worst relative error.
pub fn check_grad<Fun>(
    f: &mut Fun,
    x: &mut [f64],
    analytic: &[f64],
    probes: usize,
    rng: &mut impl rand::Rng,
) -> f64
where
    Fun: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len());
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.gen_range(0..x.len());
        let h = 1e-5 * (1.0 + x[i].abs());
        let num = numeric_grad(f, x, i, h);
        worst = worst.max(relative_error(analytic[i], num));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_grad_of_square() {
        let mut x = vec![3.0];
        let g = numeric_grad(&mut |v: &[f64]| v[0] * v[0], &mut x, 0, 1e-6);
        assert!((g - 6.0).abs() < 1e-6);
        assert_eq!(x[0], 3.0, "probe restores the input");
    }

    #[test]
    fn relative_error_floors_tiny_gradients() {
        assert!(relative_error(1e-9, 0.0) < 1e-4);
        assert!(relative_error(1.0, 2.0) > 0.1);
    }
}
