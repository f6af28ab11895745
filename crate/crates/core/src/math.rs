//! Small numerical helpers shared across modules.

/// sinc(x) = sin(x)/x with the removable singularity at 0.
///
/// The convention is fixed here once: unnormalized (no pi), sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        // |x| < 1e-4 keeps the truncation below 1e-21 relative.
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// exp(-x) + x - 1, evaluated without cancellation for small x.
///
/// Direct evaluation loses all precision as x -> 0 (the result is
/// ~x^2/2 against terms of size 1); the series is exact there.
pub fn exp_neg_plus_x_minus_one(x: f64) -> f64 {
    if x >= 1.0 {
        (-x).exp() + x - 1.0
    } else {
        // sum_{n>=2} (-1)^n x^n / n!
        let mut term = x * x / 2.0;
        let mut sum = term;
        let mut n = 2.0;
        while term.abs() > sum.abs() * 1e-18 + 1e-300 {
            n += 1.0;
            term *= -x / n;
            sum += term;
        }
        sum
    }
}

/// Compensated (Neumaier) summation. Order-insensitive at the level of
/// double-double accuracy, so parallel or reordered accumulation of the
/// same terms reproduces the same value to well below any tolerance used
/// in this crate.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Solve the symmetric positive-definite system A x = b in place via
/// Cholesky; returns None when A is not positive definite. Systems here
/// are tiny (fit normal equations, <= 6 parameters).
pub fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // forward then back substitution
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Invert a symmetric positive-definite matrix (for covariance extraction).
pub fn spd_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut inv = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = cholesky_solve(a, &e)?;
        for row in 0..n {
            inv[row][col] = x[row];
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinc_at_zero_and_near_zero() {
        assert_eq!(sinc(0.0), 1.0);
        let x = 1e-5;
        assert!((sinc(x) - (1.0 - x * x / 6.0)).abs() < 1e-18);
        assert!((sinc(1.0) - 1.0_f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn exp_helper_matches_direct_for_moderate_x() {
        for &x in &[0.5, 1.0, 3.0, 10.0] {
            let direct = (-x as f64).exp() + x - 1.0;
            let stable = exp_neg_plus_x_minus_one(x);
            assert!(
                (direct - stable).abs() <= 1e-14 * direct.abs().max(1.0),
                "x={x}: {direct} vs {stable}"
            );
        }
    }

    #[test]
    fn exp_helper_small_x_is_half_x_squared() {
        let x = 1e-9;
        let v = exp_neg_plus_x_minus_one(x);
        assert!(((v - x * x / 2.0) / (x * x / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let mut s = NeumaierSum::new();
        s.add(1e16);
        s.add(1.0);
        s.add(-1e16);
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = cholesky_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-12);
        let inv = spd_inverse(&a).unwrap();
        let det = 11.0;
        assert!((inv[0][0] - 3.0 / det).abs() < 1e-12);
        assert!((inv[1][1] - 4.0 / det).abs() < 1e-12);
    }
}
