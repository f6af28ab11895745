//! Damped least-squares (Levenberg-Marquardt) with numeric Jacobians.
//!
//! The fits in this crate are small (2-4 parameters, tens to hundreds of
//! residuals) and run inside multi-start loops, so the implementation
//! favors robustness over scale: central-difference Jacobians, Cholesky
//! normal equations, and projection-style bounds via a clamp hook.

use crate::math::{cholesky_solve, spd_inverse};
use crate::{Error, Result};

/// A weighted least-squares problem: residuals r_i(p), chi^2 = sum r_i^2.
pub trait LeastSquaresProblem {
    fn n_residuals(&self) -> usize;

    /// Fill `out` (pre-sized to `n_residuals`) with weighted residuals.
    fn residuals(&self, params: &[f64], out: &mut [f64]);

    /// Project parameters back into their feasible region. Default: no-op.
    fn clamp(&self, _params: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative chi^2 improvement below which the fit is converged.
    pub ftol: f64,
    /// Relative step size below which the fit is converged.
    pub xtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-10,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmFit {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// (J^T J)^-1 at the optimum, unscaled; None when the normal matrix
    /// is singular (e.g. a parameter pinned at a bound).
    pub covariance: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
}

fn chi2_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn jacobian<P: LeastSquaresProblem>(
    problem: &P,
    params: &[f64],
    scratch_lo: &mut [f64],
    scratch_hi: &mut [f64],
) -> Vec<Vec<f64>> {
    let n_par = params.len();
    let n_res = problem.n_residuals();
    let mut jac = vec![vec![0.0; n_par]; n_res];
    let mut p = params.to_vec();
    for j in 0..n_par {
        let h = 1e-6 * params[j].abs().max(1.0);
        p[j] = params[j] + h;
        problem.residuals(&p, scratch_hi);
        p[j] = params[j] - h;
        problem.residuals(&p, scratch_lo);
        p[j] = params[j];
        let inv = 0.5 / h;
        for i in 0..n_res {
            jac[i][j] = (scratch_hi[i] - scratch_lo[i]) * inv;
        }
    }
    jac
}

fn normal_equations(jac: &[Vec<f64>], r: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n_par = jac[0].len();
    let mut jtj = vec![vec![0.0; n_par]; n_par];
    let mut jtr = vec![0.0; n_par];
    for (row, &ri) in jac.iter().zip(r.iter()) {
        for a in 0..n_par {
            jtr[a] += row[a] * ri;
            for b in a..n_par {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..n_par {
        for b in 0..a {
            jtj[a][b] = jtj[b][a];
        }
    }
    (jtj, jtr)
}

/// Run LM from `start`; returns the best point found even when the
/// convergence flag is false.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    start: &[f64],
    opts: &LmOptions,
) -> Result<LmFit> {
    let n_res = problem.n_residuals();
    let n_par = start.len();
    if n_res < n_par {
        return Err(Error::FitNonConvergence(format!(
            "{n_res} residuals cannot constrain {n_par} parameters"
        )));
    }
    let mut params = start.to_vec();
    problem.clamp(&mut params);

    let mut r = vec![0.0; n_res];
    let mut r_trial = vec![0.0; n_res];
    let mut lo = vec![0.0; n_res];
    let mut hi = vec![0.0; n_res];
    problem.residuals(&params, &mut r);
    let mut chi2 = chi2_of(&r);
    if !chi2.is_finite() {
        return Err(Error::FitNonConvergence(
            "non-finite residuals at the start point".into(),
        ));
    }

    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    'outer: for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        let jac = jacobian(problem, &params, &mut lo, &mut hi);
        let (jtj, jtr) = normal_equations(&jac, &r);

        let mut accepted = false;
        for _ in 0..16 {
            let mut damped = jtj.clone();
            for a in 0..n_par {
                let d = damped[a][a].max(1e-30);
                damped[a][a] = d * (1.0 + lambda);
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = cholesky_solve(&damped, &rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + s).collect();
            problem.clamp(&mut trial);
            problem.residuals(&trial, &mut r_trial);
            let chi2_trial = chi2_of(&r_trial);
            if chi2_trial.is_finite() && chi2_trial <= chi2 {
                let rel_step = params
                    .iter()
                    .zip(&trial)
                    .map(|(p, t)| (t - p).abs() / p.abs().max(1.0))
                    .fold(0.0f64, f64::max);
                let improvement = (chi2 - chi2_trial) / chi2.max(1e-300);
                params = trial;
                std::mem::swap(&mut r, &mut r_trial);
                chi2 = chi2_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if improvement < opts.ftol || rel_step < opts.xtol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                // stuck: treat the current point as final
                converged = true;
                break 'outer;
            }
        }
        if !accepted {
            converged = true;
            break;
        }
    }

    let jac = jacobian(problem, &params, &mut lo, &mut hi);
    let (jtj, _) = normal_equations(&jac, &r);
    let covariance = spd_inverse(&jtj);

    Ok(LmFit {
        params,
        chi2,
        covariance,
        iterations,
        converged,
    })
}
