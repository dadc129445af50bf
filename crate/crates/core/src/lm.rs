//! Levenberg–Marquardt for small dense least-squares problems.
//!
//! Objective is `S(p) = Σ r_i(p)²`. The damping factor is multiplied by 10
//! after a rejected step and divided by 10 after an accepted one; the
//! damping term is scaled by the diagonal of JᵀJ (Marquardt scaling).

use nalgebra::{DMatrix, DVector};

pub trait LeastSquaresProblem {
    fn residuals(&self, params: &DVector<f64>) -> DVector<f64>;

    /// ∂r_i/∂p_j, one row per residual.
    fn jacobian(&self, params: &DVector<f64>) -> DMatrix<f64>;

    /// Maps a trial point back into the feasible set (identity by default).
    fn project(&self, _params: &mut DVector<f64>) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    /// Upper bound on step attempts, accepted or not.
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the objective by less than this
    /// fraction.
    pub relative_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            relative_tolerance: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after the start point and after every accepted step.
    pub history: Vec<f64>,
}

const MAX_DAMPING: f64 = 1e20;

fn sum_sq(r: &DVector<f64>) -> f64 {
    r.iter().map(|x| x * x).sum()
}

pub fn levenberg_marquardt<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    start: DVector<f64>,
    options: &LmOptions,
) -> LmReport {
    let mut params = start;
    problem.project(&mut params);
    let mut residuals = problem.residuals(&params);
    let mut objective = sum_sq(&residuals);
    let mut history = vec![objective];
    let mut damping = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    if !objective.is_finite() {
        return LmReport { params, objective, iterations, converged, history };
    }

    let mut jac = problem.jacobian(&params);
    while iterations < options.max_iterations {
        if objective == 0.0 {
            converged = true;
            break;
        }
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &residuals;
        let n = jtj.nrows();
        let mut a = jtj.clone();
        for k in 0..n {
            // floor keeps parameters the data are blind to from blowing up
            let d = jtj[(k, k)].max(1e-12 * (1.0 + jtj.diagonal().amax()));
            a[(k, k)] += damping * d;
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&(-&jtr)),
            None => {
                damping *= 10.0;
                if damping > MAX_DAMPING {
                    break;
                }
                continue;
            }
        };
        let mut trial = &params + &step;
        problem.project(&mut trial);
        let trial_res = problem.residuals(&trial);
        let trial_obj = sum_sq(&trial_res);

        if trial_obj.is_finite() && trial_obj < objective {
            let decrease = (objective - trial_obj) / objective;
            params = trial;
            residuals = trial_res;
            objective = trial_obj;
            history.push(objective);
            damping = (damping / 10.0).max(1e-15);
            if decrease < options.relative_tolerance {
                converged = true;
                break;
            }
            jac = problem.jacobian(&params);
        } else {
            damping *= 10.0;
            if damping > MAX_DAMPING {
                // No descent direction left at any step length: stationary.
                converged = true;
                break;
            }
        }
    }
    LmReport { params, objective, iterations, converged, history }
}

/// `s² (JᵀJ)⁻¹` with `s² = S / (m − n)`; `None` when JᵀJ is singular or
/// there are no residual degrees of freedom.
pub fn covariance(jac: &DMatrix<f64>, objective: f64) -> Option<DMatrix<f64>> {
    let (m, n) = jac.shape();
    if m <= n {
        return None;
    }
    let jtj = jac.transpose() * jac;
    let inv = jtj.try_inverse()?;
    let s2 = objective / (m - n) as f64;
    Some(inv * s2)
}
