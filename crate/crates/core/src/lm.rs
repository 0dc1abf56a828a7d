//! Levenberg-Marquardt minimization of nonlinear least squares with
//! finite-difference Jacobians, shared by the plane, homography, camera and
//! similarity refinements.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{sc, Scalar};

/// Solver configuration. Defaults: central differences with relative step
/// 1e-6 (absolute floor 1e-9); damping 1e-3, x0.3 on accept, x3 on reject;
/// stop on relative decrease < 1e-12, step norm < 1e-12 or 100 iterations.
#[derive(Debug, Clone, Copy)]
pub struct LmOptions<T: Scalar> {
    pub max_iters: usize,
    pub lambda_init: T,
    pub lambda_down: T,
    pub lambda_up: T,
    pub lambda_max: T,
    pub rel_decrease_tol: T,
    pub step_tol: T,
    pub fd_rel_step: T,
    pub fd_abs_floor: T,
}

impl<T: Scalar> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lambda_init: sc(1e-3),
            lambda_down: sc(0.3),
            lambda_up: sc(3.0),
            lambda_max: sc(1e12),
            rel_decrease_tol: sc(1e-12),
            step_tol: sc(1e-12),
            fd_rel_step: sc(1e-6),
            fd_abs_floor: sc(1e-9),
        }
    }
}

/// Result of a minimization run.
#[derive(Debug, Clone)]
pub struct LmOutcome<T: Scalar> {
    pub params: DVector<T>,
    pub initial_cost: T,
    pub final_cost: T,
    /// Number of accepted steps.
    pub iterations: usize,
    /// False when the iteration budget ran out before any stop criterion fired.
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_trace: Vec<T>,
}

fn cost_of<T: Scalar>(r: &DVector<T>) -> T {
    r.iter().fold(T::zero(), |acc, v| acc + *v * *v)
}

fn jacobian<T: Scalar, F>(
    residuals: &F,
    x: &DVector<T>,
    r_len: usize,
    opts: &LmOptions<T>,
) -> DMatrix<T>
where
    F: Fn(&DVector<T>) -> DVector<T>,
{
    let n = x.len();
    let mut j = DMatrix::zeros(r_len, n);
    let mut probe = x.clone();
    for col in 0..n {
        let step = (opts.fd_rel_step * x[col].abs()).max(opts.fd_abs_floor);
        probe[col] = x[col] + step;
        let fwd = residuals(&probe);
        probe[col] = x[col] - step;
        let bwd = residuals(&probe);
        probe[col] = x[col];
        let scale = T::one() / (step + step);
        for row in 0..r_len {
            j[(row, col)] = (fwd[row] - bwd[row]) * scale;
        }
    }
    j
}

/// Minimizes `|residuals(x)|^2` starting from `x0`.
///
/// `retract` is applied to the start point and after every accepted step; it
/// must not change the cost (gauge normalization such as rescaling a
/// homogeneous parameter vector, or re-basing a local parameterization).
pub fn minimize<T, F, G>(
    x0: DVector<T>,
    residuals: F,
    retract: G,
    opts: &LmOptions<T>,
) -> LmOutcome<T>
where
    T: Scalar,
    F: Fn(&DVector<T>) -> DVector<T>,
    G: Fn(&mut DVector<T>),
{
    let mut x = x0;
    retract(&mut x);
    let mut r = residuals(&x);
    let mut cost = cost_of(&r);
    let initial_cost = cost;
    let mut trace = vec![cost];
    let mut lambda = opts.lambda_init;
    let mut iterations = 0;
    let mut converged = false;

    let tiny = sc::<T>(1e-30);
    if cost <= tiny || !cost.is_finite() {
        return LmOutcome {
            params: x,
            initial_cost,
            final_cost: cost,
            iterations: 0,
            converged: cost.is_finite(),
            cost_trace: trace,
        };
    }

    'outer: for _ in 0..opts.max_iters {
        let j = jacobian(&residuals, &x, r.len(), opts);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let jtr = &jt * &r;

        // Try steps with increasing damping until one decreases the cost.
        loop {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda;
            }
            let step = match a.lu().solve(&(-&jtr)) {
                Some(s) => s,
                None => {
                    lambda *= opts.lambda_up;
                    if lambda > opts.lambda_max {
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut candidate = &x + &step;
            retract(&mut candidate);
            let cand_r = residuals(&candidate);
            let cand_cost = cost_of(&cand_r);

            if cand_cost.is_finite() && cand_cost < cost {
                let decrease = (cost - cand_cost) / cost;
                let step_norm = step.norm();
                x = candidate;
                r = cand_r;
                cost = cand_cost;
                trace.push(cost);
                iterations += 1;
                lambda *= opts.lambda_down;
                if decrease < opts.rel_decrease_tol || step_norm < opts.step_tol || cost <= tiny {
                    converged = true;
                    break 'outer;
                }
                break;
            }

            lambda *= opts.lambda_up;
            if lambda > opts.lambda_max {
                // No descent direction left at maximum damping.
                converged = true;
                break 'outer;
            }
        }
    }

    LmOutcome { params: x, initial_cost, final_cost: cost, iterations, converged, cost_trace: trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl_converges_to_minimum() {
        let target = DVector::from_vec(vec![3.0, -2.0, 0.5]);
        let t = target.clone();
        let out = minimize(
            DVector::zeros(3),
            move |x: &DVector<f64>| x - &t,
            |_| {},
            &LmOptions::default(),
        );
        assert!(out.converged);
        assert!((out.params - target).norm() < 1e-10);
    }

    #[test]
    fn rosenbrock_descends_monotonically() {
        let residuals =
            |x: &DVector<f64>| DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
        let out = minimize(
            DVector::from_vec(vec![-1.2, 1.0]),
            residuals,
            |_| {},
            &LmOptions { max_iters: 500, ..Default::default() },
        );
        for w in out.cost_trace.windows(2) {
            assert!(w[1] <= w[0], "accepted step increased the cost");
        }
        assert!((out.params[0] - 1.0).abs() < 1e-6);
        assert!((out.params[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_initial_cost_returns_immediately() {
        let out = minimize(
            DVector::from_vec(vec![1.0, 2.0]),
            |_x: &DVector<f64>| DVector::zeros(2),
            |_| {},
            &LmOptions::default(),
        );
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn gauge_retraction_is_applied() {
        // Minimize over a homogeneous 2-vector with unit-norm gauge.
        let residuals = |x: &DVector<f64>| DVector::from_vec(vec![x[0] / x[1] - 4.0]);
        let out = minimize(
            DVector::from_vec(vec![1.0, 1.0]),
            residuals,
            |x: &mut DVector<f64>| {
                let n = x.norm();
                *x /= n;
            },
            &LmOptions::default(),
        );
        assert!((out.params.norm() - 1.0).abs() < 1e-12);
        assert!((out.params[0] / out.params[1] - 4.0).abs() < 1e-8);
    }
}
