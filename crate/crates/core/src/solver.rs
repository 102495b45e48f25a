//! Limited-memory BFGS with backtracking Armijo line search.
//!
//! Two-loop recursion per Nocedal & Wright, Algorithm 7.4/7.5. The line
//! search only accepts steps that decrease the objective, so the returned
//! value never exceeds the starting value.

use nalgebra::DVector;

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub memory: usize,
    /// Stop when the relative decrease per iteration falls below this.
    pub rel_decrease: f64,
    /// Stop when the gradient norm falls below this.
    pub grad_tol: f64,
    pub armijo_c1: f64,
    pub max_backtracks: usize,
    pub min_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iters: 50,
            memory: 8,
            rel_decrease: 1e-10,
            grad_tol: 1e-12,
            armijo_c1: 1e-4,
            max_backtracks: 40,
            min_step: 1e-18,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LbfgsOutcome {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

/// Minimize `f` starting from `x`, updating `x` in place. The closure
/// writes the gradient into its second argument and returns the value.
pub fn minimize<F>(x: &mut DVector<f64>, opts: &LbfgsOptions, f: F) -> LbfgsOutcome
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    let mut trace = Vec::new();
    minimize_traced(x, opts, f, &mut trace)
}

/// Like [`minimize`], but appends the starting value and every accepted
/// iterate's value to `trace` (the monotone sequence of the line search).
pub fn minimize_traced<F>(
    x: &mut DVector<f64>,
    opts: &LbfgsOptions,
    mut f: F,
    trace: &mut Vec<f64>,
) -> LbfgsOutcome
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>) -> f64,
{
    let n = x.len();
    let mut grad = DVector::zeros(n);
    let mut value = f(x, &mut grad);
    trace.push(value);
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut outcome = LbfgsOutcome {
        value,
        iterations: 0,
        converged: false,
        line_search_failed: false,
    };

    for iter in 0..opts.max_iters {
        let gnorm = grad.norm();
        if gnorm < opts.grad_tol {
            outcome.converged = true;
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = grad.clone();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = rho_hist[i] * s_hist[i].dot(&q);
            q.axpy(-alpha[i], &y_hist[i], 1.0);
        }
        if m > 0 {
            let last = m - 1;
            let gamma = s_hist[last].dot(&y_hist[last]) / y_hist[last].norm_squared();
            q *= gamma;
        }
        for i in 0..m {
            let beta = rho_hist[i] * y_hist[i].dot(&q);
            q.axpy(alpha[i] - beta, &s_hist[i], 1.0);
        }
        let mut dir = -q;
        let mut slope = grad.dot(&dir);
        if slope >= 0.0 {
            // Not a descent direction; fall back to steepest descent.
            dir = -grad.clone();
            slope = grad.dot(&dir);
        }

        // Backtracking Armijo search; first iteration scales to unit step.
        let mut step = if m == 0 { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let x0 = x.clone();
        let mut new_grad = DVector::zeros(n);
        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            *x = &x0 + &dir * step;
            let trial = f(x, &mut new_grad);
            if trial <= value + opts.armijo_c1 * step * slope {
                accepted = true;
                let s = x.clone() - &x0;
                let yv = &new_grad - &grad;
                let sy = s.dot(&yv);
                if sy > 1e-14 * s.norm() * yv.norm() {
                    if s_hist.len() == opts.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    rho_hist.push(1.0 / sy);
                    s_hist.push(s);
                    y_hist.push(yv);
                }
                let prev = value;
                value = trial;
                trace.push(value);
                grad.copy_from(&new_grad);
                outcome.iterations = iter + 1;
                let denom = prev.abs().max(1e-300);
                if (prev - value) / denom < opts.rel_decrease {
                    outcome.converged = true;
                }
                break;
            }
            step *= 0.5;
            if step < opts.min_step {
                break;
            }
        }
        if !accepted {
            *x = x0;
            outcome.line_search_failed = true;
            break;
        }
        if outcome.converged {
            break;
        }
    }
    outcome.value = value;
    outcome
}
