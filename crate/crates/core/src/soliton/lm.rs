//! Small dense Levenberg-Marquardt solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop once `‖r‖ ≤ tol`.
    pub tol: f64,
    pub initial_damping: f64,
    /// Forward-difference step relative to `max(|x_i|, 1)`.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-12,
            initial_damping: 1e-3,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_DAMPING: f64 = 1e16;

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn jacobian<F>(f: &F, x: &[f64], r0: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut jac = DMatrix::zeros(r0.len(), x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = step * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let r = f(&probe)?;
        probe[i] = x[i];
        for (row, (a, b)) in r.iter().zip(r0).enumerate() {
            jac[(row, i)] = (a - b) / h;
        }
    }
    Ok(jac)
}

/// Minimises `‖f(x)‖²`. A residual evaluation that fails at a trial point
/// counts as a rejected step; failure at an accepted point propagates.
pub fn solve<F>(f: F, x0: &[f64], opts: LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    let mut cost = norm(&r);
    let mut damping = opts.initial_damping;
    let mut history = vec![damping];
    let mut iterations = 0;

    while cost > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let jac = jacobian(&f, &x, &r, opts.fd_step)?;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        let diag_floor = 1e-12 * jtj.diagonal().max().max(f64::MIN_POSITIVE);

        let mut accepted = false;
        while !accepted {
            let mut lhs = jtj.clone();
            for i in 0..x.len() {
                lhs[(i, i)] += damping * jtj[(i, i)].max(diag_floor);
            }
            let Some(chol) = lhs.cholesky() else {
                damping *= 10.0;
                history.push(damping);
                if damping > MAX_DAMPING {
                    return Err(LabError::RankDeficient { damping_history: history });
                }
                continue;
            };
            let delta = chol.solve(&(-&grad));
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            match f(&trial) {
                Ok(rt) if norm(&rt) < cost => {
                    x = trial;
                    cost = norm(&rt);
                    r = rt;
                    damping = (damping / 10.0).max(1e-15);
                    history.push(damping);
                    accepted = true;
                }
                _ => {
                    damping *= 10.0;
                    history.push(damping);
                    if damping > MAX_DAMPING {
                        // No descent direction left: a stationary point.
                        return Ok(LmOutcome {
                            x,
                            iterations,
                            converged: false,
                        });
                    }
                }
            }
        }
    }
    Ok(LmOutcome {
        x,
        iterations,
        converged: cost <= opts.tol,
    })
}
