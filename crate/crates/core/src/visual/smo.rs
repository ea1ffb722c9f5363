//! Sequential minimal optimization for the soft-margin SVM dual.
//!
//! Solves `min 0.5 a'Qa - e'a` subject to `y'a = 0`, `0 <= a_i <= C` with
//! `Q_ij = y_i y_j K(x_i, x_j)`, picking the maximal-violating pair each
//! iteration and updating it analytically. Selection and updates are fully
//! deterministic given the input order.

use super::{KernelParams, VisualError};

const QUAD_FLOOR: f64 = 1e-12;

/// Dense dual solution over the full training set (zero alphas included).
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

pub(crate) fn gram_matrix(points: &[Vec<f64>], kernel: &KernelParams) -> Vec<f64> {
    let n = points.len();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let k = super::rbf_unchecked(&points[i], &points[j], kernel);
            gram[i * n + j] = k;
            gram[j * n + i] = k;
        }
    }
    gram
}

/// Runs SMO until the maximal KKT violation drops to `tol` or the iteration
/// budget is exhausted (reported as non-convergence carrying the residual).
pub fn solve(
    points: &[Vec<f64>],
    labels: &[f64],
    kernel: &KernelParams,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SmoSolution, VisualError> {
    debug_assert_eq!(points.len(), labels.len());
    let n = points.len();
    let gram = gram_matrix(points, kernel);

    let mut alpha = vec![0.0f64; n];
    // gradient of the dual objective; -y_t * grad_t equals y_t - u_t, the
    // quantity both the stopping rule and the bias are read from
    let mut grad = vec![-1.0f64; n];

    let mut iterations = 0usize;
    loop {
        let mut up_best = f64::NEG_INFINITY;
        let mut up_idx: Option<usize> = None;
        let mut low_best = f64::INFINITY;
        let mut low_idx: Option<usize> = None;
        for t in 0..n {
            let v = -labels[t] * grad[t];
            let positive = labels[t] > 0.0;
            let in_up = (positive && alpha[t] < c) || (!positive && alpha[t] > 0.0);
            let in_low = (positive && alpha[t] > 0.0) || (!positive && alpha[t] < c);
            if in_up && v > up_best {
                up_best = v;
                up_idx = Some(t);
            }
            if in_low && v < low_best {
                low_best = v;
                low_idx = Some(t);
            }
        }
        // with at least one point of each class the working sets cannot both
        // drain while y'a = 0 holds
        let (i, j) = match (up_idx, low_idx) {
            (Some(i), Some(j)) => (i, j),
            _ => {
                return Ok(SmoSolution {
                    alphas: alpha,
                    bias: 0.0,
                    iterations,
                })
            }
        };
        if up_best - low_best <= tol {
            return Ok(SmoSolution {
                alphas: alpha,
                bias: (up_best + low_best) / 2.0,
                iterations,
            });
        }
        if iterations >= max_iter {
            return Err(VisualError::NonConvergence {
                violation: up_best - low_best,
            });
        }
        iterations += 1;

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let k_ii = gram[i * n + i];
        let k_jj = gram[j * n + j];
        let k_ij = gram[i * n + j];
        let quad = (k_ii + k_jj - 2.0 * k_ij).max(QUAD_FLOOR);

        if labels[i] != labels[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }

        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        if di == 0.0 && dj == 0.0 {
            // numerically stuck pair; report the residual rather than spin
            return Err(VisualError::NonConvergence {
                violation: up_best - low_best,
            });
        }
        for t in 0..n {
            let q_ti = labels[t] * labels[i] * gram[t * n + i];
            let q_tj = labels[t] * labels[j] * gram[t * n + j];
            grad[t] += q_ti * di + q_tj * dj;
        }
    }
}

/// Largest per-point KKT violation of a solution over its training set.
pub fn max_kkt_violation(
    points: &[Vec<f64>],
    labels: &[f64],
    solution: &SmoSolution,
    kernel: &KernelParams,
    c: f64,
) -> f64 {
    let n = points.len();
    let mut worst = 0.0f64;
    for t in 0..n {
        let mut u = 0.0;
        for s in 0..n {
            if solution.alphas[s] > 0.0 {
                u += solution.alphas[s]
                    * labels[s]
                    * super::rbf_unchecked(&points[s], &points[t], kernel);
            }
        }
        let margin = labels[t] * (u + solution.bias);
        let a = solution.alphas[t];
        let violation = if a <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if a >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(violation);
    }
    worst
}
