//! Bounded-variable revised simplex for the box-constrained gap program
//!
//! ```text
//! maximize γ  s.t.  β_jᵀx̄_k + γ ≤ β_kᵀx̄_k  (j ≠ k),  |β_k|_∞ ≤ Λ.
//! ```
//!
//! With `b = β + Λ ∈ [0, 2Λ]` the constant terms cancel, every right-hand side
//! is zero and the all-slack basis at `b = 0, γ = 0` is feasible. `γ` is kept
//! nonnegative, which loses nothing because `β = 0` already attains `γ = 0`.

use nalgebra::{DMatrix, DVector};

use super::SolverReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LpOptions {
    /// Optimality and feasibility tolerance.
    pub tol: f64,
    pub max_pivots: usize,
    /// Pivots between refactorizations of the basis inverse.
    pub refactor_every: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            tol: 1e-9,
            max_pivots: 200_000,
            refactor_every: 100,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GapLpSolution {
    /// One weight vector per class.
    pub weights: Vec<Vec<f64>>,
    pub gamma: f64,
    pub report: SolverReport,
}

const PIVOT_TOL: f64 = 1e-11;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Basic,
    Lower,
    Upper,
}

struct Simplex {
    a: DMatrix<f64>,
    c: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: DMatrix<f64>,
}

impl Simplex {
    fn refactor(&mut self) -> Result<()> {
        let b = self.a.select_columns(&self.basis);
        self.binv = b
            .try_inverse()
            .ok_or_else(|| Error::SolverFailure("singular simplex basis".into()))?;
        // Recompute basic values from nonbasic ones (right-hand side is zero).
        let m = self.basis.len();
        let mut rhs = DVector::zeros(m);
        for (j, &s) in self.state.iter().enumerate() {
            if s != State::Basic && self.x[j] != 0.0 {
                rhs -= self.a.column(j) * self.x[j];
            }
        }
        let xb = &self.binv * rhs;
        for (i, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[i];
        }
        Ok(())
    }

    fn run(&mut self, opts: &LpOptions) -> Result<(usize, bool)> {
        let n = self.c.len();
        let m = self.basis.len();
        let mut pivots = 0;
        let mut since_refactor = 0;
        let mut degenerate_run = 0;
        loop {
            if pivots >= opts.max_pivots {
                return Ok((pivots, false));
            }
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| self.c[j]));
            let y = self.binv.tr_mul(&cb);
            let bland = degenerate_run >= opts.bland_after;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n {
                let dir = match self.state[j] {
                    State::Basic => continue,
                    State::Lower => 1.0,
                    State::Upper => -1.0,
                };
                let d = self.c[j] - self.a.column(j).dot(&y);
                let gain = dir * d;
                if gain > opts.tol {
                    match entering {
                        None => entering = Some((j, gain)),
                        Some((_, g)) if !bland && gain > g => entering = Some((j, gain)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok((pivots, true));
            };
            let dir = if self.state[q] == State::Lower { 1.0 } else { -1.0 };
            let alpha = &self.binv * self.a.column(q);

            // Ratio test: x_B(t) = x_B − dir·t·α.
            let mut step = self.upper[q];
            let mut leave: Option<(usize, State)> = None;
            for i in 0..m {
                let r = dir * alpha[i];
                let j = self.basis[i];
                let (t, bound) = if r > PIVOT_TOL {
                    (self.x[j].max(0.0) / r, State::Lower)
                } else if r < -PIVOT_TOL && self.upper[j].is_finite() {
                    ((self.upper[j] - self.x[j]).max(0.0) / -r, State::Upper)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if t < step - 1e-14 => true,
                    Some((li, _)) if (t - step).abs() <= 1e-14 => j < self.basis[li],
                    None if (t - step).abs() <= 1e-14 => false,
                    _ => false,
                };
                if better {
                    step = t;
                    leave = Some((i, bound));
                }
            }
            if !step.is_finite() {
                return Err(Error::SolverFailure("gap LP is unbounded".into()));
            }
            degenerate_run = if step <= 1e-14 { degenerate_run + 1 } else { 0 };
            pivots += 1;

            for i in 0..m {
                let j = self.basis[i];
                self.x[j] -= dir * step * alpha[i];
            }
            self.x[q] += dir * step;

            match leave {
                None => {
                    // Bound flip, basis unchanged.
                    self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { 0.0 };
                }
                Some((r, bound)) => {
                    let out = self.basis[r];
                    self.state[out] = bound;
                    self.x[out] = if bound == State::Upper { self.upper[out] } else { 0.0 };
                    self.state[q] = State::Basic;
                    self.basis[r] = q;
                    // Rank-one update of B⁻¹.
                    let piv = alpha[r];
                    let row_r = self.binv.row(r).clone_owned() / piv;
                    for i in 0..m {
                        if i != r && alpha[i] != 0.0 {
                            let f = alpha[i];
                            let mut row = self.binv.row_mut(i);
                            row -= &row_r * f;
                        }
                    }
                    self.binv.set_row(r, &row_r);
                    since_refactor += 1;
                    if since_refactor >= opts.refactor_every {
                        self.refactor()?;
                        since_refactor = 0;
                    }
                }
            }
        }
    }
}

/// Solves the gap LP for centroid vectors `x̄_k` and box radius `Λ`.
pub fn solve_box_gap_lp(centroids: &[Vec<f64>], lambda: f64, opts: &LpOptions) -> Result<GapLpSolution> {
    let k = centroids.len();
    if k < 2 {
        return Err(Error::invalid("gap LP needs at least two classes"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("box radius must be positive, got {lambda}")));
    }
    let q = centroids[0].len();
    if q == 0 || centroids.iter().any(|c| c.len() != q) {
        return Err(Error::invalid("centroids must share a positive dimension"));
    }
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|kk| (0..k).filter(move |&j| j != kk).map(move |j| (j, kk)))
        .collect();
    let m = pairs.len();
    let nb = k * q;
    let gamma_col = nb;
    let n = nb + 1 + m;
    let mut a = DMatrix::zeros(m, n);
    for (r, &(j, kk)) in pairs.iter().enumerate() {
        for i in 0..q {
            a[(r, j * q + i)] += centroids[kk][i];
            a[(r, kk * q + i)] -= centroids[kk][i];
        }
        a[(r, gamma_col)] = 1.0;
        a[(r, nb + 1 + r)] = 1.0;
    }
    let mut c = vec![0.0; n];
    c[gamma_col] = 1.0;
    let mut upper = vec![2.0 * lambda; nb];
    upper.resize(nb + 1 + m, f64::INFINITY);
    let mut state = vec![State::Lower; n];
    let basis: Vec<usize> = (nb + 1..n).collect();
    for &j in &basis {
        state[j] = State::Basic;
    }
    let mut s = Simplex {
        a,
        c,
        upper,
        x: vec![0.0; n],
        state,
        basis,
        binv: DMatrix::identity(m, m),
    };
    let (pivots, converged) = s.run(opts)?;
    s.refactor()?;

    let weights: Vec<Vec<f64>> = (0..k)
        .map(|kk| (0..q).map(|i| s.x[kk * q + i].clamp(0.0, 2.0 * lambda) - lambda).collect())
        .collect();
    // Report the gap the returned weights actually achieve.
    let mut gamma = f64::INFINITY;
    for &(j, kk) in &pairs {
        let g: f64 = (0..q).map(|i| (weights[kk][i] - weights[j][i]) * centroids[kk][i]).sum();
        gamma = gamma.min(g);
    }
    let violation = (gamma - s.x[gamma_col]).min(0.0).abs();
    Ok(GapLpSolution {
        weights,
        gamma,
        report: SolverReport {
            objective_value: gamma,
            iterations: pivots,
            primal_residual: violation,
            dual_residual: 0.0,
            constraint_violation: violation,
            converged,
        },
    })
}
