//! ADMM splitting for POVM-constrained semidefinite programs.
//!
//! The iterate `x = (E_1..E_K [, E_0], γ, s)` alternates between the affine set
//! (completeness plus gap equalities) and the cone (PSD blocks, free `γ`,
//! nonnegative gap slacks). The affine projection decouples into a matrix
//! multiplier for completeness and a small dense system for the gaps.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverReport;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::quantum::{success_probability, ClassEnsemble, CompletenessMode, Povm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpObjective {
    /// Maximize `Σ p_k Tr(E_k ρ̄_k)`.
    MaxPsucc,
    /// Maximize `γ` subject to `Tr(E_j ρ̄_k) + γ ≤ Tr(E_k ρ̄_k)` for all `j ≠ k`.
    MaxGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completeness {
    /// `Σ E_k = I`.
    #[default]
    Equality,
    /// `Σ E_k ≤ I`, with an implicit inconclusive element.
    Inequality,
}

#[derive(Debug, Clone)]
pub struct PovmSdpProblem {
    pub ensemble: ClassEnsemble,
    pub objective: SdpObjective,
    pub completeness: Completeness,
}

impl PovmSdpProblem {
    pub fn new(ensemble: ClassEnsemble, objective: SdpObjective, completeness: Completeness) -> Self {
        PovmSdpProblem {
            ensemble,
            objective,
            completeness,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Over-relaxation factor.
    pub alpha: f64,
    /// Largest block dimension accepted.
    pub max_dim: usize,
    /// Abort with [`Error::ResourceLimit`] once this instant has passed.
    pub deadline: Option<Instant>,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            tol: 1e-6,
            max_iters: 50_000,
            alpha: 1.6,
            max_dim: 256,
            deadline: None,
        }
    }
}

/// Iterations between residual checks and penalty updates.
const CHECK_EVERY: usize = 10;
const REBALANCE_EVERY: usize = 50;

type Pair = (usize, usize);

#[derive(Clone)]
struct Iterate {
    blocks: Vec<DMatrix<f64>>,
    gamma: f64,
    slack: Vec<f64>,
}

impl Iterate {
    fn zeros(nblocks: usize, q: usize, npairs: usize) -> Self {
        Iterate {
            blocks: vec![DMatrix::zeros(q, q); nblocks],
            gamma: 0.0,
            slack: vec![0.0; npairs],
        }
    }

    fn norm_sq(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>()
            + self.gamma * self.gamma
            + self.slack.iter().map(|s| s * s).sum::<f64>()
    }

    /// `a·self + b·other`.
    fn combine(&self, a: f64, other: &Iterate, b: f64) -> Iterate {
        Iterate {
            blocks: self
                .blocks
                .iter()
                .zip(&other.blocks)
                .map(|(x, y)| x * a + y * b)
                .collect(),
            gamma: a * self.gamma + b * other.gamma,
            slack: self
                .slack
                .iter()
                .zip(&other.slack)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    fn scale_mut(&mut self, f: f64) {
        for b in &mut self.blocks {
            *b *= f;
        }
        self.gamma *= f;
        for s in &mut self.slack {
            *s *= f;
        }
    }
}

struct Affine<'a> {
    rho: Vec<&'a DMatrix<f64>>,
    pairs: Vec<Pair>,
    k: usize,
    nblocks: usize,
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl<'a> Affine<'a> {
    fn new(rho: Vec<&'a DMatrix<f64>>, pairs: Vec<Pair>, nblocks: usize) -> Result<Self> {
        let k = rho.len();
        let np = pairs.len();
        let chol = if np == 0 {
            None
        } else {
            let gram: Vec<Vec<f64>> = (0..k)
                .map(|a| (0..k).map(|b| rho[a].dot(rho[b])).collect())
                .collect();
            let ind = |x: usize, y: usize| if x == y { 1.0 } else { 0.0 };
            let m = DMatrix::from_fn(np, np, |a, b| {
                let (ja, ka) = pairs[a];
                let (jb, kb) = pairs[b];
                gram[ka][kb] * (ind(ka, kb) - ind(ja, kb) - ind(ka, jb) + ind(ja, jb))
                    + 1.0
                    + ind(a, b)
            });
            Some(Cholesky::new(m).ok_or_else(|| {
                Error::SolverFailure("gap system is not positive definite".into())
            })?)
        };
        Ok(Affine {
            rho,
            pairs,
            k,
            nblocks,
            chol,
        })
    }

    /// Gap constraint values `⟨X_k − X_j, ρ_k⟩ − γ − s_jk`.
    fn gap_values(&self, v: &Iterate) -> DVector<f64> {
        DVector::from_iterator(
            self.pairs.len(),
            self.pairs.iter().enumerate().map(|(a, &(j, k))| {
                (&v.blocks[k] - &v.blocks[j]).dot(self.rho[k]) - v.gamma - v.slack[a]
            }),
        )
    }

    fn project(&self, mut v: Iterate) -> Iterate {
        let q = v.blocks[0].nrows();
        let mut mu = -DMatrix::<f64>::identity(q, q);
        for b in &v.blocks {
            mu += b;
        }
        mu /= self.nblocks as f64;
        if let Some(chol) = &self.chol {
            let lambda = chol.solve(&self.gap_values(&v));
            for (a, &(j, k)) in self.pairs.iter().enumerate() {
                let l = lambda[a];
                v.blocks[k] -= self.rho[k] * l;
                v.blocks[j] += self.rho[k] * l;
                v.gamma += l;
                v.slack[a] += l;
            }
        }
        for b in &mut v.blocks {
            *b -= &mu;
        }
        v
    }

    fn k(&self) -> usize {
        self.k
    }
}

fn psd_project_fast(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let q = m.nrows();
    let mut out = DMatrix::zeros(q, q);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > 0.0 {
            let v = eig.eigenvectors.column(i);
            out.ger(l, &v, &v, 1.0);
        }
    }
    out
}

fn cone_project(v: &Iterate) -> Iterate {
    Iterate {
        blocks: v.blocks.iter().map(psd_project_fast).collect(),
        gamma: v.gamma,
        slack: v.slack.iter().map(|s| s.max(0.0)).collect(),
    }
}

fn sym(m: DMatrix<f64>) -> SymMatrix {
    SymMatrix::new((&m + m.transpose()) * 0.5).expect("finite solver iterate")
}

/// Smallest pairwise gap `Tr(E_k ρ̄_k) − Tr(E_j ρ̄_k)` over `j ≠ k`.
pub fn min_gap(povm: &Povm, ensemble: &ClassEnsemble) -> f64 {
    let mut best = f64::INFINITY;
    for (k, rho) in ensemble.centroids().iter().enumerate() {
        let own = povm.elements()[k].dot(rho.matrix());
        for (j, e) in povm.elements().iter().enumerate() {
            if j != k {
                best = best.min(own - e.dot(rho.matrix()));
            }
        }
    }
    best
}

fn restore(blocks: &[DMatrix<f64>], k: usize, completeness: Completeness) -> Result<Povm> {
    let q = blocks[0].nrows();
    let mut elems: Vec<DMatrix<f64>> = blocks[..k].iter().map(psd_project_fast).collect();
    let mut sum = DMatrix::zeros(q, q);
    for e in &elems {
        sum += e;
    }
    match completeness {
        Completeness::Equality => {
            let fill = (DMatrix::identity(q, q) - sum) / k as f64;
            for e in &mut elems {
                *e += &fill;
            }
            let inv_k = 1.0 / k as f64;
            let mut t: f64 = 0.0;
            for e in &elems {
                let lmin = ((e + e.transpose()) * 0.5).symmetric_eigenvalues().min();
                if lmin < 0.0 {
                    t = t.max(-lmin / (inv_k - lmin));
                }
            }
            if t > 0.0 {
                let t = t.min(1.0);
                for e in &mut elems {
                    *e = &*e * (1.0 - t) + DMatrix::identity(q, q) * (t * inv_k);
                }
            }
            Povm::new(elems.into_iter().map(sym).collect(), CompletenessMode::Exact, None)
        }
        Completeness::Inequality => {
            let lmax = ((&sum + sum.transpose()) * 0.5).symmetric_eigenvalues().max();
            if lmax > 1.0 {
                for e in &mut elems {
                    *e /= lmax;
                }
            }
            Povm::new(
                elems.into_iter().map(sym).collect(),
                CompletenessMode::Subnormalized,
                None,
            )
        }
    }
    .map_err(|e| Error::SolverFailure(format!("feasibility restoration failed: {e}")))
}

/// Solves the POVM program and returns a feasible POVM with its report.
///
/// The objective in the report is evaluated on the restored POVM. A run that
/// hits `max_iters` still returns its last iterate with `converged = false`.
pub fn solve_povm_sdp(problem: &PovmSdpProblem, opts: &SdpOptions) -> Result<(Povm, SolverReport)> {
    let ens = &problem.ensemble;
    let q = ens.dim();
    let k = ens.k();
    if q > opts.max_dim {
        return Err(Error::ResourceLimit(format!(
            "SDP block dimension {q} exceeds cap {}",
            opts.max_dim
        )));
    }
    if !(opts.tol >= 1e-12) || opts.max_iters == 0 {
        return Err(Error::invalid("SDP needs tol > 0 and max_iters ≥ 1"));
    }
    let with_e0 = problem.completeness == Completeness::Inequality;
    let nblocks = k + usize::from(with_e0);
    let pairs: Vec<Pair> = match problem.objective {
        SdpObjective::MaxPsucc => Vec::new(),
        SdpObjective::MaxGap => (0..k)
            .flat_map(|kk| (0..k).filter(move |&j| j != kk).map(move |j| (j, kk)))
            .collect(),
    };
    let rho: Vec<&DMatrix<f64>> = ens.centroids().iter().map(|c| c.matrix().matrix()).collect();
    let affine = Affine::new(rho, pairs, nblocks)?;

    // Ascent direction of the objective.
    let mut grad = Iterate::zeros(nblocks, q, affine.pairs.len());
    match problem.objective {
        SdpObjective::MaxPsucc => {
            for (kk, p) in ens.priors().iter().enumerate() {
                grad.blocks[kk] = affine.rho[kk] * *p;
            }
        }
        SdpObjective::MaxGap => grad.gamma = 1.0,
    }

    let mut z = Iterate::zeros(nblocks, q, affine.pairs.len());
    for b in &mut z.blocks {
        *b = DMatrix::identity(q, q) / nblocks as f64;
    }
    let mut u = Iterate::zeros(nblocks, q, affine.pairs.len());
    let mut sigma = 1.0;
    let alpha = opts.alpha;

    let mut iterations = 0;
    let mut converged = false;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    while iterations < opts.max_iters {
        iterations += 1;
        let v = z.combine(1.0, &u, -1.0).combine(1.0, &grad, 1.0 / sigma);
        let x = affine.project(v);
        let xhat = x.combine(alpha, &z, 1.0 - alpha);
        let z_new = cone_project(&xhat.combine(1.0, &u, 1.0));
        u = u.combine(1.0, &xhat.combine(1.0, &z_new, -1.0), 1.0);

        if iterations % CHECK_EVERY == 0 || iterations == opts.max_iters {
            primal = x.combine(1.0, &z_new, -1.0).norm_sq().sqrt();
            dual = sigma * z_new.combine(1.0, &z, -1.0).norm_sq().sqrt();
            if primal <= opts.tol && dual <= opts.tol {
                z = z_new;
                converged = true;
                break;
            }
            if let Some(d) = opts.deadline {
                if Instant::now() >= d {
                    return Err(Error::ResourceLimit("SDP time budget exhausted".into()));
                }
            }
            if iterations % REBALANCE_EVERY == 0 {
                if primal > 10.0 * dual {
                    sigma *= 2.0;
                    u.scale_mut(0.5);
                } else if dual > 10.0 * primal {
                    sigma *= 0.5;
                    u.scale_mut(2.0);
                }
            }
        }
        z = z_new;
    }

    let povm = restore(&z.blocks, affine.k(), problem.completeness)?;
    let check = povm.check();
    let constraint_violation = check.completeness_residual.max((-check.min_eigenvalue).max(0.0));
    let objective_value = match problem.objective {
        SdpObjective::MaxPsucc => success_probability(&povm, ens)?,
        SdpObjective::MaxGap => min_gap(&povm, ens),
    };
    Ok((
        povm,
        SolverReport {
            objective_value,
            iterations,
            primal_residual: primal,
            dual_residual: dual,
            constraint_violation,
            converged,
        },
    ))
}
