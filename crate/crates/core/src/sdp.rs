//! Dense primal-dual interior-point solver for problems of the form
//!
//! ```text
//! minimize cᵀx  subject to  F_j(x) = F_j0 + Σ_k x_k F_jk >= 0,  j = 1..J
//! ```
//!
//! Infeasible-start iteration on the pair (x, S = F(x)) and the dual
//! `Z >= 0`, HKM search direction, Mehrotra predictor-corrector. A phase-I
//! problem `min s s.t. F(x) + sI >= 0` decides feasibility first. Every
//! solve adds the box `|x_k| <= variable_bound`.
//!
//! [`certify`] re-checks a point with plain eigenvalue computations and does
//! not share any code path with the iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::SdpProblem;
use crate::matkernel::{cholesky, cholesky_solve, lambda_min, lower_inverse, sym_eigenvalues, Matrix, SymMatrix};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
    pub infeasibility_threshold: f64,
    pub variable_bound: f64,
    pub phase_one_floor: f64,
    pub certify_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: tol::SDP_GAP,
            max_iter: tol::SDP_MAX_ITER,
            step_fraction: tol::SDP_STEP_FRACTION,
            infeasibility_threshold: tol::SDP_INFEASIBLE,
            variable_bound: tol::SDP_VARIABLE_BOUND,
            phase_one_floor: tol::SDP_PHASE_ONE_FLOOR,
            certify_tol: tol::CERTIFY,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("tol", self.tol),
            ("step_fraction", self.step_fraction),
            ("infeasibility_threshold", self.infeasibility_threshold),
            ("variable_bound", self.variable_bound),
            ("phase_one_floor", self.phase_one_floor),
            ("certify_tol", self.certify_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.step_fraction >= 1.0 {
            return Err(Error::InvalidParameter("step_fraction must be below 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// Smallest eigenvalue over all constraints in standard form at `x`.
    pub min_constraint_eig: f64,
    pub iterations: usize,
    pub gap: f64,
    /// Optimal `s` of the phase-I problem; negative means strictly feasible.
    pub phase_one_margin: Option<f64>,
    pub message: String,
}

impl SdpSolution {
    pub fn is_success(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn summary(&self) -> String {
        let margin = self
            .phase_one_margin
            .map_or_else(|| "n/a".to_string(), |s| format!("{s:.3e}"));
        format!(
            "{:?} after {} iterations (objective {:.6e}, gap {:.2e}, min eig {:.3e}, phase-I margin {margin}){}",
            self.status,
            self.iterations,
            self.objective_value,
            self.gap,
            self.min_constraint_eig,
            if self.message.is_empty() { String::new() } else { format!(": {}", self.message) }
        )
    }
}

/// Smallest eigenvalue over the constraints of `problem` (in standard form,
/// margins included) at `x`. Nonnegative means `x` satisfies every
/// constraint. `+inf` for a problem without constraints.
pub fn certify(problem: &SdpProblem, x: &[f64]) -> Result<f64> {
    if x.len() != problem.num_vars() {
        return Err(Error::input(format!(
            "point has length {}, problem has {} variables",
            x.len(),
            problem.num_vars()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("point has non-finite entries"));
    }
    let mut worst = f64::INFINITY;
    for c in &problem.constraints {
        let f = c.to_standard_form().evaluate(x)?;
        worst = worst.min(lambda_min(&f)?);
    }
    Ok(worst)
}

struct Block {
    f0: Matrix,
    terms: Vec<(usize, Matrix)>,
}

impl Block {
    fn order(&self) -> usize {
        self.f0.rows()
    }

    fn eval(&self, x: &[f64]) -> Matrix {
        let mut m = self.f0.clone();
        for (k, a) in &self.terms {
            m.axpy(x[*k], a);
        }
        m
    }

    fn scalar(f0: f64, terms: Vec<(usize, f64)>) -> Self {
        Self {
            f0: Matrix::from_row_slice(1, 1, &[f0]),
            terms: terms
                .into_iter()
                .map(|(k, v)| (k, Matrix::from_row_slice(1, 1, &[v])))
                .collect(),
        }
    }
}

fn standard_blocks(problem: &SdpProblem) -> Vec<Block> {
    problem
        .to_standard_form()
        .constraints
        .into_iter()
        .map(|c| Block {
            f0: c.constant.into_matrix(),
            terms: c.coeffs.into_iter().map(|(k, a)| (k, a.into_matrix())).collect(),
        })
        .collect()
}

fn box_blocks(nv: usize, bound: f64) -> Vec<Block> {
    (0..nv)
        .flat_map(|k| [Block::scalar(bound, vec![(k, 1.0)]), Block::scalar(bound, vec![(k, -1.0)])])
        .collect()
}

enum Outcome {
    Converged,
    MaxIter,
    Breakdown(String),
}

struct IpmResult {
    x: Vec<f64>,
    outcome: Outcome,
    iterations: usize,
    gap: f64,
}

fn sym(m: Matrix) -> Matrix {
    let t = m.transpose();
    let mut s = m;
    s.axpy(1.0, &t);
    s.scale(0.5)
}

fn chol(m: &Matrix) -> Option<Matrix> {
    SymMatrix::new(m.clone()).ok().and_then(|s| cholesky(&s).ok())
}

/// Largest `α <= 1` keeping `m + α d` positive definite, shortened by the
/// fraction-to-boundary factor.
fn step_length(l: &Matrix, d: &Matrix, fraction: f64) -> Option<f64> {
    let li = lower_inverse(l);
    let t = &(&li * d) * &li.transpose();
    let lam = sym_eigenvalues(&SymMatrix::new(t).ok()?).ok()?[0];
    if lam >= 0.0 {
        Some(1.0)
    } else {
        Some((-fraction / lam).min(1.0))
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

/// Infeasible-start primal-dual iteration from `x0`.
fn ipm(blocks: &[Block], c: &[f64], x0: Vec<f64>, opts: &SolverOptions) -> IpmResult {
    let nv = c.len();
    let n_total: usize = blocks.iter().map(Block::order).sum();
    let mut x = x0;
    let mut s: Vec<Matrix> = Vec::with_capacity(blocks.len());
    let mut z: Vec<Matrix> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let f = b.eval(&x);
        let lam = SymMatrix::new(f.clone())
            .and_then(|m| lambda_min(&m))
            .unwrap_or(f64::NEG_INFINITY);
        let sj = if lam >= 1.0 {
            f
        } else if lam.is_finite() {
            SymMatrix::new(f).unwrap().shift(1.0 - lam).into_matrix()
        } else {
            Matrix::identity(b.order())
        };
        let l = chol(&sj).expect("initial slack is positive definite");
        z.push(cholesky_solve(&l, &Matrix::identity(b.order())));
        s.push(sj);
    }
    let c_scale = 1.0 + max_abs(c);
    let mut gap = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let rd: Vec<Matrix> = blocks.iter().zip(&s).map(|(b, sj)| &b.eval(&x) - sj).collect();
        let mut rp = c.to_vec();
        for (b, zj) in blocks.iter().zip(&z) {
            for (k, a) in &b.terms {
                rp[*k] -= a.dot(zj);
            }
        }
        let sz: f64 = s.iter().zip(&z).map(|(a, b)| a.dot(b)).sum();
        let mu = sz / n_total as f64;
        let pobj: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        let dobj: f64 = -blocks.iter().zip(&z).map(|(b, zj)| b.f0.dot(zj)).sum::<f64>();
        gap = sz;
        let rel_gap = sz / (1.0 + pobj.abs() + dobj.abs());
        let rd_max = rd.iter().map(Matrix::max_abs).fold(0.0, f64::max);
        if !(rel_gap.is_finite() && rd_max.is_finite()) {
            return IpmResult { x, outcome: Outcome::Breakdown("non-finite iterate".into()), iterations: iter, gap };
        }
        if rel_gap <= opts.tol && rd_max <= opts.tol && max_abs(&rp) / c_scale <= opts.tol {
            return IpmResult { x, outcome: Outcome::Converged, iterations: iter, gap };
        }

        let mut s_chol = Vec::with_capacity(blocks.len());
        let mut s_inv = Vec::with_capacity(blocks.len());
        for (b, sj) in blocks.iter().zip(&s) {
            let Some(l) = chol(sj) else {
                return IpmResult { x, outcome: Outcome::Breakdown("slack lost definiteness".into()), iterations: iter, gap };
            };
            s_inv.push(cholesky_solve(&l, &Matrix::identity(b.order())));
            s_chol.push(l);
        }
        let z_chol: Option<Vec<Matrix>> = z.iter().map(chol).collect();
        let Some(z_chol) = z_chol else {
            return IpmResult { x, outcome: Outcome::Breakdown("dual lost definiteness".into()), iterations: iter, gap };
        };

        // Schur complement M_kl = tr(F_k S⁻¹ F_l Z).
        let mut m = Matrix::zeros(nv, nv);
        for ((b, si), zj) in blocks.iter().zip(&s_inv).zip(&z) {
            let prods: Vec<Matrix> = b.terms.iter().map(|(_, a)| &(si * a) * zj).collect();
            for (t, (l, _)) in prods.iter().zip(&b.terms) {
                for (k, a) in &b.terms {
                    m[(*k, *l)] += a.dot(t);
                }
            }
        }
        let m_chol = if nv == 0 {
            Some(Matrix::zeros(0, 0))
        } else {
            let m = sym(m);
            let scale = (0..nv).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
            let mut reg = 0.0;
            let mut out = None;
            for _ in 0..8 {
                let mut mr = m.clone();
                for i in 0..nv {
                    mr[(i, i)] += reg;
                }
                if let Some(l) = chol(&mr) {
                    out = Some(l);
                    break;
                }
                reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
            }
            out
        };
        let Some(m_chol) = m_chol else {
            return IpmResult { x, outcome: Outcome::Breakdown("singular Schur complement".into()), iterations: iter, gap };
        };

        let direction = |target: f64, corr: Option<(&[Matrix], &[Matrix])>| {
            let mut rhs = vec![0.0; nv];
            let mut g_blocks = Vec::with_capacity(blocks.len());
            for (j, b) in blocks.iter().enumerate() {
                let mut inner = &rd[j] * &z[j];
                if let Some((ds, dz)) = corr {
                    inner.axpy(1.0, &(&ds[j] * &dz[j]));
                }
                let mut g = s_inv[j].scale(target);
                g.axpy(-1.0, &z[j]);
                g.axpy(-1.0, &(&s_inv[j] * &inner));
                for (k, a) in &b.terms {
                    rhs[*k] += a.dot(&g);
                }
                g_blocks.push(g);
            }
            for k in 0..nv {
                rhs[k] -= rp[k];
            }
            let dx = if nv == 0 {
                Vec::new()
            } else {
                cholesky_solve(&m_chol, &Matrix::column(&rhs)).as_slice().to_vec()
            };
            let mut ds = Vec::with_capacity(blocks.len());
            let mut dz = Vec::with_capacity(blocks.len());
            for (j, b) in blocks.iter().enumerate() {
                let mut d = rd[j].clone();
                for (k, a) in &b.terms {
                    d.axpy(dx[*k], a);
                }
                let mut e = s_inv[j].scale(target);
                e.axpy(-1.0, &z[j]);
                e.axpy(-1.0, &(&(&s_inv[j] * &d) * &z[j]));
                if let Some((dsa, dza)) = corr {
                    e.axpy(-1.0, &(&s_inv[j] * &(&dsa[j] * &dza[j])));
                }
                ds.push(d);
                dz.push(sym(e));
            }
            (dx, ds, dz)
        };
        let steps = |ds: &[Matrix], dz: &[Matrix], fraction: f64| -> Option<(f64, f64)> {
            let mut ap: f64 = 1.0;
            let mut ad: f64 = 1.0;
            for j in 0..blocks.len() {
                ap = ap.min(step_length(&s_chol[j], &ds[j], fraction)?);
                ad = ad.min(step_length(&z_chol[j], &dz[j], fraction)?);
            }
            Some((ap, ad))
        };

        let (_, ds_a, dz_a) = direction(0.0, None);
        let Some((ap_a, ad_a)) = steps(&ds_a, &dz_a, 1.0) else {
            return IpmResult { x, outcome: Outcome::Breakdown("step length failure".into()), iterations: iter, gap };
        };
        let mut mu_aff = 0.0;
        for j in 0..blocks.len() {
            let mut sa = s[j].clone();
            sa.axpy(ap_a, &ds_a[j]);
            let mut za = z[j].clone();
            za.axpy(ad_a, &dz_a[j]);
            mu_aff += sa.dot(&za);
        }
        mu_aff /= n_total as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let (dx, ds, dz) = direction(sigma * mu, Some((&ds_a, &dz_a)));
        let Some((ap, ad)) = steps(&ds, &dz, opts.step_fraction) else {
            return IpmResult { x, outcome: Outcome::Breakdown("step length failure".into()), iterations: iter, gap };
        };
        for k in 0..nv {
            x[k] += ap * dx[k];
        }
        for j in 0..blocks.len() {
            s[j].axpy(ap, &ds[j]);
            z[j].axpy(ad, &dz[j]);
        }
    }
    IpmResult { x, outcome: Outcome::MaxIter, iterations: opts.max_iter, gap }
}

fn objective_at(c: &[f64], x: &[f64]) -> f64 {
    c.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Solves `problem`. Infeasibility and numerical trouble are reported
/// through [`SdpSolution::status`]; `Err` is returned only for malformed
/// input.
pub fn solve(problem: &SdpProblem, opts: &SolverOptions) -> Result<SdpSolution> {
    opts.validate()?;
    let nv = problem.num_vars();
    if problem.objective.len() != nv || problem.constraints.iter().any(|c| c.num_vars != nv) {
        return Err(Error::input("problem dimensions are inconsistent"));
    }
    if problem.objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("objective has non-finite entries"));
    }
    for c in &problem.constraints {
        let finite = c.constant.as_matrix().is_finite() && c.coeffs.values().all(|a| a.as_matrix().is_finite());
        if !finite {
            return Err(Error::input(format!("{}: non-finite data", c.label)));
        }
    }
    let base = standard_blocks(problem);

    // Phase I over (x, s).
    let s_idx = nv;
    let mut p1: Vec<Block> = base
        .iter()
        .map(|b| {
            let mut terms = b.terms.clone();
            terms.push((s_idx, Matrix::identity(b.order())));
            Block { f0: b.f0.clone(), terms }
        })
        .collect();
    p1.push(Block::scalar(opts.phase_one_floor, vec![(s_idx, 1.0)]));
    p1.extend(box_blocks(nv + 1, opts.variable_bound));
    let mut c1 = vec![0.0; nv + 1];
    c1[s_idx] = 1.0;
    let r1 = ipm(&p1, &c1, vec![0.0; nv + 1], opts);
    let s_star = r1.x[s_idx];
    let x1 = r1.x[..nv].to_vec();
    let finish = |status: SolveStatus, x: Vec<f64>, iterations: usize, gap: f64, message: String| -> Result<SdpSolution> {
        let min_eig = if x.iter().all(|v| v.is_finite()) { certify(problem, &x)? } else { f64::NAN };
        Ok(SdpSolution {
            status,
            objective_value: objective_at(&problem.objective, &x),
            x,
            min_constraint_eig: min_eig,
            iterations,
            gap,
            phase_one_margin: Some(s_star),
            message,
        })
    };
    match r1.outcome {
        Outcome::Converged => {}
        Outcome::MaxIter => {
            return finish(SolveStatus::NumericalFailure, x1, r1.iterations, r1.gap, "phase I did not converge".into())
        }
        Outcome::Breakdown(msg) => {
            return finish(SolveStatus::NumericalFailure, x1, r1.iterations, r1.gap, format!("phase I: {msg}"))
        }
    }
    if s_star > opts.infeasibility_threshold {
        return finish(SolveStatus::Infeasible, x1, r1.iterations, r1.gap, String::new());
    }
    let homogeneous = problem.objective.iter().all(|&v| v == 0.0);
    if homogeneous && s_star < 0.0 {
        let eig = certify(problem, &x1)?;
        let status = if eig >= -opts.certify_tol { SolveStatus::Feasible } else { SolveStatus::NumericalFailure };
        let msg = if status == SolveStatus::Feasible { String::new() } else { "certification failed".into() };
        return finish(status, x1, r1.iterations, r1.gap, msg);
    }

    // Phase II.
    let mut p2 = base;
    p2.extend(box_blocks(nv, opts.variable_bound));
    let r2 = ipm(&p2, &problem.objective, x1, opts);
    let iterations = r1.iterations + r2.iterations;
    let (status, msg) = match r2.outcome {
        Outcome::Converged => (SolveStatus::Optimal, String::new()),
        Outcome::MaxIter => (SolveStatus::NumericalFailure, "phase II did not converge".to_string()),
        Outcome::Breakdown(msg) => (SolveStatus::NumericalFailure, format!("phase II: {msg}")),
    };
    if status == SolveStatus::Optimal {
        let eig = certify(problem, &r2.x)?;
        if eig < -opts.certify_tol {
            return finish(SolveStatus::NumericalFailure, r2.x, iterations, r2.gap, "certification failed".into());
        }
    }
    let status = if status == SolveStatus::Optimal && homogeneous { SolveStatus::Feasible } else { status };
    finish(status, r2.x, iterations, r2.gap, msg)
}
