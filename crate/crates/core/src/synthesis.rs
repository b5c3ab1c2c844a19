//! Controller designs recovered from solved synthesis problems, their
//! independent certification, reaching-time bounds and guaranteed
//! initial-condition sets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{assemble_uvc_with, assemble_vsc_with, Gain, ReachingSet, Rho, SdpProblem};
use crate::matkernel::{congruence, inverse_spd, lambda_max, lambda_min, Matrix, SymMatrix};
use crate::polytope::PolytopicSystem;
use crate::sdp::{solve, SdpSolution, SolveStatus, SolverOptions};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    /// `u = K sgn(σ)`.
    Vsc,
    /// `u = K σ/‖σ‖`.
    Uvc,
}

impl std::fmt::Display for ControlLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControlLaw::Vsc => "vsc",
            ControlLaw::Uvc => "uvc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub solver: SolverOptions,
    /// Margin used for every strict inequality.
    pub margin: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            margin: tol::STRICT_MARGIN,
        }
    }
}

/// Solver outcome kept alongside a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInfo {
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective_value: f64,
    pub gap: f64,
    pub min_constraint_eig: f64,
    pub phase_one_margin: Option<f64>,
    pub num_vars: usize,
    pub margin: f64,
}

impl SolverInfo {
    fn new(sol: &SdpSolution, num_vars: usize, margin: f64) -> Self {
        Self {
            status: sol.status,
            iterations: sol.iterations,
            objective_value: sol.objective_value,
            gap: sol.gap,
            min_constraint_eig: sol.min_constraint_eig,
            phase_one_margin: sol.phase_one_margin,
            num_vars,
            margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VscDesign {
    pub k: Matrix,
    /// Diagonal weights of `V(σ) = Σ p_i |σ_i|`.
    pub p: SymMatrix,
    pub q: SymMatrix,
    pub lambda_min_q: f64,
    pub xi: f64,
    pub phi: f64,
    /// Optimal or imposed decay parameter; absent when unconstrained.
    pub rho: Option<f64>,
    /// `2ρ`, the reaching-time bound over the guaranteed set.
    pub t_bound: Option<f64>,
    /// `max_i λ_max(P B_i K + Kᵀ B_iᵀ P + Q)` at synthesis time.
    pub certificate_margin: f64,
    pub solver: Option<SolverInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvcDesign {
    pub k: Matrix,
    /// Weight of `U(σ) = σᵀ P σ / ‖σ‖`.
    pub p: SymMatrix,
    pub q: SymMatrix,
    pub lambda_min_q: f64,
    pub mu: f64,
    pub phi: f64,
    pub rho: Option<f64>,
    /// `ρ`, the reaching-time bound over the guaranteed set.
    pub t_bound: Option<f64>,
    pub certificate_margin: f64,
    pub solver: Option<SolverInfo>,
}

fn check_dims(k: &Matrix, p: &SymMatrix, q: &SymMatrix, sys: &PolytopicSystem) -> Result<()> {
    let (n, m) = (sys.n(), sys.m());
    if k.shape() != (m, n) || p.order() != n || q.order() != n {
        return Err(Error::input(format!(
            "design dimensions (K {}x{}, P {}, Q {}) do not match system n = {n}, m = {m}",
            k.rows(),
            k.cols(),
            p.order(),
            q.order()
        )));
    }
    Ok(())
}

fn check_vector(sigma: &[f64], n: usize) -> Result<()> {
    if sigma.len() != n {
        return Err(Error::input(format!("sigma has length {}, expected {n}", sigma.len())));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("sigma has non-finite entries"));
    }
    Ok(())
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `max_i λ_max(P B_i K + (P B_i K)ᵀ + Q)`; negative certifies the relay
/// law on the whole polytope.
pub fn vsc_margin(k: &Matrix, p: &SymMatrix, q: &SymMatrix, sys: &PolytopicSystem) -> Result<f64> {
    check_dims(k, p, q, sys)?;
    let mut worst = f64::NEG_INFINITY;
    for b in sys.vertices() {
        let pbk = &(p.as_matrix() * b) * k;
        let lhs = &(&pbk + &pbk.transpose()) + q.as_matrix();
        worst = worst.max(lambda_max(&SymMatrix::new(lhs)?)?);
    }
    Ok(worst)
}

/// `max_i λ_max((1/μ) KᵀB_iᵀB_iK + (μ/4) P² + P B_i K + Kᵀ B_iᵀ P + Q)`.
pub fn uvc_margin(k: &Matrix, p: &SymMatrix, q: &SymMatrix, mu: f64, sys: &PolytopicSystem) -> Result<f64> {
    check_dims(k, p, q, sys)?;
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    let pm = p.as_matrix();
    let p2 = (pm * pm).scale(mu / 4.0);
    let mut worst = f64::NEG_INFINITY;
    for b in sys.vertices() {
        let bk = b * k;
        let pbk = pm * &bk;
        let mut lhs = (&bk.transpose() * &bk).scale(1.0 / mu);
        lhs.axpy(1.0, &p2);
        lhs.axpy(1.0, &pbk);
        lhs.axpy(1.0, &pbk.transpose());
        lhs.axpy(1.0, q.as_matrix());
        worst = worst.max(lambda_max(&SymMatrix::new(lhs)?)?);
    }
    Ok(worst)
}

pub fn verify_vsc(design: &VscDesign, sys: &PolytopicSystem) -> Result<f64> {
    if !design.p.is_diagonal() {
        return Err(Error::input("VSC weight P must be diagonal"));
    }
    vsc_margin(&design.k, &design.p, &design.q, sys)
}

pub fn verify_uvc(design: &UvcDesign, sys: &PolytopicSystem) -> Result<f64> {
    uvc_margin(&design.k, &design.p, &design.q, design.mu, sys)
}

/// `V(σ) = Σ p_i |σ_i|`.
pub fn lyapunov_vsc(p: &SymMatrix, sigma: &[f64]) -> f64 {
    sigma.iter().enumerate().map(|(i, s)| p[(i, i)] * s.abs()).sum()
}

/// `U(σ) = σᵀ P σ / ‖σ‖`, with `U(0) = 0`.
pub fn lyapunov_uvc(p: &SymMatrix, sigma: &[f64]) -> f64 {
    let n = norm2(sigma);
    if n == 0.0 {
        0.0
    } else {
        p.quad_form(sigma) / n
    }
}

/// `2 V(σ0) / λ_min(Q)`.
pub fn reaching_bound_vsc(design: &VscDesign, sigma0: &[f64]) -> Result<f64> {
    check_vector(sigma0, design.p.order())?;
    Ok(2.0 * lyapunov_vsc(&design.p, sigma0) / design.lambda_min_q)
}

/// `U(σ0) / λ_min(Q)`; undefined at the origin.
pub fn reaching_bound_uvc(design: &UvcDesign, sigma0: &[f64]) -> Result<f64> {
    check_vector(sigma0, design.p.order())?;
    if norm2(sigma0) == 0.0 {
        return Err(Error::input("reaching bound is undefined for sigma0 = 0"));
    }
    Ok(lyapunov_uvc(&design.p, sigma0) / design.lambda_min_q)
}

pub fn in_omega_vsc(design: &VscDesign, sigma: &[f64]) -> Result<bool> {
    check_vector(sigma, design.p.order())?;
    Ok(lyapunov_vsc(&design.p, sigma) <= 1.0)
}

pub fn in_omega_uvc(design: &UvcDesign, sigma: &[f64]) -> Result<bool> {
    check_vector(sigma, design.p.order())?;
    Ok(lyapunov_uvc(&design.p, sigma) <= 1.0)
}

fn solve_checked(problem: &SdpProblem, opts: &SynthesisOptions) -> Result<SdpSolution> {
    let sol = solve(problem, &opts.solver)?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::Feasible => Ok(sol),
        SolveStatus::Infeasible => Err(Error::SynthesisInfeasible(Box::new(sol))),
        SolveStatus::NumericalFailure => Err(Error::NumericalFailure(sol.summary())),
    }
}

fn rho_of(problem: &SdpProblem, reaching: &ReachingSet, x: &[f64]) -> Result<Option<f64>> {
    Ok(match reaching.rho {
        Rho::Minimize => Some(x[problem.layout.scalar_index("rho")?]),
        Rho::Fixed(r) => Some(r),
        Rho::Free => None,
    })
}

fn uncertified(margin: f64) -> Error {
    Error::NumericalFailure(format!(
        "recovered certificate does not verify (margin {margin:.3e})"
    ))
}

fn vsc_design(
    sys: &PolytopicSystem,
    xi: f64,
    gain: Gain<'_>,
    reaching: &ReachingSet,
    opts: &SynthesisOptions,
) -> Result<VscDesign> {
    let problem = assemble_vsc_with(sys, xi, gain, Some(reaching), opts.margin)?;
    let sol = solve_checked(&problem, opts)?;
    let vals = problem.layout.unpack(&sol.x)?;
    let x = vals["X"].diag();
    if x.iter().any(|&v| !(v > f64::EPSILON)) {
        return Err(Error::NumericalFailure(format!("X is numerically singular: {x:?}")));
    }
    let x_inv = Matrix::from_diag(&x.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let k = match gain {
        Gain::Free => &vals["Z"] * &x_inv,
        Gain::Fixed(k) => k.clone(),
    };
    let p = congruence(&SymMatrix::new(vals["W"].clone())?, &x_inv)?;
    let q = congruence(&SymMatrix::new(vals["R"].clone())?, &x_inv)?;
    let lambda_min_q = lambda_min(&q)?;
    let certificate_margin = vsc_margin(&k, &p, &q, sys)?;
    if !(certificate_margin < 0.0 && lambda_min_q > 0.0) {
        return Err(uncertified(certificate_margin));
    }
    let rho = rho_of(&problem, reaching, &sol.x)?;
    Ok(VscDesign {
        k,
        p,
        q,
        lambda_min_q,
        xi,
        phi: reaching.phi,
        rho,
        t_bound: rho.map(|r| 2.0 * r),
        certificate_margin,
        solver: Some(SolverInfo::new(&sol, problem.num_vars(), opts.margin)),
    })
}

fn uvc_design(
    sys: &PolytopicSystem,
    mu: f64,
    gain: Gain<'_>,
    reaching: &ReachingSet,
    opts: &SynthesisOptions,
) -> Result<UvcDesign> {
    let problem = assemble_uvc_with(sys, mu, gain, Some(reaching), opts.margin)?;
    let sol = solve_checked(&problem, opts)?;
    let vals = problem.layout.unpack(&sol.x)?;
    let x_inv = match inverse_spd(&SymMatrix::new(vals["X"].clone())?) {
        Ok(v) => v,
        Err(Error::NotPositiveDefinite) => {
            return Err(Error::NumericalFailure("X is numerically singular".into()))
        }
        Err(e) => return Err(e),
    };
    let k = match gain {
        Gain::Free => &vals["Z"] * x_inv.as_matrix(),
        Gain::Fixed(k) => k.clone(),
    };
    let q = congruence(&SymMatrix::new(vals["R"].clone())?, x_inv.as_matrix())?;
    let p = x_inv;
    let lambda_min_q = lambda_min(&q)?;
    let certificate_margin = uvc_margin(&k, &p, &q, mu, sys)?;
    if !(certificate_margin < 0.0 && lambda_min_q > 0.0) {
        return Err(uncertified(certificate_margin));
    }
    let rho = rho_of(&problem, reaching, &sol.x)?;
    Ok(UvcDesign {
        k,
        p,
        q,
        lambda_min_q,
        mu,
        phi: reaching.phi,
        rho,
        t_bound: rho,
        certificate_margin,
        solver: Some(SolverInfo::new(&sol, problem.num_vars(), opts.margin)),
    })
}

/// Relay-law synthesis: `K = Z X⁻¹`, `P = X⁻¹ W X⁻¹`, `Q = X⁻¹ R X⁻¹`.
pub fn synth_vsc(sys: &PolytopicSystem, xi: f64, reaching: &ReachingSet, opts: &SynthesisOptions) -> Result<VscDesign> {
    vsc_design(sys, xi, Gain::Free, reaching, opts)
}

/// Unit-vector synthesis: `K = Z X⁻¹`, `P = X⁻¹`, `Q = X⁻¹ R X⁻¹`.
pub fn synth_uvc(sys: &PolytopicSystem, mu: f64, reaching: &ReachingSet, opts: &SynthesisOptions) -> Result<UvcDesign> {
    uvc_design(sys, mu, Gain::Free, reaching, opts)
}

/// Certificate search for a given relay gain (`Z = K X`).
pub fn certify_vsc_gain(
    sys: &PolytopicSystem,
    k: &Matrix,
    xi: f64,
    reaching: &ReachingSet,
    opts: &SynthesisOptions,
) -> Result<VscDesign> {
    vsc_design(sys, xi, Gain::Fixed(k), reaching, opts)
}

/// Certificate search for a given unit-vector gain (`Z = K X`).
pub fn certify_uvc_gain(
    sys: &PolytopicSystem,
    k: &Matrix,
    mu: f64,
    reaching: &ReachingSet,
    opts: &SynthesisOptions,
) -> Result<UvcDesign> {
    uvc_design(sys, mu, Gain::Fixed(k), reaching, opts)
}

/// Common view of the two designs.
pub trait SlidingModeDesign: Sync {
    fn law(&self) -> ControlLaw;
    fn gain(&self) -> &Matrix;
    fn weight(&self) -> &SymMatrix;
    /// `V(σ)` or `U(σ)`.
    fn lyapunov(&self, sigma: &[f64]) -> f64;
    fn reaching_bound(&self, sigma0: &[f64]) -> Result<f64>;
    fn in_omega(&self, sigma: &[f64]) -> Result<bool>;
    fn t_bound(&self) -> Option<f64>;
    fn verify(&self, sys: &PolytopicSystem) -> Result<f64>;
}

impl SlidingModeDesign for VscDesign {
    fn law(&self) -> ControlLaw {
        ControlLaw::Vsc
    }
    fn gain(&self) -> &Matrix {
        &self.k
    }
    fn weight(&self) -> &SymMatrix {
        &self.p
    }
    fn lyapunov(&self, sigma: &[f64]) -> f64 {
        lyapunov_vsc(&self.p, sigma)
    }
    fn reaching_bound(&self, sigma0: &[f64]) -> Result<f64> {
        reaching_bound_vsc(self, sigma0)
    }
    fn in_omega(&self, sigma: &[f64]) -> Result<bool> {
        in_omega_vsc(self, sigma)
    }
    fn t_bound(&self) -> Option<f64> {
        self.t_bound
    }
    fn verify(&self, sys: &PolytopicSystem) -> Result<f64> {
        verify_vsc(self, sys)
    }
}

impl SlidingModeDesign for UvcDesign {
    fn law(&self) -> ControlLaw {
        ControlLaw::Uvc
    }
    fn gain(&self) -> &Matrix {
        &self.k
    }
    fn weight(&self) -> &SymMatrix {
        &self.p
    }
    fn lyapunov(&self, sigma: &[f64]) -> f64 {
        lyapunov_uvc(&self.p, sigma)
    }
    fn reaching_bound(&self, sigma0: &[f64]) -> Result<f64> {
        reaching_bound_uvc(self, sigma0)
    }
    fn in_omega(&self, sigma: &[f64]) -> Result<bool> {
        in_omega_uvc(self, sigma)
    }
    fn t_bound(&self) -> Option<f64> {
        self.t_bound
    }
    fn verify(&self, sys: &PolytopicSystem) -> Result<f64> {
        verify_uvc(self, sys)
    }
}

/// Either design, tagged by law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Design {
    Vsc(VscDesign),
    Uvc(UvcDesign),
}

impl Design {
    pub fn as_dyn(&self) -> &dyn SlidingModeDesign {
        match self {
            Design::Vsc(d) => d,
            Design::Uvc(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub t_bound: Option<f64>,
    /// `ok`, `infeasible` or `numerical_failure: <detail>`.
    pub status: String,
}

/// Minimizes `ρ` at every grid value of `ξ` (VSC) or `μ` (UVC). Grid
/// points are solved in parallel on the current rayon pool; output order
/// follows the grid.
pub fn sweep(
    sys: &PolytopicSystem,
    law: ControlLaw,
    grid: &[f64],
    phi: f64,
    opts: &SynthesisOptions,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("sweep grid is empty".into()));
    }
    if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!("grid values must be positive, got {v}")));
    }
    let reaching = ReachingSet::minimize(phi);
    Ok(grid
        .par_iter()
        .map(|&param| {
            let outcome = match law {
                ControlLaw::Vsc => synth_vsc(sys, param, &reaching, opts).map(|d| d.t_bound),
                ControlLaw::Uvc => synth_uvc(sys, param, &reaching, opts).map(|d| d.t_bound),
            };
            let (t_bound, status) = match outcome {
                Ok(t) => (t, "ok".to_string()),
                Err(Error::SynthesisInfeasible(_)) => (None, "infeasible".to_string()),
                Err(e) => (None, format!("error: {e}")),
            };
            SweepPoint { param, t_bound, status }
        })
        .collect())
}
