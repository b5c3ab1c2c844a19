//! Numerical tolerances and defaults shared by every module.
//!
//! Thresholds are absolute unless the name says otherwise. Data are assumed
//! to be in the natural (unit-scaled) units of the problems; no automatic
//! rescaling happens anywhere.

/// Jacobi sweeps stop once the off-diagonal Frobenius norm falls below this
/// fraction of the full Frobenius norm.
pub const JACOBI_REL_OFFDIAG: f64 = 1e-12;

/// Upper bound on Jacobi sweeps; convergence is quadratic so this is never
/// reached for the small orders used here.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative residual accepted from [`crate::matkernel::solve_spd`].
pub const SPD_SOLVE_REL_RESIDUAL: f64 = 1e-9;

/// Simplex weights must sum to one within this tolerance.
pub const SIMPLEX_SUM: f64 = 1e-12;

/// Margin turning a strict matrix inequality into a closed one:
/// `M < 0` is imposed as `M <= -STRICT_MARGIN * I`.
pub const STRICT_MARGIN: f64 = 1e-6;

/// Interior-point stopping threshold on the duality gap and residuals.
pub const SDP_GAP: f64 = 1e-7;

pub const SDP_MAX_ITER: usize = 200;

/// Fraction-to-boundary rule for interior-point steps.
pub const SDP_STEP_FRACTION: f64 = 0.98;

/// Phase-I optimum above which a problem is declared infeasible.
pub const SDP_INFEASIBLE: f64 = 1e-6;

/// Box `|x_k| <= bound` added to every solve so the feasible sets handled
/// by the interior-point iteration are compact.
pub const SDP_VARIABLE_BOUND: f64 = 1e6;

/// Phase-I auxiliary variable is kept above `-SDP_PHASE_ONE_FLOOR`.
pub const SDP_PHASE_ONE_FLOOR: f64 = 1.0;

/// Smallest constraint eigenvalue accepted for a reported solution.
pub const CERTIFY: f64 = 1e-8;

/// Default integration step of the closed-loop simulator, in seconds.
pub const SIM_DT: f64 = 1e-4;

/// Default boundary-layer width of the regularized sign / unit vector.
pub const SIM_REG_EPS: f64 = 1e-4;

/// Default sliding-surface detection threshold.
pub const SIM_REACH_TOL: f64 = 1e-3;

/// Default horizon as a multiple of the guaranteed reaching time.
pub const SIM_HORIZON_FACTOR: f64 = 4.0;

/// RK4 sub-steps satisfy `h * |BK|_inf <= SIM_LAYER_STEP_GAIN * max(d, reg_eps)`
/// with `d` the distance to the discontinuity (RK4 is stable up to ~2.78
/// inside the layer).
pub const SIM_LAYER_STEP_GAIN: f64 = 0.5;

/// States beyond this norm are treated as divergence.
pub const SIM_DIVERGENCE: f64 = 1e12;
