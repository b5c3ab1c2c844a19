//! Closed-loop simulation of `σ̇ = B K sgn(σ)` and `σ̇ = B K σ/‖σ‖`.
//!
//! The discontinuity is smoothed in a boundary layer of width `reg_eps`
//! and integrated with RK4; samples are recorded every `dt`. Each sample
//! interval is covered by RK4 sub-steps of length
//! `SIM_LAYER_STEP_GAIN · max(d, reg_eps) / ‖BK‖∞`, where `d` is the
//! distance of the state to the discontinuity (`min |σ_i|` or `‖σ‖`). Far
//! from it the relay field is constant and one step per sample is exact;
//! near it the step resolves the layer, whose Lipschitz constant is
//! `‖BK‖/reg_eps`. Inside the layer the field is linear, `σ̇ = BK σ/reg_eps`,
//! and the composed sub-steps collapse into one precomputed matrix.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{Matrix, SymMatrix};
use crate::polytope::{sample_simplex_with, PolytopicSystem, SimplexPoint};
use crate::synthesis::{lyapunov_uvc, lyapunov_vsc, SlidingModeDesign};
use crate::tol;

pub use crate::synthesis::ControlLaw;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub reg_eps: f64,
    pub reach_tol: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Default step, layer and tolerance with the given horizon.
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            dt: tol::SIM_DT,
            horizon,
            reg_eps: tol::SIM_REG_EPS,
            reach_tol: tol::SIM_REACH_TOL,
            seed: 0,
        }
    }

    /// Horizon of `SIM_HORIZON_FACTOR` times the reaching-time bound.
    pub fn for_bound(t_bound: f64) -> Self {
        Self::with_horizon(tol::SIM_HORIZON_FACTOR * t_bound)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("horizon", self.horizon),
            ("reg_eps", self.reg_eps),
            ("reach_tol", self.reach_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.horizon < self.dt {
            return Err(Error::InvalidParameter("horizon must be at least dt".into()));
        }
        Ok(())
    }

    fn num_steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub law: ControlLaw,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub lyapunov: Vec<f64>,
    /// First time each `|σ_i|` enters `reach_tol` and stays there.
    pub reach_time_per_state: Vec<Option<f64>>,
    /// Same for `max_i |σ_i|` (VSC) or `‖σ‖` (UVC).
    pub reach_time: Option<f64>,
    /// Explicit RK4 steps taken (layer-map samples excluded).
    pub rk4_steps: usize,
}

#[derive(Serialize)]
struct ReachSidecar<'a> {
    law: ControlLaw,
    reach_time: Option<f64>,
    reach_time_per_state: &'a [Option<f64>],
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<f64>,
    samples: usize,
    dt: Option<f64>,
    rk4_steps: usize,
}

impl SimTrace {
    /// One row per sample: `t, sigma_1..sigma_n, u_1..u_m, lyap`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.inputs.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("sigma_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.push("lyap".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.states[i].iter().map(f64::to_string));
            row.extend(self.inputs[i].iter().map(f64::to_string));
            row.push(self.lyapunov[i].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reach times as JSON, optionally with the analytic bound.
    pub fn reach_json(&self, bound: Option<f64>) -> serde_json::Value {
        let dt = (self.times.len() > 1).then(|| self.times[1] - self.times[0]);
        serde_json::to_value(ReachSidecar {
            law: self.law,
            reach_time: self.reach_time,
            reach_time_per_state: &self.reach_time_per_state,
            bound,
            samples: self.times.len(),
            dt,
            rk4_steps: self.rk4_steps,
        })
        .expect("sidecar serialization cannot fail")
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn switching(law: ControlLaw, sigma: &[f64], reg_eps: f64) -> Vec<f64> {
    match law {
        ControlLaw::Vsc => sigma.iter().map(|s| s / s.abs().max(reg_eps)).collect(),
        ControlLaw::Uvc => {
            let d = norm2(sigma).max(reg_eps);
            sigma.iter().map(|s| s / d).collect()
        }
    }
}

/// `B K s` with `s_i = σ_i / max(|σ_i|, reg_eps)`.
pub fn rhs_vsc(b: &Matrix, k: &Matrix, sigma: &[f64], reg_eps: f64) -> Vec<f64> {
    (b * k).mul_vec(&switching(ControlLaw::Vsc, sigma, reg_eps))
}

/// `B K σ / max(‖σ‖, reg_eps)`.
pub fn rhs_uvc(b: &Matrix, k: &Matrix, sigma: &[f64], reg_eps: f64) -> Vec<f64> {
    (b * k).mul_vec(&switching(ControlLaw::Uvc, sigma, reg_eps))
}

fn aggregate(law: ControlLaw, sigma: &[f64]) -> f64 {
    match law {
        ControlLaw::Vsc => sigma.iter().fold(0.0, |a, s| a.max(s.abs())),
        ControlLaw::Uvc => norm2(sigma),
    }
}

fn lyapunov(law: ControlLaw, p: &SymMatrix, sigma: &[f64]) -> f64 {
    match law {
        ControlLaw::Vsc => lyapunov_vsc(p, sigma),
        ControlLaw::Uvc => lyapunov_uvc(p, sigma),
    }
}

/// First sample time after which `values` stays within `tol` to the end.
fn persistent_entry(times: &[f64], values: impl DoubleEndedIterator<Item = f64> + ExactSizeIterator, tol: f64) -> Option<f64> {
    let len = values.len();
    let mut first = None;
    for (i, v) in values.rev().enumerate() {
        if v <= tol {
            first = Some(len - 1 - i);
        } else {
            break;
        }
    }
    first.map(|i| times[i])
}

/// `‖BK‖∞`-scaled RK4 over the regularized field, with reusable buffers.
struct Integrator {
    law: ControlLaw,
    n: usize,
    bk: Matrix,
    bk_norm: f64,
    reg_eps: f64,
    /// One-sample map of the sub-stepped RK4 inside the linear region.
    layer_map: Matrix,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    switch: Vec<f64>,
    next: Vec<f64>,
    steps: usize,
}

impl Integrator {
    fn new(law: ControlLaw, bk: Matrix, cfg: &SimConfig) -> Self {
        let n = bk.rows();
        let bk_norm = bk.norm_inf();
        let inner = ((cfg.dt * bk_norm / (tol::SIM_LAYER_STEP_GAIN * cfg.reg_eps)).ceil() as usize).max(1);
        let ha = bk.scale(cfg.dt / inner as f64 / cfg.reg_eps);
        // RK4 on a linear field is the degree-4 Taylor polynomial of hA
        let mut t4 = Matrix::identity(n);
        let mut term = Matrix::identity(n);
        for j in 1..=4 {
            term = (&term * &ha).scale(1.0 / j as f64);
            t4.axpy(1.0, &term);
        }
        let layer_map = mat_pow(&t4, inner);
        Self {
            law,
            n,
            bk,
            bk_norm,
            reg_eps: cfg.reg_eps,
            layer_map,
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
            switch: vec![0.0; n],
            next: vec![0.0; n],
            steps: 0,
        }
    }

    fn distance(&self, y: &[f64]) -> f64 {
        match self.law {
            ControlLaw::Vsc => y.iter().fold(f64::INFINITY, |a, v| a.min(v.abs())),
            ControlLaw::Uvc => norm2(y),
        }
    }

    fn in_layer(&self, y: &[f64]) -> bool {
        aggregate(self.law, y) < self.reg_eps
    }

    fn field(bk: &Matrix, law: ControlLaw, reg_eps: f64, y: &[f64], switch: &mut [f64], out: &mut [f64]) {
        match law {
            ControlLaw::Vsc => {
                for (s, v) in switch.iter_mut().zip(y) {
                    *s = v / v.abs().max(reg_eps);
                }
            }
            ControlLaw::Uvc => {
                let d = norm2(y).max(reg_eps);
                for (s, v) in switch.iter_mut().zip(y) {
                    *s = v / d;
                }
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = bk.row(i).iter().zip(switch.iter()).map(|(a, b)| a * b).sum();
        }
    }

    fn rk4(&mut self, y: &mut [f64], h: f64) {
        let (bk, law, eps) = (&self.bk, self.law, self.reg_eps);
        let coef = [0.5 * h, 0.5 * h, h];
        Self::field(bk, law, eps, y, &mut self.switch, &mut self.k[0]);
        for j in 0..3 {
            for i in 0..self.n {
                self.stage[i] = y[i] + coef[j] * self.k[j][i];
            }
            Self::field(bk, law, eps, &self.stage, &mut self.switch, &mut self.k[j + 1]);
        }
        for i in 0..self.n {
            y[i] += h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        self.steps += 1;
    }

    /// Advances `y` by `dt`.
    fn advance(&mut self, y: &mut [f64], dt: f64) {
        if self.in_layer(y) {
            for i in 0..self.n {
                self.next[i] = self.layer_map.row(i).iter().zip(y.iter()).map(|(a, b)| a * b).sum();
            }
            if self.in_layer(&self.next) {
                y.copy_from_slice(&self.next);
                return;
            }
        }
        let mut remaining = dt;
        while remaining > 0.0 {
            let d = self.distance(y).max(self.reg_eps);
            let h_max = if self.bk_norm > 0.0 {
                tol::SIM_LAYER_STEP_GAIN * d / self.bk_norm
            } else {
                remaining
            };
            // no step exceeds h_max and no sliver is left at the end
            let h = if remaining <= h_max {
                remaining
            } else if remaining < 2.0 * h_max {
                0.5 * remaining
            } else {
                h_max
            };
            self.rk4(y, h);
            remaining = if h == remaining { 0.0 } else { remaining - h };
        }
    }
}

fn mat_pow(m: &Matrix, mut e: usize) -> Matrix {
    let mut base = m.clone();
    let mut acc = Matrix::identity(m.rows());
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &base;
        }
        base = &base * &base;
        e >>= 1;
    }
    acc
}

/// Integrates the closed loop `σ̇ = B K s(σ)` from `sigma0`. `p` weights the
/// recorded Lyapunov channel.
pub fn simulate(
    law: ControlLaw,
    b: &Matrix,
    k: &Matrix,
    p: &SymMatrix,
    sigma0: &[f64],
    cfg: &SimConfig,
) -> Result<SimTrace> {
    cfg.validate()?;
    let n = b.rows();
    if k.rows() != b.cols() || k.cols() != n {
        return Err(Error::input(format!(
            "gain is {}x{}, expected {}x{n}",
            k.rows(),
            k.cols(),
            b.cols()
        )));
    }
    if p.order() != n || sigma0.len() != n {
        return Err(Error::input("weight or initial state does not match the state dimension"));
    }
    if !(b.is_finite() && k.is_finite() && sigma0.iter().all(|v| v.is_finite())) {
        return Err(Error::input("non-finite simulation data"));
    }
    let bk = b * k;
    if !bk.is_finite() {
        return Err(Error::input("closed-loop matrix BK overflows"));
    }
    let steps = cfg.num_steps();
    let mut integrator = Integrator::new(law, bk, cfg);

    let mut trace = SimTrace {
        law,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        lyapunov: Vec::with_capacity(steps + 1),
        reach_time_per_state: vec![None; n],
        reach_time: None,
        rk4_steps: 0,
    };
    let mut y = sigma0.to_vec();
    for step in 0..=steps {
        let t = step as f64 * cfg.dt;
        trace.times.push(t);
        trace.inputs.push(k.mul_vec(&switching(law, &y, cfg.reg_eps)));
        trace.lyapunov.push(lyapunov(law, p, &y));
        trace.states.push(y.clone());
        if step == steps {
            break;
        }
        integrator.advance(&mut y, cfg.dt);
        trace.rk4_steps = integrator.steps;
        if y.iter().any(|v| !v.is_finite()) || norm2(&y) > tol::SIM_DIVERGENCE {
            return Err(Error::SimulationDiverged {
                time: t + cfg.dt,
                trace: Box::new(trace),
            });
        }
    }
    for i in 0..n {
        trace.reach_time_per_state[i] =
            persistent_entry(&trace.times, trace.states.iter().map(|s| s[i].abs()), cfg.reach_tol);
    }
    trace.reach_time = persistent_entry(
        &trace.times,
        trace.states.iter().map(|s| aggregate(law, s)),
        cfg.reach_tol,
    );
    Ok(trace)
}

/// Lipschitz estimate of the Lyapunov channel along the closed-loop field.
fn channel_rate(law: ControlLaw, bk: &Matrix, p: &SymMatrix) -> f64 {
    match law {
        ControlLaw::Vsc => (0..bk.rows())
            .map(|i| p[(i, i)].abs() * bk.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .sum(),
        ControlLaw::Uvc => {
            let p_norm = crate::matkernel::sym_eigenvalues(p)
                .map(|e| e.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
                .unwrap_or(f64::INFINITY);
            3.0 * p_norm * bk.norm_fro()
        }
    }
}

/// Consecutive sample pairs (outside the boundary layer) where the
/// Lyapunov channel grows by more than `10·dt·L`. Returns
/// `(sample index, increase)` pairs.
pub fn lyapunov_increases(trace: &SimTrace, b: &Matrix, k: &Matrix, p: &SymMatrix, cfg: &SimConfig) -> Vec<(usize, f64)> {
    let bk = b * k;
    let slack = 10.0 * cfg.dt * channel_rate(trace.law, &bk, p);
    let mut out = Vec::new();
    for i in 0..trace.times.len().saturating_sub(1) {
        let outside = aggregate(trace.law, &trace.states[i]) > cfg.reg_eps
            && aggregate(trace.law, &trace.states[i + 1]) > cfg.reg_eps;
        let inc = trace.lyapunov[i + 1] - trace.lyapunov[i];
        if outside && inc > slack {
            out.push((i, inc));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub alpha: SimplexPoint,
    pub sigma0: Vec<f64>,
    pub reach_time: Option<f64>,
    pub reach_time_per_state: Vec<Option<f64>>,
    pub bound: f64,
    pub ratio: f64,
    pub lyapunov_increases: usize,
    pub bound_violated: bool,
    pub t_bound_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub trials: Vec<TrialResult>,
    /// Largest `reach_time / bound`; infinite if some trial never reached.
    pub max_ratio: f64,
    /// Indices of trials with `reach_time > bound` or `> T_bound`, or no
    /// reaching within the horizon.
    pub violations: Vec<usize>,
    pub lyapunov_violations: usize,
}

/// Uniform point of `Ω = {σ : lyapunov(σ) <= 1}` by rejection from a
/// bounding box.
fn sample_omega<D: SlidingModeDesign + ?Sized>(design: &D, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    use rand::Rng;
    let p = design.weight();
    let n = p.order();
    let half: Vec<f64> = match design.law() {
        ControlLaw::Vsc => (0..n).map(|i| 1.0 / p[(i, i)]).collect(),
        ControlLaw::Uvc => vec![1.0 / crate::matkernel::lambda_min(p)?; n],
    };
    if half.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::input("Lyapunov weight must be positive definite"));
    }
    loop {
        let s: Vec<f64> = half.iter().map(|h| h * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        if design.lyapunov(&s) <= 1.0 && s.iter().any(|v| *v != 0.0) {
            return Ok(s);
        }
    }
}

/// Monte-Carlo check of simulated reaching times against the analytic bound.
/// Trial `i` draws from the ChaCha stream `i` of `seed`, so results do not
/// depend on scheduling.
pub fn empirical_vs_bound<D: SlidingModeDesign + ?Sized>(
    design: &D,
    sys: &PolytopicSystem,
    trials: usize,
    cfg: &SimConfig,
    seed: u64,
) -> Result<EmpiricalReport> {
    cfg.validate()?;
    let run = |trial: usize| -> Result<TrialResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let alpha = sample_simplex_with(sys.num_vertices(), &mut rng)?;
        let sigma0 = sample_omega(design, &mut rng)?;
        let b = sys.combine(&alpha)?;
        let bound = design.reaching_bound(&sigma0)?;
        let trace = simulate(design.law(), &b, design.gain(), design.weight(), &sigma0, cfg)?;
        let increases = lyapunov_increases(&trace, &b, design.gain(), design.weight(), cfg).len();
        let ratio = trace.reach_time.map_or(f64::INFINITY, |t| t / bound);
        let bound_violated = trace.reach_time.is_none_or(|t| t > bound);
        let t_bound_violated = match (trace.reach_time, design.t_bound()) {
            (Some(t), Some(tb)) => t > tb,
            (None, _) => true,
            (Some(_), None) => false,
        };
        Ok(TrialResult {
            trial,
            alpha,
            sigma0,
            reach_time: trace.reach_time,
            reach_time_per_state: trace.reach_time_per_state,
            bound,
            ratio,
            lyapunov_increases: increases,
            bound_violated,
            t_bound_violated,
        })
    };
    let results: Vec<TrialResult> = (0..trials).into_par_iter().map(run).collect::<Result<_>>()?;
    let max_ratio = results.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let violations = results
        .iter()
        .filter(|r| r.bound_violated || r.t_bound_violated)
        .map(|r| r.trial)
        .collect();
    let lyapunov_violations = results.iter().map(|r| r.lyapunov_increases).sum();
    Ok(EmpiricalReport {
        trials: results,
        max_ratio,
        violations,
        lyapunov_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Matrix {
        Matrix::from_row_slice(1, 1, &[v])
    }

    #[test]
    fn rhs_examples() {
        let b = Matrix::identity(2);
        let k = Matrix::identity(2).scale(-1.0);
        assert_eq!(rhs_vsc(&b, &k, &[1.0, -1.0], 1e-4), vec![-1.0, 1.0]);
        let u = rhs_uvc(&b, &k, &[3.0, 4.0], 1e-4);
        assert!((u[0] + 0.6).abs() < 1e-15 && (u[1] + 0.8).abs() < 1e-15);
        assert_eq!(rhs_vsc(&b, &k, &[0.0, 0.0], 1e-4), vec![0.0, 0.0]);
        assert_eq!(rhs_uvc(&b, &k, &[0.0, 0.0], 1e-4), vec![0.0, 0.0]);
        // inside the layer the sign is saturated
        assert_eq!(rhs_vsc(&b, &k, &[5e-5, 2.0], 1e-4), vec![-0.5, -1.0]);
    }

    #[test]
    fn zero_initial_state() {
        let cfg = SimConfig::with_horizon(0.01);
        let t = simulate(ControlLaw::Uvc, &scalar(1.0), &scalar(-1.0), &SymMatrix::identity(1), &[0.0], &cfg).unwrap();
        assert_eq!(t.reach_time, Some(0.0));
        assert!(t.states.iter().all(|s| s[0] == 0.0));
        assert!(t.lyapunov.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_relay_reaches_at_one() {
        let cfg = SimConfig::with_horizon(2.0);
        for law in [ControlLaw::Vsc, ControlLaw::Uvc] {
            let t = simulate(law, &scalar(1.0), &scalar(-1.0), &SymMatrix::identity(1), &[1.0], &cfg).unwrap();
            let r = t.reach_time.unwrap();
            // σ(t) = 1 - t, detection at |σ| <= reach_tol
            assert!((r - (1.0 - cfg.reach_tol)).abs() <= cfg.dt + cfg.reg_eps, "{law}: {r}");
            assert!((t.states[5000][0] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn times_are_uniform() {
        let cfg = SimConfig::with_horizon(0.05);
        let t = simulate(ControlLaw::Vsc, &scalar(2.0), &scalar(-1.0), &SymMatrix::identity(1), &[1.0], &cfg).unwrap();
        assert_eq!(t.times.len(), 501);
        for w in t.times.windows(2) {
            assert!((w[1] - w[0] - cfg.dt).abs() < 1e-12);
        }
        assert!(t.lyapunov.iter().all(|v| *v >= 0.0));
        for (s, u) in t.states.iter().zip(&t.inputs) {
            assert_eq!(u[0], -s[0] / s[0].abs().max(cfg.reg_eps));
        }
    }

    #[test]
    fn coordinates_reach_separately() {
        // decoupled relay loops with different speeds
        let b = Matrix::identity(2);
        let k = Matrix::from_diag(&[-1.0, -2.0]);
        let cfg = SimConfig::with_horizon(1.0);
        let t = simulate(ControlLaw::Vsc, &b, &k, &SymMatrix::identity(2), &[0.5, 0.5], &cfg).unwrap();
        let r1 = t.reach_time_per_state[0].unwrap();
        let r2 = t.reach_time_per_state[1].unwrap();
        assert!((r1 - 0.499).abs() < 1e-3 && (r2 - 0.2495).abs() < 1e-3);
        assert_eq!(t.reach_time, Some(r1));
    }

    #[test]
    fn unreached_state_has_no_reach_time() {
        let cfg = SimConfig::with_horizon(0.5);
        let t = simulate(ControlLaw::Vsc, &scalar(1.0), &scalar(-1.0), &SymMatrix::identity(1), &[1.0], &cfg).unwrap();
        assert_eq!(t.reach_time, None);
    }

    #[test]
    fn reversed_gain_moves_away() {
        let b = Matrix::identity(2);
        let k = Matrix::identity(2);
        let cfg = SimConfig::with_horizon(0.1);
        for law in [ControlLaw::Vsc, ControlLaw::Uvc] {
            let t = simulate(law, &b, &k, &SymMatrix::identity(2), &[1e-3, -2e-3], &cfg).unwrap();
            for w in t.states.windows(2) {
                assert!(norm2(&w[1]) >= norm2(&w[0]));
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        // with a huge layer the field is σ̇ = σ, which leaves every bound
        let cfg = SimConfig { dt: 1.0, horizon: 100.0, reg_eps: 1e300, reach_tol: 1.0, seed: 0 };
        let err = simulate(ControlLaw::Vsc, &scalar(1e300), &scalar(1.0), &SymMatrix::identity(1), &[1.0], &cfg);
        match err {
            Err(Error::SimulationDiverged { time, trace }) => {
                assert!(time > 20.0 && time < 40.0);
                assert_eq!(trace.times.len() as f64, time);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config() {
        let mut cfg = SimConfig::with_horizon(1.0);
        cfg.dt = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::InvalidParameter(_))));
        let cfg = SimConfig { horizon: 1e-5, ..SimConfig::with_horizon(1.0) };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let cfg = SimConfig::with_horizon(2e-4);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 0.5]);
        let k = Matrix::from_row_slice(1, 2, &[-1.0, 0.0]);
        let t = simulate(ControlLaw::Vsc, &b, &k, &SymMatrix::identity(2), &[1.0, 1.0], &cfg).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,sigma_1,sigma_2,u_1,lyap");
        assert_eq!(lines.len(), 4);
        let j = t.reach_json(Some(1.0));
        assert_eq!(j["bound"], 1.0);
    }
}
