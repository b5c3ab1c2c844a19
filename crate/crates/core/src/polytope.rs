//! Polytopic description of the uncertain input matrix: `B = Σ α_i B_i`
//! with `α` in the unit simplex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::Matrix;
use crate::tol;

/// Vertex set `{B_1, ..., B_N}` of the uncertain `n x m` input matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolytopicSystem {
    n: usize,
    m: usize,
    vertices: Vec<Matrix>,
}

#[derive(Deserialize)]
struct RawSystem {
    n: usize,
    m: usize,
    vertices: Vec<Matrix>,
}

impl<'de> Deserialize<'de> for PolytopicSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSystem::deserialize(d)?;
        let sys = PolytopicSystem::new(raw.vertices).map_err(serde::de::Error::custom)?;
        if sys.n != raw.n || sys.m != raw.m {
            return Err(serde::de::Error::custom(format!(
                "declared dimensions {}x{} do not match vertices {}x{}",
                raw.n, raw.m, sys.n, sys.m
            )));
        }
        Ok(sys)
    }
}

impl PolytopicSystem {
    pub fn new(vertices: Vec<Matrix>) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::input("polytope needs at least one vertex"))?;
        let (n, m) = first.shape();
        if n == 0 || m == 0 {
            return Err(Error::input("vertex dimensions must be at least 1x1"));
        }
        for (i, v) in vertices.iter().enumerate() {
            if v.shape() != (n, m) {
                return Err(Error::input(format!(
                    "vertex {} is {}x{}, expected {n}x{m}",
                    i + 1,
                    v.rows(),
                    v.cols()
                )));
            }
            if !v.is_finite() {
                return Err(Error::input(format!("vertex {} has non-finite entries", i + 1)));
            }
        }
        Ok(Self { n, m, vertices })
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Matrix] {
        &self.vertices
    }

    /// Vertices with exact duplicates removed, paired with the index of
    /// their first occurrence.
    pub fn distinct_vertices(&self) -> Vec<(usize, &Matrix)> {
        let mut out: Vec<(usize, &Matrix)> = Vec::with_capacity(self.vertices.len());
        for (i, v) in self.vertices.iter().enumerate() {
            if !out.iter().any(|(_, u)| *u == v) {
                out.push((i, v));
            }
        }
        out
    }

    /// `Σ α_i B_i`.
    pub fn combine(&self, alpha: &SimplexPoint) -> Result<Matrix> {
        if alpha.len() != self.vertices.len() {
            return Err(Error::input(format!(
                "simplex point has {} weights, polytope has {} vertices",
                alpha.len(),
                self.vertices.len()
            )));
        }
        let mut b = Matrix::zeros(self.n, self.m);
        for (w, v) in alpha.weights().iter().zip(&self.vertices) {
            if *w != 0.0 {
                b.axpy(*w, v);
            }
        }
        Ok(b)
    }
}

/// A point of the unit simplex `{α : α_i >= 0, Σ α_i = 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSimplexPoint("no weights".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidSimplexPoint(format!(
                "weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol::SIMPLEX_SUM {
            return Err(Error::InvalidSimplexPoint(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// The `k`-th coordinate vector of the `n`-simplex.
    pub fn vertex(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::input(format!("vertex index {k} out of range for {n} vertices")));
        }
        let mut w = vec![0.0; n];
        w[k] = 1.0;
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("simplex dimension must be positive"));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Convex combination `t·self + (1-t)·other`.
    pub fn mix(&self, other: &SimplexPoint, t: f64) -> Result<Self> {
        if self.len() != other.len() || !(0.0..=1.0).contains(&t) {
            return Err(Error::input("incompatible simplex points or t outside [0, 1]"));
        }
        let w = self.0.iter().zip(&other.0).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        Ok(Self(w))
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        SimplexPoint::new(w)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.0
    }
}

/// Draws a simplex point from normalized unit-exponential variates
/// (uniform on the simplex), reproducibly for a given seed.
pub fn sample_simplex(n: usize, seed: u64) -> Result<SimplexPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_simplex_with(n, &mut rng)
}

pub fn sample_simplex_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SimplexPoint> {
    if n == 0 {
        return Err(Error::input("simplex dimension must be positive"));
    }
    if n == 1 {
        return Ok(SimplexPoint(vec![1.0]));
    }
    // gen::<f64>() lies in [0, 1), so 1 - u is never zero
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = e.iter().sum();
    let mut w: Vec<f64> = e.iter().map(|v| v / sum).collect();
    // push the rounding residue into the largest weight
    let residue = 1.0 - w.iter().sum::<f64>();
    let imax = (0..n).max_by(|&i, &j| w[i].total_cmp(&w[j])).unwrap_or(0);
    w[imax] += residue;
    SimplexPoint::new(w)
}

fn rotation(c: f64, s: f64) -> Matrix {
    Matrix::from_row_slice(2, 2, &[c, s, -s, c])
}

/// Camera-rotation uncertainty `B(φ) = B(Δφ) B(φ̄)`, `|Δφ| <= Δ̄`.
///
/// The arc `{(cos θ, sin θ) : |θ| <= Δ̄}` is enclosed in the box
/// `c ∈ [cos Δ̄, 1]`, `s ∈ [-sin Δ̄, sin Δ̄]`; its four corners give the
/// vertices `[[c, s], [-s, c]] · B(φ̄)`, ordered
/// `(cos Δ̄, -sin Δ̄), (cos Δ̄, sin Δ̄), (1, -sin Δ̄), (1, sin Δ̄)`.
pub fn visual_servo_polytope(phi_bar: f64, delta_bar: f64) -> Result<PolytopicSystem> {
    if !phi_bar.is_finite() {
        return Err(Error::input("phi_bar must be finite"));
    }
    if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&delta_bar) {
        return Err(Error::input(format!(
            "delta_bar must lie in [0, pi/2], got {delta_bar}"
        )));
    }
    let nominal = rotation(phi_bar.cos(), phi_bar.sin());
    let (cd, sd) = (delta_bar.cos(), delta_bar.sin());
    let mut vertices = Vec::with_capacity(4);
    for c in [cd, 1.0] {
        for s in [-sd, sd] {
            vertices.push(&rotation(c, s) * &nominal);
        }
    }
    PolytopicSystem::new(vertices)
}

/// Physical parameters of the over-actuated ROV model
/// `B(g) = M⁻¹ Ψ Π(g)`, `M = diag(m0, m0, Iz)`, `Π(g) = diag(g1, 1, g3, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RovParams {
    pub m0: f64,
    pub iz: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub g_lo: f64,
    pub g_hi: f64,
}

impl Default for RovParams {
    fn default() -> Self {
        Self {
            m0: 290.0,
            iz: 290.0,
            psi1: std::f64::consts::FRAC_1_SQRT_2,
            psi2: 0.35,
            g_lo: 0.5,
            g_hi: 1.0,
        }
    }
}

/// Four vertices, one per corner `(g1, g3) ∈ {g_lo, g_hi}²`, ordered
/// `(lo, lo), (lo, hi), (hi, lo), (hi, hi)`.
pub fn rov_polytope(p: &RovParams) -> Result<PolytopicSystem> {
    let finite = [p.m0, p.iz, p.psi1, p.psi2, p.g_lo, p.g_hi].iter().all(|v| v.is_finite());
    if !finite {
        return Err(Error::input("ROV parameters must be finite"));
    }
    if p.m0 <= 0.0 || p.iz <= 0.0 {
        return Err(Error::input("ROV mass and inertia must be positive"));
    }
    if p.g_lo > p.g_hi {
        return Err(Error::input("g_lo must not exceed g_hi"));
    }
    let (a, b) = (p.psi1, p.psi2);
    #[rustfmt::skip]
    let psi = Matrix::from_row_slice(3, 4, &[
         a,  a,  a,  a,
         a, -a, -a,  a,
        -b,  b, -b,  b,
    ]);
    let m_inv = Matrix::from_diag(&[1.0 / p.m0, 1.0 / p.m0, 1.0 / p.iz]);
    let base = &m_inv * &psi;
    let mut vertices = Vec::with_capacity(4);
    for g1 in [p.g_lo, p.g_hi] {
        for g3 in [p.g_lo, p.g_hi] {
            vertices.push(&base * &Matrix::from_diag(&[g1, 1.0, g3, 1.0]));
        }
    }
    PolytopicSystem::new(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_6};

    #[test]
    fn combine_recovers_vertices() {
        let sys = rov_polytope(&RovParams::default()).unwrap();
        for k in 0..4 {
            let b = sys.combine(&SimplexPoint::vertex(4, k).unwrap()).unwrap();
            assert_eq!(&b, &sys.vertices()[k]);
        }
    }

    #[test]
    fn combine_of_equal_vertices() {
        let v = Matrix::from_row_slice(2, 1, &[1.5, -2.0]);
        let sys = PolytopicSystem::new(vec![v.clone(), v.clone()]).unwrap();
        let b = sys.combine(&SimplexPoint::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert!((&b - &v).max_abs() < 1e-15);
    }

    #[test]
    fn combine_mean_matches_direct_sum() {
        let sys = rov_polytope(&RovParams::default()).unwrap();
        let b = sys.combine(&SimplexPoint::uniform(4).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let mean = sys.vertices().iter().map(|v| v[(i, j)]).sum::<f64>() / 4.0;
                assert!((b[(i, j)] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn combine_errors() {
        let sys = rov_polytope(&RovParams::default()).unwrap();
        assert!(matches!(
            sys.combine(&SimplexPoint::uniform(3).unwrap()),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            SimplexPoint::new(vec![0.5, 0.6]),
            Err(Error::InvalidSimplexPoint(_))
        ));
        assert!(matches!(
            SimplexPoint::new(vec![1.5, -0.5]),
            Err(Error::InvalidSimplexPoint(_))
        ));
    }

    #[test]
    fn system_validation() {
        assert!(PolytopicSystem::new(vec![]).is_err());
        let a = Matrix::zeros(2, 2);
        let b = Matrix::zeros(2, 3);
        assert!(PolytopicSystem::new(vec![a.clone(), b]).is_err());
        let mut nan = a.clone();
        nan[(0, 0)] = f64::NAN;
        assert!(PolytopicSystem::new(vec![nan]).is_err());
    }

    #[test]
    fn simplex_sampling() {
        assert_eq!(sample_simplex(1, 7).unwrap().weights(), &[1.0]);
        assert_eq!(sample_simplex(5, 42).unwrap(), sample_simplex(5, 42).unwrap());
        assert_ne!(sample_simplex(5, 42).unwrap(), sample_simplex(5, 43).unwrap());
        assert!(sample_simplex(0, 1).is_err());
    }

    #[test]
    fn simplex_marginal_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut acc = [0.0; 4];
        let trials = 10_000;
        for _ in 0..trials {
            let p = sample_simplex_with(4, &mut rng).unwrap();
            for (a, w) in acc.iter_mut().zip(p.weights()) {
                *a += w;
            }
        }
        for a in acc {
            assert!((a / trials as f64 - 0.25).abs() < 0.02);
        }
    }

    #[test]
    fn visual_servo_without_uncertainty() {
        let sys = visual_servo_polytope(FRAC_PI_6, 0.0).unwrap();
        let nominal = rotation(FRAC_PI_6.cos(), FRAC_PI_6.sin());
        for v in sys.vertices() {
            assert!((v - &nominal).max_abs() < 1e-15);
        }
        assert_eq!(sys.distinct_vertices().len(), 1);
    }

    #[test]
    fn visual_servo_corner() {
        let sys = visual_servo_polytope(0.0, FRAC_PI_2).unwrap();
        // corner (c, s) = (1, 1) is the last vertex
        let v = &sys.vertices()[3];
        let want = Matrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        assert!((v - &want).max_abs() < 1e-15);
        assert!(visual_servo_polytope(0.0, 1.6).is_err());
        assert!(visual_servo_polytope(0.0, -0.1).is_err());
    }

    #[test]
    fn visual_servo_example_vertices_distinct() {
        let sys = visual_servo_polytope(FRAC_PI_6, FRAC_PI_4).unwrap();
        assert_eq!(sys.num_vertices(), 4);
        assert_eq!(sys.distinct_vertices().len(), 4);
        assert_eq!((sys.n(), sys.m()), (2, 2));
    }

    #[test]
    fn rov_degenerate_and_reference_entry() {
        let p = RovParams {
            g_lo: 1.0,
            g_hi: 1.0,
            ..RovParams::default()
        };
        let sys = rov_polytope(&p).unwrap();
        assert_eq!(sys.distinct_vertices().len(), 1);
        let v = &sys.vertices()[3];
        assert!((v[(0, 0)] - 0.002438).abs() < 1e-6);
        assert!((v[(0, 0)] - std::f64::consts::FRAC_1_SQRT_2 / 290.0).abs() < 1e-18);
    }

    #[test]
    fn rov_column_scaling() {
        let sys = rov_polytope(&RovParams::default()).unwrap();
        // (g1, g3) = (1/2, 1) is vertex 1, (1, 1) is vertex 3
        let half = &sys.vertices()[1];
        let full = &sys.vertices()[3];
        for i in 0..3 {
            assert_eq!(half[(i, 0)], 0.5 * full[(i, 0)]);
            assert_eq!(half[(i, 1)], full[(i, 1)]);
            assert_eq!(half[(i, 2)], full[(i, 2)]);
            assert_eq!(half[(i, 3)], full[(i, 3)]);
        }
    }

    #[test]
    fn rov_rejects_bad_params() {
        let bad = RovParams {
            m0: 0.0,
            ..RovParams::default()
        };
        assert!(rov_polytope(&bad).is_err());
        let bad = RovParams {
            g_lo: 1.0,
            g_hi: 0.5,
            ..RovParams::default()
        };
        assert!(rov_polytope(&bad).is_err());
    }

    #[test]
    fn json_schema_round_trip() {
        let sys = visual_servo_polytope(FRAC_PI_6, FRAC_PI_4).unwrap();
        let json = serde_json::to_value(&sys).unwrap();
        assert_eq!(json["n"], 2);
        assert_eq!(json["m"], 2);
        assert_eq!(json["vertices"].as_array().unwrap().len(), 4);
        let back: PolytopicSystem = serde_json::from_value(json).unwrap();
        assert_eq!(back, sys);

        let wrong = serde_json::json!({"n": 3, "m": 2, "vertices": [[[1.0, 0.0], [0.0, 1.0]]]});
        assert!(serde_json::from_value::<PolytopicSystem>(wrong).is_err());
    }
}
