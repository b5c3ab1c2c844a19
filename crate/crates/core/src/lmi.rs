//! Matrix-inequality conditions for robust VSC and UVC synthesis, written as
//! symmetric matrices affine in a flat vector of scalar decision variables.
//!
//! Matrix-valued unknowns (`W`, `X`, `R`, `Z`, `ρ`) are declared in a
//! [`VariableLayout`], which maps each structured matrix onto a contiguous
//! range of scalars. Block conditions are composed with [`AffineExpr`] and
//! frozen into [`AffineMatrixInequality`] values. An [`SdpProblem`] collects
//! them together with a linear objective.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkernel::{Matrix, SymMatrix};
use crate::polytope::PolytopicSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Diagonal,
    Symmetric,
    Full,
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBlock {
    pub name: String,
    pub structure: Structure,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl VariableBlock {
    pub fn num_scalars(&self) -> usize {
        match self.structure {
            Structure::Diagonal => self.rows,
            Structure::Symmetric => self.rows * (self.rows + 1) / 2,
            Structure::Full => self.rows * self.cols,
            Structure::Scalar => 1,
        }
    }

    /// Matrix positions `(i, j)` touched by each scalar of the block, in
    /// packing order. Symmetric blocks are packed upper triangle, row-major.
    fn positions(&self) -> Vec<Vec<(usize, usize)>> {
        match self.structure {
            Structure::Diagonal => (0..self.rows).map(|i| vec![(i, i)]).collect(),
            Structure::Symmetric => {
                let mut out = Vec::with_capacity(self.num_scalars());
                for i in 0..self.rows {
                    for j in i..self.rows {
                        if i == j {
                            out.push(vec![(i, i)]);
                        } else {
                            out.push(vec![(i, j), (j, i)]);
                        }
                    }
                }
                out
            }
            Structure::Full => (0..self.rows)
                .flat_map(|i| (0..self.cols).map(move |j| vec![(i, j)]))
                .collect(),
            Structure::Scalar => vec![vec![(0, 0)]],
        }
    }
}

/// Ordered, uniquely named matrix unknowns and their scalar offsets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariableLayout {
    blocks: Vec<VariableBlock>,
    total_scalars: usize,
}

impl VariableLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: &str, structure: Structure, rows: usize, cols: usize) -> Result<()> {
        if self.block(name).is_some() {
            return Err(Error::input(format!("duplicate variable name {name:?}")));
        }
        let (rows, cols) = match structure {
            Structure::Scalar => (1, 1),
            Structure::Diagonal | Structure::Symmetric if rows != cols => {
                return Err(Error::input(format!("{name}: {structure:?} block must be square")))
            }
            _ => (rows, cols),
        };
        if rows == 0 || cols == 0 {
            return Err(Error::input(format!("{name}: empty variable block")));
        }
        let block = VariableBlock {
            name: name.to_string(),
            structure,
            rows,
            cols,
            offset: self.total_scalars,
        };
        self.total_scalars += block.num_scalars();
        self.blocks.push(block);
        Ok(())
    }

    pub fn total_scalars(&self) -> usize {
        self.total_scalars
    }

    pub fn blocks(&self) -> &[VariableBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&VariableBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    fn require(&self, name: &str) -> Result<&VariableBlock> {
        self.block(name)
            .ok_or_else(|| Error::input(format!("unknown variable {name:?}")))
    }

    /// The named unknown as an affine expression of the decision vector.
    pub fn expr(&self, name: &str) -> Result<AffineExpr> {
        let b = self.require(name)?;
        let mut e = AffineExpr::zeros(b.rows, b.cols);
        for (k, pos) in b.positions().into_iter().enumerate() {
            let mut coeff = Matrix::zeros(b.rows, b.cols);
            for (i, j) in pos {
                coeff[(i, j)] = 1.0;
            }
            e.terms.insert(b.offset + k, coeff);
        }
        Ok(e)
    }

    /// Index of a scalar unknown in the decision vector.
    pub fn scalar_index(&self, name: &str) -> Result<usize> {
        let b = self.require(name)?;
        if b.structure != Structure::Scalar {
            return Err(Error::input(format!("{name} is not a scalar variable")));
        }
        Ok(b.offset)
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.total_scalars {
            return Err(Error::input(format!(
                "decision vector has length {}, layout needs {}",
                x.len(),
                self.total_scalars
            )));
        }
        Ok(())
    }

    /// Value of one named unknown at `x`.
    pub fn value(&self, name: &str, x: &[f64]) -> Result<Matrix> {
        self.check_len(x)?;
        let b = self.require(name)?;
        let mut m = Matrix::zeros(b.rows, b.cols);
        for (k, pos) in b.positions().into_iter().enumerate() {
            for (i, j) in pos {
                m[(i, j)] = x[b.offset + k];
            }
        }
        Ok(m)
    }

    pub fn unpack(&self, x: &[f64]) -> Result<BTreeMap<String, Matrix>> {
        self.blocks
            .iter()
            .map(|b| Ok((b.name.clone(), self.value(&b.name, x)?)))
            .collect()
    }

    /// Inverse of [`Self::unpack`]. Entries that the structure ignores
    /// (off-diagonals of a diagonal block, lower triangle of a symmetric
    /// block) are not read.
    pub fn pack(&self, values: &BTreeMap<String, Matrix>) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.total_scalars];
        for b in &self.blocks {
            let m = values
                .get(&b.name)
                .ok_or_else(|| Error::input(format!("missing value for {}", b.name)))?;
            if m.shape() != (b.rows, b.cols) {
                return Err(Error::input(format!("{}: wrong shape", b.name)));
            }
            for (k, pos) in b.positions().into_iter().enumerate() {
                x[b.offset + k] = m[pos[0]];
            }
        }
        Ok(x)
    }
}

/// Matrix expression `C + Σ x_k A_k` over the decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    constant: Matrix,
    terms: BTreeMap<usize, Matrix>,
}

impl AffineExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(Matrix::zeros(rows, cols))
    }

    pub fn constant(m: Matrix) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    fn map(&self, f: impl Fn(&Matrix) -> Matrix) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(&k, a)| (k, f(a)))
            .filter(|(_, a)| a.max_abs() != 0.0)
            .collect();
        Self {
            constant: f(&self.constant),
            terms,
        }
    }

    pub fn add(&self, other: &AffineExpr) -> AffineExpr {
        assert_eq!(self.shape(), other.shape(), "affine expression shape mismatch");
        let mut out = self.clone();
        out.constant.axpy(1.0, &other.constant);
        for (&k, a) in &other.terms {
            out.terms
                .entry(k)
                .and_modify(|t| t.axpy(1.0, a))
                .or_insert_with(|| a.clone());
        }
        out.terms.retain(|_, a| a.max_abs() != 0.0);
        out
    }

    pub fn sub(&self, other: &AffineExpr) -> AffineExpr {
        self.add(&other.scale(-1.0))
    }

    pub fn add_constant(&self, m: &Matrix) -> AffineExpr {
        let mut out = self.clone();
        out.constant.axpy(1.0, m);
        out
    }

    pub fn scale(&self, s: f64) -> AffineExpr {
        self.map(|a| a.scale(s))
    }

    /// `L · self`.
    pub fn left_mul(&self, l: &Matrix) -> AffineExpr {
        assert_eq!(l.cols(), self.shape().0, "left factor shape mismatch");
        self.map(|a| l * a)
    }

    /// `self · r`.
    pub fn right_mul(&self, r: &Matrix) -> AffineExpr {
        assert_eq!(self.shape().1, r.rows(), "right factor shape mismatch");
        self.map(|a| a * r)
    }

    pub fn transpose(&self) -> AffineExpr {
        self.map(Matrix::transpose)
    }

    /// `s · I_n` for a 1x1 expression `s`.
    pub fn times_identity(&self, n: usize) -> AffineExpr {
        assert_eq!(self.shape(), (1, 1), "expected a scalar expression");
        self.map(|a| Matrix::identity(n).scale(a[(0, 0)]))
    }

    /// Block matrix from a grid of expressions with conforming shapes.
    pub fn blocks(grid: &[Vec<AffineExpr>]) -> AffineExpr {
        let row_heights: Vec<usize> = grid.iter().map(|r| r[0].shape().0).collect();
        let col_widths: Vec<usize> = grid[0].iter().map(|e| e.shape().1).collect();
        let rows: usize = row_heights.iter().sum();
        let cols: usize = col_widths.iter().sum();
        let mut out = AffineExpr::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), col_widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, e) in row.iter().enumerate() {
                assert_eq!(e.shape(), (row_heights[bi], col_widths[bj]), "block shape mismatch");
                out.constant.set_block(r0, c0, &e.constant);
                for (&k, a) in &e.terms {
                    out.terms
                        .entry(k)
                        .or_insert_with(|| Matrix::zeros(rows, cols))
                        .set_block(r0, c0, a);
                }
                c0 += col_widths[bj];
            }
            r0 += row_heights[bi];
        }
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> Matrix {
        let mut m = self.constant.clone();
        for (&k, a) in &self.terms {
            m.axpy(x[k], a);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `M(x) <= -margin·I` (strict `M(x) < 0` when margin > 0).
    NegativeDefinite,
    /// `M(x) >= margin·I`.
    PositiveSemidefinite,
}

/// `constant + Σ x_j coeffs[j]` constrained in the given sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMatrixInequality {
    pub label: String,
    pub order: usize,
    pub constant: SymMatrix,
    pub coeffs: BTreeMap<usize, SymMatrix>,
    pub sense: Sense,
    pub strictness_margin: f64,
    pub num_vars: usize,
}

fn is_exactly_symmetric(m: &Matrix) -> bool {
    m == &m.transpose()
}

impl AffineMatrixInequality {
    pub fn new(
        label: impl Into<String>,
        constant: SymMatrix,
        coeffs: BTreeMap<usize, SymMatrix>,
        sense: Sense,
        strictness_margin: f64,
        num_vars: usize,
    ) -> Result<Self> {
        let order = constant.order();
        if coeffs.values().any(|c| c.order() != order) {
            return Err(Error::input("coefficient order differs from constant order"));
        }
        if coeffs.keys().any(|&k| k >= num_vars) {
            return Err(Error::input("coefficient index beyond decision vector length"));
        }
        if !(strictness_margin >= 0.0) {
            return Err(Error::input("strictness margin must be nonnegative"));
        }
        Ok(Self {
            label: label.into(),
            order,
            constant,
            coeffs,
            sense,
            strictness_margin,
            num_vars,
        })
    }

    /// Freezes a square, exactly symmetric expression.
    pub fn from_expr(
        label: impl Into<String>,
        e: &AffineExpr,
        sense: Sense,
        margin: f64,
        num_vars: usize,
    ) -> Result<Self> {
        let label = label.into();
        let all_symmetric = is_exactly_symmetric(&e.constant)
            && e.terms.values().all(is_exactly_symmetric);
        if !all_symmetric {
            return Err(Error::input(format!("{label}: expression is not symmetric")));
        }
        let coeffs = e
            .terms
            .iter()
            .map(|(&k, a)| Ok((k, SymMatrix::new(a.clone())?)))
            .collect::<Result<_>>()?;
        Self::new(label, SymMatrix::new(e.constant.clone())?, coeffs, sense, margin, num_vars)
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<SymMatrix> {
        if x.len() != self.num_vars {
            return Err(Error::input(format!(
                "{}: decision vector has length {}, expected {}",
                self.label,
                x.len(),
                self.num_vars
            )));
        }
        let mut m = self.constant.as_matrix().clone();
        for (&k, a) in &self.coeffs {
            m.axpy(x[k], a.as_matrix());
        }
        SymMatrix::new(m)
    }

    /// Equivalent constraint of the form `F(x) >= 0` with the margin folded
    /// into the constant.
    pub fn to_standard_form(&self) -> AffineMatrixInequality {
        let (sign, sense) = match self.sense {
            Sense::NegativeDefinite => (-1.0, Sense::PositiveSemidefinite),
            Sense::PositiveSemidefinite => (1.0, Sense::PositiveSemidefinite),
        };
        if sign > 0.0 && self.strictness_margin == 0.0 {
            return self.clone();
        }
        AffineMatrixInequality {
            label: self.label.clone(),
            order: self.order,
            constant: self.constant.scale(sign).shift(-self.strictness_margin),
            coeffs: self.coeffs.iter().map(|(&k, a)| (k, a.scale(sign))).collect(),
            sense,
            strictness_margin: 0.0,
            num_vars: self.num_vars,
        }
    }

    pub fn is_standard(&self) -> bool {
        self.sense == Sense::PositiveSemidefinite && self.strictness_margin == 0.0
    }
}

/// Minimize `objective · x` subject to every constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub layout: VariableLayout,
    pub objective: Vec<f64>,
    pub constraints: Vec<AffineMatrixInequality>,
}

impl SdpProblem {
    pub fn new(
        layout: VariableLayout,
        objective: Vec<f64>,
        constraints: Vec<AffineMatrixInequality>,
    ) -> Result<Self> {
        let n = layout.total_scalars();
        if objective.len() != n {
            return Err(Error::input(format!(
                "objective has length {}, layout has {n} scalars",
                objective.len()
            )));
        }
        if constraints.iter().any(|c| c.num_vars != n) {
            return Err(Error::input("constraint built for a different layout"));
        }
        Ok(Self {
            layout,
            objective,
            constraints,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.layout.total_scalars()
    }

    pub fn is_standard(&self) -> bool {
        self.constraints.iter().all(AffineMatrixInequality::is_standard)
    }

    pub fn to_standard_form(&self) -> SdpProblem {
        SdpProblem {
            layout: self.layout.clone(),
            objective: self.objective.clone(),
            constraints: self
                .constraints
                .iter()
                .map(AffineMatrixInequality::to_standard_form)
                .collect(),
        }
    }

    /// Dense JSON dump for cross-checking with external solvers.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("problem serialization cannot fail")
    }
}

/// How the reaching-time bound enters the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho {
    /// `ρ` is a decision variable and the objective.
    Minimize,
    /// `ρ` is a given constant; the problem is a feasibility problem.
    Fixed(f64),
    /// No decay-rate constraint; only the initial set is imposed.
    Free,
}

/// Guaranteed-reaching constraints: decay rate `Q >= ρ⁻¹ I` and initial
/// set `P <= φ I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReachingSet {
    pub phi: f64,
    pub rho: Rho,
}

impl ReachingSet {
    pub fn minimize(phi: f64) -> Self {
        Self {
            phi,
            rho: Rho::Minimize,
        }
    }

    pub fn fixed(phi: f64, rho: f64) -> Self {
        Self {
            phi,
            rho: Rho::Fixed(rho),
        }
    }

    pub fn free(phi: f64) -> Self {
        Self { phi, rho: Rho::Free }
    }

    fn validate(&self) -> Result<()> {
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::InvalidParameter(format!("phi must be positive, got {}", self.phi)));
        }
        if let Rho::Fixed(r) = self.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("rho must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

/// Gain handling: free (`Z` is a decision variable, `K = Z X⁻¹`) or fixed
/// (`Z = K X`, which keeps the conditions linear in the remaining unknowns).
#[derive(Debug, Clone, Copy)]
pub enum Gain<'a> {
    Free,
    Fixed(&'a Matrix),
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn gain_expr(layout: &VariableLayout, gain: Gain<'_>, x: &AffineExpr, sys: &PolytopicSystem) -> Result<AffineExpr> {
    match gain {
        Gain::Free => layout.expr("Z"),
        Gain::Fixed(k) => {
            if k.shape() != (sys.m(), sys.n()) {
                return Err(Error::input(format!(
                    "gain is {}x{}, expected {}x{}",
                    k.rows(),
                    k.cols(),
                    sys.m(),
                    sys.n()
                )));
            }
            if !k.is_finite() {
                return Err(Error::input("gain has non-finite entries"));
            }
            Ok(x.left_mul(k))
        }
    }
}

fn rho_identity(layout: &VariableLayout, rho: Rho, n: usize) -> Result<Option<AffineExpr>> {
    match rho {
        Rho::Minimize => Ok(Some(layout.expr("rho")?.times_identity(n))),
        Rho::Fixed(r) => Ok(Some(AffineExpr::constant(Matrix::identity(n).scale(r)))),
        Rho::Free => Ok(None),
    }
}

fn objective(layout: &VariableLayout, reaching: Option<&ReachingSet>) -> Result<Vec<f64>> {
    let mut c = vec![0.0; layout.total_scalars()];
    if let Some(ReachingSet { rho: Rho::Minimize, .. }) = reaching {
        c[layout.scalar_index("rho")?] = 1.0;
    }
    Ok(c)
}

/// Relay-law (VSC) conditions.
///
/// Unknowns: `W`, `X` diagonal, `R` symmetric, `Z` full `m x n` (absent for
/// a fixed gain) and `ρ` when minimized. Constraints: `W > 0`, `R > 0`, and
/// for every distinct vertex `B_i`
///
/// ```text
/// [ B_i Z + Zᵀ B_iᵀ + R     W - X + ξ Zᵀ B_iᵀ ]
/// [ W - X + ξ B_i Z         -2ξ X             ]  < 0
/// ```
///
/// plus, with a reaching set, `[R X; X ρI] >= 0` (unless `ρ` is free) and
/// `[φI I; I 2X-W] >= 0`.
pub fn assemble_vsc_with(
    sys: &PolytopicSystem,
    xi: f64,
    gain: Gain<'_>,
    reaching: Option<&ReachingSet>,
    margin: f64,
) -> Result<SdpProblem> {
    check_positive("xi", xi)?;
    if let Some(r) = reaching {
        r.validate()?;
    }
    let (n, m) = (sys.n(), sys.m());
    let mut layout = VariableLayout::new();
    layout.push("W", Structure::Diagonal, n, n)?;
    layout.push("X", Structure::Diagonal, n, n)?;
    layout.push("R", Structure::Symmetric, n, n)?;
    if let Gain::Free = gain {
        layout.push("Z", Structure::Full, m, n)?;
    }
    if let Some(ReachingSet { rho: Rho::Minimize, .. }) = reaching {
        layout.push("rho", Structure::Scalar, 1, 1)?;
    }
    let nv = layout.total_scalars();
    let w = layout.expr("W")?;
    let x = layout.expr("X")?;
    let r = layout.expr("R")?;
    let z = gain_expr(&layout, gain, &x, sys)?;

    let mut cons = vec![
        AffineMatrixInequality::from_expr("W > 0", &w, Sense::PositiveSemidefinite, margin, nv)?,
        AffineMatrixInequality::from_expr("R > 0", &r, Sense::PositiveSemidefinite, margin, nv)?,
    ];
    for (i, b) in sys.distinct_vertices() {
        let bz = z.left_mul(b);
        let upper_left = bz.add(&bz.transpose()).add(&r);
        let upper_right = w.sub(&x).add(&bz.transpose().scale(xi));
        let lower_right = x.scale(-2.0 * xi);
        let block = AffineExpr::blocks(&[
            vec![upper_left, upper_right.clone()],
            vec![upper_right.transpose(), lower_right],
        ]);
        cons.push(AffineMatrixInequality::from_expr(
            format!("vertex {}", i + 1),
            &block,
            Sense::NegativeDefinite,
            margin,
            nv,
        )?);
    }
    if let Some(rs) = reaching {
        let eye = AffineExpr::constant(Matrix::identity(n));
        if let Some(rho_i) = rho_identity(&layout, rs.rho, n)? {
            let rate = AffineExpr::blocks(&[vec![r.clone(), x.clone()], vec![x.clone(), rho_i]]);
            cons.push(AffineMatrixInequality::from_expr("decay rate", &rate, Sense::PositiveSemidefinite, 0.0, nv)?);
        }
        let init = AffineExpr::blocks(&[
            vec![eye.scale(rs.phi), eye.clone()],
            vec![eye, x.scale(2.0).sub(&w)],
        ]);
        cons.push(AffineMatrixInequality::from_expr("initial set", &init, Sense::PositiveSemidefinite, 0.0, nv)?);
    }
    let c = objective(&layout, reaching)?;
    SdpProblem::new(layout, c, cons)
}

/// Unit-vector-law (UVC) conditions.
///
/// Unknowns: `X`, `R` symmetric, `Z` full (absent for a fixed gain), `ρ`
/// when minimized. Constraints: `X > 0`, `R > 0`, and per distinct vertex
///
/// ```text
/// [ B_i Z + Zᵀ B_iᵀ + (μ/4) I + R    Zᵀ B_iᵀ ]
/// [ B_i Z                            -μ I    ]  < 0
/// ```
///
/// (both diagonal blocks `n x n`), plus `[R X; X ρI] >= 0` and
/// `[φI I; I X] >= 0` with a reaching set.
pub fn assemble_uvc_with(
    sys: &PolytopicSystem,
    mu: f64,
    gain: Gain<'_>,
    reaching: Option<&ReachingSet>,
    margin: f64,
) -> Result<SdpProblem> {
    check_positive("mu", mu)?;
    if let Some(r) = reaching {
        r.validate()?;
    }
    let (n, m) = (sys.n(), sys.m());
    let mut layout = VariableLayout::new();
    layout.push("X", Structure::Symmetric, n, n)?;
    layout.push("R", Structure::Symmetric, n, n)?;
    if let Gain::Free = gain {
        layout.push("Z", Structure::Full, m, n)?;
    }
    if let Some(ReachingSet { rho: Rho::Minimize, .. }) = reaching {
        layout.push("rho", Structure::Scalar, 1, 1)?;
    }
    let nv = layout.total_scalars();
    let x = layout.expr("X")?;
    let r = layout.expr("R")?;
    let z = gain_expr(&layout, gain, &x, sys)?;
    let eye = Matrix::identity(n);

    let mut cons = vec![
        AffineMatrixInequality::from_expr("X > 0", &x, Sense::PositiveSemidefinite, margin, nv)?,
        AffineMatrixInequality::from_expr("R > 0", &r, Sense::PositiveSemidefinite, margin, nv)?,
    ];
    for (i, b) in sys.distinct_vertices() {
        let bz = z.left_mul(b);
        let upper_left = bz.add(&bz.transpose()).add(&r).add_constant(&eye.scale(mu / 4.0));
        let block = AffineExpr::blocks(&[
            vec![upper_left, bz.transpose()],
            vec![bz, AffineExpr::constant(eye.scale(-mu))],
        ]);
        cons.push(AffineMatrixInequality::from_expr(
            format!("vertex {}", i + 1),
            &block,
            Sense::NegativeDefinite,
            margin,
            nv,
        )?);
    }
    if let Some(rs) = reaching {
        let id = AffineExpr::constant(eye.clone());
        if let Some(rho_i) = rho_identity(&layout, rs.rho, n)? {
            let rate = AffineExpr::blocks(&[vec![r.clone(), x.clone()], vec![x.clone(), rho_i]]);
            cons.push(AffineMatrixInequality::from_expr("decay rate", &rate, Sense::PositiveSemidefinite, 0.0, nv)?);
        }
        let init = AffineExpr::blocks(&[vec![id.scale(rs.phi), id.clone()], vec![id, x.clone()]]);
        cons.push(AffineMatrixInequality::from_expr("initial set", &init, Sense::PositiveSemidefinite, 0.0, nv)?);
    }
    let c = objective(&layout, reaching)?;
    SdpProblem::new(layout, c, cons)
}

/// VSC synthesis problem with a free gain.
pub fn assemble_vsc(
    sys: &PolytopicSystem,
    xi: f64,
    reaching: Option<&ReachingSet>,
    margin: f64,
) -> Result<SdpProblem> {
    assemble_vsc_with(sys, xi, Gain::Free, reaching, margin)
}

/// UVC synthesis problem with a free gain.
pub fn assemble_uvc(
    sys: &PolytopicSystem,
    mu: f64,
    reaching: Option<&ReachingSet>,
    margin: f64,
) -> Result<SdpProblem> {
    assemble_uvc_with(sys, mu, Gain::Free, reaching, margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{rov_polytope, visual_servo_polytope, RovParams};
    use crate::tol::STRICT_MARGIN;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_6};

    fn scalar_system(b: f64) -> PolytopicSystem {
        PolytopicSystem::new(vec![Matrix::from_row_slice(1, 1, &[b])]).unwrap()
    }

    fn sym2(a: f64, b: f64, d: f64) -> SymMatrix {
        SymMatrix::from_rows(&[vec![a, b], vec![b, d]]).unwrap()
    }

    #[test]
    fn layout_counts() {
        let mut l = VariableLayout::new();
        l.push("D", Structure::Diagonal, 3, 3).unwrap();
        l.push("S", Structure::Symmetric, 3, 3).unwrap();
        l.push("F", Structure::Full, 2, 3).unwrap();
        l.push("s", Structure::Scalar, 1, 1).unwrap();
        assert_eq!(l.total_scalars(), 3 + 6 + 6 + 1);
        assert!(l.push("S", Structure::Full, 1, 1).is_err());
        assert!(l.push("T", Structure::Symmetric, 2, 3).is_err());
    }

    #[test]
    fn scalar_vsc_block() {
        // x = [w, x, r, z]; vertex block [[2z + r, w - x + ξz], [., -2ξx]]
        let xi = 0.5;
        let p = assemble_vsc(&scalar_system(1.0), xi, None, STRICT_MARGIN).unwrap();
        assert_eq!(p.num_vars(), 4);
        let vertex = &p.constraints[2];
        assert_eq!(vertex.sense, Sense::NegativeDefinite);
        let x = [0.3, 0.7, 1.1, -2.0];
        let got = vertex.evaluate(&x).unwrap();
        let (w, xx, r, z) = (x[0], x[1], x[2], x[3]);
        let want = sym2(2.0 * z + r, w - xx + xi * z, -2.0 * xi * xx);
        assert_eq!(got, want);
    }

    #[test]
    fn scalar_uvc_block() {
        // x = [x, r, z], mu = 4: [[2z + 1 + r, z], [z, -4]]
        let p = assemble_uvc(&scalar_system(1.0), 4.0, None, STRICT_MARGIN).unwrap();
        let vertex = &p.constraints[2];
        let x = [0.9, 0.4, -1.5];
        let got = vertex.evaluate(&x).unwrap();
        assert_eq!(got, sym2(2.0 * -1.5 + 1.0 + 0.4, -1.5, -4.0));
    }

    #[test]
    fn example_one_vsc_sizes() {
        let sys = visual_servo_polytope(FRAC_PI_6, FRAC_PI_4).unwrap();
        let p = assemble_vsc(&sys, 0.001, Some(&ReachingSet::minimize(0.1)), STRICT_MARGIN).unwrap();
        assert_eq!(p.num_vars(), 12);
        let vertices: Vec<_> = p.constraints.iter().filter(|c| c.label.starts_with("vertex")).collect();
        assert_eq!(vertices.len(), 4);
        assert!(vertices.iter().all(|c| c.order == 4));
        assert_eq!(p.objective[p.layout.scalar_index("rho").unwrap()], 1.0);
        assert_eq!(p.objective.iter().filter(|&&c| c != 0.0).count(), 1);
    }

    #[test]
    fn feasibility_objective_is_zero() {
        let sys = visual_servo_polytope(FRAC_PI_6, FRAC_PI_4).unwrap();
        let p = assemble_vsc(&sys, 0.001, None, STRICT_MARGIN).unwrap();
        assert!(p.objective.iter().all(|&c| c == 0.0));
        let p = assemble_uvc(&sys, 1000.0, None, STRICT_MARGIN).unwrap();
        assert!(p.objective.iter().all(|&c| c == 0.0));
        let p = assemble_vsc(&sys, 0.001, Some(&ReachingSet::fixed(0.1, 0.25)), STRICT_MARGIN).unwrap();
        assert!(p.objective.iter().all(|&c| c == 0.0));
        assert!(p.layout.block("rho").is_none());
    }

    #[test]
    fn parameter_errors() {
        let sys = scalar_system(1.0);
        assert!(matches!(assemble_vsc(&sys, 0.0, None, 1e-6), Err(Error::InvalidParameter(_))));
        assert!(matches!(assemble_uvc(&sys, -1.0, None, 1e-6), Err(Error::InvalidParameter(_))));
        let bad = ReachingSet::minimize(0.0);
        assert!(matches!(assemble_vsc(&sys, 1.0, Some(&bad), 1e-6), Err(Error::InvalidParameter(_))));
        let k = Matrix::zeros(2, 1);
        assert!(assemble_vsc_with(&sys, 1.0, Gain::Fixed(&k), None, 1e-6).is_err());
    }

    #[test]
    fn duplicate_vertices_are_dropped() {
        let b = Matrix::from_row_slice(1, 1, &[2.0]);
        let dup = PolytopicSystem::new(vec![b.clone(), b.clone(), b.clone()]).unwrap();
        let single = PolytopicSystem::new(vec![b]).unwrap();
        let p1 = assemble_uvc(&dup, 3.0, Some(&ReachingSet::minimize(0.5)), 1e-6).unwrap();
        let p2 = assemble_uvc(&single, 3.0, Some(&ReachingSet::minimize(0.5)), 1e-6).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn assembled_coefficients_are_symmetric() {
        let sys = rov_polytope(&RovParams::default()).unwrap();
        for p in [
            assemble_vsc(&sys, 0.2395, Some(&ReachingSet::minimize(0.4)), 1e-6).unwrap(),
            assemble_uvc(&sys, 32.9, Some(&ReachingSet::minimize(0.4)), 1e-6).unwrap(),
        ] {
            for c in &p.constraints {
                for a in c.coeffs.values().chain(std::iter::once(&c.constant)) {
                    assert_eq!(a.as_matrix(), &a.as_matrix().transpose());
                }
            }
        }
    }

    #[test]
    fn evaluate_basics() {
        let c = sym2(1.0, 2.0, 3.0);
        let mut coeffs = BTreeMap::new();
        coeffs.insert(0, SymMatrix::identity(2));
        let ami = AffineMatrixInequality::new("t", c.clone(), coeffs, Sense::PositiveSemidefinite, 0.0, 1).unwrap();
        assert_eq!(ami.evaluate(&[0.0]).unwrap(), c);
        assert_eq!(ami.evaluate(&[2.0]).unwrap(), c.shift(2.0));
        assert!(ami.evaluate(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn standard_form_of_strict_negative() {
        let c = sym2(-3.0, 1.0, -2.0);
        let mut coeffs = BTreeMap::new();
        coeffs.insert(0, sym2(1.0, 0.5, 0.0));
        let ami = AffineMatrixInequality::new("m", c, coeffs, Sense::NegativeDefinite, 1e-6, 1).unwrap();
        let std = ami.to_standard_form();
        assert!(std.is_standard());
        for x in [-1.0, 0.0, 2.5] {
            let orig = ami.evaluate(&[x]).unwrap();
            let want = orig.scale(-1.0).shift(-1e-6);
            let got = std.evaluate(&[x]).unwrap();
            assert!((got.as_matrix() - want.as_matrix()).max_abs() < 1e-15);
        }
        let psd = AffineMatrixInequality::new("p", sym2(1.0, 0.0, 1.0), BTreeMap::new(), Sense::PositiveSemidefinite, 0.0, 0).unwrap();
        assert_eq!(psd.to_standard_form(), psd);
    }

    #[test]
    fn json_dump_has_dense_matrices() {
        let p = assemble_uvc(&scalar_system(1.0), 4.0, None, 1e-6).unwrap();
        let j = p.to_json();
        assert_eq!(j["layout"]["total_scalars"], 3);
        assert_eq!(j["constraints"][2]["constant"], serde_json::json!([[1.0, 0.0], [0.0, -4.0]]));
    }
}
