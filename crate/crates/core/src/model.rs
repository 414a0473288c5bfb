//! Geometric input data: spin circles, intervals, bundle potentials,
//! boundary isometries, parameter families and paths in parameter space.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Tolerance on `T†T = I` for boundary isometries.
pub const UNITARY_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const HERMITIAN_SAMPLES: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    /// Nontrivial double cover: antiperiodic sections.
    Bounding,
    /// Trivial double cover: periodic sections.
    Nonbounding,
}

impl Spin {
    /// Transition sign of sections across the base point.
    pub fn sign(self) -> f64 {
        match self {
            Spin::Bounding => -1.0,
            Spin::Nonbounding => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinCircle {
    pub circumference: f64,
    pub spin: Spin,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalGeom {
    pub length: f64,
}

/// Complex matrix as rows of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat(pub Vec<Vec<Complex64>>);

impl Mat {
    pub fn to_cmat(&self) -> CMat {
        let n = self.0.len();
        let m = self.0.first().map_or(0, Vec::len);
        CMat::from_fn(n, m, |i, j| self.0[i][j])
    }

    pub fn from_cmat(m: &CMat) -> Self {
        Mat((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
    }

    pub fn is_square_of(&self, n: usize) -> bool {
        self.0.len() == n && self.0.iter().all(|r| r.len() == n)
    }
}

/// A Hermitian-matrix-valued function of one real variable.
pub trait MatrixField: Send + Sync {
    fn rank(&self) -> usize;
    fn eval(&self, x: f64) -> CMat;
}

/// Finite coefficient table for a potential or endomorphism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MatrixSeries {
    /// `C0 + Σ_k cos(2πkx/P) C_k + sin(2πkx/P) S_k`.
    Trig { period: f64, constant: Mat, cos: Vec<Mat>, sin: Vec<Mat> },
    /// `Σ_j c_j x^j`.
    Poly { coefficients: Vec<Mat> },
}

impl MatrixSeries {
    pub fn zero(n: usize) -> Self {
        Self::constant(&CMat::zeros(n, n))
    }

    pub fn constant(m: &CMat) -> Self {
        MatrixSeries::Poly { coefficients: vec![Mat::from_cmat(m)] }
    }

    pub fn trig(period: f64, constant: &CMat, cos: &[CMat], sin: &[CMat]) -> Self {
        MatrixSeries::Trig {
            period,
            constant: Mat::from_cmat(constant),
            cos: cos.iter().map(Mat::from_cmat).collect(),
            sin: sin.iter().map(Mat::from_cmat).collect(),
        }
    }

    fn tables(&self) -> Vec<&Mat> {
        match self {
            MatrixSeries::Trig { constant, cos, sin, .. } => {
                std::iter::once(constant).chain(cos.iter()).chain(sin.iter()).collect()
            }
            MatrixSeries::Poly { coefficients } => coefficients.iter().collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.tables().first().map_or(0, |m| m.0.len())
    }

    pub fn is_identically_zero(&self) -> bool {
        self.tables().iter().all(|m| m.0.iter().flatten().all(|z| z.norm() == 0.0))
    }

    pub fn compile(&self) -> CompiledSeries {
        match self {
            MatrixSeries::Trig { period, constant, cos, sin } => CompiledSeries::Trig {
                omega: TAU / period,
                constant: constant.to_cmat(),
                cos: cos.iter().map(Mat::to_cmat).collect(),
                sin: sin.iter().map(Mat::to_cmat).collect(),
            },
            MatrixSeries::Poly { coefficients } => {
                CompiledSeries::Poly { coefficients: coefficients.iter().map(Mat::to_cmat).collect() }
            }
        }
    }

    /// The table of `x ↦ self(x + shift)`.
    pub fn shifted(&self, shift: f64) -> Self {
        match self {
            MatrixSeries::Trig { period, constant, cos, sin } => {
                let omega = TAU / period;
                let mut new_cos = Vec::with_capacity(cos.len().max(sin.len()));
                let mut new_sin = Vec::with_capacity(cos.len().max(sin.len()));
                let n = self.rank();
                for k in 0..cos.len().max(sin.len()) {
                    let c = cos.get(k).map_or_else(|| CMat::zeros(n, n), Mat::to_cmat);
                    let s = sin.get(k).map_or_else(|| CMat::zeros(n, n), Mat::to_cmat);
                    let (sk, ck) = ((k + 1) as f64 * omega * shift).sin_cos();
                    new_cos.push(Mat::from_cmat(&(c.scale(ck) + s.scale(sk))));
                    new_sin.push(Mat::from_cmat(&(s.scale(ck) - c.scale(sk))));
                }
                MatrixSeries::Trig { period: *period, constant: constant.clone(), cos: new_cos, sin: new_sin }
            }
            MatrixSeries::Poly { coefficients } => {
                let c: Vec<CMat> = coefficients.iter().map(Mat::to_cmat).collect();
                let n = self.rank();
                let mut out = vec![CMat::zeros(n, n); c.len()];
                for (j, cj) in c.iter().enumerate() {
                    // c_j (x + p)^j = Σ_i binom(j, i) p^{j-i} c_j x^i
                    let mut binom = 1.0;
                    for i in 0..=j {
                        out[i] += cj.scale(binom * shift.powi((j - i) as i32));
                        binom = binom * (j - i) as f64 / (i + 1) as f64;
                    }
                }
                MatrixSeries::Poly { coefficients: out.iter().map(Mat::from_cmat).collect() }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum CompiledSeries {
    Trig { omega: f64, constant: CMat, cos: Vec<CMat>, sin: Vec<CMat> },
    Poly { coefficients: Vec<CMat> },
}

impl MatrixField for CompiledSeries {
    fn rank(&self) -> usize {
        match self {
            CompiledSeries::Trig { constant, .. } => constant.nrows(),
            CompiledSeries::Poly { coefficients } => coefficients.first().map_or(0, |c| c.nrows()),
        }
    }

    fn eval(&self, x: f64) -> CMat {
        match self {
            CompiledSeries::Trig { omega, constant, cos, sin } => {
                let mut out = constant.clone();
                for (k, c) in cos.iter().enumerate() {
                    out += c.scale(((k + 1) as f64 * omega * x).cos());
                }
                for (k, s) in sin.iter().enumerate() {
                    out += s.scale(((k + 1) as f64 * omega * x).sin());
                }
                out
            }
            CompiledSeries::Poly { coefficients } => {
                let n = self.rank();
                coefficients.iter().rev().fold(CMat::zeros(n, n), |acc, c| acc * Complex64::new(x, 0.0) + c)
            }
        }
    }
}

/// `x ↦ scale · inner(offset + stretch · x)`.
pub struct AffineField {
    pub inner: Arc<dyn MatrixField>,
    pub offset: f64,
    pub stretch: f64,
    pub scale: f64,
}

impl MatrixField for AffineField {
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn eval(&self, x: f64) -> CMat {
        self.inner.eval(self.offset + self.stretch * x).scale(self.scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleData {
    pub rank: usize,
    pub potential: MatrixSeries,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endomorphism: Option<MatrixSeries>,
}

impl BundleData {
    pub fn trivial(rank: usize) -> Self {
        Self { rank, potential: MatrixSeries::zero(rank), endomorphism: None }
    }

    pub fn restricted(&self, shift: f64) -> Self {
        Self {
            rank: self.rank,
            potential: self.potential.shifted(shift),
            endomorphism: self.endomorphism.as_ref().map(|v| v.shifted(shift)),
        }
    }
}

/// Unitary map from the fibers over outgoing boundary points to the fibers
/// over incoming ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryIsometry {
    pub matrix: Mat,
}

impl BoundaryIsometry {
    pub fn new(m: &CMat) -> Result<Self> {
        let defect = linalg::unitarity_defect(m);
        if defect > UNITARY_TOL {
            return Err(Error::NonUnitary(defect));
        }
        Ok(Self { matrix: Mat::from_cmat(m) })
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: Mat::from_cmat(&linalg::identity(n)) }
    }

    pub fn to_cmat(&self) -> CMat {
        self.matrix.to_cmat()
    }
}

/// Sign jump `ψ(x+) = sign · ψ(x-)` of all components at an interior point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub at: f64,
    pub sign: f64,
}

#[derive(Clone)]
pub enum Boundary {
    /// Closed circle with the given spin structure.
    Periodic(Spin),
    /// Interval with transmission condition `Φ_in = T Φ_out`.
    Transmission { isometry: CMat, incoming: String, outgoing: String },
}

/// A one-dimensional Dirac-type operator `Γ(-i d/dx) + M(x)`.
///
/// Without an endomorphism the operator is chiral, `-i d/dx + A` on a rank
/// `n` bundle. With an endomorphism `V` it acts on `E ⊕ E'` where `E'` is a
/// trivial mirror of opposite chirality:
/// `M = [[A, V], [V, 0]]`, `Γ = diag(1, -1)`.
#[derive(Clone)]
pub struct OperatorSpec {
    pub length: f64,
    pub rank: usize,
    pub potential: Arc<dyn MatrixField>,
    pub endomorphism: Option<Arc<dyn MatrixField>>,
    pub transitions: Vec<Transition>,
    pub boundary: Boundary,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.boundary {
            Boundary::Periodic(s) => format!("circle({s:?})"),
            Boundary::Transmission { incoming, outgoing, .. } => format!("interval({incoming} -> {outgoing})"),
        };
        f.debug_struct("OperatorSpec")
            .field("kind", &kind)
            .field("length", &self.length)
            .field("rank", &self.rank)
            .field("massive", &self.endomorphism.is_some())
            .field("transitions", &self.transitions)
            .finish()
    }
}

impl OperatorSpec {
    pub fn circle(circle: SpinCircle, bundle: &BundleData) -> Self {
        Self {
            length: circle.circumference,
            rank: bundle.rank,
            potential: Arc::new(bundle.potential.compile()),
            endomorphism: bundle.endomorphism.as_ref().map(|v| Arc::new(v.compile()) as Arc<dyn MatrixField>),
            transitions: Vec::new(),
            boundary: Boundary::Periodic(circle.spin),
        }
    }

    pub fn interval(geom: IntervalGeom, bundle: &BundleData, isometry: &BoundaryIsometry) -> Self {
        Self {
            length: geom.length,
            rank: bundle.rank,
            potential: Arc::new(bundle.potential.compile()),
            endomorphism: bundle.endomorphism.as_ref().map(|v| Arc::new(v.compile()) as Arc<dyn MatrixField>),
            transitions: Vec::new(),
            boundary: Boundary::Transmission {
                isometry: isometry.to_cmat(),
                incoming: "in".into(),
                outgoing: "out".into(),
            },
        }
    }

    pub fn with_labels(mut self, incoming: &str, outgoing: &str) -> Self {
        if let Boundary::Transmission { incoming: i, outgoing: o, .. } = &mut self.boundary {
            *i = incoming.to_string();
            *o = outgoing.to_string();
        }
        self
    }

    pub fn with_isometry(mut self, t: &CMat) -> Self {
        if let Boundary::Transmission { isometry, .. } = &mut self.boundary {
            *isometry = t.clone();
        }
        self
    }

    pub fn is_massive(&self) -> bool {
        self.endomorphism.is_some()
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic(_))
    }

    /// Number of components of the first-order system.
    pub fn system_dim(&self) -> usize {
        if self.is_massive() {
            2 * self.rank
        } else {
            self.rank
        }
    }

    /// Chirality signs of the components.
    pub fn chirality(&self) -> Vec<f64> {
        let mut g = vec![1.0; self.rank];
        if self.is_massive() {
            g.extend(std::iter::repeat_n(-1.0, self.rank));
        }
        g
    }

    /// Grade of the line over one boundary point: positive minus negative chirality rank.
    pub fn point_grade(&self) -> i64 {
        if self.is_massive() {
            0
        } else {
            self.rank as i64
        }
    }

    /// Full zeroth-order term `M(x)` of the system.
    pub fn system_potential(&self, x: f64) -> CMat {
        let a = self.potential.eval(x);
        match &self.endomorphism {
            None => a,
            Some(v) => {
                let n = self.rank;
                let v = v.eval(x);
                let mut m = CMat::zeros(2 * n, 2 * n);
                m.view_mut((0, 0), (n, n)).copy_from(&a);
                m.view_mut((0, n), (n, n)).copy_from(&v);
                m.view_mut((n, 0), (n, n)).copy_from(&v);
                m
            }
        }
    }

    /// Transmission matrix acting on `Φ_in`; for circles `sign · I`.
    pub fn boundary_matrix(&self) -> CMat {
        let k = self.system_dim();
        match &self.boundary {
            Boundary::Periodic(spin) => linalg::identity(k).scale(spin.sign()),
            Boundary::Transmission { isometry, .. } => isometry.clone(),
        }
    }

    /// Product of interior transition signs.
    pub fn transition_sign(&self) -> f64 {
        self.transitions.iter().map(|t| t.sign).product()
    }

    /// Supremum of `|V|` sampled on a grid (0 for chiral operators).
    pub fn endomorphism_sup(&self) -> f64 {
        match &self.endomorphism {
            None => 0.0,
            Some(v) => (0..=64)
                .map(|k| {
                    let m = v.eval(self.length * k as f64 / 64.0);
                    m.clone().singular_values().max()
                })
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl Violation {
    fn new(location: impl Into<String>, message: impl Into<String>) -> Self {
        Self { location: location.into(), message: message.into() }
    }
}

fn check_series(name: &str, s: &MatrixSeries, rank: usize, length: f64, out: &mut Vec<Violation>) {
    if s.tables().iter().any(|m| !m.is_square_of(rank)) {
        out.push(Violation::new(name, format!("coefficient tables must be {rank}x{rank}")));
        return;
    }
    if let MatrixSeries::Trig { period, .. } = s {
        if !(*period > 0.0) {
            out.push(Violation::new(name, "trigonometric period must be positive"));
            return;
        }
    }
    let c = s.compile();
    for k in 0..HERMITIAN_SAMPLES {
        let x = length * k as f64 / (HERMITIAN_SAMPLES - 1) as f64;
        let d = linalg::hermiticity_defect(&c.eval(x));
        if d > HERMITIAN_TOL {
            out.push(Violation::new(format!("{name}(x={x:.6})"), format!("not Hermitian (defect {d:.3e})")));
            return;
        }
    }
}

/// Checks the invariants of the model types, returning every violation found.
pub trait Validate {
    fn validate(&self) -> Vec<Violation>;
}

impl Validate for SpinCircle {
    fn validate(&self) -> Vec<Violation> {
        if self.circumference > 0.0 && self.circumference.is_finite() {
            vec![]
        } else {
            vec![Violation::new("circle.circumference", "must be positive")]
        }
    }
}

impl Validate for IntervalGeom {
    fn validate(&self) -> Vec<Violation> {
        if self.length > 0.0 && self.length.is_finite() {
            vec![]
        } else {
            vec![Violation::new("interval.length", "must be positive")]
        }
    }
}

impl Validate for BoundaryIsometry {
    fn validate(&self) -> Vec<Violation> {
        let n = self.matrix.0.len();
        if !self.matrix.is_square_of(n) {
            return vec![Violation::new("isometry", "must be square")];
        }
        let d = linalg::unitarity_defect(&self.to_cmat());
        if d > UNITARY_TOL {
            vec![Violation::new("isometry", format!("not unitary (defect {d:.3e})"))]
        } else {
            vec![]
        }
    }
}

/// Bundle data checked over a base of the given length.
pub struct BundleOver<'a>(pub &'a BundleData, pub f64);

impl Validate for BundleOver<'_> {
    fn validate(&self) -> Vec<Violation> {
        let (b, len) = (self.0, self.1);
        let mut out = Vec::new();
        if b.rank == 0 {
            out.push(Violation::new("bundle.rank", "must be positive"));
            return out;
        }
        check_series("potential", &b.potential, b.rank, len, &mut out);
        if let Some(v) = &b.endomorphism {
            check_series("endomorphism", v, b.rank, len, &mut out);
        }
        out
    }
}

/// Gluing data produced by cutting a circle at two points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingRecord {
    pub points: [f64; 2],
    pub labels: [String; 2],
    /// Index of the piece carrying the spin transition at `x = 0`.
    pub twisted_piece: Option<usize>,
    pub spin: Spin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalPiece {
    pub geom: IntervalGeom,
    pub bundle: BundleData,
    pub transitions: Vec<Transition>,
    pub incoming: String,
    pub outgoing: String,
}

impl IntervalPiece {
    pub fn operator(&self, isometry: &BoundaryIsometry) -> OperatorSpec {
        let mut op = OperatorSpec::interval(self.geom, &self.bundle, isometry).with_labels(&self.incoming, &self.outgoing);
        op.transitions = self.transitions.clone();
        op
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleCut {
    pub pieces: [IntervalPiece; 2],
    pub record: GluingRecord,
}

pub fn point_label(x: f64) -> String {
    format!("x={x:.12}")
}

/// Cuts a circle at `p < q` into `[p, q]` and `[q, p + ℓ]`.
///
/// The bounding structure's sign lives on the transition at `x = 0`, which
/// belongs to the second piece (it runs through, or ends at, `x = ℓ ≡ 0`).
pub fn cut_circle(circle: SpinCircle, bundle: &BundleData, p: f64, q: f64) -> Result<CircleCut> {
    let l = circle.circumference;
    if !(0.0 <= p && p < q && q < l) {
        return Err(Error::InvalidSpec(format!("cut points must satisfy 0 <= p < q < ℓ, got p={p}, q={q}, ℓ={l}")));
    }
    let labels = [point_label(p), point_label(q)];
    let first = IntervalPiece {
        geom: IntervalGeom { length: q - p },
        bundle: bundle.restricted(p),
        transitions: vec![],
        incoming: labels[0].clone(),
        outgoing: labels[1].clone(),
    };
    let twisted = circle.spin == Spin::Bounding;
    let second = IntervalPiece {
        geom: IntervalGeom { length: l - q + p },
        bundle: bundle.restricted(q),
        transitions: if twisted { vec![Transition { at: l - q, sign: -1.0 }] } else { vec![] },
        incoming: labels[1].clone(),
        outgoing: labels[0].clone(),
    };
    Ok(CircleCut {
        pieces: [first, second],
        record: GluingRecord { points: [p, q], labels, twisted_piece: twisted.then_some(1), spin: circle.spin },
    })
}

/// Monomial `z^powers · matrix` of a polynomial family table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub powers: Vec<u32>,
    pub matrix: Mat,
}

/// Family of rank-`n` fibers over a single point, parametrized by `z ∈ R^d`,
/// with connection `Σ_j A_j(z) dz^j` and optional endomorphism `V(z)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub dim: usize,
    pub rank: usize,
    pub connection: Vec<Vec<Monomial>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endomorphism: Option<Vec<Monomial>>,
}

#[derive(Clone, Debug)]
struct CompiledPoly {
    terms: Vec<(Vec<u32>, CMat)>,
    rank: usize,
}

impl CompiledPoly {
    fn new(terms: &[Monomial], rank: usize) -> Self {
        Self { terms: terms.iter().map(|m| (m.powers.clone(), m.matrix.to_cmat())).collect(), rank }
    }

    fn eval(&self, z: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.rank, self.rank);
        for (p, m) in &self.terms {
            let c: f64 = p.iter().zip(z).map(|(&k, &x)| x.powi(k as i32)).product();
            out += m.scale(c);
        }
        out
    }

    fn partial(&self, z: &[f64], k: usize) -> CMat {
        let mut out = CMat::zeros(self.rank, self.rank);
        for (p, m) in &self.terms {
            let pk = p.get(k).copied().unwrap_or(0);
            if pk == 0 {
                continue;
            }
            let c: f64 = p
                .iter()
                .zip(z)
                .enumerate()
                .map(|(i, (&e, &x))| if i == k { e as f64 * x.powi(e as i32 - 1) } else { x.powi(e as i32) })
                .product();
            out += m.scale(c);
        }
        out
    }
}

/// Evaluation-ready form of a [`FamilySpec`].
#[derive(Clone, Debug)]
pub struct CompiledFamily {
    pub dim: usize,
    pub rank: usize,
    connection: Vec<CompiledPoly>,
    endomorphism: Option<CompiledPoly>,
}

impl CompiledFamily {
    /// Connection coefficient `A_j(z)`.
    pub fn connection(&self, j: usize, z: &[f64]) -> CMat {
        self.connection[j].eval(z)
    }

    /// `∂_k A_j(z)`.
    pub fn connection_partial(&self, j: usize, k: usize, z: &[f64]) -> CMat {
        self.connection[j].partial(z, k)
    }

    pub fn endomorphism(&self, z: &[f64]) -> Option<CMat> {
        self.endomorphism.as_ref().map(|v| v.eval(z))
    }

    pub fn is_massive(&self) -> bool {
        self.endomorphism.is_some()
    }

    /// Contraction `Σ_j A_j(z) w^j` with a tangent vector.
    pub fn along(&self, z: &[f64], w: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.rank, self.rank);
        for (j, wj) in w.iter().enumerate() {
            if *wj != 0.0 {
                out += self.connection(j, z).scale(*wj);
            }
        }
        out
    }

    /// `tr F(u, v)` for the connection `d + iA`: `i tr(∂_u A_v - ∂_v A_u)`.
    pub fn trace_curvature(&self, z: &[f64], u: &[f64], v: &[f64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.dim {
            for k in 0..self.dim {
                let w = u[j] * v[k];
                if w != 0.0 {
                    acc += (self.connection_partial(k, j, z) - self.connection_partial(j, k, z)).trace() * w;
                }
            }
        }
        acc * linalg::I
    }
}

impl FamilySpec {
    pub fn compile(&self) -> CompiledFamily {
        CompiledFamily {
            dim: self.dim,
            rank: self.rank,
            connection: self.connection.iter().map(|t| CompiledPoly::new(t, self.rank)).collect(),
            endomorphism: self.endomorphism.as_ref().map(|t| CompiledPoly::new(t, self.rank)),
        }
    }

    /// Index of the fiber Dirac operator: the signed rank of the fiber.
    pub fn index(&self) -> i64 {
        if self.endomorphism.is_some() {
            0
        } else {
            self.rank as i64
        }
    }
}

impl Validate for FamilySpec {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.rank == 0 || self.dim == 0 {
            out.push(Violation::new("family", "rank and dimension must be positive"));
            return out;
        }
        if self.connection.len() != self.dim {
            out.push(Violation::new("family.connection", format!("expected {} components", self.dim)));
            return out;
        }
        let tables = self.connection.iter().enumerate().map(|(j, t)| (format!("connection[{j}]"), t));
        let tables: Vec<_> = tables.chain(self.endomorphism.iter().map(|t| ("endomorphism".to_string(), t))).collect();
        for (name, t) in &tables {
            for m in t.iter() {
                if !m.matrix.is_square_of(self.rank) || m.powers.len() > self.dim {
                    out.push(Violation::new(name.clone(), "malformed monomial"));
                    return out;
                }
            }
        }
        let fam = self.compile();
        // Deterministic sample points in [-1, 1]^d.
        for s in 0..HERMITIAN_SAMPLES {
            let z: Vec<f64> = (0..self.dim).map(|j| ((s * (2 * j + 3) + j) as f64 * 0.618_033_988_75).fract() * 2.0 - 1.0).collect();
            for j in 0..self.dim {
                if linalg::hermiticity_defect(&fam.connection(j, &z)) > HERMITIAN_TOL {
                    out.push(Violation::new(format!("connection[{j}](z={z:?})"), "not Hermitian"));
                }
            }
            if let Some(v) = fam.endomorphism(&z) {
                if linalg::hermiticity_defect(&v) > HERMITIAN_TOL {
                    out.push(Violation::new(format!("endomorphism(z={z:?})"), "not Hermitian"));
                }
            }
        }
        out
    }
}

/// `C^∞` step: 0 for `u ≤ 0`, 1 for `u ≥ 1`, returning value and derivative.
pub fn smoothstep(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |x: f64| (-1.0 / x).exp();
    let (a, b) = (f(u), f(1.0 - u));
    let da = if a == 0.0 { 0.0 } else { a / (u * u) };
    let db = if b == 0.0 { 0.0 } else { -b / ((1.0 - u) * (1.0 - u)) };
    let s = a + b;
    (a / s, (da * s - a * (da + db)) / (s * s))
}

/// Collar map: constant 0 on `[0, δ]`, constant 1 on `[1-δ, 1]`.
fn collar(t: f64, delta: f64) -> (f64, f64) {
    let w = 1.0 - 2.0 * delta;
    let (s, ds) = smoothstep((t - delta) / w);
    (s, ds / w)
}

/// A path `γ: [0, 1] → Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FamilyPath {
    /// Straight segments joined by smooth steps.
    Polyline { vertices: Vec<Vec<f64>>, collar: f64 },
    /// `c + Σ_k cos(2πks) a_k + sin(2πks) b_k`.
    Fourier { center: Vec<f64>, cos: Vec<Vec<f64>>, sin: Vec<Vec<f64>>, collar: f64 },
    /// Cubic spline through uniformly spaced samples.
    Samples { points: Vec<Vec<f64>>, closed: bool, collar: f64 },
    /// `γ ∘ φ` with `φ(t) = t + Σ_k c_k sin(kπt)/(kπ)`.
    Reparametrized { path: Box<FamilyPath>, sine_coeffs: Vec<f64> },
    /// `second ∘ first`: first on `[0, 1/2]`, second on `[1/2, 1]`.
    Concat { first: Box<FamilyPath>, second: Box<FamilyPath> },
    Reversed { path: Box<FamilyPath> },
}

impl FamilyPath {
    pub fn compose(first: FamilyPath, second: FamilyPath) -> Self {
        FamilyPath::Concat { first: Box::new(first), second: Box::new(second) }
    }

    pub fn reversed(self) -> Self {
        FamilyPath::Reversed { path: Box::new(self) }
    }

    pub fn reparametrized(self, sine_coeffs: Vec<f64>) -> Self {
        FamilyPath::Reparametrized { path: Box::new(self), sine_coeffs }
    }

    pub fn dim(&self) -> usize {
        match self {
            FamilyPath::Polyline { vertices, .. } => vertices.first().map_or(0, Vec::len),
            FamilyPath::Fourier { center, .. } => center.len(),
            FamilyPath::Samples { points, .. } => points.first().map_or(0, Vec::len),
            FamilyPath::Reparametrized { path, .. } | FamilyPath::Reversed { path } => path.dim(),
            FamilyPath::Concat { first, .. } => first.dim(),
        }
    }

    /// Point and velocity at `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let t = t.clamp(0.0, 1.0);
        match self {
            FamilyPath::Polyline { vertices, collar: d } => {
                let (s, ds) = collar(t, *d);
                let k = vertices.len() - 1;
                if k == 0 {
                    return (vertices[0].clone(), vec![0.0; vertices[0].len()]);
                }
                let x = s * k as f64;
                let i = (x.floor() as usize).min(k - 1);
                let (g, dg) = smoothstep(x - i as f64);
                let (a, b) = (&vertices[i], &vertices[i + 1]);
                let p = a.iter().zip(b).map(|(a, b)| a + g * (b - a)).collect();
                let v = a.iter().zip(b).map(|(a, b)| (b - a) * dg * k as f64 * ds).collect();
                (p, v)
            }
            FamilyPath::Fourier { center, cos, sin, collar: d } => {
                let (s, ds) = collar(t, *d);
                let mut p = center.clone();
                let mut v = vec![0.0; center.len()];
                for (k, a) in cos.iter().enumerate() {
                    let w = TAU * (k + 1) as f64;
                    let (sn, cs) = (w * s).sin_cos();
                    for i in 0..p.len() {
                        p[i] += a[i] * cs;
                        v[i] -= a[i] * w * sn * ds;
                    }
                }
                for (k, b) in sin.iter().enumerate() {
                    let w = TAU * (k + 1) as f64;
                    let (sn, cs) = (w * s).sin_cos();
                    for i in 0..p.len() {
                        p[i] += b[i] * sn;
                        v[i] += b[i] * w * cs * ds;
                    }
                }
                (p, v)
            }
            FamilyPath::Samples { points, closed, collar: d } => {
                let (s, ds) = collar(t, *d);
                let (p, v) = spline_eval(points, *closed, s);
                (p, v.into_iter().map(|x| x * ds).collect())
            }
            FamilyPath::Reparametrized { path, sine_coeffs } => {
                let (mut phi, mut dphi) = (t, 1.0);
                for (k, c) in sine_coeffs.iter().enumerate() {
                    let w = std::f64::consts::PI * (k + 1) as f64;
                    phi += c * (w * t).sin() / w;
                    dphi += c * (w * t).cos();
                }
                let (p, v) = path.eval(phi);
                (p, v.into_iter().map(|x| x * dphi).collect())
            }
            FamilyPath::Concat { first, second } => {
                let (p, v) = if t <= 0.5 { first.eval(2.0 * t) } else { second.eval(2.0 * t - 1.0) };
                (p, v.into_iter().map(|x| 2.0 * x).collect())
            }
            FamilyPath::Reversed { path } => {
                let (p, v) = path.eval(1.0 - t);
                (p, v.into_iter().map(|x| -x).collect())
            }
        }
    }

    pub fn start(&self) -> Vec<f64> {
        self.eval(0.0).0
    }

    pub fn end(&self) -> Vec<f64> {
        self.eval(1.0).0
    }

    pub fn is_closed(&self) -> bool {
        let (a, b) = (self.start(), self.end());
        a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    /// Width of the endpoint collars on which the path is constant.
    pub fn collar_width(&self) -> f64 {
        match self {
            FamilyPath::Polyline { collar, .. } | FamilyPath::Fourier { collar, .. } | FamilyPath::Samples { collar, .. } => *collar,
            FamilyPath::Reparametrized { path, sine_coeffs } => {
                // φ fixes endpoints with φ' ≤ 1 + Σ|c_k|.
                let lip = 1.0 + sine_coeffs.iter().map(|c| c.abs()).sum::<f64>();
                path.collar_width() / lip
            }
            FamilyPath::Concat { first, second } => 0.5 * first.collar_width().min(second.collar_width()),
            FamilyPath::Reversed { path } => path.collar_width(),
        }
    }
}

impl Validate for FamilyPath {
    fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let delta = self.collar_width();
        if !(delta > 0.0) {
            out.push(Violation::new("path.collar", "missing collar"));
        } else if delta >= 0.5 {
            out.push(Violation::new("path.collar", "collar must be below 1/2"));
        }
        match self {
            FamilyPath::Polyline { vertices, .. } if vertices.is_empty() => {
                out.push(Violation::new("path.vertices", "empty"));
            }
            FamilyPath::Samples { points, .. } if points.len() < 4 => {
                out.push(Violation::new("path.points", "need at least 4 samples"));
            }
            FamilyPath::Reparametrized { sine_coeffs, path } => {
                if sine_coeffs.iter().map(|c| c.abs()).sum::<f64>() >= 1.0 {
                    out.push(Violation::new("path.reparametrization", "not monotone (Σ|c_k| must be < 1)"));
                }
                out.extend(path.validate());
            }
            FamilyPath::Concat { first, second } => {
                let (a, b) = (first.end(), second.start());
                if a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-12) {
                    out.push(Violation::new("path.concat", "second path does not start where the first ends"));
                }
                out.extend(first.validate());
                out.extend(second.validate());
            }
            FamilyPath::Reversed { path } => out.extend(path.validate()),
            _ => {}
        }
        out
    }
}

/// Cubic spline through `points` at parameters `k/(N-1)` (open) or `k/N`
/// (closed, periodic). Returns point and derivative with respect to `s`.
fn spline_eval(points: &[Vec<f64>], closed: bool, s: f64) -> (Vec<f64>, Vec<f64>) {
    let dim = points[0].len();
    let pts: Vec<&Vec<f64>> = if closed && points.len() > 1 && points[0] == points[points.len() - 1] {
        points[..points.len() - 1].iter().collect()
    } else {
        points.iter().collect()
    };
    let n = pts.len();
    let segments = if closed { n } else { n - 1 };
    let h = 1.0 / segments as f64;
    let mut p = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let x = (s / h).min(segments as f64 - 1e-15);
    let i = x.floor() as usize;
    let u = x - i as f64;
    for c in 0..dim {
        let y: Vec<f64> = pts.iter().map(|q| q[c]).collect();
        let m = spline_second_derivatives(&y, closed, h);
        let (i1, y0, y1, m0, m1) = if closed {
            let j = (i + 1) % n;
            (j, y[i], y[j], m[i], m[j])
        } else {
            (i + 1, y[i], y[i + 1], m[i], m[i + 1])
        };
        let _ = i1;
        let a = 1.0 - u;
        p[c] = a * y0 + u * y1 + ((a * a * a - a) * m0 + (u * u * u - u) * m1) * h * h / 6.0;
        v[c] = (y1 - y0) / h + ((-(3.0 * a * a - 1.0)) * m0 + (3.0 * u * u - 1.0) * m1) * h / 6.0;
    }
    (p, v)
}

fn spline_second_derivatives(y: &[f64], closed: bool, h: f64) -> Vec<f64> {
    let n = y.len();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..n {
        if !closed && (i == 0 || i == n - 1) {
            a[(i, i)] = 1.0;
            continue;
        }
        let (im, ip) = ((i + n - 1) % n, (i + 1) % n);
        a[(i, im)] += 1.0;
        a[(i, i)] += 4.0;
        a[(i, ip)] += 1.0;
        rhs[i] = 6.0 * (y[ip] - 2.0 * y[i] + y[im]) / (h * h);
    }
    a.lu().solve(&rhs).map(|v| v.iter().copied().collect()).unwrap_or_else(|| vec![0.0; n])
}

/// Smooth map of the closed unit disk into parameter space,
/// `Γ(x, y) = c + x p + y q + x y w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskMap {
    pub center: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(default)]
    pub w: Option<Vec<f64>>,
}

impl DiskMap {
    pub fn eval(&self, x: f64, y: f64) -> Vec<f64> {
        (0..self.center.len())
            .map(|i| self.center[i] + x * self.p[i] + y * self.q[i] + self.w.as_ref().map_or(0.0, |w| x * y * w[i]))
            .collect()
    }

    /// `∂Γ/∂x`, `∂Γ/∂y`.
    pub fn jacobian(&self, x: f64, y: f64) -> (Vec<f64>, Vec<f64>) {
        let d = self.center.len();
        let w = |i: usize| self.w.as_ref().map_or(0.0, |w| w[i]);
        ((0..d).map(|i| self.p[i] + y * w(i)).collect(), (0..d).map(|i| self.q[i] + x * w(i)).collect())
    }

    /// Counterclockwise boundary loop with collars.
    pub fn boundary_loop(&self, collar: f64) -> FamilyPath {
        let mut cos = vec![self.p.clone()];
        let mut sin = vec![self.q.clone()];
        if let Some(w) = &self.w {
            // cos θ sin θ = sin(2θ)/2
            cos.push(vec![0.0; w.len()]);
            sin.push(w.iter().map(|x| 0.5 * x).collect());
        }
        FamilyPath::Fourier { center: self.center.clone(), cos, sin, collar }
    }
}

/// Pulled-back potential `Σ_j A_j(γ(t)) γ'_j(t)` scaled for a base of length `1/ε`.
pub struct PathPullback {
    pub family: Arc<CompiledFamily>,
    pub path: FamilyPath,
    pub eps: f64,
}

impl MatrixField for PathPullback {
    fn rank(&self) -> usize {
        self.family.rank
    }

    fn eval(&self, x: f64) -> CMat {
        let (z, v) = self.path.eval(self.eps * x);
        self.family.along(&z, &v).scale(self.eps)
    }
}

/// Pulled-back endomorphism `ε V(γ(εx))`.
pub struct PathEndomorphism {
    pub family: Arc<CompiledFamily>,
    pub path: FamilyPath,
    pub eps: f64,
}

impl MatrixField for PathEndomorphism {
    fn rank(&self) -> usize {
        self.family.rank
    }

    fn eval(&self, x: f64) -> CMat {
        let (z, _) = self.path.eval(self.eps * x);
        self.family.endomorphism(&z).expect("massive family").scale(self.eps)
    }
}

pub fn parameter_label(z: &[f64]) -> String {
    let parts: Vec<String> = z.iter().map(|x| format!("{:.9}", if x.abs() < 5e-10 { 0.0 } else { *x })).collect();
    format!("z=({})", parts.join(","))
}

/// Pullback interval operator of a path at adiabatic parameter `ε`, with the
/// canonical fiber identification as boundary isometry.
pub fn pullback_interval(family: &Arc<CompiledFamily>, path: &FamilyPath, eps: f64) -> OperatorSpec {
    let potential: Arc<dyn MatrixField> = Arc::new(PathPullback { family: family.clone(), path: path.clone(), eps });
    let endomorphism = family.is_massive().then(|| {
        Arc::new(PathEndomorphism { family: family.clone(), path: path.clone(), eps }) as Arc<dyn MatrixField>
    });
    let k = if family.is_massive() { 2 * family.rank } else { family.rank };
    OperatorSpec {
        length: 1.0 / eps,
        rank: family.rank,
        potential,
        endomorphism,
        transitions: vec![],
        boundary: Boundary::Transmission {
            isometry: linalg::identity(k),
            incoming: parameter_label(&path.start()),
            outgoing: parameter_label(&path.end()),
        },
    }
}

/// Mapping torus of a closed path: a circle of circumference `1/ε`.
pub fn mapping_torus(family: &Arc<CompiledFamily>, path: &FamilyPath, spin: Spin, eps: f64) -> Result<OperatorSpec> {
    if !path.is_closed() {
        return Err(Error::PathNotClosed);
    }
    let mut op = pullback_interval(family, path, eps);
    op.boundary = Boundary::Periodic(spin);
    Ok(op)
}

/// Convenience: diagonal real matrix.
pub fn diag(values: &[f64]) -> CMat {
    CMat::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|x| Complex64::new(*x, 0.0))))
}
