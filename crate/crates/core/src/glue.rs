//! Gluing laws for τ-invariants: the closed pairing of two pieces of a circle
//! and the graded supertrace of a cut word.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aps::{self, TauValue};
use crate::error::{Error, Result};
use crate::etainv::{self, EtaOptions};
use crate::glines::LineElement;
use crate::linalg::{self, CMat};
use crate::model::{self, BoundaryIsometry, BundleData, CircleCut, IntervalGeom, IntervalPiece, Mat, OperatorSpec, SpinCircle};

pub const AFFINE_TOL: f64 = 1e-8;
pub const NUMERIC_TOL: f64 = 1e-6;

/// Contracts a fully paired word from the middle outwards.
fn contract_closed(x: &LineElement, graded: bool) -> Result<Complex64> {
    let mut x = x.clone();
    while !x.word.is_empty() {
        let pos = (x.word.len() / 2).checked_sub(1).ok_or(Error::NoContractiblePair(0))?;
        x = if graded { x.supertrace_at(pos)? } else { x.contract_ungraded_at(pos)? };
    }
    Ok(x.coordinate)
}

/// Pairing of τ-values lying in mutually dual lines.
pub fn glue_closed(t1: &TauValue, t2: &TauValue) -> Result<Complex64> {
    glue_closed_elements(&t1.element, &t2.element)
}

pub fn glue_closed_elements(a: &LineElement, b: &LineElement) -> Result<Complex64> {
    if a.word.dual() != b.word {
        return Err(Error::LineMismatch(format!("{} is not dual to {}", a.word.display(), b.word.display())));
    }
    contract_closed(&a.tensor(b), true)
}

/// Pairing with the grading factor dropped.
pub fn glue_closed_ungraded(a: &LineElement, b: &LineElement) -> Result<Complex64> {
    if a.word.dual() != b.word {
        return Err(Error::LineMismatch(format!("{} is not dual to {}", a.word.display(), b.word.display())));
    }
    contract_closed(&a.tensor(b), false)
}

/// Supertrace of the trailing `L_Y ⊗ L_Y^{-1}` pair of a cut word.
pub fn glue_general(cut: &LineElement) -> Result<LineElement> {
    let n = cut.word.len();
    if n < 2 {
        return Err(Error::NoContractiblePair(0));
    }
    cut.supertrace_at(n - 2)
}

pub fn glue_general_ungraded(cut: &LineElement) -> Result<LineElement> {
    let n = cut.word.len();
    if n < 2 {
        return Err(Error::NoContractiblePair(0));
    }
    cut.contract_ungraded_at(n - 2)
}

/// Brings `τ2 ⊗ τ1` over `L_2 ⊗ L_Y^{-1} ⊗ L_Y ⊗ L_0^{-1}` to the canonical
/// cut order `L_2 ⊗ L_0^{-1} ⊗ L_Y ⊗ L_Y^{-1}`.
pub fn composition_cut_word(t2: &LineElement, t1: &LineElement) -> Result<LineElement> {
    if t2.word.len() != 2 || t1.word.len() != 2 {
        return Err(Error::LineMismatch("composition needs two-factor words".into()));
    }
    let x = t2.tensor(t1);
    x.reorder(&[0, 3, 2, 1])
}

/// `τ2 ∘ τ1` through the canonical reorder and the graded supertrace.
pub fn glue_composition(t2: &LineElement, t1: &LineElement) -> Result<LineElement> {
    glue_general(&composition_cut_word(t2, t1)?)
}

/// `τ2 ∘ τ1` contracted in place as `L_Y^{-1} ⊗ L_Y`.
pub fn glue_composition_direct(t2: &LineElement, t1: &LineElement) -> Result<LineElement> {
    t2.tensor(t1).supertrace_at(1)
}

/// Composition with the Koszul sign kept but the supertrace sign dropped.
pub fn glue_composition_ungraded(t2: &LineElement, t1: &LineElement) -> Result<LineElement> {
    glue_general_ungraded(&composition_cut_word(t2, t1)?)
}

/// A circle cut at two points, with the isometries used on each piece.
#[derive(Clone, Debug)]
pub struct CutConfiguration {
    pub original: OperatorSpec,
    pub cut: CircleCut,
    pub pieces: [OperatorSpec; 2],
}

impl CutConfiguration {
    pub fn new(circle: SpinCircle, bundle: &BundleData, points: [f64; 2], isometries: [&CMat; 2]) -> Result<Self> {
        let original = OperatorSpec::circle(circle, bundle);
        let cut = model::cut_circle(circle, bundle, points[0], points[1])?;
        let p0 = cut.pieces[0].operator(&BoundaryIsometry::new(isometries[0])?);
        let p1 = cut.pieces[1].operator(&BoundaryIsometry::new(isometries[1])?);
        Ok(Self { original, cut, pieces: [p0, p1] })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingScenario {
    pub id: String,
    pub circle: SpinCircle,
    pub bundle: BundleData,
    pub cut: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isometries: Option<[Mat; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GluingReport {
    pub id: String,
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Pairing value with the grading sign omitted.
    pub ungraded: Complex64,
    pub raw_norms: [f64; 2],
}

fn tolerance_for(op: &OperatorSpec) -> f64 {
    if op.is_massive() {
        NUMERIC_TOL
    } else {
        AFFINE_TOL
    }
}

pub fn verify_gluing(scenario: &GluingScenario, opts: &EtaOptions) -> Result<GluingReport> {
    let n = scenario.bundle.rank;
    let ids = [linalg::identity(n), linalg::identity(n)];
    let isos = match &scenario.isometries {
        Some([a, b]) => [a.to_cmat(), b.to_cmat()],
        None => ids,
    };
    let dim = if scenario.bundle.endomorphism.is_some() { 2 * n } else { n };
    let isos = isos.map(|m| if m.nrows() == dim { m } else { pad_isometry(&m, dim) });
    let cfg = CutConfiguration::new(scenario.circle, &scenario.bundle, scenario.cut, [&isos[0], &isos[1]])?;
    let lhs = etainv::tau_closed(&cfg.original, opts)?.tau;
    let t1 = aps::tau_interval(&cfg.pieces[0], opts)?;
    let t2 = aps::tau_interval(&cfg.pieces[1], opts)?;
    let rhs = glue_closed(&t1, &t2)?;
    let ungraded = glue_closed_ungraded(&t1.element, &t2.element)?;
    let residual = (lhs - rhs).norm();
    let tolerance = tolerance_for(&cfg.original);
    Ok(GluingReport {
        id: scenario.id.clone(),
        lhs,
        rhs,
        residual,
        tolerance,
        pass: residual <= tolerance,
        ungraded,
        raw_norms: [t1.raw_norm, t2.raw_norm],
    })
}

/// Extends an `n×n` isometry of the `E` channel by the identity on the mirror channel.
fn pad_isometry(m: &CMat, dim: usize) -> CMat {
    let mut out = linalg::identity(dim);
    let k = m.nrows().min(dim);
    out.view_mut((0, 0), (k, k)).copy_from(&m.view((0, 0), (k, k)));
    out
}

/// An interval cut at an interior point `y`, glued back by composition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionReport {
    pub lhs: LineElement,
    pub rhs: LineElement,
    pub direct: LineElement,
    pub ungraded: LineElement,
    pub residual: f64,
    pub presentation_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn verify_interval_gluing(
    geom: IntervalGeom,
    bundle: &BundleData,
    y: f64,
    isometries: [&CMat; 3],
    opts: &EtaOptions,
) -> Result<CompositionReport> {
    if !(0.0 < y && y < geom.length) {
        return Err(Error::InvalidSpec(format!("cut point {y} must lie inside (0, {})", geom.length)));
    }
    let labels = [model::point_label(0.0), model::point_label(y), model::point_label(geom.length)];
    let piece = |a: f64, b: f64, i: usize, o: usize| IntervalPiece {
        geom: IntervalGeom { length: b - a },
        bundle: bundle.restricted(a),
        transitions: vec![],
        incoming: labels[i].clone(),
        outgoing: labels[o].clone(),
    };
    let whole = piece(0.0, geom.length, 0, 2).operator(&BoundaryIsometry::new(isometries[0])?);
    let first = piece(0.0, y, 0, 1).operator(&BoundaryIsometry::new(isometries[1])?);
    let second = piece(y, geom.length, 1, 2).operator(&BoundaryIsometry::new(isometries[2])?);
    let lhs = aps::tau_interval(&whole, opts)?.element;
    let t1 = aps::tau_interval(&first, opts)?.element;
    let t2 = aps::tau_interval(&second, opts)?.element;
    let rhs = glue_composition(&t2, &t1)?;
    let direct = glue_composition_direct(&t2, &t1)?;
    let ungraded = glue_composition_ungraded(&t2, &t1)?;
    let residual = lhs.distance(&rhs)?;
    let presentation_residual = rhs.distance(&direct)?;
    let tolerance = tolerance_for(&whole);
    Ok(CompositionReport {
        lhs,
        rhs,
        direct,
        ungraded,
        residual,
        presentation_residual,
        tolerance,
        pass: residual <= tolerance && presentation_residual <= 1e-10,
    })
}
