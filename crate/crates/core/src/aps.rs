//! τ-invariants of intervals as elements of the inverse determinant line of
//! the boundary, with the dependence on the boundary isometry factored out.
//!
//! Over a boundary point the line is `L_p = Λ^top E⁺_p ⊗ (Λ^top E⁻_p)^{-1}`,
//! graded by `rank E⁺ - rank E⁻`. An interval from `p_in` to `p_out` carries
//! its τ in `L_out ⊗ L_in^{-1}` with coordinate `(-1)^g τ(T) / det T`, where
//! `g` is the grade of `L_p`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::etainv::{self, EtaOptions, EtaResult};
use crate::glines::{Factor, GradedLine, LineElement, TensorWord};
use crate::linalg::{self, CMat};
use crate::model::{Boundary, OperatorSpec};

/// Quillen norm of a returned τ must be 1 to this accuracy.
pub const NORM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub label: String,
    /// Signed rank `rank E⁺ - rank E⁻` of the fiber.
    pub grade: i64,
    pub outgoing: bool,
    /// Norm of the top exterior power of the fiber metric.
    pub basis_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDetLine {
    pub points: Vec<BoundaryPoint>,
}

pub fn point_line(label: &str, grade: i64) -> GradedLine {
    GradedLine::unit(format!("L[{label}]"), grade)
}

impl BoundaryDetLine {
    /// Word `⊗ L_out ⊗ (⊗ L_in)^{-1}`: outgoing lines first, then inverses of incoming ones.
    pub fn word(&self) -> TensorWord {
        let line = |p: &BoundaryPoint| {
            GradedLine::new(format!("L[{}]", p.label), p.grade, p.basis_norm).unwrap_or_else(|_| point_line(&p.label, p.grade))
        };
        let out = self.points.iter().filter(|p| p.outgoing).map(|p| Factor::plain(line(p)));
        let inc = self.points.iter().filter(|p| !p.outgoing).map(|p| Factor::inverse(line(p)));
        TensorWord::new(out.chain(inc).collect())
    }

    pub fn grade(&self) -> i64 {
        self.word().grade()
    }

    pub fn assemble(&self) -> GradedLine {
        self.word().assemble()
    }
}

/// Boundary determinant line of an operator (empty for circles).
pub fn det_line(op: &OperatorSpec) -> BoundaryDetLine {
    match &op.boundary {
        Boundary::Periodic(_) => BoundaryDetLine::default(),
        Boundary::Transmission { incoming, outgoing, .. } => BoundaryDetLine {
            points: vec![
                BoundaryPoint { label: outgoing.clone(), grade: op.point_grade(), outgoing: true, basis_norm: 1.0 },
                BoundaryPoint { label: incoming.clone(), grade: op.point_grade(), outgoing: false, basis_norm: 1.0 },
            ],
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauValue {
    pub element: LineElement,
    /// Quillen norm before normalization.
    pub raw_norm: f64,
    /// Scalar `τ(T) = exp(πi(η + h))` of the transmission problem.
    pub tau_boundary: Complex64,
    pub det_isometry: Complex64,
    pub eta: EtaResult,
}

impl TauValue {
    pub fn coordinate(&self) -> Complex64 {
        self.element.coordinate
    }
}

/// Scalar τ of a circle packaged with the empty word.
pub fn tau_value_closed(op: &OperatorSpec, opts: &EtaOptions) -> Result<TauValue> {
    let eta = etainv::tau_closed(op, opts)?;
    Ok(TauValue {
        element: LineElement::scalar(eta.tau),
        raw_norm: eta.tau.norm(),
        tau_boundary: eta.tau,
        det_isometry: Complex64::new(1.0, 0.0),
        eta,
    })
}

/// τ of an interval with transmission condition `Φ_in = T Φ_out`, as an
/// element of `L_out ⊗ L_in^{-1}` independent of `T`.
pub fn tau_interval(op: &OperatorSpec, opts: &EtaOptions) -> Result<TauValue> {
    let Boundary::Transmission { isometry, .. } = &op.boundary else {
        return Err(Error::InvalidSpec("tau_interval needs an interval operator".into()));
    };
    let defect = linalg::unitarity_defect(isometry);
    if defect > 1e-10 {
        return Err(Error::NonUnitary(defect));
    }
    let eta = etainv::eta_operator(op, opts)?;
    let det_t = linalg::det(isometry);
    let sign = if op.point_grade().rem_euclid(2) == 1 { -1.0 } else { 1.0 };
    let coordinate = sign * eta.tau / det_t;
    let element = LineElement::new(det_line(op).word(), coordinate);
    let (element, raw_norm) = element.normalized()?;
    debug_assert!((element.quillen_norm() - 1.0).abs() < NORM_TOL);
    Ok(TauValue { element, raw_norm, tau_boundary: eta.tau, det_isometry: det_t, eta })
}

/// Distance between the factored elements computed with `T` and `T U`.
pub fn tau_equivariance_check(op: &OperatorSpec, u: &CMat, opts: &EtaOptions) -> Result<f64> {
    let Boundary::Transmission { isometry, .. } = &op.boundary else {
        return Err(Error::InvalidSpec("equivariance needs an interval operator".into()));
    };
    let a = tau_interval(op, opts)?;
    let rotated = op.clone().with_isometry(&(isometry * u));
    let b = tau_interval(&rotated, opts)?;
    a.element.distance(&b.element)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{diag, BoundaryIsometry, BundleData, IntervalGeom, MatrixSeries};
    use std::f64::consts::TAU;

    fn interval(l: f64, bundle: &BundleData, t: &CMat) -> OperatorSpec {
        OperatorSpec::interval(IntervalGeom { length: l }, bundle, &BoundaryIsometry::new(t).unwrap())
    }

    #[test]
    fn det_line_grades() {
        let op = interval(1.0, &BundleData::trivial(1), &linalg::identity(1));
        let d = det_line(&op);
        assert_eq!(d.grade(), 0);
        assert_eq!(d.word().len(), 2);
        let single = BoundaryDetLine { points: vec![BoundaryPoint { label: "y".into(), grade: 2, outgoing: true, basis_norm: 1.0 }] };
        assert_eq!(single.grade(), 2);
        assert_eq!(BoundaryDetLine::default().grade(), 0);
        assert!(BoundaryDetLine::default().word().is_empty());
    }

    #[test]
    fn trivial_interval_matches_periodic_circle() {
        let op = interval(TAU, &BundleData::trivial(1), &linalg::identity(1));
        let t = tau_interval(&op, &EtaOptions::default()).unwrap();
        assert!((t.tau_boundary + 1.0).norm() < 1e-12);
        assert!((t.coordinate() - 1.0).norm() < 1e-12);
        assert!((t.element.quillen_norm() - 1.0).abs() < NORM_TOL);
    }

    #[test]
    fn phase_isometry_leaves_element_invariant() {
        let a = MatrixSeries::trig(2.0, &diag(&[0.3]), &[diag(&[0.4])], &[]);
        let bundle = BundleData { rank: 1, potential: a, endomorphism: None };
        let op = interval(2.0, &bundle, &linalg::identity(1));
        let base = tau_interval(&op, &EtaOptions::default()).unwrap();
        for phi in [0.3, 1.7, 3.0, 5.5] {
            let u = CMat::from_element(1, 1, Complex64::from_polar(1.0, phi));
            let r = tau_equivariance_check(&op, &u, &EtaOptions::default()).unwrap();
            assert!(r < 1e-10, "phi={phi} residual {r}");
            let rotated = tau_interval(&op.clone().with_isometry(&u), &EtaOptions::default()).unwrap();
            assert!((rotated.tau_boundary - base.tau_boundary).norm() > 1e-3);
        }
    }

    #[test]
    fn rank_two_diagonal_isometry() {
        let bundle = BundleData { rank: 2, potential: MatrixSeries::constant(&diag(&[0.2, -0.7])), endomorphism: None };
        let op = interval(1.3, &bundle, &linalg::identity(2));
        for phi in [0.5, 2.0, 4.0] {
            let mut u = linalg::identity(2);
            u[(1, 1)] = Complex64::from_polar(1.0, phi);
            assert!(tau_equivariance_check(&op, &u, &EtaOptions::default()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn two_routes_agree_without_endomorphism() {
        let a = MatrixSeries::trig(1.5, &diag(&[0.1, 0.4]), &[diag(&[0.3, -0.2])], &[diag(&[0.1, 0.0])]);
        let bundle = BundleData { rank: 2, potential: a, endomorphism: None };
        let mut t = linalg::identity(2);
        t[(0, 0)] = Complex64::from_polar(1.0, 0.9);
        let op = interval(1.5, &bundle, &t);
        let affine = tau_interval(&op, &EtaOptions::default()).unwrap();
        let numeric = tau_interval(&op, &EtaOptions { force_numeric: true, ..Default::default() }).unwrap();
        assert!(affine.element.distance(&numeric.element).unwrap() < 1e-9);
    }

    #[test]
    fn massive_interval_equivariance() {
        let bundle = BundleData {
            rank: 1,
            potential: MatrixSeries::trig(2.0, &diag(&[0.3]), &[diag(&[0.2])], &[]),
            endomorphism: Some(MatrixSeries::constant(&diag(&[0.8]))),
        };
        let op = interval(2.0, &bundle, &linalg::identity(2));
        let t = tau_interval(&op, &EtaOptions::default()).unwrap();
        assert_eq!(t.element.grade(), 0);
        let u = crate::corpus::unitary(&mut crate::corpus::rng(4), 2);
        assert!(tau_equivariance_check(&op, &u, &EtaOptions::default()).unwrap() < 1e-7);
    }
}
