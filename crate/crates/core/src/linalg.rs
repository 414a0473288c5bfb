//! Small dense complex matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn det(m: &CMat) -> Complex64 {
    if m.nrows() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |U†U - I|` entrywise.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n)))
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Nearest unitary matrix (polar factor).
pub fn project_unitary(u: &CMat) -> CMat {
    let svd = u.clone().svd(true, true);
    let (w, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    w * vt
}

pub fn expm(m: &CMat) -> CMat {
    if m.nrows() == 0 {
        return m.clone();
    }
    m.exp()
}

/// Eigenvalues of a unitary matrix, returned as phases in `[0, 2π)`.
///
/// A unitary matrix is normal, so it shares its eigenvectors with the
/// Hermitian combination `Re U + α Im U`. The eigenvalues of `U` are read off
/// as Rayleigh quotients and checked by residual; a collision of the mixed
/// spectrum is retried with a different `α`.
pub fn unitary_phases(u: &CMat) -> Result<Vec<f64>> {
    let n = u.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let defect = unitarity_defect(u);
    if defect > 1e-8 {
        return Err(Error::NonUnitary(defect));
    }
    let ud = u.adjoint();
    let re = (u + &ud).scale(0.5);
    let im = (u - &ud) * Complex64::new(0.0, -0.5);
    for alpha in [0.618_033_988_749_894_9, -1.324_717_957_244_746, 2.414_213_562_373_095, 0.1] {
        let h = &re + &im * Complex64::new(alpha, 0.0);
        let h = (&h + h.adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(h);
        let mut phases = Vec::with_capacity(n);
        let mut worst = 0.0_f64;
        for k in 0..n {
            let v = eig.eigenvectors.column(k);
            let uv = u * v;
            let mu = v.dotc(&uv);
            let res = (uv - v * mu).norm();
            worst = worst.max(res);
            phases.push(wrap_phase(mu.arg()));
        }
        if worst < 1e-9 {
            phases.sort_by(|a, b| a.total_cmp(b));
            return Ok(phases);
        }
    }
    Err(Error::Eigen("unitary eigen residual too large".into()))
}

/// Maps an angle into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let t = x.rem_euclid(std::f64::consts::TAU);
    if t >= std::f64::consts::TAU {
        0.0
    } else {
        t
    }
}

/// Number of singular values of `m` below `threshold`.
pub fn nullity(m: &CMat, threshold: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    sv.iter().filter(|s| **s < threshold).count()
}

pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = CMat::zeros(na + nb, na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(a);
    out.view_mut((na, na), (nb, nb)).copy_from(b);
    out
}
