//! Seeded random scenario generators for the verification corpora.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::glue::GluingScenario;
use crate::linalg::CMat;
use crate::model::{BundleData, DiskMap, FamilyPath, FamilySpec, Mat, MatrixSeries, Monomial, Spin, SpinCircle};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_complex<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Hermitian matrix with entries of size at most `scale`.
pub fn hermitian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> CMat {
    let g = DMatrix::from_fn(n, n, |_, _| uniform_complex(rng));
    (&g + g.adjoint()).scale(0.5 * scale)
}

/// Unitary from the QR factorization of a random complex matrix, with the
/// phases of `R`'s diagonal absorbed.
pub fn unitary<R: Rng>(rng: &mut R, n: usize) -> CMat {
    let g = DMatrix::from_fn(n, n, |_, _| uniform_complex(rng));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut out = q;
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            out[(i, j)] *= ph;
        }
    }
    out
}

/// Trigonometric connection of the given period with `modes` harmonics.
pub fn flat_bundle<R: Rng>(rng: &mut R, rank: usize, period: f64, modes: usize) -> BundleData {
    let constant = hermitian(rng, rank, 1.5);
    let cos: Vec<CMat> = (0..modes).map(|_| hermitian(rng, rank, 0.6)).collect();
    let sin: Vec<CMat> = (0..modes).map(|_| hermitian(rng, rank, 0.6)).collect();
    BundleData { rank, potential: MatrixSeries::trig(period, &constant, &cos, &sin), endomorphism: None }
}

pub fn spin<R: Rng>(rng: &mut R) -> Spin {
    if rng.gen_bool(0.5) {
        Spin::Bounding
    } else {
        Spin::Nonbounding
    }
}

/// Flat circle gluing scenarios: ranks 1 to 3, both spin structures, random
/// cut points and boundary isometries.
pub fn gluing_corpus(seed: u64, count: usize) -> Vec<GluingScenario> {
    let mut r = rng(seed);
    (0..count)
        .map(|i| {
            let rank = 1 + i % 3;
            let spin = if i % 2 == 0 { Spin::Nonbounding } else { Spin::Bounding };
            let l = r.gen_range(1.0..7.0);
            let bundle = flat_bundle(&mut r, rank, l, 2);
            let mut cut = [r.gen_range(0.0..l), r.gen_range(0.0..l)];
            cut.sort_by(f64::total_cmp);
            if cut[1] - cut[0] < 0.05 * l {
                cut = [0.2 * l, 0.7 * l];
            }
            let isos = [Mat::from_cmat(&unitary(&mut r, rank)), Mat::from_cmat(&unitary(&mut r, rank))];
            GluingScenario {
                id: format!("glue-{seed}-{i:03}"),
                circle: SpinCircle { circumference: l, spin },
                bundle,
                cut,
                isometries: Some(isos),
            }
        })
        .collect()
}

fn monomial(powers: &[u32], m: &CMat) -> Monomial {
    Monomial { powers: powers.to_vec(), matrix: Mat::from_cmat(m) }
}

/// Polynomial family on `R^2` of total degree at most 2 with Hermitian coefficients.
pub fn family<R: Rng>(rng: &mut R, rank: usize, massive: bool) -> FamilySpec {
    let powers: [[u32; 2]; 6] = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];
    let mut table = || powers.iter().map(|p| monomial(p, &hermitian(rng, rank, 0.8))).collect::<Vec<_>>();
    let connection = vec![table(), table()];
    let endomorphism = massive.then(|| {
        let mut v = vec![monomial(&[0, 0], &(CMat::identity(rank, rank) + hermitian(rng, rank, 0.3)))];
        v.push(monomial(&[1, 0], &hermitian(rng, rank, 0.2)));
        v
    });
    FamilySpec { dim: 2, rank, connection, endomorphism }
}

pub fn point<R: Rng>(rng: &mut R) -> Vec<f64> {
    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
}

pub fn polyline<R: Rng>(rng: &mut R, from: Vec<f64>, segments: usize) -> FamilyPath {
    let mut vertices = vec![from];
    for _ in 0..segments {
        vertices.push(point(rng));
    }
    FamilyPath::Polyline { vertices, collar: 0.08 }
}

/// Monotone reparametrization coefficients with `Σ|c_k| < 0.9`.
pub fn reparametrization<R: Rng>(rng: &mut R, terms: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..terms).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let total: f64 = raw.iter().map(|c| c.abs()).sum();
    let target = rng.gen_range(0.3..0.9);
    raw.iter().map(|c| c * target / total.max(1e-12)).collect()
}

pub fn disk<R: Rng>(rng: &mut R, radius: f64) -> DiskMap {
    let jitter = |rng: &mut R| rng.gen_range(-0.2..0.2) * radius;
    DiskMap {
        center: point(rng).into_iter().map(|x| 0.5 * x).collect(),
        p: vec![radius + jitter(rng), jitter(rng)],
        q: vec![jitter(rng), radius + jitter(rng)],
        w: Some(vec![jitter(rng), jitter(rng)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::model::Validate;

    #[test]
    fn generators_are_seeded_and_valid() {
        let a = gluing_corpus(7, 6);
        assert_eq!(a, gluing_corpus(7, 6));
        for s in &a {
            let [p, q] = &s.isometries.as_ref().unwrap().clone();
            assert!(linalg::unitarity_defect(&p.to_cmat()) < 1e-12);
            assert!(linalg::unitarity_defect(&q.to_cmat()) < 1e-12);
            assert!(s.cut[0] < s.cut[1] && s.cut[1] < s.circle.circumference);
        }
        let mut r = rng(3);
        let f = family(&mut r, 2, true);
        assert!(f.validate().is_empty());
        let c = reparametrization(&mut r, 3);
        assert!(c.iter().map(|x| x.abs()).sum::<f64>() < 0.9);
    }
}
