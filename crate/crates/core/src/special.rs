//! Hurwitz zeta, lattice eta functions and quadrature nodes.

pub use libm::{erf, erfc};

const EM_TERMS: usize = 12;
const BERNOULLI_OVER_FACTORIAL: [f64; 8] = [
    1.0 / 12.0,                    // B2 / 2!
    -1.0 / 720.0,                  // B4 / 4!
    1.0 / 30240.0,                 // B6 / 6!
    -1.0 / 1209600.0,              // B8 / 8!
    1.0 / 47900160.0,              // B10 / 10!
    -691.0 / 1307674368000.0,      // B12 / 12!
    1.0 / 74724249600.0,           // B14 / 14!
    -3617.0 / 10670622842880000.0, // B16 / 16!
];

/// `ζ(s, a) = Σ_{k≥0} (k + a)^{-s}` continued to real `s ≠ 1`, `a > 0`,
/// by Euler-Maclaurin summation. At `s = 0` the value `1/2 - a` is exact.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    assert!(a > 0.0, "hurwitz_zeta needs a > 0");
    assert!(s != 1.0, "hurwitz_zeta has a pole at s = 1");
    let n = EM_TERMS as f64;
    let mut sum: f64 = (0..EM_TERMS).map(|k| (k as f64 + a).powf(-s)).sum();
    let x = n + a;
    sum += x.powf(1.0 - s) / (s - 1.0);
    sum += 0.5 * x.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2)
    let mut rising = s;
    for (j, b) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        let j = j + 1;
        if j > 1 {
            rising *= (s + (2 * j - 3) as f64) * (s + (2 * j - 2) as f64);
        }
        sum += b * rising * x.powf(-s - (2 * j - 1) as f64);
    }
    sum
}

/// Reduces an offset into `[0, 1)`.
pub fn frac(a: f64) -> f64 {
    let f = a - a.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// `η(s)` of the nonzero points of `{c (m + a) : m ∈ Z}`, `c > 0`.
pub fn lattice_eta(s: f64, slope: f64, offset: f64) -> f64 {
    let a = frac(offset);
    let scale = slope.powf(-s);
    if a == 0.0 {
        // symmetric apart from the zero mode
        0.0
    } else {
        scale * (hurwitz_zeta(s, a) - hurwitz_zeta(s, 1.0 - a))
    }
}

/// `η(0)` of the lattice with offset `a`: `1 - 2a` off the integers, `0` on them.
pub fn lattice_eta0(offset: f64) -> f64 {
    let a = frac(offset);
    if a == 0.0 {
        0.0
    } else {
        1.0 - 2.0 * a
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule for `f` on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        total += x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum::<f64>() * 0.5 * h;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riemann_zeta_values() {
        let z2 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - z2).abs() < 1e-14);
        assert!((hurwitz_zeta(0.0, 1.0) + 0.5).abs() < 1e-15);
        assert!((hurwitz_zeta(-1.0, 1.0) + 1.0 / 12.0).abs() < 1e-14);
        // ζ(2, 1/2) = 3 ζ(2)
        assert!((hurwitz_zeta(2.0, 0.5) - 3.0 * z2).abs() < 1e-13);
    }

    #[test]
    fn zeta_at_zero_is_half_minus_a() {
        for a in [0.1, 0.25, 0.5, 0.9] {
            assert!((hurwitz_zeta(0.0, a) - (0.5 - a)).abs() < 1e-15);
            assert!((lattice_eta(0.0, 2.7, a) - lattice_eta0(a)).abs() < 1e-14);
        }
    }

    #[test]
    fn lattice_eta_is_odd_in_offset() {
        assert!((lattice_eta(0.7, 1.3, 0.2) + lattice_eta(0.7, 1.3, 0.8)).abs() < 1e-13);
        assert_eq!(lattice_eta0(1.0), 0.0);
        assert_eq!(lattice_eta0(0.5), 0.0);
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((integrate(|x| x.exp(), 0.0, 1.0, 4, 8) - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn erfc_reexport() {
        assert!((erfc(0.0) - 1.0).abs() < 1e-15);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-14);
        assert!((erfc(3.0) - 2.209_049_699_858_544e-5).abs() < 1e-19);
    }
}
