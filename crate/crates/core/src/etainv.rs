//! Eta invariants, reduced eta `ξ = (η + h)/2` and `τ = exp(2πiξ)`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::OperatorSpec;
use crate::spectral::{self, IntegratorOptions, Lattice, SpectrumModel, SpectrumWindow, WindowOptions};
use crate::special::{erfc, integrate, lattice_eta};

/// Offsets within this distance of an integer report the other branch as well.
pub const WALL_PROXIMITY: f64 = 1e-8;
/// Default largest admissible error bound of the tail lattice fit.
pub const TAIL_FIT_LIMIT: f64 = 1e-3;
const BOUND_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMethod {
    Affine,
    LatticeCorrections,
    HeatKernel,
}

/// Values on the other side of a lattice wall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub eta0: f64,
    pub kernel_dim: usize,
    pub xi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaResult {
    pub eta0: f64,
    pub kernel_dim: usize,
    pub xi: f64,
    pub tau: Complex64,
    pub method: EtaMethod,
    pub error_bound: f64,
    /// Cross-check value from the heat-kernel regularization.
    pub heat_kernel: Option<f64>,
    pub heat_kernel_bound: Option<f64>,
    pub alternate: Option<Branch>,
    pub lattices: Vec<Lattice>,
}

/// `exp(πi(η + h))`.
pub fn tau_from(eta0: f64, kernel_dim: usize) -> Complex64 {
    Complex64::from_polar(1.0, PI * (eta0 + kernel_dim as f64))
}

fn lattice_part(lattices: &[Lattice]) -> f64 {
    lattices.iter().map(|l| lattice_eta(0.0, l.slope, l.offset)).sum()
}

fn alternate_branch(lattices: &[Lattice], eta0: f64, kernel: usize) -> Option<Branch> {
    let mut d_eta = 0.0;
    let mut d_h = 0_i64;
    let mut touched = false;
    for l in lattices {
        if l.offset == 0.0 {
            // zero mode (possibly snapped) viewed as offset 0+
            d_eta += 1.0;
            d_h -= 1;
            touched = true;
        } else if l.offset < WALL_PROXIMITY || 1.0 - l.offset < WALL_PROXIMITY {
            d_eta -= 1.0 - 2.0 * l.offset;
            d_h += 1;
            touched = true;
        }
    }
    touched.then(|| {
        let eta = eta0 + d_eta;
        let h = (kernel as i64 + d_h).max(0) as usize;
        Branch { eta0: eta, kernel_dim: h, xi: 0.5 * (eta + h as f64) }
    })
}

/// Exact eta invariant of a spectrum that is a union of affine lattices.
pub fn eta_affine(model: &SpectrumModel) -> EtaResult {
    let eta0 = lattice_part(&model.lattices);
    let kernel_dim = model.kernel_dim;
    EtaResult {
        eta0,
        kernel_dim,
        xi: 0.5 * (eta0 + kernel_dim as f64),
        tau: tau_from(eta0, kernel_dim),
        method: EtaMethod::Affine,
        error_bound: 0.0,
        heat_kernel: None,
        heat_kernel_bound: None,
        alternate: alternate_branch(&model.lattices, eta0, kernel_dim),
        lattices: model.lattices.clone(),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn expanded(window: &SpectrumWindow) -> Vec<f64> {
    window.eigenvalues.iter().flat_map(|e| std::iter::repeat_n(e.value, e.multiplicity)).collect()
}

/// Extrapolates `d(μ)` to `1/|μ| → 0` by a least-squares polynomial in `1/|μ|`.
fn fit_offset(points: &[(f64, f64)]) -> f64 {
    let max_dev = || points.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
    let terms = match points.len() {
        0 => return 0.0,
        1 | 2 => return max_dev(),
        n => (n - 1).min(4),
    };
    let a = nalgebra::DMatrix::from_fn(points.len(), terms, |i, j| points[i].0.abs().powi(-(j as i32)));
    let b = nalgebra::DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    match a.svd(true, true).solve(&b, 1e-14) {
        Ok(x) => x[0].abs(),
        Err(_) => max_dev(),
    }
}

/// Error bound on the eta invariant from the residual offset of the outer
/// eigenvalues relative to the reference lattice.
///
/// The window edges sit in the widest lattice gap, so the sorted reference
/// points split into periods of `lattice_count` points. Per period the summed
/// deviation of the paired eigenvalues does not depend on how eigenvalues are
/// ordered inside the period; its limit `1/|μ| → 0` is the net offset shift
/// of the far tail.
pub fn tail_bound(window: &SpectrumWindow, lattice_count: usize, slope: f64) -> f64 {
    let actual = expanded(window);
    let reference: Vec<f64> = window.reference.iter().map(|e| e.value).collect();
    let k = lattice_count.max(1);
    let edge = 0.25 * window.hi.max(-window.lo);
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (xs, ms) in actual.chunks(k).zip(reference.chunks(k)) {
        if ms.len() < k {
            continue;
        }
        let centre = ms.iter().sum::<f64>() / k as f64;
        let dev = xs.iter().sum::<f64>() - ms.iter().sum::<f64>();
        if centre > edge {
            pos.push((centre, dev));
        } else if centre < -edge {
            neg.push((centre, dev));
        }
    }
    let alpha = fit_offset(&pos) + fit_offset(&neg);
    (2.0 * alpha / slope).max(BOUND_FLOOR)
}

/// Eta invariant from the reference lattices plus the finite sign correction
/// inside the certified window. Returns value and error bound.
pub fn eta_lattice_corrections(model: &SpectrumModel, tail_limit: f64) -> Result<(f64, f64)> {
    let window = model.window.as_ref().ok_or_else(|| Error::InvalidSpec("spectrum has no numeric window".into()))?;
    if window.count() != window.reference.len() {
        return Err(Error::CountingMismatch { lo: window.lo, hi: window.hi, found: window.count(), expected: window.reference.len() });
    }
    let correction: f64 = window.eigenvalues.iter().map(|e| sign(e.value) * e.multiplicity as f64).sum::<f64>()
        - window.reference.iter().map(|e| sign(e.value)).sum::<f64>();
    let slope = model.lattices.first().map_or(1.0, |l| l.slope);
    let bound = tail_bound(window, model.lattices.len(), slope);
    if bound > tail_limit {
        return Err(Error::TailFit { fit: bound, bound: tail_limit });
    }
    Ok((lattice_part(&model.lattices) + correction, bound))
}

/// Eta invariant by the heat-kernel representation of the window correction,
/// `(2/√π) ∫_0^1 Σ λ e^{-u²λ²} du + Σ sign(λ) erfc(|λ|)`, against the lattice.
pub fn eta_heat_kernel(model: &SpectrumModel) -> Result<(f64, f64)> {
    let window = model.window.as_ref().ok_or_else(|| Error::InvalidSpec("spectrum has no numeric window".into()))?;
    let actual = expanded(window);
    let reference: Vec<f64> = window.reference.iter().map(|e| e.value).collect();
    let g = |u: f64| {
        let t = u * u;
        actual.iter().map(|l| l * (-t * l * l).exp()).sum::<f64>() - reference.iter().map(|m| m * (-t * m * m).exp()).sum::<f64>()
    };
    let scale = window.hi.max(-window.lo);
    let panels = (2.0 * scale).ceil() as usize + 16;
    let coarse = integrate(g, 0.0, 1.0, panels, 10);
    let fine = integrate(g, 0.0, 1.0, 2 * panels, 10);
    let quad_err = (fine - coarse).abs();
    let tail: f64 = actual.iter().map(|l| sign(*l) * erfc(l.abs())).sum::<f64>()
        - reference.iter().map(|m| sign(*m) * erfc(m.abs())).sum::<f64>();
    let value = lattice_part(&model.lattices) + 2.0 / PI.sqrt() * fine + tail;
    let slope = model.lattices.first().map_or(1.0, |l| l.slope);
    let bound = quad_err + tail_bound(window, model.lattices.len(), slope) + 1e-13 * actual.len() as f64;
    Ok((value, bound.max(BOUND_FLOOR)))
}

/// Eta invariant from a numerically certified spectrum, cross-checked by
/// the heat-kernel method.
pub fn eta_numeric(model: &SpectrumModel, tail_limit: f64) -> Result<EtaResult> {
    let (lattice, lb) = eta_lattice_corrections(model, tail_limit)?;
    let (heat, hb) = eta_heat_kernel(model)?;
    let combined = lb + hb;
    if (lattice - heat).abs() > 3.0 * combined {
        return Err(Error::MethodDisagreement { lattice, heat, bound: combined });
    }
    let kernel_dim = model.kernel_dim;
    Ok(EtaResult {
        eta0: lattice,
        kernel_dim,
        xi: 0.5 * (lattice + kernel_dim as f64),
        tau: tau_from(lattice, kernel_dim),
        method: EtaMethod::LatticeCorrections,
        error_bound: lb,
        heat_kernel: Some(heat),
        heat_kernel_bound: Some(hb),
        alternate: None,
        lattices: model.lattices.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaOptions {
    pub integrator: IntegratorOptions,
    pub window: WindowOptions,
    /// Route operators without endomorphism through the numeric window as well.
    pub force_numeric: bool,
    /// Requested bound on the tail offset error.
    pub tail_limit: f64,
}

impl Default for EtaOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorOptions::default(),
            window: WindowOptions::default(),
            force_numeric: false,
            tail_limit: TAIL_FIT_LIMIT,
        }
    }
}

/// Eta invariant of a closed or transmission-interval operator.
pub fn eta_operator(op: &OperatorSpec, opts: &EtaOptions) -> Result<EtaResult> {
    if op.is_massive() || opts.force_numeric {
        let mut wopts = opts.window;
        let mut attempts = if wopts.cutoff.is_some() { 1 } else { 3 };
        loop {
            let model = spectral::spectrum_window(op, &opts.integrator, &wopts)?;
            attempts -= 1;
            match eta_numeric(&model, opts.tail_limit) {
                Err(Error::TailFit { .. }) if attempts > 0 => {
                    let w = model.window.as_ref().expect("numeric window");
                    wopts.cutoff = Some(2.0 * w.hi.max(-w.lo));
                }
                other => return other,
            }
        }
    } else {
        let model = spectral::affine_spectrum(op, &opts.integrator)?;
        Ok(eta_affine(&model))
    }
}

/// `τ = exp(2πiξ)` of a circle operator.
pub fn tau_closed(op: &OperatorSpec, opts: &EtaOptions) -> Result<EtaResult> {
    if !op.is_closed() {
        return Err(Error::InvalidSpec("tau_closed needs a circle operator".into()));
    }
    eta_operator(op, opts)
}

/// Closed form of `η(0)` for an affine lattice with offset `a`, with `ξ`.
pub fn affine_closed_form(offset: f64) -> (f64, f64) {
    let a = crate::special::frac(offset);
    if a == 0.0 {
        (0.0, 0.5)
    } else {
        (1.0 - 2.0 * a, 0.5 - a)
    }
}

/// Offset of the chiral circle lattice for a scalar holonomy `w = e^{iθ}`.
pub fn circle_offset(theta_of_w: f64, bounding: bool) -> f64 {
    crate::special::frac(-theta_of_w / TAU + if bounding { 0.5 } else { 0.0 })
}
