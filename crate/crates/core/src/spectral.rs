//! Transfer matrices, scattering matrices and certified eigenvalue windows.
//!
//! Eigenvalues of an operator are the `λ` with `det(I - U(λ)) = 0`, where
//! `U(λ) = T S(λ)` composes the boundary isometry with the scattering matrix
//! `S(λ): Φ_in ↦ Φ_out`. With `Φ_in = (u(0), w(ℓ))` and `Φ_out = (u(ℓ), w(0))`
//! the eigenphases of `U` turn counterclockwise as `λ` grows.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, I};
use crate::model::OperatorSpec;
use crate::par;
use crate::special::frac;

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3 / 6
const MAGNUS_COMMUTATOR: f64 = 0.144_337_567_297_406_43; // √3 / 12

/// Offsets closer than this to an integer are treated as zero modes of the lattice.
pub const OFFSET_SNAP: f64 = 1e-10;
/// Roots below this magnitude are certified zero modes.
pub const ZERO_MODE: f64 = 1e-9;
/// Roots in `[ZERO_MODE, AMBIGUOUS_KERNEL)` are neither certified zero nor nonzero.
pub const AMBIGUOUS_KERNEL: f64 = 1e-7;
const NULLITY_THRESHOLD: f64 = 1e-8;
const POLISH_TOL: f64 = 1e-11;
const POLISH_INTEGRATOR_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// Target accuracy relative to `max(1, |Φ|)`.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_steps: 1 << 20 }
    }
}

fn magnus(k: &dyn Fn(f64) -> CMat, a: f64, b: f64, steps: usize) -> CMat {
    let dim = k(a).nrows();
    let h = (b - a) / steps as f64;
    let mut out = linalg::identity(dim);
    for j in 0..steps {
        let x = a + j as f64 * h;
        let k1 = k(x + (0.5 - GAUSS_OFFSET) * h);
        let k2 = k(x + (0.5 + GAUSS_OFFSET) * h);
        out = magnus_step(&k1, &k2, h) * out;
    }
    out
}

fn magnus_step(k1: &CMat, k2: &CMat, h: f64) -> CMat {
    let comm = k2 * k1 - k1 * k2;
    let omega = (k1 + k2).scale(0.5 * h) + comm.scale(MAGNUS_COMMUTATOR * h * h);
    linalg::expm(&omega)
}

/// Step doubling with two levels of Richardson extrapolation over a
/// fourth-order scheme evaluated by `level(steps)`.
fn romberg(level: &dyn Fn(usize) -> CMat, initial: usize, opts: &IntegratorOptions) -> Result<CMat> {
    let mut steps = initial.max(2);
    let mut coarse = level(steps);
    let mut prev_r1: Option<CMat> = None;
    let mut diff = f64::INFINITY;
    while 2 * steps <= opts.max_steps {
        steps *= 2;
        let fine = level(steps);
        let r1 = (fine.scale(16.0) - &coarse).scale(1.0 / 15.0);
        let scale = linalg::max_abs(&fine).max(1.0);
        if let Some(p) = &prev_r1 {
            diff = linalg::max_abs(&(&r1 - p)) / 63.0;
            if diff <= opts.tol * scale {
                return Ok((r1.scale(64.0) - p).scale(1.0 / 63.0));
            }
        }
        prev_r1 = Some(r1);
        coarse = fine;
    }
    Err(Error::IntegratorFailure { tol: opts.tol, diff, steps })
}

/// Solution operator of `Φ' = K(x) Φ` from `a` to `b` by fourth-order Magnus
/// steps with step doubling and Richardson extrapolation.
pub fn propagate(k: &dyn Fn(f64) -> CMat, a: f64, b: f64, rate: f64, opts: &IntegratorOptions) -> Result<CMat> {
    if b <= a {
        return Ok(linalg::identity(k(a).nrows()));
    }
    romberg(&|n| magnus(k, a, b, n), initial_steps(b - a, rate), opts)
}

fn initial_steps(len: f64, rate: f64) -> usize {
    (len * rate * 0.25).ceil() as usize
}

/// Rough size of the generator for initial step selection.
fn generator_rate(op: &OperatorSpec, lambda: f64) -> f64 {
    lambda.abs() + potential_scale(op) + 1.0
}

fn potential_scale(op: &OperatorSpec) -> f64 {
    let samples = 9;
    let m = (0..samples)
        .map(|j| linalg::max_abs(&op.system_potential(op.length * (j as f64 + 0.5) / samples as f64)))
        .fold(0.0, f64::max);
    m * op.system_dim() as f64
}

/// `iΓ(λ - M)`.
fn generator(m: &CMat, gamma: &[f64], lambda: f64) -> CMat {
    let mut g = m.scale(-1.0);
    for i in 0..g.nrows() {
        g[(i, i)] += lambda;
    }
    for (i, s) in gamma.iter().enumerate() {
        g.row_mut(i).scale_mut(*s);
    }
    g * I
}

/// Integration segments between interior transitions, and the total sign.
fn segments(op: &OperatorSpec) -> (Vec<(f64, f64)>, f64) {
    let mut cuts: Vec<_> = op.transitions.iter().filter(|t| t.at > 0.0 && t.at < op.length).map(|t| t.at).collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut a = 0.0;
    for b in cuts.into_iter().chain(std::iter::once(op.length)) {
        out.push((a, b));
        a = b;
    }
    (out, op.transition_sign())
}

/// Transfer matrix `Φ(ℓ) = M(λ) Φ(0)` of `Φ' = iΓ(λ - M(x))Φ`, including the
/// interior sign transitions.
pub fn transfer(op: &OperatorSpec, lambda: f64, opts: &IntegratorOptions) -> Result<CMat> {
    let gamma = op.chirality();
    let k = |x: f64| generator(&op.system_potential(x), &gamma, lambda);
    let rate = generator_rate(op, lambda);
    let (segs, sign) = segments(op);
    let mut out = linalg::identity(op.system_dim());
    for (a, b) in segs {
        out = propagate(&k, a, b, rate, opts)? * out;
    }
    out = out.scale(sign);
    if !op.is_massive() {
        out = linalg::project_unitary(&out);
    }
    Ok(out)
}

/// Potential samples at the Gauss nodes of each segment and step count,
/// shared by all spectral parameters.
#[derive(Default)]
struct SampleCache {
    levels: Mutex<HashMap<(usize, usize), Arc<Vec<(CMat, CMat)>>>>,
}

impl SampleCache {
    fn get(&self, op: &OperatorSpec, seg: usize, a: f64, b: f64, steps: usize) -> Arc<Vec<(CMat, CMat)>> {
        if let Some(v) = self.levels.lock().expect("sample cache").get(&(seg, steps)) {
            return v.clone();
        }
        let h = (b - a) / steps as f64;
        let v: Vec<(CMat, CMat)> = (0..steps)
            .map(|j| {
                let x = a + j as f64 * h;
                (op.system_potential(x + (0.5 - GAUSS_OFFSET) * h), op.system_potential(x + (0.5 + GAUSS_OFFSET) * h))
            })
            .collect();
        let v = Arc::new(v);
        let mut guard = self.levels.lock().expect("sample cache");
        // bounded memory: forget the finest levels first when large
        if guard.values().map(|x| x.len()).sum::<usize>() > 1 << 22 {
            guard.clear();
        }
        guard.entry((seg, steps)).or_insert(v).clone()
    }
}

/// Parallel transport `W = P exp(-i ∫ A)` of the connection along the base,
/// including the transitions.
pub fn transport(op: &OperatorSpec, opts: &IntegratorOptions) -> Result<CMat> {
    let mut chiral = op.clone();
    chiral.endomorphism = None;
    transfer(&chiral, 0.0, opts)
}

/// Monodromy of the first-order system; equals `e^{iλℓ} W` without endomorphism.
pub fn monodromy(op: &OperatorSpec, lambda: f64, opts: &IntegratorOptions) -> Result<CMat> {
    transfer(op, lambda, opts)
}

/// Scattering matrix `Φ_in ↦ Φ_out` assembled from a transfer matrix.
pub fn scattering_from_transfer(m: &CMat, rank: usize, massive: bool) -> Result<CMat> {
    if !massive {
        return Ok(m.clone());
    }
    let n = rank;
    let muu = m.view((0, 0), (n, n)).into_owned();
    let muw = m.view((0, n), (n, n)).into_owned();
    let mwu = m.view((n, 0), (n, n)).into_owned();
    let mww = m.view((n, n), (n, n)).into_owned();
    let inv = mww.try_inverse().ok_or_else(|| Error::Eigen("singular backward block of the transfer matrix".into()))?;
    let mut s = CMat::zeros(2 * n, 2 * n);
    s.view_mut((0, 0), (n, n)).copy_from(&(&muu - &muw * &inv * &mwu));
    s.view_mut((0, n), (n, n)).copy_from(&(&muw * &inv));
    s.view_mut((n, 0), (n, n)).copy_from(&(-(&inv * &mwu)));
    s.view_mut((n, n), (n, n)).copy_from(&inv);
    Ok(s)
}

/// An arithmetic progression `{slope (m + offset) : m ∈ Z}` with `offset ∈ [0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub slope: f64,
    pub offset: f64,
}

impl Lattice {
    pub fn has_zero(&self) -> bool {
        self.offset == 0.0
    }

    /// Lattice points in `[lo, hi]`, ascending.
    pub fn points_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let m0 = (lo / self.slope - self.offset).ceil() as i64;
        let m1 = (hi / self.slope - self.offset).floor() as i64;
        (m0..=m1).map(|m| self.slope * (m as f64 + self.offset)).filter(|x| *x >= lo && *x <= hi).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub value: f64,
    pub multiplicity: usize,
}

/// Certified list of eigenvalues in `[lo, hi]` together with the reference
/// lattice points in the same window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumWindow {
    pub lo: f64,
    pub hi: f64,
    pub eigenvalues: Vec<Eigenvalue>,
    pub reference: Vec<Eigenvalue>,
    pub grid_points: usize,
}

impl SpectrumWindow {
    pub fn count(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.multiplicity).sum()
    }

    pub fn kernel_dim(&self) -> usize {
        self.eigenvalues.iter().filter(|e| e.value == 0.0).map(|e| e.multiplicity).sum()
    }
}

/// Spectrum: union of lattices, overridden inside an optional window by the
/// numerically certified eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub lattices: Vec<Lattice>,
    pub window: Option<SpectrumWindow>,
    pub kernel_dim: usize,
    /// Offsets that were snapped onto an integer.
    pub near_wall: Vec<f64>,
}

/// `U(λ) = T S(λ)` for an operator and its boundary matrix.
pub struct TransmissionProblem<'a> {
    pub op: &'a OperatorSpec,
    boundary: CMat,
    transport: CMat,
    pub opts: IntegratorOptions,
    cache: SampleCache,
    gamma: Vec<f64>,
    scale: f64,
}

impl<'a> TransmissionProblem<'a> {
    pub fn new(op: &'a OperatorSpec, opts: IntegratorOptions) -> Result<Self> {
        let boundary = op.boundary_matrix();
        let defect = linalg::unitarity_defect(&boundary);
        if defect > 1e-10 {
            return Err(Error::NonUnitary(defect));
        }
        if boundary.nrows() != op.system_dim() {
            return Err(Error::InvalidSpec(format!(
                "boundary isometry is {}x{}, expected {}",
                boundary.nrows(),
                boundary.ncols(),
                op.system_dim()
            )));
        }
        let transport = transport(op, &opts)?;
        Ok(Self { op, boundary, transport, opts, cache: SampleCache::default(), gamma: op.chirality(), scale: potential_scale(op) })
    }

    pub fn transport(&self) -> &CMat {
        &self.transport
    }

    pub fn boundary(&self) -> &CMat {
        &self.boundary
    }

    /// `U₀` with the endomorphism dropped, so that `U(λ) = e^{iλℓ} U₀`.
    pub fn reference_unitary(&self) -> CMat {
        let s0 = if self.op.is_massive() {
            linalg::block_diag(&self.transport, &linalg::identity(self.op.rank).scale(self.op.transition_sign()))
        } else {
            self.transport.clone()
        };
        &self.boundary * s0
    }

    pub fn unitary_with(&self, lambda: f64, opts: &IntegratorOptions) -> Result<CMat> {
        if !self.op.is_massive() {
            let phase = Complex64::from_polar(1.0, lambda * self.op.length);
            return Ok(self.reference_unitary() * phase);
        }
        let m = self.transfer(lambda, opts)?;
        let s = scattering_from_transfer(&m, self.op.rank, true)?;
        let defect = linalg::unitarity_defect(&s);
        if defect > 1e-4 {
            return Err(Error::NonUnitary(defect));
        }
        Ok(&self.boundary * linalg::project_unitary(&s))
    }

    pub fn unitary(&self, lambda: f64) -> Result<CMat> {
        self.unitary_with(lambda, &self.opts)
    }

    /// Transfer matrix using cached potential samples.
    pub fn transfer(&self, lambda: f64, opts: &IntegratorOptions) -> Result<CMat> {
        let (segs, sign) = segments(self.op);
        let rate = lambda.abs() + self.scale + 1.0;
        let mut out = linalg::identity(self.op.system_dim());
        for (i, (a, b)) in segs.into_iter().enumerate() {
            if b <= a {
                continue;
            }
            let level = |steps: usize| {
                let samples = self.cache.get(self.op, i, a, b, steps);
                let h = (b - a) / steps as f64;
                let mut acc = linalg::identity(self.op.system_dim());
                for (m1, m2) in samples.iter() {
                    let k1 = generator(m1, &self.gamma, lambda);
                    let k2 = generator(m2, &self.gamma, lambda);
                    acc = magnus_step(&k1, &k2, h) * acc;
                }
                acc
            };
            out = romberg(&level, initial_steps(b - a, rate).next_power_of_two(), opts)? * out;
        }
        Ok(out.scale(sign))
    }

    /// Reference lattices from the eigenphases of `U₀`.
    pub fn reference_lattices(&self) -> Result<(Vec<Lattice>, Vec<f64>)> {
        lattices_from_unitary(&self.reference_unitary(), self.op.length)
    }
}

/// Lattices `λ = (2π/ℓ)(m + a_k)` with `a_k = frac(-ψ_k / 2π)` from the eigenphases of `U₀`.
pub fn lattices_from_unitary(u0: &CMat, length: f64) -> Result<(Vec<Lattice>, Vec<f64>)> {
    let phases = linalg::unitary_phases(u0)?;
    let slope = TAU / length;
    let mut near = Vec::new();
    let lattices = phases
        .iter()
        .map(|psi| {
            let mut a = frac(-psi / TAU);
            if a < OFFSET_SNAP || 1.0 - a < OFFSET_SNAP {
                if a != 0.0 {
                    near.push(a);
                }
                a = 0.0;
            }
            Lattice { slope, offset: a }
        })
        .collect();
    Ok((lattices, near))
}

/// Exact spectrum of an operator without endomorphism.
pub fn affine_spectrum(op: &OperatorSpec, opts: &IntegratorOptions) -> Result<SpectrumModel> {
    let problem = TransmissionProblem::new(op, *opts)?;
    let (lattices, near_wall) = problem.reference_lattices()?;
    let kernel_dim = lattices.iter().filter(|l| l.has_zero()).count();
    Ok(SpectrumModel { lattices, window: None, kernel_dim, near_wall })
}

#[derive(Clone, Copy, Debug)]
struct Sample {
    lambda: f64,
    /// Sum of principal eigenphases in `[0, 2π)`.
    phase_sum: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowOptions {
    /// Requested half-width; edges are moved outward into lattice gaps.
    pub cutoff: Option<f64>,
    /// Integrator tolerance used while counting.
    pub scan_tol: f64,
    /// Maximum eigenphase advance per grid interval (radians).
    pub max_step_phase: f64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self { cutoff: None, scan_tol: 1e-7, max_step_phase: 1.5 }
    }
}

/// Smallest admissible cutoff for the asymptotic regime.
pub fn asymptotic_threshold(op: &OperatorSpec) -> f64 {
    2.0 * op.endomorphism_sup() + TAU / op.length
}

fn default_cutoff(op: &OperatorSpec) -> f64 {
    (4.0 * op.endomorphism_sup()).max(12.0 * TAU / op.length).max(asymptotic_threshold(op))
}

fn sample(problem: &TransmissionProblem, lambda: f64, opts: &IntegratorOptions) -> Result<(Sample, f64)> {
    let u = problem.unitary_with(lambda, opts)?;
    let phases = linalg::unitary_phases(&u)?;
    let closest = phases.iter().map(|p| p.min(TAU - p)).fold(f64::INFINITY, f64::min);
    Ok((Sample { lambda, phase_sum: phases.iter().sum() }, closest))
}

/// Sample avoiding points where an eigenvalue sits at 1.
fn safe_sample(problem: &TransmissionProblem, lambda: f64, nudge: f64, opts: &IntegratorOptions) -> Result<Sample> {
    let mut x = lambda;
    for _ in 0..8 {
        let (s, closest) = sample(problem, x, opts)?;
        if closest > 1e-9 {
            return Ok(s);
        }
        x += nudge;
    }
    Err(Error::Eigen(format!("cannot find a regular sample point near {lambda}")))
}

/// Number of eigenvalues in `(a, b]`, requiring a small phase advance.
fn count_between(a: &Sample, b: &Sample) -> Option<usize> {
    let delta = b.phase_sum - a.phase_sum;
    let advance = centered(delta);
    if !(-0.1..=2.8).contains(&advance) {
        return None;
    }
    let n = (advance - delta) / TAU;
    let r = n.round();
    ((n - r).abs() < 1e-6 && r >= 0.0).then_some(r as usize)
}

fn nearest_one_phase(problem: &TransmissionProblem, lambda: f64) -> Result<f64> {
    nearest_one_phase_with(problem, lambda, &problem.opts)
}

fn nearest_one_phase_with(problem: &TransmissionProblem, lambda: f64, opts: &IntegratorOptions) -> Result<f64> {
    let u = problem.unitary_with(lambda, opts)?;
    let phases = linalg::unitary_phases(&u)?;
    Ok(phases.iter().map(|p| centered(*p)).min_by(|x, y| x.abs().total_cmp(&y.abs())).unwrap_or(0.0))
}

fn split(a: f64, b: f64) -> f64 {
    a + 0.487_6 * (b - a)
}

struct Locator<'p, 'a> {
    problem: &'p TransmissionProblem<'a>,
    scan: IntegratorOptions,
}

impl Locator<'_, '_> {
    fn refine(&self, a: Sample, b: Sample, depth: usize) -> Result<Vec<(Sample, Sample, usize)>> {
        let n = match count_between(&a, &b) {
            Some(n) => n,
            None => {
                if depth > 60 {
                    return Err(Error::Eigen(format!("phase advance unresolved on [{}, {}]", a.lambda, b.lambda)));
                }
                let m = safe_sample(self.problem, split(a.lambda, b.lambda), 1e-13, &self.scan)?;
                let mut out = self.refine(a, m, depth + 1)?;
                out.extend(self.refine(m, b, depth + 1)?);
                return Ok(out);
            }
        };
        Ok(if n == 0 { vec![] } else { vec![(a, b, n)] })
    }

    fn polish(&self, a: f64, b: f64) -> Result<f64> {
        let scale = a.abs().max(b.abs()).max(1.0);
        let rough = self.illinois(a, b, &self.scan, 1e-9 * scale)?;
        if self.problem.op.is_massive() && rough.abs() > 1e-5 {
            // signs are certified; the scan accuracy suffices away from zero
            return Ok(rough);
        }
        let delta = 1e-6 * scale;
        let (lo, hi) = ((rough - delta).max(a), (rough + delta).min(b));
        let opts = IntegratorOptions { tol: self.problem.opts.tol.max(POLISH_INTEGRATOR_TOL), ..self.problem.opts };
        let (flo, fhi) = (nearest_one_phase_with(self.problem, lo, &opts)?, nearest_one_phase_with(self.problem, hi, &opts)?);
        if flo < 0.0 && fhi > 0.0 {
            self.illinois(lo, hi, &opts, POLISH_TOL * scale)
        } else {
            self.illinois(a, b, &opts, POLISH_TOL * scale)
        }
    }

    fn illinois(&self, a: f64, b: f64, opts: &IntegratorOptions, tol: f64) -> Result<f64> {
        let (mut a, mut b) = (a, b);
        let mut fa = nearest_one_phase_with(self.problem, a, opts)?;
        let mut fb = nearest_one_phase_with(self.problem, b, opts)?;
        if !(fa < 0.0 && fb > 0.0) {
            return Err(Error::Eigen(format!("root bracket [{a}, {b}] lost its sign change")));
        }
        let mut side = 0i32;
        for _ in 0..200 {
            let c = (a * fb - b * fa) / (fb - fa);
            let fc = nearest_one_phase_with(self.problem, c, opts)?;
            if fc == 0.0 {
                return Ok(c);
            }
            if fc < 0.0 {
                a = c;
                fa = fc;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
            // secant step size as convergence measure
            if b - a <= tol || (fc.abs() / ((fb - fa) / (b - a)).abs()) <= 0.1 * tol {
                return Ok(c);
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Isolates and polishes the roots in a bracket holding `n` eigenvalues.
    fn isolate(&self, a: Sample, b: Sample, n: usize, out: &mut Vec<Eigenvalue>) -> Result<()> {
        let width = b.lambda - a.lambda;
        if n == 1 {
            let fa = nearest_one_phase(self.problem, a.lambda)?;
            let fb = nearest_one_phase(self.problem, b.lambda)?;
            if fa == 0.0 || fb == 0.0 {
                let value = if fa == 0.0 { a.lambda } else { b.lambda };
                out.push(Eigenvalue { value, multiplicity: 1 });
                return Ok(());
            }
            if fa < 0.0 && fb > 0.0 {
                out.push(Eigenvalue { value: self.polish(a.lambda, b.lambda)?, multiplicity: 1 });
                return Ok(());
            }
        }
        if n > 1 && width < 1e-11 * a.lambda.abs().max(1.0) {
            let mid = 0.5 * (a.lambda + b.lambda);
            let u = self.problem.unitary(mid)?;
            let k = u.nrows();
            let nul = linalg::nullity(&(linalg::identity(k) - u), NULLITY_THRESHOLD);
            if nul != n {
                return Err(Error::CountingMismatch { lo: a.lambda, hi: b.lambda, found: nul, expected: n });
            }
            out.push(Eigenvalue { value: mid, multiplicity: n });
            return Ok(());
        }
        if width < 1e-14 {
            return Err(Error::Eigen(format!("cannot isolate root near {}", a.lambda)));
        }
        let m = sample(self.problem, split(a.lambda, b.lambda), &self.problem.opts)?.0;
        for (x, y) in [(a, m), (m, b)] {
            match count_between(&x, &y) {
                Some(0) => {}
                Some(k) => self.isolate(x, y, k, out)?,
                None => {
                    for (p, q, k) in self.refine(x, y, 0)? {
                        self.isolate(p, q, k, out)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Eigenvalues in a window around zero, located by a winding count of
/// `det(I - U(λ))` on a grid, bisection, and polishing on the eigenphase
/// nearest to 1. The window edges sit in gaps of the reference lattice.
pub fn spectrum_window(op: &OperatorSpec, opts: &IntegratorOptions, wopts: &WindowOptions) -> Result<SpectrumModel> {
    let problem = TransmissionProblem::new(op, *opts)?;
    let (lattices, near_wall) = problem.reference_lattices()?;
    let threshold = asymptotic_threshold(op);
    let cutoff = wopts.cutoff.unwrap_or_else(|| default_cutoff(op));
    if cutoff < threshold {
        return Err(Error::WindowTooSmall { cutoff, threshold });
    }
    let hi = gap_edge(&lattices, cutoff);
    let lo = -gap_edge(&lattices.iter().map(|l| Lattice { slope: l.slope, offset: frac(-l.offset) }).collect::<Vec<_>>(), cutoff);

    let k = op.system_dim() as f64;
    let step = wopts.max_step_phase / (k * op.length);
    let intervals = ((hi - lo) / step).ceil() as usize;
    let h = (hi - lo) / intervals as f64;
    let scan = IntegratorOptions { tol: wopts.scan_tol, ..*opts };
    let samples = par::try_map_indexed(intervals + 1, |i| safe_sample(&problem, lo + i as f64 * h, 1e-3 * h, &scan))?;

    let locator = Locator { problem: &problem, scan };
    let brackets = par::try_map_indexed(intervals, |i| locator.refine(samples[i], samples[i + 1], 0))?;
    let brackets: Vec<_> = brackets.into_iter().flatten().collect();
    let roots = par::try_map(&brackets, |(a, b, n)| {
        let mut out = Vec::new();
        locator.isolate(*a, *b, *n, &mut out).map(|_| out)
    })?;
    let mut eigenvalues: Vec<Eigenvalue> = roots.into_iter().flatten().collect();
    for e in &mut eigenvalues {
        let v = e.value.abs();
        if v < ZERO_MODE {
            e.value = 0.0;
        } else if v < AMBIGUOUS_KERNEL {
            return Err(Error::AmbiguousKernel(e.value));
        }
    }
    eigenvalues.sort_by(|x, y| x.value.total_cmp(&y.value));

    let mut reference: Vec<f64> = lattices.iter().flat_map(|l| l.points_in(lo, hi)).collect();
    reference.sort_by(f64::total_cmp);
    let reference: Vec<Eigenvalue> = reference.into_iter().map(|value| Eigenvalue { value, multiplicity: 1 }).collect();

    let window = SpectrumWindow { lo, hi, eigenvalues, reference, grid_points: intervals + 1 };
    if window.count() != window.reference.len() {
        return Err(Error::CountingMismatch { lo, hi, found: window.count(), expected: window.reference.len() });
    }
    let kernel_dim = window.kernel_dim();
    Ok(SpectrumModel { lattices, window: Some(window), kernel_dim, near_wall })
}

/// Midpoint of the widest gap of the union of lattices within one period above `cutoff`.
fn gap_edge(lattices: &[Lattice], cutoff: f64) -> f64 {
    let slope = lattices[0].slope;
    let mut pts: Vec<f64> = lattices.iter().flat_map(|l| l.points_in(cutoff - slope, cutoff + 2.0 * slope)).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * slope);
    let mut best = (f64::NEG_INFINITY, cutoff);
    for w in pts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if mid >= cutoff && mid <= cutoff + slope && w[1] - w[0] > best.0 {
            best = (w[1] - w[0], mid);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        // single-point lattices are spaced `slope` apart; fall back to the midpoint after cutoff
        let next = pts.iter().copied().find(|p| *p >= cutoff).unwrap_or(cutoff);
        return next + 0.5 * slope;
    }
    best.1
}

/// Representative of `x` modulo `2π` in `(-π, π]`.
pub fn centered(x: f64) -> f64 {
    let t = x - TAU * (x / TAU).round();
    if t <= -PI {
        t + TAU
    } else {
        t
    }
}

/// Phase `θ ∈ (-π, π]` of a unit complex number.
pub fn principal_arg(z: Complex64) -> f64 {
    let a = z.arg();
    if a <= -PI {
        a + TAU
    } else {
        a
    }
}
