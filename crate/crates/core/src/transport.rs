//! Adiabatic transport on the inverse determinant line bundle of a family,
//! its holonomy and curvature, and the checks tying them to the index density.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::aps::{self, TauValue};
use crate::error::{Error, Result};
use crate::etainv::{self, EtaOptions};
use crate::glines::{Factor, LineElement, TensorWord};
use crate::glue;
use crate::linalg::{self, CMat};
use crate::model::{
    self, BundleData, CompiledFamily, CompiledSeries, DiskMap, FamilyPath, MatrixField, MatrixSeries, OperatorSpec, Spin,
    SpinCircle,
};
use crate::par;
use crate::special;

/// Differences below this are treated as converged in ε.
pub const FLAT_NOISE: f64 = 1e-10;
pub const MASSIVE_NOISE: f64 = 1e-7;
pub const MIN_RATE: f64 = 0.5;

const QUAD_ORDER: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSchedule {
    pub eps: Vec<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    1
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self::geometric(3, 10)
    }
}

impl EpsSchedule {
    /// `ε_k = 2^{-k}` for `k = first..=last`.
    pub fn geometric(first: i32, last: i32) -> Self {
        Self { eps: (first..=last).map(|k| 2f64.powi(-k)).collect(), order: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps.len() < 3 {
            return Err(Error::InvalidSpec("ε-schedule needs at least 3 entries".into()));
        }
        if self.eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidSpec("ε-schedule entries must be positive".into()));
        }
        if self.eps.windows(2).any(|w| w[1] * 1.05 > w[0]) {
            return Err(Error::InvalidSpec("ε-schedule must decrease with ratios bounded away from 1".into()));
        }
        Ok(())
    }
}

fn fiber_index(family: &CompiledFamily) -> i64 {
    if family.is_massive() {
        0
    } else {
        family.rank as i64
    }
}

fn parity_sign(k: i64) -> f64 {
    if k.rem_euclid(2) == 1 {
        -1.0
    } else {
        1.0
    }
}

/// τ of the pullback interval of `path` at adiabatic parameter `eps`.
pub fn tau_eps(family: &Arc<CompiledFamily>, path: &FamilyPath, eps: f64, opts: &EtaOptions) -> Result<TauValue> {
    if !(eps > 0.0) {
        return Err(Error::InvalidSpec(format!("ε must be positive, got {eps}")));
    }
    aps::tau_interval(&model::pullback_interval(family, path, eps), opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub eps: Vec<f64>,
    pub per_eps: Vec<LineElement>,
    pub limit: LineElement,
    /// `None` when the sequence is stationary to the noise floor.
    pub observed_rate: Option<f64>,
    /// Distance between the limit and the last schedule entry.
    pub residual: f64,
    /// `|Δτ/Δε|` between consecutive entries.
    pub derivative: Vec<f64>,
    pub derivative_converged: bool,
}

/// Richardson extrapolation of coordinates sampled along a decreasing ε sequence.
pub fn extrapolate(eps: &[f64], values: &[Complex64], noise: f64) -> Result<(Complex64, Option<f64>)> {
    let k = values.len();
    let diffs: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let last = values[k - 1];
    if diffs.iter().all(|d| *d <= noise) {
        return Ok((last, None));
    }
    if k < 3 {
        return Err(Error::NonConvergence("too few schedule entries to estimate a rate".into()));
    }
    let r = eps[k - 2] / eps[k - 1];
    let (d1, d2) = (diffs[k - 3], diffs[k - 2]);
    if d2 <= noise {
        return Ok((last, None));
    }
    let rate = (d1 / d2).ln() / (eps[k - 3] / eps[k - 2]).ln();
    if !(rate >= MIN_RATE) {
        return Err(Error::NonConvergence(format!("observed ε-rate {rate:.3} below {MIN_RATE}")));
    }
    Ok((last + (last - values[k - 2]) / (r.powf(rate) - 1.0), Some(rate)))
}

pub fn adiabatic_tau(
    family: &Arc<CompiledFamily>,
    path: &FamilyPath,
    schedule: &EpsSchedule,
    opts: &EtaOptions,
) -> Result<TransportResult> {
    schedule.validate()?;
    let per_eps: Vec<LineElement> = par::try_map(&schedule.eps, |&e| tau_eps(family, path, e, opts).map(|t| t.element))?;
    let coords: Vec<Complex64> = per_eps.iter().map(|e| e.coordinate).collect();
    let noise = if family.is_massive() { MASSIVE_NOISE } else { FLAT_NOISE };
    let (limit, observed_rate) = extrapolate(&schedule.eps, &coords, noise)?;
    let (limit, _) = LineElement::new(per_eps[0].word.clone(), limit).normalized()?;
    let derivative: Vec<f64> =
        coords.windows(2).zip(schedule.eps.windows(2)).map(|(c, e)| (c[1] - c[0]).norm() / (e[0] - e[1])).collect();
    let derivative_converged = derivative.last().is_some_and(|d| *d < 1e-6);
    let residual = limit.distance(per_eps.last().expect("nonempty schedule"))?;
    Ok(TransportResult { eps: schedule.eps.clone(), per_eps, limit, observed_rate, residual, derivative, derivative_converged })
}

fn check_composable(g1: &FamilyPath, g2: &FamilyPath) -> Result<()> {
    let (a, b) = (g1.end(), g2.start());
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if a.len() != b.len() || gap > 1e-9 {
        return Err(Error::NotComposable(format!("γ1 ends at {a:?}, γ2 starts at {b:?}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeReport {
    pub composed: LineElement,
    pub glued: LineElement,
    pub residual: f64,
}

/// Distance between the transport along `γ2 ∘ γ1` and the glued transports.
pub fn compose_check(
    family: &Arc<CompiledFamily>,
    g1: &FamilyPath,
    g2: &FamilyPath,
    schedule: &EpsSchedule,
    opts: &EtaOptions,
) -> Result<ComposeReport> {
    check_composable(g1, g2)?;
    let whole = FamilyPath::compose(g1.clone(), g2.clone());
    let composed = adiabatic_tau(family, &whole, schedule, opts)?.limit;
    let t1 = adiabatic_tau(family, g1, schedule, opts)?.limit;
    let t2 = adiabatic_tau(family, g2, schedule, opts)?.limit;
    let glued = glue::glue_composition(&t2, &t1)?;
    let residual = composed.distance(&glued)?;
    Ok(ComposeReport { composed, glued, residual })
}

/// Quadrature panels for integrals along a path.
pub const PATH_PANELS: usize = 96;

/// The model index density: the 2-form `(i/2π) tr F`, with its transgression
/// 1-form `-(1/2π) tr A` along paths.
#[derive(Clone)]
pub struct IndexDensityForm {
    pub family: Arc<CompiledFamily>,
}

impl IndexDensityForm {
    pub fn new(family: Arc<CompiledFamily>) -> Self {
        Self { family }
    }

    /// `(i/2π) tr F(u, v)` at `z`.
    pub fn two_form(&self, z: &[f64], u: &[f64], v: &[f64]) -> f64 {
        (linalg::I * self.family.trace_curvature(z, u, v)).re / TAU
    }

    /// `-(1/2π) ∫_γ tr A`.
    pub fn path_integral(&self, path: &FamilyPath) -> f64 {
        let f = |t: f64| {
            let (z, v) = path.eval(t);
            self.family.along(&z, &v).trace().re
        };
        -special::integrate(f, 0.0, 1.0, PATH_PANELS, QUAD_ORDER) / TAU
    }

    /// Integral of the 2-form over the image of the unit disk.
    pub fn disk_integral(&self, disk: &DiskMap, radial: usize, angular: usize) -> f64 {
        let (x, w) = special::gauss_legendre(QUAD_ORDER);
        let mut total = 0.0;
        for p in 0..radial {
            let h = 1.0 / radial as f64;
            for (xi, wi) in x.iter().zip(&w) {
                let r = (p as f64 + 0.5 + 0.5 * xi) * h;
                let mut ring = 0.0;
                for k in 0..angular {
                    let th = TAU * k as f64 / angular as f64;
                    let (px, py) = (r * th.cos(), r * th.sin());
                    let (gx, gy) = disk.jacobian(px, py);
                    ring += self.two_form(&disk.eval(px, py), &gx, &gy);
                }
                total += wi * 0.5 * h * r * ring * TAU / angular as f64;
            }
        }
        total
    }
}

/// Parallel transport of the induced connection on the inverse determinant
/// line: the coordinate `exp(-i ∫_γ tr A)` on `L_{γ(1)} ⊗ L_{γ(0)}^{-1}`.
pub fn induced_transport(family: &Arc<CompiledFamily>, path: &FamilyPath) -> LineElement {
    let phase = TAU * IndexDensityForm::new(family.clone()).path_integral(path);
    let grade = fiber_index(family);
    let word = TensorWord::new(vec![
        Factor::plain(aps::point_line(&model::parameter_label(&path.end()), grade)),
        Factor::inverse(aps::point_line(&model::parameter_label(&path.start()), grade)),
    ]);
    LineElement::new(word, Complex64::from_polar(1.0, phase))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyResult {
    pub hol: Complex64,
    /// Adiabatic limit of the mapping-torus τ.
    pub alim_tau: Complex64,
    pub index: i64,
    pub spin: Spin,
    pub observed_rate: Option<f64>,
}

/// Holonomy of the inverse determinant line around a closed path.
pub fn holonomy(
    family: &Arc<CompiledFamily>,
    path: &FamilyPath,
    spin: Spin,
    schedule: &EpsSchedule,
    opts: &EtaOptions,
) -> Result<HolonomyResult> {
    schedule.validate()?;
    if !path.is_closed() {
        return Err(Error::PathNotClosed);
    }
    let taus: Vec<Complex64> = par::try_map(&schedule.eps, |&e| {
        let op = model::mapping_torus(family, path, spin, e)?;
        etainv::tau_closed(&op, opts).map(|r| r.tau)
    })?;
    let noise = if family.is_massive() { MASSIVE_NOISE } else { FLAT_NOISE };
    let (alim, observed_rate) = extrapolate(&schedule.eps, &taus, noise)?;
    let alim_tau = alim / alim.norm();
    let index = fiber_index(family);
    let hol = match spin {
        Spin::Nonbounding => alim_tau * parity_sign(index),
        Spin::Bounding => alim_tau,
    };
    Ok(HolonomyResult { hol, alim_tau, index, spin, observed_rate })
}

/// Counterclockwise square of side `h` centered at `z0` in the `(u, v)` plane.
pub fn square_loop(z0: &[f64], u: &[f64], v: &[f64], h: f64, collar: f64) -> FamilyPath {
    let corner = |a: f64, b: f64| -> Vec<f64> { (0..z0.len()).map(|i| z0[i] + 0.5 * h * (a * u[i] + b * v[i])).collect() };
    let vertices = vec![corner(-1.0, -1.0), corner(1.0, -1.0), corner(1.0, 1.0), corner(-1.0, 1.0), corner(-1.0, -1.0)];
    FamilyPath::Polyline { vertices, collar }
}

/// `-2πi · (i/2π) tr F(u, v) = tr F(u, v)` at `z0`.
pub fn curvature_analytic(family: &CompiledFamily, z0: &[f64], u: &[f64], v: &[f64]) -> Complex64 {
    family.trace_curvature(z0, u, v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub sides: Vec<f64>,
    pub estimates: Vec<Complex64>,
    pub analytic: Complex64,
    pub errors: Vec<f64>,
    pub observed_order: f64,
    pub extrapolated: Complex64,
    pub extrapolated_error: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = pts.iter().map(|(a, _)| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// `-log hol / h²` over shrinking squares, with the log branch continued
/// from the smallest loop outwards.
pub fn curvature_numeric(
    family: &Arc<CompiledFamily>,
    z0: &[f64],
    u: &[f64],
    v: &[f64],
    sides: &[f64],
    schedule: &EpsSchedule,
    opts: &EtaOptions,
) -> Result<CurvatureReport> {
    if sides.len() < 2 {
        return Err(Error::InvalidSpec("curvature needs at least two loop sizes".into()));
    }
    let hols: Vec<Complex64> = par::try_map(sides, |&h| {
        holonomy(family, &square_loop(z0, u, v, h, 0.05), Spin::Bounding, schedule, opts).map(|r| r.hol)
    })?;
    let mut order: Vec<usize> = (0..sides.len()).collect();
    order.sort_by(|&a, &b| sides[a].total_cmp(&sides[b]));
    let mut estimates = vec![Complex64::new(0.0, 0.0); sides.len()];
    let mut prev: Option<(f64, f64)> = None;
    for &i in &order {
        let hol = hols[i];
        if (hol + 1.0).norm() < 1e-6 {
            return Err(Error::LogBranch(sides[i]));
        }
        let mut arg = hol.arg();
        if let Some((h0, a0)) = prev {
            let predicted = a0 * (sides[i] / h0).powi(2);
            arg += TAU * ((predicted - arg) / TAU).round();
        }
        prev = Some((sides[i], arg));
        let log = Complex64::new(hol.norm().ln(), arg);
        estimates[i] = -log / (sides[i] * sides[i]);
    }
    let analytic = curvature_analytic(family, z0, u, v);
    let errors: Vec<f64> = estimates.iter().map(|e| (e - analytic).norm()).collect();
    let observed_order = loglog_slope(sides, &errors);
    let (a, b) = (order[0], order[1]);
    let r2 = (sides[b] / sides[a]).powi(2);
    let extrapolated = (estimates[a] * r2 - estimates[b]) / (r2 - 1.0);
    Ok(CurvatureReport {
        sides: sides.to_vec(),
        estimates,
        analytic,
        errors,
        observed_order,
        extrapolated,
        extrapolated_error: (extrapolated - analytic).norm(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralityReport {
    pub density_integral: f64,
    pub xi: f64,
    pub value: f64,
    pub nearest: i64,
    pub residual: f64,
}

/// `∫_D index density - ξ(mapping torus of ∂D)` against the nearest integer,
/// with the bounding spin structure on the boundary circle.
pub fn integrality_check(
    family: &Arc<CompiledFamily>,
    disk: &DiskMap,
    schedule: &EpsSchedule,
    opts: &EtaOptions,
) -> Result<IntegralityReport> {
    let density = IndexDensityForm::new(family.clone());
    let density_integral = density.disk_integral(disk, 8, 64);
    let boundary = disk.boundary_loop(0.05);
    schedule.validate()?;
    let xis: Vec<f64> = par::try_map(&schedule.eps, |&e| {
        let op = model::mapping_torus(family, &boundary, Spin::Bounding, e)?;
        etainv::tau_closed(&op, opts).map(|r| r.xi)
    })?;
    let xi = *xis.last().expect("nonempty schedule");
    let value = density_integral - xi;
    let nearest = value.round();
    Ok(IntegralityReport { density_integral, xi, value, nearest: nearest as i64, residual: (value - nearest).abs() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesReport {
    pub curvature_integral: Complex64,
    pub log_holonomy: Complex64,
    pub residual: f64,
}

/// `∫_D tr F` against `-log hol(∂D)`.
pub fn stokes_check(family: &Arc<CompiledFamily>, disk: &DiskMap, schedule: &EpsSchedule, opts: &EtaOptions) -> Result<StokesReport> {
    let flux = IndexDensityForm::new(family.clone()).disk_integral(disk, 8, 64);
    let curvature_integral = Complex64::new(0.0, -TAU * flux);
    let hol = holonomy(family, &disk.boundary_loop(0.05), Spin::Bounding, schedule, opts)?.hol;
    let log_holonomy = -Complex64::new(hol.norm().ln(), hol.arg());
    Ok(StokesReport { curvature_integral, log_holonomy, residual: (curvature_integral - log_holonomy).norm() })
}

/// Circle operators `A(u) = base + u·linear + u²·quadratic`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleDeformation {
    pub circle: SpinCircle,
    pub base: MatrixSeries,
    pub linear: MatrixSeries,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<MatrixSeries>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endomorphism: Option<MatrixSeries>,
}

struct Deformed {
    base: CompiledSeries,
    linear: CompiledSeries,
    quadratic: Option<CompiledSeries>,
    u: f64,
}

impl MatrixField for Deformed {
    fn rank(&self) -> usize {
        self.base.rank()
    }

    fn eval(&self, x: f64) -> CMat {
        let mut m = self.base.eval(x) + self.linear.eval(x).scale(self.u);
        if let Some(q) = &self.quadratic {
            m += q.eval(x).scale(self.u * self.u);
        }
        m
    }
}

impl CircleDeformation {
    pub fn operator(&self, u: f64) -> OperatorSpec {
        let bundle = BundleData { rank: self.base.rank(), potential: self.base.clone(), endomorphism: self.endomorphism.clone() };
        let mut op = OperatorSpec::circle(self.circle, &bundle);
        op.potential = Arc::new(Deformed {
            base: self.base.compile(),
            linear: self.linear.compile(),
            quadratic: self.quadratic.as_ref().map(MatrixSeries::compile),
            u,
        });
        op
    }

    /// `[∫_{X/Z} index density]_1 (∂_u) = -(1/2π) ∫ ∂_u tr A dx`.
    pub fn density_one_form(&self, u: f64) -> f64 {
        let (lin, quad) = (self.linear.compile(), self.quadratic.as_ref().map(MatrixSeries::compile));
        let f = |x: f64| {
            let mut t = lin.eval(x).trace().re;
            if let Some(q) = &quad {
                t += 2.0 * u * q.eval(x).trace().re;
            }
            t
        };
        -special::integrate(f, 0.0, self.circle.circumference, 32, QUAD_ORDER) / TAU
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub steps: Vec<f64>,
    pub derivatives: Vec<Complex64>,
    pub predicted: Complex64,
    pub residuals: Vec<f64>,
    pub observed_order: f64,
    pub extrapolated_residual: f64,
}

/// Central differences of `τ(u)` at `u0` against `2πi [·]_1 τ(u0)`.
pub fn variation_check(def: &CircleDeformation, u0: f64, h0: f64, levels: usize, opts: &EtaOptions) -> Result<VariationReport> {
    if levels < 2 || !(h0 > 0.0) {
        return Err(Error::InvalidSpec("variation check needs h0 > 0 and at least two levels".into()));
    }
    let steps: Vec<f64> = (0..levels).map(|k| h0 / 2f64.powi(k as i32)).collect();
    let mut points = vec![u0];
    for h in &steps {
        points.push(u0 + h);
        points.push(u0 - h);
    }
    let taus: Vec<Complex64> = par::try_map(&points, |&u| etainv::tau_closed(&def.operator(u), opts).map(|r| r.tau))?;
    let derivatives: Vec<Complex64> =
        steps.iter().enumerate().map(|(k, h)| (taus[1 + 2 * k] - taus[2 + 2 * k]) / (2.0 * h)).collect();
    let predicted = linalg::I * TAU * def.density_one_form(u0) * taus[0];
    let residuals: Vec<f64> = derivatives.iter().map(|d| (d - predicted).norm()).collect();
    let observed_order = loglog_slope(&steps, &residuals);
    let n = derivatives.len();
    let extrapolated = (4.0 * derivatives[n - 1] - derivatives[n - 2]) / 3.0;
    Ok(VariationReport {
        steps,
        derivatives,
        predicted,
        residuals,
        observed_order,
        extrapolated_residual: (extrapolated - predicted).norm(),
    })
}

/// `a-lim τ` of a U(1) loop with total connection phase `θ`, in closed form.
pub fn u1_loop_tau(theta: f64, spin: Spin) -> Complex64 {
    let offset = etainv::circle_offset(-theta, spin == Spin::Bounding);
    let (_, xi) = etainv::affine_closed_form(offset);
    Complex64::from_polar(1.0, TAU * xi)
}

/// Phase of a U(1) flat family loop: `∮ A`.
pub fn loop_phase(family: &Arc<CompiledFamily>, path: &FamilyPath) -> f64 {
    -TAU * IndexDensityForm::new(family.clone()).path_integral(path)
}
