//! Evaluation of scenarios into report entries and CSV series.

use std::collections::BTreeMap;
use std::sync::Arc;

use detline::etainv::{self, EtaOptions};
use detline::glue::{self, GluingScenario};
use detline::glines::LineElement;
use detline::linalg::{self, CMat};
use detline::model::{FamilySpec, IntervalGeom, OperatorSpec, Spin};
use detline::spectral;
use detline::transport::{self, EpsSchedule};
use detline::{corpus, par};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::{OperatorInput, Payload, Scenario};

const FLAT_TOL: f64 = 1e-8;
const MASSIVE_TOL: f64 = 1e-6;
const SPECTRUM_CUTOFF: f64 = 20.0;

/// Command-line overrides; each wins over the matching scenario field.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub tolerance: Option<f64>,
    pub eps_schedule: Option<Vec<f64>>,
    pub cutoff: Option<f64>,
    pub step: Option<f64>,
    /// Whether CSV series are wanted; spectra are only computed on request.
    pub series: bool,
}

struct Settings {
    tolerance: Option<f64>,
    schedule: EpsSchedule,
    opts: EtaOptions,
    series: bool,
}

impl Settings {
    fn resolve(s: &Scenario, o: &Overrides) -> Settings {
        let mut opts = EtaOptions::default();
        if let Some(c) = o.cutoff.or(s.cutoff) {
            opts.window.cutoff = Some(c);
        }
        if let Some(t) = o.step.or(s.step) {
            opts.integrator.tol = t;
        }
        let schedule = match o.eps_schedule.clone().or_else(|| s.eps_schedule.clone()) {
            Some(eps) => EpsSchedule { eps, order: 1 },
            None => EpsSchedule::default(),
        };
        Settings { tolerance: o.tolerance.or(s.tolerance), schedule, opts, series: o.series }
    }

    fn tol(&self, massive: bool) -> f64 {
        self.tolerance.unwrap_or(if massive { MASSIVE_TOL } else { FLAT_TOL })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorInfo {
    /// `numeric` for certification failures, `input` otherwise.
    pub class: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Entry {
    pub id: String,
    pub kind: &'static str,
    pub status: Status,
    pub pass: bool,
    pub tolerance: Option<f64>,
    pub residuals: BTreeMap<String, f64>,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

/// A CSV table written next to the report as `<id>.<name>.csv`.
#[derive(Clone, Debug)]
pub struct Table {
    pub id: String,
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Default)]
pub struct Outcome {
    pub entries: Vec<Entry>,
    pub tables: Vec<Table>,
}

struct Check {
    tolerance: f64,
    residuals: BTreeMap<String, f64>,
    results: Value,
    tables: Vec<Table>,
}

impl Check {
    fn new(tolerance: f64, results: Value) -> Self {
        Check { tolerance, residuals: BTreeMap::new(), results, tables: Vec::new() }
    }

    fn residual(mut self, name: &str, value: f64) -> Self {
        self.residuals.insert(name.to_string(), value);
        self
    }
}

fn cx(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

fn element(e: &LineElement) -> Value {
    json!({ "word": e.word.display(), "grade": e.grade(), "coordinate": cx(e.coordinate) })
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report types serialize")
}

/// Evaluates a scenario. Suites expand into one entry per member, sorted by id.
pub fn run(s: &Scenario, o: &Overrides) -> Outcome {
    if let Payload::Suite { scenarios } = &s.payload {
        let parts = par::map(scenarios, |m| run(m, o));
        let mut out = Outcome::default();
        for p in parts {
            out.entries.extend(p.entries);
            out.tables.extend(p.tables);
        }
        out.entries.sort_by(|a, b| a.id.cmp(&b.id));
        out.tables.sort_by(|a, b| (&a.id, a.name).cmp(&(&b.id, b.name)));
        return out;
    }
    let settings = Settings::resolve(s, o);
    let kind = s.payload.kind();
    match evaluate(s, &settings) {
        Ok(c) => {
            let pass = c.residuals.values().all(|r| *r <= c.tolerance);
            Outcome {
                entries: vec![Entry {
                    id: s.id.clone(),
                    kind,
                    status: if pass { Status::Pass } else { Status::Fail },
                    pass,
                    tolerance: Some(c.tolerance),
                    residuals: c.residuals,
                    results: c.results,
                    error: None,
                }],
                tables: c.tables.into_iter().map(|t| Table { id: s.id.clone(), ..t }).collect(),
            }
        }
        Err(e) => Outcome {
            entries: vec![Entry {
                id: s.id.clone(),
                kind,
                status: Status::Error,
                pass: false,
                tolerance: None,
                residuals: BTreeMap::new(),
                results: Value::Null,
                error: Some(ErrorInfo { class: if e.is_numeric() { "numeric" } else { "input" }, message: e.to_string() }),
            }],
            tables: vec![],
        },
    }
}

fn evaluate(s: &Scenario, st: &Settings) -> detline::Result<Check> {
    match &s.payload {
        Payload::Eta { operator, expected } => eta(operator, expected.clone().unwrap_or_default(), st),
        Payload::Tau { operator, expected, equivariance } => {
            tau(operator, expected.clone().unwrap_or_default(), equivariance.as_ref().map(|m| m.to_cmat()), st)
        }
        Payload::Glue { scenarios, corpus, intervals } => {
            let mut all = scenarios.clone();
            if let Some(c) = corpus {
                all.extend(corpus::gluing_corpus(c.seed, c.count));
            }
            glue_check(&all, intervals, st)
        }
        Payload::Transport { family, path, compose_with, reparametrizations } => {
            transport_check(family, path, compose_with.as_ref(), reparametrizations, st)
        }
        Payload::Holonomy { family, path, expected_phase } => holonomy(family, path, *expected_phase, st),
        Payload::Curvature { family, point, u, v, sides } => {
            let fam = Arc::new(family.compile());
            let r = transport::curvature_numeric(&fam, point, u, v, sides, &st.schedule, &st.opts)?;
            let rows = (0..r.sides.len())
                .map(|k| vec![num(r.sides[k]), num(r.estimates[k].re), num(r.estimates[k].im), num(r.errors[k])])
                .collect();
            let mut c = Check::new(st.tol(family.endomorphism.is_some()), to_value(&r)).residual("extrapolated", r.extrapolated_error);
            c.tables.push(table("curvature", vec!["side", "estimate_re", "estimate_im", "error"], rows));
            Ok(c)
        }
        Payload::Integrality { family, disk } => {
            let fam = Arc::new(family.compile());
            let r = transport::integrality_check(&fam, disk, &st.schedule, &st.opts)?;
            Ok(Check::new(st.tol(family.endomorphism.is_some()), to_value(&r)).residual("integer", r.residual))
        }
        Payload::Variation { deformation, u0, h0, levels } => {
            let r = transport::variation_check(deformation, *u0, *h0, *levels, &st.opts)?;
            let rows = (0..r.steps.len())
                .map(|k| vec![num(r.steps[k]), num(r.derivatives[k].re), num(r.derivatives[k].im), num(r.residuals[k])])
                .collect();
            let mut c = Check::new(st.tol(deformation.endomorphism.is_some()), to_value(&r))
                .residual("extrapolated", r.extrapolated_residual);
            c.tables.push(table("variation", vec!["step", "derivative_re", "derivative_im", "residual"], rows));
            Ok(c)
        }
        Payload::Suite { .. } => unreachable!("suites are expanded by run"),
    }
}

fn table(name: &'static str, header: Vec<&'static str>, rows: Vec<Vec<String>>) -> Table {
    Table { id: String::new(), name, header, rows }
}

fn eta(input: &OperatorInput, expected: crate::scenario::Expected, st: &Settings) -> detline::Result<Check> {
    let op = input.build()?;
    let r = etainv::eta_operator(&op, &st.opts)?;
    let mut c = Check::new(st.tol(op.is_massive()), to_value(&r));
    if let Some(h) = r.heat_kernel {
        c = c.residual("heat_kernel", (r.eta0 - h).abs());
    }
    if let Some(e) = expected.eta {
        c = c.residual("eta", (r.eta0 - e).abs());
    }
    if let Some([re, im]) = expected.tau {
        c = c.residual("tau", (r.tau - Complex64::new(re, im)).norm());
    }
    if st.series {
        c.tables.push(spectrum_table(&op, st)?);
    }
    Ok(c)
}

fn spectrum_table(op: &OperatorSpec, st: &Settings) -> detline::Result<Table> {
    let header = vec!["value", "multiplicity", "source"];
    let mut rows = Vec::new();
    if op.is_massive() || st.opts.force_numeric {
        let model = spectral::spectrum_window(op, &st.opts.integrator, &st.opts.window)?;
        if let Some(w) = &model.window {
            for (src, list) in [("eigenvalue", &w.eigenvalues), ("reference", &w.reference)] {
                rows.extend(list.iter().map(|e| vec![num(e.value), e.multiplicity.to_string(), src.to_string()]));
            }
        }
    } else {
        let model = spectral::affine_spectrum(op, &st.opts.integrator)?;
        let cut = st.opts.window.cutoff.unwrap_or(SPECTRUM_CUTOFF);
        let mut pts: Vec<f64> = model.lattices.iter().flat_map(|l| l.points_in(-cut, cut)).collect();
        pts.sort_by(f64::total_cmp);
        rows.extend(pts.into_iter().map(|x| vec![num(x), "1".into(), "eigenvalue".into()]));
    }
    Ok(table("spectrum", header, rows))
}

fn tau(input: &OperatorInput, expected: crate::scenario::Expected, equivariance: Option<CMat>, st: &Settings) -> detline::Result<Check> {
    let op = input.build()?;
    let tv = match input {
        OperatorInput::Circle { .. } => detline::aps::tau_value_closed(&op, &st.opts)?,
        OperatorInput::Interval { .. } => detline::aps::tau_interval(&op, &st.opts)?,
    };
    let results = json!({
        "element": element(&tv.element),
        "raw_norm": tv.raw_norm,
        "tau": cx(tv.tau_boundary),
        "det_isometry": cx(tv.det_isometry),
        "eta": to_value(&tv.eta),
    });
    let mut c = Check::new(st.tol(op.is_massive()), results).residual("norm", (tv.element.quillen_norm() - 1.0).abs());
    if let Some([re, im]) = expected.tau {
        c = c.residual("tau", (tv.tau_boundary - Complex64::new(re, im)).norm());
    }
    if let Some([re, im]) = expected.coordinate {
        c = c.residual("coordinate", (tv.coordinate() - Complex64::new(re, im)).norm());
    }
    if let Some(u) = equivariance {
        c = c.residual("equivariance", detline::aps::tau_equivariance_check(&op, &u, &st.opts)?);
    }
    Ok(c)
}

fn glue_check(closed: &[GluingScenario], intervals: &[crate::scenario::IntervalGluing], st: &Settings) -> detline::Result<Check> {
    let reports = par::try_map(closed, |s| glue::verify_gluing(s, &st.opts))?;
    let compositions = par::try_map(intervals, |g| {
        let d = g.system_dim();
        let isos: [CMat; 3] = match &g.isometries {
            Some(m) => [m[0].to_cmat(), m[1].to_cmat(), m[2].to_cmat()],
            None => [linalg::identity(d), linalg::identity(d), linalg::identity(d)],
        };
        glue::verify_interval_gluing(IntervalGeom { length: g.length }, &g.bundle, g.cut, [&isos[0], &isos[1], &isos[2]], &st.opts)
    })?;
    let massive = closed.iter().any(|s| s.bundle.endomorphism.is_some())
        || intervals.iter().any(|g| g.bundle.endomorphism.is_some());
    let worst = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0, f64::max);
    let closed_worst = worst(&mut reports.iter().map(|r| r.residual));
    let interval_worst = worst(&mut compositions.iter().map(|r| r.residual));
    let presentation = worst(&mut compositions.iter().map(|r| r.presentation_residual));
    let results = json!({
        "closed": reports.iter().map(|r| json!({
            "id": r.id, "lhs": cx(r.lhs), "rhs": cx(r.rhs), "ungraded": cx(r.ungraded), "residual": r.residual,
        })).collect::<Vec<_>>(),
        "intervals": compositions.iter().map(|r| json!({
            "lhs": element(&r.lhs), "rhs": element(&r.rhs), "ungraded": element(&r.ungraded),
            "residual": r.residual, "presentation_residual": r.presentation_residual,
        })).collect::<Vec<_>>(),
    });
    let mut c = Check::new(st.tol(massive), results);
    if !reports.is_empty() {
        c = c.residual("closed", closed_worst);
    }
    if !compositions.is_empty() {
        c = c.residual("interval", interval_worst).residual("presentation", presentation);
    }
    Ok(c)
}

fn transport_check(
    family: &FamilySpec,
    path: &detline::model::FamilyPath,
    compose_with: Option<&detline::model::FamilyPath>,
    reparams: &[Vec<f64>],
    st: &Settings,
) -> detline::Result<Check> {
    let fam = Arc::new(family.compile());
    let r = transport::adiabatic_tau(&fam, path, &st.schedule, &st.opts)?;
    let induced = transport::induced_transport(&fam, path);
    let mut results = json!({
        "limit": element(&r.limit),
        "observed_rate": r.observed_rate,
        "extrapolation_residual": r.residual,
        "induced": element(&induced),
        "derivative_converged": r.derivative_converged,
    });
    let mut c = Check::new(st.tol(family.endomorphism.is_some()), Value::Null)
        .residual("norm", (r.limit.quillen_norm() - 1.0).abs())
        .residual("induced", r.limit.distance(&induced)?);
    if let Some(second) = compose_with {
        let rep = transport::compose_check(&fam, path, second, &st.schedule, &st.opts)?;
        results["composed"] = element(&rep.composed);
        results["glued"] = element(&rep.glued);
        c = c.residual("compose", rep.residual);
    }
    let others = par::try_map(reparams, |coeffs| {
        transport::adiabatic_tau(&fam, &path.clone().reparametrized(coeffs.clone()), &st.schedule, &st.opts)
    })?;
    if !others.is_empty() {
        let d = others.iter().map(|o| o.limit.distance(&r.limit)).collect::<detline::Result<Vec<_>>>()?;
        c = c.residual("reparametrization", d.into_iter().fold(0.0, f64::max));
    }
    let rows = (0..r.eps.len())
        .map(|k| {
            let z = r.per_eps[k].coordinate;
            let d = if k == 0 { String::new() } else { num(r.derivative[k - 1]) };
            vec![num(r.eps[k]), num(z.re), num(z.im), d]
        })
        .collect();
    c.results = results;
    c.tables.push(table("eps", vec!["eps", "tau_re", "tau_im", "derivative"], rows));
    Ok(c)
}

fn holonomy(family: &FamilySpec, path: &detline::model::FamilyPath, phase: Option<f64>, st: &Settings) -> detline::Result<Check> {
    let fam = Arc::new(family.compile());
    let spins = [Spin::Nonbounding, Spin::Bounding];
    let hs = par::try_map(&spins, |s| transport::holonomy(&fam, path, *s, &st.schedule, &st.opts))?;
    let results = json!({
        "holonomy": cx(hs[1].hol),
        "alim_tau": { "nonbounding": cx(hs[0].alim_tau), "bounding": cx(hs[1].alim_tau) },
        "index": hs[0].index,
        "connection_phase": transport::loop_phase(&fam, path),
    });
    let mut c = Check::new(st.tol(family.endomorphism.is_some()), results).residual("spin", (hs[0].hol - hs[1].hol).norm());
    if let Some(theta) = phase {
        c = c.residual("phase", (hs[1].hol - Complex64::from_polar(1.0, -theta)).norm());
    }
    Ok(c)
}

/// Error type surfaced by a whole run, used for the exit code.
pub fn worst_error(entries: &[Entry]) -> Option<&'static str> {
    let classes: Vec<_> = entries.iter().filter_map(|e| e.error.as_ref().map(|x| x.class)).collect();
    if classes.contains(&"input") {
        Some("input")
    } else {
        classes.first().copied()
    }
}
