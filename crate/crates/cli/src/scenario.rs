//! Scenario file schema and validation.

use detline::glue::GluingScenario;
use detline::linalg::CMat;
use detline::model::{
    BoundaryIsometry, BundleData, BundleOver, DiskMap, FamilyPath, FamilySpec, IntervalGeom, Mat, OperatorSpec, SpinCircle,
    Validate, Violation,
};
use detline::transport::CircleDeformation;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub id: String,
    #[serde(flatten)]
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_schedule: Option<Vec<f64>>,
    /// Spectral window cutoff Λ.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    /// Integrator tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorInput {
    Circle {
        circle: SpinCircle,
        bundle: BundleData,
    },
    Interval {
        length: f64,
        bundle: BundleData,
        /// Defaults to the identity.
        #[serde(default)]
        isometry: Option<Mat>,
    },
}

impl OperatorInput {
    pub fn length(&self) -> f64 {
        match self {
            OperatorInput::Circle { circle, .. } => circle.circumference,
            OperatorInput::Interval { length, .. } => *length,
        }
    }

    pub fn bundle(&self) -> &BundleData {
        match self {
            OperatorInput::Circle { bundle, .. } | OperatorInput::Interval { bundle, .. } => bundle,
        }
    }

    pub fn system_dim(&self) -> usize {
        let b = self.bundle();
        if b.endomorphism.is_some() {
            2 * b.rank
        } else {
            b.rank
        }
    }

    pub fn build(&self) -> detline::Result<OperatorSpec> {
        Ok(match self {
            OperatorInput::Circle { circle, bundle } => OperatorSpec::circle(*circle, bundle),
            OperatorInput::Interval { length, bundle, isometry } => {
                let t = match isometry {
                    Some(m) => BoundaryIsometry::new(&m.to_cmat())?,
                    None => BoundaryIsometry::identity(self.system_dim()),
                };
                OperatorSpec::interval(IntervalGeom { length: *length }, bundle, &t)
            }
        })
    }

    fn validate(&self, at: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        match self {
            OperatorInput::Circle { circle, .. } => out.extend(circle.validate()),
            OperatorInput::Interval { length, isometry, .. } => {
                out.extend(IntervalGeom { length: *length }.validate());
                if let Some(m) = isometry {
                    if !m.is_square_of(self.system_dim()) {
                        out.push(violation("isometry", format!("expected a {0}x{0} matrix", self.system_dim())));
                    } else {
                        out.extend(BoundaryIsometry { matrix: m.clone() }.validate());
                    }
                }
            }
        }
        if out.is_empty() {
            out.extend(BundleOver(self.bundle(), self.length()).validate());
        }
        prefix(out, at)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub seed: u64,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalGluing {
    pub length: f64,
    pub bundle: BundleData,
    pub cut: f64,
    /// Isometries of the whole interval and the two pieces; identity by default.
    #[serde(default)]
    pub isometries: Option<[Mat; 3]>,
}

impl IntervalGluing {
    pub fn system_dim(&self) -> usize {
        if self.bundle.endomorphism.is_some() {
            2 * self.bundle.rank
        } else {
            self.bundle.rank
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Expected {
    #[serde(default)]
    pub tau: Option<[f64; 2]>,
    /// Unit-normalized coordinate of the element, intervals only.
    #[serde(default)]
    pub coordinate: Option<[f64; 2]>,
    #[serde(default)]
    pub eta: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Eta {
        operator: OperatorInput,
        #[serde(default)]
        expected: Option<Expected>,
    },
    Tau {
        operator: OperatorInput,
        #[serde(default)]
        expected: Option<Expected>,
        /// Unitary `U` for the check that `T` and `T U` give the same element.
        #[serde(default)]
        equivariance: Option<Mat>,
    },
    Glue {
        #[serde(default)]
        scenarios: Vec<GluingScenario>,
        #[serde(default)]
        corpus: Option<CorpusSpec>,
        #[serde(default)]
        intervals: Vec<IntervalGluing>,
    },
    Transport {
        family: FamilySpec,
        path: FamilyPath,
        #[serde(default)]
        compose_with: Option<FamilyPath>,
        #[serde(default)]
        reparametrizations: Vec<Vec<f64>>,
    },
    Holonomy {
        family: FamilySpec,
        path: FamilyPath,
        /// Total connection phase `θ`, if known; checks `hol = e^{-iθ}`.
        #[serde(default)]
        expected_phase: Option<f64>,
    },
    Curvature {
        family: FamilySpec,
        point: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
        #[serde(default = "default_sides")]
        sides: Vec<f64>,
    },
    Integrality {
        family: FamilySpec,
        disk: DiskMap,
    },
    Variation {
        deformation: CircleDeformation,
        #[serde(default)]
        u0: f64,
        #[serde(default = "default_h0")]
        h0: f64,
        #[serde(default = "default_levels")]
        levels: usize,
    },
    Suite {
        scenarios: Vec<Scenario>,
    },
}

fn default_sides() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}

fn default_h0() -> f64 {
    0.05
}

fn default_levels() -> usize {
    4
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Eta { .. } => "eta",
            Payload::Tau { .. } => "tau",
            Payload::Glue { .. } => "glue",
            Payload::Transport { .. } => "transport",
            Payload::Holonomy { .. } => "holonomy",
            Payload::Curvature { .. } => "curvature",
            Payload::Integrality { .. } => "integrality",
            Payload::Variation { .. } => "variation",
            Payload::Suite { .. } => "suite",
        }
    }
}

fn violation(location: &str, message: impl Into<String>) -> Violation {
    Violation { location: location.to_string(), message: message.into() }
}

fn prefix(v: Vec<Violation>, at: &str) -> Vec<Violation> {
    v.into_iter().map(|x| Violation { location: format!("{at}.{}", x.location), message: x.message }).collect()
}

fn check_family(f: &FamilySpec, at: &str) -> Vec<Violation> {
    prefix(f.validate(), at)
}

fn check_path(p: &FamilyPath, dim: usize, at: &str) -> Vec<Violation> {
    let mut out = prefix(p.validate(), at);
    if p.dim() != dim {
        out.push(violation(at, format!("path lives in dimension {}, family in {dim}", p.dim())));
    }
    out
}

fn check_vector(v: &[f64], dim: usize, at: &str) -> Vec<Violation> {
    if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
        vec![violation(at, format!("expected {dim} finite coordinates"))]
    } else {
        vec![]
    }
}

fn is_unitary(m: &Mat) -> bool {
    let c: CMat = m.to_cmat();
    detline::linalg::unitarity_defect(&c) < 1e-10
}

impl Scenario {
    /// Schema-level checks beyond parsing; locations are dotted paths into the file.
    pub fn validate(&self) -> Vec<Violation> {
        let at = |field: &str| format!("{}.{field}", self.id);
        let mut out = Vec::new();
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                out.push(violation(&at("schema_version"), format!("unsupported version {v}, expected {SCHEMA_VERSION}")));
            }
        }
        if self.id.is_empty() {
            out.push(violation("id", "must be nonempty"));
        }
        for (name, v) in [("tolerance", self.tolerance), ("cutoff", self.cutoff), ("step", self.step)] {
            if let Some(x) = v {
                if !(x > 0.0) || !x.is_finite() {
                    out.push(violation(&at(name), "must be positive"));
                }
            }
        }
        if let Some(e) = &self.eps_schedule {
            let s = detline::transport::EpsSchedule { eps: e.clone(), order: 1 };
            if let Err(err) = s.validate() {
                out.push(violation(&at("eps_schedule"), err.to_string()));
            }
        }
        match &self.payload {
            Payload::Eta { operator, .. } => out.extend(operator.validate(&at("operator"))),
            Payload::Tau { operator, equivariance, .. } => {
                out.extend(operator.validate(&at("operator")));
                if let Some(u) = equivariance {
                    if !u.is_square_of(operator.system_dim()) || !is_unitary(u) {
                        out.push(violation(&at("equivariance"), "must be a unitary of the boundary dimension"));
                    }
                }
                if matches!(operator, OperatorInput::Circle { .. }) && equivariance.is_some() {
                    out.push(violation(&at("equivariance"), "only applies to intervals"));
                }
            }
            Payload::Glue { scenarios, corpus, intervals } => {
                if scenarios.is_empty() && corpus.is_none() && intervals.is_empty() {
                    out.push(violation(&at("scenarios"), "glue scenario needs scenarios, corpus or intervals"));
                }
                for (i, s) in scenarios.iter().enumerate() {
                    let base = at(&format!("scenarios[{i}]"));
                    out.extend(prefix(s.circle.validate(), &base));
                    out.extend(prefix(BundleOver(&s.bundle, s.circle.circumference).validate(), &base));
                    let l = s.circle.circumference;
                    if !(0.0 <= s.cut[0] && s.cut[0] < s.cut[1] && s.cut[1] < l) {
                        out.push(violation(&format!("{base}.cut"), "cut points must satisfy 0 <= p < q < circumference"));
                    }
                }
                for (i, g) in intervals.iter().enumerate() {
                    let base = at(&format!("intervals[{i}]"));
                    out.extend(prefix(BundleOver(&g.bundle, g.length).validate(), &base));
                    if !(0.0 < g.cut && g.cut < g.length) {
                        out.push(violation(&format!("{base}.cut"), "cut must lie inside the interval"));
                    }
                    if let Some(isos) = &g.isometries {
                        if isos.iter().any(|m| !m.is_square_of(g.system_dim()) || !is_unitary(m)) {
                            out.push(violation(&format!("{base}.isometries"), "must be unitaries of the boundary dimension"));
                        }
                    }
                }
            }
            Payload::Transport { family, path, compose_with, reparametrizations } => {
                out.extend(check_family(family, &at("family")));
                out.extend(check_path(path, family.dim, &at("path")));
                if let Some(p) = compose_with {
                    out.extend(check_path(p, family.dim, &at("compose_with")));
                }
                for (i, c) in reparametrizations.iter().enumerate() {
                    if c.iter().map(|x| x.abs()).sum::<f64>() >= 1.0 {
                        out.push(violation(&at(&format!("reparametrizations[{i}]")), "Σ|c_k| must be below 1"));
                    }
                }
            }
            Payload::Holonomy { family, path, .. } => {
                out.extend(check_family(family, &at("family")));
                out.extend(check_path(path, family.dim, &at("path")));
                if out.is_empty() && !path.is_closed() {
                    out.push(violation(&at("path"), "holonomy needs a closed path"));
                }
            }
            Payload::Curvature { family, point, u, v, sides } => {
                out.extend(check_family(family, &at("family")));
                out.extend(check_vector(point, family.dim, &at("point")));
                out.extend(check_vector(u, family.dim, &at("u")));
                out.extend(check_vector(v, family.dim, &at("v")));
                if sides.len() < 2 || sides.iter().any(|h| !(*h > 0.0)) {
                    out.push(violation(&at("sides"), "need at least two positive loop sides"));
                }
            }
            Payload::Integrality { family, disk } => {
                out.extend(check_family(family, &at("family")));
                let d = family.dim;
                let w_ok = disk.w.as_ref().is_none_or(|w| w.len() == d);
                if disk.center.len() != d || disk.p.len() != d || disk.q.len() != d || !w_ok {
                    out.push(violation(&at("disk"), format!("disk vectors must have {d} coordinates")));
                }
            }
            Payload::Variation { deformation, h0, levels, .. } => {
                let c = deformation.circle;
                out.extend(prefix(c.validate(), &at("deformation.circle")));
                let n = deformation.base.rank();
                let bundle = BundleData { rank: n, potential: deformation.base.clone(), endomorphism: deformation.endomorphism.clone() };
                out.extend(prefix(BundleOver(&bundle, c.circumference).validate(), &at("deformation")));
                let lin = BundleData { rank: n, potential: deformation.linear.clone(), endomorphism: None };
                out.extend(prefix(BundleOver(&lin, c.circumference).validate(), &at("deformation.linear")));
                if !(*h0 > 0.0) || *levels < 2 {
                    out.push(violation(&at("h0"), "need h0 > 0 and levels >= 2"));
                }
            }
            Payload::Suite { scenarios } => {
                for s in scenarios {
                    if matches!(s.payload, Payload::Suite { .. }) {
                        out.push(violation(&at("scenarios"), "suites cannot nest"));
                    }
                    out.extend(s.validate());
                }
            }
        }
        out
    }
}
