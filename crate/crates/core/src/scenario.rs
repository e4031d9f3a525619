//! Scenario files: TOML schema, defaults, cross-field validation, and conversion into solver inputs.

use crate::congestion::{CongestionLaw, Kernel, KernelProfile, Weight, WeightBox};
use crate::equilibrium::{EquilibriumConfig, Schedule};
use crate::error::{ConfigIssue, MfgError, Result};
use crate::geometry::{DomainSpec, Shape, TargetSpec};
use crate::hjb::{default_tol_w, Constraint, SolverParams};
use crate::penalty::PenaltyParams;
use crate::residuals::{default_test_set, TestFunction};
use crate::sampling::InitialSpec;
use crate::Point;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_in: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_out: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_widths: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_radius: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightBoxConfig {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(default = "default_weight_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<WeightBoxConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

fn default_weight_kind() -> String {
    "constant".into()
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { kind: default_weight_kind(), value: Some(1.0), default: None, boxes: None, radius: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CongestionConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub alpha: f64,
    pub kernel: String,
    pub kernel_radius: f64,
    pub weight: WeightConfig,
}

impl Default for CongestionConfig {
    fn default() -> Self {
        Self { k_min: 1.0, k_max: 1.0, alpha: 0.0, kernel: "tent".into(), kernel_radius: 0.1, weight: WeightConfig::default() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dx: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_dir: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_traj: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_probe: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EquilibriumSection {
    pub max_iter: usize,
    /// Constant averaging weight; absent means `1 / (n + 1)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub tol_disp: f64,
    pub tol_opt: f64,
    pub patience: usize,
    pub probe_times: usize,
}

impl Default for EquilibriumSection {
    fn default() -> Self {
        let c = EquilibriumConfig::<f64>::new(1);
        Self {
            max_iter: c.max_iter,
            lambda: None,
            tol_disp: c.tol_disp,
            tol_opt: c.tol_opt,
            patience: c.patience,
            probe_times: c.probe_times,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    /// Band width of the penalized dynamics; absent means `safety * eps_0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub safety: f64,
    /// Factors of `eps_0` swept by the penalty study.
    pub sweep: Vec<f64>,
    /// Absolute band widths added to the sweep.
    pub extra: Vec<f64>,
    pub starts: usize,
}

impl Default for PenaltySection {
    fn default() -> Self {
        Self { eps: None, safety: 0.9, sweep: vec![0.25, 0.5, 0.9, 2.0, 5.0], extra: Vec::new(), starts: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    /// Continuity test functions; empty means the default set of twelve.
    pub tests: Vec<TestFunctionConfig>,
    pub probe_times: usize,
    /// Trajectory starts drawn for the value-function audits.
    pub starts: usize,
    /// Nodes sampled for the gradient/descent-set consistency audit.
    pub gradient_nodes: usize,
    /// Analytic value oracle: "none" or "target-distance" (`phi = d_Gamma / K_max`).
    pub analytic: String,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self { tests: Vec::new(), probe_times: 16, starts: 100, gradient_nodes: 200, analytic: "none".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunctionConfig {
    pub t_center: f64,
    pub t_width: f64,
    pub center: Vec<f64>,
    pub width: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub value_dump: bool,
    pub speed_dump: bool,
    pub trajectories_csv: bool,
    pub ensemble_csv: bool,
    pub density_dump: bool,
    pub per_iteration: bool,
    pub value_csv: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            value_dump: true,
            speed_dump: true,
            trajectories_csv: true,
            ensemble_csv: false,
            density_dump: false,
            per_iteration: false,
            value_csv: false,
        }
    }
}

/// A scenario file. After [`Scenario::resolve`] every optional solver setting is materialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// "state" or "penalized".
    #[serde(default = "default_constraint")]
    pub constraint: String,
    pub domain: DomainConfig,
    pub target: TargetConfig,
    #[serde(default)]
    pub congestion: CongestionConfig,
    pub initial: InitialConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub equilibrium: EquilibriumSection,
    #[serde(default)]
    pub penalty: PenaltySection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_constraint() -> String {
    "state".into()
}

/// Options that change how a scenario is checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResolveOptions {
    /// Accept a penalization band at or above the threshold `eps_0`.
    pub allow_eps_override: bool,
}

struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, path: &str, message: impl Into<String>) {
        self.0.push(ConfigIssue { path: path.into(), message: message.into() });
    }

    fn require<V: Copy>(&mut self, path: &str, v: Option<V>, why: &str) -> Option<V> {
        if v.is_none() {
            self.push(path, format!("required {why}"));
        }
        v
    }

    fn forbid<V>(&mut self, path: &str, v: &Option<V>, why: &str) {
        if v.is_some() {
            self.push(path, format!("not used {why}"));
        }
    }

    fn point(&mut self, path: &str, v: &Option<Vec<f64>>, dim: usize, why: &str) -> Option<Point<f64>> {
        match v {
            None => {
                self.push(path, format!("required {why}"));
                None
            }
            Some(c) => self.coords(path, c, dim),
        }
    }

    fn coords(&mut self, path: &str, c: &[f64], dim: usize) -> Option<Point<f64>> {
        if c.len() != dim {
            self.push(path, format!("expected {dim} coordinate(s), found {}", c.len()));
            return None;
        }
        if c.iter().any(|v| !v.is_finite()) {
            self.push(path, "coordinates must be finite");
            return None;
        }
        Some(Point::from_coords(c))
    }

    fn positive(&mut self, path: &str, v: f64) {
        if !(v > 0.0 && v.is_finite()) {
            self.push(path, format!("must be positive and finite, found {v}"));
        }
    }
}

fn shape_dim(shape: &str) -> Option<usize> {
    match shape {
        "interval" => Some(1),
        "disk" | "annulus" | "rounded-rectangle" => Some(2),
        _ => None,
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            MfgError::Config(vec![ConfigIssue { path: "<file>".into(), message: e.to_string().trim_end().to_string() }])
        })
    }

    /// Reads a TOML scenario, or the `scenario` object of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MfgError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| MfgError::Config(vec![ConfigIssue { path: "<file>".into(), message: e.to_string() }]))?;
            let body = v.get("scenario").cloned().unwrap_or(v);
            return serde_json::from_value(body)
                .map_err(|e| MfgError::Config(vec![ConfigIssue { path: "<file>".into(), message: e.to_string() }]));
        }
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn dim(&self) -> usize {
        shape_dim(&self.domain.shape).unwrap_or(2)
    }

    /// Fills every default and checks all constraints, reporting each violation with its field path.
    pub fn resolve(mut self, opts: ResolveOptions) -> Result<Self> {
        let mut is = Issues(Vec::new());
        let dim = match shape_dim(&self.domain.shape) {
            Some(d) => d,
            None => {
                is.push(
                    "domain.shape",
                    format!("unknown shape \"{}\" (interval, disk, annulus, rounded-rectangle)", self.domain.shape),
                );
                return Err(MfgError::Config(is.0));
            }
        };
        let dom = self.check_domain(&mut is, dim);
        let tgt = dom.as_ref().and_then(|d| self.check_target(&mut is, d));
        let law = self.check_congestion(&mut is, dim);
        if let Some(d) = &dom {
            self.check_initial(&mut is, d);
        }
        let k_max = self.congestion.k_max;
        self.resolve_grid(&mut is, dim, k_max);
        self.check_equilibrium(&mut is);
        if !matches!(self.constraint.as_str(), "state" | "penalized") {
            is.push("constraint", format!("unknown constraint \"{}\" (state, penalized)", self.constraint));
        }
        if let (Some(d), Some(l)) = (&dom, &law) {
            self.check_penalty(&mut is, d, l, opts);
        }
        if let (Some(d), Some(t)) = (&dom, &tgt) {
            self.check_audit(&mut is, d, t);
        }
        if is.0.is_empty() {
            Ok(self)
        } else {
            Err(MfgError::Config(is.0))
        }
    }

    fn check_domain(&self, is: &mut Issues, dim: usize) -> Option<DomainSpec<f64>> {
        let d = &self.domain;
        let shape = match d.shape.as_str() {
            "interval" => {
                for (p, v) in [("domain.center", d.center.is_some()), ("domain.half_widths", d.half_widths.is_some())] {
                    if v {
                        is.push(p, "not used by an interval");
                    }
                }
                is.forbid("domain.radius", &d.radius, "by an interval");
                is.forbid("domain.r_in", &d.r_in, "by an interval");
                is.forbid("domain.r_out", &d.r_out, "by an interval");
                is.forbid("domain.corner_radius", &d.corner_radius, "by an interval");
                let a = is.require("domain.a", d.a, "for an interval");
                let b = is.require("domain.b", d.b, "for an interval");
                Shape::Interval { a: a?, b: b? }
            }
            "disk" => {
                is.forbid("domain.a", &d.a, "by a disk");
                is.forbid("domain.b", &d.b, "by a disk");
                is.forbid("domain.r_in", &d.r_in, "by a disk");
                is.forbid("domain.r_out", &d.r_out, "by a disk");
                is.forbid("domain.half_widths", &d.half_widths, "by a disk");
                is.forbid("domain.corner_radius", &d.corner_radius, "by a disk");
                let c = is.point("domain.center", &d.center, dim, "for a disk");
                let r = is.require("domain.radius", d.radius, "for a disk");
                Shape::Disk { center: c?, radius: r? }
            }
            "annulus" => {
                is.forbid("domain.a", &d.a, "by an annulus");
                is.forbid("domain.b", &d.b, "by an annulus");
                is.forbid("domain.radius", &d.radius, "by an annulus");
                is.forbid("domain.half_widths", &d.half_widths, "by an annulus");
                is.forbid("domain.corner_radius", &d.corner_radius, "by an annulus");
                let c = is.point("domain.center", &d.center, dim, "for an annulus");
                let ri = is.require("domain.r_in", d.r_in, "for an annulus");
                let ro = is.require("domain.r_out", d.r_out, "for an annulus");
                Shape::Annulus { center: c?, r_in: ri?, r_out: ro? }
            }
            _ => {
                is.forbid("domain.a", &d.a, "by a rounded rectangle");
                is.forbid("domain.b", &d.b, "by a rounded rectangle");
                is.forbid("domain.radius", &d.radius, "by a rounded rectangle");
                is.forbid("domain.r_in", &d.r_in, "by a rounded rectangle");
                is.forbid("domain.r_out", &d.r_out, "by a rounded rectangle");
                let c = is.point("domain.center", &d.center, dim, "for a rounded rectangle");
                let h = is.point("domain.half_widths", &d.half_widths, dim, "for a rounded rectangle");
                let r = is.require("domain.corner_radius", d.corner_radius, "for a rounded rectangle");
                Shape::RoundedRectangle { center: c?, half_widths: h?, corner_radius: r? }
            }
        };
        match DomainSpec::new(shape) {
            Ok(d) => Some(d),
            Err(e) => {
                is.push("domain", e.to_string());
                None
            }
        }
    }

    fn check_target(&self, is: &mut Issues, dom: &DomainSpec<f64>) -> Option<TargetSpec<f64>> {
        let t = &self.target;
        let dim = dom.dim();
        let spec = match t.kind.as_str() {
            "points" => {
                let pts = match &t.points {
                    None => {
                        is.push("target.points", "required for a point target");
                        return None;
                    }
                    Some(p) => p,
                };
                let mut out = Vec::new();
                for (i, c) in pts.iter().enumerate() {
                    out.push(is.coords(&format!("target.points[{i}]"), c, dim)?);
                }
                TargetSpec::Points { points: out }
            }
            "arc" => {
                let c = is.point("target.center", &t.center, dim, "for an arc target");
                let r = is.require("target.radius", t.radius, "for an arc target");
                let a = is.require("target.theta_min", t.theta_min, "for an arc target");
                let b = is.require("target.theta_max", t.theta_max, "for an arc target");
                TargetSpec::Arc { center: c?, radius: r?, theta_min: a?, theta_max: b? }
            }
            "boundary" => TargetSpec::boundary(dom),
            "box" => {
                let lo = is.point("target.min", &t.min, dim, "for a box target");
                let hi = is.point("target.max", &t.max, dim, "for a box target");
                TargetSpec::Box { min: lo?, max: hi? }
            }
            other => {
                is.push("target.kind", format!("unknown target kind \"{other}\" (points, arc, boundary, box)"));
                return None;
            }
        };
        match spec.validate(dom) {
            Ok(()) => Some(spec),
            Err(e) => {
                is.push("target", e.to_string());
                None
            }
        }
    }

    fn check_congestion(&self, is: &mut Issues, dim: usize) -> Option<CongestionLaw<f64>> {
        let c = &self.congestion;
        is.positive("congestion.k_min", c.k_min);
        is.positive("congestion.k_max", c.k_max);
        if c.k_max < c.k_min {
            is.push("congestion.k_max", format!("must be >= congestion.k_min = {}", c.k_min));
        }
        if !(c.alpha >= 0.0 && c.alpha.is_finite()) {
            is.push("congestion.alpha", "must be nonnegative");
        }
        is.positive("congestion.kernel_radius", c.kernel_radius);
        if !matches!(c.kernel.as_str(), "tent" | "quadratic") {
            is.push("congestion.kernel", format!("unknown kernel \"{}\" (tent, quadratic)", c.kernel));
        }
        let weight = self.weight(is, dim)?;
        let profile = if c.kernel == "quadratic" { KernelProfile::Quadratic } else { KernelProfile::Tent };
        let kernel = Kernel::new(profile, c.kernel_radius).ok()?;
        match CongestionLaw::new(kernel, weight, c.k_min, c.k_max, c.alpha) {
            Ok(l) => Some(l),
            Err(e) => {
                is.push("congestion", e.to_string());
                None
            }
        }
    }

    fn weight(&self, is: &mut Issues, dim: usize) -> Option<Weight<f64>> {
        let w = &self.congestion.weight;
        match w.kind.as_str() {
            "constant" => Some(Weight::Constant(w.value.unwrap_or(1.0))),
            "table" => {
                let mut boxes = Vec::new();
                for (i, b) in w.boxes.iter().flatten().enumerate() {
                    let lo = is.coords(&format!("congestion.weight.boxes[{i}].min"), &b.min, dim);
                    let hi = is.coords(&format!("congestion.weight.boxes[{i}].max"), &b.max, dim);
                    boxes.push(WeightBox { min: lo?, max: hi?, value: b.value });
                }
                Some(Weight::Table { default: w.default.unwrap_or(1.0), boxes })
            }
            "arrived-discount" => {
                // zero weight near the target: arrived agents stop congesting
                let radius = is.require("congestion.weight.radius", w.radius, "for an arrived-discount weight")?;
                let dom = self.check_domain(&mut Issues(Vec::new()), dim)?;
                let target = self.check_target(&mut Issues(Vec::new()), &dom)?;
                Some(Weight::ArrivedDiscount { value: w.value.unwrap_or(1.0), target, radius })
            }
            other => {
                is.push("congestion.weight.kind", format!("unknown weight kind \"{other}\" (constant, table, arrived-discount)"));
                None
            }
        }
    }

    fn check_initial(&self, is: &mut Issues, dom: &DomainSpec<f64>) {
        let _ = self.initial_spec_checked(is, dom);
    }

    fn initial_spec_checked(&self, is: &mut Issues, dom: &DomainSpec<f64>) -> Option<InitialSpec<f64>> {
        let c = &self.initial;
        let dim = dom.dim();
        match c.kind.as_str() {
            "uniform-box" => {
                let n = is.require("initial.n", c.n, "for a uniform-box initial measure");
                let lo = is.point("initial.min", &c.min, dim, "for a uniform-box initial measure");
                let hi = is.point("initial.max", &c.max, dim, "for a uniform-box initial measure");
                let (n, lo, hi) = (n?, lo?, hi?);
                if n == 0 {
                    is.push("initial.n", "must be positive");
                }
                if hi.x < lo.x || hi.y < lo.y {
                    is.push("initial.max", "must dominate initial.min");
                }
                Some(InitialSpec::UniformBox { min: lo, max: hi, n })
            }
            "gaussian-clipped" => {
                let n = is.require("initial.n", c.n, "for a gaussian-clipped initial measure");
                let mean = is.point("initial.mean", &c.mean, dim, "for a gaussian-clipped initial measure");
                let std = is.point("initial.std", &c.std, dim, "for a gaussian-clipped initial measure");
                let clip = c.clip.unwrap_or(3.0);
                is.positive("initial.clip", clip);
                let (n, mean, std) = (n?, mean?, std?);
                if !(std.x > 0.0 && (dim == 1 || std.y > 0.0)) {
                    is.push("initial.std", "deviations must be positive");
                }
                if n == 0 {
                    is.push("initial.n", "must be positive");
                }
                Some(InitialSpec::GaussianClipped { mean, std, clip, n })
            }
            "points" => {
                let Some(list) = &c.points else {
                    is.push("initial.points", "required for a point-list initial measure");
                    return None;
                };
                let mut pts = Vec::new();
                for (i, p) in list.iter().enumerate() {
                    let q = is.coords(&format!("initial.points[{i}]"), p, dim)?;
                    if dom.signed_distance(q) > 0.0 {
                        is.push(&format!("initial.points[{i}]"), "lies outside the domain");
                    }
                    pts.push(q);
                }
                if pts.is_empty() {
                    is.push("initial.points", "must not be empty");
                }
                if let Some(n) = c.n {
                    if n != pts.len() {
                        is.push("initial.n", format!("is {n} but {} points are listed", pts.len()));
                    }
                }
                if let Some(w) = &c.weights {
                    if w.len() != pts.len() {
                        is.push("initial.weights", format!("needs {} entries, found {}", pts.len(), w.len()));
                    } else if w.iter().any(|v| !(*v >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
                        is.push("initial.weights", "must be nonnegative and not all zero");
                    }
                }
                Some(InitialSpec::Points { points: pts, weights: c.weights.clone() })
            }
            other => {
                is.push("initial.kind", format!("unknown initial kind \"{other}\" (uniform-box, gaussian-clipped, points)"));
                None
            }
        }
    }

    fn resolve_grid(&mut self, is: &mut Issues, dim: usize, k_max: f64) {
        let g = &mut self.grid;
        if !(g.dx > 0.0 && g.dx.is_finite()) {
            is.push("grid.dx", format!("must be positive and finite, found {}", g.dx));
            return;
        }
        let cfl = g.dx / k_max;
        let dt = *g.dt.get_or_insert(cfl);
        if !(dt > 0.0) {
            is.push("grid.dt", "must be positive");
        } else if k_max > 0.0 && dt > cfl * (1.0 + 1e-12) {
            is.push(
                "grid.dt",
                format!("grid.dt = {dt} violates the CFL bound grid.dx / congestion.k_max = {} / {k_max} = {cfl}", g.dx),
            );
        }
        let n_dir = *g.n_dir.get_or_insert(if dim == 1 { 2 } else { 64 });
        if dim == 1 && n_dir != 2 {
            is.push("grid.n_dir", "must be 2 in one dimension");
        }
        if dim == 2 && n_dir < 8 {
            is.push("grid.n_dir", "must be at least 8 in two dimensions");
        }
        if let Some(h) = g.horizon {
            is.positive("grid.horizon", h);
        }
        let defaults = SolverParams::new(dim, g.dx, k_max);
        is.positive("grid.dt_traj", *g.dt_traj.get_or_insert(dt));
        is.positive("grid.sweep_tol", *g.sweep_tol.get_or_insert(defaults.sweep_tol));
        if *g.max_sweeps.get_or_insert(defaults.max_sweeps) == 0 {
            is.push("grid.max_sweeps", "must be positive");
        }
        is.positive("grid.tol_w", *g.tol_w.get_or_insert(default_tol_w(dim, n_dir)));
        let probes = g.h_probe.get_or_insert_with(|| vec![dt, 2.0 * dt]);
        if probes.is_empty() || probes.iter().any(|h| !(*h > 0.0)) {
            is.push("grid.h_probe", "must be a nonempty list of positive steps");
        }
    }

    fn check_equilibrium(&self, is: &mut Issues) {
        let e = &self.equilibrium;
        if e.max_iter == 0 {
            is.push("equilibrium.max_iter", "must be at least 1");
        }
        if let Some(l) = e.lambda {
            if !(l > 0.0 && l <= 1.0) {
                is.push("equilibrium.lambda", format!("must lie in (0, 1], found {l}"));
            }
        }
        is.positive("equilibrium.tol_disp", e.tol_disp);
        is.positive("equilibrium.tol_opt", e.tol_opt);
        if e.patience == 0 {
            is.push("equilibrium.patience", "must be at least 1");
        }
        if e.probe_times < 2 {
            is.push("equilibrium.probe_times", "must be at least 2");
        }
    }

    fn check_penalty(&mut self, is: &mut Issues, dom: &DomainSpec<f64>, law: &CongestionLaw<f64>, opts: ResolveOptions) {
        let p = &self.penalty;
        if !(p.safety > 0.0 && p.safety < 1.0) {
            is.push("penalty.safety", format!("must lie in (0, 1), found {}", p.safety));
        }
        if p.sweep.iter().chain(&p.extra).any(|f| !(*f > 0.0 && f.is_finite())) {
            is.push("penalty.sweep", "factors and extra widths must be positive");
        }
        if p.starts == 0 {
            is.push("penalty.starts", "must be positive");
        }
        let Ok(eps0) = penalty_threshold(dom, law) else {
            is.push("penalty", "threshold eps_0 is undefined for these speed bounds");
            return;
        };
        if let Some(eps) = p.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                is.push("penalty.eps", "must be positive");
            } else if eps >= eps0 && !opts.allow_eps_override {
                is.push(
                    "penalty.eps",
                    format!("eps = {eps} is not below the threshold eps_0 = {eps0}; pass --allow-eps-override to run anyway"),
                );
            }
        } else if self.constraint == "penalized" {
            self.penalty.eps = Some(self.penalty.safety * eps0);
        }
    }

    fn check_audit(&self, is: &mut Issues, dom: &DomainSpec<f64>, tgt: &TargetSpec<f64>) {
        let a = &self.audit;
        for (i, t) in a.tests.iter().enumerate() {
            let path = format!("audit.tests[{i}]");
            match self.test_function(t, dom.dim()) {
                None => is.push(&path, format!("center and width need {} coordinate(s)", dom.dim())),
                Some(tf) => {
                    if let Err(e) = tf.validate(dom.dim(), tgt) {
                        is.push(&path, e.to_string());
                    }
                }
            }
        }
        if a.probe_times == 0 {
            is.push("audit.probe_times", "must be positive");
        }
        match a.analytic.as_str() {
            "none" => {}
            "target-distance" => {
                if self.congestion.alpha != 0.0 {
                    is.push("audit.analytic", "the target-distance oracle needs congestion.alpha = 0");
                }
            }
            other => is.push("audit.analytic", format!("unknown oracle \"{other}\" (none, target-distance)")),
        }
        if a.gradient_nodes == 0 {
            is.push("audit.gradient_nodes", "must be positive");
        }
        if a.starts == 0 {
            is.push("audit.starts", "must be positive");
        }
    }

    fn test_function(&self, t: &TestFunctionConfig, dim: usize) -> Option<TestFunction<f64>> {
        if t.center.len() != dim || t.width.len() != dim {
            return None;
        }
        let pad = |c: &[f64]| if dim == 1 { Point::new(c[0], 0.0) } else { Point::new(c[0], c[1]) };
        Some(TestFunction { t_center: t.t_center, t_width: t.t_width, center: pad(&t.center), width: pad(&t.width) })
    }

    fn expect_resolved<V>(v: Option<V>, what: &str) -> Result<V> {
        v.ok_or_else(|| MfgError::InvalidArgument(format!("scenario is not resolved: {what}")))
    }

    pub fn domain_spec(&self) -> Result<DomainSpec<f64>> {
        let mut is = Issues(Vec::new());
        let d = self.check_domain(&mut is, self.dim());
        d.ok_or(MfgError::Config(is.0))
    }

    pub fn target_spec(&self) -> Result<TargetSpec<f64>> {
        let dom = self.domain_spec()?;
        let mut is = Issues(Vec::new());
        self.check_target(&mut is, &dom).ok_or(MfgError::Config(is.0))
    }

    pub fn law(&self) -> Result<CongestionLaw<f64>> {
        let mut is = Issues(Vec::new());
        self.check_congestion(&mut is, self.dim()).ok_or(MfgError::Config(is.0))
    }

    pub fn initial_spec(&self) -> Result<InitialSpec<f64>> {
        let dom = self.domain_spec()?;
        let mut is = Issues(Vec::new());
        self.initial_spec_checked(&mut is, &dom).ok_or(MfgError::Config(is.0))
    }

    pub fn solver_params(&self) -> Result<SolverParams<f64>> {
        let g = &self.grid;
        let dim = self.dim();
        let base = SolverParams::new(dim, g.dx, self.congestion.k_max);
        Ok(SolverParams {
            dt: Self::expect_resolved(g.dt, "grid.dt")?,
            n_dir: Self::expect_resolved(g.n_dir, "grid.n_dir")?,
            sweep_tol: Self::expect_resolved(g.sweep_tol, "grid.sweep_tol")?,
            max_sweeps: Self::expect_resolved(g.max_sweeps, "grid.max_sweeps")?,
            h_probe: Self::expect_resolved(g.h_probe.clone(), "grid.h_probe")?,
            tol_w: Self::expect_resolved(g.tol_w, "grid.tol_w")?,
            dt_traj: Self::expect_resolved(g.dt_traj, "grid.dt_traj")?,
            horizon: g.horizon,
            ..base
        })
    }

    pub fn constraint(&self) -> Result<Constraint<f64>> {
        match self.constraint.as_str() {
            "penalized" => Ok(Constraint::Penalized { eps: Self::expect_resolved(self.penalty.eps, "penalty.eps")? }),
            _ => Ok(Constraint::State),
        }
    }

    pub fn equilibrium_config(&self, n_particles: usize) -> EquilibriumConfig<f64> {
        let e = &self.equilibrium;
        EquilibriumConfig {
            max_iter: e.max_iter,
            schedule: e.lambda.map_or(Schedule::Harmonic, |lambda| Schedule::Constant { lambda }),
            tol_disp: e.tol_disp,
            tol_opt: e.tol_opt,
            patience: e.patience,
            n_particles,
            probe_times: e.probe_times,
        }
    }

    /// Configured continuity test functions, or the default twelve for `horizon`.
    pub fn test_functions(&self, horizon: f64) -> Result<Vec<TestFunction<f64>>> {
        if self.audit.tests.is_empty() {
            return Ok(default_test_set(&self.domain_spec()?, &self.target_spec()?, horizon));
        }
        self.audit
            .tests
            .iter()
            .map(|t| self.test_function(t, self.dim()).ok_or_else(|| MfgError::InvalidArgument("bad test function".into())))
            .collect()
    }
}

/// `eps_0` for the domain's default band and the law's speed bounds and Lipschitz constant.
pub fn penalty_threshold(dom: &DomainSpec<f64>, law: &CongestionLaw<f64>) -> Result<f64> {
    PenaltyParams::for_domain(dom, 1.0)?.threshold(law.k_min(), law.k_max(), law.lipschitz())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"
name = "line"
[domain]
shape = "interval"
a = 0.0
b = 1.0
[target]
kind = "points"
points = [[0.0]]
[initial]
kind = "uniform-box"
n = 10
min = [0.4]
max = [0.6]
[grid]
dx = 0.01
"#;

    fn issues(e: MfgError) -> Vec<ConfigIssue> {
        match e {
            MfgError::Config(v) => v,
            other => panic!("{other}"),
        }
    }

    #[test]
    fn minimal_line_resolves_with_defaults() {
        let s = Scenario::from_toml_str(LINE).unwrap().resolve(ResolveOptions::default()).unwrap();
        assert_eq!(s.grid.dt, Some(0.01));
        assert_eq!(s.grid.n_dir, Some(2));
        assert_eq!(s.grid.h_probe, Some(vec![0.01, 0.02]));
        assert_eq!(s.congestion.k_max, 1.0);
        let echo = Scenario::from_toml_str(&s.to_toml()).unwrap();
        assert_eq!(echo, s);
        assert_eq!(echo.clone().resolve(ResolveOptions::default()).unwrap(), s);
        let p = s.solver_params().unwrap();
        assert!(p.validate(1, 1.0).is_ok());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = LINE.replace("dx = 0.01", "dx = 0.01\ndxx = 0.02");
        let e = issues(Scenario::from_toml_str(&text).unwrap_err());
        assert!(e[0].message.contains("dxx"), "{e:?}");
    }

    #[test]
    fn cfl_violation_names_both_fields() {
        let text = LINE.replace("dx = 0.01", "dx = 0.01\ndt = 0.02");
        let e = issues(Scenario::from_toml_str(&text).unwrap().resolve(ResolveOptions::default()).unwrap_err());
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].path, "grid.dt");
        assert!(e[0].message.contains("grid.dx") && e[0].message.contains("congestion.k_max"));
    }

    #[test]
    fn every_violation_is_listed() {
        let text = LINE.replace("n = 10", "n = 0").replace("b = 1.0", "b = 1.0\nradius = 2.0").replace("points = [[0.0]]", "points = [[0.0, 1.0]]");
        let e = issues(Scenario::from_toml_str(&text).unwrap().resolve(ResolveOptions::default()).unwrap_err());
        let paths: Vec<&str> = e.iter().map(|i| i.path.as_str()).collect();
        assert!(paths.contains(&"domain.radius") && paths.contains(&"target.points[0]") && paths.contains(&"initial.n"), "{paths:?}");
    }

    #[test]
    fn eps_threshold_is_enforced_unless_overridden() {
        let text = r#"
constraint = "penalized"
[domain]
shape = "annulus"
center = [0.0, 0.0]
r_in = 0.5
r_out = 1.0
[target]
kind = "points"
points = [[0.9, 0.0]]
[initial]
kind = "points"
points = [[-0.8, 0.0]]
[grid]
dx = 0.05
[penalty]
eps = 0.6
"#;
        let s = Scenario::from_toml_str(text).unwrap();
        let e = issues(s.clone().resolve(ResolveOptions::default()).unwrap_err());
        let dom = s.domain_spec().unwrap();
        let eps0 = penalty_threshold(&dom, &s.law().unwrap()).unwrap();
        assert!(e[0].path == "penalty.eps" && e[0].message.contains(&eps0.to_string()), "{e:?}");
        assert!(s.clone().resolve(ResolveOptions { allow_eps_override: true }).is_ok());
        let mut auto = s;
        auto.penalty.eps = None;
        let r = auto.resolve(ResolveOptions::default()).unwrap();
        assert_eq!(r.penalty.eps, Some(0.9 * eps0));
        assert_eq!(r.constraint().unwrap(), Constraint::Penalized { eps: 0.9 * eps0 });
    }

    #[test]
    fn bad_test_function_is_rejected() {
        let text = format!("{LINE}\n[audit]\ntests = [{{ t_center = 0.1, t_width = 0.2, center = [0.5], width = [0.1] }}]\n");
        let e = issues(Scenario::from_toml_str(&text).unwrap().resolve(ResolveOptions::default()).unwrap_err());
        assert_eq!(e[0].path, "audit.tests[0]");
    }
}
