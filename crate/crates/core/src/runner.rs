//! Run orchestration: one scenario, one mode, one staged artifact directory.

use crate::congestion::{CongestionLaw, SpeedField};
use crate::equilibrium::{fixed_point_with, StopReason, TimeFrame, Verdict};
use crate::error::{MfgError, Result};
use crate::geometry::{DomainSpec, TargetSpec};
use crate::hjb::{lipschitz_constant, solve_value, Constraint, SolverParams, ValueField};
use crate::io::{ensemble_csv, trajectories_csv, value_slice_csv, write_bytes, write_json, GridDump};
use crate::residuals::{self, gradient_consistency};
use crate::sampling::{sample, InitialSpec};
use crate::scenario::{penalty_threshold, ResolveOptions, Scenario};
use crate::trajectories::{dpp_audit, integrate_many, Trajectory};
use crate::transport::ParticleEnsemble;
use crate::Point;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

pub const TOOL: &str = "mintime-mfg";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SolveOcp,
    Equilibrium,
    PenaltyStudy,
    Audit,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::SolveOcp, Mode::Equilibrium, Mode::PenaltyStudy, Mode::Audit];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SolveOcp => "solve-ocp",
            Mode::Equilibrium => "equilibrium",
            Mode::PenaltyStudy => "penalty-study",
            Mode::Audit => "audit",
        }
    }
}

impl FromStr for Mode {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| MfgError::InvalidArgument(format!("unknown mode \"{s}\" (solve-ocp, equilibrium, penalty-study, audit)")))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything needed to reproduce a run, written as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub mode: Mode,
    pub seed: u64,
    pub threads: usize,
    pub allow_eps_override: bool,
    pub scenario: Scenario,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MfgError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| MfgError::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub metrics: Value,
    /// The equilibrium search ended without meeting its tolerances.
    pub stalled: bool,
}

/// Wall-clock stage timer, kept out of `metrics.json` so metrics stay reproducible.
#[derive(Default)]
struct Timings(BTreeMap<String, f64>);

impl Timings {
    fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        *self.0.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        r
    }
}

struct Setup {
    dom: DomainSpec<f64>,
    tgt: TargetSpec<f64>,
    law: CongestionLaw<f64>,
    params: SolverParams<f64>,
    constraint: Constraint<f64>,
    m0: ParticleEnsemble<f64>,
}

impl Setup {
    fn new(s: &Scenario) -> Result<Self> {
        let dom = s.domain_spec()?;
        let m0 = sample(&s.initial_spec()?, &dom, s.seed)?;
        Ok(Self { tgt: s.target_spec()?, law: s.law()?, params: s.solver_params()?, constraint: s.constraint()?, m0, dom })
    }

    fn frame(&self) -> Result<TimeFrame<f64>> {
        TimeFrame::new(&self.law, &self.dom, &self.tgt, &self.params)
    }

    /// `k = K(m0, .)`, the speed an agent sees when the crowd is frozen at its initial state.
    fn static_speed(&self) -> Result<SpeedField<f64>> {
        let frame = self.frame()?;
        Ok(self.law.freeze(std::slice::from_ref(&self.m0), frame.dt, &frame.grid)?.compact())
    }

    fn lipschitz_bound(&self, phi: &ValueField<f64>) -> f64 {
        lipschitz_constant(self.dom.geodesic_factor(), self.law.k_min(), self.law.k_max(), self.law.lipschitz(), phi.t_bound())
    }

    /// Seeded low-discrepancy starts filling the closed domain.
    fn starts(&self, n: usize, seed: u64) -> Result<Vec<Point<f64>>> {
        let (lo, hi) = self.dom.bounding_box();
        let spec = InitialSpec::UniformBox { min: lo, max: hi, n };
        Ok(sample(&spec, &self.dom, seed ^ 0x5eed_57a7)?.positions().to_vec())
    }
}

/// Relative slack on the Lipschitz comparison; difference quotients of an exactly linear
/// field land a few ulps above the constant.
pub const LIPSCHITZ_SLACK: f64 = 1e-9;

fn value_summary(setup: &Setup, phi: &ValueField<f64>) -> Value {
    let measured = phi.measured_lipschitz();
    let bound = setup.lipschitz_bound(phi);
    json!({
        "t_bound": phi.t_bound(),
        "horizon": phi.horizon(),
        "slices": phi.n_slices(),
        "stationary_sweeps": phi.sweeps(),
        "lipschitz_measured": measured,
        "lipschitz_bound": bound,
        "lipschitz_within_bound": measured <= bound * (1.0 + LIPSCHITZ_SLACK),
    })
}

struct TrajectorySet {
    trajectories: Vec<Trajectory<f64>>,
    unreached: usize,
    dpp: Vec<f64>,
}

fn integrate_starts(phi: &ValueField<f64>, k: &SpeedField<f64>, starts: &[Point<f64>]) -> Result<TrajectorySet> {
    let mut set = TrajectorySet { trajectories: Vec::new(), unreached: 0, dpp: Vec::new() };
    for r in integrate_many(phi, k, 0.0, starts) {
        match r {
            Ok(g) => {
                set.dpp.push(dpp_audit(&g, phi));
                set.trajectories.push(g);
            }
            Err(e) if matches!(e.error, MfgError::Unreached { .. }) => {
                set.unreached += 1;
                set.dpp.push(f64::NAN);
                set.trajectories.push(e.partial);
            }
            Err(e) => return Err(e.error),
        }
    }
    Ok(set)
}

fn trajectory_sidecar(set: &TrajectorySet) -> Value {
    let rows: Vec<Value> = set
        .trajectories
        .iter()
        .zip(&set.dpp)
        .enumerate()
        .map(|(id, (g, d))| json!({"id": id, "start": [g.start().x, g.start().y], "tau": g.tau(), "dpp": d}))
        .collect();
    json!({ "trajectories": rows })
}

fn max_finite(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().filter(|x| x.is_finite()).fold(0.0, f64::max)
}

/// Largest `|phi(0, x) - d_Gamma(x) / K_max|` over active nodes.
fn analytic_error(setup: &Setup, phi: &ValueField<f64>) -> f64 {
    let g = phi.grid();
    (0..g.len())
        .filter(|&i| phi.active()[i])
        .map(|i| (phi.slices()[0][i] - setup.tgt.distance(g.node(i)) / setup.law.k_max()).abs())
        .fold(0.0, f64::max)
}

struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl Artifacts<'_> {
    fn bytes(&mut self, name: &str, b: &[u8]) -> Result<()> {
        write_bytes(&self.dir.join(name), b)?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn grid(&mut self, name: &str, d: &GridDump) -> Result<()> {
        self.bytes(name, &d.to_bytes())
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        write_json(&self.dir.join(name), v)?;
        self.names.push(name.to_string());
        Ok(())
    }
}

fn solve_ocp(s: &Scenario, setup: &Setup, art: &mut Artifacts, tm: &mut Timings, full_audit: bool) -> Result<Value> {
    let k = tm.time("speed", || setup.static_speed())?;
    let phi = tm.time("value", || solve_value(&k, &setup.dom, &setup.tgt, setup.constraint, &setup.params))?;
    let starts = setup.starts(s.audit.starts, s.seed)?;
    let set = tm.time("trajectories", || integrate_starts(&phi, &k, &starts))?;
    let mut m = json!({
        "value": value_summary(setup, &phi),
        "trajectories": {
            "starts": starts.len(),
            "unreached": set.unreached,
            "dpp_max": max_finite(set.dpp.iter().copied()),
            "dpp_tolerance": 3.0 * (setup.params.dx + setup.params.dt_traj),
        },
    });
    if s.audit.analytic == "target-distance" {
        let e = analytic_error(setup, &phi);
        m["analytic"] = json!({ "oracle": "target-distance", "max_error": e, "max_error_over_dx": e / setup.params.dx });
    }
    if full_audit {
        let hj = tm.time("hj_residual", || residuals::hj_residual(&phi, &k));
        let probe = tm.time("boundary_probe", || residuals::boundary_probe(&phi));
        let grad =
            tm.time("gradient_consistency", || gradient_consistency(&phi, &k, 0.0, s.audit.gradient_nodes, s.seed))?;
        m["audit"] = json!({
            "hj": hj,
            "boundary_probe": probe,
            "boundary_probe_floor": -3.0 * setup.params.dx,
            "gradient": grad,
            "gamma_max_abs_phi": residuals::gamma_max_abs(&phi),
        });
    }
    if s.output.value_dump {
        art.grid("value.mfggrid", &GridDump::of_value(&phi))?;
    }
    if s.output.speed_dump {
        art.grid("speed.mfggrid", &GridDump::of_speed(&k))?;
    }
    if s.output.value_csv {
        art.bytes("value_t0.csv", value_slice_csv(&phi, 0).as_bytes())?;
    }
    if s.output.trajectories_csv {
        art.bytes("trajectories.csv", trajectories_csv(setup.dom.dim(), &set.trajectories).as_bytes())?;
        art.json("trajectories.json", &trajectory_sidecar(&set))?;
    }
    Ok(m)
}

fn penalty_study(s: &Scenario, setup: &Setup, art: &mut Artifacts, tm: &mut Timings) -> Result<Value> {
    let eps0 = penalty_threshold(&setup.dom, &setup.law)?;
    let k = tm.time("speed", || setup.static_speed())?;
    let phi = tm.time("value", || solve_value(&k, &setup.dom, &setup.tgt, Constraint::State, &setup.params))?;
    let starts = setup.starts(s.penalty.starts, s.seed)?;
    let reference: Vec<f64> = starts.iter().map(|x| phi.eval(0.0, *x)).collect();
    let mut widths: Vec<(String, f64)> = s.penalty.sweep.iter().map(|f| (format!("{f} eps_0"), f * eps0)).collect();
    widths.extend(s.penalty.extra.iter().map(|e| (format!("{e}"), *e)));
    let dx = setup.params.dx;
    let mut rows = Vec::new();
    for (label, eps) in widths {
        let phi_e = tm.time("penalized_value", || solve_value(&k, &setup.dom, &setup.tgt, Constraint::Penalized { eps }, &setup.params))?;
        let set = tm.time("trajectories", || integrate_starts(&phi_e, &k, &starts))?;
        let excursion = max_finite(set.trajectories.iter().flat_map(|g| g.positions().iter().map(|x| setup.dom.signed_distance(*x).max(0.0))));
        let gap = max_finite(starts.iter().zip(&reference).map(|(x, v)| (phi_e.eval(0.0, *x) - v).abs()));
        rows.push(json!({
            "label": label,
            "eps": eps,
            "eps_over_eps0": eps / eps0,
            "max_excursion": excursion,
            "max_value_gap": gap,
            "excursion_exceeds_2dx": excursion > 2.0 * dx,
            "value_gap_within_3dx": gap <= 3.0 * dx,
            "unreached": set.unreached,
        }));
    }
    if s.output.value_dump {
        art.grid("value.mfggrid", &GridDump::of_value(&phi))?;
    }
    Ok(json!({
        "eps0": eps0,
        "eps_star": setup.dom.default_eps_star(),
        "starts": starts.len(),
        "reference": value_summary(setup, &phi),
        "sweep": rows,
    }))
}

fn equilibrium(s: &Scenario, setup: &Setup, art: &mut Artifacts, tm: &mut Timings) -> Result<(Value, bool)> {
    let cfg = s.equilibrium_config(setup.m0.len());
    let frame = setup.frame()?;
    let per_iteration = s.output.per_iteration;
    let dir = art.dir.to_path_buf();
    let eq = tm.time("fixed_point", || {
        fixed_point_with(&setup.m0, &setup.law, &setup.dom, &setup.tgt, setup.constraint, &cfg, &setup.params, |view| {
            if !per_iteration {
                return Ok(Vec::new());
            }
            let (v, sp) = (format!("value_iter{:03}.mfggrid", view.iteration), format!("density_iter{:03}.mfggrid", view.iteration));
            GridDump::of_value(view.value).write(&dir.join(&v))?;
            GridDump::of_density(&frame.grid, frame.dt, &frame.timeline(view.flow)?).write(&dir.join(&sp))?;
            Ok(vec![v, sp])
        })
    })?;
    art.names.extend(eq.report.artifacts.iter().cloned());
    let tests = s.test_functions(frame.horizon())?;
    let audit = tm.time("audit", || residuals::audit(&eq.flow, &setup.m0, &eq.value, &eq.speed, &tests, s.audit.probe_times))?;
    let stalled = eq.report.verdict == Verdict::Stalled;
    let last = eq.report.iterations.last().expect("at least one iteration");
    let m = json!({
        "particles": setup.m0.len(),
        "horizon": frame.horizon(),
        "verdict": eq.report.verdict,
        "stop_reason": eq.report.stop_reason,
        "iterations": eq.report.iterations.len(),
        "displacement_series": eq.report.displacements(),
        "residual_series": eq.report.residuals(),
        "records": eq.report.iterations,
        "equilibrium_residual": last.residual,
        "value": value_summary(setup, &eq.value),
        "audit": audit,
        "artifacts": eq.report.artifacts,
    });
    debug_assert!(stalled == (eq.report.stop_reason != StopReason::Tolerances));
    if s.output.value_dump {
        art.grid("value.mfggrid", &GridDump::of_value(&eq.value))?;
    }
    if s.output.speed_dump {
        art.grid("speed.mfggrid", &GridDump::of_speed(&eq.speed))?;
    }
    if s.output.density_dump {
        art.grid("density.mfggrid", &GridDump::of_density(&frame.grid, frame.dt, &frame.timeline(&eq.flow)?))?;
    }
    if s.output.trajectories_csv {
        art.bytes("trajectories.csv", trajectories_csv(setup.dom.dim(), eq.flow.trajectories()).as_bytes())?;
    }
    if s.output.ensemble_csv {
        art.bytes("ensemble_t0.csv", ensemble_csv(&setup.m0).as_bytes())?;
        art.bytes("ensemble_final.csv", ensemble_csv(&eq.flow.pushforward(frame.horizon())?).as_bytes())?;
    }
    Ok((m, stalled))
}

/// Rebuilds a manifest for `scenario` (already resolved) and runs it.
pub fn run(scenario: &Scenario, mode: Mode, threads: usize, allow_eps_override: bool, out: &Path) -> Result<RunOutcome> {
    let manifest = RunManifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        mode,
        seed: scenario.seed,
        threads,
        allow_eps_override,
        scenario: scenario.clone(),
    };
    run_manifest(&manifest, out)
}

/// Runs a manifest into `out`, which must not exist yet. Artifacts are written to a staging
/// directory beside `out` and renamed into place only when every file is complete.
pub fn run_manifest(manifest: &RunManifest, out: &Path) -> Result<RunOutcome> {
    let mut scenario = manifest.scenario.clone();
    scenario.seed = manifest.seed;
    let scenario = scenario.resolve(ResolveOptions { allow_eps_override: manifest.allow_eps_override })?;
    if out.exists() {
        return Err(MfgError::io(out, std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory already exists")));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| MfgError::io(&parent, e))?;
    let stage = tempfile::Builder::new().prefix(".mfg-stage-").tempdir_in(&parent).map_err(|e| MfgError::io(&parent, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(manifest.threads)
        .build()
        .map_err(|e| MfgError::InvalidArgument(format!("thread pool: {e}")))?;
    let threads = pool.current_num_threads();
    let manifest = RunManifest { threads, scenario: scenario.clone(), ..manifest.clone() };
    let mut tm = Timings::default();
    let mut art = Artifacts { dir: stage.path(), names: Vec::new() };
    let (body, stalled) = pool.install(|| -> Result<(Value, bool)> {
        let setup = tm.time("setup", || Setup::new(&scenario))?;
        match manifest.mode {
            Mode::SolveOcp => Ok((solve_ocp(&scenario, &setup, &mut art, &mut tm, false)?, false)),
            Mode::Audit => Ok((solve_ocp(&scenario, &setup, &mut art, &mut tm, true)?, false)),
            Mode::PenaltyStudy => Ok((penalty_study(&scenario, &setup, &mut art, &mut tm)?, false)),
            Mode::Equilibrium => equilibrium(&scenario, &setup, &mut art, &mut tm),
        }
    })?;
    let mut names = art.names.clone();
    names.sort();
    let metrics = json!({
        "mode": manifest.mode,
        "seed": manifest.seed,
        "results": body,
        "artifacts": names,
    });
    let manifest_json = serde_json::to_value(&manifest).map_err(|e| MfgError::Format(e.to_string()))?;
    write_json(&stage.path().join("manifest.json"), &manifest_json)?;
    write_json(&stage.path().join("metrics.json"), &metrics)?;
    write_json(&stage.path().join("timings.json"), &json!({ "seconds": tm.0, "threads": threads }))?;
    let staged = stage.keep();
    if let Err(e) = std::fs::rename(&staged, out) {
        let _ = std::fs::remove_dir_all(&staged);
        return Err(MfgError::io(out, e));
    }
    Ok(RunOutcome { dir: out.to_path_buf(), metrics, stalled })
}
