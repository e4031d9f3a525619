//! Best response and damped fixed-point iteration for Lagrangian equilibria.

use crate::congestion::{CongestionLaw, SpeedField};
use crate::error::{MfgError, Result};
use crate::geometry::{DomainSpec, TargetSpec};
use crate::grid::SpaceGrid;
use crate::hjb::{default_horizon, horizon_steps, solve_value, time_bound, Constraint, SolverParams, ValueField};
use crate::trajectories::{integrate_many, Trajectory};
use crate::transport::{w1, FlowMeasure, ParticleEnsemble};
use crate::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Averaging weights `lambda_n` of the damped iteration, `n = 0, 1, ...`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule<T> {
    /// `lambda_n = 1 / (n + 1)`: the iterate is the running mean of all best-response speeds.
    Harmonic,
    Constant { lambda: T },
}

impl<T: Scalar> Schedule<T> {
    pub fn lambda(&self, n: usize) -> T {
        match *self {
            Schedule::Harmonic => T::one() / T::of(n + 1),
            Schedule::Constant { lambda } => lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumConfig<T> {
    pub max_iter: usize,
    pub schedule: Schedule<T>,
    pub tol_disp: T,
    pub tol_opt: T,
    /// Iterations without a new smallest displacement before the run is declared stalled.
    pub patience: usize,
    pub n_particles: usize,
    /// Number of evenly spaced times in `[0, T_hor]` at which displacements are measured.
    pub probe_times: usize,
}

impl<T: Scalar> EquilibriumConfig<T> {
    pub fn new(n_particles: usize) -> Self {
        Self {
            max_iter: 30,
            schedule: Schedule::Harmonic,
            tol_disp: T::lit(1e-3),
            tol_opt: T::lit(0.02),
            patience: 5,
            n_particles,
            probe_times: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MfgError::InvalidArgument(m.into()));
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if let Schedule::Constant { lambda } = self.schedule {
            if !(lambda > T::zero() && lambda <= T::one()) {
                return bad("lambda must lie in (0, 1]");
            }
        }
        if !(self.tol_disp > T::zero() && self.tol_opt > T::zero()) {
            return bad("tolerances must be positive");
        }
        if self.patience == 0 || self.probe_times < 2 || self.n_particles == 0 {
            return bad("patience, n_particles must be positive and probe_times at least 2");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Stalled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerances,
    Patience,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord<T> {
    pub iteration: usize,
    pub lambda: T,
    /// `sup_t W1(m_t^(n-1), m_t^(n))` over the probe times.
    pub displacement: T,
    /// Optimality residual of the new flow against its own induced speed.
    pub residual: T,
    /// `max (|gamma'| - k_Q)_+` along the new flow.
    pub speed_excess: T,
    pub mean_arrival: T,
    pub unreached: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumReport<T> {
    pub iterations: Vec<IterationRecord<T>>,
    pub verdict: Verdict,
    pub stop_reason: StopReason,
    pub artifacts: Vec<String>,
}

impl<T: Scalar> EquilibriumReport<T> {
    pub fn displacements(&self) -> Vec<T> {
        self.iterations.iter().map(|r| r.displacement).collect()
    }

    pub fn residuals(&self) -> Vec<T> {
        self.iterations.iter().map(|r| r.residual).collect()
    }
}

/// Final state of [`fixed_point`].
#[derive(Clone, Debug)]
pub struct Equilibrium<T> {
    pub flow: FlowMeasure<T>,
    /// `k_Q` induced by `flow`.
    pub speed: SpeedField<T>,
    /// Value function for `k_Q`.
    pub value: ValueField<T>,
    pub report: EquilibriumReport<T>,
}

/// What an observer of [`fixed_point_with`] sees after each iteration.
pub struct IterationView<'a, T> {
    pub iteration: usize,
    pub flow: &'a FlowMeasure<T>,
    /// Speed the flow responded to.
    pub speed: &'a SpeedField<T>,
    pub value: &'a ValueField<T>,
}

/// Time layout shared by every speed field and flow of one game.
#[derive(Clone, Debug)]
pub struct TimeFrame<T> {
    pub grid: SpaceGrid<T>,
    pub dt: T,
    pub steps: usize,
}

impl<T: Scalar> TimeFrame<T> {
    pub fn new(law: &CongestionLaw<T>, dom: &DomainSpec<T>, tgt: &TargetSpec<T>, params: &SolverParams<T>) -> Result<Self> {
        let t_bound = time_bound(dom, tgt, law.k_min(), params.dx)?;
        let steps = horizon_steps(default_horizon(params, t_bound), params.dt);
        Ok(Self { grid: SpaceGrid::covering(dom, params.dx, 2)?, dt: params.dt, steps })
    }

    pub fn horizon(&self) -> T {
        T::of(self.steps) * self.dt
    }

    /// `m_{t_j}` for `t_j = j dt`, `j = 0..=steps`.
    pub fn timeline(&self, flow: &FlowMeasure<T>) -> Result<Vec<ParticleEnsemble<T>>> {
        flow.timeline(self.dt, self.steps + 1)
    }

    pub fn free_flow(&self, law: &CongestionLaw<T>) -> Result<SpeedField<T>> {
        SpeedField::new(self.grid.clone(), self.dt, vec![vec![law.k_max(); self.grid.len()]], law.k_min(), law.k_max())
    }

    pub fn induced_speed(&self, law: &CongestionLaw<T>, flow: &FlowMeasure<T>) -> Result<SpeedField<T>> {
        Ok(law.freeze(&self.timeline(flow)?, self.dt, &self.grid)?.compact())
    }
}

/// Optimal trajectories from every particle of `m0` for the frozen speed `k`.
///
/// Particles that do not reach the target within the horizon keep their partial
/// trajectory and carry no arrival time.
pub fn best_response_to<T: Scalar>(
    k: &SpeedField<T>,
    m0: &ParticleEnsemble<T>,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    params: &SolverParams<T>,
    horizon: T,
) -> Result<(FlowMeasure<T>, ValueField<T>)> {
    let phi = solve_value(k, dom, tgt, constraint, params)?;
    let mut trajs = Vec::with_capacity(m0.len());
    for r in integrate_many(&phi, k, T::zero(), m0.positions()) {
        match r {
            Ok(t) => trajs.push(t),
            Err(e) if matches!(e.error, MfgError::Unreached { .. }) => trajs.push(e.partial),
            Err(e) => return Err(e.error),
        }
    }
    let flow = FlowMeasure::new(m0.dim(), trajs, m0.weights().to_vec(), horizon)?;
    Ok((flow, phi))
}

/// Best response of `m0` to the speed induced by the measure timeline `m_{t_j}`, `t_j = j dt`.
pub fn best_response<T: Scalar>(
    timeline: &[ParticleEnsemble<T>],
    law: &CongestionLaw<T>,
    m0: &ParticleEnsemble<T>,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    params: &SolverParams<T>,
) -> Result<FlowMeasure<T>> {
    let frame = TimeFrame::new(law, dom, tgt, params)?;
    if timeline.len() < frame.steps + 1 {
        return Err(MfgError::Mismatch(format!(
            "timeline has {} slices but the horizon needs {}",
            timeline.len(),
            frame.steps + 1
        )));
    }
    let k = law.freeze(timeline, frame.dt, &frame.grid)?.compact();
    Ok(best_response_to(&k, m0, dom, tgt, constraint, params, frame.horizon())?.0)
}

fn arrival<T: Scalar>(g: &Trajectory<T>, horizon: T) -> T {
    g.tau().unwrap_or(horizon)
}

/// `max_i (tau_i - phi(0, gamma_i(0)))_+`, unreached particles counted with `tau_i = T_hor`.
pub fn optimality_gap<T: Scalar>(flow: &FlowMeasure<T>, phi: &ValueField<T>) -> T {
    flow.trajectories()
        .par_iter()
        .map(|g| {
            let v = phi.eval(T::zero(), g.start());
            if v.is_finite() {
                (arrival(g, flow.horizon()) - v).max(T::zero())
            } else {
                T::infinity()
            }
        })
        .reduce(T::zero, T::max)
}

/// `max (|x_{i+1} - x_i| / dt - k(t_i, x_i))_+` over all steps before arrival.
pub fn speed_excess<T: Scalar>(flow: &FlowMeasure<T>, k: &SpeedField<T>) -> T {
    flow.trajectories()
        .par_iter()
        .map(|g| {
            g.positions()
                .windows(2)
                .enumerate()
                .map(|(i, w)| (w[0].dist(w[1]) / g.dt() - k.eval(g.sample_time(i), w[0])).max(T::zero()))
                .fold(T::zero(), T::max)
        })
        .reduce(T::zero, T::max)
}

/// Optimality residual of `flow` against the speed it induces: freezes `k_Q`, solves
/// `phi_Q` and returns [`optimality_gap`].
pub fn equilibrium_residual<T: Scalar>(
    flow: &FlowMeasure<T>,
    law: &CongestionLaw<T>,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    params: &SolverParams<T>,
) -> Result<T> {
    let frame = TimeFrame::new(law, dom, tgt, params)?;
    let k = frame.induced_speed(law, flow)?;
    let phi = solve_value(&k, dom, tgt, constraint, params)?;
    Ok(optimality_gap(flow, &phi))
}

/// `sup_p W1(e_{t_p} # a, e_{t_p} # b)` over `probes` evenly spaced times in `[0, horizon]`.
pub fn displacement<T: Scalar>(a: &FlowMeasure<T>, b: &FlowMeasure<T>, probes: usize) -> Result<T> {
    let horizon = a.horizon().min(b.horizon());
    let times: Vec<T> = (0..probes.max(2)).map(|p| horizon * T::of(p) / T::of(probes.max(2) - 1)).collect();
    let values: Result<Vec<T>> = times
        .par_iter()
        .map(|&t| {
            let (ma, mb) = (a.pushforward(t)?, b.pushforward(t)?);
            if ma.positions() == mb.positions() && ma.weights() == mb.weights() {
                return Ok(T::zero());
            }
            w1(&ma, &mb)
        })
        .collect();
    Ok(values?.into_iter().fold(T::zero(), T::max))
}

/// Damped fixed-point search started from free flow: `k^(n) = (1 - lambda) k^(n-1) + lambda k_{Q_{n-1}}`,
/// `Q_n` the best response to `k^(n)`.
pub fn fixed_point<T: Scalar>(
    m0: &ParticleEnsemble<T>,
    law: &CongestionLaw<T>,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    config: &EquilibriumConfig<T>,
    params: &SolverParams<T>,
) -> Result<Equilibrium<T>> {
    fixed_point_with(m0, law, dom, tgt, constraint, config, params, |_| Ok(Vec::new()))
}

/// [`fixed_point`] calling `observe` after every iteration; the returned names are
/// appended to the report's artifact index.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_with<T: Scalar>(
    m0: &ParticleEnsemble<T>,
    law: &CongestionLaw<T>,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    config: &EquilibriumConfig<T>,
    params: &SolverParams<T>,
    mut observe: impl FnMut(&IterationView<'_, T>) -> Result<Vec<String>>,
) -> Result<Equilibrium<T>> {
    config.validate()?;
    if m0.dim() != dom.dim() {
        return Err(MfgError::Mismatch("initial measure and domain dimensions differ".into()));
    }
    let frame = TimeFrame::new(law, dom, tgt, params)?;
    let horizon = frame.horizon();
    let mut k = frame.free_flow(law)?;
    let (mut flow, _) = best_response_to(&k, m0, dom, tgt, constraint, params, horizon)?;
    let mut k_q = frame.induced_speed(law, &flow)?;
    let mut records = Vec::new();
    let mut artifacts = Vec::new();
    let mut best = T::infinity();
    let mut since_best = 0;
    for it in 1..=config.max_iter {
        let lambda = config.schedule.lambda(it - 1);
        k = k.blend(&k_q, lambda)?.compact();
        let (next, phi) = best_response_to(&k, m0, dom, tgt, constraint, params, horizon)?;
        let disp = displacement(&flow, &next, config.probe_times)?;
        let k_next = frame.induced_speed(law, &next)?;
        let phi_q = if k_next == k { phi.clone() } else { solve_value(&k_next, dom, tgt, constraint, params)? };
        let n_traj = T::of(next.trajectories().len());
        let mean_arrival = next.trajectories().iter().zip(next.weights()).map(|(g, w)| arrival(g, horizon) * *w).sum::<T>();
        records.push(IterationRecord {
            iteration: it,
            lambda,
            displacement: disp,
            residual: optimality_gap(&next, &phi_q),
            speed_excess: speed_excess(&next, &k_next),
            mean_arrival: if n_traj > T::zero() { mean_arrival } else { T::zero() },
            unreached: next.trajectories().iter().filter(|g| g.tau().is_none()).count(),
        });
        artifacts.extend(observe(&IterationView { iteration: it, flow: &next, speed: &k, value: &phi })?);
        flow = next;
        k_q = k_next;
        let rec = records.last().expect("just pushed");
        let stop = if rec.displacement <= config.tol_disp && rec.residual <= config.tol_opt {
            Some((Verdict::Converged, StopReason::Tolerances))
        } else {
            if disp < best {
                best = disp;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if since_best >= config.patience {
                Some((Verdict::Stalled, StopReason::Patience))
            } else if it == config.max_iter {
                Some((Verdict::Stalled, StopReason::MaxIterations))
            } else {
                None
            }
        };
        if let Some((verdict, stop_reason)) = stop {
            let value = if phi_q.slices().len() == phi.slices().len() && k_q == k { phi } else { phi_q };
            let report = EquilibriumReport { iterations: records, verdict, stop_reason, artifacts };
            return Ok(Equilibrium { flow, speed: k_q, value, report });
        }
    }
    unreachable!("the last iteration always stops")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congestion::{Kernel, KernelProfile, Weight};
    use crate::hjb::solve_value;
    use crate::trajectories::integrate;
    use crate::Point;
    use approx::assert_abs_diff_eq;

    fn line() -> (DomainSpec<f64>, TargetSpec<f64>, SolverParams<f64>) {
        let dom = DomainSpec::interval(0.0, 1.0).unwrap();
        let tgt = TargetSpec::points(vec![Point::on_line(0.0)]);
        let params = SolverParams::new(1, 0.01, 1.0);
        (dom, tgt, params)
    }

    fn ensemble(xs: &[f64]) -> ParticleEnsemble<f64> {
        ParticleEnsemble::uniform(1, xs.iter().map(|&x| Point::on_line(x)).collect()).unwrap()
    }

    fn weak_law(alpha: f64) -> CongestionLaw<f64> {
        CongestionLaw::new(Kernel::new(KernelProfile::Tent, 0.1).unwrap(), Weight::Constant(1.0), 0.5, 1.0, alpha).unwrap()
    }

    #[test]
    fn schedule_values() {
        let h = Schedule::<f64>::Harmonic;
        assert_eq!(h.lambda(0), 1.0);
        assert_eq!(h.lambda(3), 0.25);
        assert_eq!(Schedule::Constant { lambda: 0.3 }.lambda(7), 0.3);
        let mut c = EquilibriumConfig::<f64>::new(10);
        c.schedule = Schedule::Constant { lambda: 0.0 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn no_interaction_converges_at_first_iteration() {
        let (dom, tgt, params) = line();
        let m0 = ensemble(&[0.3, 0.45, 0.6, 0.9]);
        let law = CongestionLaw::constant(1.0).unwrap();
        let eq = fixed_point(&m0, &law, &dom, &tgt, Constraint::State, &EquilibriumConfig::new(4), &params).unwrap();
        assert_eq!(eq.report.verdict, Verdict::Converged);
        assert_eq!(eq.report.iterations.len(), 1);
        assert_eq!(eq.report.iterations[0].displacement, 0.0);
        assert!(eq.report.iterations[0].residual <= 3.0 * (params.dx + params.dt_traj));
        for (g, x) in eq.flow.trajectories().iter().zip([0.3, 0.45, 0.6, 0.9]) {
            assert!((g.tau().unwrap() - x).abs() <= 2.0 * params.dx);
        }
    }

    #[test]
    fn best_response_ignores_timeline_without_interaction() {
        let (dom, tgt, params) = line();
        let law = CongestionLaw::constant(1.0).unwrap();
        let m0 = ensemble(&[0.2, 0.7]);
        let frame = TimeFrame::new(&law, &dom, &tgt, &params).unwrap();
        let crowd = vec![ensemble(&[0.1, 0.15]); frame.steps + 1];
        let alone = vec![ensemble(&[0.9]); frame.steps + 1];
        let a = best_response(&crowd, &law, &m0, &dom, &tgt, Constraint::State, &params).unwrap();
        let b = best_response(&alone, &law, &m0, &dom, &tgt, Constraint::State, &params).unwrap();
        assert_eq!(a.trajectories(), b.trajectories());
    }

    #[test]
    fn mass_on_target_stays_put() {
        let (dom, tgt, params) = line();
        let law = weak_law(0.5);
        let m0 = ensemble(&[0.0, 0.0]);
        let frame = TimeFrame::new(&law, &dom, &tgt, &params).unwrap();
        let tl = vec![m0.clone(); frame.steps + 1];
        let q = best_response(&tl, &law, &m0, &dom, &tgt, Constraint::State, &params).unwrap();
        for g in q.trajectories() {
            assert_eq!(g.tau(), Some(0.0));
            assert_eq!(g.position_at(0.5), Point::on_line(0.0));
        }
    }

    #[test]
    fn two_particle_response_matches_single_particle_solutions() {
        let (dom, tgt, params) = line();
        let law = weak_law(0.5);
        let m0 = ensemble(&[0.35, 0.8]);
        let frame = TimeFrame::new(&law, &dom, &tgt, &params).unwrap();
        let tl: Vec<_> = (0..=frame.steps).map(|j| ensemble(&[0.5 - 0.2 * (j as f64 * frame.dt).min(1.0), 0.5])).collect();
        let q = best_response(&tl, &law, &m0, &dom, &tgt, Constraint::State, &params).unwrap();
        let k = law.freeze(&tl, frame.dt, &frame.grid).unwrap();
        // independent oracle: arrival time of the leftward path x' = -k(t, x) on a fine time grid
        for (g, x0) in q.trajectories().iter().zip([0.35, 0.8]) {
            let (mut t, mut x, h) = (0.0, x0, 1e-4);
            while x > 0.0 {
                x -= h * k.eval(t, Point::on_line(x));
                t += h;
            }
            assert!((g.tau().unwrap() - t).abs() <= 3.0 * (params.dx + params.dt_traj), "{} vs {t}", g.tau().unwrap());
            let phi = solve_value(&k, &dom, &tgt, Constraint::State, &params).unwrap();
            let single = integrate(&phi, &k, 0.0, Point::on_line(x0)).unwrap();
            assert_eq!(&single, g);
        }
    }

    #[test]
    fn frozen_particle_has_large_residual() {
        let (dom, tgt, params) = line();
        let law = CongestionLaw::constant(1.0).unwrap();
        let frame = TimeFrame::new(&law, &dom, &tgt, &params).unwrap();
        let k = frame.free_flow(&law).unwrap();
        let phi = solve_value(&k, &dom, &tgt, Constraint::State, &params).unwrap();
        let r = crate::trajectories::integrate_with(&phi, &k, 0.0, Point::on_line(0.5), |_, _| Ok(Point::zero()));
        let stuck = r.unwrap_err().partial;
        let q = FlowMeasure::new(1, vec![stuck], vec![1.0], frame.horizon()).unwrap();
        let res = equilibrium_residual(&q, &law, &dom, &tgt, Constraint::State, &params).unwrap();
        assert!(res >= frame.horizon() - 0.5 - 2.0 * params.dx, "{res}");
    }

    #[test]
    fn weak_coupling_line_converges() {
        let (dom, tgt, params) = line();
        let law = weak_law(0.2);
        let m0 = ensemble(&(0..40).map(|i| 0.4 + 0.2 * (i as f64 + 0.5) / 40.0).collect::<Vec<_>>());
        let eq = fixed_point(&m0, &law, &dom, &tgt, Constraint::State, &EquilibriumConfig::new(40), &params).unwrap();
        assert_eq!(eq.report.verdict, Verdict::Converged, "{:?}", eq.report);
        let last = eq.report.iterations.last().unwrap();
        assert!(last.residual <= 0.02 && last.displacement <= 1e-3);
        assert_abs_diff_eq!(w1(&eq.flow.pushforward(0.0).unwrap(), &m0).unwrap(), 0.0);
    }

    #[test]
    fn determinism() {
        let (dom, tgt, params) = line();
        let law = weak_law(0.4);
        let m0 = ensemble(&[0.2, 0.3, 0.5, 0.55, 0.7]);
        let cfg = EquilibriumConfig::new(5);
        let a = fixed_point(&m0, &law, &dom, &tgt, Constraint::State, &cfg, &params).unwrap();
        let b = fixed_point(&m0, &law, &dom, &tgt, Constraint::State, &cfg, &params).unwrap();
        assert_eq!(a.report, b.report);
    }
}
