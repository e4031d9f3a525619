//! Optimal trajectories from the normalized-gradient feedback, and their audits.

use crate::congestion::SpeedField;
use crate::error::{MfgError, Result};
use crate::hjb::{feedback, Constraint, ValueField};
use crate::{Point, Scalar};

/// Sampled trajectory: `positions[i]` at `t0 + i dt`, `controls[i]` applied on the following step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    t0: T,
    dt: T,
    positions: Vec<Point<T>>,
    controls: Vec<Point<T>>,
    tau: Option<T>,
}

impl<T: Scalar> Trajectory<T> {
    /// Trajectory resting at `x` from `t0` on, already arrived.
    pub fn resting(t0: T, dt: T, x: Point<T>) -> Self {
        Self { t0, dt, positions: vec![x], controls: vec![Point::zero()], tau: Some(T::zero()) }
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn start(&self) -> Point<T> {
        self.positions[0]
    }

    pub fn positions(&self) -> &[Point<T>] {
        &self.positions
    }

    pub fn controls(&self) -> &[Point<T>] {
        &self.controls
    }

    pub fn sample_time(&self, i: usize) -> T {
        self.t0 + T::of(i) * self.dt
    }

    /// Arrival time relative to `t0`; `None` if the target was not reached.
    pub fn tau(&self) -> Option<T> {
        self.tau
    }

    pub fn arrival_point(&self) -> Point<T> {
        *self.positions.last().expect("nonempty")
    }

    /// Time of the last sample.
    pub fn end_time(&self) -> T {
        self.sample_time(self.positions.len() - 1)
    }

    /// `gamma(t)`: constant before `t0` and after the last sample, linear in between.
    pub fn position_at(&self, t: T) -> Point<T> {
        if t <= self.t0 {
            return self.positions[0];
        }
        let s = (t - self.t0) / self.dt;
        let i = s.floor().to_usize().unwrap_or(usize::MAX);
        if i >= self.positions.len() - 1 {
            return self.arrival_point();
        }
        let f = s - T::of(i);
        self.positions[i] + (self.positions[i + 1] - self.positions[i]) * f
    }

    /// Whether `gamma(t)` lies strictly between the start and the arrival.
    pub fn in_transit(&self, t: T) -> bool {
        let end = match self.tau {
            Some(tau) => self.t0 + tau,
            None => T::infinity(),
        };
        t > self.t0 && t < end
    }
}

/// Failed integration, with the trajectory computed so far.
#[derive(Debug)]
pub struct IntegrationError<T> {
    pub partial: Trajectory<T>,
    pub error: MfgError,
}

impl<T: Scalar> std::fmt::Display for IntegrationError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.partial.positions.len() - 1)
    }
}

impl<T: Scalar> std::error::Error for IntegrationError<T> {}

impl<T> From<IntegrationError<T>> for MfgError {
    fn from(e: IntegrationError<T>) -> Self {
        e.error
    }
}

/// Integrates the optimal feedback `x' = -k grad^ phi` from `(t0, x0)` with steps of `dt_traj`.
pub fn integrate<T: Scalar>(
    phi: &ValueField<T>,
    k: &SpeedField<T>,
    t0: T,
    x0: Point<T>,
) -> std::result::Result<Trajectory<T>, IntegrationError<T>> {
    integrate_with(phi, k, t0, x0, |t, x| feedback(phi, k, t, x))
}

/// Same stepping and arrival rule as [`integrate`] with an arbitrary control law.
pub fn integrate_with<T: Scalar>(
    phi: &ValueField<T>,
    k: &SpeedField<T>,
    t0: T,
    x0: Point<T>,
    mut control: impl FnMut(T, Point<T>) -> Result<Point<T>>,
) -> std::result::Result<Trajectory<T>, IntegrationError<T>> {
    let dt = phi.params().dt_traj;
    let dom = phi.domain();
    let tgt = phi.target();
    let mut traj = Trajectory { t0, dt, positions: vec![x0], controls: Vec::new(), tau: None };
    let fail = |mut traj: Trajectory<T>, error: MfgError| {
        traj.controls.push(Point::zero());
        Err(IntegrationError { partial: traj, error })
    };
    if dom.signed_distance(x0) > phi.params().dx {
        let sd = dom.signed_distance(x0);
        let e = MfgError::BandViolation { x: x0.x.as_f64(), y: x0.y.as_f64(), sd: sd.as_f64(), band: phi.params().dx.as_f64() };
        return fail(traj, e);
    }
    let rho = k.k_max() * dt;
    let d0 = tgt.distance(x0);
    if phi.in_target(x0) || d0 <= rho {
        let k0 = phi.speed(k, t0, x0);
        traj.tau = Some(if phi.in_target(x0) { T::zero() } else { d0 / k0 });
        traj.controls.push(Point::zero());
        return Ok(traj);
    }
    let limit = phi.horizon();
    let (mut t, mut x, mut d) = (t0, x0, d0);
    loop {
        if t - t0 > limit {
            let e = MfgError::Unreached { horizon: limit.as_f64(), x: x0.x.as_f64(), y: x0.y.as_f64() };
            return fail(traj, e);
        }
        let u = match control(t, x) {
            Ok(u) => u,
            Err(e) => return fail(traj, e),
        };
        let kx = phi.speed(k, t, x);
        let mut next = x + u * (kx * dt);
        if matches!(phi.constraint(), Constraint::State) && dom.signed_distance(next) > T::zero() {
            next = dom.project_to_domain(next).ok().or_else(|| dom.nearest_point(next)).unwrap_or(x);
        }
        traj.controls.push(u);
        traj.positions.push(next);
        let d_next = tgt.distance(next);
        if d_next <= rho {
            let tau = if d - d_next > T::epsilon() * (T::one() + d) {
                (t - t0) + dt * d / (d - d_next)
            } else {
                (t + dt - t0) + d_next / kx.max(k.k_min() * T::lit(1e-12))
            };
            traj.tau = Some(tau);
            traj.controls.push(Point::zero());
            return Ok(traj);
        }
        t = t + dt;
        x = next;
        d = d_next;
    }
}

/// Integrates from every start in parallel.
pub fn integrate_many<T: Scalar>(
    phi: &ValueField<T>,
    k: &SpeedField<T>,
    t0: T,
    starts: &[Point<T>],
) -> Vec<std::result::Result<Trajectory<T>, IntegrationError<T>>> {
    use rayon::prelude::*;
    starts.par_iter().map(|x| integrate(phi, k, t0, *x)).collect()
}

/// `max |phi(t, gamma(t)) + (t - t0) - phi(t0, x0)|` over samples up to the arrival.
pub fn dpp_audit<T: Scalar>(traj: &Trajectory<T>, phi: &ValueField<T>) -> T {
    let v0 = phi.eval(traj.t0, traj.start());
    let end = traj.tau.map(|tau| traj.t0 + tau);
    let mut worst = T::zero();
    for (i, x) in traj.positions.iter().enumerate() {
        let t = traj.sample_time(i);
        if end.is_some_and(|e| t > e) {
            break;
        }
        let v = phi.eval(t, *x);
        worst = worst.max((v + (t - traj.t0) - v0).abs());
    }
    worst
}

/// `max |u_{i+1} - u_i| / dt` over steps strictly inside the trajectory (first and last step excluded).
pub fn control_regularity<T: Scalar>(traj: &Trajectory<T>) -> T {
    let steps = traj.positions.len().saturating_sub(1);
    if steps < 4 {
        return T::zero();
    }
    (1..steps - 2).map(|i| (traj.controls[i + 1] - traj.controls[i]).norm() / traj.dt).fold(T::zero(), T::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DomainSpec, TargetSpec};
    use crate::grid::SpaceGrid;
    use crate::hjb::{solve_value, SolverParams};

    fn line(dx: f64) -> (ValueField<f64>, SpeedField<f64>) {
        let dom = DomainSpec::interval(0.0, 1.0).unwrap();
        let tgt = TargetSpec::points(vec![Point::on_line(0.0)]);
        let k = SpeedField::constant(SpaceGrid::covering(&dom, dx, 2).unwrap(), 1.0).unwrap();
        let phi = solve_value(&k, &dom, &tgt, Constraint::State, &SolverParams::new(1, dx, 1.0)).unwrap();
        (phi, k)
    }

    fn disk(dx: f64, c: f64) -> (ValueField<f64>, SpeedField<f64>) {
        let dom = DomainSpec::disk(Point::new(0.0, 0.0), 1.0).unwrap();
        let tgt = TargetSpec::boundary(&dom);
        let k = SpeedField::constant(SpaceGrid::covering(&dom, dx, 2).unwrap(), c).unwrap();
        let phi = solve_value(&k, &dom, &tgt, Constraint::State, &SolverParams::new(2, dx, c)).unwrap();
        (phi, k)
    }

    #[test]
    fn start_on_target_rests() {
        let (phi, k) = line(0.01);
        let tr = integrate(&phi, &k, 0.0, Point::on_line(0.0)).unwrap();
        assert_eq!(tr.tau(), Some(0.0));
        assert_eq!(tr.position_at(3.0), Point::on_line(0.0));
        assert_eq!(dpp_audit(&tr, &phi), 0.0);
    }

    #[test]
    fn line_arrival_time_and_monotone_path() {
        let dx = 0.01;
        let (phi, k) = line(dx);
        let tr = integrate(&phi, &k, 0.0, Point::on_line(0.5)).unwrap();
        let tau = tr.tau().unwrap();
        assert!((tau - 0.5).abs() <= 2.0 * (dx + phi.params().dt_traj), "tau {tau}");
        assert!(tr.positions().windows(2).all(|w| w[1].x < w[0].x));
        assert!(dpp_audit(&tr, &phi) <= 2.0 * (dx + phi.params().dt_traj));
        assert!(control_regularity(&tr) < 1e-12);
    }

    #[test]
    fn wrong_direction_is_detected() {
        let (phi, k) = line(0.01);
        let res = integrate_with(&phi, &k, 0.0, Point::on_line(0.5), |_, _| Ok(Point::on_line(1.0)));
        let err = res.unwrap_err();
        assert!(matches!(err.error, MfgError::Unreached { .. }));
        assert!(dpp_audit(&err.partial, &phi) >= 0.1);
        assert!(err.partial.positions().iter().all(|p| p.x <= 1.0 + 1e-12));
    }

    #[test]
    fn disk_radial_path() {
        let c = 0.5;
        let dx = 0.02;
        let (phi, k) = disk(dx, c);
        let x0 = Point::new(0.3 * 0.6, 0.3 * 0.8);
        let tr = integrate(&phi, &k, 0.0, x0).unwrap();
        let tau = tr.tau().unwrap();
        let tol = 3.0 * (dx + phi.params().dt_traj);
        assert!((tau - 0.7 / c).abs() <= tol, "tau {tau}");
        let dir = x0.normalized().unwrap();
        for p in tr.positions() {
            let across = p.x * dir.y - p.y * dir.x;
            assert!(across.abs() <= 2.0 * dx, "{p:?}");
        }
        let speed_ok = tr.positions().windows(2).all(|w| w[0].dist(w[1]) <= k.k_max() * tr.dt() * (1.0 + 1e-12));
        assert!(speed_ok);
        let cell = std::f64::consts::TAU / phi.params().n_dir as f64;
        // probes that reach the target saturate, so only check outside that reach
        let reach = phi.params().h_probe.iter().fold(0.0f64, |a, &h| a.max(h)) * c;
        for (u, p) in tr.controls().iter().zip(tr.positions()) {
            if 1.0 - p.norm() > reach + dx {
                assert!(u.dot(dir).clamp(-1.0, 1.0).acos() <= cell, "{u:?} at {p:?}");
            }
        }
        // jitter stays within one direction cell per step
        assert!(control_regularity(&tr) <= 2.0 * cell / tr.dt(), "{}", control_regularity(&tr));
    }

    #[test]
    fn restart_reproduces_tail() {
        let (phi, k) = disk(0.02, 1.0);
        let tr = integrate(&phi, &k, 0.0, Point::new(-0.2, 0.35)).unwrap();
        let t1 = tr.sample_time(10);
        let tail = integrate(&phi, &k, t1, tr.position_at(t1)).unwrap();
        assert!((tail.tau().unwrap() + t1 - tr.tau().unwrap()).abs() <= 1e-9);
        for (i, p) in tail.positions().iter().enumerate() {
            assert!(p.dist(tr.positions()[10 + i]) <= 1e-9);
        }
    }
}
