//! Discrete audits of a pair `(m, phi)` against the equations of the MFG system.

use crate::congestion::SpeedField;
use crate::error::{MfgError, Result};
use crate::geometry::{DomainSpec, TargetSpec};
use crate::hjb::{feedback, maximal_descent_directions, normalized_gradient, NormalizedGradient, ValueField};
use crate::transport::{w1, FlowMeasure, ParticleEnsemble};
use crate::{Point, Scalar};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `b(s) = exp(1 - 1 / (1 - s^2))` on `|s| < 1`, zero elsewhere. `b(0) = 1`.
fn bump<T: Scalar>(s: T) -> (T, T) {
    let q = T::one() - s * s;
    if q <= T::zero() {
        return (T::zero(), T::zero());
    }
    let b = (T::one() - T::one() / q).exp();
    (b, -b * T::two() * s / (q * q))
}

/// Separable bump `xi(t, x) = b((t - t_c) / w_t) b((x - c_x) / w_x) b((y - c_y) / w_y)`.
/// In one dimension the `y` factor is dropped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestFunction<T> {
    pub t_center: T,
    pub t_width: T,
    pub center: Point<T>,
    pub width: Point<T>,
}

impl<T: Scalar> TestFunction<T> {
    /// `(xi, d_t xi, grad xi)`.
    pub fn eval(&self, dim: usize, t: T, x: Point<T>) -> (T, T, Point<T>) {
        let (bt, dbt) = bump((t - self.t_center) / self.t_width);
        let (bx, dbx) = bump((x.x - self.center.x) / self.width.x);
        let (by, dby) = if dim == 1 { (T::one(), T::zero()) } else { bump((x.y - self.center.y) / self.width.y) };
        let xi = bt * bx * by;
        let grad = Point::new(bt * dbx * by / self.width.x, if dim == 1 { T::zero() } else { bt * bx * dby / self.width.y });
        (xi, dbt * bx * by / self.t_width, grad)
    }

    /// Radius of a disk containing the spatial support.
    pub fn support_radius(&self, dim: usize) -> T {
        if dim == 1 {
            self.width.x
        } else {
            self.width.norm()
        }
    }

    /// Rejects supports that reach `t = 0` or the target set.
    pub fn validate(&self, dim: usize, tgt: &TargetSpec<T>) -> Result<()> {
        if !(self.t_width > T::zero() && self.width.x > T::zero() && (dim == 1 || self.width.y > T::zero())) {
            return Err(MfgError::BadTestFunction("widths must be positive".into()));
        }
        if self.t_center - self.t_width <= T::zero() {
            return Err(MfgError::BadTestFunction(format!(
                "time support starts at {} <= 0",
                self.t_center - self.t_width
            )));
        }
        let gap = tgt.distance(self.center) - self.support_radius(dim);
        if gap <= T::zero() {
            return Err(MfgError::BadTestFunction(format!(
                "spatial support around ({}, {}) reaches the target",
                self.center.x, self.center.y
            )));
        }
        Ok(())
    }
}

/// Twelve bumps: three time windows over `(0, horizon)` times four spatial centres spread over
/// the part of the domain away from the target.
pub fn default_test_set<T: Scalar>(dom: &DomainSpec<T>, tgt: &TargetSpec<T>, horizon: T) -> Vec<TestFunction<T>> {
    let dim = dom.dim();
    let (lo, hi) = dom.bounding_box();
    let span = hi - lo;
    let w = if dim == 1 { span.x * T::lit(0.15) } else { span.x.min(span.y) * T::lit(0.2) };
    let width = if dim == 1 { Point::new(w, T::zero()) } else { Point::new(w, w) };
    let probe = TestFunction { t_center: T::one(), t_width: T::half(), center: Point::zero(), width };
    let reach = probe.support_radius(dim) * T::lit(1.05);
    let m = 13usize;
    let mut candidates = Vec::new();
    for i in 0..m {
        for j in 0..if dim == 1 { 1 } else { m } {
            let fx = (T::of(i) + T::half()) / T::of(m);
            let fy = (T::of(j) + T::half()) / T::of(m);
            let c = Point::new(lo.x + span.x * fx, if dim == 1 { T::zero() } else { lo.y + span.y * fy });
            if dom.signed_distance(c) < T::zero() && tgt.distance(c) > reach {
                candidates.push(c);
            }
        }
    }
    // farthest-point selection, seeded with the candidate farthest from the target
    let mut centers: Vec<Point<T>> = Vec::new();
    while centers.len() < 4 && !candidates.is_empty() {
        let pick = if centers.is_empty() {
            let mut best = 0;
            for (i, c) in candidates.iter().enumerate() {
                if tgt.distance(*c) > tgt.distance(candidates[best]) {
                    best = i;
                }
            }
            best
        } else {
            let gap = |c: &Point<T>| centers.iter().map(|q| q.dist(*c)).fold(T::infinity(), T::min);
            let mut best = 0;
            for (i, c) in candidates.iter().enumerate() {
                if gap(c) > gap(&candidates[best]) {
                    best = i;
                }
            }
            best
        };
        centers.push(candidates.swap_remove(pick));
    }
    let t_width = horizon * T::lit(0.15);
    let mut out = Vec::new();
    for f in [T::lit(0.2), T::lit(0.4), T::lit(0.6)] {
        for c in &centers {
            out.push(TestFunction { t_center: horizon * f, t_width, center: *c, width });
        }
    }
    out
}

/// `|int int d_t xi dm_t dt - int int grad xi . grad^ phi K dm_t dt|` for each test function, by
/// left-point quadrature along the trajectories on the `dt_traj` grid.
pub fn continuity_residual<T: Scalar>(
    flow: &FlowMeasure<T>,
    phi: &ValueField<T>,
    k: &SpeedField<T>,
    tests: &[TestFunction<T>],
) -> Result<Vec<T>> {
    let dim = flow.dim();
    for tf in tests {
        tf.validate(dim, phi.target())?;
    }
    let h = phi.params().dt_traj;
    let steps = (flow.horizon() / h).floor().to_usize().unwrap_or(0);
    let per_particle: Vec<Vec<T>> = flow
        .trajectories()
        .par_iter()
        .map(|g| {
            let mut acc = vec![T::zero(); tests.len()];
            for q in 0..steps {
                let t = T::of(q) * h;
                let x = g.position_at(t);
                let vals: Vec<(T, T, Point<T>)> = tests.iter().map(|tf| tf.eval(dim, t, x)).collect();
                if vals.iter().all(|v| v.0 == T::zero() && v.1 == T::zero()) {
                    continue;
                }
                // velocity prescribed by the equation, -K grad^ phi
                let v = if phi.in_target(x) {
                    Point::zero()
                } else {
                    feedback(phi, k, t, x).map(|u| u * phi.speed(k, t, x)).unwrap_or(Point::zero())
                };
                for (a, (_, dt_xi, grad)) in acc.iter_mut().zip(&vals) {
                    *a = *a + (*dt_xi + grad.dot(v)) * h;
                }
            }
            acc
        })
        .collect();
    let mut total = vec![T::zero(); tests.len()];
    for (acc, w) in per_particle.iter().zip(flow.weights()) {
        for (s, a) in total.iter_mut().zip(acc) {
            *s = *s + *a * *w;
        }
    }
    Ok(total.into_iter().map(|s| s.abs()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HjStats<T> {
    pub max: T,
    pub p95: T,
    /// `max / dx`, the constant of the first-order bound.
    pub max_over_dx: T,
    pub eligible: usize,
    pub excluded_kinks: usize,
    pub slices: usize,
}

fn checked_slices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * (n - 1) / (max - 1)).collect()
}

/// `|-d_t phi + |grad phi| k - 1|` at interior nodes whose axis stencils lie inside the domain,
/// away from the target and from kinks. A node is a kink when its one-sided differences
/// disagree by more than three times the median disagreement.
pub fn hj_residual<T: Scalar>(phi: &ValueField<T>, k: &SpeedField<T>) -> HjStats<T> {
    let g = phi.grid();
    let dx = g.dx();
    let dim = g.dim();
    let n = phi.n_slices();
    let slices = checked_slices(if n > 1 { n - 1 } else { 1 }, 24);
    let dom = phi.domain();
    let interior: Vec<usize> = (0..g.len())
        .filter(|&i| {
            let x = g.node(i);
            phi.active()[i] && !phi.target_nodes()[i] && dom.signed_distance(x) < T::zero() && {
                let nb: Vec<usize> = g.axis_neighbors(i).collect();
                nb.len() == 2 * dim
                    && nb.iter().all(|&j| phi.active()[j] && !phi.target_nodes()[j] && dom.signed_distance(g.node(j)) < T::zero())
            }
        })
        .collect();
    let mut residuals = Vec::new();
    let mut excluded = 0;
    for &j in &slices {
        let s = &phi.slices()[j];
        let t = phi.slice_time(j);
        let per_node: Vec<Option<(T, T)>> = interior
            .par_iter()
            .map(|&i| {
                let (ci, cj) = g.ij(i);
                let mut grad2 = T::zero();
                let mut kink = T::zero();
                for axis in 0..dim {
                    let (a, b) = if axis == 0 { ((ci - 1, cj), (ci + 1, cj)) } else { ((ci, cj - 1), (ci, cj + 1)) };
                    let (lo, hi) = (s[g.index(a.0, a.1)], s[g.index(b.0, b.1)]);
                    if !(lo.is_finite() && hi.is_finite() && s[i].is_finite()) {
                        return None;
                    }
                    let d = (hi - lo) / (T::two() * dx);
                    grad2 = grad2 + d * d;
                    kink = kink.max(((hi - s[i]) - (s[i] - lo)).abs() / dx);
                }
                let dphi_dt = if n > 1 { (phi.slices()[j + 1][i] - s[i]) / phi.dt() } else { T::zero() };
                let r = (-dphi_dt + grad2.sqrt() * phi.speed(k, t, g.node(i)) - T::one()).abs();
                Some((r, kink))
            })
            .collect();
        let valid: Vec<(T, T)> = per_node.into_iter().flatten().collect();
        let mut kinks: Vec<T> = valid.iter().map(|v| v.1).collect();
        kinks.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = kinks.get(kinks.len() / 2).copied().unwrap_or(T::zero());
        let limit = median * T::lit(3.0) + T::lit(1e-9);
        for (r, kink) in valid {
            if kink > limit {
                excluded += 1;
            } else {
                residuals.push(r);
            }
        }
    }
    residuals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let max = residuals.last().copied().unwrap_or(T::zero());
    let p95 = if residuals.is_empty() {
        T::zero()
    } else {
        residuals[((residuals.len() - 1) as f64 * 0.95).round() as usize]
    };
    HjStats { max, p95, max_over_dx: max / dx, eligible: residuals.len(), excluded_kinks: excluded, slices: slices.len() }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientAudit<T> {
    pub eligible: usize,
    pub checked: usize,
    /// Nodes whose maximal-descent set did not collapse to one direction.
    pub non_unique: usize,
    /// Nodes where `maximal_descent_directions` is literally one grid direction.
    pub singletons: usize,
    /// Largest angle between `-grad^ phi` and the finite-difference `-grad phi / |grad phi|`.
    pub max_angle: T,
    pub tolerance: T,
    pub within_tolerance: usize,
}

/// Compares the maximal-descent direction with centred differences of `phi(t, .)` at up to `n`
/// seeded random interior nodes where `phi` is smooth: away from the boundary and from the probe
/// reach of the target, with second differences at most `dx |grad phi| / 4`.
pub fn gradient_consistency<T: Scalar>(phi: &ValueField<T>, k: &SpeedField<T>, t: T, n: usize, seed: u64) -> Result<GradientAudit<T>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let g = phi.grid();
    let dx = g.dx();
    let dim = g.dim();
    let dom = phi.domain();
    let j = if phi.n_slices() == 1 { 0 } else { (t / phi.dt()).round().to_usize().unwrap_or(0).min(phi.n_slices() - 1) };
    let s = &phi.slices()[j];
    let h_max = phi.params().h_probe.iter().copied().fold(T::zero(), T::max);
    let clearance = h_max * k.k_max() + dx * T::two();
    let fd = |i: usize| -> Option<Point<T>> {
        let (ci, cj) = g.ij(i);
        let mut grad = [T::zero(); 2];
        let mut second = T::zero();
        for (axis, d) in grad.iter_mut().enumerate().take(dim) {
            let (a, b) = if axis == 0 { ((ci.checked_sub(1)?, cj), (ci + 1, cj)) } else { ((ci, cj.checked_sub(1)?), (ci, cj + 1)) };
            if b.0 >= g.shape().0 || b.1 >= g.shape().1 {
                return None;
            }
            let (ia, ib) = (g.index(a.0, a.1), g.index(b.0, b.1));
            if !(phi.active()[ia] && phi.active()[ib]) {
                return None;
            }
            let (lo, hi) = (s[ia], s[ib]);
            if !(lo.is_finite() && hi.is_finite() && s[i].is_finite()) {
                return None;
            }
            *d = (hi - lo) / (T::two() * dx);
            second = second.max((hi - s[i] * T::two() + lo).abs());
        }
        let v = Point::new(grad[0], grad[1]);
        (v.norm() > T::zero() && second <= T::lit(0.25) * dx * v.norm()).then_some(v)
    };
    let mut eligible: Vec<(usize, Point<T>)> = (0..g.len())
        .filter(|&i| phi.active()[i] && !phi.target_nodes()[i])
        .filter(|&i| {
            let x = g.node(i);
            dom.signed_distance(x) < -dx * T::lit(3.0) && phi.target().distance(x) > clearance
        })
        .filter_map(|i| fd(i).map(|v| (i, v)))
        .collect();
    let total = eligible.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(n);
    let tolerance = if dim == 1 { T::lit(1e-9) } else { T::PI() * T::two() / T::of(phi.params().n_dir) };
    let t = phi.slice_time(j);
    let results: Vec<Result<(Option<T>, bool)>> = eligible
        .par_iter()
        .map(|&(i, grad)| {
            let x = g.node(i);
            let singleton = maximal_descent_directions(phi, k, t, x)?.len() == 1;
            let angle = match normalized_gradient(phi, k, t, x)? {
                NormalizedGradient::Unique(u) => {
                    let e = grad.normalized().expect("nonzero gradient");
                    Some(u.dot(e).clamp_to(-T::one(), T::one()).acos())
                }
                NormalizedGradient::NonUnique(_) => None,
            };
            Ok((angle, singleton))
        })
        .collect();
    let mut audit = GradientAudit {
        eligible: total,
        checked: eligible.len(),
        non_unique: 0,
        singletons: 0,
        max_angle: T::zero(),
        tolerance,
        within_tolerance: 0,
    };
    for r in results {
        let (angle, singleton) = r?;
        audit.singletons += singleton as usize;
        match angle {
            Some(a) => {
                audit.max_angle = audit.max_angle.max(a);
                audit.within_tolerance += (a <= tolerance) as usize;
            }
            None => {
                audit.non_unique += 1;
                audit.max_angle = T::infinity();
            }
        }
    }
    Ok(audit)
}

/// `max |phi|` over target nodes and all time slices.
pub fn gamma_max_abs<T: Scalar>(phi: &ValueField<T>) -> T {
    let gamma = phi.target_nodes();
    phi.slices()
        .iter()
        .flat_map(|s| s.iter().zip(gamma).filter(|(_, g)| **g).map(|(v, _)| v.abs()))
        .fold(T::zero(), T::max)
}

/// Points of `dOmega \ Gamma` closest to the grid nodes near the boundary, at least `2 dx` from the target.
pub fn boundary_points<T: Scalar>(phi: &ValueField<T>) -> Vec<Point<T>> {
    let g = phi.grid();
    let dx = g.dx();
    let dom = phi.domain();
    let mut out: Vec<Point<T>> = Vec::new();
    for i in 0..g.len() {
        let x = g.node(i);
        let sd = dom.signed_distance(x);
        if !phi.active()[i] || sd < -dx * T::half() || sd > dx * T::half() {
            continue;
        }
        let Some(b) = dom.nearest_boundary_point(x) else { continue };
        if phi.target().distance(b) <= dx * T::two() {
            continue;
        }
        if out.iter().all(|q| q.dist(b) > dx * T::lit(0.25)) {
            out.push(b);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryProbe<T> {
    /// Smallest second-order one-sided estimate of `grad phi . n`,
    /// `(3 phi(x) - 4 phi(x - dx n) + phi(x - 2 dx n)) / (2 dx)`.
    pub worst: T,
    pub at: Point<T>,
    pub time: T,
    pub nodes: usize,
    /// Smallest first-order quotient `(phi(x) - phi(x - dx n)) / dx`; carries an `O(dx)` curvature bias.
    pub worst_first_order: T,
    /// Smallest raw difference `phi(x) - phi(x - dx n)`.
    pub worst_difference: T,
}

/// One-sided normal differences of `phi` at boundary points off the target; `None` when there
/// are no such points.
pub fn boundary_probe<T: Scalar>(phi: &ValueField<T>) -> Option<BoundaryProbe<T>> {
    let pts = boundary_points(phi);
    if pts.is_empty() {
        return None;
    }
    let dx = phi.grid().dx();
    let dom = phi.domain();
    let mut best: Option<BoundaryProbe<T>> = None;
    let (mut first, mut diff) = (T::infinity(), T::infinity());
    for j in checked_slices(phi.n_slices(), 24) {
        let t = phi.slice_time(j);
        for &b in &pts {
            let Ok(n) = dom.outward_normal(b) else { continue };
            let (v0, v1, v2) = (phi.eval(t, b), phi.eval(t, b - n * dx), phi.eval(t, b - n * (dx * T::two())));
            if !(v0.is_finite() && v1.is_finite() && v2.is_finite()) {
                continue;
            }
            first = first.min((v0 - v1) / dx);
            diff = diff.min(v0 - v1);
            let q = (T::lit(3.0) * v0 - T::lit(4.0) * v1 + v2) / (T::two() * dx);
            if best.as_ref().is_none_or(|p| q < p.worst) {
                best = Some(BoundaryProbe { worst: q, at: b, time: t, nodes: pts.len(), worst_first_order: first, worst_difference: diff });
            }
        }
    }
    best.map(|p| BoundaryProbe { worst_first_order: first, worst_difference: diff, ..p })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutflowNode<T> {
    pub at: Point<T>,
    /// Probe times at which some maximal-descent direction points strictly inward.
    pub flagged_times: usize,
    /// Largest `m_t` mass within the neighbourhood radius over the flagged times.
    pub max_mass: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutflowReport<T> {
    pub radius: T,
    pub quantum: T,
    pub probed_points: usize,
    pub probe_times: usize,
    pub nodes: Vec<OutflowNode<T>>,
    pub max_mass: T,
}

/// Mass of `m_t` near boundary points where `w . n < -tol_W` for some maximal-descent direction.
pub fn outflow_boundary_check<T: Scalar>(
    flow: &FlowMeasure<T>,
    phi: &ValueField<T>,
    k: &SpeedField<T>,
    probe_times: usize,
) -> Result<OutflowReport<T>> {
    let pts = boundary_points(phi);
    let dx = phi.grid().dx();
    let radius = dx * T::two();
    let tol = phi.params().tol_w;
    let dom = phi.domain();
    let horizon = flow.horizon().min(phi.horizon());
    let times: Vec<T> = (1..=probe_times).map(|p| horizon * T::of(p) / T::of(probe_times)).collect();
    let mut nodes: Vec<OutflowNode<T>> = Vec::new();
    for &t in &times {
        let m = flow.pushforward(t)?;
        let flagged: Vec<Option<(Point<T>, T)>> = pts
            .par_iter()
            .map(|&b| {
                let n = dom.outward_normal(b).ok()?;
                let w = maximal_descent_directions(phi, k, t, b).ok()?;
                w.iter().any(|u| u.dot(n) < -tol).then(|| (b, m.mass_within(b, radius)))
            })
            .collect();
        for (b, mass) in flagged.into_iter().flatten() {
            match nodes.iter_mut().find(|e| e.at == b) {
                Some(e) => {
                    e.flagged_times += 1;
                    e.max_mass = e.max_mass.max(mass);
                }
                None => nodes.push(OutflowNode { at: b, flagged_times: 1, max_mass: mass }),
            }
        }
    }
    let max_mass = nodes.iter().map(|e| e.max_mass).fold(T::zero(), T::max);
    let quantum = flow.weights().iter().copied().fold(T::zero(), T::max);
    Ok(OutflowReport { radius, quantum, probed_points: pts.len(), probe_times: times.len(), nodes, max_mass })
}

/// Smallest fraction, over probe times in `(0, T_hor]`, of `m_t` mass that is either strictly
/// between its start and its arrival or already arrived at the target.
pub fn upsilon_coverage<T: Scalar>(flow: &FlowMeasure<T>, phi: &ValueField<T>, k: &SpeedField<T>, probe_times: usize) -> T {
    let reach = k.k_max() * phi.params().dt_traj * (T::one() + T::lit(1e-9)) + phi.grid().dx() * T::lit(1e-9);
    let horizon = flow.horizon();
    (1..=probe_times)
        .map(|p| {
            let t = horizon * T::of(p) / T::of(probe_times);
            flow.trajectories()
                .iter()
                .zip(flow.weights())
                .filter(|(g, _)| match g.tau() {
                    Some(tau) => t < g.t0() + tau || phi.target().distance(g.position_at(t)) <= reach,
                    None => false,
                })
                .map(|(_, w)| *w)
                .sum::<T>()
        })
        .fold(T::infinity(), T::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuityEntry<T> {
    pub test: TestFunction<T>,
    pub residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualReport<T> {
    pub continuity: Vec<ContinuityEntry<T>>,
    pub continuity_max: T,
    pub hj: HjStats<T>,
    /// `None` when the boundary off the target is empty.
    pub boundary_probe: Option<BoundaryProbe<T>>,
    pub outflow: OutflowReport<T>,
    pub gamma_max_abs_phi: T,
    pub initial_w1_gap: T,
    pub upsilon_coverage: T,
}

/// Every audit at once, with `probe_times` time probes for the outflow and coverage checks.
pub fn audit<T: Scalar>(
    flow: &FlowMeasure<T>,
    m0: &ParticleEnsemble<T>,
    phi: &ValueField<T>,
    k: &SpeedField<T>,
    tests: &[TestFunction<T>],
    probe_times: usize,
) -> Result<ResidualReport<T>> {
    let values = continuity_residual(flow, phi, k, tests)?;
    let continuity_max = values.iter().copied().fold(T::zero(), T::max);
    Ok(ResidualReport {
        continuity: tests.iter().zip(values).map(|(t, r)| ContinuityEntry { test: *t, residual: r }).collect(),
        continuity_max,
        hj: hj_residual(phi, k),
        boundary_probe: boundary_probe(phi),
        outflow: outflow_boundary_check(flow, phi, k, probe_times)?,
        gamma_max_abs_phi: gamma_max_abs(phi),
        initial_w1_gap: w1(&flow.pushforward(T::zero())?, m0)?,
        upsilon_coverage: upsilon_coverage(flow, phi, k, probe_times),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congestion::CongestionLaw;
    use crate::equilibrium::{best_response_to, TimeFrame};
    use crate::grid::SpaceGrid;
    use crate::hjb::{solve_value, Constraint, SolverParams};
    use approx::assert_abs_diff_eq;

    struct LineCase {
        flow: FlowMeasure<f64>,
        m0: ParticleEnsemble<f64>,
        phi: ValueField<f64>,
        k: SpeedField<f64>,
        dom: DomainSpec<f64>,
        tgt: TargetSpec<f64>,
    }

    fn line_case(dx: f64, n: usize) -> LineCase {
        let dom = DomainSpec::interval(0.0, 1.0).unwrap();
        let tgt = TargetSpec::points(vec![Point::on_line(0.0)]);
        let params = SolverParams::new(1, dx, 1.0);
        let law = CongestionLaw::constant(1.0).unwrap();
        let frame = TimeFrame::new(&law, &dom, &tgt, &params).unwrap();
        let k = frame.free_flow(&law).unwrap();
        let m0 = ParticleEnsemble::uniform(1, (0..n).map(|i| Point::on_line(0.4 + 0.2 * (i as f64 + 0.5) / n as f64)).collect()).unwrap();
        let (flow, phi) = best_response_to(&k, &m0, &dom, &tgt, Constraint::State, &params, frame.horizon()).unwrap();
        LineCase { flow, m0, phi, k, dom, tgt }
    }

    #[test]
    fn bump_shape() {
        assert_eq!(bump(0.0f64), (1.0, 0.0));
        assert_eq!(bump(1.0f64), (0.0, 0.0));
        let h = 1e-6;
        for s in [-0.7, -0.2, 0.3, 0.9f64] {
            let fd = (bump(s + h).0 - bump(s - h).0) / (2.0 * h);
            assert_abs_diff_eq!(bump(s).1, fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn test_function_support_checks() {
        let tgt = TargetSpec::points(vec![Point::on_line(0.0)]);
        let ok = TestFunction { t_center: 0.5, t_width: 0.2, center: Point::on_line(0.5), width: Point::new(0.1, 0.0) };
        assert!(ok.validate(1, &tgt).is_ok());
        assert!(TestFunction { t_center: 0.1, ..ok }.validate(1, &tgt).is_err());
        assert!(TestFunction { center: Point::on_line(0.05), ..ok }.validate(1, &tgt).is_err());
    }

    #[test]
    fn default_set_is_admissible() {
        let disk = DomainSpec::disk(Point::new(0.0, 0.0), 1.0).unwrap();
        let arc = TargetSpec::Arc { center: Point::new(0.0, 0.0), radius: 1.0, theta_min: -0.5, theta_max: 0.5 };
        for (dom, tgt) in [
            (DomainSpec::interval(0.0, 1.0).unwrap(), TargetSpec::points(vec![Point::on_line(0.0)])),
            (disk.clone(), arc),
        ] {
            let set = default_test_set(&dom, &tgt, 2.0);
            assert_eq!(set.len(), 12);
            assert!(set.iter().all(|t| t.validate(dom.dim(), &tgt).is_ok()));
        }
    }

    #[test]
    fn arrived_mass_gives_zero_residual() {
        let c = line_case(0.01, 20);
        // all particles arrive before t = 0.61; support starts at 1.0
        let late = TestFunction { t_center: 1.2, t_width: 0.2, center: Point::on_line(0.5), width: Point::new(0.3, 0.0) };
        let r = continuity_residual(&c.flow, &c.phi, &c.k, &[late]).unwrap();
        assert_eq!(r[0], 0.0);
    }

    #[test]
    fn transported_interval_matches_closed_form() {
        // m_t uniform on [0.4 - t, 0.6 - t]: the weak form vanishes exactly
        let tf = TestFunction { t_center: 0.25, t_width: 0.2, center: Point::on_line(0.4), width: Point::new(0.2, 0.0) };
        let mut errs = Vec::new();
        for (dx, n) in [(0.02, 200), (0.01, 400), (0.005, 800)] {
            let c = line_case(dx, n);
            let r = continuity_residual(&c.flow, &c.phi, &c.k, &[tf]).unwrap()[0];
            let h = c.phi.params().dt_traj;
            assert!(r <= 10.0 * (h + dx), "dx {dx}: {r}");
            errs.push(r);
        }
        assert!(errs[2] <= errs[0], "{errs:?}");
    }

    #[test]
    fn line_audit_fields() {
        let c = line_case(0.01, 50);
        let tests = default_test_set(&c.dom, &c.tgt, c.flow.horizon());
        let rep = audit(&c.flow, &c.m0, &c.phi, &c.k, &tests, 10).unwrap();
        assert_eq!(rep.continuity.len(), 12);
        assert!(rep.hj.eligible > 0);
        assert!(rep.hj.max <= 1e-9, "{:?}", rep.hj);
        assert_eq!(rep.gamma_max_abs_phi, 0.0);
        assert_eq!(rep.initial_w1_gap, 0.0);
        assert_abs_diff_eq!(rep.upsilon_coverage, 1.0, epsilon = 1e-12);
        let probe = rep.boundary_probe.unwrap();
        assert!(probe.worst >= -3.0 * 0.01, "{probe:?}");
        assert!(rep.outflow.max_mass <= rep.outflow.quantum);
    }

    #[test]
    fn disk_boundary_target_has_no_boundary_probe() {
        let dom = DomainSpec::disk(Point::new(0.0, 0.0), 1.0).unwrap();
        let tgt = TargetSpec::boundary(&dom);
        let k = SpeedField::constant(SpaceGrid::covering(&dom, 0.05, 2).unwrap(), 1.0).unwrap();
        let phi = solve_value(&k, &dom, &tgt, Constraint::State, &SolverParams::new(2, 0.05, 1.0)).unwrap();
        assert!(boundary_probe(&phi).is_none());
        assert_eq!(gamma_max_abs(&phi), 0.0);
    }

    #[test]
    fn unreached_particle_lowers_coverage() {
        let c = line_case(0.01, 4);
        let stuck = crate::trajectories::integrate_with(&c.phi, &c.k, 0.0, Point::on_line(0.5), |_, _| Ok(Point::zero()))
            .unwrap_err()
            .partial;
        let mut trajs = c.flow.trajectories().to_vec();
        trajs[0] = stuck;
        let q = FlowMeasure::new(1, trajs, c.flow.weights().to_vec(), c.flow.horizon()).unwrap();
        assert_abs_diff_eq!(upsilon_coverage(&q, &c.phi, &c.k, 8), 0.75);
    }
}
