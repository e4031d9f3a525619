use super::{directions, ValueField};
use crate::congestion::SpeedField;
use crate::error::{MfgError, Result};
use crate::{Point, Scalar};

/// Outcome of the normalized-gradient query.
#[derive(Clone, Debug, PartialEq)]
pub enum NormalizedGradient<T> {
    Unique(Point<T>),
    /// The maximal-descent set splits into several clusters (or one too wide to be a single direction).
    NonUnique(Vec<Point<T>>),
}

fn probe<T: Scalar>(phi: &ValueField<T>, t: T, x: Point<T>, phi0: T, kx: T, u: Point<T>) -> T {
    let mut worst = -T::infinity();
    for &h in &phi.params().h_probe {
        let Some(foot) = phi.admit(x + u * (h * kx)) else { return T::infinity() };
        let v = phi.eval(t + h, foot);
        if !v.is_finite() {
            return T::infinity();
        }
        worst = worst.max((v - phi0) / h);
    }
    worst
}

fn inward_normal_check<T: Scalar>(phi: &ValueField<T>, x: Point<T>) -> Option<Point<T>> {
    if phi.problem.on_boundary(x) {
        phi.domain().outward_normal(x).ok()
    } else {
        None
    }
}

/// `max_h [phi(t + h, x + h k u) - phi(t, x)] / h` over the configured probe steps.
pub fn descent_rate<T: Scalar>(phi: &ValueField<T>, k: &SpeedField<T>, t: T, x: Point<T>, u: Point<T>) -> Result<T> {
    if phi.in_target(x) {
        return Err(MfgError::InTarget);
    }
    if let Some(n) = inward_normal_check(phi, x) {
        let dot = u.dot(n);
        if dot > T::lit(1e-12) {
            return Err(MfgError::ConeViolation { dot: dot.as_f64() });
        }
    }
    let phi0 = phi.eval(t, x);
    if !phi0.is_finite() {
        return Ok(T::infinity());
    }
    Ok(probe(phi, t, x, phi0, phi.speed(k, t, x), u))
}

/// `(direction index, direction, rate)` for every sampled direction of the closed inward cone.
pub(crate) fn descent_profile<T: Scalar>(
    phi: &ValueField<T>,
    k: &SpeedField<T>,
    t: T,
    x: Point<T>,
) -> Result<Vec<(usize, Point<T>, T)>> {
    if phi.in_target(x) {
        return Err(MfgError::InTarget);
    }
    let dim = phi.grid().dim();
    let normal = inward_normal_check(phi, x);
    let phi0 = phi.eval(t, x);
    let kx = phi.speed(k, t, x);
    Ok(directions(dim, phi.params().n_dir)
        .into_iter()
        .enumerate()
        .filter(|(_, u)| normal.is_none_or(|n| u.dot(n) <= T::lit(1e-12)))
        .map(|(i, u)| {
            let r = if phi0.is_finite() { probe(phi, t, x, phi0, kx, u) } else { T::infinity() };
            (i, u, r)
        })
        .collect())
}

/// Near-minimizers of the descent rate; empty when no direction descends.
pub(crate) fn select_w<T: Scalar>(profile: &[(usize, Point<T>, T)], tol: T) -> Vec<(usize, Point<T>, T)> {
    let m = profile.iter().map(|e| e.2).fold(T::infinity(), T::min);
    if !(m < T::zero()) {
        return Vec::new();
    }
    profile.iter().filter(|e| e.2 <= m + tol).copied().collect()
}

/// Maximal-descent set `W(t, x)` on the direction grid. Empty on the target.
pub fn maximal_descent_directions<T: Scalar>(phi: &ValueField<T>, k: &SpeedField<T>, t: T, x: Point<T>) -> Result<Vec<Point<T>>> {
    if phi.in_target(x) {
        return Ok(Vec::new());
    }
    let prof = descent_profile(phi, k, t, x)?;
    Ok(select_w(&prof, phi.params().tol_w).into_iter().map(|e| e.1).collect())
}

/// Collapses a maximal-descent set into a single direction when it forms one contiguous
/// run of at most three grid directions. The direction is the vertex of the parabola through
/// the rates of the best grid direction and its two neighbours (the cluster mean when a
/// neighbour is unavailable).
pub(crate) fn classify<T: Scalar>(
    profile: &[(usize, Point<T>, T)],
    w: &[(usize, Point<T>, T)],
    dim: usize,
    n_dir: usize,
) -> NormalizedGradient<T> {
    let dirs: Vec<Point<T>> = w.iter().map(|e| e.1).collect();
    if dim == 1 {
        return if w.len() == 1 { NormalizedGradient::Unique(-w[0].1) } else { NormalizedGradient::NonUnique(dirs) };
    }
    let m = w.len();
    if m == 0 || m > 3 {
        return NormalizedGradient::NonUnique(dirs);
    }
    let idx: Vec<usize> = w.iter().map(|e| e.0).collect();
    let contiguous = idx.iter().any(|&s| (0..m).all(|o| idx.contains(&((s + o) % n_dir))));
    if !contiguous {
        return NormalizedGradient::NonUnique(dirs);
    }
    let best = w.iter().skip(1).fold(w[0], |b, e| if e.2 < b.2 || (e.2 == b.2 && e.1.lex_lt(b.1)) { *e } else { b });
    let rate_of = |i: usize| profile.iter().find(|e| e.0 == i).map(|e| e.2).filter(|r| r.is_finite());
    let spacing = T::PI() * T::two() / T::of(n_dir);
    let refined = match (rate_of((best.0 + n_dir - 1) % n_dir), rate_of((best.0 + 1) % n_dir)) {
        (Some(rm), Some(rp)) if rm - best.2 * T::two() + rp > T::zero() => {
            let delta = (T::half() * (rm - rp) / (rm - best.2 * T::two() + rp)).clamp_to(-T::half(), T::half());
            Some(Point::from_angle(spacing * (T::of(best.0) + delta)))
        }
        _ => None,
    };
    match refined.or_else(|| dirs.iter().fold(Point::zero(), |a, d| a + *d).normalized()) {
        Some(u) => NormalizedGradient::Unique(-u),
        None => NormalizedGradient::NonUnique(dirs),
    }
}

/// `grad^ phi(t, x)`, the opposite of the (unique) maximal-descent direction.
pub fn normalized_gradient<T: Scalar>(phi: &ValueField<T>, k: &SpeedField<T>, t: T, x: Point<T>) -> Result<NormalizedGradient<T>> {
    let prof = descent_profile(phi, k, t, x)?;
    let w = select_w(&prof, phi.params().tol_w);
    if w.is_empty() {
        return Err(MfgError::NoDescent { x: x.x.as_f64(), y: x.y.as_f64() });
    }
    Ok(classify(&prof, &w, phi.grid().dim(), phi.params().n_dir))
}

/// Optimal feedback control `-grad^ phi`, tie-broken by the smallest descent rate and then
/// lexicographically when the maximal-descent set is not a single direction.
pub(crate) fn feedback<T: Scalar>(phi: &ValueField<T>, k: &SpeedField<T>, t: T, x: Point<T>) -> Result<Point<T>> {
    let prof = descent_profile(phi, k, t, x)?;
    let w = select_w(&prof, phi.params().tol_w);
    if w.is_empty() {
        return Err(MfgError::NoDescent { x: x.x.as_f64(), y: x.y.as_f64() });
    }
    match classify(&prof, &w, phi.grid().dim(), phi.params().n_dir) {
        NormalizedGradient::Unique(g) => Ok(-g),
        NormalizedGradient::NonUnique(_) => {
            let mut best = w[0];
            for e in &w[1..] {
                if e.2 < best.2 || (e.2 == best.2 && e.1.lex_lt(best.1)) {
                    best = *e;
                }
            }
            Ok(best.1)
        }
    }
}
