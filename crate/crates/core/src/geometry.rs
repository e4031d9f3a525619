//! Analytic domains and target sets with exact signed distances and normals.
//!
//! Every domain is a closed-form primitive with a `C^{1,1}` boundary, so the
//! signed distance, the outward normal and the nearest-point projection are
//! exact inside the published regularity band.

use crate::error::{MfgError, Result};
use crate::{Point, Scalar};
use serde::{Deserialize, Serialize};

/// Shape of the open domain `Omega`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Shape<T> {
    /// `(a, b)` on the real line.
    Interval { a: T, b: T },
    Disk { center: Point<T>, radius: T },
    Annulus { center: Point<T>, r_in: T, r_out: T },
    /// Axis-aligned rectangle of half-widths `half_widths` with corners rounded at `corner_radius`.
    RoundedRectangle { center: Point<T>, half_widths: Point<T>, corner_radius: T },
}

/// A validated domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec<T> {
    shape: Shape<T>,
}

impl<T: Scalar> DomainSpec<T> {
    pub fn new(shape: Shape<T>) -> Result<Self> {
        let bad = |m: &str| Err(MfgError::InvalidArgument(m.to_string()));
        match &shape {
            Shape::Interval { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return bad("interval requires finite a < b");
                }
            }
            Shape::Disk { radius, center } => {
                if !(*radius > T::zero() && radius.is_finite() && center.is_finite()) {
                    return bad("disk requires a positive finite radius");
                }
            }
            Shape::Annulus { r_in, r_out, center } => {
                if !(*r_in > T::zero() && r_in < r_out && r_out.is_finite() && center.is_finite()) {
                    return bad("annulus requires 0 < r_in < r_out");
                }
            }
            Shape::RoundedRectangle { half_widths, corner_radius, center } => {
                let h = half_widths.x.min(half_widths.y);
                if !(*corner_radius > T::zero() && *corner_radius <= h && center.is_finite() && half_widths.is_finite()) {
                    return bad("rounded rectangle requires 0 < corner_radius <= min(half_widths)");
                }
            }
        }
        Ok(Self { shape })
    }

    pub fn interval(a: T, b: T) -> Result<Self> {
        Self::new(Shape::Interval { a, b })
    }

    pub fn disk(center: Point<T>, radius: T) -> Result<Self> {
        Self::new(Shape::Disk { center, radius })
    }

    pub fn annulus(center: Point<T>, r_in: T, r_out: T) -> Result<Self> {
        Self::new(Shape::Annulus { center, r_in, r_out })
    }

    pub fn rounded_rectangle(center: Point<T>, half_widths: Point<T>, corner_radius: T) -> Result<Self> {
        Self::new(Shape::RoundedRectangle { center, half_widths, corner_radius })
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Signed distance to the boundary: negative inside, positive outside.
    pub fn signed_distance(&self, p: Point<T>) -> T {
        match self.shape {
            Shape::Interval { a, b } => (a - p.x).max(p.x - b),
            Shape::Disk { center, radius } => (p - center).norm() - radius,
            Shape::Annulus { center, r_in, r_out } => {
                let rho = (p - center).norm();
                (r_in - rho).max(rho - r_out)
            }
            Shape::RoundedRectangle { center, half_widths, corner_radius } => {
                let d = p - center;
                let qx = d.x.abs() - (half_widths.x - corner_radius);
                let qy = d.y.abs() - (half_widths.y - corner_radius);
                let outside = Point::new(qx.max(T::zero()), qy.max(T::zero())).norm();
                let inside = qx.max(qy).min(T::zero());
                outside + inside - corner_radius
            }
        }
    }

    /// `d_Omega(x)`: distance to the closed domain (zero inside).
    pub fn domain_distance(&self, p: Point<T>) -> T {
        self.signed_distance(p).max(T::zero())
    }

    pub fn contains(&self, p: Point<T>, tol: T) -> bool {
        self.signed_distance(p) <= tol
    }

    /// Width of the band around the boundary on which the signed distance is smooth.
    pub fn band_width(&self) -> T {
        match self.shape {
            Shape::Interval { a, b } => (b - a) * T::half(),
            Shape::Disk { radius, .. } => radius,
            Shape::Annulus { r_in, r_out, .. } => (r_out - r_in) * T::half(),
            Shape::RoundedRectangle { corner_radius, .. } => corner_radius,
        }
    }

    /// Geodesic factor `D`: in-domain paths between `x` and `y` need length at most `D |x - y|`.
    pub fn geodesic_factor(&self) -> T {
        match self.shape {
            Shape::Annulus { .. } => T::FRAC_PI_2(),
            _ => T::one(),
        }
    }

    /// Default outer band `eps_*` used by the penalization threshold.
    pub fn default_eps_star(&self) -> T {
        match self.shape {
            Shape::Annulus { r_in, .. } => self.band_width().min(r_in * T::half()),
            _ => self.band_width(),
        }
    }

    /// Lipschitz constant of the normal field on `{0 < d_Omega < eps_star}`.
    pub fn curvature_bound(&self, eps_star: T) -> T {
        match self.shape {
            Shape::Interval { .. } => T::zero(),
            Shape::Disk { radius, .. } => T::one() / radius,
            Shape::Annulus { r_in, r_out, .. } => {
                let inner = if eps_star < r_in { T::one() / (r_in - eps_star) } else { T::infinity() };
                inner.max(T::one() / r_out)
            }
            Shape::RoundedRectangle { corner_radius, .. } => T::one() / corner_radius,
        }
    }

    /// Axis-aligned bounding box of the closed domain.
    pub fn bounding_box(&self) -> (Point<T>, Point<T>) {
        match self.shape {
            Shape::Interval { a, b } => (Point::on_line(a), Point::on_line(b)),
            Shape::Disk { center, radius } => {
                let r = Point::new(radius, radius);
                (center - r, center + r)
            }
            Shape::Annulus { center, r_out, .. } => {
                let r = Point::new(r_out, r_out);
                (center - r, center + r)
            }
            Shape::RoundedRectangle { center, half_widths, .. } => (center - half_widths, center + half_widths),
        }
    }

    pub fn diameter(&self) -> T {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Gradient of the signed distance; `None` on its singular set.
    fn gradient(&self, p: Point<T>) -> Option<Point<T>> {
        match self.shape {
            Shape::Interval { a, b } => {
                let mid = (a + b) * T::half();
                if p.x == mid {
                    None
                } else if p.x < mid {
                    Some(Point::new(-T::one(), T::zero()))
                } else {
                    Some(Point::new(T::one(), T::zero()))
                }
            }
            Shape::Disk { center, .. } => (p - center).normalized(),
            Shape::Annulus { center, r_in, r_out } => {
                let radial = (p - center).normalized()?;
                let rho = (p - center).norm();
                if r_in - rho > rho - r_out {
                    Some(-radial)
                } else {
                    Some(radial)
                }
            }
            Shape::RoundedRectangle { center, half_widths, corner_radius } => {
                let d = p - center;
                let sx = if d.x < T::zero() { -T::one() } else { T::one() };
                let sy = if d.y < T::zero() { -T::one() } else { T::one() };
                let qx = d.x.abs() - (half_widths.x - corner_radius);
                let qy = d.y.abs() - (half_widths.y - corner_radius);
                if qx > T::zero() && qy > T::zero() {
                    Point::new(sx * qx, sy * qy).normalized()
                } else if qx > qy {
                    Some(Point::new(sx, T::zero()))
                } else if qy > qx {
                    Some(Point::new(T::zero(), sy))
                } else {
                    None
                }
            }
        }
    }

    fn check_band(&self, p: Point<T>) -> Result<T> {
        let sd = self.signed_distance(p);
        let band = self.band_width();
        if sd.abs() <= band {
            Ok(sd)
        } else {
            Err(MfgError::BandViolation { x: p.x.as_f64(), y: p.y.as_f64(), sd: sd.as_f64(), band: band.as_f64() })
        }
    }

    /// Outward unit normal, i.e. the gradient of the signed distance, inside the regularity band.
    pub fn outward_normal(&self, p: Point<T>) -> Result<Point<T>> {
        let sd = self.check_band(p)?;
        self.gradient(p).ok_or(MfgError::BandViolation {
            x: p.x.as_f64(),
            y: p.y.as_f64(),
            sd: sd.as_f64(),
            band: self.band_width().as_f64(),
        })
    }

    /// Nearest point of the boundary, without the band restriction. `None` on the singular set.
    pub fn nearest_boundary_point(&self, p: Point<T>) -> Option<Point<T>> {
        let sd = self.signed_distance(p);
        let g = self.gradient(p)?;
        Some(p - g * sd)
    }

    /// Nearest point of the closed domain (identity inside). No band restriction.
    pub fn nearest_point(&self, p: Point<T>) -> Option<Point<T>> {
        if self.signed_distance(p) <= T::zero() {
            Some(p)
        } else {
            self.nearest_boundary_point(p)
        }
    }

    /// Projection onto the closed domain for points within the regularity band.
    pub fn project_to_domain(&self, p: Point<T>) -> Result<Point<T>> {
        let sd = self.signed_distance(p);
        if sd <= T::zero() {
            return Ok(p);
        }
        self.check_band(p)?;
        let g = self.gradient(p).ok_or(MfgError::BandViolation {
            x: p.x.as_f64(),
            y: p.y.as_f64(),
            sd: sd.as_f64(),
            band: self.band_width().as_f64(),
        })?;
        Ok(p - g * sd)
    }

    /// In-domain polyline from `x` to `y` obtained by marching along the segment and
    /// projecting every sample onto the closed domain, refined until consecutive
    /// vertices are at most `step` apart.
    pub fn geodesic_path(&self, x: Point<T>, y: Point<T>, step: T) -> Vec<Point<T>> {
        let at = |s: T| {
            let p = x + (y - x) * s;
            self.nearest_point(p)
        };
        let mut out = vec![at(T::zero()).unwrap_or(x)];
        let mut stack = vec![(T::one(), 0u32)];
        let mut s0 = T::zero();
        // depth-first refinement from left to right
        while let Some((s1, depth)) = stack.pop() {
            let p0 = *out.last().expect("nonempty");
            match at(s1) {
                Some(p1) if p0.dist(p1) <= step || depth >= 40 => {
                    out.push(p1);
                    s0 = s1;
                }
                _ if depth < 40 => {
                    let mid = (s0 + s1) * T::half();
                    stack.push((s1, depth + 1));
                    stack.push((mid, depth + 1));
                }
                _ => {
                    s0 = s1;
                }
            }
        }
        out
    }
}

/// Closed target set `Gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetSpec<T> {
    Points { points: Vec<Point<T>> },
    /// Arc of the circle `|x - center| = radius` with angles in `[theta_min, theta_max]`.
    Arc { center: Point<T>, radius: T, theta_min: T, theta_max: T },
    /// The whole boundary of the given domain.
    Boundary { domain: DomainSpec<T> },
    /// Closed axis-aligned box; the target is its intersection with the closed domain.
    Box { min: Point<T>, max: Point<T> },
}

impl<T: Scalar> TargetSpec<T> {
    pub fn points(points: Vec<Point<T>>) -> Self {
        TargetSpec::Points { points }
    }

    pub fn boundary(domain: &DomainSpec<T>) -> Self {
        TargetSpec::Boundary { domain: domain.clone() }
    }

    /// `d_Gamma(x)`.
    pub fn distance(&self, p: Point<T>) -> T {
        match self {
            TargetSpec::Points { points } => points.iter().map(|q| q.dist(p)).fold(T::infinity(), T::min),
            TargetSpec::Arc { center, radius, theta_min, theta_max } => {
                let v = p - *center;
                let rho = v.norm();
                if rho == T::zero() {
                    return *radius;
                }
                let two_pi = T::PI() * T::two();
                let rel = (v.angle() - *theta_min) % two_pi;
                let rel = if rel < T::zero() { rel + two_pi } else { rel };
                if rel <= *theta_max - *theta_min {
                    (rho - *radius).abs()
                } else {
                    let e0 = *center + Point::from_angle(*theta_min) * *radius;
                    let e1 = *center + Point::from_angle(*theta_max) * *radius;
                    p.dist(e0).min(p.dist(e1))
                }
            }
            TargetSpec::Boundary { domain } => domain.signed_distance(p).abs(),
            TargetSpec::Box { min, max } => {
                let c = Point::new(p.x.clamp_to(min.x, max.x), p.y.clamp_to(min.y, max.y));
                c.dist(p)
            }
        }
    }

    pub fn contains(&self, p: Point<T>, tol: T) -> bool {
        self.distance(p) <= tol
    }

    /// Checks nonemptiness, closedness and that `Gamma` meets the closed domain.
    pub fn validate(&self, dom: &DomainSpec<T>) -> Result<()> {
        let tol = T::lit(1e-9) * (T::one() + dom.diameter());
        let bad = |m: String| Err(MfgError::InvalidArgument(m));
        match self {
            TargetSpec::Points { points } => {
                if points.is_empty() {
                    return bad("target point set is empty".into());
                }
                for q in points {
                    if !q.is_finite() || !dom.contains(*q, tol) {
                        return bad(format!("target point ({}, {}) lies outside the closed domain", q.x, q.y));
                    }
                    if dom.dim() == 1 && q.y != T::zero() {
                        return bad("one-dimensional target points must have a single coordinate".into());
                    }
                }
            }
            TargetSpec::Arc { center, radius, theta_min, theta_max } => {
                if dom.dim() != 2 {
                    return bad("arc targets need a two-dimensional domain".into());
                }
                if !(*radius > T::zero() && theta_max >= theta_min && *theta_max - *theta_min <= T::PI() * T::two()) {
                    return bad("arc requires radius > 0 and 0 <= theta_max - theta_min <= 2 pi".into());
                }
                for i in 0..=64 {
                    let th = *theta_min + (*theta_max - *theta_min) * T::of(i) / T::of(64);
                    let q = *center + Point::from_angle(th) * *radius;
                    if !dom.contains(q, tol) {
                        return bad(format!("arc point at angle {th} lies outside the closed domain"));
                    }
                }
            }
            TargetSpec::Boundary { domain } => {
                if domain != dom {
                    return bad("boundary target refers to a different domain".into());
                }
            }
            TargetSpec::Box { min, max } => {
                if !(min.x <= max.x && min.y <= max.y) {
                    return bad("box target requires min <= max".into());
                }
                let n = 40;
                let hit = (0..=n).any(|i| {
                    (0..=n).any(|j| {
                        let q = Point::new(
                            min.x + (max.x - min.x) * T::of(i) / T::of(n),
                            min.y + (max.y - min.y) * T::of(j) / T::of(n),
                        );
                        dom.contains(q, tol)
                    })
                });
                if !hit {
                    return bad("box target does not meet the closed domain".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point<f64> {
        Point::new(x, y)
    }

    fn unit_disk() -> DomainSpec<f64> {
        DomainSpec::disk(p(0.0, 0.0), 1.0).unwrap()
    }

    fn shapes() -> Vec<DomainSpec<f64>> {
        vec![
            unit_disk(),
            DomainSpec::annulus(p(0.2, -0.1), 0.5, 1.5).unwrap(),
            DomainSpec::rounded_rectangle(p(0.0, 0.0), p(2.0, 0.5), 0.25).unwrap(),
        ]
    }

    #[test]
    fn signed_distance_examples() {
        assert_abs_diff_eq!(unit_disk().signed_distance(p(0.0, 0.0)), -1.0);
        assert_abs_diff_eq!(unit_disk().signed_distance(p(2.0, 0.0)), 1.0);
        let line = DomainSpec::interval(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(line.signed_distance(Point::on_line(0.25)), -0.25);
    }

    #[test]
    fn normal_examples() {
        let n = unit_disk().outward_normal(p(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(n.x, 1.0);
        assert_abs_diff_eq!(n.y, 0.0);
        let n = unit_disk().outward_normal(p(0.0, -0.95)).unwrap();
        assert_abs_diff_eq!(n.x, 0.0);
        assert_abs_diff_eq!(n.y, -1.0);
        let ann = DomainSpec::annulus(p(0.0, 0.0), 1.0, 2.0).unwrap();
        let n = ann.outward_normal(p(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(n.x, -1.0);
        assert_abs_diff_eq!(n.y, 0.0);
    }

    #[test]
    fn normal_out_of_band_is_rejected() {
        let ann = DomainSpec::annulus(p(0.0, 0.0), 1.0, 2.0).unwrap();
        assert!(matches!(ann.outward_normal(p(3.0, 0.0)), Err(MfgError::BandViolation { .. })));
        assert!(unit_disk().outward_normal(p(0.0, 0.0)).is_err());
        assert!(unit_disk().project_to_domain(p(2.5, 0.0)).is_err());
    }

    #[test]
    fn projection_examples() {
        let q = unit_disk().project_to_domain(p(2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(q.x, 1.0);
        assert_abs_diff_eq!(q.y, 0.0);
        let inside = p(0.3, -0.2);
        assert_eq!(unit_disk().project_to_domain(inside).unwrap(), inside);
        let line = DomainSpec::interval(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(line.project_to_domain(Point::on_line(1.3)).unwrap().x, 1.0);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(DomainSpec::interval(1.0, 0.0).is_err());
        assert!(DomainSpec::annulus(p(0.0, 0.0), 2.0, 1.0).is_err());
        assert!(DomainSpec::rounded_rectangle(p(0.0, 0.0), p(1.0, 0.2), 0.3).is_err());
    }

    #[test]
    fn target_distance_examples() {
        let g = TargetSpec::points(vec![Point::on_line(0.0)]);
        assert_abs_diff_eq!(g.distance(Point::on_line(0.7)), 0.7);
        assert_eq!(g.distance(Point::on_line(0.0)), 0.0);
    }

    #[test]
    fn arc_distance_matches_dense_sampling() {
        use std::f64::consts::FRAC_PI_4;
        let arc = TargetSpec::Arc { center: p(0.0, 0.0), radius: 1.0, theta_min: -FRAC_PI_4, theta_max: FRAC_PI_4 };
        let n = 100_000;
        let x = p(-1.0, 0.0);
        let brute = (0..=n)
            .map(|i| {
                let th = -FRAC_PI_4 + 2.0 * FRAC_PI_4 * i as f64 / n as f64;
                p(th.cos(), th.sin()).dist(x)
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(arc.distance(x), brute, epsilon = 1e-9);
        // and a point facing the arc interior
        assert_abs_diff_eq!(arc.distance(p(0.5, 0.1)), 1.0 - p(0.5, 0.1).norm(), epsilon = 1e-12);
    }

    #[test]
    fn target_validation() {
        let d = unit_disk();
        assert!(TargetSpec::points(vec![]).validate(&d).is_err());
        assert!(TargetSpec::points(vec![p(3.0, 0.0)]).validate(&d).is_err());
        assert!(TargetSpec::boundary(&d).validate(&d).is_ok());
        assert!(TargetSpec::Box { min: p(5.0, 5.0), max: p(6.0, 6.0) }.validate(&d).is_err());
        assert!(TargetSpec::Box { min: p(0.5, -1.0), max: p(2.0, 1.0) }.validate(&d).is_ok());
    }

    #[test]
    fn normal_is_unit_gradient_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for dom in shapes().into_iter().chain([DomainSpec::interval(0.0, 1.0).unwrap()]) {
            let (lo, hi) = dom.bounding_box();
            let band = dom.band_width();
            let mut checked = 0;
            while checked < 300 {
                let q = if dom.dim() == 1 {
                    Point::on_line(rng.random_range(lo.x - 0.5..hi.x + 0.5))
                } else {
                    p(rng.random_range(lo.x - 0.5..hi.x + 0.5), rng.random_range(lo.y - 0.5..hi.y + 0.5))
                };
                let sd = dom.signed_distance(q);
                if sd.abs() >= band - 10.0 * h {
                    continue;
                }
                let gx = (dom.signed_distance(q + p(h, 0.0)) - dom.signed_distance(q - p(h, 0.0))) / (2.0 * h);
                let gy = if dom.dim() == 1 {
                    0.0
                } else {
                    (dom.signed_distance(q + p(0.0, h)) - dom.signed_distance(q - p(0.0, h))) / (2.0 * h)
                };
                let g = p(gx, gy);
                assert!((g.norm() - 1.0).abs() < 1e-6, "{dom:?} at {q:?}: |grad| = {}", g.norm());
                let n = dom.outward_normal(q).unwrap();
                assert!(g.dist(n) < 1e-5);
                checked += 1;
            }
        }
    }

    #[test]
    fn membership_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dom in shapes() {
            let (lo, hi) = dom.bounding_box();
            for _ in 0..10_000 {
                let q = p(rng.random_range(lo.x - 0.3..hi.x + 0.3), rng.random_range(lo.y - 0.3..hi.y + 0.3));
                let inside_direct = match *dom.shape() {
                    Shape::Disk { center, radius } => (q - center).norm() <= radius,
                    Shape::Annulus { center, r_in, r_out } => {
                        let r = (q - center).norm();
                        r >= r_in && r <= r_out
                    }
                    Shape::RoundedRectangle { center, half_widths, corner_radius } => {
                        let d = q - center;
                        let (ax, ay) = (d.x.abs(), d.y.abs());
                        let (cx, cy) = (half_widths.x - corner_radius, half_widths.y - corner_radius);
                        if ax > half_widths.x || ay > half_widths.y {
                            false
                        } else if ax > cx && ay > cy {
                            p(ax - cx, ay - cy).norm() <= corner_radius
                        } else {
                            true
                        }
                    }
                    Shape::Interval { .. } => unreachable!(),
                };
                assert_eq!(dom.signed_distance(q) <= 0.0, inside_direct, "{dom:?} at {q:?}");
            }
        }
    }

    #[test]
    fn geodesic_paths_respect_published_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dom in shapes() {
            let (lo, hi) = dom.bounding_box();
            let sample = |rng: &mut ChaCha8Rng| loop {
                let q = p(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
                if dom.contains(q, 0.0) {
                    return q;
                }
            };
            let d = dom.geodesic_factor();
            for _ in 0..1000 {
                let (x, y) = (sample(&mut rng), sample(&mut rng));
                let path = dom.geodesic_path(x, y, 1e-3);
                let len: f64 = path.windows(2).map(|w| w[0].dist(w[1])).sum();
                assert!(len <= d * x.dist(y) + 1e-6, "{dom:?}: {len} > {d} * {}", x.dist(y));
                assert!(path.iter().all(|q| dom.signed_distance(*q) <= 1e-7));
                assert!(path.last().unwrap().dist(y) < 1e-12);
            }
        }
    }

    #[test]
    fn works_in_single_precision() {
        let d = DomainSpec::<f32>::disk(Point::new(0.0, 0.0), 1.0).unwrap();
        assert!((d.signed_distance(Point::new(0.5, 0.0)) + 0.5).abs() < 1e-6);
        let q = d.project_to_domain(Point::new(0.0, 1.5)).unwrap();
        assert!((q.y - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn signed_distance_is_one_lipschitz(
            ax in -3.0f64..3.0, ay in -3.0f64..3.0, bx in -3.0f64..3.0, by in -3.0f64..3.0, which in 0usize..3
        ) {
            let dom = &shapes()[which];
            let (a, b) = (p(ax, ay), p(bx, by));
            prop_assert!((dom.signed_distance(a) - dom.signed_distance(b)).abs() <= a.dist(b) + 1e-9);
        }

        #[test]
        fn projection_is_idempotent(x in -3.0f64..3.0, y in -3.0f64..3.0, which in 0usize..3) {
            let dom = &shapes()[which];
            if let Ok(q) = dom.project_to_domain(p(x, y)) {
                prop_assert!(dom.signed_distance(q) <= 1e-12);
                let qq = dom.project_to_domain(q).unwrap();
                prop_assert!(q.dist(qq) <= 1e-12);
                let sd = dom.signed_distance(p(x, y));
                if sd > 0.0 {
                    prop_assert!((q.dist(p(x, y)) - sd).abs() <= 1e-9);
                }
            }
        }

        #[test]
        fn target_distance_is_one_lipschitz(ax in -2.0f64..2.0, ay in -2.0f64..2.0, bx in -2.0f64..2.0, by in -2.0f64..2.0) {
            let d = unit_disk();
            let targets = [
                TargetSpec::Arc { center: p(0.0, 0.0), radius: 1.0, theta_min: -0.7, theta_max: 0.9 },
                TargetSpec::boundary(&d),
                TargetSpec::Box { min: p(0.2, -0.3), max: p(0.9, 0.4) },
                TargetSpec::points(vec![p(0.1, 0.2), p(-0.5, 0.5)]),
            ];
            let (a, b) = (p(ax, ay), p(bx, by));
            for t in &targets {
                prop_assert!(t.distance(a) >= 0.0);
                prop_assert!((t.distance(a) - t.distance(b)).abs() <= a.dist(b) + 1e-9);
            }
        }
    }
}
