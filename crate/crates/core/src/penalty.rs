//! Penalized unconstrained dynamics `k_eps` and the admissible penalization threshold.

use crate::congestion::SpeedField;
use crate::error::{MfgError, Result};
use crate::geometry::DomainSpec;
use crate::{Point, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyParams<T> {
    pub eps: T,
    pub eps_star: T,
    pub c_curv: T,
}

impl<T: Scalar> PenaltyParams<T> {
    /// Parameters with the domain's default band `eps_*` and curvature bound.
    pub fn for_domain(dom: &DomainSpec<T>, eps: T) -> Result<Self> {
        if !(eps > T::zero() && eps.is_finite()) {
            return Err(MfgError::InvalidArgument("eps must be positive".into()));
        }
        let eps_star = dom.default_eps_star();
        Ok(Self { eps, eps_star, c_curv: dom.curvature_bound(eps_star) })
    }

    /// `eps_0` for speeds in `[k_min, k_max]` with spatial Lipschitz constant `l`.
    pub fn threshold(&self, k_min: T, k_max: T, l: T) -> Result<T> {
        epsilon_threshold(k_min, k_max, l, self.c_curv, self.eps_star)
    }
}

/// `k_eps(t, x) = k(t, pi(x)) (1 - d_Omega(x)/eps)_+`, with `k` extended off the domain
/// through the nearest point `pi(x)` of the closed domain.
pub fn penalized_speed<T: Scalar>(k: &SpeedField<T>, dom: &DomainSpec<T>, eps: T, t: T, x: Point<T>) -> T {
    let d = dom.domain_distance(x);
    if d >= eps {
        return T::zero();
    }
    if d == T::zero() {
        return k.eval(t, x);
    }
    let base = dom.nearest_point(x).map_or_else(|| k.k_min(), |q| k.eval(t, q));
    base * (T::one() - d / eps)
}

/// `eps_0 = min(eps_*, K_min / (L + C K_max))`.
pub fn epsilon_threshold<T: Scalar>(k_min: T, k_max: T, l: T, c_curv: T, eps_star: T) -> Result<T> {
    if !(k_min > T::zero() && k_max >= k_min && eps_star > T::zero() && l >= T::zero() && c_curv >= T::zero()) {
        return Err(MfgError::InvalidArgument(
            "threshold needs K_min > 0, K_max >= K_min, eps_* > 0 and nonnegative L, C".into(),
        ));
    }
    let denom = l + c_curv * k_max;
    if denom == T::zero() {
        return Ok(eps_star);
    }
    Ok(eps_star.min(k_min / denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SpaceGrid;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn disk_field() -> (DomainSpec<f64>, SpeedField<f64>) {
        let dom = DomainSpec::disk(Point::new(0.0, 0.0), 1.0).unwrap();
        let grid = SpaceGrid::covering(&dom, 0.05, 30).unwrap();
        let k = SpeedField::from_fn(grid, 1.0, 1, 0.5, 1.5, |_, x: Point<f64>| 1.0 + 0.5 * (x.x / 3.0).clamp(-1.0, 1.0)).unwrap();
        (dom, k)
    }

    #[test]
    fn threshold_examples() {
        assert_abs_diff_eq!(epsilon_threshold(1.0, 2.0, 1.0, 1.0, 0.5).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(epsilon_threshold(1.0, 2.0, 0.0, 0.0, 0.1).unwrap(), 0.1);
        assert_abs_diff_eq!(epsilon_threshold(1.0, 1.0, 1.0, 1.0, 10.0).unwrap(), 0.5);
        assert!(epsilon_threshold(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(epsilon_threshold(1.0, 1.0, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn params_follow_domain_defaults() {
        let ann = DomainSpec::annulus(Point::new(0.0, 0.0), 1.0, 2.0).unwrap();
        let pp = PenaltyParams::for_domain(&ann, 0.1).unwrap();
        assert_abs_diff_eq!(pp.eps_star, 0.5);
        assert_abs_diff_eq!(pp.c_curv, 2.0);
        assert_abs_diff_eq!(pp.threshold(1.0, 1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn penalized_speed_examples() {
        let (dom, k) = disk_field();
        let eps = 0.2;
        let inside = Point::new(0.3, -0.4);
        assert_eq!(penalized_speed(&k, &dom, eps, 0.0, inside), k.eval(0.0, inside));
        let edge = Point::new(1.2, 0.0);
        assert_eq!(penalized_speed(&k, &dom, dom.domain_distance(edge), 0.0, edge), 0.0);
        assert_eq!(penalized_speed(&k, &dom, eps, 0.0, Point::new(1.5, 0.0)), 0.0);
        let half = Point::new(0.0, 1.1);
        assert_abs_diff_eq!(penalized_speed(&k, &dom, eps, 0.0, half), 0.5 * k.eval(0.0, Point::new(0.0, 1.0)), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn penalized_speed_is_bounded(x in -2.0f64..2.0, y in -2.0f64..2.0, eps in 0.01f64..1.0) {
            let (dom, k) = disk_field();
            let v = penalized_speed(&k, &dom, eps, 0.0, Point::new(x, y));
            prop_assert!(v >= 0.0 && v <= k.k_max());
        }
    }
}
