//! Congestion-dependent speed law and its frozen space-time samples.

use crate::error::{MfgError, Result};
use crate::geometry::TargetSpec;
use crate::grid::SpaceGrid;
use crate::transport::ParticleEnsemble;
use crate::{Point, Scalar};
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelProfile {
    /// `1 - |z|/r` on the ball of radius `r`.
    Tent,
    /// `1 - |z|^2/r^2` on the ball of radius `r`.
    Quadratic,
}

/// Radial interaction kernel `chi` with `chi(0) = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel<T> {
    pub profile: KernelProfile,
    pub radius: T,
}

impl<T: Scalar> Kernel<T> {
    pub fn new(profile: KernelProfile, radius: T) -> Result<Self> {
        if !(radius > T::zero() && radius.is_finite()) {
            return Err(MfgError::InvalidArgument("kernel radius must be positive".into()));
        }
        Ok(Self { profile, radius })
    }

    pub fn eval(&self, z: Point<T>) -> T {
        let s = z.norm() / self.radius;
        if s >= T::one() {
            return T::zero();
        }
        match self.profile {
            KernelProfile::Tent => T::one() - s,
            KernelProfile::Quadratic => T::one() - s * s,
        }
    }

    pub fn lipschitz(&self) -> T {
        match self.profile {
            KernelProfile::Tent => T::one() / self.radius,
            KernelProfile::Quadratic => T::two() / self.radius,
        }
    }
}

/// Axis-aligned box carrying a constant weight.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightBox<T> {
    pub min: Point<T>,
    pub max: Point<T>,
    pub value: T,
}

/// Nonnegative weight `eta` applied to each particle.
#[derive(Clone, Debug, PartialEq)]
pub enum Weight<T> {
    Constant(T),
    /// `value` away from the target, zero within `radius` of it.
    ArrivedDiscount { value: T, target: TargetSpec<T>, radius: T },
    /// First matching box wins, `default` elsewhere.
    Table { default: T, boxes: Vec<WeightBox<T>> },
}

impl<T: Scalar> Weight<T> {
    pub fn eval(&self, y: Point<T>) -> T {
        match self {
            Weight::Constant(v) => *v,
            Weight::ArrivedDiscount { value, target, radius } => {
                if target.distance(y) <= *radius {
                    T::zero()
                } else {
                    *value
                }
            }
            Weight::Table { default, boxes } => boxes
                .iter()
                .find(|b| y.x >= b.min.x && y.x <= b.max.x && y.y >= b.min.y && y.y <= b.max.y)
                .map_or(*default, |b| b.value),
        }
    }

    pub fn sup(&self) -> T {
        match self {
            Weight::Constant(v) => *v,
            Weight::ArrivedDiscount { value, .. } => *value,
            Weight::Table { default, boxes } => boxes.iter().map(|b| b.value).fold(*default, T::max),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Weight::Constant(v) => *v >= T::zero(),
            Weight::ArrivedDiscount { value, radius, .. } => *value >= T::zero() && *radius >= T::zero(),
            Weight::Table { default, boxes } => *default >= T::zero() && boxes.iter().all(|b| b.value >= T::zero()),
        };
        if ok && self.sup().is_finite() {
            Ok(())
        } else {
            Err(MfgError::InvalidArgument("weights must be finite and nonnegative".into()))
        }
    }
}

/// `K(mu, x) = g(sum_i w_i chi(x - y_i) eta(y_i))` with `g(s) = clamp(K_max - alpha s, K_min, K_max)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CongestionLaw<T> {
    kernel: Kernel<T>,
    weight: Weight<T>,
    k_min: T,
    k_max: T,
    alpha: T,
}

impl<T: Scalar> CongestionLaw<T> {
    pub fn new(kernel: Kernel<T>, weight: Weight<T>, k_min: T, k_max: T, alpha: T) -> Result<Self> {
        weight.validate()?;
        if !(k_min > T::zero() && k_min <= k_max && k_max.is_finite()) {
            return Err(MfgError::InvalidArgument("speed bounds need 0 < K_min <= K_max".into()));
        }
        if !(alpha >= T::zero() && alpha.is_finite()) {
            return Err(MfgError::InvalidArgument("alpha must be nonnegative".into()));
        }
        Ok(Self { kernel, weight, k_min, k_max, alpha })
    }

    /// Interaction-free law: constant speed `k`.
    pub fn constant(k: T) -> Result<Self> {
        Self::new(Kernel::new(KernelProfile::Tent, T::one())?, Weight::Constant(T::one()), k, k, T::zero())
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn weight(&self) -> &Weight<T> {
        &self.weight
    }

    pub fn k_min(&self) -> T {
        self.k_min
    }

    pub fn k_max(&self) -> T {
        self.k_max
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Spatial Lipschitz constant of `x -> K(mu, x)` for probability measures `mu`.
    pub fn lipschitz(&self) -> T {
        self.alpha * self.kernel.lipschitz() * self.weight.sup()
    }

    pub fn g(&self, s: T) -> T {
        (self.k_max - self.alpha * s).clamp_to(self.k_min, self.k_max)
    }

    pub fn local_density(&self, ens: &ParticleEnsemble<T>, x: Point<T>) -> T {
        ens.positions()
            .iter()
            .zip(ens.weights())
            .map(|(y, w)| *w * self.kernel.eval(x - *y) * self.weight.eval(*y))
            .fold(T::zero(), |a, b| a + b)
    }

    pub fn speed(&self, ens: &ParticleEnsemble<T>, x: Point<T>) -> T {
        self.g(self.local_density(ens, x))
    }

    /// Samples `k(t_j, x_i) = K(m_{t_j}, x_i)` for the ensembles of `timeline`, spaced `dt` apart from `t = 0`.
    pub fn freeze(&self, timeline: &[ParticleEnsemble<T>], dt: T, grid: &SpaceGrid<T>) -> Result<SpeedField<T>> {
        if timeline.is_empty() {
            return Err(MfgError::Mismatch("empty measure timeline".into()));
        }
        if let Some(e) = timeline.iter().find(|e| e.dim() != grid.dim()) {
            return Err(MfgError::Mismatch(format!("ensemble dimension {} on a {}-D grid", e.dim(), grid.dim())));
        }
        let slices = timeline
            .iter()
            .map(|ens| {
                if self.alpha == T::zero() {
                    return vec![self.k_max; grid.len()];
                }
                let index = DensityIndex::new(self, ens);
                (0..grid.len()).into_par_iter().map(|i| self.g(index.density(self, grid.node(i)))).collect()
            })
            .collect();
        SpeedField::new(grid.clone(), dt, slices, self.k_min, self.k_max)
    }
}

/// Uniform bins of side `r_chi` over the particle cloud, for kernel-radius culling.
struct DensityIndex<T> {
    origin: Point<T>,
    cell: T,
    nbx: usize,
    nby: usize,
    bins: Vec<Vec<(Point<T>, T)>>,
}

impl<T: Scalar> DensityIndex<T> {
    fn new(law: &CongestionLaw<T>, ens: &ParticleEnsemble<T>) -> Self {
        let cell = law.kernel.radius;
        let pts = ens.positions();
        let (mut lo, mut hi) = (pts[0], pts[0]);
        for p in pts {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let count = |a: T, b: T| ((b - a) / cell).floor().to_usize().unwrap_or(0).min(1 << 12) + 1;
        let (nbx, nby) = (count(lo.x, hi.x), count(lo.y, hi.y));
        let mut bins = vec![Vec::new(); nbx * nby];
        for (y, w) in pts.iter().zip(ens.weights()) {
            let mass = *w * law.weight.eval(*y);
            if mass > T::zero() {
                let (bx, by) = Self::bin_of(lo, cell, nbx, nby, *y);
                bins[by * nbx + bx].push((*y, mass));
            }
        }
        Self { origin: lo, cell, nbx, nby, bins }
    }

    fn bin_of(origin: Point<T>, cell: T, nbx: usize, nby: usize, p: Point<T>) -> (usize, usize) {
        let f = |v: T, o: T, n: usize| ((v - o) / cell).floor().max(T::zero()).to_usize().unwrap_or(0).min(n - 1);
        (f(p.x, origin.x, nbx), f(p.y, origin.y, nby))
    }

    fn density(&self, law: &CongestionLaw<T>, x: Point<T>) -> T {
        let fx = ((x.x - self.origin.x) / self.cell).floor();
        let fy = ((x.y - self.origin.y) / self.cell).floor();
        let mut acc = T::zero();
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                let (bx, by) = (fx.to_i64().unwrap_or(i64::MIN / 2) + di, fy.to_i64().unwrap_or(i64::MIN / 2) + dj);
                if bx < 0 || by < 0 || bx >= self.nbx as i64 || by >= self.nby as i64 {
                    continue;
                }
                for (y, m) in &self.bins[by as usize * self.nbx + bx as usize] {
                    acc = acc + *m * law.kernel.eval(x - *y);
                }
            }
        }
        acc
    }
}

/// Speed samples on a space-time grid starting at `t = 0`.
///
/// Multilinear in space (clamped to the grid box), linear in time, constant after the last slice.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedField<T> {
    grid: SpaceGrid<T>,
    dt: T,
    slices: Vec<Vec<T>>,
    k_min: T,
    k_max: T,
}

impl<T: Scalar> SpeedField<T> {
    pub fn new(grid: SpaceGrid<T>, dt: T, slices: Vec<Vec<T>>, k_min: T, k_max: T) -> Result<Self> {
        if slices.is_empty() || slices.iter().any(|s| s.len() != grid.len()) {
            return Err(MfgError::Mismatch("speed slices do not match the grid".into()));
        }
        if !(dt > T::zero()) {
            return Err(MfgError::InvalidArgument("speed time step must be positive".into()));
        }
        if !(k_min > T::zero() && k_min <= k_max) {
            return Err(MfgError::InvalidArgument("speed bounds need 0 < K_min <= K_max".into()));
        }
        let slack = T::lit(1e-12) * k_max;
        if let Some(v) = slices.iter().flatten().find(|v| !(**v >= k_min - slack && **v <= k_max + slack)) {
            return Err(MfgError::InvalidArgument(format!("speed sample {v} outside [{k_min}, {k_max}]")));
        }
        Ok(Self { grid, dt, slices, k_min, k_max })
    }

    /// Time-independent constant field.
    pub fn constant(grid: SpaceGrid<T>, k: T) -> Result<Self> {
        let n = grid.len();
        Self::new(grid, T::one(), vec![vec![k; n]], k, k)
    }

    /// Samples `f(t_j, x_i)` at `t_j = j dt`, `j < n_slices`, declaring bounds `[k_min, k_max]`.
    pub fn from_fn(
        grid: SpaceGrid<T>,
        dt: T,
        n_slices: usize,
        k_min: T,
        k_max: T,
        f: impl Fn(T, Point<T>) -> T,
    ) -> Result<Self> {
        let slices = (0..n_slices).map(|j| grid.nodes().map(|x| f(T::of(j) * dt, x)).collect()).collect();
        Self::new(grid, dt, slices, k_min, k_max)
    }

    pub fn grid(&self) -> &SpaceGrid<T> {
        &self.grid
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn slices(&self) -> &[Vec<T>] {
        &self.slices
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn final_time(&self) -> T {
        T::of(self.slices.len() - 1) * self.dt
    }

    pub fn k_min(&self) -> T {
        self.k_min
    }

    pub fn k_max(&self) -> T {
        self.k_max
    }

    pub fn is_autonomous(&self) -> bool {
        self.slices.len() == 1
    }

    fn eval_slice(&self, j: usize, x: Point<T>) -> T {
        let p = self.grid.clamp(x);
        self.grid.interpolate(&self.slices[j], None, p).unwrap_or(self.k_min).clamp_to(self.k_min, self.k_max)
    }

    pub fn eval(&self, t: T, x: Point<T>) -> T {
        let n = self.slices.len();
        if n == 1 || t <= T::zero() {
            return self.eval_slice(0, x);
        }
        let s = t / self.dt;
        let j = s.floor().to_usize().unwrap_or(usize::MAX);
        if j >= n - 1 {
            return self.eval_slice(n - 1, x);
        }
        let f = s - T::of(j);
        let a = self.eval_slice(j, x);
        if f == T::zero() {
            return a;
        }
        a * (T::one() - f) + self.eval_slice(j + 1, x) * f
    }

    /// Single-slice field holding `k(t, .)`.
    pub fn frozen_at(&self, t: T) -> Self {
        let slice = self.grid.nodes().map(|x| self.eval(t, x)).collect();
        Self { grid: self.grid.clone(), dt: self.dt, slices: vec![slice], k_min: self.k_min, k_max: self.k_max }
    }

    /// Convex combination `(1 - lambda) self + lambda other` on matching grids. A single-slice
    /// field is broadcast over the time slices of the other.
    pub fn blend(&self, other: &Self, lambda: T) -> Result<Self> {
        let (na, nb) = (self.slices.len(), other.slices.len());
        let same_time = na == nb && (na == 1 || self.dt == other.dt);
        if self.grid != other.grid || !(same_time || na == 1 || nb == 1) {
            return Err(MfgError::Mismatch("cannot blend speed fields on different grids".into()));
        }
        let n = na.max(nb);
        let dt = if na >= nb { self.dt } else { other.dt };
        let slices = (0..n)
            .map(|j| {
                let a = &self.slices[j.min(na - 1)];
                let b = &other.slices[j.min(nb - 1)];
                a.iter().zip(b).map(|(u, v)| *u * (T::one() - lambda) + *v * lambda).collect()
            })
            .collect();
        Self::new(self.grid.clone(), dt, slices, self.k_min.min(other.k_min), self.k_max.max(other.k_max))
    }

    /// Drops repeated time slices when every slice equals the first.
    pub fn compact(self) -> Self {
        if self.slices.len() > 1 && self.slices.iter().all(|s| *s == self.slices[0]) {
            let mut slices = self.slices;
            slices.truncate(1);
            return Self { slices, ..self };
        }
        self
    }

    /// Largest finite-difference slope between neighbouring nodes (axis and diagonal), over all slices.
    pub fn measured_lipschitz(&self) -> T {
        let g = &self.grid;
        self.slices
            .iter()
            .map(|s| {
                (0..g.len())
                    .flat_map(|i| g.forward_neighbors(i).map(move |j| (i, j)))
                    .map(|(i, j)| (s[i] - s[j]).abs() / g.node(i).dist(g.node(j)))
                    .fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point<f64> {
        Point::new(x, y)
    }

    fn law(alpha: f64) -> CongestionLaw<f64> {
        CongestionLaw::new(Kernel::new(KernelProfile::Tent, 0.5).unwrap(), Weight::Constant(1.0), 0.25, 1.0, alpha).unwrap()
    }

    #[test]
    fn density_examples() {
        let l = law(1.0);
        let far = ParticleEnsemble::dirac(2, p(2.0, 0.0));
        assert_eq!(l.local_density(&far, p(0.0, 0.0)), 0.0);
        let here = ParticleEnsemble::dirac(2, p(0.1, 0.1));
        assert_eq!(l.local_density(&here, p(0.1, 0.1)), 1.0);
        // direct summation, written out by hand
        let ens = ParticleEnsemble::new(2, vec![p(0.0, 0.0), p(0.3, 0.0), p(0.0, 0.4)], vec![0.5, 0.25, 0.25]).unwrap();
        let x = p(0.1, 0.0);
        let expected = 0.5 * (1.0 - 0.1 / 0.5) + 0.25 * (1.0 - 0.2 / 0.5) + 0.25 * (1.0 - (0.01f64 + 0.16).sqrt() / 0.5);
        assert_abs_diff_eq!(l.local_density(&ens, x), expected, epsilon = 1e-15);
    }

    #[test]
    fn speed_examples() {
        let l = law(2.0);
        assert_eq!(l.g(0.0), 1.0);
        assert_eq!(l.g((1.0 - 0.25) / 2.0), 0.25);
        assert_eq!(l.g(10.0), 0.25);
        assert_abs_diff_eq!(l.g(0.1), 1.0 - 2.0 * 0.1);
        assert_abs_diff_eq!(l.lipschitz(), 2.0 * 2.0);
        let q = CongestionLaw::new(Kernel::new(KernelProfile::Quadratic, 0.5).unwrap(), Weight::Constant(3.0), 0.25, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(q.lipschitz(), 2.0 * 4.0 * 3.0);
    }

    #[test]
    fn weights() {
        let tgt = TargetSpec::points(vec![p(0.0, 0.0)]);
        let w = Weight::ArrivedDiscount { value: 2.0, target: tgt, radius: 0.1 };
        assert_eq!(w.eval(p(0.05, 0.0)), 0.0);
        assert_eq!(w.eval(p(0.5, 0.0)), 2.0);
        let t = Weight::Table { default: 1.0, boxes: vec![WeightBox { min: p(0.0, 0.0), max: p(1.0, 1.0), value: 3.0 }] };
        assert_eq!(t.eval(p(0.5, 0.5)), 3.0);
        assert_eq!(t.eval(p(1.5, 0.5)), 1.0);
        assert_eq!(t.sup(), 3.0);
    }

    fn grid() -> SpaceGrid<f64> {
        SpaceGrid::covering(&DomainSpec::disk(p(0.0, 0.0), 1.0).unwrap(), 0.05, 2).unwrap()
    }

    fn random_ensemble(rng: &mut ChaCha8Rng, n: usize) -> ParticleEnsemble<f64> {
        let pts = (0..n).map(|_| p(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7))).collect();
        ParticleEnsemble::uniform(2, pts).unwrap()
    }

    #[test]
    fn freeze_examples() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ens = random_ensemble(&mut rng, 50);
        let free = law(0.0).freeze(&[ens.clone(), ens.clone()], 0.1, &g).unwrap();
        assert!(free.slices().iter().flatten().all(|v| *v == 1.0));
        let l = law(3.0);
        let frozen = l.freeze(&[ens.clone(), ens.clone()], 0.1, &g).unwrap();
        assert_eq!(frozen.slices()[0], frozen.slices()[1]);
        // moving single particle: spot check nodes against the direct formula
        let timeline: Vec<_> = (0..5).map(|j| ParticleEnsemble::dirac(2, p(-0.5 + 0.2 * j as f64, 0.1))).collect();
        let k = l.freeze(&timeline, 0.1, &g).unwrap();
        for _ in 0..100 {
            let (j, i) = (rng.random_range(0..5), rng.random_range(0..g.len()));
            assert_abs_diff_eq!(k.slices()[j][i], l.speed(&timeline[j], g.node(i)), epsilon = 1e-14);
        }
        assert!(matches!(l.freeze(&[], 0.1, &g), Err(MfgError::Mismatch(_))));
        let line = ParticleEnsemble::dirac(1, Point::on_line(0.0));
        assert!(matches!(l.freeze(&[line], 0.1, &g), Err(MfgError::Mismatch(_))));
    }

    #[test]
    fn indexed_density_matches_direct_summation() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ens = random_ensemble(&mut rng, 300);
        let l = law(0.7);
        let k = l.freeze(std::slice::from_ref(&ens), 1.0, &g).unwrap();
        for i in 0..g.len() {
            assert_abs_diff_eq!(k.slices()[0][i], l.speed(&ens, g.node(i)), epsilon = 1e-12);
        }
    }

    #[test]
    fn frozen_field_respects_published_lipschitz_constant() {
        let g = grid();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for alpha in [0.3, 1.0, 5.0] {
            let l = law(alpha);
            let timeline: Vec<_> = (0..4).map(|_| random_ensemble(&mut rng, 40)).collect();
            let k = l.freeze(&timeline, 0.1, &g).unwrap();
            assert!(k.measured_lipschitz() <= l.lipschitz() + 1e-6);
        }
    }

    #[test]
    fn speed_field_interpolation() {
        let g = SpaceGrid::new(1, Point::on_line(0.0), 0.5, 3, 1).unwrap();
        let k = SpeedField::new(g, 0.5, vec![vec![1.0; 3], vec![2.0; 3]], 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(k.eval(0.25, Point::on_line(0.3)), 1.5);
        assert_abs_diff_eq!(k.eval(7.0, Point::on_line(0.3)), 2.0);
        assert_abs_diff_eq!(k.eval(-1.0, Point::on_line(5.0)), 1.0);
        assert!(SpeedField::new(k.grid().clone(), 0.5, vec![vec![3.0; 3]], 1.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn speed_stays_in_bounds_and_decreases_with_mass(
            xs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20),
            qx in -1.0f64..1.0, qy in -1.0f64..1.0, alpha in 0.0f64..20.0
        ) {
            let l = law(alpha);
            let pts: Vec<_> = xs.iter().map(|(a, b)| p(*a, *b)).collect();
            let n = pts.len();
            let ens = ParticleEnsemble::uniform(2, pts.clone()).unwrap();
            let x = p(qx, qy);
            let s = l.speed(&ens, x);
            prop_assert!((0.25..=1.0).contains(&s));
            // one more particle at x, weights rescaled to keep the original mass unchanged
            let mut more = pts;
            more.push(x);
            let mut w = vec![1.0 / n as f64; n];
            w.push(1.0 / n as f64);
            let total: f64 = w.iter().sum();
            let heavier = l.g(w.iter().zip(&more).map(|(w, y)| w * l.kernel().eval(x - *y)).sum::<f64>());
            prop_assert!(heavier <= s + 1e-15, "{heavier} > {s} (total {total})");
        }
    }
}
