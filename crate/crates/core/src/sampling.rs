//! Seeded low-discrepancy samples of the initial measure `m0`.

use crate::error::{MfgError, Result};
use crate::geometry::DomainSpec;
use crate::transport::ParticleEnsemble;
use crate::{Point, Scalar};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Initial measure description.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec<T> {
    /// Uniform on the box intersected with the closed domain.
    UniformBox { min: Point<T>, max: Point<T>, n: usize },
    /// Product normal with per-axis deviations, truncated to `|z| <= clip` and to the closed domain.
    GaussianClipped { mean: Point<T>, std: Point<T>, clip: T, n: usize },
    /// Explicit atoms; weights default to uniform and are normalized.
    Points { points: Vec<Point<T>>, weights: Option<Vec<T>> },
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton points in `[0,1)^2` (bases 2, 3) under a seeded Cranley-Patterson rotation.
struct Halton {
    shift: (f64, f64),
    next: u64,
}

impl Halton {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { shift: (rng.random::<f64>(), rng.random::<f64>()), next: 1 }
    }

    fn draw(&mut self) -> (f64, f64) {
        let i = self.next;
        self.next += 1;
        ((radical_inverse(i, 2) + self.shift.0).fract(), (radical_inverse(i, 3) + self.shift.1).fract())
    }
}

const MAX_DRAWS_PER_POINT: usize = 1000;

fn collect<T: Scalar>(
    dom: &DomainSpec<T>,
    n: usize,
    seed: u64,
    mut map: impl FnMut(f64, f64) -> Option<Point<T>>,
) -> Result<ParticleEnsemble<T>> {
    if n == 0 {
        return Err(MfgError::InvalidArgument("particle count must be positive".into()));
    }
    let dim = dom.dim();
    let mut seq = Halton::new(seed);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n * MAX_DRAWS_PER_POINT {
        if pts.len() == n {
            break;
        }
        let (u, v) = seq.draw();
        if let Some(p) = map(u, v) {
            let p = if dim == 1 { Point::on_line(p.x) } else { p };
            if dom.signed_distance(p) <= T::zero() {
                pts.push(p);
            }
        }
    }
    if pts.len() < n {
        return Err(MfgError::InvalidArgument("initial measure support barely meets the domain".into()));
    }
    ParticleEnsemble::uniform(dim, pts)
}

/// Deterministic `m0` sample: identical `(spec, dom, seed)` give identical ensembles.
pub fn sample<T: Scalar>(spec: &InitialSpec<T>, dom: &DomainSpec<T>, seed: u64) -> Result<ParticleEnsemble<T>> {
    match spec {
        InitialSpec::UniformBox { min, max, n } => {
            let dim = dom.dim();
            if !(max.x >= min.x && (dim == 1 || max.y >= min.y)) {
                return Err(MfgError::InvalidArgument("box max must dominate min".into()));
            }
            collect(dom, *n, seed, |u, v| {
                Some(Point::new(min.x + (max.x - min.x) * T::lit(u), min.y + (max.y - min.y) * T::lit(v)))
            })
        }
        InitialSpec::GaussianClipped { mean, std, clip, n } => {
            if !(std.x > T::zero() && (dom.dim() == 1 || std.y > T::zero()) && *clip > T::zero()) {
                return Err(MfgError::InvalidArgument("deviations and clip must be positive".into()));
            }
            let normal = Normal::standard();
            collect(dom, *n, seed, |u, v| {
                let (zx, zy) = (normal.inverse_cdf(u.max(1e-300)), normal.inverse_cdf(v.max(1e-300)));
                let (zx, zy) = (T::lit(zx), T::lit(zy));
                let zy = if dom.dim() == 1 { T::zero() } else { zy };
                (zx.abs() <= *clip && zy.abs() <= *clip).then(|| Point::new(mean.x + std.x * zx, mean.y + std.y * zy))
            })
        }
        InitialSpec::Points { points, weights } => {
            if points.is_empty() {
                return Err(MfgError::InvalidArgument("point list is empty".into()));
            }
            if let Some(p) = points.iter().find(|p| dom.signed_distance(**p) > T::zero()) {
                return Err(MfgError::InvalidArgument(format!("initial point ({}, {}) lies outside the domain", p.x, p.y)));
            }
            let dim = dom.dim();
            let pts: Vec<Point<T>> = points.iter().map(|p| if dim == 1 { Point::on_line(p.x) } else { *p }).collect();
            match weights {
                None => ParticleEnsemble::uniform(dim, pts),
                Some(w) => {
                    let total: T = w.iter().copied().sum();
                    if w.len() != pts.len() || w.iter().any(|v| !(*v >= T::zero())) || !(total > T::zero()) {
                        return Err(MfgError::InvalidArgument("weights must be nonnegative, one per point, not all zero".into()));
                    }
                    ParticleEnsemble::new(dim, pts, w.iter().map(|v| *v / total).collect())
                }
            }
        }
    }
}
