//! Uniform node grids and masked multilinear interpolation.

use crate::error::{MfgError, Result};
use crate::geometry::DomainSpec;
use crate::{Point, Scalar};

/// Uniform node grid of spacing `dx` (one or two dimensional).
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceGrid<T> {
    dim: usize,
    origin: Point<T>,
    dx: T,
    nx: usize,
    ny: usize,
}

/// Interpolation weights of a point: up to four `(node index, weight)` pairs summing to one.
#[derive(Clone, Copy, Debug)]
pub struct Stencil<T> {
    len: usize,
    idx: [usize; 4],
    w: [T; 4],
}

impl<T: Scalar> Stencil<T> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        (0..self.len).map(move |k| (self.idx[k], self.w[k]))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Weight carried by node `i` (zero if absent).
    pub fn weight_of(&self, i: usize) -> T {
        self.iter().filter(|(j, _)| *j == i).map(|(_, w)| w).fold(T::zero(), |a, b| a + b)
    }
}

impl<T: Scalar> SpaceGrid<T> {
    pub fn new(dim: usize, origin: Point<T>, dx: T, nx: usize, ny: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(MfgError::InvalidArgument(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if !(dx > T::zero() && dx.is_finite()) || nx < 2 || (dim == 2 && ny < 2) || (dim == 1 && ny != 1) {
            return Err(MfgError::InvalidArgument("grid needs dx > 0 and at least two nodes per axis".into()));
        }
        Ok(Self { dim, origin, dx, nx, ny })
    }

    /// Grid covering the bounding box of `dom` with `pad` extra cells on every side.
    pub fn covering(dom: &DomainSpec<T>, dx: T, pad: usize) -> Result<Self> {
        if !(dx > T::zero() && dx.is_finite()) {
            return Err(MfgError::InvalidArgument("dx must be positive".into()));
        }
        let (lo, hi) = dom.bounding_box();
        let cells = |a: T, b: T| ((b - a) / dx - T::lit(1e-9)).ceil().to_usize().unwrap_or(0).max(1);
        let p = T::of(pad) * dx;
        let nx = cells(lo.x, hi.x) + 1 + 2 * pad;
        if dom.dim() == 1 {
            Self::new(1, Point::on_line(lo.x - p), dx, nx, 1)
        } else {
            let ny = cells(lo.y, hi.y) + 1 + 2 * pad;
            Self::new(2, Point::new(lo.x - p, lo.y - p), dx, nx, ny)
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dx(&self) -> T {
        self.dx
    }

    pub fn origin(&self) -> Point<T> {
        self.origin
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn node(&self, idx: usize) -> Point<T> {
        let (i, j) = self.ij(idx);
        self.node_ij(i, j)
    }

    #[inline]
    pub fn node_ij(&self, i: usize, j: usize) -> Point<T> {
        let x = self.origin.x + T::of(i) * self.dx;
        if self.dim == 1 {
            Point::on_line(x)
        } else {
            Point::new(x, self.origin.y + T::of(j) * self.dx)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = Point<T>> + '_ {
        (0..self.len()).map(move |k| self.node(k))
    }

    /// Upper corner of the grid box.
    pub fn extent(&self) -> Point<T> {
        self.node_ij(self.nx - 1, self.ny - 1)
    }

    /// Axis neighbours of a node (two in 1-D, up to four in 2-D).
    pub fn axis_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.ij(idx);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let offs: &[(isize, isize)] = if self.dim == 1 { &[(-1, 0), (1, 0)] } else { &[(-1, 0), (1, 0), (0, -1), (0, 1)] };
        offs.iter().filter_map(move |(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && a < nx && b >= 0 && b < ny).then(|| self.index(a as usize, b as usize))
        })
    }

    /// Axis and diagonal neighbours with index greater than `idx` (each pair visited once).
    pub fn forward_neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.ij(idx);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let offs: &[(isize, isize)] = if self.dim == 1 { &[(1, 0)] } else { &[(1, 0), (0, 1), (1, 1), (-1, 1)] };
        offs.iter().filter_map(move |(di, dj)| {
            let (a, b) = (i as isize + di, j as isize + dj);
            (a >= 0 && a < nx && b >= 0 && b < ny).then(|| self.index(a as usize, b as usize))
        })
    }

    /// Clamps a point into the grid box.
    pub fn clamp(&self, p: Point<T>) -> Point<T> {
        let hi = self.extent();
        Point::new(p.x.clamp_to(self.origin.x, hi.x), if self.dim == 1 { T::zero() } else { p.y.clamp_to(self.origin.y, hi.y) })
    }

    fn axis(&self, v: T, o: T, n: usize) -> Option<(usize, T)> {
        let f = (v - o) / self.dx;
        let slack = T::lit(1e-9);
        if !(f >= -slack && f <= T::of(n - 1) + slack) {
            return None;
        }
        let i = f.floor().max(T::zero()).to_usize()?.min(n - 2);
        let frac = (f - T::of(i)).clamp_to(T::zero(), T::one());
        Some((i, frac))
    }

    /// Multilinear stencil of `p`. Nodes outside `active` are dropped and the remaining
    /// weights renormalized; `None` if `p` is off the grid or no active weight remains.
    pub fn stencil(&self, p: Point<T>, active: Option<&[bool]>) -> Option<Stencil<T>> {
        let (i, fx) = self.axis(p.x, self.origin.x, self.nx)?;
        let mut st = Stencil { len: 0, idx: [0; 4], w: [T::zero(); 4] };
        let mut push = |idx: usize, w: T| {
            if w > T::lit(1e-13) && active.is_none_or(|a| a[idx]) {
                st.idx[st.len] = idx;
                st.w[st.len] = w;
                st.len += 1;
            }
        };
        if self.dim == 1 {
            push(i, T::one() - fx);
            push(i + 1, fx);
        } else {
            let (j, fy) = self.axis(p.y, self.origin.y, self.ny)?;
            let (gx, gy) = (T::one() - fx, T::one() - fy);
            push(self.index(i, j), gx * gy);
            push(self.index(i + 1, j), fx * gy);
            push(self.index(i, j + 1), gx * fy);
            push(self.index(i + 1, j + 1), fx * fy);
        }
        let total: T = st.w[..st.len].iter().copied().sum();
        if st.len == 0 || total <= T::lit(1e-12) {
            return None;
        }
        for w in &mut st.w[..st.len] {
            *w = *w / total;
        }
        Some(st)
    }

    /// Masked interpolation of nodal `values`. Infinite corner values propagate.
    pub fn interpolate(&self, values: &[T], active: Option<&[bool]>, p: Point<T>) -> Option<T> {
        let st = self.stencil(p, active)?;
        let mut acc = T::zero();
        for (k, w) in st.iter() {
            let v = values[k];
            if v.is_nan() {
                return None;
            }
            if v.is_infinite() {
                return Some(T::infinity());
            }
            acc = acc + w * v;
        }
        Some(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid2() -> SpaceGrid<f64> {
        SpaceGrid::new(2, Point::new(-1.0, -1.0), 0.25, 9, 9).unwrap()
    }

    #[test]
    fn covering_grid_contains_domain_and_padding() {
        let dom = DomainSpec::disk(Point::new(0.0, 0.0), 1.0).unwrap();
        let g = SpaceGrid::covering(&dom, 0.1, 2).unwrap();
        assert_abs_diff_eq!(g.origin().x, -1.2, epsilon = 1e-12);
        assert!(g.extent().x >= 1.2 - 1e-9);
        assert_eq!(g.shape(), (25, 25));
        let line = DomainSpec::interval(0.0, 1.0).unwrap();
        let g = SpaceGrid::covering(&line, 0.01, 0).unwrap();
        assert_eq!(g.shape(), (101, 1));
        assert_abs_diff_eq!(g.node(100).x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_reproduces_affine_functions() {
        let g = grid2();
        let f = |p: Point<f64>| 2.0 * p.x - 3.0 * p.y + 0.5;
        let vals: Vec<f64> = g.nodes().map(f).collect();
        for q in [Point::new(0.1, 0.3), Point::new(-0.99, 0.77), Point::new(1.0, 1.0)] {
            assert_abs_diff_eq!(g.interpolate(&vals, None, q).unwrap(), f(q), epsilon = 1e-12);
        }
        assert!(g.interpolate(&vals, None, Point::new(1.5, 0.0)).is_none());
    }

    #[test]
    fn masked_stencil_renormalizes() {
        let g = grid2();
        let mut active = vec![true; g.len()];
        let q = Point::new(0.1, 0.1);
        let st = g.stencil(q, None).unwrap();
        let (first, _) = st.iter().next().unwrap();
        active[first] = false;
        let st = g.stencil(q, Some(&active)).unwrap();
        assert_eq!(st.len(), 3);
        let s: f64 = st.iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
        assert!(st.iter().all(|(k, _)| k != first));
    }

    #[test]
    fn infinity_propagates() {
        let g = SpaceGrid::new(1, Point::on_line(0.0), 0.5, 3, 1).unwrap();
        let vals = [0.0, f64::INFINITY, 1.0];
        assert_eq!(g.interpolate(&vals, None, Point::on_line(0.25)), Some(f64::INFINITY));
        assert_eq!(g.interpolate(&vals, None, Point::on_line(0.0)), Some(0.0));
    }

    proptest! {
        #[test]
        fn stencil_weights_form_partition_of_unity(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let st = grid2().stencil(Point::new(x, y), None).unwrap();
            let s: f64 = st.iter().map(|(_, w)| w).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(st.iter().all(|(_, w)| w > 0.0));
        }
    }
}
