//! Weighted particle ensembles, trajectory bundles and the Wasserstein-1 distance.

use crate::error::{MfgError, Result};
use crate::trajectories::Trajectory;
use crate::{Point, Scalar};
use rayon::prelude::*;
use std::cmp::Ordering;

/// Largest support size solved exactly by the transportation simplex.
pub const EXACT_SUPPORT_LIMIT: usize = 2000;

/// Discrete probability measure `sum_i w_i delta_{x_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble<T> {
    dim: usize,
    positions: Vec<Point<T>>,
    weights: Vec<T>,
}

fn mass_tolerance<T: Scalar>(n: usize) -> T {
    T::lit(1e-12).max(T::epsilon() * T::of(4 * n.max(1)))
}

impl<T: Scalar> ParticleEnsemble<T> {
    pub fn new(dim: usize, positions: Vec<Point<T>>, weights: Vec<T>) -> Result<Self> {
        if positions.len() != weights.len() || positions.is_empty() {
            return Err(MfgError::InvalidArgument("ensemble needs one weight per position and at least one particle".into()));
        }
        if !(dim == 1 || dim == 2) {
            return Err(MfgError::InvalidArgument(format!("ensemble dimension must be 1 or 2, got {dim}")));
        }
        if weights.iter().any(|w| !(*w >= T::zero() && w.is_finite())) || positions.iter().any(|p| !p.is_finite()) {
            return Err(MfgError::InvalidArgument("weights must be nonnegative and positions finite".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > mass_tolerance(weights.len()) {
            return Err(MfgError::Unnormalized { total: total.as_f64() });
        }
        let positions = if dim == 1 { positions.into_iter().map(|p| Point::on_line(p.x)).collect() } else { positions };
        Ok(Self { dim, positions, weights })
    }

    pub fn uniform(dim: usize, positions: Vec<Point<T>>) -> Result<Self> {
        let n = positions.len();
        let w = T::one() / T::of(n.max(1));
        Self::new(dim, positions, vec![w; n])
    }

    pub fn dirac(dim: usize, p: Point<T>) -> Self {
        Self::new(dim, vec![p], vec![T::one()]).expect("dirac is normalized")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point<T>] {
        &self.positions
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn total_mass(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Mass within distance `r` of `x`.
    pub fn mass_within(&self, x: Point<T>, r: T) -> T {
        self.positions.iter().zip(&self.weights).filter(|(p, _)| p.dist(x) <= r).fold(T::zero(), |a, (_, w)| a + *w)
    }

    fn to_f64(&self) -> (Vec<Point<f64>>, Vec<f64>) {
        (self.positions.iter().map(|p| p.cast()).collect(), self.weights.iter().map(|w| w.as_f64()).collect())
    }
}

/// Trajectory bundle `Q = sum_i w_i delta_{gamma_i}` sharing a start time of zero.
#[derive(Clone, Debug)]
pub struct FlowMeasure<T> {
    dim: usize,
    trajectories: Vec<Trajectory<T>>,
    weights: Vec<T>,
    horizon: T,
}

impl<T: Scalar> FlowMeasure<T> {
    pub fn new(dim: usize, trajectories: Vec<Trajectory<T>>, weights: Vec<T>, horizon: T) -> Result<Self> {
        if trajectories.len() != weights.len() || trajectories.is_empty() {
            return Err(MfgError::InvalidArgument("flow measure needs one weight per trajectory".into()));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > mass_tolerance(weights.len()) {
            return Err(MfgError::Unnormalized { total: total.as_f64() });
        }
        Ok(Self { dim, trajectories, weights, horizon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trajectories(&self) -> &[Trajectory<T>] {
        &self.trajectories
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// `m_t = e_t # Q`.
    pub fn pushforward(&self, t: T) -> Result<ParticleEnsemble<T>> {
        if t > self.horizon * (T::one() + T::lit(1e-12)) || t < T::zero() {
            return Err(MfgError::BeyondHorizon { t: t.as_f64(), horizon: self.horizon.as_f64() });
        }
        let positions = self.trajectories.par_iter().map(|g| g.position_at(t)).collect();
        Ok(ParticleEnsemble { dim: self.dim, positions, weights: self.weights.clone() })
    }

    /// Pushforwards at `t_j = j dt`, `j = 0..n`.
    pub fn timeline(&self, dt: T, n: usize) -> Result<Vec<ParticleEnsemble<T>>> {
        (0..n).map(|j| self.pushforward((T::of(j) * dt).min(self.horizon))).collect()
    }
}

/// W1 value with a certified error bound (zero when solved exactly).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W1Estimate<T> {
    pub value: T,
    pub error_bound: T,
}

/// Exact Wasserstein-1 distance (Euclidean ground cost).
///
/// Supports larger than [`EXACT_SUPPORT_LIMIT`] in two dimensions are clustered first;
/// use [`w1_estimate`] to obtain the corresponding error bound.
pub fn w1<T: Scalar>(mu: &ParticleEnsemble<T>, nu: &ParticleEnsemble<T>) -> Result<T> {
    Ok(w1_estimate(mu, nu)?.value)
}

pub fn w1_estimate<T: Scalar>(mu: &ParticleEnsemble<T>, nu: &ParticleEnsemble<T>) -> Result<W1Estimate<T>> {
    for e in [mu, nu] {
        let total = e.total_mass();
        if (total - T::one()).abs() > mass_tolerance(e.len()) {
            return Err(MfgError::Unnormalized { total: total.as_f64() });
        }
    }
    if mu.dim != nu.dim {
        return Err(MfgError::Mismatch("ensembles of different dimension".into()));
    }
    let (a, b) = (merge_duplicates(mu.to_f64()), merge_duplicates(nu.to_f64()));
    // canonical argument order makes the result exactly symmetric
    let (a, b) = if canonical_cmp(&a, &b) == Ordering::Greater { (b, a) } else { (a, b) };
    if a == b {
        return Ok(W1Estimate { value: T::zero(), error_bound: T::zero() });
    }
    if mu.dim == 1 {
        return Ok(W1Estimate { value: T::lit(w1_line(&a, &b)), error_bound: T::zero() });
    }
    let mut err = 0.0;
    let (a, b) = (reduce_support(a, &mut err), reduce_support(b, &mut err));
    let value = transport_simplex(&a.1, &b.1, |i, j| a.0[i].dist(b.0[j]))?;
    Ok(W1Estimate { value: T::lit(value), error_bound: T::lit(err) })
}

type Support = (Vec<Point<f64>>, Vec<f64>);

fn canonical_cmp(a: &Support, b: &Support) -> Ordering {
    let key = |s: &Support| -> Vec<f64> { s.0.iter().flat_map(|p| [p.x, p.y]).chain(s.1.iter().copied()).collect() };
    let (ka, kb) = (key(a), key(b));
    ka.len().cmp(&kb.len()).then_with(|| {
        ka.iter().zip(&kb).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
    })
}

/// Sorts a support lexicographically and merges coincident atoms.
fn merge_duplicates((pos, w): Support) -> Support {
    let mut idx: Vec<usize> = (0..pos.len()).filter(|&i| w[i] > 0.0).collect();
    idx.sort_by(|&i, &j| pos[i].x.total_cmp(&pos[j].x).then(pos[i].y.total_cmp(&pos[j].y)).then(i.cmp(&j)));
    let mut out: Support = (Vec::new(), Vec::new());
    for i in idx {
        if out.0.last() == Some(&pos[i]) {
            *out.1.last_mut().expect("paired") += w[i];
        } else {
            out.0.push(pos[i]);
            out.1.push(w[i]);
        }
    }
    out
}

/// `int |F_mu - F_nu| dx` on sorted supports.
fn w1_line(a: &Support, b: &Support) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut total = 0.0;
    let mut last: Option<f64> = None;
    while i < a.0.len() || j < b.0.len() {
        let x = match (a.0.get(i), b.0.get(j)) {
            (Some(p), Some(q)) => p.x.min(q.x),
            (Some(p), None) => p.x,
            (None, Some(q)) => q.x,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last {
            total += (fa - fb).abs() * (x - prev);
        }
        while i < a.0.len() && a.0[i].x == x {
            fa += a.1[i];
            i += 1;
        }
        while j < b.0.len() && b.0[j].x == x {
            fb += b.1[j];
            j += 1;
        }
        last = Some(x);
    }
    total
}

/// Clusters a support down to at most [`EXACT_SUPPORT_LIMIT`] atoms (x-strips, then y-runs),
/// adding the cost of moving every atom to its cluster barycenter to `err`.
fn reduce_support(s: Support, err: &mut f64) -> Support {
    let n = s.0.len();
    if n <= EXACT_SUPPORT_LIMIT {
        return s;
    }
    let groups = EXACT_SUPPORT_LIMIT;
    let strips = (groups as f64).sqrt().ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s.0[i].x.total_cmp(&s.0[j].x).then(i.cmp(&j)));
    let per_strip = n.div_ceil(strips);
    for chunk in order.chunks_mut(per_strip) {
        chunk.sort_by(|&i, &j| s.0[i].y.total_cmp(&s.0[j].y).then(i.cmp(&j)));
    }
    let per_group = n.div_ceil(groups);
    let mut out: Support = (Vec::new(), Vec::new());
    for chunk in order.chunks(per_group) {
        let m: f64 = chunk.iter().map(|&i| s.1[i]).sum();
        if m <= 0.0 {
            continue;
        }
        let c = chunk.iter().fold(Point::zero(), |acc, &i| acc + s.0[i] * (s.1[i] / m));
        *err += chunk.iter().map(|&i| s.1[i] * s.0[i].dist(c)).sum::<f64>();
        out.0.push(c);
        out.1.push(m);
    }
    out
}

/// Minimum-cost transportation between supplies `a` and demands `b` by the
/// transportation simplex (north-west corner start, u-v potentials on the basis tree).
fn transport_simplex(a: &[f64], b: &[f64], cost: impl Fn(usize, usize) -> f64) -> Result<f64> {
    let (n, m) = (a.len(), b.len());
    let c: Vec<f64> = (0..n * m).map(|k| cost(k / m, k % m)).collect();
    let cmax = c.iter().copied().fold(0.0, f64::max);
    let tol = 1e-13 * (1.0 + cmax);
    let nodes = n + m;

    // basis cells (row, col, flow) and node adjacency
    let mut cells: Vec<(usize, usize, f64)> = Vec::with_capacity(nodes - 1);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0, 0);
    for _ in 0..nodes - 1 {
        let q = ra[i].min(rb[j]).max(0.0);
        ra[i] -= q;
        rb[j] -= q;
        adj[i].push(cells.len());
        adj[n + j].push(cells.len());
        cells.push((i, j, q));
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || ra[i] <= rb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let mut pot = vec![0.0; nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut parent_cell = vec![usize::MAX; nodes];
    let mut depth = vec![0usize; nodes];
    let mut stack = Vec::with_capacity(nodes);
    let block = ((n * m) as f64).sqrt().ceil().max(64.0) as usize;
    let mut cursor = 0usize;
    let max_pivots = 200 * nodes * nodes.max(50);

    for _ in 0..max_pivots {
        // potentials and tree structure rooted at row 0
        parent[0] = usize::MAX;
        depth[0] = 0;
        pot[0] = 0.0;
        stack.clear();
        stack.push(0);
        let mut seen = vec![false; nodes];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &cid in &adj[u] {
                let (r, s, _) = cells[cid];
                let v = if u < n { n + s } else { r };
                if seen[v] {
                    continue;
                }
                seen[v] = true;
                pot[v] = c[r * m + s] - pot[u];
                parent[v] = u;
                parent_cell[v] = cid;
                depth[v] = depth[u] + 1;
                stack.push(v);
            }
        }

        // block search for the entering cell
        let total = n * m;
        let mut entering = None;
        let mut scanned = 0;
        while scanned < total {
            let mut best = -tol;
            let end = (scanned + block).min(total);
            for off in scanned..end {
                let k = (cursor + off) % total;
                let (r, s) = (k / m, k % m);
                let rc = c[k] - pot[r] - pot[n + s];
                if rc < best {
                    best = rc;
                    entering = Some((r, s));
                }
            }
            scanned = end;
            if entering.is_some() {
                cursor = (cursor + scanned) % total;
                break;
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(cells.iter().map(|&(r, s, f)| f * c[r * m + s]).sum());
        };

        // cycle: entering cell, then the tree path from column ej to row ei
        let (mut x, mut y) = (ei, n + ej);
        let (mut up_row, mut up_col) = (Vec::new(), Vec::new());
        while depth[x] > depth[y] {
            up_row.push(parent_cell[x]);
            x = parent[x];
        }
        while depth[y] > depth[x] {
            up_col.push(parent_cell[y]);
            y = parent[y];
        }
        while x != y {
            up_row.push(parent_cell[x]);
            x = parent[x];
            up_col.push(parent_cell[y]);
            y = parent[y];
        }
        let path: Vec<usize> = up_col.into_iter().chain(up_row.into_iter().rev()).collect();
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for &cid in path.iter().step_by(2) {
            if cells[cid].2 < theta {
                theta = cells[cid].2;
                leave = cid;
            }
        }
        for (k, &cid) in path.iter().enumerate() {
            if k % 2 == 0 {
                cells[cid].2 = (cells[cid].2 - theta).max(0.0);
            } else {
                cells[cid].2 += theta;
            }
        }
        let (lr, ls, _) = cells[leave];
        adj[lr].retain(|&id| id != leave);
        adj[n + ls].retain(|&id| id != leave);
        cells[leave] = (ei, ej, theta);
        adj[ei].push(leave);
        adj[n + ej].push(leave);
    }
    Err(MfgError::NoConvergence { sweeps: max_pivots, residual: f64::NAN })
}

/// `max_Phi int Phi d(mu - nu)` over the probes, each checked to be 1-Lipschitz on the supports.
pub fn w1_dual_lower_bound<T: Scalar>(
    mu: &ParticleEnsemble<T>,
    nu: &ParticleEnsemble<T>,
    probes: &[&dyn Fn(Point<T>) -> T],
) -> Result<T> {
    for e in [mu, nu] {
        let total = e.total_mass();
        if (total - T::one()).abs() > mass_tolerance(e.len()) {
            return Err(MfgError::Unnormalized { total: total.as_f64() });
        }
    }
    let stride = |n: usize| (n / 200).max(1);
    let sample: Vec<Point<T>> = mu
        .positions
        .iter()
        .step_by(stride(mu.len()))
        .chain(nu.positions.iter().step_by(stride(nu.len())))
        .copied()
        .collect();
    let mut best = T::zero();
    for phi in probes {
        let vals: Vec<T> = sample.iter().map(|p| phi(*p)).collect();
        for a in 0..sample.len() {
            for b in a + 1..sample.len() {
                let d = sample[a].dist(sample[b]);
                let dv = (vals[a] - vals[b]).abs();
                if dv > d * (T::one() + T::lit(1e-9)) + T::lit(1e-12) {
                    return Err(MfgError::NonLipschitz { slope: (dv / d).as_f64() });
                }
            }
        }
        let integral = |e: &ParticleEnsemble<T>| -> T { e.positions.iter().zip(&e.weights).map(|(p, w)| *w * phi(*p)).sum() };
        best = best.max(integral(mu) - integral(nu));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64], ws: &[f64]) -> ParticleEnsemble<f64> {
        ParticleEnsemble::new(1, xs.iter().map(|x| Point::on_line(*x)).collect(), ws.to_vec()).unwrap()
    }

    fn plane(rng: &mut ChaCha8Rng, n: usize) -> ParticleEnsemble<f64> {
        let pts = (0..n).map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let fix: f64 = w[1..].iter().sum();
        w[0] = 1.0 - fix;
        ParticleEnsemble::new(2, pts, w).unwrap()
    }

    /// Equal-weight W1 by enumerating every assignment.
    fn brute_force(a: &[Point<f64>], b: &[Point<f64>]) -> f64 {
        fn rec(k: usize, a: &[Point<f64>], b: &[Point<f64>], used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if k == a.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    rec(k + 1, a, b, used, acc + a[k].dist(b[j]), best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(0, a, b, &mut vec![false; b.len()], 0.0, &mut best);
        best / a.len() as f64
    }

    #[test]
    fn examples() {
        let a = ParticleEnsemble::dirac(2, Point::new(0.0, 0.0));
        let b = ParticleEnsemble::dirac(2, Point::new(3.0, 4.0));
        assert_eq!(w1(&a, &b).unwrap(), 5.0);
        assert_eq!(w1(&a, &a).unwrap(), 0.0);
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = line(&[0.5], &[1.0]);
        assert_eq!(w1(&mu, &nu).unwrap(), 0.5);
        assert!(matches!(ParticleEnsemble::new(1, vec![Point::on_line(0.0)], vec![0.7]), Err(MfgError::Unnormalized { .. })));
    }

    #[test]
    fn dual_examples() {
        let a = line(&[0.0], &[1.0]);
        let b = line(&[1.0], &[1.0]);
        let coord = |p: Point<f64>| p.x;
        let neg = |p: Point<f64>| -p.x;
        assert_abs_diff_eq!(w1_dual_lower_bound(&b, &a, &[&coord, &neg]).unwrap(), 1.0);
        assert_eq!(w1_dual_lower_bound(&a, &a, &[&coord]).unwrap(), 0.0);
        let steep = |p: Point<f64>| 2.0 * p.x;
        assert!(matches!(w1_dual_lower_bound(&a, &b, &[&steep]), Err(MfgError::NonLipschitz { .. })));
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = line(&[0.5], &[1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (c, s) = (rng.random_range(-1.0..2.0), rng.random_range(-1.0..1.0));
            let probe = move |p: Point<f64>| s * (p.x - c).abs();
            let v = w1_dual_lower_bound(&mu, &nu, &[&probe]).unwrap();
            assert!((0.0..=0.5 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn simplex_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in 1..=6 {
            for _ in 0..10 {
                let a: Vec<_> = (0..n).map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                let b: Vec<_> = (0..n).map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                let mu = ParticleEnsemble::uniform(2, a.clone()).unwrap();
                let nu = ParticleEnsemble::uniform(2, b.clone()).unwrap();
                assert_abs_diff_eq!(w1(&mu, &nu).unwrap(), brute_force(&a, &b), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn simplex_matches_line_formula_on_collinear_supports() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let (n, m) = (rng.random_range(1..40), rng.random_range(1..40));
            let mk = |rng: &mut ChaCha8Rng, k: usize| {
                let xs: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
                let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = raw.iter().sum();
                let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
                let rest: f64 = w[1..].iter().sum();
                w[0] = 1.0 - rest;
                (xs, w)
            };
            let (xa, wa) = mk(&mut rng, n);
            let (xb, wb) = mk(&mut rng, m);
            let on_line = line(&xa, &wa);
            let on_line_b = line(&xb, &wb);
            // same atoms placed on a tilted line in the plane
            let dir = Point::new(0.6, 0.8);
            let lift = |xs: &[f64], ws: &[f64]| ParticleEnsemble::new(2, xs.iter().map(|x| dir * *x).collect(), ws.to_vec()).unwrap();
            let exact = w1(&on_line, &on_line_b).unwrap();
            assert_abs_diff_eq!(w1(&lift(&xa, &wa), &lift(&xb, &wb)).unwrap(), exact, epsilon = 1e-10);
        }
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let (a, b, c) = (plane(&mut rng, 15), plane(&mut rng, 12), plane(&mut rng, 9));
            let ab = w1(&a, &b).unwrap();
            assert_eq!(ab, w1(&b, &a).unwrap());
            let (bc, ac) = (w1(&b, &c).unwrap(), w1(&a, &c).unwrap());
            assert!(ac <= ab + bc + 1e-9);
            assert_eq!(w1(&a, &a).unwrap(), 0.0);
            let probe = |p: Point<f64>| p.x * 0.6 - p.y * 0.8;
            assert!(w1_dual_lower_bound(&a, &b, &[&probe]).unwrap() <= ab + 1e-9);
        }
    }

    #[test]
    fn large_supports_report_a_clustering_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let a = plane(&mut rng, 2500);
        let b = ParticleEnsemble::dirac(2, Point::new(5.0, 0.0));
        let est = w1_estimate(&a, &b).unwrap();
        let exact: f64 = a.positions().iter().zip(a.weights()).map(|(p, w)| w * p.dist(Point::new(5.0, 0.0))).sum();
        assert!(est.error_bound > 0.0);
        assert!((est.value - exact).abs() <= est.error_bound + 1e-12);
    }

    proptest! {
        #[test]
        fn line_distance_matches_sorted_matching(xs in proptest::collection::vec(-5.0f64..5.0, 1..30), shift in -2.0f64..2.0) {
            // equal-weight quantile matching of a sample against its sorted shift
            let n = xs.len();
            let ys: Vec<f64> = xs.iter().rev().map(|x| x + shift).collect();
            let w = vec![1.0 / n as f64; n];
            let mu = ParticleEnsemble::new(1, xs.iter().map(|x| Point::on_line(*x)).collect(), w.clone());
            let nu = ParticleEnsemble::new(1, ys.iter().map(|x| Point::on_line(*x)).collect(), w);
            if let (Ok(mu), Ok(nu)) = (mu, nu) {
                prop_assert!((w1(&mu, &nu).unwrap() - shift.abs()).abs() < 1e-9);
            }
        }
    }
}
