//! Semi-Lagrangian value functions of the minimal-time problem, descent sets and audits.

mod descent;

pub use descent::{descent_rate, maximal_descent_directions, normalized_gradient, NormalizedGradient};
pub(crate) use descent::feedback;

use crate::congestion::SpeedField;
use crate::error::{MfgError, Result};
use crate::geometry::{DomainSpec, TargetSpec};
use crate::grid::{SpaceGrid, Stencil};
use crate::penalty::penalized_speed;
use crate::{Point, Scalar};
use rayon::prelude::*;

/// How trajectories are kept in the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint<T> {
    /// Trajectories must stay in the closed domain.
    State,
    /// Unconstrained dynamics with the speed `k_eps` vanishing at distance `eps` from the domain.
    Penalized { eps: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverParams<T> {
    pub dx: T,
    pub dt: T,
    pub n_dir: usize,
    pub sweep_tol: T,
    pub max_sweeps: usize,
    pub h_probe: Vec<T>,
    pub tol_w: T,
    pub dt_traj: T,
    /// Overrides the default horizon `1.25 T_bound`.
    pub horizon: Option<T>,
}

impl<T: Scalar> SolverParams<T> {
    /// Defaults for spacing `dx` and top speed `k_max`: `dt = dx / k_max`, 64 directions in 2-D.
    pub fn new(dim: usize, dx: T, k_max: T) -> Self {
        let dt = dx / k_max;
        let n_dir = if dim == 1 { 2 } else { 64 };
        Self {
            dx,
            dt,
            n_dir,
            sweep_tol: T::lit(1e-10).max(T::epsilon() * T::lit(100.0)),
            max_sweeps: 20_000,
            h_probe: vec![dt, dt * T::two()],
            tol_w: default_tol_w(dim, n_dir),
            dt_traj: dt,
            horizon: None,
        }
    }

    pub fn with_n_dir(mut self, dim: usize, n_dir: usize) -> Self {
        self.n_dir = n_dir;
        self.tol_w = default_tol_w(dim, n_dir);
        self
    }

    pub fn validate(&self, dim: usize, k_max: T) -> Result<()> {
        let bad = |m: String| Err(MfgError::InvalidArgument(m));
        if !(self.dx > T::zero() && self.dt > T::zero() && self.dt_traj > T::zero()) {
            return bad("dx, dt and dt_traj must be positive".into());
        }
        if self.dt > self.dx / k_max * (T::one() + T::lit(1e-9)) {
            return bad(format!("dt = {} exceeds dx / K_max = {}", self.dt, self.dx / k_max));
        }
        if dim == 1 && self.n_dir != 2 {
            return bad("one-dimensional problems use exactly two directions".into());
        }
        if dim == 2 && self.n_dir < 8 {
            return bad("at least 8 directions are needed in 2-D".into());
        }
        if self.h_probe.is_empty() || self.h_probe.iter().any(|h| !(*h > T::zero())) {
            return bad("h_probe must be a nonempty list of positive steps".into());
        }
        if !(self.tol_w > T::zero() && self.sweep_tol > T::zero()) || self.max_sweeps == 0 {
            return bad("tolerances and the sweep budget must be positive".into());
        }
        Ok(())
    }
}

/// Near-minimizer tolerance of the maximal-descent set: half the squared direction spacing
/// (the rate gap between an exact minimizer and its grid neighbour).
pub fn default_tol_w<T: Scalar>(dim: usize, n_dir: usize) -> T {
    if dim == 1 {
        T::half()
    } else {
        let s = T::PI() * T::two() / T::of(n_dir);
        T::half() * s * s
    }
}

/// Sampled unit directions (uniform angles in 2-D, `{-1, +1}` in 1-D).
pub fn directions<T: Scalar>(dim: usize, n_dir: usize) -> Vec<Point<T>> {
    if dim == 1 {
        vec![Point::on_line(-T::one()), Point::on_line(T::one())]
    } else {
        (0..n_dir).map(|k| Point::from_angle(T::PI() * T::two() * T::of(k) / T::of(n_dir))).collect()
    }
}

/// Domain, target and constraint of one optimal control problem.
#[derive(Clone, Debug)]
pub(crate) struct Problem<T> {
    pub dom: DomainSpec<T>,
    pub tgt: TargetSpec<T>,
    pub constraint: Constraint<T>,
    pub dx: T,
}

impl<T: Scalar> Problem<T> {
    pub fn speed(&self, k: &SpeedField<T>, t: T, x: Point<T>) -> T {
        match self.constraint {
            Constraint::State => k.eval(t, x),
            Constraint::Penalized { eps } => penalized_speed(k, &self.dom, eps, t, x),
        }
    }

    /// Admissible version of a step endpoint: projected when within `dx` of the domain,
    /// rejected beyond (state constraints); kept while the penalized speed is positive.
    pub fn admit(&self, foot: Point<T>) -> Option<Point<T>> {
        match self.constraint {
            Constraint::State => {
                let sd = self.dom.signed_distance(foot);
                if sd <= T::zero() {
                    Some(foot)
                } else if sd <= self.dx {
                    self.dom.project_to_domain(foot).ok()
                } else {
                    None
                }
            }
            Constraint::Penalized { eps } => (self.dom.domain_distance(foot) < eps).then_some(foot),
        }
    }

    pub fn node_active(&self, x: Point<T>) -> bool {
        match self.constraint {
            Constraint::State => self.dom.signed_distance(x) <= T::lit(1e-9) * self.dx,
            Constraint::Penalized { eps } => self.dom.domain_distance(x) < eps,
        }
    }

    pub fn gamma_tol(&self) -> T {
        T::lit(1e-9) * self.dx
    }

    pub fn in_target(&self, x: Point<T>) -> bool {
        self.tgt.distance(x) <= self.gamma_tol()
    }

    /// Whether `x` sits on the boundary of a state-constrained domain.
    pub fn on_boundary(&self, x: Point<T>) -> bool {
        matches!(self.constraint, Constraint::State) && self.dom.signed_distance(x) >= -T::lit(1e-9) * self.dx
    }

    fn pad(&self) -> usize {
        match self.constraint {
            Constraint::State => 2,
            Constraint::Penalized { eps } => (eps / self.dx).ceil().to_usize().unwrap_or(0) + 2,
        }
    }
}

/// Value function samples on a space-time grid, together with the problem they solve.
#[derive(Clone, Debug)]
pub struct ValueField<T> {
    pub(crate) problem: Problem<T>,
    params: SolverParams<T>,
    grid: SpaceGrid<T>,
    active: Vec<bool>,
    /// Active nodes plus ghost nodes, the mask used for interpolation.
    support: Vec<bool>,
    gamma: Vec<bool>,
    slices: Vec<Vec<T>>,
    horizon: T,
    t_bound: T,
    k_min: T,
    k_max: T,
    sweeps: usize,
}

impl<T: Scalar> ValueField<T> {
    pub fn grid(&self) -> &SpaceGrid<T> {
        &self.grid
    }

    pub fn params(&self) -> &SolverParams<T> {
        &self.params
    }

    pub fn domain(&self) -> &DomainSpec<T> {
        &self.problem.dom
    }

    pub fn target(&self) -> &TargetSpec<T> {
        &self.problem.tgt
    }

    pub fn constraint(&self) -> Constraint<T> {
        self.problem.constraint
    }

    /// Node mask of the computational domain.
    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Node mask of target nodes (value pinned to zero).
    pub fn target_nodes(&self) -> &[bool] {
        &self.gamma
    }

    pub fn slices(&self) -> &[Vec<T>] {
        &self.slices
    }

    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    /// Time step between slices (the solver step).
    pub fn dt(&self) -> T {
        self.params.dt
    }

    pub fn slice_time(&self, j: usize) -> T {
        if self.slices.len() == 1 {
            T::zero()
        } else {
            T::of(j) * self.params.dt
        }
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    /// `T_bound = D max d_Gamma / K_min` over the closed domain.
    pub fn t_bound(&self) -> T {
        self.t_bound
    }

    pub fn k_min(&self) -> T {
        self.k_min
    }

    pub fn k_max(&self) -> T {
        self.k_max
    }

    /// Gauss-Seidel passes used by the stationary solve.
    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn is_autonomous(&self) -> bool {
        self.slices.len() == 1
    }

    /// Speed of the underlying dynamics (penalized or not) at `(t, x)`.
    pub fn speed(&self, k: &SpeedField<T>, t: T, x: Point<T>) -> T {
        self.problem.speed(k, t, x)
    }

    pub(crate) fn admit(&self, foot: Point<T>) -> Option<Point<T>> {
        self.problem.admit(foot)
    }

    pub fn in_target(&self, x: Point<T>) -> bool {
        self.problem.in_target(x)
    }

    fn eval_slice(&self, j: usize, x: Point<T>) -> T {
        self.grid.interpolate(&self.slices[j], Some(&self.support), x).unwrap_or(T::infinity())
    }

    /// `phi(t, x)`: masked multilinear in space, linear in time, constant past the horizon.
    /// Infinite off the computational domain.
    pub fn eval(&self, t: T, x: Point<T>) -> T {
        let n = self.slices.len();
        if n == 1 || t <= T::zero() {
            return self.eval_slice(0, x);
        }
        let s = t / self.params.dt;
        let j = s.floor().to_usize().unwrap_or(usize::MAX);
        if j >= n - 1 {
            return self.eval_slice(n - 1, x);
        }
        let f = s - T::of(j);
        let a = self.eval_slice(j, x);
        if f == T::zero() {
            return a;
        }
        let b = self.eval_slice(j + 1, x);
        if a.is_infinite() || b.is_infinite() {
            return a.max(b);
        }
        a * (T::one() - f) + b * f
    }

    /// Largest slope between axis-neighbouring finite nodes, over all slices.
    pub fn measured_lipschitz(&self) -> T {
        (0..self.slices.len()).map(|j| self.measured_lipschitz_at(j)).fold(T::zero(), T::max)
    }

    pub fn measured_lipschitz_at(&self, j: usize) -> T {
        let g = &self.grid;
        let s = &self.slices[j];
        (0..g.len())
            .into_par_iter()
            .map(|i| {
                if !self.active[i] || !s[i].is_finite() {
                    return T::zero();
                }
                g.axis_neighbors(i)
                    .filter(|&n| n > i && self.active[n] && s[n].is_finite())
                    .map(|n| (s[i] - s[n]).abs() / g.dx())
                    .fold(T::zero(), T::max)
            })
            .reduce(T::zero, T::max)
    }

    /// Largest `|phi(t_{j+1}, x) - phi(t_j, x)| / dt` over finite nodes.
    pub fn measured_time_lipschitz(&self) -> T {
        self.slices
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                    .map(|(a, b)| (*a - *b).abs() / self.params.dt)
                    .fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max)
    }
}

/// `C = (D K_max / K_min^2) exp(T L K_max^2 / K_min^2)`.
pub fn lipschitz_constant<T: Scalar>(d: T, k_min: T, k_max: T, l: T, t: T) -> T {
    let r = k_max * k_max / (k_min * k_min);
    d * k_max / (k_min * k_min) * (t * l * r).exp()
}

struct Solver<'a, T> {
    problem: &'a Problem<T>,
    grid: &'a SpaceGrid<T>,
    active: &'a [bool],
    support: &'a [bool],
    ghosts: &'a [Ghost<T>],
    ghost_of: &'a [u32],
    gamma: &'a [bool],
    dirs: Vec<Point<T>>,
    dt: T,
}

impl<T: Scalar> Solver<'_, T> {
    /// `min_u [dt + phi_next(x + dt k u)]` at node `idx`. When `stationary`, the node's own
    /// interpolation weight, including the part reached through ghost corners, is solved in closed form.
    fn update(&self, idx: usize, kx: T, next: &[T], stationary: bool) -> T {
        let x = self.grid.node(idx);
        let mut best = T::infinity();
        let dg = self.problem.tgt.distance(x);
        let reach = self.dt * kx;
        if kx > T::zero() && dg <= reach {
            best = dg / kx;
        }
        if !(kx > T::zero()) {
            return best;
        }
        for u in &self.dirs {
            let Some(foot) = self.problem.admit(x + *u * reach) else { continue };
            let Some(st) = self.grid.stencil(foot, Some(self.support)) else { continue };
            let mut acc = self.dt;
            let mut own = T::zero();
            let mut finite = true;
            for (j, w) in st.iter() {
                if stationary && j == idx {
                    own = own + w;
                    continue;
                }
                if stationary && !self.active[j] {
                    match self.ghost_split(j, idx, next) {
                        Some((a, b)) => {
                            acc = acc + w * a;
                            own = own + w * b;
                        }
                        None => {
                            finite = false;
                            break;
                        }
                    }
                    continue;
                }
                let v = next[j];
                if !v.is_finite() {
                    finite = false;
                    break;
                }
                acc = acc + w * v;
            }
            if !finite {
                continue;
            }
            let cand = if own > T::zero() {
                if own >= T::one() - T::lit(1e-12) {
                    continue;
                }
                acc / (T::one() - own)
            } else {
                acc
            };
            if cand < best {
                best = cand;
            }
        }
        best
    }

    /// Ghost `g` as `a + b phi[idx]`.
    fn ghost_split(&self, g: usize, idx: usize, phi: &[T]) -> Option<(T, T)> {
        let ghost = &self.ghosts[self.ghost_of[g] as usize];
        let Some(st) = &ghost.stencil else { return Some((T::zero(), T::zero())) };
        let (mut a, mut b, mut own) = (T::zero(), T::zero(), T::zero());
        for (j, w) in st.iter() {
            if j == g {
                own = own + w;
            } else if j == idx {
                b = b + w;
            } else if phi[j].is_finite() {
                a = a + w * phi[j];
            } else {
                return None;
            }
        }
        if own >= T::one() - T::lit(1e-12) {
            return None;
        }
        let s = T::one() / (T::one() - own);
        Some((a * s, b * s))
    }

    /// Refreshes every ghost node in place; returns the largest change.
    fn update_ghosts(&self, phi: &mut [T], monotone: bool) -> T {
        let mut change = T::zero();
        for ghost in self.ghosts {
            let g = ghost.idx;
            let new = match self.ghost_split(g, g, phi) {
                Some((a, _)) => a,
                None => T::infinity(),
            };
            let old = phi[g];
            if !monotone || new < old {
                let d = if old.is_finite() && new.is_finite() {
                    (old - new).abs()
                } else if old == new {
                    T::zero()
                } else {
                    T::infinity()
                };
                change = change.max(d);
                phi[g] = new;
            }
        }
        change
    }

    fn stationary(&self, k: &SpeedField<T>, t: T, params: &SolverParams<T>) -> Result<(Vec<T>, usize)> {
        let g = self.grid;
        let speed: Vec<T> = (0..g.len())
            .into_par_iter()
            .map(|i| if self.active[i] { self.problem.speed(k, t, g.node(i)) } else { T::zero() })
            .collect();
        let mut phi: Vec<T> = (0..g.len())
            .map(|i| {
                if !self.support[i] {
                    T::nan()
                } else if self.gamma[i] {
                    T::zero()
                } else {
                    T::infinity()
                }
            })
            .collect();
        let (nx, ny) = g.shape();
        let orders: Vec<(bool, bool)> =
            if g.dim() == 1 { vec![(false, false), (true, false)] } else { vec![(false, false), (true, false), (true, true), (false, true)] };
        let mut sweeps = 0;
        loop {
            let mut change = T::zero();
            for &(rev_i, rev_j) in &orders {
                for jj in 0..ny {
                    let j = if rev_j { ny - 1 - jj } else { jj };
                    for ii in 0..nx {
                        let i = if rev_i { nx - 1 - ii } else { ii };
                        let idx = g.index(i, j);
                        if !self.active[idx] || self.gamma[idx] {
                            continue;
                        }
                        let new = self.update(idx, speed[idx], &phi, true);
                        let old = phi[idx];
                        if new < old {
                            let d = if old.is_finite() { old - new } else { T::infinity() };
                            change = change.max(d);
                            phi[idx] = new;
                        }
                    }
                }
                change = change.max(self.update_ghosts(&mut phi, true));
                sweeps += 1;
            }
            if change <= params.sweep_tol {
                return Ok((phi, sweeps));
            }
            if sweeps >= params.max_sweeps {
                return Err(MfgError::NoConvergence { sweeps, residual: change.as_f64() });
            }
        }
    }

    fn backward_step(&self, k: &SpeedField<T>, t: T, next: &[T]) -> Vec<T> {
        let mut phi: Vec<T> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                if !self.active[idx] {
                    if self.support[idx] { next[idx] } else { T::nan() }
                } else if self.gamma[idx] {
                    T::zero()
                } else {
                    let kx = self.problem.speed(k, t, self.grid.node(idx));
                    self.update(idx, kx, next, false)
                }
            })
            .collect();
        for _ in 0..GHOST_PASSES {
            if self.update_ghosts(&mut phi, false) <= T::lit(1e-14) {
                break;
            }
        }
        phi
    }
}

const GHOST_PASSES: usize = 8;

/// Inactive node that can be a corner of a cell meeting the closed domain. Its value extends
/// `phi` constantly along the normal: zero when the projection lies on the target, else the
/// interpolant at the projection.
struct Ghost<T> {
    idx: usize,
    stencil: Option<Stencil<T>>,
}

fn ghost_nodes<T: Scalar>(problem: &Problem<T>, grid: &SpaceGrid<T>, active: &[bool]) -> (Vec<Ghost<T>>, Vec<bool>, Vec<u32>) {
    let mut support = active.to_vec();
    let mut ghost_of = vec![u32::MAX; grid.len()];
    if !matches!(problem.constraint, Constraint::State) {
        return (Vec::new(), support, ghost_of);
    }
    let reach = problem.dx * T::lit(1.5);
    let found: Vec<(usize, Point<T>)> = (0..grid.len())
        .filter(|&i| !active[i] && problem.dom.signed_distance(grid.node(i)) <= reach)
        .filter_map(|i| problem.dom.nearest_point(grid.node(i)).map(|p| (i, p)))
        .collect();
    for (n, &(i, _)) in found.iter().enumerate() {
        support[i] = true;
        ghost_of[i] = n as u32;
    }
    let ghosts = found
        .into_iter()
        .map(|(idx, p)| {
            let stencil = if problem.in_target(p) { None } else { grid.stencil(p, Some(&support)) };
            Ghost { idx, stencil }
        })
        .collect();
    (ghosts, support, ghost_of)
}

/// Problem, grid, active mask, target mask and `T_bound`.
type Prepared<T> = (Problem<T>, SpaceGrid<T>, Vec<bool>, Vec<bool>, T);

fn prepare<T: Scalar>(
    k: &SpeedField<T>,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    params: &SolverParams<T>,
) -> Result<Prepared<T>> {
    params.validate(dom.dim(), k.k_max())?;
    tgt.validate(dom)?;
    if k.grid().dim() != dom.dim() {
        return Err(MfgError::Mismatch("speed field and domain dimensions differ".into()));
    }
    if let Constraint::Penalized { eps } = constraint {
        if !(eps > T::zero() && eps.is_finite()) {
            return Err(MfgError::InvalidArgument("eps must be positive".into()));
        }
    }
    let problem = Problem { dom: dom.clone(), tgt: tgt.clone(), constraint, dx: params.dx };
    let grid = SpaceGrid::covering(dom, params.dx, problem.pad())?;
    let active: Vec<bool> = grid.nodes().map(|x| problem.node_active(x)).collect();
    let gamma: Vec<bool> = grid.nodes().zip(&active).map(|(x, a)| *a && problem.in_target(x)).collect();
    let t_bound = time_bound_on(&grid, dom, tgt, k.k_min(), params.dx);
    Ok((problem, grid, active, gamma, t_bound))
}

fn time_bound_on<T: Scalar>(grid: &SpaceGrid<T>, dom: &DomainSpec<T>, tgt: &TargetSpec<T>, k_min: T, dx: T) -> T {
    let max_dg = grid
        .nodes()
        .filter(|x| dom.signed_distance(*x) <= T::zero())
        .map(|x| tgt.distance(x))
        .fold(T::zero(), T::max);
    dom.geodesic_factor() * (max_dg + dx) / k_min
}

/// `T_bound = D (max d_Gamma + dx) / K_min`, the maximum taken over grid nodes of the closed domain.
pub fn time_bound<T: Scalar>(dom: &DomainSpec<T>, tgt: &TargetSpec<T>, k_min: T, dx: T) -> Result<T> {
    if !(k_min > T::zero()) {
        return Err(MfgError::InvalidArgument("K_min must be positive".into()));
    }
    let grid = SpaceGrid::covering(dom, dx, 2)?;
    Ok(time_bound_on(&grid, dom, tgt, k_min, dx))
}

/// Horizon used by [`solve_value`]: the override, or `1.25 T_bound`.
pub fn default_horizon<T: Scalar>(params: &SolverParams<T>, t_bound: T) -> T {
    params.horizon.unwrap_or(t_bound * T::lit(1.25))
}

/// Number of backward steps of size `dt` covering `horizon`.
pub fn horizon_steps<T: Scalar>(horizon: T, dt: T) -> usize {
    (horizon / dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1)
}

/// Stationary value function for the speed `k(t, .)` frozen at time `t`.
pub fn solve_stationary<T: Scalar>(
    k: &SpeedField<T>,
    t: T,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    params: &SolverParams<T>,
) -> Result<ValueField<T>> {
    let (problem, grid, active, gamma, t_bound) = prepare(k, dom, tgt, constraint, params)?;
    let (ghosts, support, ghost_of) = ghost_nodes(&problem, &grid, &active);
    let solver = Solver {
        problem: &problem,
        grid: &grid,
        active: &active,
        support: &support,
        ghosts: &ghosts,
        ghost_of: &ghost_of,
        gamma: &gamma,
        dirs: directions(dom.dim(), params.n_dir),
        dt: params.dt,
    };
    let (phi, sweeps) = solver.stationary(k, t, params)?;
    let horizon = default_horizon(params, t_bound);
    Ok(ValueField {
        problem: problem.clone(),
        params: params.clone(),
        grid: grid.clone(),
        active: active.clone(),
        support: support.clone(),
        gamma: gamma.clone(),
        slices: vec![phi],
        horizon,
        t_bound,
        k_min: k.k_min(),
        k_max: k.k_max(),
        sweeps,
    })
}

/// Value function on `[0, T_hor]`: stationary at the horizon, then backward semi-Lagrangian
/// recursion. A time-independent speed yields a single-slice field.
pub fn solve_value<T: Scalar>(
    k: &SpeedField<T>,
    dom: &DomainSpec<T>,
    tgt: &TargetSpec<T>,
    constraint: Constraint<T>,
    params: &SolverParams<T>,
) -> Result<ValueField<T>> {
    let (problem, grid, active, gamma, t_bound) = prepare(k, dom, tgt, constraint, params)?;
    let horizon = default_horizon(params, t_bound);
    if horizon < t_bound {
        return Err(MfgError::Horizon(format!("T_hor = {horizon} is below T_bound = {t_bound}")));
    }
    let (ghosts, support, ghost_of) = ghost_nodes(&problem, &grid, &active);
    let solver = Solver {
        problem: &problem,
        grid: &grid,
        active: &active,
        support: &support,
        ghosts: &ghosts,
        ghost_of: &ghost_of,
        gamma: &gamma,
        dirs: directions(dom.dim(), params.n_dir),
        dt: params.dt,
    };
    let build = |slices: Vec<Vec<T>>, horizon: T, sweeps: usize| ValueField {
        problem: problem.clone(),
        params: params.clone(),
        grid: grid.clone(),
        active: active.clone(),
        support: support.clone(),
        gamma: gamma.clone(),
        slices,
        horizon,
        t_bound,
        k_min: k.k_min(),
        k_max: k.k_max(),
        sweeps,
    };
    if k.is_autonomous() {
        let (phi, sweeps) = solver.stationary(k, T::zero(), params)?;
        return Ok(build(vec![phi], horizon, sweeps));
    }
    let n = horizon_steps(horizon, params.dt);
    let t_end = T::of(n) * params.dt;
    let (last, sweeps) = solver.stationary(k, t_end, params)?;
    let again = solver.backward_step(k, t_end, &last);
    let scale = T::one() + t_bound;
    let drift = last
        .iter()
        .zip(&again)
        .filter(|(a, b)| a.is_finite() || b.is_finite())
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), |m, d| if d.is_nan() { m } else { m.max(d) });
    if drift > T::lit(1e-6) * scale {
        return Err(MfgError::Horizon(format!("value at T_hor = {t_end} is not stationary (drift {drift})")));
    }
    let mut slices = vec![Vec::new(); n + 1];
    slices[n] = last;
    for j in (0..n).rev() {
        let t = T::of(j) * params.dt;
        slices[j] = solver.backward_step(k, t, &slices[j + 1]);
    }
    Ok(build(slices, t_end, sweeps))
}
