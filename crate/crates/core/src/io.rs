//! Artifact formats: little-endian binary grids, 17-digit CSV tables, JSON documents.

use crate::congestion::SpeedField;
use crate::error::{MfgError, Result};
use crate::grid::SpaceGrid;
use crate::hjb::ValueField;
use crate::trajectories::Trajectory;
use crate::transport::ParticleEnsemble;
use crate::{Point, Scalar};
use serde::Serialize;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

pub const GRID_MAGIC: [u8; 8] = *b"MFGGRID\0";
pub const GRID_VERSION: u32 = 1;
/// Bytes before the payload.
pub const GRID_HEADER_LEN: usize = 8 + 4 * 5 + 8 * 5;

/// Time-indexed scalar field on a uniform grid, the in-memory form of a binary grid file.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDump {
    pub dim: u32,
    pub nt: u32,
    pub nx: u32,
    pub ny: u32,
    pub dt: f64,
    pub dx: f64,
    pub origin: Point<f64>,
    pub t0: f64,
    /// `data[(s * ny + j) * nx + i]`, NaN where undefined.
    pub data: Vec<f64>,
}

impl GridDump {
    fn from_slices<T: Scalar>(grid: &SpaceGrid<T>, dt: T, slices: &[Vec<T>], active: Option<&[bool]>) -> Self {
        let (nx, ny) = grid.shape();
        let mut data = Vec::with_capacity(slices.len() * grid.len());
        for s in slices {
            for (i, v) in s.iter().enumerate() {
                let keep = active.is_none_or(|a| a[i]);
                data.push(if keep { v.as_f64() } else { f64::NAN });
            }
        }
        Self {
            dim: grid.dim() as u32,
            nt: slices.len() as u32,
            nx: nx as u32,
            ny: ny as u32,
            dt: dt.as_f64(),
            dx: grid.dx().as_f64(),
            origin: grid.origin().cast(),
            t0: 0.0,
            data,
        }
    }

    /// Value function slices; inactive nodes become NaN, unreachable nodes stay infinite.
    pub fn of_value<T: Scalar>(phi: &ValueField<T>) -> Self {
        Self::from_slices(phi.grid(), phi.dt(), phi.slices(), Some(phi.active()))
    }

    pub fn of_speed<T: Scalar>(k: &SpeedField<T>) -> Self {
        Self::from_slices(k.grid(), k.dt(), k.slices(), None)
    }

    /// Kernel-smoothed particle density (tent kernel of radius `2 dx`, unit mass per slice).
    pub fn of_density<T: Scalar>(grid: &SpaceGrid<T>, dt: T, timeline: &[ParticleEnsemble<T>]) -> Self {
        let h = grid.dx().as_f64() * 2.0;
        let dim = grid.dim();
        let norm = if dim == 1 { h } else { std::f64::consts::PI * h * h / 3.0 };
        let slices: Vec<Vec<f64>> = timeline
            .iter()
            .map(|m| {
                let mut rho = vec![0.0; grid.len()];
                for (p, w) in m.positions().iter().zip(m.weights()) {
                    let p: Point<f64> = p.cast();
                    for (idx, r) in rho.iter_mut().enumerate() {
                        let d = grid.node(idx).cast::<f64>().dist(p);
                        if d < h {
                            *r += w.as_f64() * (1.0 - d / h) / norm;
                        }
                    }
                }
                rho
            })
            .collect();
        let g = SpaceGrid::new(dim, grid.origin().cast::<f64>(), grid.dx().as_f64(), grid.shape().0, grid.shape().1)
            .expect("grid shape already validated");
        Self::from_slices(&g, dt.as_f64(), &slices, None)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(GRID_HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(&GRID_MAGIC);
        for v in [GRID_VERSION, self.dim, self.nt, self.nx, self.ny] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.dt, self.dx, self.origin.x, self.origin.y, self.t0] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| MfgError::Format(m.to_string());
        if bytes.len() < GRID_HEADER_LEN {
            return Err(bad("grid file shorter than its header"));
        }
        if bytes[..8] != GRID_MAGIC {
            return Err(bad("bad magic, not a grid file"));
        }
        let u = |k: usize| u32::from_le_bytes(bytes[8 + 4 * k..12 + 4 * k].try_into().unwrap());
        let f = |k: usize| f64::from_le_bytes(bytes[28 + 8 * k..36 + 8 * k].try_into().unwrap());
        if u(0) != GRID_VERSION {
            return Err(MfgError::Format(format!("unsupported grid version {}", u(0))));
        }
        let (dim, nt, nx, ny) = (u(1), u(2), u(3), u(4));
        let n = nt as usize * nx as usize * ny as usize;
        if bytes.len() != GRID_HEADER_LEN + 8 * n {
            return Err(MfgError::Format(format!("payload holds {} bytes, header promises {}", bytes.len() - GRID_HEADER_LEN, 8 * n)));
        }
        let data = bytes[GRID_HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { dim, nt, nx, ny, dt: f(0), dx: f(1), origin: Point::new(f(2), f(3)), t0: f(4), data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| MfgError::io(path, e))?;
        Self::from_bytes(&buf)
    }

    /// Slice `s` as a speed or value table on its grid.
    pub fn slice(&self, s: usize) -> &[f64] {
        let n = self.nx as usize * self.ny as usize;
        &self.data[s * n..(s + 1) * n]
    }
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::File::create(path).and_then(|mut f| f.write_all(bytes)).map_err(|e| MfgError::io(path, e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| MfgError::Format(e.to_string()))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn coord_header(dim: usize, prefix: &str) -> String {
    if dim == 1 {
        format!("{prefix}x")
    } else {
        format!("{prefix}x,{prefix}y")
    }
}

fn push_point<T: Scalar>(line: &mut String, dim: usize, p: Point<T>) {
    let _ = write!(line, ",{}", fmt17(p.x.as_f64()));
    if dim == 2 {
        let _ = write!(line, ",{}", fmt17(p.y.as_f64()));
    }
}

/// Long-format table `id,t,x[,y],ux[,uy]`, one row per sample of every trajectory.
pub fn trajectories_csv<T: Scalar>(dim: usize, trajs: &[Trajectory<T>]) -> String {
    let mut out = format!("id,t,{},{}\n", coord_header(dim, ""), coord_header(dim, "u"));
    for (id, g) in trajs.iter().enumerate() {
        for (i, (x, u)) in g.positions().iter().zip(g.controls()).enumerate() {
            let mut line = format!("{id},{}", fmt17(g.sample_time(i).as_f64()));
            push_point(&mut line, dim, *x);
            push_point(&mut line, dim, *u);
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// `x[,y],weight` rows.
pub fn ensemble_csv<T: Scalar>(m: &ParticleEnsemble<T>) -> String {
    let mut out = format!("{},weight\n", coord_header(m.dim(), ""));
    for (p, w) in m.positions().iter().zip(m.weights()) {
        let mut line = String::new();
        push_point(&mut line, m.dim(), *p);
        let _ = write!(line, ",{}", fmt17(w.as_f64()));
        out.push_str(&line[1..]);
        out.push('\n');
    }
    out
}

/// `x[,y],phi` for every active node of slice `s`.
pub fn value_slice_csv<T: Scalar>(phi: &ValueField<T>, s: usize) -> String {
    let dim = phi.grid().dim();
    let mut out = format!("{},phi\n", coord_header(dim, ""));
    for (idx, v) in phi.slices()[s].iter().enumerate() {
        if !phi.active()[idx] {
            continue;
        }
        let mut line = String::new();
        push_point(&mut line, dim, phi.grid().node(idx));
        let _ = write!(line, ",{}", fmt17(v.as_f64()));
        out.push_str(&line[1..]);
        out.push('\n');
    }
    out
}
