//! Phase-space grids, field storage, norms and level-set measures.
//!
//! Positions live on a torus of length `x_period` per axis with samples
//! `x_i = -P/2 + i dx`. Velocities live in the box `[-V, V]^n` with samples
//! `v_j = -V + j dv`; each sample owns the cell of side `dv` centred on it.
//! Stored time slices are uniformly spaced on `[t0, t1]`.

use crate::error::{param, Error, Result};
use crate::fft::CubeFft;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Uniform grid over (t, x, v).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub n: usize,
    pub x_period: f64,
    pub v_halfwidth: f64,
    pub nx: usize,
    pub nv: usize,
    pub t0: f64,
    pub t1: f64,
    pub nt: usize,
}

/// Smallest admissible velocity half-width.
pub const MIN_V_HALFWIDTH: f64 = 8.0;

/// Build a grid, rejecting sizes that are not powers of two.
#[allow(clippy::too_many_arguments)]
pub fn make_grid(
    n: usize,
    x_period: f64,
    v_halfwidth: f64,
    nx: usize,
    nv: usize,
    t0: f64,
    t1: f64,
    nt: usize,
) -> Result<PhaseGrid> {
    let g = PhaseGrid { n, x_period, v_halfwidth, nx, nv, t0, t1, nt };
    g.validate()?;
    Ok(g)
}

/// Reject orders outside (0, 1) or with 2s >= n.
pub fn check_order(n: usize, s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return param(format!("order s = {s} must lie in (0, 1)"));
    }
    if 2.0 * s >= n as f64 {
        return param(format!("order s = {s} violates 2s < n for n = {n}"));
    }
    Ok(())
}

impl PhaseGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Grid(m));
        if self.n != 1 && self.n != 2 {
            return bad(format!("dimension n = {} must be 1 or 2", self.n));
        }
        for (name, size) in [("nx", self.nx), ("nv", self.nv)] {
            if size < 2 || !size.is_power_of_two() {
                return bad(format!("{name} = {size} is not a power of two >= 2"));
            }
        }
        if !(self.x_period > 0.0) || !self.x_period.is_finite() {
            return bad(format!("x_period = {} must be positive", self.x_period));
        }
        if !(self.v_halfwidth >= MIN_V_HALFWIDTH) || !self.v_halfwidth.is_finite() {
            return bad(format!("v_halfwidth = {} must be at least {MIN_V_HALFWIDTH}", self.v_halfwidth));
        }
        if self.nt == 0 {
            return bad("nt must be at least 1".into());
        }
        if !(self.t0 <= self.t1) {
            return bad(format!("time window [{}, {}] is empty", self.t0, self.t1));
        }
        if self.nt == 1 && self.t0 != self.t1 {
            return bad("a single time slice needs t0 == t1".into());
        }
        if self.nt > 1 && self.t0 == self.t1 {
            return bad("several time slices need t0 < t1".into());
        }
        Ok(())
    }

    /// Grid with the order `s` attached; checks 2s < n.
    pub fn check_order(&self, s: f64) -> Result<()> {
        check_order(self.n, s)
    }

    pub fn vgrid(&self) -> VGrid {
        VGrid { n: self.n, nv: self.nv, halfwidth: self.v_halfwidth }
    }

    pub fn xgrid(&self) -> XGrid {
        XGrid { n: self.n, nx: self.nx, period: self.x_period }
    }

    /// Spacing between stored slices (1 for a single slice).
    pub fn dt(&self) -> f64 {
        if self.nt > 1 {
            (self.t1 - self.t0) / (self.nt - 1) as f64
        } else {
            1.0
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        if self.nt > 1 {
            self.t0 + (self.t1 - self.t0) * k as f64 / (self.nt - 1) as f64
        } else {
            self.t0
        }
    }

    pub fn nx_total(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn nv_total(&self) -> usize {
        self.nv.pow(self.n as u32)
    }

    /// Samples per time slice.
    pub fn slice_len(&self) -> usize {
        self.nx_total() * self.nv_total()
    }

    pub fn len(&self) -> usize {
        self.nt * self.slice_len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, k: usize, ix: usize, iv: usize) -> usize {
        (k * self.nx_total() + ix) * self.nv_total() + iv
    }

    /// Volume of one (t, x, v) cell.
    pub fn cell_volume(&self) -> f64 {
        self.dt() * self.xgrid().cell_volume() * self.vgrid().cell_volume()
    }

    /// Same extents with a different number of stored slices.
    pub fn with_nt(&self, nt: usize) -> Result<PhaseGrid> {
        let mut g = self.clone();
        g.nt = nt;
        g.validate()?;
        Ok(g)
    }
}

/// Velocity box `[-V, V]^n` with `nv` samples per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VGrid {
    pub n: usize,
    pub nv: usize,
    pub halfwidth: f64,
}

impl VGrid {
    pub fn new(n: usize, nv: usize, halfwidth: f64) -> Result<VGrid> {
        make_grid(n, 2.0 * PI, halfwidth, 2, nv, 0.0, 0.0, 1).map(|g| g.vgrid())
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.halfwidth / self.nv as f64
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.halfwidth + self.dv() * j as f64
    }

    /// Index of the sample at v = 0 along one axis.
    pub fn center_index(&self) -> usize {
        self.nv / 2
    }

    pub fn len(&self) -> usize {
        self.nv.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn period(&self) -> f64 {
        2.0 * self.halfwidth
    }

    pub fn cell_volume(&self) -> f64 {
        self.dv().powi(self.n as i32)
    }

    /// Per-axis indices of a flat index.
    pub fn multi(&self, flat: usize) -> [usize; 2] {
        if self.n == 1 {
            [flat, 0]
        } else {
            [flat / self.nv, flat % self.nv]
        }
    }

    pub fn flat(&self, idx: [usize; 2]) -> usize {
        if self.n == 1 {
            idx[0]
        } else {
            idx[0] * self.nv + idx[1]
        }
    }

    pub fn point(&self, flat: usize) -> [f64; 2] {
        let m = self.multi(flat);
        if self.n == 1 {
            [self.coord(m[0]), 0.0]
        } else {
            [self.coord(m[0]), self.coord(m[1])]
        }
    }

    pub fn norm(&self, flat: usize) -> f64 {
        let p = self.point(flat);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    /// Lower and upper faces of the union of sample cells.
    pub fn cell_box(&self) -> (f64, f64) {
        let h = 0.5 * self.dv();
        (-self.halfwidth - h, self.halfwidth - h)
    }

    /// Sample a function of velocity on the grid.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|j| f(&self.point(j)[..self.n])).collect()
    }

    /// Distance from the box faces to the closest sample with |value| > tol;
    /// infinite for a slice with no such sample.
    pub fn boundary_clearance(&self, slice: &[f64], tol: f64) -> f64 {
        let (lo, hi) = self.cell_box();
        let mut best = f64::INFINITY;
        for (j, &val) in slice.iter().enumerate() {
            if val.abs() > tol {
                let p = self.point(j);
                for &c in &p[..self.n] {
                    best = best.min(c - lo).min(hi - c);
                }
            }
        }
        best
    }

    /// Directions and weights for integrals over the unit sphere.
    pub(crate) fn sphere_rule(&self) -> Vec<([f64; 2], f64)> {
        if self.n == 1 {
            vec![([1.0, 0.0], 1.0), ([-1.0, 0.0], 1.0)]
        } else {
            let m = 720;
            let w = 2.0 * PI / m as f64;
            (0..m)
                .map(|i| {
                    let a = (i as f64 + 0.5) * w;
                    ([a.cos(), a.sin()], w)
                })
                .collect()
        }
    }

    /// Distance from `p` (inside the cell box) to its faces along `dir`.
    pub(crate) fn exit_distance(&self, p: [f64; 2], dir: [f64; 2]) -> f64 {
        let (lo, hi) = self.cell_box();
        let mut best = f64::INFINITY;
        for a in 0..self.n {
            let d = dir[a];
            if d > 0.0 {
                best = best.min((hi - p[a]) / d);
            } else if d < 0.0 {
                best = best.min((lo - p[a]) / d);
            }
        }
        best.max(0.0)
    }

    /// `sum_dir w * radial(dir, rho_exit)` where `radial` returns the radial
    /// integral (including the Jacobian) from the exit distance to infinity.
    pub(crate) fn exterior<F: FnMut([f64; 2], f64) -> f64>(&self, p: [f64; 2], mut radial: F) -> f64 {
        self.sphere_rule()
            .into_iter()
            .map(|(dir, w)| w * radial(dir, self.exit_distance(p, dir)))
            .sum()
    }
}

/// Spatial torus with `nx` samples per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XGrid {
    pub n: usize,
    pub nx: usize,
    pub period: f64,
}

impl XGrid {
    pub fn dx(&self) -> f64 {
        self.period / self.nx as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.period + self.dx() * i as f64
    }

    pub fn len(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.n as i32)
    }

    pub fn point(&self, flat: usize) -> [f64; 2] {
        if self.n == 1 {
            [self.coord(flat), 0.0]
        } else {
            [self.coord(flat / self.nx), self.coord(flat % self.nx)]
        }
    }
}

/// Integral of |y|^q over the centred cube of side `d`.
pub(crate) fn cell_moment(n: usize, d: f64, q: f64) -> f64 {
    if n == 1 {
        2.0 * (0.5 * d).powf(q + 1.0) / (q + 1.0)
    } else {
        let rule = crate::quad::Rule::new(16);
        8.0 * rule.composite(0.0, PI / 4.0, 8, |phi| (0.5 * d / phi.cos()).powf(q + 2.0) / (q + 2.0))
    }
}

/// Sampled solution or source over a [`PhaseGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: PhaseGrid,
    /// Row-major samples indexed `[t][x][v]`.
    pub data: Vec<f64>,
    /// Named scalars such as `s`, `kappa` or `run_id`.
    pub meta: BTreeMap<String, f64>,
}

impl Field {
    pub fn zeros(grid: &PhaseGrid) -> Field {
        Field { grid: grid.clone(), data: vec![0.0; grid.len()], meta: BTreeMap::new() }
    }

    pub fn from_data(grid: &PhaseGrid, data: Vec<f64>) -> Result<Field> {
        if data.len() != grid.len() {
            return Err(Error::Grid(format!("data length {} does not match grid length {}", data.len(), grid.len())));
        }
        let f = Field { grid: grid.clone(), data, meta: BTreeMap::new() };
        f.check_finite()?;
        Ok(f)
    }

    /// Sample `f(t, x, v)` at every grid point.
    pub fn from_fn(grid: &PhaseGrid, mut f: impl FnMut(f64, &[f64], &[f64]) -> f64) -> Field {
        let xg = grid.xgrid();
        let vg = grid.vgrid();
        let n = grid.n;
        let mut data = Vec::with_capacity(grid.len());
        for k in 0..grid.nt {
            let t = grid.time(k);
            for ix in 0..xg.len() {
                let x = xg.point(ix);
                for iv in 0..vg.len() {
                    let v = vg.point(iv);
                    data.push(f(t, &x[..n], &v[..n]));
                }
            }
        }
        Field { grid: grid.clone(), data, meta: BTreeMap::new() }
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical { time: self.grid.time(i / self.grid.slice_len()), reason: format!("non-finite sample at flat index {i}") });
        }
        Ok(())
    }

    pub fn at(&self, k: usize, ix: usize, iv: usize) -> f64 {
        self.data[self.grid.index(k, ix, iv)]
    }

    /// Velocity slice at time index `k` and position index `ix`.
    pub fn vslice(&self, k: usize, ix: usize) -> &[f64] {
        let nv = self.grid.nv_total();
        let start = self.grid.index(k, ix, 0);
        &self.data[start..start + nv]
    }

    pub fn vslice_mut(&mut self, k: usize, ix: usize) -> &mut [f64] {
        let nv = self.grid.nv_total();
        let start = self.grid.index(k, ix, 0);
        &mut self.data[start..start + nv]
    }

    /// All samples at time index `k`, indexed `[x][v]`.
    pub fn time_slice(&self, k: usize) -> &[f64] {
        let len = self.grid.slice_len();
        &self.data[k * len..(k + 1) * len]
    }

    pub fn time_slice_mut(&mut self, k: usize) -> &mut [f64] {
        let len = self.grid.slice_len();
        &mut self.data[k * len..(k + 1) * len]
    }

    pub fn scaled(&self, c: f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x = f(*x));
        out
    }

    pub fn meta_value(&self, key: &str) -> Option<f64> {
        self.meta.get(key).copied()
    }
}

/// Closed Euclidean ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Ball {
    pub fn centered(radius: f64) -> Ball {
        Ball { center: [0.0, 0.0], radius }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let d2: f64 = p.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum();
        d2 <= self.radius * self.radius * (1.0 + 1e-12) + 1e-24
    }
}

/// Time interval times an x-ball times an optional v-ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub t: [f64; 2],
    pub x: Option<Ball>,
    pub v: Option<Ball>,
}

impl Region {
    /// `[a, b] x B_rx x B_rv`, both balls centred at the origin.
    pub fn centered(a: f64, b: f64, x_radius: f64, v_radius: Option<f64>) -> Region {
        Region { t: [a, b], x: Some(Ball::centered(x_radius)), v: v_radius.map(Ball::centered) }
    }

    /// The full grid.
    pub fn whole(grid: &PhaseGrid) -> Region {
        Region { t: [grid.t0, grid.t1], x: None, v: None }
    }

    pub fn validate(&self, grid: &PhaseGrid) -> Result<()> {
        let [a, b] = self.t;
        if !(a <= b) {
            return param(format!("region time interval [{a}, {b}] is empty"));
        }
        let tol = 1e-9 * (1.0 + grid.t0.abs().max(grid.t1.abs()));
        if a < grid.t0 - tol || b > grid.t1 + tol {
            return Err(Error::OutOfRange(format!("region times [{a}, {b}] leave the grid window [{}, {}]", grid.t0, grid.t1)));
        }
        if let Some(xb) = self.x {
            if !(xb.radius >= 0.0) {
                return param("x radius must be non-negative");
            }
            let half = 0.5 * grid.x_period;
            if xb.center[..grid.n].iter().any(|c| c.abs() + xb.radius > half + 1e-12) {
                return Err(Error::OutOfRange("x ball does not fit in the torus cell".into()));
            }
        }
        if let Some(vb) = self.v {
            if !(vb.radius >= 0.0) {
                return param("v radius must be non-negative");
            }
            if vb.center[..grid.n].iter().any(|c| c.abs() + vb.radius > grid.v_halfwidth + 1e-12) {
                return Err(Error::OutOfRange("v ball does not fit in the velocity box".into()));
            }
        }
        Ok(())
    }

    /// Indices of the grid cells whose sample points lie in the region.
    pub fn select(&self, grid: &PhaseGrid) -> Result<Selection> {
        self.validate(grid)?;
        let tol = 1e-9 * (1.0 + grid.t0.abs().max(grid.t1.abs()));
        let t: Vec<usize> = (0..grid.nt).filter(|&k| {
            let tk = grid.time(k);
            tk >= self.t[0] - tol && tk <= self.t[1] + tol
        }).collect();
        let xg = grid.xgrid();
        let vg = grid.vgrid();
        let n = grid.n;
        let x: Vec<usize> = (0..xg.len()).filter(|&i| self.x.map_or(true, |b| b.contains(&xg.point(i)[..n]))).collect();
        let v: Vec<usize> = (0..vg.len()).filter(|&j| self.v.map_or(true, |b| b.contains(&vg.point(j)[..n]))).collect();
        Ok(Selection { t, x, v })
    }
}

/// Cell indices selected by a [`Region`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub t: Vec<usize>,
    pub x: Vec<usize>,
    pub v: Vec<usize>,
}

impl Selection {
    pub fn count(&self) -> usize {
        self.t.len() * self.x.len() * self.v.len()
    }

    /// Discrete volume: selected cells times the cell volume.
    pub fn volume(&self, grid: &PhaseGrid) -> f64 {
        self.count() as f64 * grid.cell_volume()
    }

    pub fn for_each(&self, grid: &PhaseGrid, mut f: impl FnMut(usize, usize, usize, usize)) {
        for &k in &self.t {
            for &ix in &self.x {
                let base = grid.index(k, ix, 0);
                for &iv in &self.v {
                    f(k, ix, iv, base + iv);
                }
            }
        }
    }
}

/// Midpoint-rule L^p norm over a region; `p = f64::INFINITY` gives the max.
pub fn lp_norm(field: &Field, p: f64, region: &Region) -> Result<f64> {
    if !(p >= 1.0) {
        return param(format!("exponent p = {p} must be at least 1"));
    }
    let sel = region.select(&field.grid)?;
    if p.is_infinite() {
        let mut m: f64 = 0.0;
        sel.for_each(&field.grid, |_, _, _, i| m = m.max(field.data[i].abs()));
        return Ok(m);
    }
    let mut acc = 0.0;
    sel.for_each(&field.grid, |_, _, _, i| acc += field.data[i].abs().powf(p));
    Ok((acc * field.grid.cell_volume()).powf(1.0 / p))
}

/// Predicate for level-set measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LevelSet {
    /// `f <= c`
    AtMost(f64),
    /// `f >= c`
    AtLeast(f64),
    /// `lo < f < hi`
    Between(f64, f64),
}

impl LevelSet {
    pub fn holds(&self, x: f64) -> bool {
        match *self {
            LevelSet::AtMost(c) => x <= c,
            LevelSet::AtLeast(c) => x >= c,
            LevelSet::Between(lo, hi) => lo < x && x < hi,
        }
    }
}

/// Number of cells of `region` where the predicate holds, times the cell volume.
pub fn level_set_measure(field: &Field, set: LevelSet, region: &Region) -> Result<f64> {
    let sel = region.select(&field.grid)?;
    let mut count = 0usize;
    sel.for_each(&field.grid, |_, _, _, i| {
        if set.holds(field.data[i]) {
            count += 1;
        }
    });
    Ok(count as f64 * field.grid.cell_volume())
}

/// Function of (t, x) on the grid's (t, x) lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TxField {
    pub grid: PhaseGrid,
    /// Row-major samples indexed `[t][x]`.
    pub data: Vec<f64>,
}

impl TxField {
    pub fn at(&self, k: usize, ix: usize) -> f64 {
        self.data[k * self.grid.nx_total() + ix]
    }
}

/// `rho(t, x) = int eta(v) f(t, x, v) dv` by the midpoint rule.
pub fn velocity_average(field: &Field, weight: &[f64]) -> Result<TxField> {
    let nv = field.grid.nv_total();
    if weight.len() != nv {
        return param(format!("weight has {} samples, expected {nv}", weight.len()));
    }
    let dv = field.grid.vgrid().cell_volume();
    let data = field
        .data
        .chunks(nv)
        .map(|s| s.iter().zip(weight).map(|(a, b)| a * b).sum::<f64>() * dv)
        .collect();
    Ok(TxField { grid: field.grid.clone(), data })
}

/// `(sum (1+|xi|^2)^s |f^(xi)|^2)^(1/2)` with Plancherel normalization, the
/// slice being treated as periodic on the velocity box.
pub fn hs_norm_v(vgrid: &VGrid, slice: &[f64], s: f64) -> f64 {
    let plan = CubeFft::new(vgrid.n, vgrid.nv);
    hs_norm_with(&plan, vgrid, slice, |xi2| (1.0 + xi2).powf(s))
}

/// Homogeneous part `(sum |xi|^(2s) |f^(xi)|^2)^(1/2)`.
pub fn hs_seminorm_v(vgrid: &VGrid, slice: &[f64], s: f64) -> f64 {
    let plan = CubeFft::new(vgrid.n, vgrid.nv);
    hs_norm_with(&plan, vgrid, slice, |xi2| if xi2 == 0.0 { 0.0 } else { xi2.powf(s) })
}

fn hs_norm_with(plan: &CubeFft, vgrid: &VGrid, slice: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
    assert_eq!(slice.len(), vgrid.len());
    let mut buf: Vec<Complex64> = slice.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan.forward(&mut buf);
    let period = vgrid.period();
    let acc: f64 = buf.iter().enumerate().map(|(k, z)| weight(plan.xi_sq(k, period)) * z.norm_sqr()).sum();
    (acc * vgrid.cell_volume() / vgrid.len() as f64).sqrt()
}

/// Result of a Gagliardo seminorm evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seminorm {
    pub value: f64,
    /// Set when the slice is nonzero within distance 1 of the box faces.
    pub touches_boundary: bool,
}

/// `(iint (f(w)-f(v))^2 / |v-w|^(n+2s))^(1/2)` for the zero extension of the slice.
///
/// Off-diagonal cell pairs use the midpoint rule, pairs with one point outside
/// the box are integrated exactly, and the diagonal cell is replaced by a
/// gradient-based local term.
pub fn gagliardo_seminorm(vgrid: &VGrid, slice: &[f64], s: f64) -> Seminorm {
    assert_eq!(slice.len(), vgrid.len());
    let n = vgrid.n;
    let len = vgrid.len();
    let dvol = vgrid.cell_volume();
    let p = n as f64 + 2.0 * s;
    let pts: Vec<[f64; 2]> = (0..len).map(|j| vgrid.point(j)).collect();
    let mut pairs = 0.0;
    for i in 0..len {
        let fi = slice[i];
        let pi = pts[i];
        for j in (i + 1)..len {
            let d = slice[j] - fi;
            if d != 0.0 {
                let r2 = (pts[j][0] - pi[0]).powi(2) + (pts[j][1] - pi[1]).powi(2);
                pairs += d * d * r2.powf(-0.5 * p);
            }
        }
    }
    let mut total = 2.0 * pairs * dvol * dvol;
    let grad = gradient_sq(vgrid, slice);
    let local = cell_moment(n, vgrid.dv(), 2.0 - p) / n as f64;
    for i in 0..len {
        if slice[i] != 0.0 {
            let ext = vgrid.exterior(pts[i], |_, rho| rho.powf(n as f64 - p) / (p - n as f64));
            total += 2.0 * slice[i] * slice[i] * ext * dvol;
        }
        total += grad[i] * local * dvol;
    }
    Seminorm { value: total.sqrt(), touches_boundary: vgrid.boundary_clearance(slice, 0.0) < 1.0 }
}

/// Squared central-difference gradient with zero extension.
pub(crate) fn gradient_sq(vgrid: &VGrid, slice: &[f64]) -> Vec<f64> {
    let nv = vgrid.nv;
    let h = vgrid.dv();
    let get = |m: [i64; 2]| -> f64 {
        if m.iter().take(vgrid.n).any(|&c| c < 0 || c >= nv as i64) {
            0.0
        } else {
            slice[vgrid.flat([m[0] as usize, m[1] as usize])]
        }
    };
    (0..vgrid.len())
        .map(|j| {
            let m = vgrid.multi(j);
            let base = [m[0] as i64, m[1] as i64];
            (0..vgrid.n)
                .map(|a| {
                    let mut up = base;
                    let mut dn = base;
                    up[a] += 1;
                    dn[a] -= 1;
                    ((get(up) - get(dn)) / (2.0 * h)).powi(2)
                })
                .sum()
        })
        .collect()
}

/// JSON sidecar describing a binary field dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub n: usize,
    pub nx: usize,
    pub nv: usize,
    pub nt: usize,
    pub x_period: f64,
    pub v_halfwidth: f64,
    pub t0: f64,
    pub t1: f64,
    pub s: Option<f64>,
    pub kappa: Option<f64>,
}

/// Write `<base>.bin` (little-endian f64, `[t][x][v]`) and `<base>.json`.
pub fn write_dump(field: &Field, base: &Path) -> Result<(PathBuf, PathBuf)> {
    let g = &field.grid;
    let header = DumpHeader {
        n: g.n,
        nx: g.nx,
        nv: g.nv,
        nt: g.nt,
        x_period: g.x_period,
        v_halfwidth: g.v_halfwidth,
        t0: g.t0,
        t1: g.t1,
        s: field.meta_value("s"),
        kappa: field.meta_value("kappa"),
    };
    let bin = base.with_extension("bin");
    let json = base.with_extension("json");
    let bytes: Vec<u8> = field.data.iter().flat_map(|x| x.to_le_bytes()).collect();
    std::fs::write(&bin, bytes)?;
    std::fs::write(&json, serde_json::to_string_pretty(&header)?)?;
    Ok((bin, json))
}

/// Inverse of [`write_dump`].
pub fn read_dump(base: &Path) -> Result<Field> {
    let header: DumpHeader = serde_json::from_str(&std::fs::read_to_string(base.with_extension("json"))?)?;
    let grid = make_grid(header.n, header.x_period, header.v_halfwidth, header.nx, header.nv, header.t0, header.t1, header.nt)?;
    let bytes = std::fs::read(base.with_extension("bin"))?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::Grid(format!("dump holds {} bytes, expected {}", bytes.len(), 8 * grid.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut field = Field::from_data(&grid, data)?;
    if let Some(s) = header.s {
        field.meta.insert("s".into(), s);
    }
    if let Some(k) = header.kappa {
        field.meta.insert("kappa".into(), k);
    }
    Ok(field)
}
