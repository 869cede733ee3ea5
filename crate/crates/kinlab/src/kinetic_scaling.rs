//! Kinetic scaling `(t, x, v) -> (eps^(2s) t, eps^(1+2s) x, eps v)`, Galilean
//! translation, kinetic cylinders and the oscillation-decay estimator.

use crate::error::{param, Error, Result};
use crate::kernel::{boundary_constant, Kernel, BAND_RADIUS, BOUND_RTOL};
use crate::phase::{Field, PhaseGrid};
use crate::quad::linear_fit;
use crate::solver::SourceFn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub epsilon: f64,
    pub s: f64,
    #[serde(with = "crate::report::extended_f64")]
    pub r: f64,
    pub n: usize,
}

impl ScalingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return param(format!("epsilon = {} must lie in (0, 1]", self.epsilon));
        }
        crate::phase::check_order(self.n, self.s)?;
        if !(self.r >= 1.0) {
            return param("r must be at least 1");
        }
        Ok(())
    }

    /// `eps^(2s (1 - (n + 1 + n/s) / r))`.
    pub fn source_factor(&self) -> f64 {
        let n = self.n as f64;
        self.epsilon.powf(2.0 * self.s * (1.0 - (n + 1.0 + n / self.s) / self.r))
    }

    /// Image `(eps^(2s) t, eps^(1+2s) x, eps v)` of a phase-space point.
    pub fn map_point(&self, t: f64, x: &[f64], v: &[f64]) -> (f64, [f64; 2], [f64; 2]) {
        let e = self.epsilon;
        let (et, ex) = (e.powf(2.0 * self.s), e.powf(1.0 + 2.0 * self.s));
        let mut xo = [0.0; 2];
        let mut vo = [0.0; 2];
        for a in 0..x.len() {
            xo[a] = ex * x[a];
            vo[a] = e * v[a];
        }
        (et * t, xo, vo)
    }
}

/// Cubic (four-point Lagrange) sampler of a field at off-grid points.
///
/// `x` is periodic. Velocities beyond the last sample use the slice's constant
/// value near the box faces, when it has one.
pub struct Sampler<'a> {
    field: &'a Field,
    edges: Vec<Option<f64>>,
}

fn lagrange4(u: f64, base: i64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for (i, wi) in w.iter_mut().enumerate() {
        let xi = (base + i as i64) as f64;
        for j in 0..4 {
            if j != i {
                let xj = (base + j as i64) as f64;
                *wi *= (u - xj) / (xi - xj);
            }
        }
    }
    w
}

/// Indices and weights along a bounded axis with `len` nodes at positions `0..len`.
fn bounded_stencil(u: f64, len: usize) -> Vec<(usize, f64)> {
    if len == 1 {
        return vec![(0, 1.0)];
    }
    if len < 4 {
        let i = (u.floor() as usize).min(len - 2);
        let f = u - i as f64;
        return vec![(i, 1.0 - f), (i + 1, f)];
    }
    let base = (u.floor() as i64 - 1).clamp(0, len as i64 - 4);
    let w = lagrange4(u, base);
    (0..4).map(|i| ((base + i as i64) as usize, w[i])).filter(|p| p.1 != 0.0).collect()
}

fn periodic_stencil(u: f64, len: usize) -> Vec<(usize, f64)> {
    let base = u.floor() as i64 - 1;
    let w = lagrange4(u, base);
    (0..4).map(|i| ((base + i as i64).rem_euclid(len as i64) as usize, w[i])).filter(|p| p.1 != 0.0).collect()
}

impl<'a> Sampler<'a> {
    pub fn new(field: &'a Field) -> Sampler<'a> {
        let g = &field.grid;
        let vg = g.vgrid();
        let mut edges = Vec::with_capacity(g.nt * g.nx_total());
        for k in 0..g.nt {
            for ix in 0..g.nx_total() {
                edges.push(boundary_constant(&vg, field.vslice(k, ix)).ok());
            }
        }
        Sampler { field, edges }
    }

    fn t_stencil(&self, t: f64) -> Result<Vec<(usize, f64)>> {
        let g = &self.field.grid;
        let tol = 1e-9 * (1.0 + g.t0.abs().max(g.t1.abs()));
        if t < g.t0 - tol || t > g.t1 + tol {
            return Err(Error::OutOfRange(format!("time {t} outside [{}, {}]", g.t0, g.t1)));
        }
        if g.nt == 1 {
            return Ok(vec![(0, 1.0)]);
        }
        let u = ((t - g.t0) / g.dt()).clamp(0.0, (g.nt - 1) as f64);
        Ok(bounded_stencil(u, g.nt))
    }

    fn x_stencils(&self, x: &[f64]) -> Vec<Vec<(usize, f64)>> {
        let g = &self.field.grid;
        let dx = g.xgrid().dx();
        x.iter().map(|&c| periodic_stencil((c + 0.5 * g.x_period) / dx, g.nx)).collect()
    }

    /// `None` when some component lies beyond the sampled velocity range.
    fn v_stencils(&self, v: &[f64]) -> Option<Vec<Vec<(usize, f64)>>> {
        let g = &self.field.grid;
        let vg = g.vgrid();
        let dv = vg.dv();
        let top = (g.nv - 1) as f64;
        let mut out = Vec::with_capacity(v.len());
        for &c in v {
            let u = (c + g.v_halfwidth) / dv;
            if u < -1e-9 || u > top + 1e-9 {
                return None;
            }
            out.push(bounded_stencil(u.clamp(0.0, top), g.nv));
        }
        Some(out)
    }

    pub fn value(&self, t: f64, x: &[f64], v: &[f64]) -> Result<f64> {
        let g = &self.field.grid;
        let n = g.n;
        let ts = self.t_stencil(t)?;
        let xs = self.x_stencils(&x[..n]);
        let x_terms = product(&xs, g.nx);
        match self.v_stencils(&v[..n]) {
            Some(vs) => {
                let v_terms = product(&vs, g.nv);
                let mut acc = 0.0;
                for &(k, wt) in &ts {
                    for &(ix, wx) in &x_terms {
                        let slice = self.field.vslice(k, ix);
                        let inner: f64 = v_terms.iter().map(|&(iv, wv)| wv * slice[iv]).sum();
                        acc += wt * wx * inner;
                    }
                }
                Ok(acc)
            }
            None => {
                let mut acc = 0.0;
                for &(k, wt) in &ts {
                    for &(ix, wx) in &x_terms {
                        let c = self.edges[k * g.nx_total() + ix].ok_or_else(|| {
                            Error::OutOfRange(format!("velocity {:?} leaves the box and the slice at t = {} is not constant near the faces", &v[..n], g.time(k)))
                        })?;
                        acc += wt * wx * c;
                    }
                }
                Ok(acc)
            }
        }
    }
}

/// Tensor product of per-axis stencils as flat indices (row-major, side `m`).
fn product(axes: &[Vec<(usize, f64)>], m: usize) -> Vec<(usize, f64)> {
    let mut out = vec![(0usize, 1.0f64)];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for &(i, w) in &out {
            for &(j, u) in axis {
                next.push((i * m + j, w * u));
            }
        }
        out = next;
    }
    out
}

/// `f(eps^(2s) t, eps^(1+2s) x, eps v)` on the same grid.
pub fn scale_field(field: &Field, params: &ScalingParams) -> Result<Field> {
    params.validate()?;
    if params.n != field.grid.n {
        return param("scaling dimension does not match the grid");
    }
    let sampler = Sampler::new(field);
    let mut out = Vec::with_capacity(field.data.len());
    let g = &field.grid;
    let (xg, vg) = (g.xgrid(), g.vgrid());
    let n = g.n;
    for k in 0..g.nt {
        let t = g.time(k);
        for ix in 0..xg.len() {
            let x = xg.point(ix);
            for iv in 0..vg.len() {
                let (ts, xs, vs) = params.map_point(t, &x[..n], &vg.point(iv)[..n]);
                out.push(sampler.value(ts, &xs[..n], &vs[..n])?);
            }
        }
    }
    let mut f = Field::from_data(g, out)?;
    f.meta = field.meta.clone();
    f.meta.insert("epsilon".into(), params.epsilon);
    Ok(f)
}

/// Pointwise rule `eps^(n+2s) K(eps^(2s) t, eps^(1+2s) x, eps v, eps w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledKernel {
    pub kernel: Kernel,
    pub params: ScalingParams,
}

impl ScaledKernel {
    pub fn eval(&self, t: f64, x: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let p = &self.params;
        let (ts, xs, vs) = p.map_point(t, x, v);
        let n = x.len();
        let ws: Vec<f64> = w.iter().map(|c| p.epsilon * c).collect();
        p.epsilon.powf(n as f64 + 2.0 * p.s) * self.kernel.eval(ts, &xs[..n], &vs[..n], &ws)
    }
}

/// Sampled comparison of the scaled kernel with the original and with the
/// two-sided bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledKernelCheck {
    pub samples: usize,
    /// `max |K_bar - K| / K` over the samples.
    pub max_rel_diff: f64,
    pub bound_violations: usize,
}

/// Samples `(t, x, v, w)` with `t in [-6, 0]`, `x in [-pi, pi]^n`, `v, w in [-8, 8]^n`.
pub fn scaled_kernel_check(kernel: &Kernel, params: &ScalingParams, samples: usize, seed: u64) -> Result<ScaledKernelCheck> {
    params.validate()?;
    kernel.validate()?;
    let n = params.n;
    let sk = ScaledKernel { kernel: *kernel, params: *params };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut max_rel, mut bad) = (0.0f64, 0usize);
    let expo = n as f64 + 2.0 * kernel.s;
    for _ in 0..samples {
        let t = rng.gen_range(-6.0..0.0);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let h = v.iter().zip(&w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if h == 0.0 {
            continue;
        }
        let kb = sk.eval(t, &x, &v, &w);
        let k0 = kernel.eval(t, &x, &v, &w);
        if k0 > 0.0 {
            max_rel = max_rel.max((kb - k0).abs() / k0);
        } else if kb != 0.0 {
            max_rel = f64::INFINITY;
        }
        let upper = kernel.kappa * h.powf(-expo);
        let lower = if h <= BAND_RADIUS { h.powf(-expo) / kernel.kappa } else { 0.0 };
        if kb > upper * (1.0 + BOUND_RTOL) || kb < lower * (1.0 - BOUND_RTOL) {
            bad += 1;
        }
    }
    Ok(ScaledKernelCheck { samples, max_rel_diff: max_rel, bound_violations: bad })
}

/// `eps^(2s) a(eps^(2s) t, eps^(1+2s) x, eps v)`.
pub fn scale_source(a: SourceFn, params: ScalingParams) -> SourceFn {
    let factor = params.epsilon.powf(2.0 * params.s);
    Box::new(move |t, x, v| {
        let (ts, xs, vs) = params.map_point(t, x, v);
        let n = x.len();
        factor * a(ts, &xs[..n], &vs[..n])
    })
}

/// Axis-aligned box `[t] x [x]^n x [v]^n` in phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub t: [f64; 2],
    pub x: [f64; 2],
    pub v: [f64; 2],
}

impl PhaseBox {
    /// Preimage of the box under the scaling map.
    pub fn preimage(&self, p: &ScalingParams) -> PhaseBox {
        let e = p.epsilon;
        let (et, ex) = (e.powf(2.0 * p.s), e.powf(1.0 + 2.0 * p.s));
        PhaseBox { t: [self.t[0] / et, self.t[1] / et], x: [self.x[0] / ex, self.x[1] / ex], v: [self.v[0] / e, self.v[1] / e] }
    }
}

/// Midpoint-rule `L^r` norm of `a` over a phase box with `points` nodes per axis.
pub fn lr_norm_on_box(a: &dyn Fn(f64, &[f64], &[f64]) -> f64, bx: &PhaseBox, n: usize, r: f64, points: usize) -> f64 {
    let axes = 1 + 2 * n;
    let h = |iv: [f64; 2]| (iv[1] - iv[0]) / points as f64;
    let (ht, hx, hv) = (h(bx.t), h(bx.x), h(bx.v));
    let cell = ht * hx.powi(n as i32) * hv.powi(n as i32);
    let total = points.pow(axes as u32);
    let mut acc = 0.0f64;
    let mut sup = 0.0f64;
    let mut x = [0.0; 2];
    let mut v = [0.0; 2];
    for flat in 0..total {
        let mut rest = flat;
        let mut idx = [0usize; 5];
        for slot in idx.iter_mut().take(axes) {
            *slot = rest % points;
            rest /= points;
        }
        let t = bx.t[0] + (idx[0] as f64 + 0.5) * ht;
        for a in 0..n {
            x[a] = bx.x[0] + (idx[1 + a] as f64 + 0.5) * hx;
            v[a] = bx.v[0] + (idx[1 + n + a] as f64 + 0.5) * hv;
        }
        let val = a(t, &x[..n], &v[..n]).abs();
        sup = sup.max(val);
        if r.is_finite() {
            acc += val.powf(r);
        }
    }
    if r.is_finite() {
        (acc * cell).powf(1.0 / r)
    } else {
        sup
    }
}

/// Measured `||a_bar||_r / ||a||_r` (support box of `a` and its preimage,
/// with independent resolutions) against the predicted factor.
pub fn source_norm_ratio(a: &SourceFn, support: &PhaseBox, params: &ScalingParams, points: [usize; 2]) -> Result<(f64, f64)> {
    params.validate()?;
    let n = params.n;
    let base = lr_norm_on_box(a.as_ref(), support, n, params.r, points[0]);
    if base == 0.0 {
        return param("source vanishes on its support box");
    }
    let factor = params.epsilon.powf(2.0 * params.s);
    let scaled = |t: f64, x: &[f64], v: &[f64]| {
        let (ts, xs, vs) = params.map_point(t, x, v);
        factor * a(ts, &xs[..n], &vs[..n])
    };
    let pre = support.preimage(params);
    let top = lr_norm_on_box(&scaled, &pre, n, params.r, points[1]);
    Ok((top / base, params.source_factor()))
}

/// Galilean shift `z0 = (t0, x0, v0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticShift {
    pub t: f64,
    pub x: [f64; 2],
    pub v: [f64; 2],
}

impl KineticShift {
    pub fn identity() -> KineticShift {
        KineticShift { t: 0.0, x: [0.0; 2], v: [0.0; 2] }
    }

    /// `(t0 + t, x0 + x + v0 t, v0 + v)`.
    pub fn apply(&self, t: f64, x: &[f64], v: &[f64]) -> (f64, [f64; 2], [f64; 2]) {
        let mut xo = [0.0; 2];
        let mut vo = [0.0; 2];
        for a in 0..x.len() {
            xo[a] = self.x[a] + x[a] + self.v[a] * t;
            vo[a] = self.v[a] + v[a];
        }
        (self.t + t, xo, vo)
    }

    /// Shift equivalent to translating by `self`, then by `then`.
    pub fn compose(&self, then: &KineticShift) -> KineticShift {
        let mut x = [0.0; 2];
        let mut v = [0.0; 2];
        for a in 0..2 {
            x[a] = self.x[a] + then.x[a] + self.v[a] * then.t;
            v[a] = self.v[a] + then.v[a];
        }
        KineticShift { t: self.t + then.t, x, v }
    }
}

/// `f(t0 + t, x0 + x + v0 t, v0 + v)`; the output time window is the input
/// window shifted by `-t0`.
pub fn translate_field(field: &Field, z0: &KineticShift) -> Result<Field> {
    let g = &field.grid;
    let mut out_grid: PhaseGrid = g.clone();
    out_grid.t0 = g.t0 - z0.t;
    out_grid.t1 = g.t1 - z0.t;
    let sampler = Sampler::new(field);
    let (xg, vg) = (g.xgrid(), g.vgrid());
    let n = g.n;
    let mut out = Vec::with_capacity(field.data.len());
    for k in 0..g.nt {
        let t = out_grid.time(k);
        for ix in 0..xg.len() {
            let x = xg.point(ix);
            for iv in 0..vg.len() {
                let (ts, xs, vs) = z0.apply(t, &x[..n], &vg.point(iv)[..n]);
                out.push(sampler.value(ts, &xs[..n], &vs[..n])?);
            }
        }
    }
    let mut f = Field::from_data(&out_grid, out)?;
    f.meta = field.meta.clone();
    Ok(f)
}

/// `{|t - t0| <= rho^(2s), |x - x0 - (t - t0) v0| <= rho^(1+2s), |v - v0| <= rho}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticCylinder {
    pub center: KineticShift,
    pub radius: f64,
    pub s: f64,
}

impl KineticCylinder {
    pub fn half_widths(&self) -> [f64; 3] {
        let r = self.radius;
        [r.powf(2.0 * self.s), r.powf(1.0 + 2.0 * self.s), r]
    }

    /// Membership, with `x` differences wrapped to the torus of the given period.
    pub fn contains(&self, t: f64, x: &[f64], v: &[f64], period: f64) -> bool {
        let [ht, hx, hv] = self.half_widths();
        let c = &self.center;
        let dt = t - c.t;
        if dt.abs() > ht * (1.0 + 1e-12) {
            return false;
        }
        let mut dx2 = 0.0;
        let mut dv2 = 0.0;
        for a in 0..x.len() {
            let mut d = x[a] - c.x[a] - dt * c.v[a];
            if period.is_finite() {
                d -= period * (d / period).round();
            }
            dx2 += d * d;
            dv2 += (v[a] - c.v[a]).powi(2);
        }
        dx2.sqrt() <= hx * (1.0 + 1e-12) && dv2.sqrt() <= hv * (1.0 + 1e-12)
    }
}

/// Oscillation of a field over nested cylinders of radii `lambda^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationProfile {
    pub rho: Vec<f64>,
    pub osc: Vec<f64>,
    /// Whether the cylinder is resolved by the grid along every axis.
    pub usable: Vec<bool>,
    /// Slope of `log osc` against `log rho`; infinite when every oscillation vanishes.
    pub alpha: f64,
    /// `2 (1 - max osc_{j+1} / osc_j)` over consecutive usable scales.
    pub lambda_eff: f64,
    pub decay_holds: bool,
}

impl OscillationProfile {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,rho,osc,usable\n");
        for j in 0..self.rho.len() {
            let _ = writeln!(out, "{},{:e},{:e},{}", j, self.rho[j], self.osc[j], self.usable[j]);
        }
        let _ = writeln!(out, "# alpha={:e},lambda_eff={:e},decay_holds={}", self.alpha, self.lambda_eff, self.decay_holds);
        out
    }
}

/// Cells kept between the largest cylinder and the edges of the domain.
pub const EDGE_CELLS: f64 = 4.0;

/// `osc_j = sup - inf` of the samples in the cylinder of radius `lambda^j`
/// centred at `z0`, `j = 0..=levels`, and the fitted exponent.
pub fn oscillation_profile(field: &Field, z0: &KineticShift, s: f64, lambda: f64, levels: usize) -> Result<OscillationProfile> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return param(format!("lambda = {lambda} must lie in (0, 1)"));
    }
    let g = &field.grid;
    let (xg, vg) = (g.xgrid(), g.vgrid());
    let n = g.n;
    let outer = KineticCylinder { center: *z0, radius: 1.0, s };
    let [ht, hx, hv] = outer.half_widths();
    let vmax = z0.v[..n].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let dt = if g.nt > 1 { g.dt() } else { 0.0 };
    let shear = ht * z0.v[..n].iter().map(|c| c * c).sum::<f64>().sqrt();
    let fits = z0.t - ht >= g.t0 + EDGE_CELLS * dt - 1e-12
        && z0.t + ht <= g.t1 - EDGE_CELLS * dt + 1e-12
        && vmax + hv <= g.v_halfwidth - EDGE_CELLS * vg.dv()
        && hx + shear <= 0.5 * g.x_period - EDGE_CELLS * xg.dx();
    if !fits {
        return Err(Error::OutOfRange("the unit cylinder does not keep four cells from the domain edges".into()));
    }
    let mut rho = Vec::with_capacity(levels + 1);
    let mut osc = Vec::with_capacity(levels + 1);
    let mut usable = Vec::with_capacity(levels + 1);
    for j in 0..=levels {
        let r = lambda.powi(j as i32);
        let cyl = KineticCylinder { center: *z0, radius: r, s };
        let [a, b, c] = cyl.half_widths();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..g.nt {
            let t = g.time(k);
            if (t - z0.t).abs() > a * (1.0 + 1e-12) {
                continue;
            }
            for ix in 0..xg.len() {
                let x = xg.point(ix);
                for iv in 0..vg.len() {
                    let v = vg.point(iv);
                    if cyl.contains(t, &x[..n], &v[..n], g.x_period) {
                        let f = field.at(k, ix, iv);
                        lo = lo.min(f);
                        hi = hi.max(f);
                    }
                }
            }
        }
        rho.push(r);
        osc.push(if hi >= lo { hi - lo } else { 0.0 });
        usable.push(a >= dt && b >= xg.dx() && c >= vg.dv() && hi >= lo);
    }
    if usable.iter().filter(|&&u| u).count() < 4 {
        return param("fewer than 4 resolved scales");
    }
    let pts: Vec<(f64, f64)> = (0..=levels).filter(|&j| usable[j] && osc[j] > 0.0).map(|j| (rho[j].ln(), osc[j].ln())).collect();
    let alpha = if pts.len() >= 2 {
        let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&lx, &ly).0
    } else {
        f64::INFINITY
    };
    let mut worst = 0.0f64;
    for j in 0..levels {
        if usable[j] && usable[j + 1] && osc[j] > 0.0 {
            worst = worst.max(osc[j + 1] / osc[j]);
        }
    }
    let lambda_eff = 2.0 * (1.0 - worst);
    Ok(OscillationProfile { rho, osc, usable, alpha, lambda_eff, decay_holds: lambda_eff > 0.0 })
}
