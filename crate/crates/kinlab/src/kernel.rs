//! Coercive kernels, the collision operator `L`, the bilinear form `B` and
//! the cross term between the positive and negative parts of a function.
//!
//! Every kernel family here depends on velocity only through the offset
//! `h = w - v` (the two symmetries force this), so `L` on a velocity slice is
//! a discrete convolution evaluated with FFTs. Offsets within
//! [`NEAR_CELLS`] grid spacings use weights that reproduce the second moment
//! of the kernel on each cell, which absorbs the principal-value singularity
//! in the symmetrized second difference.

use crate::error::{param, precondition, Result};
use crate::fft::CubeFft;
use crate::phase::{cell_moment, VGrid};
use crate::quad::Rule;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Radius of the band on which the kernel lower bound is enforced.
pub const BAND_RADIUS: f64 = 6.0;
/// Offsets closer than this many grid spacings use moment-matched weights.
pub const NEAR_CELLS: f64 = 4.0;
/// Relative tolerance of bound and symmetry checks.
pub const BOUND_RTOL: f64 = 1e-9;

/// Kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `c |v-w|^(-n-2s)`
    Homogeneous,
    /// `c |v-w|^(-n-2s)` for `|v-w| <= 6`, zero beyond.
    Truncated,
    /// `c m(t,x,v-w) |v-w|^(-n-2s)` with the modulation below.
    Modulated,
}

/// Modulation `m = 1 + amplitude * sin(omega t + sum x + phase) * chi(|h| / radius)`
/// with `chi(r) = (1 - r^2)^3` on `r < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub amplitude: f64,
    pub radius: f64,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> f64 {
    1.0
}

impl Modulation {
    /// The time-space factor `amplitude * sin(...)`.
    pub fn amplitude_at(&self, t: f64, x: &[f64]) -> f64 {
        self.amplitude * (self.omega * t + x.iter().sum::<f64>() + self.phase).sin()
    }

    pub fn profile(&self, r: f64) -> f64 {
        let q = r / self.radius;
        if q < 1.0 {
            (1.0 - q * q).powi(3)
        } else {
            0.0
        }
    }
}

/// Kernel `K(t, x, v, w)` with order `s` and coercivity constant `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: Family,
    pub s: f64,
    pub kappa: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub modulation: Option<Modulation>,
}

impl Kernel {
    pub fn homogeneous(s: f64, kappa: f64, c: f64) -> Kernel {
        Kernel { family: Family::Homogeneous, s, kappa, c, modulation: None }
    }

    pub fn truncated(s: f64, kappa: f64, c: f64) -> Kernel {
        Kernel { family: Family::Truncated, s, kappa, c, modulation: None }
    }

    pub fn modulated(s: f64, kappa: f64, c: f64, modulation: Modulation) -> Kernel {
        Kernel { family: Family::Modulated, s, kappa, c, modulation: Some(modulation) }
    }

    /// Parameter sanity; the two-sided bounds are checked by [`validate_bounds`].
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return param(format!("kernel order s = {} must lie in (0, 1)", self.s));
        }
        if !(self.kappa > 1.0) {
            return param(format!("kappa = {} must exceed 1", self.kappa));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return param(format!("normalization c = {} must be positive", self.c));
        }
        match (self.family, &self.modulation) {
            (Family::Modulated, None) => param("modulated kernel needs a modulation block"),
            (Family::Modulated, Some(m)) if !(m.radius > 0.0) => param("modulation radius must be positive"),
            _ => Ok(()),
        }
    }

    fn modulation(&self) -> Option<&Modulation> {
        match self.family {
            Family::Modulated => self.modulation.as_ref(),
            _ => None,
        }
    }

    /// Factor multiplying `c |h|^(-n-2s)` at offset length `r`.
    pub fn factor(&self, t: f64, x: &[f64], r: f64) -> f64 {
        if self.family == Family::Truncated && r > BAND_RADIUS {
            return 0.0;
        }
        match self.modulation() {
            Some(m) => 1.0 + m.amplitude_at(t, x) * m.profile(r),
            None => 1.0,
        }
    }

    /// Pointwise kernel value; infinite on the diagonal.
    pub fn eval(&self, t: f64, x: &[f64], v: &[f64], w: &[f64]) -> f64 {
        let n = v.len();
        let r = v.iter().zip(w).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if r == 0.0 {
            return f64::INFINITY;
        }
        self.c * self.factor(t, x, r) * r.powf(-(n as f64) - 2.0 * self.s)
    }

    /// True when the kernel is `c |h|^(-n-2s)` everywhere.
    pub fn is_homogeneous(&self) -> bool {
        self.family == Family::Homogeneous
    }
}

/// `C(n,s) = s 4^s Gamma(n/2+s) / (pi^(n/2) Gamma(1-s))`, so that the
/// homogeneous kernel `c |h|^(-n-2s)` acts as `-(c / C(n,s)) (-Laplacian)^s`.
pub fn fractional_laplacian_constant(n: usize, s: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let nh = n as f64 / 2.0;
    s * 4f64.powf(s) * gamma(nh + s) / (PI.powf(nh) * gamma(1.0 - s))
}

/// One failed check of [`validate_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub which: String,
}

/// Outcome of randomized bound and symmetry sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub samples_checked: usize,
    pub violations: Vec<Violation>,
    /// Observed range of `K |v-w|^(n+2s)`.
    pub max_ratio: [f64; 2],
}

impl BoundCertificate {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Seeded random check of both symmetries and both kernel bounds.
pub fn validate_bounds(kernel: &Kernel, n: usize, sample_count: usize, seed: u64) -> Result<BoundCertificate> {
    kernel.validate()?;
    if sample_count < 1000 {
        return param(format!("sample_count = {sample_count} is below 1000"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = n as f64 + 2.0 * kernel.s;
    let mut violations = Vec::new();
    let mut ratio = [f64::INFINITY, f64::NEG_INFINITY];
    for _ in 0..sample_count {
        let t = rng.gen_range(-6.0..=0.0);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-PI..PI)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-8.0..8.0)).collect();
        let r = if rng.gen_bool(0.1) { BAND_RADIUS } else { (rng.gen_range((1e-3f64).ln()..(12f64).ln())).exp() };
        let dir: Vec<f64> = if n == 1 {
            vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }]
        } else {
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            vec![a.cos(), a.sin()]
        };
        let w: Vec<f64> = v.iter().zip(&dir).map(|(a, d)| a + r * d).collect();
        let mirror: Vec<f64> = v.iter().zip(&dir).map(|(a, d)| a - r * d).collect();
        let k = kernel.eval(t, &x, &v, &w);
        let scale = r.powf(-p);
        let mut flag = |which: &str| {
            violations.push(Violation { t, x: x.clone(), v: v.clone(), w: w.clone(), which: which.into() })
        };
        if (k - kernel.eval(t, &x, &w, &v)).abs() > BOUND_RTOL * k.abs() {
            flag("symmetry K(v,w) = K(w,v)");
        }
        if (k - kernel.eval(t, &x, &v, &mirror)).abs() > BOUND_RTOL * k.abs() {
            flag("symmetry K(v,v+h) = K(v,v-h)");
        }
        if k > kernel.kappa * scale * (1.0 + BOUND_RTOL) {
            flag("upper bound");
        }
        if r <= BAND_RADIUS && k < scale / kernel.kappa * (1.0 - BOUND_RTOL) {
            flag("lower bound");
        }
        let q = k / scale;
        ratio = [ratio[0].min(q), ratio[1].max(q)];
    }
    Ok(BoundCertificate { samples_checked: sample_count, violations, max_ratio: ratio })
}

/// Output of [`CollisionOp::apply`].
#[derive(Debug, Clone, PartialEq)]
pub struct LOutput {
    pub values: Vec<f64>,
    /// `2 kappa ||f - c_ext||_inf int_{|w|>V} |w|^(-n-2s) dw`: what the zero
    /// extension would miss if the data did not vanish outside the box.
    pub tail_bound: f64,
}

/// Cell weights of one kernel component on a velocity grid.
#[derive(Debug, Clone)]
struct Component {
    /// Weights on offsets `[-(nv-1), nv-1]^n`, row-major.
    weights: Vec<f64>,
    /// FFT of the weights laid out on the `(2nv)^n` padded torus.
    hat: Vec<Complex64>,
    /// Sum of all weights plus the integral beyond the offset cube.
    diag: f64,
    /// Integral of the component outside the cell box, per sample.
    exterior: Vec<f64>,
}

/// Collision operator of a kernel on a fixed velocity grid.
#[derive(Debug, Clone)]
pub struct CollisionOp {
    pub kernel: Kernel,
    pub vgrid: VGrid,
    plan: CubeFft,
    hom: Component,
    modw: Option<Component>,
}

impl CollisionOp {
    pub fn new(kernel: &Kernel, vgrid: &VGrid) -> Result<CollisionOp> {
        kernel.validate()?;
        crate::phase::check_order(vgrid.n, kernel.s)?;
        let plan = CubeFft::new(vgrid.n, 2 * vgrid.nv);
        let unit = |_r: f64| 1.0;
        let truncate = kernel.family == Family::Truncated;
        let hom = build_component(vgrid, kernel.s, &plan, truncate, &unit, true);
        let modw = kernel.modulation().map(|m| {
            let prof = move |r: f64| m.profile(r);
            build_component(vgrid, kernel.s, &plan, truncate, &prof, false)
        });
        Ok(CollisionOp { kernel: *kernel, vgrid: *vgrid, plan, hom, modw })
    }

    /// Time-space amplitude multiplying the modulated component.
    pub fn modulation_at(&self, t: f64, x: &[f64]) -> f64 {
        self.kernel.modulation().map_or(0.0, |m| m.amplitude_at(t, x))
    }

    fn side(&self) -> usize {
        2 * self.vgrid.nv - 1
    }

    fn offset_index(&self, h: [i64; 2]) -> usize {
        let nv = self.vgrid.nv as i64;
        if self.vgrid.n == 1 {
            (h[0] + nv - 1) as usize
        } else {
            (h[0] + nv - 1) as usize * self.side() + (h[1] + nv - 1) as usize
        }
    }

    /// Weight attached to the grid offset `h` (in cells) at (t, x).
    pub fn pair_weight(&self, h: [i64; 2], t: f64, x: &[f64]) -> f64 {
        let i = self.offset_index(h);
        let mut w = self.hom.weights[i];
        if let Some(m) = &self.modw {
            w += self.modulation_at(t, x) * m.weights[i];
        }
        self.kernel.c * w
    }

    /// `int_{w outside the box} K(t,x,v,w) dw` at every sample.
    pub fn exterior_mass(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let a = self.modulation_at(t, x);
        (0..self.vgrid.len())
            .map(|j| {
                let mut e = self.hom.exterior[j];
                if let Some(m) = &self.modw {
                    e += a * m.exterior[j];
                }
                self.kernel.c * e
            })
            .collect()
    }

    fn convolve(&self, comp: &Component, g: &[f64]) -> Vec<f64> {
        let nv = self.vgrid.nv;
        let m = 2 * nv;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.plan.len()];
        for (j, &val) in g.iter().enumerate() {
            let idx = self.vgrid.multi(j);
            let p = if self.vgrid.n == 1 { idx[0] } else { idx[0] * m + idx[1] };
            buf[p] = Complex64::new(val, 0.0);
        }
        self.plan.forward(&mut buf);
        buf.iter_mut().zip(&comp.hat).for_each(|(z, h)| *z *= h);
        self.plan.inverse(&mut buf);
        (0..g.len())
            .map(|j| {
                let idx = self.vgrid.multi(j);
                let p = if self.vgrid.n == 1 { idx[0] } else { idx[0] * m + idx[1] };
                buf[p].re
            })
            .collect()
    }

    /// `L g` for the zero extension of `g`, without precondition checks.
    pub fn apply_zero_extended(&self, g: &[f64], t: f64, x: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.vgrid.len());
        let conv = self.convolve(&self.hom, g);
        let mut out: Vec<f64> = conv.iter().zip(g).map(|(c, v)| self.kernel.c * (c - self.hom.diag * v)).collect();
        if let Some(m) = &self.modw {
            let a = self.modulation_at(t, x);
            if a != 0.0 {
                let conv = self.convolve(m, g);
                for ((o, c), v) in out.iter_mut().zip(&conv).zip(g) {
                    *o += self.kernel.c * a * (c - m.diag * v);
                }
            }
        }
        out
    }

    /// `L f` at (t, x) for a slice that is constant within distance 1 of the
    /// box faces; the slice is extended by that constant.
    pub fn apply(&self, slice: &[f64], t: f64, x: &[f64]) -> Result<LOutput> {
        let c_ext = boundary_constant(&self.vgrid, slice)?;
        let g: Vec<f64> = slice.iter().map(|v| v - c_ext).collect();
        let values = self.apply_zero_extended(&g, t, x);
        let sup = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(LOutput { values, tail_bound: self.tail_bound(sup) })
    }

    /// `2 kappa sup int_{|w|>V} |w|^(-n-2s) dw`.
    pub fn tail_bound(&self, sup: f64) -> f64 {
        let n = self.vgrid.n;
        let sphere = if n == 1 { 2.0 } else { 2.0 * PI };
        let s = self.kernel.s;
        2.0 * self.kernel.kappa * sup * sphere * self.vgrid.halfwidth.powf(-2.0 * s) / (2.0 * s)
    }

    /// Symbol of the velocity-periodic discrete operator, indexed like the
    /// `nv^n` FFT of a slice: `(hom, modulated)` parts before the factor `c`.
    pub fn periodic_symbols(&self) -> (Vec<f64>, Option<Vec<f64>>) {
        let hom = self.fold_symbol(&self.hom);
        let modw = self.modw.as_ref().map(|m| self.fold_symbol(m));
        (hom, modw)
    }

    fn fold_symbol(&self, comp: &Component) -> Vec<f64> {
        let nv = self.vgrid.nv as i64;
        let n = self.vgrid.n;
        let plan = CubeFft::new(n, nv as usize);
        let mut folded = vec![Complex64::new(0.0, 0.0); plan.len()];
        let side = self.side() as i64;
        for (i, &w) in comp.weights.iter().enumerate() {
            let h = if n == 1 { [i as i64 - (nv - 1), 0] } else { [i as i64 / side - (nv - 1), i as i64 % side - (nv - 1)] };
            let k0 = h[0].rem_euclid(nv) as usize;
            let k1 = h[1].rem_euclid(nv) as usize;
            let p = if n == 1 { k0 } else { k0 * nv as usize + k1 };
            folded[p] += w;
        }
        plan.forward(&mut folded);
        let mut sym: Vec<f64> = folded.iter().map(|z| z.re - comp.diag).collect();
        // Far periodic images see the slice mean, so the zero mode is exactly 0.
        sym[0] = 0.0;
        sym
    }
}

/// Value taken by the slice within distance 1 of the box faces.
pub fn boundary_constant(vgrid: &VGrid, slice: &[f64]) -> Result<f64> {
    let (lo, hi) = vgrid.cell_box();
    let scale = slice.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut value: Option<f64> = None;
    for (j, &f) in slice.iter().enumerate() {
        let p = vgrid.point(j);
        let near = p[..vgrid.n].iter().any(|&c| c - lo < 1.0 || hi - c < 1.0);
        if near {
            match value {
                None => value = Some(f),
                Some(c) if (f - c).abs() > 1e-12 * scale => {
                    return precondition(format!(
                        "slice is not constant within distance 1 of the velocity box faces (sample {j}: {f} vs {c})"
                    ))
                }
                _ => {}
            }
        }
    }
    Ok(value.unwrap_or(0.0))
}

fn build_component(vgrid: &VGrid, s: f64, plan: &CubeFft, truncate: bool, profile: &dyn Fn(f64) -> f64, homogeneous: bool) -> Component {
    let n = vgrid.n;
    let nv = vgrid.nv as i64;
    let dv = vgrid.dv();
    let p = n as f64 + 2.0 * s;
    let side = (2 * nv - 1) as usize;
    let len = side.pow(n as u32);
    let band = |r: f64| if truncate && r > BAND_RADIUS { 0.0 } else { 1.0 };
    let density = |r: f64| band(r) * profile(r) * r.powf(-p);
    let near_rule = Rule::new(8);
    let mid_rule = Rule::new(4);
    let mut weights = vec![0.0; len];
    for (i, w) in weights.iter_mut().enumerate() {
        let h = if n == 1 { [i as i64 - (nv - 1), 0] } else { [i as i64 / side as i64 - (nv - 1), i as i64 % side as i64 - (nv - 1)] };
        if h == [0, 0] {
            continue;
        }
        let center = [h[0] as f64 * dv, h[1] as f64 * dv];
        let r = (center[0].powi(2) + center[1].powi(2)).sqrt();
        *w = if r < NEAR_CELLS * dv {
            cell_integral(&near_rule, n, center, dv, |y| density(y) * y * y) / (r * r)
        } else if n == 1 && homogeneous {
            exact_cell_1d(center[0].abs(), dv, s, truncate)
        } else if r < 12.0 * dv {
            cell_integral(&mid_rule, n, center, dv, density)
        } else {
            density(r) * dv.powi(n as i32)
        };
    }
    // The diagonal cell carries the second moment of the kernel; hand it to
    // the nearest axis neighbours as a discrete Laplacian.
    let central = profile(0.0) * cell_moment(n, dv, 2.0 - p) / (2.0 * n as f64 * dv * dv);
    for a in 0..n {
        for sign in [-1i64, 1] {
            let mut h = [0i64; 2];
            h[a] = sign;
            let i = if n == 1 { (h[0] + nv - 1) as usize } else { (h[0] + nv - 1) as usize * side + (h[1] + nv - 1) as usize };
            weights[i] += central;
        }
    }
    let tail = if homogeneous && !truncate { cube_tail(n, (nv as f64 - 0.5) * dv, s) } else { 0.0 };
    let diag = weights.iter().sum::<f64>() + tail;

    let m = 2 * vgrid.nv;
    let mut padded = vec![Complex64::new(0.0, 0.0); plan.len()];
    for (i, &w) in weights.iter().enumerate() {
        let h = if n == 1 { [i as i64 - (nv - 1), 0] } else { [i as i64 / side as i64 - (nv - 1), i as i64 % side as i64 - (nv - 1)] };
        let k0 = h[0].rem_euclid(m as i64) as usize;
        let k1 = h[1].rem_euclid(m as i64) as usize;
        let q = if n == 1 { k0 } else { k0 * m + k1 };
        padded[q] = Complex64::new(w, 0.0);
    }
    plan.forward(&mut padded);
    let hat = padded;

    // Exterior mass: everything the in-box weights do not cover.
    let ones = vec![1.0; vgrid.len()];
    let mut comp = Component { weights, hat, diag, exterior: Vec::new() };
    let covered = {
        let mut buf = vec![Complex64::new(0.0, 0.0); plan.len()];
        for (j, &val) in ones.iter().enumerate() {
            let idx = vgrid.multi(j);
            let q = if n == 1 { idx[0] } else { idx[0] * m + idx[1] };
            buf[q] = Complex64::new(val, 0.0);
        }
        plan.forward(&mut buf);
        buf.iter_mut().zip(&comp.hat).for_each(|(z, h)| *z *= h);
        plan.inverse(&mut buf);
        (0..vgrid.len())
            .map(|j| {
                let idx = vgrid.multi(j);
                let q = if n == 1 { idx[0] } else { idx[0] * m + idx[1] };
                buf[q].re
            })
            .collect::<Vec<f64>>()
    };
    comp.exterior = covered.iter().map(|c| (comp.diag - c).max(0.0)).collect();
    comp
}

fn cell_integral(rule: &Rule, n: usize, center: [f64; 2], dv: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = 0.5 * dv;
    if n == 1 {
        rule.panel(center[0] - h, center[0] + h, |y| f(y.abs()))
    } else {
        rule.panel(center[0] - h, center[0] + h, |y0| rule.panel(center[1] - h, center[1] + h, |y1| f((y0 * y0 + y1 * y1).sqrt())))
    }
}

/// `int_{cell} |y|^(-1-2s) dy` for the cell centred at distance `r` (n = 1).
fn exact_cell_1d(r: f64, dv: f64, s: f64, truncate: bool) -> f64 {
    let a = r - 0.5 * dv;
    let mut b = r + 0.5 * dv;
    if truncate {
        if a >= BAND_RADIUS {
            return 0.0;
        }
        b = b.min(BAND_RADIUS);
    }
    (a.powf(-2.0 * s) - b.powf(-2.0 * s)) / (2.0 * s)
}

/// `int_{|y|_inf > L} |y|^(-n-2s) dy`.
fn cube_tail(n: usize, l: f64, s: f64) -> f64 {
    if n == 1 {
        2.0 * l.powf(-2.0 * s) / (2.0 * s)
    } else {
        let rule = Rule::new(16);
        8.0 * rule.composite(0.0, PI / 4.0, 8, |phi| (l / phi.cos()).powf(-2.0 * s) / (2.0 * s))
    }
}

/// `L f` at (t, x) for one velocity slice; see [`CollisionOp::apply`].
pub fn apply_l(kernel: &Kernel, vgrid: &VGrid, slice: &[f64], t: f64, x: &[f64]) -> Result<LOutput> {
    CollisionOp::new(kernel, vgrid)?.apply(slice, t, x)
}

/// `B(f, g) = 1/2 iint K [f(w)-f(v)][g(w)-g(v)]` by a symmetric pair sum over
/// the box plus the exact exterior contribution.
pub fn bilinear_b(op: &CollisionOp, f: &[f64], g: &[f64], t: f64, x: &[f64]) -> Result<f64> {
    let vg = &op.vgrid;
    let cf = boundary_constant(vg, f)?;
    let cg = boundary_constant(vg, g)?;
    let len = vg.len();
    let dvol = vg.cell_volume();
    let idx: Vec<[i64; 2]> = (0..len).map(|j| { let m = vg.multi(j); [m[0] as i64, m[1] as i64] }).collect();
    let mut pairs = 0.0;
    for i in 0..len {
        let (fi, gi) = (f[i], g[i]);
        for j in (i + 1)..len {
            let df = f[j] - fi;
            let dg = g[j] - gi;
            if df != 0.0 && dg != 0.0 {
                let h = [idx[j][0] - idx[i][0], idx[j][1] - idx[i][1]];
                pairs += op.pair_weight(h, t, x) * df * dg;
            }
        }
    }
    let ext = op.exterior_mass(t, x);
    let outside: f64 = (0..len).map(|j| (f[j] - cf) * (g[j] - cg) * ext[j]).sum();
    Ok((pairs + outside) * dvol)
}

/// Cross term `-B(f+, f-)` and its band lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    pub value: f64,
    /// `kappa^-1 6^-(n+2s) int_B3 f+ int_B3 f-`, or 0 when a support leaves B3.
    pub lower_bound: f64,
    /// Whether both supports lie in B3 so the bound applies.
    pub applicable: bool,
    /// `value >= lower_bound - 1e-9` (true when not applicable).
    pub bound_holds: bool,
}

/// Cross term of two non-negative slices with disjoint supports.
pub fn cross_term(op: &CollisionOp, fplus: &[f64], fminus: &[f64], t: f64, x: &[f64]) -> Result<CrossTerm> {
    let vg = &op.vgrid;
    if fplus.iter().chain(fminus).any(|&v| v < 0.0) {
        return precondition("cross term needs non-negative inputs");
    }
    if let Some(j) = (0..vg.len()).find(|&j| fplus[j] * fminus[j] > 1e-14) {
        return precondition(format!("supports overlap at sample {j} (product {})", fplus[j] * fminus[j]));
    }
    let value = -bilinear_b(op, fplus, fminus, t, x)?;
    let dvol = vg.cell_volume();
    let inside = |f: &[f64]| (0..vg.len()).all(|j| f[j] == 0.0 || vg.norm(j) <= 3.0 + 1e-12);
    let applicable = inside(fplus) && inside(fminus);
    let (lower_bound, bound_holds) = if applicable {
        let n = vg.n as f64;
        let mp: f64 = fplus.iter().sum::<f64>() * dvol;
        let mm: f64 = fminus.iter().sum::<f64>() * dvol;
        let lb = BAND_RADIUS.powf(-(n + 2.0 * op.kernel.s)) / op.kernel.kappa * mp * mm;
        (lb, value >= lb - 1e-9)
    } else {
        (0.0, true)
    };
    Ok(CrossTerm { value, lower_bound, applicable, bound_holds })
}
