//! Trajectory diagnostics: the exponent table of the level-set recursion,
//! the localized energy inequality, the level energies `E_k`, the
//! intermediate-value measures and the velocity-averaging gain.

use crate::cutoffs::{apply_l_growth, CutoffFamily, Radial};
use crate::error::{param, precondition, Error, Result};
use crate::fft::{forward_axes, signed_frequency, CubeFft};
use crate::fracops::MultiplierOp;
use crate::kernel::{CollisionOp, Family, Kernel};
use crate::phase::{check_order, velocity_average, Field, LevelSet, PhaseGrid, Region};
use crate::report::Verdict;
use crate::solver::SourceFn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Exponents of the level-set recursion for given `(n, s, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub n: usize,
    pub s: f64,
    pub r: f64,
    /// `n (1+s)(n+1)/s * (2s/n + 1/2 + n/(2s))`.
    pub r0: f64,
    pub p1: f64,
    pub p2: f64,
    pub theta_star: f64,
    /// `|theta/2 + (1-theta)/p1 - theta/p2 - (1-theta)|` at `theta_star`.
    pub theta_residual: f64,
    pub q: f64,
    pub beta: f64,
    pub alpha_dg2: f64,
    /// `(q/2)(1 - 2/r + theta_star/r)`.
    pub recursion_gamma: f64,
    /// The `r` at which `recursion_gamma` equals 1: `(2 - theta_star) / (1 - 2/q)`.
    pub gamma_crossing: f64,
}

/// Fills the exponent table; requires `0 < s < 1`, `2s < n` and `r > 2`.
pub fn exponents(n: usize, s: f64, r: f64) -> Result<ExponentTable> {
    check_order(n, s)?;
    if !(r > 2.0) {
        return param(format!("source exponent r = {r} must exceed 2"));
    }
    let nf = n as f64;
    let inv_p1 = 0.5 - 1.0 / (2.0 * (1.0 + s) * (nf + 1.0));
    let inv_p2 = 0.5 - s / nf;
    // theta/2 + (1-theta) a = theta b + (1-theta) is linear in theta.
    let theta = (1.0 - inv_p1) / (1.5 - inv_p1 - inv_p2);
    let residual = (theta / 2.0 + (1.0 - theta) * inv_p1 - theta * inv_p2 - (1.0 - theta)).abs();
    let q = 1.0 / (theta / 2.0 + (1.0 - theta) * inv_p1);
    Ok(ExponentTable {
        n,
        s,
        r,
        r0: critical_exponent(n, s),
        p1: 1.0 / inv_p1,
        p2: 1.0 / inv_p2,
        theta_star: theta,
        theta_residual: residual,
        q,
        beta: 1.0 / (2.0 * (1.0 + s)),
        alpha_dg2: 1.0 / (2.0 * (s + 0.5 * nf)),
        recursion_gamma: 0.5 * q * (1.0 - 2.0 / r + theta / r),
        gamma_crossing: (2.0 - theta) / (1.0 - 2.0 / q),
    })
}

/// `n (1+s)(n+1)/s * (2s/n + 1/2 + n/(2s))`.
pub fn critical_exponent(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    nf * (1.0 + s) * (nf + 1.0) / s * (2.0 * s / nf + 0.5 + nf / (2.0 * s))
}

/// `recursion_gamma` as a function of `r`.
pub fn recursion_gamma(n: usize, s: f64, r: f64) -> Result<f64> {
    Ok(exponents(n, s, r)?.recursion_gamma)
}

/// The crossing `recursion_gamma(r) = 1`, located by bisection on `(2, 1e12]`.
pub fn bisect_gamma_crossing(n: usize, s: f64) -> Result<f64> {
    let g = |r: f64| recursion_gamma(n, s, r).map(|v| v - 1.0);
    let (mut lo, mut hi) = (2.0 + 1e-12, 1e12);
    if g(lo)? >= 0.0 || g(hi)? <= 0.0 {
        return Err(Error::Numerical { time: 0.0, reason: "recursion exponent does not cross 1 on (2, 1e12]".into() });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inner and outer windows of the energy inequality and the radius beyond
/// which `f <= psi` is required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    /// `(T, t_end] x Omega`.
    pub outer: Region,
    /// `[S, t_end] x Omega_bar`.
    pub inner: Region,
    pub radius: f64,
}

impl EnergyWindow {
    /// `min(S - T, dist(Omega_bar, complement of Omega))`.
    pub fn separation(&self) -> Result<f64> {
        let (Some(ob), Some(ib)) = (self.outer.x, self.inner.x) else {
            return param("energy windows need x balls");
        };
        let shift: f64 = ob.center.iter().zip(&ib.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dt = self.inner.t[0] - self.outer.t[0];
        let dx = ob.radius - ib.radius - shift;
        if !(dt > 0.0 && dx > 0.0) || self.inner.t[1] > self.outer.t[1] {
            return precondition("inner window must sit compactly inside the outer one");
        }
        Ok(dt.min(dx))
    }
}

/// A source term with its integrability exponent.
pub struct SourceTerm<'a> {
    pub a: &'a SourceFn,
    pub r: f64,
}

/// Both sides of the localized energy inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `iint_inner B(f+, f+)`.
    pub lhs_b: f64,
    /// `-iint_inner B(f+, f-)`, with `f-` restricted to the velocity box.
    pub lhs_cross: f64,
    /// `R iiint f+^2`, `sup_{|v|<R} |L psi| iiint f+` and `||a||_r ||f+||_{r*}`
    /// over the outer window, each divided by the separation.
    pub rhs_terms: [f64; 3],
    pub delta: f64,
    pub sup_l_psi: f64,
    /// `(lhs_b + lhs_cross) / sum(rhs_terms)`; `None` when the right side vanishes.
    pub fitted_c: Option<f64>,
}

/// Evaluates the energy inequality on a trajectory against the soft cutoff `psi`.
///
/// Fails with a witness when `f > psi` somewhere in the outer window with `|v| >= R`.
pub fn energy_report(
    traj: &Field,
    kernel: &Kernel,
    family: &CutoffFamily,
    psi: &Radial,
    window: &EnergyWindow,
    source: Option<SourceTerm<'_>>,
) -> Result<EnergyReport> {
    let g = &traj.grid;
    let vg = g.vgrid();
    let xg = g.xgrid();
    let n = g.n;
    let delta = window.separation()?;
    let radius = window.radius;
    if !(radius > 0.0 && radius <= g.v_halfwidth - 1.0) {
        return param(format!("radius {radius} must lie in (0, V - 1]"));
    }
    let outer = window.outer.select(g)?;
    let inner = window.inner.select(g)?;
    let psi_v = family.sample(psi, &vg);
    let norms: Vec<f64> = (0..vg.len()).map(|j| vg.norm(j)).collect();

    for &k in &outer.t {
        for &ix in &outer.x {
            let f = traj.vslice(k, ix);
            if let Some(j) = (0..vg.len()).find(|&j| norms[j] >= radius && f[j] > psi_v[j]) {
                return precondition(format!(
                    "f = {} exceeds psi = {} at t = {}, x = {:?}, v = {:?}",
                    f[j],
                    psi_v[j],
                    g.time(k),
                    &xg.point(ix)[..n],
                    &vg.point(j)[..n]
                ));
            }
        }
    }

    let op = CollisionOp::new(kernel, &vg)?;
    let sup_l_psi = sup_l_psi_inside(family, &op, psi, g, &outer.t, &outer.x, &norms, radius);

    let dv = vg.cell_volume();
    let txvol = g.dt() * xg.cell_volume();
    let r_star = source.as_ref().map(|src| if src.r.is_infinite() { 1.0 } else { src.r / (src.r - 1.0) });
    let (mut i2, mut i1, mut ir, mut sup_fp) = (0.0, 0.0, 0.0, 0.0f64);
    let (mut a_acc, mut a_sup) = (0.0, 0.0f64);
    let (mut lhs_b, mut lhs_cross) = (0.0, 0.0);
    for &k in &outer.t {
        let t = g.time(k);
        let in_t = inner.t.contains(&k);
        for &ix in &outer.x {
            let x = xg.point(ix);
            let f = traj.vslice(k, ix);
            let fp: Vec<f64> = f.iter().zip(&psi_v).map(|(a, b)| (a - b).max(0.0)).collect();
            for &p in &fp {
                i2 += p * p;
                i1 += p;
                sup_fp = sup_fp.max(p);
                if let Some(rs) = r_star {
                    ir += p.powf(rs);
                }
            }
            if let Some(src) = &source {
                for j in 0..vg.len() {
                    let a = (src.a)(t, &x[..n], &vg.point(j)[..n]).abs();
                    a_sup = a_sup.max(a);
                    if src.r.is_finite() {
                        a_acc += a.powf(src.r);
                    }
                }
            }
            if !in_t || !inner.x.contains(&ix) || fp.iter().all(|&p| p == 0.0) {
                continue;
            }
            let fm: Vec<f64> = f.iter().zip(&psi_v).map(|(a, b)| (b - a).max(0.0)).collect();
            let lp = op.apply_zero_extended(&fp, t, &x[..n]);
            let lm = op.apply_zero_extended(&fm, t, &x[..n]);
            lhs_b -= dv * fp.iter().zip(&lp).map(|(a, b)| a * b).sum::<f64>() * txvol;
            lhs_cross += 2.0 * dv * fp.iter().zip(&lm).map(|(a, b)| a * b).sum::<f64>() * txvol;
        }
    }
    let vol = g.cell_volume();
    let term3 = match (&source, r_star) {
        (Some(src), Some(rs)) => {
            let a_norm = if src.r.is_finite() { (a_acc * vol).powf(1.0 / src.r) } else { a_sup };
            let f_norm = if rs.is_finite() { (ir * vol).powf(1.0 / rs) } else { sup_fp };
            a_norm * f_norm
        }
        _ => 0.0,
    };
    let rhs_terms = [radius * i2 * vol / delta, sup_l_psi * i1 * vol / delta, term3 / delta];
    let total: f64 = rhs_terms.iter().sum();
    let fitted_c = (total > 0.0).then(|| (lhs_b + lhs_cross) / total);
    Ok(EnergyReport { lhs_b, lhs_cross, rhs_terms, delta, sup_l_psi, fitted_c })
}

/// `sup |L psi|` over grid samples with `|v| < R`. `L psi` is affine in the
/// modulation amplitude, so the supremum over the window is attained at the
/// (t, x) with the smallest or the largest amplitude.
#[allow(clippy::too_many_arguments)]
fn sup_l_psi_inside(
    family: &CutoffFamily,
    op: &CollisionOp,
    psi: &Radial,
    g: &PhaseGrid,
    ts: &[usize],
    xs: &[usize],
    norms: &[f64],
    radius: f64,
) -> f64 {
    let xg = g.xgrid();
    let n = g.n;
    let mut points: Vec<(f64, [f64; 2])> = Vec::new();
    if op.kernel.family == Family::Modulated {
        let mut lo = (f64::INFINITY, 0.0, [0.0; 2]);
        let mut hi = (f64::NEG_INFINITY, 0.0, [0.0; 2]);
        for &k in ts {
            for &ix in xs {
                let (t, x) = (g.time(k), xg.point(ix));
                let a = op.modulation_at(t, &x[..n]);
                if a < lo.0 {
                    lo = (a, t, x);
                }
                if a > hi.0 {
                    hi = (a, t, x);
                }
            }
        }
        if lo.0.is_finite() {
            points.push((lo.1, lo.2));
            points.push((hi.1, hi.2));
        }
    } else if !ts.is_empty() && !xs.is_empty() {
        points.push((g.time(ts[0]), xg.point(xs[0])));
    }
    points
        .iter()
        .map(|(t, x)| {
            let l = apply_l_growth(family, op, psi, *t, &x[..n]);
            l.iter().zip(norms).filter(|(_, &r)| r < radius).map(|(v, _)| v.abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Level energies of the De Giorgi recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    /// `E_k = iiint_{Q_k x box} (f - psi_k)_+^2`, `k = 0..=k_max`.
    pub energies: Vec<f64>,
    pub monotone: bool,
    /// Samples of `Q_0` where `1_{f > psi_k} <= 2^(k+1) (f - psi_{k-1})_+` fails, summed over k.
    pub indicator_failures: usize,
    pub indicator_checked: usize,
    /// Least-squares `(C, gamma)` in `log E_k = k log C + gamma log E_{k-3}`.
    pub fit: Option<[f64; 2]>,
    /// First `k` with `E_k < 1e-12`.
    pub first_below: Option<usize>,
}

/// Threshold used for [`LevelReport::first_below`].
pub const LEVEL_FLOOR: f64 = 1e-12;

/// `Q_k = [-1 - 2^-k, 0] x B_{1 + 2^-k}`.
pub fn level_region(k: u32) -> Region {
    let h = 0.5f64.powi(k as i32);
    Region::centered(-1.0 - h, 0.0, 1.0 + h, None)
}

/// Energies `E_k` of the cutoffs `psi_k` over the shrinking cylinders `Q_k`.
pub fn degiorgi_levels(traj: &Field, family: &CutoffFamily, k_max: u32) -> Result<LevelReport> {
    let g = &traj.grid;
    let vg = g.vgrid();
    let q0 = level_region(0);
    q0.select(g)?;
    let norms: Vec<f64> = (0..vg.len()).map(|j| vg.norm(j)).collect();
    let cutoffs: Vec<Vec<f64>> = (0..=k_max)
        .map(|k| {
            let psi = family.level_cutoff(k);
            norms.iter().map(|&r| family.eval(&psi, r)).collect()
        })
        .collect();
    let vol = g.cell_volume();
    let mut energies = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        let sel = level_region(k).select(g)?;
        let psi = &cutoffs[k as usize];
        let mut acc = 0.0;
        sel.for_each(g, |_, _, iv, i| {
            let p = (traj.data[i] - psi[iv]).max(0.0);
            acc += p * p;
        });
        energies.push(acc * vol);
    }
    let monotone = energies.windows(2).all(|w| w[1] <= w[0]);

    let sel = q0.select(g)?;
    let mut failures = 0usize;
    let mut checked = 0usize;
    for k in 1..=k_max {
        let factor = 2f64.powi(k as i32 + 1);
        let (hi, lo) = (&cutoffs[k as usize], &cutoffs[k as usize - 1]);
        sel.for_each(g, |_, _, iv, i| {
            let f = traj.data[i];
            let ind = if f - hi[iv] > 0.0 { 1.0 } else { 0.0 };
            checked += 1;
            if ind > factor * (f - lo[iv]).max(0.0) {
                failures += 1;
            }
        });
    }
    let first_below = energies.iter().position(|&e| e < LEVEL_FLOOR);
    Ok(LevelReport { fit: fit_recursion(&energies), energies, monotone, indicator_failures: failures, indicator_checked: checked, first_below })
}

/// Fits `log E_k = k log C + gamma log E_{k-3}` over the positive entries.
pub fn fit_recursion(energies: &[f64]) -> Option<[f64; 2]> {
    let rows: Vec<(f64, f64, f64)> = (3..energies.len())
        .filter(|&k| energies[k] > 0.0 && energies[k - 3] > 0.0)
        .map(|k| (k as f64, energies[k - 3].ln(), energies[k].ln()))
        .collect();
    if rows.len() < 3 {
        return None;
    }
    let (mut saa, mut sab, mut sbb, mut say, mut sby) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(a, b, y) in &rows {
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        say += a * y;
        sby += b * y;
    }
    let det = saa * sbb - sab * sab;
    if det.abs() <= 1e-12 * saa * sbb {
        return None;
    }
    let log_c = (say * sbb - sby * sab) / det;
    let gamma = (saa * sby - sab * say) / det;
    Some([log_c.exp(), gamma])
}

/// Constants of the intermediate-value and oscillation statements. The
/// theory only asserts that admissible values exist; these are calibration
/// parameters and every verdict is relative to them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalConstants {
    pub delta0: f64,
    pub gamma0: f64,
    pub theta0: f64,
    pub lambda: f64,
}

impl Default for UniversalConstants {
    fn default() -> Self {
        UniversalConstants { delta0: 0.05, gamma0: 0.01, theta0: 0.25, lambda: 0.5 }
    }
}

impl UniversalConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta0", self.delta0), ("gamma0", self.gamma0), ("theta0", self.theta0), ("lambda", self.lambda)] {
            if !(v > 0.0 && v < 1.0) {
                return param(format!("{name} = {v} must lie in (0, 1)"));
            }
        }
        if !(self.theta0 < 1.0 / 3.0) {
            return param(format!("theta0 = {} must be below 1/3", self.theta0));
        }
        Ok(())
    }
}

/// The three level-set measures of the intermediate-value statement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dg2Report {
    /// `|{f <= 0} ∩ [-5,-4] x B_2 x B_2|`.
    pub early: f64,
    /// Half the discrete volume of `[-5,-4] x B_2 x B_2`.
    pub early_threshold: f64,
    /// `|{f >= 1 - theta0} ∩ [-2,0] x B_2 x B_2|`.
    pub late: f64,
    /// `|{0 < f < 1 - theta0} ∩ [-5,0] x B_2 x B_3|`.
    pub between: f64,
    pub source_norm: f64,
    /// Early mass, late mass and source-size hypotheses.
    pub hypotheses: [bool; 3],
    pub verdict: Verdict,
}

/// Evaluates the intermediate-value implication on a trajectory covering
/// `[-6, 0] x B_3`. `source_norm` is `||a||_r` over that window.
pub fn dg2_measures(traj: &Field, constants: &UniversalConstants, family: &CutoffFamily, source_norm: f64) -> Result<Dg2Report> {
    constants.validate()?;
    let g = &traj.grid;
    let vg = g.vgrid();
    let xg = g.xgrid();
    let n = g.n;
    let ext = Region::centered(-6.0, 0.0, 3.0, None);
    let sel = ext.select(g)?;
    let psi = family.psi_theta(constants.theta0);
    let bound: Vec<f64> = (0..vg.len()).map(|j| 1.0 + family.eval(&psi, vg.norm(j))).collect();
    let mut witness = None;
    sel.for_each(g, |k, ix, iv, i| {
        if witness.is_none() && traj.data[i].abs() > bound[iv] {
            witness = Some((k, ix, iv));
        }
    });
    if let Some((k, ix, iv)) = witness {
        return precondition(format!(
            "|f| = {} exceeds 1 + psi = {} at t = {}, x = {:?}, v = {:?}",
            traj.at(k, ix, iv).abs(),
            bound[iv],
            g.time(k),
            &xg.point(ix)[..n],
            &vg.point(iv)[..n]
        ));
    }
    let early_region = Region::centered(-5.0, -4.0, 2.0, Some(2.0));
    let late_region = Region::centered(-2.0, 0.0, 2.0, Some(2.0));
    let int_region = Region::centered(-5.0, 0.0, 2.0, Some(3.0));
    let early = crate::phase::level_set_measure(traj, LevelSet::AtMost(0.0), &early_region)?;
    let early_threshold = 0.5 * early_region.select(g)?.volume(g);
    let late = crate::phase::level_set_measure(traj, LevelSet::AtLeast(1.0 - constants.theta0), &late_region)?;
    let between = crate::phase::level_set_measure(traj, LevelSet::Between(0.0, 1.0 - constants.theta0), &int_region)?;
    let hypotheses = [early >= early_threshold, late >= constants.delta0, source_norm <= constants.theta0];
    let verdict = if hypotheses.iter().all(|&h| h) {
        Verdict::from_bool(between >= constants.gamma0)
    } else {
        Verdict::Vacuous
    };
    Ok(Dg2Report { early, early_threshold, late, between, source_norm, hypotheses, verdict })
}

/// Both sides of the localized averaging inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    /// `1 / (2 (1 + m))`.
    pub alpha: f64,
    /// Windowed `H^alpha` norm of the velocity average.
    pub lhs: f64,
    /// `||f||_2 + ||(1 - Lap_v)^(-m/2) g||_2` over the outer window.
    pub rhs: f64,
    /// `lhs / rhs`; `None` (vacuous) when both sides vanish.
    pub ratio: Option<f64>,
    /// Relative L^2 mismatch of `(d_t + v . grad_x) f` against `g`.
    pub transport_residual: f64,
}

/// `1` up to `d = 0`, `0` from `d = width`, quintic smoothstep in between.
fn taper(d: f64, width: f64) -> f64 {
    if d <= 0.0 {
        1.0
    } else if d >= width {
        0.0
    } else {
        let u = 1.0 - d / width;
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Compares the windowed `H^alpha(t, x)` norm of `int eta f dv` with the
/// transport data `(f, g)`. The window is 1 on `inner` and tapers to 0 at
/// the boundary of `outer`, so the value bounds the extension infimum from above.
pub fn averaging_check(f: &Field, g: &Field, eta: &[f64], m: f64, inner: &Region, outer: &Region, tol: f64) -> Result<AveragingReport> {
    if f.grid != g.grid {
        return param("f and g must share a grid");
    }
    if !(m > 0.0) {
        return param(format!("m = {m} must be positive"));
    }
    let grid = &f.grid;
    let (Some(ib), Some(ob)) = (inner.x, outer.x) else {
        return param("averaging windows need x balls");
    };
    let shift = ib.center.iter().zip(&ob.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    if !(inner.t[0] > outer.t[0] && inner.t[1] < outer.t[1] && ib.radius + shift < ob.radius) {
        return precondition("inner region must sit compactly inside the outer one");
    }
    let osel = outer.select(grid)?;
    inner.select(grid)?;
    let alpha = 1.0 / (2.0 * (1.0 + m));

    let transport_residual = transport_mismatch(f, g, &osel.t)?;
    if transport_residual > tol {
        return precondition(format!("transport identity residual {transport_residual:.3e} exceeds {tol:.3e}"));
    }

    // Right-hand side.
    let vg = grid.vgrid();
    let bessel = MultiplierOp::bessel_pow(-m)?;
    let (mut f2, mut g2) = (0.0, 0.0);
    for &k in &osel.t {
        for &ix in &osel.x {
            f2 += f.vslice(k, ix).iter().map(|v| v * v).sum::<f64>();
            let gs = g.vslice(k, ix);
            if gs.iter().any(|&v| v != 0.0) {
                g2 += bessel.apply(&vg, gs).iter().map(|v| v * v).sum::<f64>();
            }
        }
    }
    let vol = grid.cell_volume();
    let rhs = (f2 * vol).sqrt() + (g2 * vol).sqrt();

    // Windowed velocity average, zero-padded in time.
    let rho = velocity_average(f, eta)?;
    let xg = grid.xgrid();
    let n = grid.n;
    let nt_win = osel.t.len();
    let nt_pad = (2 * nt_win).next_power_of_two();
    let nxt = xg.len();
    let mut buf = vec![Complex64::new(0.0, 0.0); nt_pad * nxt];
    for (slot, &k) in osel.t.iter().enumerate() {
        let t = grid.time(k);
        let wt = taper((inner.t[0] - t).max(t - inner.t[1]), (inner.t[0] - outer.t[0]).min(outer.t[1] - inner.t[1]));
        if wt == 0.0 {
            continue;
        }
        for ix in 0..nxt {
            let x = xg.point(ix);
            let r = x[..n].iter().zip(&ib.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
            let wx = taper(r - ib.radius, ob.radius - shift - ib.radius);
            buf[slot * nxt + ix] = Complex64::new(wt * wx * rho.at(k, ix), 0.0);
        }
    }
    let mut shape = vec![nt_pad];
    shape.extend(std::iter::repeat(grid.nx).take(n));
    forward_axes(&mut buf, &shape);
    let dt = grid.dt();
    let (ct, cx) = (2.0 * PI / (nt_pad as f64 * dt), 2.0 * PI / grid.x_period);
    let mut acc = 0.0;
    for (idx, z) in buf.iter().enumerate() {
        let kt = signed_frequency(idx / nxt, nt_pad) as f64 * ct;
        let rest = idx % nxt;
        let mut zeta2 = kt * kt;
        if n == 1 {
            zeta2 += (signed_frequency(rest, grid.nx) as f64 * cx).powi(2);
        } else {
            zeta2 += (signed_frequency(rest / grid.nx, grid.nx) as f64 * cx).powi(2);
            zeta2 += (signed_frequency(rest % grid.nx, grid.nx) as f64 * cx).powi(2);
        }
        acc += (1.0 + zeta2).powf(alpha) * z.norm_sqr();
    }
    let lhs = (acc * dt * xg.cell_volume() / buf.len() as f64).sqrt();
    let ratio = if rhs > 0.0 { Some(lhs / rhs) } else if lhs > 0.0 { Some(f64::INFINITY) } else { None };
    Ok(AveragingReport { alpha, lhs, rhs, ratio, transport_residual })
}

/// Relative L^2 mismatch between `(d_t + v . grad_x) f` and `g` on the stored
/// times of `ts` that admit a fourth-order central difference.
pub fn transport_mismatch(f: &Field, g: &Field, ts: &[usize]) -> Result<f64> {
    let grid = &f.grid;
    let n = grid.n;
    let xg = grid.xgrid();
    let vg = grid.vgrid();
    let nxt = xg.len();
    let nvt = vg.len();
    let dt = grid.dt();
    let plan = CubeFft::new(n, grid.nx);
    let (mut diff2, mut d2, mut g2, mut f2) = (0.0, 0.0, 0.0, 0.0);
    let mut used = 0;
    for &k in ts {
        if k < 2 || k + 2 >= grid.nt {
            continue;
        }
        used += 1;
        let dfdt: Vec<f64> = (0..grid.slice_len())
            .map(|i| {
                let at = |kk: usize| f.time_slice(kk)[i];
                (-at(k + 2) + 8.0 * at(k + 1) - 8.0 * at(k - 1) + at(k - 2)) / (12.0 * dt)
            })
            .collect();
        let slice = f.time_slice(k);
        let mut adv = vec![0.0; grid.slice_len()];
        let mut line = vec![Complex64::new(0.0, 0.0); nxt];
        for iv in 0..nvt {
            let v = vg.point(iv);
            for (ix, z) in line.iter_mut().enumerate() {
                *z = Complex64::new(slice[ix * nvt + iv], 0.0);
            }
            plan.forward(&mut line);
            for (q, z) in line.iter_mut().enumerate() {
                let xi = plan.xi(q, grid.x_period);
                let sym: f64 = (0..n).map(|a| v[a] * xi[a]).sum();
                let nyquist = plan.signed_index(q)[..n].iter().any(|&c| c.unsigned_abs() as usize * 2 == grid.nx);
                *z *= if nyquist { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, sym) };
            }
            plan.inverse(&mut line);
            for (ix, z) in line.iter().enumerate() {
                adv[ix * nvt + iv] = z.re;
            }
        }
        let gs = g.time_slice(k);
        for i in 0..grid.slice_len() {
            let d = dfdt[i] + adv[i];
            diff2 += (d - gs[i]).powi(2);
            d2 += d * d;
            g2 += gs[i] * gs[i];
            f2 += slice[i] * slice[i];
        }
    }
    if used == 0 {
        return param("no stored time admits the transport difference stencil");
    }
    // Reference scale ||f|| / span keeps the ratio meaningful when both sides vanish.
    let span = (grid.t1 - grid.t0).max(dt);
    let scale = d2.max(g2).max(f2 / (span * span));
    Ok(if scale > 0.0 { (diff2 / scale).sqrt() } else { 0.0 })
}
