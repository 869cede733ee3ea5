//! Soft cutoffs: the growth profiles `psi^1`, `psi_theta`, the level cutoffs
//! `psi_k` and the blunt cutoff `F`.
//!
//! All of them are radial, `C * g(|v| - r)` with `g(x) = x^(s/2)` for `x > 1`
//! and a quintic join on `[0, 1]`.

use crate::error::{param, Result};
use crate::kernel::{validate_bounds, CollisionOp, Family, Kernel, BAND_RADIUS};
use crate::phase::{check_order, VGrid};
use crate::quad::{linear_fit, Rule};
use serde::{Deserialize, Serialize};

/// Safety factor applied to the smallest admissible `C1`.
pub const C1_SAFETY: f64 = 1.05;
/// Radii beyond this multiple of the exit distance use the power-law remainder.
const TAIL_SPAN: f64 = 1e12;

/// A shifted, scaled copy `scale * g(|v| - shift)` of the base profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radial {
    pub shift: f64,
    pub scale: f64,
    /// Added constant; `L` ignores it.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub s: f64,
    pub n: usize,
    /// `[a3, a4, a5]` of `g(x) = a3 x^3 + a4 x^4 + a5 x^5` on `[0, 1]`.
    pub junction: [f64; 3],
    pub c1: f64,
    /// Set by [`CutoffFamily::certify`].
    #[serde(default)]
    pub c_psi: Option<f64>,
}

/// Builds the family, solving for the junction and the constant `C1`.
pub fn build_cutoff_family(s: f64, n: usize) -> Result<CutoffFamily> {
    check_order(n, s)?;
    let junction = quintic_junction(s);
    let mut fam = CutoffFamily { s, n, junction, c1: 1.0, c_psi: None };
    let monotone = (0..=2000).map(|i| i as f64 / 2000.0).all(|x| fam.g_prime(x) >= -1e-12 && fam.g(x) <= x.powf(0.5 * s) + 1e-12);
    if !monotone {
        return param(format!("junction for s = {s} is not monotone below the power law"));
    }
    // sup over theta of 1 + psi_theta is approached as theta -> 1, where
    // psi_theta -> g_1.
    let mut need = 0.0f64;
    for i in 0..=20000 {
        let r = 2.0 * (1e6f64).powf(i as f64 / 20000.0);
        let g1 = fam.g_r(1.0, r);
        need = need.max((1.0 + g1) / g1);
    }
    fam.c1 = C1_SAFETY * need;
    Ok(fam)
}

/// Solves `p(1) = 1, p'(1) = h, p''(1) = h (h - 1)` for `p = a3 x^3 + a4 x^4 + a5 x^5`, `h = s/2`.
fn quintic_junction(s: f64) -> [f64; 3] {
    let h = 0.5 * s;
    let (b0, b1, b2) = (1.0, h, h * (h - 1.0));
    // Closed-form inverse of [[1,1,1],[3,4,5],[6,12,20]].
    let a3 = 10.0 * b0 - 4.0 * b1 + 0.5 * b2;
    let a4 = -15.0 * b0 + 7.0 * b1 - b2;
    let a5 = 6.0 * b0 - 3.0 * b1 + 0.5 * b2;
    [a3, a4, a5]
}

impl CutoffFamily {
    pub fn g(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x <= 1.0 {
            let [a3, a4, a5] = self.junction;
            x * x * x * (a3 + x * (a4 + x * a5))
        } else {
            x.powf(0.5 * self.s)
        }
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x <= 1.0 {
            let [a3, a4, a5] = self.junction;
            x * x * (3.0 * a3 + x * (4.0 * a4 + x * 5.0 * a5))
        } else {
            0.5 * self.s * x.powf(0.5 * self.s - 1.0)
        }
    }

    pub fn g_second(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x <= 1.0 {
            let [a3, a4, a5] = self.junction;
            x * (6.0 * a3 + x * (12.0 * a4 + x * 20.0 * a5))
        } else {
            let h = 0.5 * self.s;
            h * (h - 1.0) * x.powf(h - 2.0)
        }
    }

    /// `g_r(x) = g(x - r)`, zero for `x < r`.
    pub fn g_r(&self, r: f64, x: f64) -> f64 {
        self.g(x - r)
    }

    pub fn psi_theta(&self, theta: f64) -> Radial {
        Radial { shift: 1.0 / theta, scale: 1.0, offset: 0.0 }
    }

    pub fn psi_one(&self) -> Radial {
        Radial { shift: 1.0, scale: self.c1, offset: 0.0 }
    }

    /// `psi_k = psi^1 + 1/2 - 2^(-k-1)`.
    pub fn level_cutoff(&self, k: u32) -> Radial {
        Radial { offset: 0.5 - 0.5f64.powi(k as i32 + 1), ..self.psi_one() }
    }

    pub fn eval(&self, psi: &Radial, radius: f64) -> f64 {
        psi.scale * self.g(radius - psi.shift) + psi.offset
    }

    pub fn sample(&self, psi: &Radial, vgrid: &VGrid) -> Vec<f64> {
        (0..vgrid.len()).map(|j| self.eval(psi, vgrid.norm(j))).collect()
    }

    /// Runs [`check_properties`] and stores the certified `C_psi`.
    pub fn certify(&mut self, kernel: &Kernel, vgrid: &VGrid, theta_list: &[f64], radii: &[f64]) -> Result<CutoffReport> {
        let report = check_properties(self, kernel, vgrid, theta_list, radii)?;
        self.c_psi = Some(report.c_psi);
        Ok(report)
    }
}

/// `-1 + S(|v| - 2)` with the quintic smoothstep `S`, so `-1` on `B_2` and `0` outside `B_3`.
pub fn blunt_cutoff(radius: f64) -> f64 {
    let t = (radius - 2.0).clamp(0.0, 1.0);
    -1.0 + t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// `L psi` at every sample of the grid, for a profile growing like `|v|^(s/2)`.
///
/// The box part is the zero-extension operator; the part outside the box is
/// a radial integral in `log rho` plus the power-law remainder.
pub fn apply_l_growth(fam: &CutoffFamily, op: &CollisionOp, psi: &Radial, t: f64, x: &[f64]) -> Vec<f64> {
    let vg = &op.vgrid;
    let inner = Radial { offset: 0.0, ..*psi };
    let samples = fam.sample(&inner, vg);
    let mut out = op.apply_zero_extended(&samples, t, x);
    let rule = Rule::new(8);
    for (j, o) in out.iter_mut().enumerate() {
        let p = vg.point(j);
        *o += vg.exterior(p, |dir, rho_exit| radial_tail(fam, op, &inner, &rule, p, dir, rho_exit, t, x));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn radial_tail(fam: &CutoffFamily, op: &CollisionOp, psi: &Radial, rule: &Rule, p: [f64; 2], dir: [f64; 2], rho_exit: f64, t: f64, x: &[f64]) -> f64 {
    let k = &op.kernel;
    let s = k.s;
    let truncated = k.family == Family::Truncated;
    let top = if truncated { BAND_RADIUS } else { rho_exit * TAIL_SPAN };
    if rho_exit >= top {
        return 0.0;
    }
    let pd = p[0] * dir[0] + p[1] * dir[1];
    let pp = p[0] * p[0] + p[1] * p[1];
    let mut cuts = vec![rho_exit, top];
    for level in [psi.shift, psi.shift + 1.0] {
        let disc = pd * pd - pp + level * level;
        if disc >= 0.0 {
            for root in [-pd - disc.sqrt(), -pd + disc.sqrt()] {
                if root > rho_exit && root < top {
                    cuts.push(root);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let integrand = |u: f64| {
        let rho = u.exp();
        let w = [p[0] + rho * dir[0], p[1] + rho * dir[1]];
        let r = (w[0] * w[0] + w[1] * w[1]).sqrt();
        k.c * k.factor(t, x, rho) * rho.powf(-2.0 * s) * psi.scale * fam.g(r - psi.shift)
    };
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (a, b) = (pair[0].ln(), pair[1].ln());
        let panels = ((b - a) / 0.25).ceil().max(1.0) as usize;
        total += rule.composite(a, b, panels, integrand);
    }
    if !truncated {
        // psi ~ scale * rho^(s/2) far out and the modulation has compact support.
        total += k.c * psi.scale * top.powf(-1.5 * s) / (1.5 * s);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffViolation {
    pub property: String,
    pub radius: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffReport {
    /// Largest `|L psi|` over the grid for `psi^1` and every `psi_theta`.
    pub c_psi: f64,
    /// `(theta, sup_{|v| <= 3} |L psi_theta|)`.
    pub sup_near: Vec<[f64; 2]>,
    /// Slope of `log sup_near` against `log theta` (needs two thetas below 1/4).
    pub fitted_exponent: Option<f64>,
    pub violations: Vec<CutoffViolation>,
}

impl CutoffReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evaluates `L psi` on the grid and checks the vanishing, ordering and
/// unit-gap properties at the given radii.
pub fn check_properties(fam: &CutoffFamily, kernel: &Kernel, vgrid: &VGrid, theta_list: &[f64], radii: &[f64]) -> Result<CutoffReport> {
    if theta_list.iter().any(|&th| !(th > 0.0 && th < 1.0)) {
        return param("every theta must lie in (0, 1)");
    }
    let cert = validate_bounds(kernel, vgrid.n, 1000, 0)?;
    if !cert.passed() {
        return param("kernel fails its bound certificate");
    }
    let op = CollisionOp::new(kernel, vgrid)?;
    let x0 = vec![0.0; vgrid.n];
    let mut violations = Vec::new();

    let sup_abs = |vals: &[f64], near: bool| {
        (0..vgrid.len()).filter(|&j| !near || vgrid.norm(j) <= 3.0 + 1e-12).map(|j| vals[j].abs()).fold(0.0, f64::max)
    };
    let mut c_psi = sup_abs(&apply_l_growth(fam, &op, &fam.psi_one(), 0.0, &x0), false);
    let mut sup_near = Vec::new();
    for &th in theta_list {
        let vals = apply_l_growth(fam, &op, &fam.psi_theta(th), 0.0, &x0);
        c_psi = c_psi.max(sup_abs(&vals, false));
        sup_near.push([th, sup_abs(&vals, true)]);
    }
    let small: Vec<[f64; 2]> = sup_near.iter().copied().filter(|p| p[0] < 0.25 && p[1] > 0.0).collect();
    let fitted_exponent = (small.len() >= 2).then(|| {
        let lx: Vec<f64> = small.iter().map(|p| p[0].ln()).collect();
        let ly: Vec<f64> = small.iter().map(|p| p[1].ln()).collect();
        linear_fit(&lx, &ly).0
    });

    let mut sorted = theta_list.to_vec();
    sorted.sort_by(f64::total_cmp);
    let one = fam.psi_one();
    for &r in radii {
        let p1 = fam.eval(&one, r);
        for (i, &th) in sorted.iter().enumerate() {
            let pt = fam.eval(&fam.psi_theta(th), r);
            let mut flag = |what: &str| violations.push(CutoffViolation { property: what.into(), radius: r, theta: th });
            if r <= 1.0 / th && pt != 0.0 {
                flag("vanishing on the ball of radius 1/theta");
            }
            if pt > p1 {
                flag("psi_theta <= psi^1");
            }
            if let Some(&next) = sorted.get(i + 1) {
                if pt > fam.eval(&fam.psi_theta(next), r) {
                    flag("psi_theta monotone in theta");
                }
            }
            if r >= 2.0 && 1.0 + pt > p1 {
                flag("1 + psi_theta <= psi^1 for |v| >= 2");
            }
        }
    }
    Ok(CutoffReport { c_psi, sup_near, fitted_exponent, violations })
}

/// Certified threshold for the scaled inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epsilon0 {
    pub value: f64,
    pub samples: usize,
    /// A radius where the inequality fails just above `value`, if any.
    pub witness_above: Option<f64>,
}

/// Radii on which the scaled inequality is certified: dense near 1 and
/// log-spaced out to `1e9`.
pub fn epsilon0_radii(theta: f64) -> Vec<f64> {
    let mut radii: Vec<f64> = (0..=4000).map(|i| 1.0 + (2.0 / theta + 10.0) * i as f64 / 4000.0).collect();
    radii.extend((0..=8000).map(|i| (1e9f64).powf(i as f64 / 8000.0)));
    radii.retain(|&r| r >= 1.0);
    radii
}

/// First radius where `psi_theta(v / eps) >= 2 psi_theta(v) + 2` fails.
pub fn scaled_inequality_witness(fam: &CutoffFamily, theta: f64, eps: f64, radii: &[f64]) -> Option<f64> {
    let psi = fam.psi_theta(theta);
    radii.iter().copied().find(|&r| fam.eval(&psi, r / eps) < 2.0 * fam.eval(&psi, r) + 2.0)
}

/// Largest `eps <= 1/2` (by bisection) for which the scaled inequality holds on
/// every sampled radius; smaller values inherit it because `psi_theta` is
/// non-decreasing.
pub fn epsilon0(fam: &CutoffFamily, theta: f64) -> Result<Epsilon0> {
    if !(theta > 0.0 && theta < 1.0) {
        return param(format!("theta = {theta} must lie in (0, 1)"));
    }
    let radii = epsilon0_radii(theta);
    let holds = |e: f64| scaled_inequality_witness(fam, theta, e, &radii).is_none();
    if holds(0.5) {
        return Ok(Epsilon0 { value: 0.5, samples: radii.len(), witness_above: None });
    }
    // The inequality holds at |v| = 1 only once 1/eps >= 1/theta + 2^(2/s).
    let mut lo = 0.5 / (1.0 / theta + 2f64.powf(2.0 / fam.s));
    while !holds(lo) {
        lo *= 0.5;
        if lo < 1e-300 {
            return param("no epsilon in (0, 1/2] certifies the scaled inequality");
        }
    }
    let mut hi = 0.5;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(Epsilon0 { value: lo, samples: radii.len(), witness_above: scaled_inequality_witness(fam, theta, hi, &radii) })
}

/// `1_{f > psi_k}` against `2^(k+1) (f - psi_{k-1})_+` at every sample; returns
/// the number of failures.
pub fn indicator_bound_failures(fam: &CutoffFamily, vgrid: &VGrid, slice: &[f64], k: u32) -> usize {
    assert!(k >= 1);
    let hi = fam.level_cutoff(k);
    let lo = fam.level_cutoff(k - 1);
    let factor = 2f64.powi(k as i32 + 1);
    (0..vgrid.len())
        .filter(|&j| {
            let r = vgrid.norm(j);
            let ind = if slice[j] - fam.eval(&hi, r) > 0.0 { 1.0 } else { 0.0 };
            ind > factor * (slice[j] - fam.eval(&lo, r)).max(0.0)
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn junction_coefficients_match_reference() {
        // numpy.linalg.solve on the 3x3 matching system
        let cases = [(0.2, [9.555, -14.21, 5.655]), (0.3, [9.33625, -13.8225, 5.48625]), (0.4, [9.12, -13.44, 5.32])];
        for (s, want) in cases {
            let got = quintic_junction(s);
            for i in 0..3 {
                assert!((got[i] - want[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn profile_examples() {
        let fam = build_cutoff_family(0.4, 1).unwrap();
        assert!((fam.g(4.0) - 2f64.powf(0.4)).abs() < 1e-15);
        assert_eq!(fam.eval(&fam.psi_theta(0.3), 0.0), 0.0);
        let psi = fam.psi_theta(0.25);
        assert!((0..=400).all(|i| fam.eval(&psi, i as f64 / 100.0) == 0.0));
        assert!((fam.eval(&fam.psi_one(), 3.0) - fam.c1 * fam.g_r(1.0, 3.0)).abs() < 1e-15);
        assert!((fam.c1 - 2.1).abs() < 1e-9);
    }

    #[test]
    fn profile_is_c2_at_the_join() {
        for s in [0.2, 0.45, 0.49] {
            let fam = build_cutoff_family(s, 1).unwrap();
            let below = 1.0 - 1e-12;
            let above = 1.0 + 1e-12;
            assert!((fam.g(below) - fam.g(above)).abs() < 1e-9);
            assert!((fam.g_prime(below) - fam.g_prime(above)).abs() < 1e-9);
            assert!((fam.g_second(below) - fam.g_second(above)).abs() < 1e-9);
            assert_eq!((fam.g(0.0), fam.g_prime(0.0)), (0.0, 0.0));
        }
    }

    #[test]
    fn shifted_profiles_share_derivative_bounds() {
        let fam = build_cutoff_family(0.3, 1).unwrap();
        let xs: Vec<f64> = (0..40000).map(|i| i as f64 * 1e-3).collect();
        let sup2 = |r: f64| xs.iter().map(|&x| fam.g_second(x - r).abs()).fold(0.0, f64::max);
        let a = sup2(1.0);
        for r in [2.0, 8.0, 16.0] {
            assert!((sup2(r) - a).abs() < 1e-6 * a);
        }
        for r in [1.0, 4.0] {
            for &x in xs.iter().step_by(97) {
                assert!(fam.g_r(r, x) >= fam.g_r(r + 0.5, x));
            }
        }
    }

    #[test]
    fn level_cutoffs_telescope() {
        let fam = build_cutoff_family(0.3, 1).unwrap();
        for r in [0.0, 1.7, 5.0] {
            assert_eq!(fam.eval(&fam.level_cutoff(0), r), fam.eval(&fam.psi_one(), r));
            for k in 1..10 {
                let d = fam.eval(&fam.level_cutoff(k), r) - fam.eval(&fam.level_cutoff(k - 1), r);
                assert!((d - 0.5f64.powi(k as i32 + 1)).abs() < 1e-14);
            }
            assert!((fam.eval(&fam.level_cutoff(60), r) - fam.eval(&fam.psi_one(), r) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn growth_operator_matches_radial_quadrature() {
        let fam = build_cutoff_family(0.3, 1).unwrap();
        let vg = VGrid::new(1, 512, 8.0).unwrap();
        let op = CollisionOp::new(&Kernel::homogeneous(0.3, 2.0, 1.0), &vg).unwrap();
        let at = |vals: &[f64], v: f64| vals[(0..vg.len()).find(|&j| (vg.coord(j) - v).abs() < 1e-12).unwrap()];
        // scipy.integrate.quad of the symmetrized second difference, split at kinks
        let cases = [
            (fam.psi_theta(0.125), 0.0, 1.5863741353332512),
            (fam.psi_theta(0.125), 2.5, 1.6359533162374489),
            (fam.psi_theta(1.0 / 32.0), 1.0, 0.8614068355154534),
            (Radial { shift: 1.0, scale: 2.1, offset: 0.0 }, 2.5, -0.30766275487974415),
            (Radial { shift: 1.0, scale: 2.1, offset: 0.0 }, 0.0, 7.5281552636869264),
        ];
        for (psi, v, want) in cases {
            let vals = apply_l_growth(&fam, &op, &psi, 0.0, &[0.0]);
            let got = at(&vals, v);
            assert!((got - want).abs() < 5e-3 * want.abs(), "v = {v}: {got} vs {want}");
        }
        let trunc = CollisionOp::new(&Kernel::truncated(0.3, 2.0, 1.0), &vg).unwrap();
        let vals = apply_l_growth(&fam, &trunc, &Radial { shift: 1.0, scale: 2.1, offset: 0.0 }, 0.0, &[0.0]);
        let got = at(&vals, 1.5);
        assert!((got - 1.4214434573404904).abs() < 5e-3 * 1.43, "{got}");
    }

    #[test]
    fn properties_hold_on_samples() {
        let fam = build_cutoff_family(0.3, 1).unwrap();
        let vg = VGrid::new(1, 256, 8.0).unwrap();
        let radii: Vec<f64> = (0..10000).map(|i| i as f64 * 1e-2).chain([2.0]).collect();
        let rep = check_properties(&fam, &Kernel::homogeneous(0.3, 2.0, 1.0), &vg, &[0.125, 0.0625, 0.03125], &radii).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations.first());
        let e = rep.fitted_exponent.unwrap();
        assert!(e >= 0.45 - 0.15, "{e}");
        assert!(rep.c_psi.is_finite() && rep.c_psi > 0.0);
    }

    #[test]
    fn small_c1_breaks_unit_gap() {
        let mut fam = build_cutoff_family(0.3, 1).unwrap();
        fam.c1 = 1.9;
        let vg = VGrid::new(1, 64, 8.0).unwrap();
        let rep = check_properties(&fam, &Kernel::homogeneous(0.3, 2.0, 1.0), &vg, &[0.5, 0.9], &[2.0, 2.5]).unwrap();
        assert!(rep.violations.iter().any(|v| v.property.starts_with("1 + psi_theta") && v.radius == 2.0));
    }

    #[test]
    fn epsilon0_is_certified_and_sharp() {
        let fam = build_cutoff_family(0.45, 1).unwrap();
        let theta = 0.25;
        let e0 = epsilon0(&fam, theta).unwrap();
        let radii = epsilon0_radii(theta);
        assert!(scaled_inequality_witness(&fam, theta, e0.value, &radii).is_none());
        assert!(scaled_inequality_witness(&fam, theta, 0.5 * e0.value, &radii).is_none());
        assert!(scaled_inequality_witness(&fam, theta, e0.value * (1.0 + 1e-9), &radii).is_some());
        assert!(e0.witness_above.is_some());
        // At |v| = 1 the condition reads 1/eps >= 1/theta + 2^(2/s).
        assert!(1.0 / e0.value >= 1.0 / theta + 2f64.powf(2.0 / 0.45) - 1e-9);
    }

    #[test]
    fn blunt_cutoff_shape() {
        assert_eq!(blunt_cutoff(0.0), -1.0);
        assert_eq!(blunt_cutoff(2.0), -1.0);
        assert_eq!(blunt_cutoff(3.0), 0.0);
        assert_eq!(blunt_cutoff(7.0), 0.0);
        let mut last = -1.0;
        for i in 0..=100 {
            let v = blunt_cutoff(2.0 + i as f64 / 100.0);
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn indicator_bound_is_exact() {
        let fam = build_cutoff_family(0.3, 1).unwrap();
        let vg = VGrid::new(1, 128, 8.0).unwrap();
        let f = vg.sample(|v| 3.0 * (2.0 * v[0]).sin() + 2.5);
        for k in 1..26 {
            assert_eq!(indicator_bound_failures(&fam, &vg, &f, k), 0);
        }
    }
}
