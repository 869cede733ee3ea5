//! Fourier multipliers in velocity, mollification and the mollifier
//! approximation rate.
//!
//! Multipliers act on the periodization of a slice over the velocity box.

use crate::error::{param, Result};
use crate::fft::CubeFft;
use crate::kernel::{bilinear_b, CollisionOp, Kernel};
use crate::phase::{hs_norm_v, VGrid};
use crate::quad::linear_fit;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest admissible |sigma|.
pub const SIGMA_CAP: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierKind {
    /// `|xi|^sigma`; for negative sigma the zero mode is set to zero.
    LambdaPow,
    /// `(1 + |xi|^2)^(sigma/2)`.
    BesselPow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierOp {
    pub kind: MultiplierKind,
    pub sigma: f64,
}

impl MultiplierOp {
    pub fn lambda_pow(sigma: f64) -> Result<MultiplierOp> {
        MultiplierOp::new(MultiplierKind::LambdaPow, sigma)
    }

    pub fn bessel_pow(sigma: f64) -> Result<MultiplierOp> {
        MultiplierOp::new(MultiplierKind::BesselPow, sigma)
    }

    pub fn new(kind: MultiplierKind, sigma: f64) -> Result<MultiplierOp> {
        if !(sigma.abs() <= SIGMA_CAP) {
            return param(format!("multiplier exponent {sigma} exceeds the cap {SIGMA_CAP}"));
        }
        Ok(MultiplierOp { kind, sigma })
    }

    /// Symbol as a function of `|xi|^2`.
    pub fn symbol(&self, xi_sq: f64) -> f64 {
        match self.kind {
            MultiplierKind::LambdaPow if xi_sq == 0.0 => {
                if self.sigma == 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            MultiplierKind::LambdaPow => xi_sq.powf(0.5 * self.sigma),
            MultiplierKind::BesselPow => (1.0 + xi_sq).powf(0.5 * self.sigma),
        }
    }

    pub fn apply(&self, vgrid: &VGrid, slice: &[f64]) -> Vec<f64> {
        apply_multiplier(self, vgrid, slice)
    }
}

pub fn apply_multiplier(op: &MultiplierOp, vgrid: &VGrid, slice: &[f64]) -> Vec<f64> {
    let plan = CubeFft::new(vgrid.n, vgrid.nv);
    let period = vgrid.period();
    crate::fft::apply_real_multiplier(&plan, slice, |k| op.symbol(plan.xi_sq(k, period)))
}

/// Normalized bump `eta(v) ~ (1 - |v|^2)^4` on the unit ball, scaled by epsilon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub epsilon: f64,
}

impl Mollifier {
    pub fn new(epsilon: f64) -> Result<Mollifier> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return param(format!("mollifier scale {epsilon} must be positive"));
        }
        Ok(Mollifier { epsilon })
    }

    /// Unit-scale profile with unit integral.
    pub fn profile(n: usize, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        let norm = if n == 1 { 256.0 / 315.0 } else { PI / 5.0 };
        (1.0 - r * r).powi(4) / norm
    }

    /// `eta_eps(v) = eps^-n eta(v / eps)`.
    pub fn eval(&self, v: &[f64]) -> f64 {
        let r = v.iter().map(|c| c * c).sum::<f64>().sqrt() / self.epsilon;
        Mollifier::profile(v.len(), r) / self.epsilon.powi(v.len() as i32)
    }

    /// Grid weights on offsets, normalized so they sum to one.
    fn weights(&self, vgrid: &VGrid) -> Vec<f64> {
        let m = vgrid.nv;
        let dv = vgrid.dv();
        let offsets: Vec<f64> = (0..m).map(|i| if i <= m / 2 { i as f64 * dv } else { (i as f64 - m as f64) * dv }).collect();
        let mut w: Vec<f64> = (0..vgrid.len())
            .map(|j| {
                let idx = vgrid.multi(j);
                let h: Vec<f64> = (0..vgrid.n).map(|a| offsets[idx[a]]).collect();
                self.eval(&h)
            })
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }
}

/// Result of [`mollify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mollified {
    pub values: Vec<f64>,
    /// The slice was nonzero within epsilon of the box faces, so the
    /// periodic wrap-around is active.
    pub boundary_contact: bool,
}

/// Discrete periodic convolution with `eta_eps`.
pub fn mollify(vgrid: &VGrid, slice: &[f64], mollifier: &Mollifier) -> Mollified {
    let plan = CubeFft::new(vgrid.n, vgrid.nv);
    let w = mollifier.weights(vgrid);
    let mut a: Vec<Complex64> = slice.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut b: Vec<Complex64> = w.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan.forward(&mut a);
    plan.forward(&mut b);
    a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y);
    plan.inverse(&mut a);
    let values = a.iter().map(|z| z.re).collect();
    let sup = slice.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let clearance = vgrid.boundary_clearance(slice, 1e-12 * sup);
    Mollified { values, boundary_contact: clearance <= mollifier.epsilon }
}

/// Output of [`mollifier_rate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    /// `max ||g - g * eta_eps||_2 / (eps^s ||g||_{H^s})` over the ladder.
    pub max_ratio: f64,
    pub errors: Vec<f64>,
}

/// Least-squares slope of `log ||g - g * eta_eps||_2` against `log eps`.
pub fn mollifier_rate(vgrid: &VGrid, g: &[f64], s: f64, eps_list: &[f64]) -> Result<RateFit> {
    if eps_list.len() < 4 {
        return param(format!("epsilon ladder has {} points, need at least 4", eps_list.len()));
    }
    let (lo, hi) = eps_list.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if !(lo > 0.0) || hi / lo < 10.0 - 1e-9 {
        return param("epsilon ladder must be positive and span at least one decade");
    }
    let hs = hs_norm_v(vgrid, g, s);
    if !hs.is_finite() || hs == 0.0 {
        return param("g must have finite, nonzero H^s norm");
    }
    let dvol = vgrid.cell_volume();
    let mut errors = Vec::with_capacity(eps_list.len());
    for &e in eps_list {
        let m = mollify(vgrid, g, &Mollifier::new(e)?).values;
        let err = g.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * dvol;
        errors.push(err.sqrt());
    }
    let lx: Vec<f64> = eps_list.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (rate, _) = linear_fit(&lx, &ly);
    let max_ratio = eps_list.iter().zip(&errors).map(|(e, r)| r / (e.powf(s) * hs)).fold(0.0, f64::max);
    Ok(RateFit { rate, max_ratio, errors })
}

/// Real slice whose Fourier magnitudes follow `(1 + |xi|^2)^(-(s + n/2 + 0.01)/2)`
/// with seeded random phases; it sits just inside `H^s`.
pub fn critical_tail(vgrid: &VGrid, s: f64, seed: u64) -> Vec<f64> {
    let plan = CubeFft::new(vgrid.n, vgrid.nv);
    let period = vgrid.period();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let decay = 0.5 * (s + 0.5 * vgrid.n as f64 + 0.01);
    let mut buf: Vec<Complex64> = (0..plan.len())
        .map(|k| {
            let amp = (1.0 + plan.xi_sq(k, period)).powf(-decay);
            Complex64::from_polar(amp, rng.gen_range(0.0..2.0 * PI))
        })
        .collect();
    plan.inverse(&mut buf);
    buf.iter().map(|z| z.re * plan.len() as f64).collect()
}

/// Fitted constants of the two operator bounds over a family of test slices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorBounds {
    pub nv: usize,
    pub tests: usize,
    /// L2 shift `C'` added to the form.
    pub shift: f64,
    /// `min (B(f,f) + C' ||f||^2) / ||Lambda^s f||^2`.
    pub coercivity: f64,
    /// `max ||J^-s L f|| / ||Lambda^s f||`.
    pub dual: f64,
}

/// Compactly supported test profiles: bumps `(1 - q^2)^4` of several centres
/// and radii, some modulated by `cos(xi v_1)`. Supports stay inside `|v| < 4`.
pub fn operator_test_profiles(n: usize) -> Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> {
    let mut out: Vec<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> = Vec::new();
    for (c, r, xi) in [(0.0, 0.8, 0.0), (0.7, 1.5, 0.0), (-1.2, 2.5, 0.0), (0.0, 2.0, 2.0), (0.5, 2.5, 4.0), (-0.3, 1.2, 3.0)] {
        out.push(Box::new(move |v: &[f64]| {
            let mut q2 = (v[0] - c) * (v[0] - c);
            if n == 2 {
                q2 += v[1] * v[1];
            }
            let q2 = q2 / (r * r);
            if q2 < 1.0 {
                (1.0 - q2).powi(4) * (xi * v[0]).cos()
            } else {
                0.0
            }
        }));
    }
    out
}

/// Evaluates both operator-bound ratios on the profiles of
/// [`operator_test_profiles`] sampled on `vgrid`, at `(t, x) = (0, 0)`.
pub fn operator_bounds(kernel: &Kernel, vgrid: &VGrid, shift: f64) -> Result<OperatorBounds> {
    if !(shift >= 0.0) {
        return param(format!("shift = {shift} must be non-negative"));
    }
    let op = CollisionOp::new(kernel, vgrid)?;
    let lam = MultiplierOp::lambda_pow(kernel.s)?;
    let bes = MultiplierOp::bessel_pow(-kernel.s)?;
    let dvol = vgrid.cell_volume();
    let sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>() * dvol;
    let x = [0.0; 2];
    let (mut coercivity, mut dual) = (f64::INFINITY, 0.0f64);
    let profiles = operator_test_profiles(vgrid.n);
    for prof in &profiles {
        let f = vgrid.sample(|v| prof(v));
        let energy = sq(&lam.apply(vgrid, &f));
        let form = bilinear_b(&op, &f, &f, 0.0, &x[..vgrid.n])?;
        coercivity = coercivity.min((form + shift * sq(&f)) / energy);
        let lf = op.apply(&f, 0.0, &x[..vgrid.n])?.values;
        dual = dual.max((sq(&bes.apply(vgrid, &lf)) / energy).sqrt());
    }
    Ok(OperatorBounds { nv: vgrid.nv, tests: profiles.len(), shift, coercivity, dual })
}
