//! Cube-shaped FFTs (one or two axes) on top of `rustfft`.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Forward and inverse plans for an `m^n` array, n in {1, 2}.
#[derive(Clone)]
pub struct CubeFft {
    n: usize,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CubeFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CubeFft({}^{})", self.m, self.n)
    }
}

impl CubeFft {
    pub fn new(n: usize, m: usize) -> Self {
        assert!(n == 1 || n == 2, "only one or two axes are supported");
        let mut planner = FftPlanner::new();
        CubeFft {
            n,
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    /// Inverse transform scaled by 1/len so that inverse(forward(x)) = x.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.len());
        plan.process(data);
        if self.n == 2 {
            transpose(data, self.m);
            plan.process(data);
            transpose(data, self.m);
        }
    }

    /// Signed integer frequency of flat index `k` along each axis.
    pub fn signed_index(&self, flat: usize) -> [i64; 2] {
        let m = self.m;
        let mut out = [0i64; 2];
        if self.n == 1 {
            out[0] = signed(flat, m);
        } else {
            out[0] = signed(flat / m, m);
            out[1] = signed(flat % m, m);
        }
        out
    }

    /// Squared wavenumber |xi|^2 of flat index with xi = 2 pi k / period.
    pub fn xi_sq(&self, flat: usize, period: f64) -> f64 {
        let k = self.signed_index(flat);
        let c = 2.0 * PI / period;
        (0..self.n).map(|a| (c * k[a] as f64).powi(2)).sum()
    }

    /// Wavevector of flat index.
    pub fn xi(&self, flat: usize, period: f64) -> [f64; 2] {
        let k = self.signed_index(flat);
        let c = 2.0 * PI / period;
        [c * k[0] as f64, c * k[1] as f64]
    }
}

fn signed(k: usize, m: usize) -> i64 {
    if k <= m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}

fn transpose(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

/// Apply a real Fourier multiplier to a real array and return the real part.
pub fn apply_real_multiplier(plan: &CubeFft, data: &[f64], mut mult: impl FnMut(usize) -> f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan.forward(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        *z *= mult(k);
    }
    plan.inverse(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

/// Unnormalized forward FFT along every axis of a row-major array of the given shape.
pub fn forward_axes(data: &mut [Complex64], shape: &[usize]) {
    run_axes(data, shape, false);
}

/// Inverse of [`forward_axes`], scaled by 1/len.
pub fn inverse_axes(data: &mut [Complex64], shape: &[usize]) {
    run_axes(data, shape, true);
    let scale = 1.0 / data.len() as f64;
    data.iter_mut().for_each(|z| *z *= scale);
}

fn run_axes(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    assert_eq!(data.len(), shape.iter().product::<usize>());
    let mut planner = FftPlanner::new();
    let mut stride = 1;
    for &len in shape.iter().rev() {
        let plan = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let block = len * stride;
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                for (k, z) in line.iter_mut().enumerate() {
                    *z = data[outer + inner + k * stride];
                }
                plan.process(&mut line);
                for (k, z) in line.iter().enumerate() {
                    data[outer + inner + k * stride] = *z;
                }
            }
        }
        stride = block;
    }
}

/// Signed integer frequency of index `k` on an axis of length `m`.
pub fn signed_frequency(k: usize, m: usize) -> i64 {
    signed(k, m)
}
