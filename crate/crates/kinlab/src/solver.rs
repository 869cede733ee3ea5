//! Time integration of `(d_t + v . grad_x) f = L f + a` on the spatial torus.
//!
//! Each step is a Strang splitting: half a step of free transport (exact in
//! x-Fourier space), a full collision step, then the second transport half.
//! The collision step treats the velocity box as periodic, so every stepper
//! is diagonal in velocity-Fourier space on each x-slice and conserves mass.

use crate::error::{param, Error, Result};
use crate::fft::CubeFft;
use crate::kernel::{fractional_laplacian_constant, CollisionOp, Family, Kernel};
use crate::phase::{Field, PhaseGrid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

/// Default constant in the explicit stability rule `dt <= c_stab dv^(2s) / kappa`.
pub const DEFAULT_C_STAB: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepper {
    /// Exact exponential of `-(c / C(n,s)) |xi|^(2s)`; homogeneous kernels only.
    SpectralExponential,
    /// The `kappa^-1 |h|^(-n-2s)` part exactly, the remainder by exponential Heun.
    Imex,
    /// Heun's method on the whole collision operator.
    ExplicitRk2,
}

/// Analytic source term `a(t, x, v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceSpec {
    Zero,
    /// `amplitude * sin(wavenumber * x_1 + omega * t) * bump(|v| / v_radius)`.
    Wave { amplitude: f64, wavenumber: f64, omega: f64, v_radius: f64 },
    /// Seeded random modes in (t, x) times `bump(|v| / v_radius)`.
    Noise { amplitude: f64, modes: usize, v_radius: f64, seed: u64 },
}

/// Initial datum at `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialSpec {
    Zero,
    Constant { value: f64 },
    /// `(1 + x_amplitude cos(2 pi x_mode x_1 / P)) exp(-|v - v_shift e_1|^2 / v_width^2)`.
    Product { x_amplitude: f64, x_mode: f64, v_width: f64, #[serde(default)] v_shift: f64 },
    /// `cos(xi v_1) exp(-|v|^2 / width^2)`, independent of x.
    WindowedWave { xi: f64, width: f64 },
    /// Seeded random Fourier modes in (x, v) with slowly decaying amplitudes,
    /// windowed to `|v| < 4`. The modes are continuous functions, so the same
    /// seed gives the same datum at every resolution.
    Rough { amplitude: f64, modes: usize, seed: u64 },
    /// `offset + amplitude * bump(|x - x_center e_1| / x_radius) * bump(|v - v_center e_1| / v_radius)`
    /// with `bump(r) = (1 - r^2)^3` and the x distance taken on the torus.
    Packet {
        amplitude: f64,
        x_center: f64,
        x_radius: f64,
        v_center: f64,
        v_radius: f64,
        #[serde(default)]
        offset: f64,
    },
    /// Explicit samples, indexed `[x][v]`.
    Samples { data: Vec<f64> },
}

fn default_record() -> usize {
    1
}

fn default_c_stab() -> f64 {
    DEFAULT_C_STAB
}

fn default_r() -> f64 {
    f64::INFINITY
}

/// Everything needed to reproduce a run. The stored slice count of the
/// output is derived from `dt` and `record_every`; `grid.nt` is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: PhaseGrid,
    pub kernel: Kernel,
    pub source: SourceSpec,
    /// Declared integrability exponent of the source.
    #[serde(default = "default_r", with = "crate::report::extended_f64")]
    pub source_r: f64,
    pub initial: InitialSpec,
    pub stepper: Stepper,
    pub dt: f64,
    #[serde(default = "default_record")]
    pub record_every: usize,
    #[serde(default = "default_c_stab")]
    pub c_stab: f64,
}

impl RunConfig {
    pub fn steps(&self) -> usize {
        ((self.grid.t1 - self.grid.t0) / self.dt).round() as usize
    }

    /// Grid of the recorded trajectory.
    pub fn output_grid(&self) -> Result<PhaseGrid> {
        let frames = self.steps() / self.record_every.max(1) + 1;
        let mut g = self.grid.clone();
        g.nt = frames;
        g.t1 = g.t0 + self.steps() as f64 * self.dt;
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let mut g = self.grid.clone();
        g.nt = if g.t1 > g.t0 { 2 } else { 1 };
        g.validate()?;
        self.kernel.validate()?;
        g.check_order(self.kernel.s)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return param(format!("dt = {} must be positive", self.dt));
        }
        let span = self.grid.t1 - self.grid.t0;
        let steps = self.steps();
        if steps == 0 || (steps as f64 * self.dt - span).abs() > 1e-9 * span.max(1.0) {
            return param(format!("time window {span} is not a positive multiple of dt = {}", self.dt));
        }
        if self.record_every == 0 || steps % self.record_every != 0 {
            return param(format!("record_every = {} must divide the step count {steps}", self.record_every));
        }
        if !(self.c_stab > 0.0) {
            return param("c_stab must be positive");
        }
        if self.stepper == Stepper::SpectralExponential && self.kernel.family != Family::Homogeneous {
            return param("the spectral-exponential stepper needs a homogeneous kernel");
        }
        if let InitialSpec::Samples { data } = &self.initial {
            if data.len() != self.grid.slice_len() {
                return param(format!("initial samples have length {}, expected {}", data.len(), self.grid.slice_len()));
            }
        }
        if !(self.source_r >= 1.0) {
            return param("source_r must be at least 1");
        }
        Ok(())
    }
}

/// Pointwise source `a(t, x, v)`.
pub type SourceFn = Box<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;

fn bump(r: f64) -> f64 {
    if r < 1.0 {
        (1.0 - r * r).powi(3)
    } else {
        0.0
    }
}

/// Builds the pointwise source described by a [`SourceSpec`].
pub fn source_fn(spec: &SourceSpec, grid: &PhaseGrid) -> SourceFn {
    match spec.clone() {
        SourceSpec::Zero => Box::new(|_, _, _| 0.0),
        SourceSpec::Wave { amplitude, wavenumber, omega, v_radius } => Box::new(move |t, x, v| {
            amplitude * (wavenumber * x[0] + omega * t).sin() * bump(norm(v) / v_radius)
        }),
        SourceSpec::Noise { amplitude, modes, v_radius, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = grid.n;
            let base = 2.0 * PI / grid.x_period;
            let terms: Vec<(f64, [f64; 2], f64, f64)> = (0..modes.max(1))
                .map(|_| {
                    let k = [base * rng.gen_range(-3i32..=3) as f64, if n == 2 { base * rng.gen_range(-3i32..=3) as f64 } else { 0.0 }];
                    (rng.gen_range(-1.0..1.0), k, rng.gen_range(-2.0..2.0), rng.gen_range(0.0..2.0 * PI))
                })
                .collect();
            Box::new(move |t, x, v| {
                let y: f64 = terms.iter().map(|(c, k, w, ph)| c * (k[0] * x[0] + k[1] * x.get(1).copied().unwrap_or(0.0) + w * t + ph).cos()).sum();
                amplitude * y * bump(norm(v) / v_radius)
            })
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Samples the initial datum on one time slice, indexed `[x][v]`.
pub fn initial_slice(spec: &InitialSpec, grid: &PhaseGrid) -> Vec<f64> {
    let xg = grid.xgrid();
    let vg = grid.vgrid();
    let n = grid.n;
    let sample = |f: &dyn Fn(&[f64], &[f64]) -> f64| -> Vec<f64> {
        let mut out = Vec::with_capacity(grid.slice_len());
        for ix in 0..xg.len() {
            let x = xg.point(ix);
            for iv in 0..vg.len() {
                let v = vg.point(iv);
                out.push(f(&x[..n], &v[..n]));
            }
        }
        out
    };
    match spec {
        InitialSpec::Zero => vec![0.0; grid.slice_len()],
        InitialSpec::Constant { value } => vec![*value; grid.slice_len()],
        InitialSpec::Product { x_amplitude, x_mode, v_width, v_shift } => sample(&|x, v| {
            let r2: f64 = v.iter().enumerate().map(|(a, c)| (c - if a == 0 { *v_shift } else { 0.0 }).powi(2)).sum();
            (1.0 + x_amplitude * (2.0 * PI * x_mode * x[0] / grid.x_period).cos()) * (-r2 / (v_width * v_width)).exp()
        }),
        InitialSpec::WindowedWave { xi, width } => sample(&|_, v| (xi * v[0]).cos() * (-v.iter().map(|c| c * c).sum::<f64>() / (width * width)).exp()),
        InitialSpec::Rough { amplitude, modes, seed } => {
            let terms = rough_modes(*modes, *seed, grid);
            sample(&|x, v| {
                let y: f64 = terms
                    .iter()
                    .map(|(c, kx, kv, ph)| {
                        let arg: f64 = (0..n).map(|a| kx[a] * x[a] + kv[a] * v[a]).sum::<f64>() + ph;
                        c * arg.cos()
                    })
                    .sum();
                amplitude * y * bump(norm(v) / 4.0)
            })
        }
        InitialSpec::Packet { amplitude, x_center, x_radius, v_center, v_radius, offset } => sample(&|x, v| {
            let p = grid.x_period;
            let dx: f64 = x
                .iter()
                .enumerate()
                .map(|(a, c)| {
                    let d = c - if a == 0 { *x_center } else { 0.0 };
                    let d = d - p * (d / p).round();
                    d * d
                })
                .sum();
            let dv: f64 = v.iter().enumerate().map(|(a, c)| (c - if a == 0 { *v_center } else { 0.0 }).powi(2)).sum();
            offset + amplitude * bump(dx.sqrt() / x_radius) * bump(dv.sqrt() / v_radius)
        }),
        InitialSpec::Samples { data } => data.clone(),
    }
}

type Mode = (f64, [f64; 2], [f64; 2], f64);

fn rough_modes(count: usize, seed: u64, grid: &PhaseGrid) -> Vec<Mode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = 2.0 * PI / grid.x_period;
    let n = grid.n;
    (0..count)
        .map(|_| {
            let mut kx = [0.0f64; 2];
            let mut kv = [0.0f64; 2];
            for a in 0..n {
                kx[a] = base * rng.gen_range(-12i32..=12) as f64;
                kv[a] = rng.gen_range(-6.0..6.0);
            }
            let size = (kx[0].hypot(kx[1]) + kv[0].hypot(kv[1])).max(1.0);
            // Amplitudes ~ |k|^-1: the datum is only just in L^2-Hoelder classes.
            (rng.gen_range(-1.0..1.0) / size, kx, kv, rng.gen_range(0.0..2.0 * PI))
        })
        .collect()
}

/// One line of the stepper log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// `1 - dt / dt_max`; negative would mean an unstable step.
    pub cfl_margin: f64,
    /// Analytic bound on the velocity mass the box misses.
    pub tail_error: f64,
    pub mass: f64,
    pub l2: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub field: Field,
    pub log: Vec<StepRecord>,
}

impl Trajectory {
    pub fn write_log_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "step,time,cfl_margin,tail_error,mass,l2")?;
        for r in &self.log {
            writeln!(out, "{},{:e},{:e},{:e},{:e},{:e}", r.step, r.time, r.cfl_margin, r.tail_error, r.mass, r.l2)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `(e^z - 1) / z` and `(e^z - 1 - z) / z^2`.
fn phi12(z: f64) -> (f64, f64) {
    if z.abs() < 1e-3 {
        (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0, 0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0)
    } else {
        let e = z.exp_m1();
        (e / z, (e - z) / (z * z))
    }
}

/// Prepared solver: symbols, plans and the source sampler.
pub struct Solver {
    pub config: RunConfig,
    op: CollisionOp,
    source: SourceFn,
    xplan: CubeFft,
    vplan: CubeFft,
    /// Stiff part, integrated exactly (zero for the explicit stepper).
    lambda: Vec<f64>,
    /// `c * sigma_hom - lambda` and `c * sigma_mod`.
    explicit_hom: Vec<f64>,
    explicit_mod: Option<Vec<f64>>,
    expz: Vec<f64>,
    phi1: Vec<f64>,
    phi2: Vec<f64>,
    cfl_margin: f64,
    x_coords: Vec<[f64; 2]>,
    v_coords: Vec<[f64; 2]>,
}

impl Solver {
    pub fn new(config: &RunConfig) -> Result<Solver> {
        let source = source_fn(&config.source, &config.grid);
        Solver::with_source(config, source)
    }

    /// Solver with a caller-supplied source, e.g. a manufactured one.
    pub fn with_source(config: &RunConfig, source: SourceFn) -> Result<Solver> {
        config.validate()?;
        let grid = &config.grid;
        let vg = grid.vgrid();
        let k = config.kernel;
        let op = CollisionOp::new(&k, &vg)?;
        let vplan = CubeFft::new(grid.n, grid.nv);
        let xplan = CubeFft::new(grid.n, grid.nx);
        let (hom, modw) = op.periodic_symbols();
        let full_hom: Vec<f64> = hom.iter().map(|x| k.c * x).collect();
        let explicit_mod = modw.map(|m| m.iter().map(|x| k.c * x).collect::<Vec<f64>>());
        let lambda: Vec<f64> = match config.stepper {
            Stepper::SpectralExponential => {
                let scale = k.c / fractional_laplacian_constant(grid.n, k.s);
                (0..vplan.len()).map(|i| -scale * vplan.xi_sq(i, vg.period()).powf(k.s)).collect()
            }
            Stepper::Imex => {
                let unit = CollisionOp::new(&Kernel::homogeneous(k.s, k.kappa, 1.0), &vg)?;
                unit.periodic_symbols().0.iter().map(|x| x / k.kappa).collect()
            }
            Stepper::ExplicitRk2 => vec![0.0; vplan.len()],
        };
        let explicit_hom: Vec<f64> = match config.stepper {
            Stepper::SpectralExponential => vec![0.0; vplan.len()],
            _ => full_hom.iter().zip(&lambda).map(|(a, b)| a - b).collect(),
        };
        let explicit_mod = if config.stepper == Stepper::SpectralExponential { None } else { explicit_mod };
        let amp = k.modulation.map_or(0.0, |m| m.amplitude.abs());
        let rho = explicit_hom.iter().map(|x| x.abs()).fold(0.0, f64::max)
            + amp * explicit_mod.as_ref().map_or(0.0, |m| m.iter().map(|x| x.abs()).fold(0.0, f64::max));
        // Heun is stable on [-2, 0] of the real axis.
        let mut dt_max = if rho > 0.0 { 2.0 / rho } else { f64::INFINITY };
        if config.stepper == Stepper::ExplicitRk2 {
            dt_max = dt_max.min(config.c_stab * vg.dv().powf(2.0 * k.s) / k.kappa);
        }
        let cfl_margin = if dt_max.is_finite() { 1.0 - config.dt / dt_max } else { 1.0 };
        if cfl_margin < 0.0 {
            return Err(Error::Numerical {
                time: grid.t0,
                reason: format!("dt = {} exceeds the stability limit {dt_max:.6e} of the {:?} stepper", config.dt, config.stepper),
            });
        }
        let mut expz = Vec::with_capacity(lambda.len());
        let mut phi1 = Vec::with_capacity(lambda.len());
        let mut phi2 = Vec::with_capacity(lambda.len());
        for &l in &lambda {
            let z = l * config.dt;
            let (p1, p2) = phi12(z);
            expz.push(z.exp());
            phi1.push(p1);
            phi2.push(p2);
        }
        let xg = grid.xgrid();
        Ok(Solver {
            config: config.clone(),
            op,
            source,
            xplan,
            vplan,
            lambda,
            explicit_hom,
            explicit_mod,
            expz,
            phi1,
            phi2,
            cfl_margin,
            x_coords: (0..xg.len()).map(|i| xg.point(i)).collect(),
            v_coords: (0..vg.len()).map(|j| vg.point(j)).collect(),
        })
    }

    pub fn cfl_margin(&self) -> f64 {
        self.cfl_margin
    }

    fn sample_source(&self, t: f64) -> Vec<f64> {
        let n = self.config.grid.n;
        let mut out = Vec::with_capacity(self.config.grid.slice_len());
        for x in &self.x_coords {
            for v in &self.v_coords {
                out.push((self.source)(t, &x[..n], &v[..n]));
            }
        }
        out
    }

    /// Exact free transport over `tau`.
    fn transport(&self, state: &mut [f64], tau: f64) {
        let nvt = self.v_coords.len();
        let nxt = self.x_coords.len();
        let period = self.config.grid.x_period;
        let n = self.config.grid.n;
        let xi: Vec<[f64; 2]> = (0..nxt).map(|k| self.xplan.xi(k, period)).collect();
        let mut buf = vec![Complex64::new(0.0, 0.0); nxt];
        for iv in 0..nvt {
            let v = self.v_coords[iv];
            for ix in 0..nxt {
                buf[ix] = Complex64::new(state[ix * nvt + iv], 0.0);
            }
            self.xplan.forward(&mut buf);
            for (k, z) in buf.iter_mut().enumerate() {
                let kv: f64 = (0..n).map(|a| xi[k][a] * v[a]).sum();
                *z *= Complex64::from_polar(1.0, -kv * tau);
            }
            self.xplan.inverse(&mut buf);
            for ix in 0..nxt {
                state[ix * nvt + iv] = buf[ix].re;
            }
        }
    }

    /// Collision and source over one full step, slice by slice.
    fn collide(&self, state: &mut [f64], t: f64) {
        let nvt = self.v_coords.len();
        let dt = self.config.dt;
        let a0 = self.sample_source(t);
        let a1 = self.sample_source(t + dt);
        let n = self.config.grid.n;
        state.par_chunks_mut(nvt).enumerate().for_each(|(ix, slice)| {
            let x = &self.x_coords[ix][..n];
            let to_hat = |v: &[f64]| {
                let mut b: Vec<Complex64> = v.iter().map(|&r| Complex64::new(r, 0.0)).collect();
                self.vplan.forward(&mut b);
                b
            };
            let u = to_hat(slice);
            let s0 = to_hat(&a0[ix * nvt..(ix + 1) * nvt]);
            let s1 = to_hat(&a1[ix * nvt..(ix + 1) * nvt]);
            let mu = |tt: f64, k: usize| {
                let m = self.op.modulation_at(tt, x);
                self.explicit_hom[k] + self.explicit_mod.as_ref().map_or(0.0, |mm| m * mm[k])
            };
            let mut out = vec![Complex64::new(0.0, 0.0); nvt];
            for k in 0..nvt {
                let (e, p1, p2) = (self.expz[k], self.phi1[k], self.phi2[k]);
                let n0 = mu(t, k) * u[k] + s0[k];
                let ustar = e * u[k] + dt * p1 * n0;
                let n1 = mu(t + dt, k) * ustar + s1[k];
                out[k] = e * u[k] + dt * ((p1 - p2) * n0 + p2 * n1);
            }
            self.vplan.inverse(&mut out);
            for (dst, z) in slice.iter_mut().zip(&out) {
                *dst = z.re;
            }
        });
    }

    /// Advance one Strang step from time `t`.
    pub fn step(&self, state: &mut [f64], t: f64) -> Result<()> {
        if state.len() != self.config.grid.slice_len() {
            return Err(Error::Grid(format!("state length {} does not match the grid", state.len())));
        }
        let dt = self.config.dt;
        self.transport(state, 0.5 * dt);
        self.collide(state, t);
        self.transport(state, 0.5 * dt);
        if let Some(i) = state.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numerical { time: t + dt, reason: format!("non-finite value at sample {i}") });
        }
        Ok(())
    }

    fn record(&self, step: usize, time: f64, state: &[f64]) -> StepRecord {
        let g = &self.config.grid;
        let vol = g.xgrid().cell_volume() * g.vgrid().cell_volume();
        let sup = state.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        StepRecord {
            step,
            time,
            cfl_margin: self.cfl_margin,
            tail_error: self.op.tail_bound(sup),
            mass: state.iter().sum::<f64>() * vol,
            l2: (state.iter().map(|x| x * x).sum::<f64>() * vol).sqrt(),
        }
    }

    /// Runs from `initial` over the configured window.
    pub fn run_from(&self, initial: Vec<f64>) -> Result<Trajectory> {
        let out_grid = self.config.output_grid()?;
        let steps = self.config.steps();
        let mut data = Vec::with_capacity(out_grid.len());
        let mut state = initial;
        data.extend_from_slice(&state);
        let t0 = self.config.grid.t0;
        let mut log = vec![self.record(0, t0, &state)];
        for k in 0..steps {
            let t = t0 + k as f64 * self.config.dt;
            self.step(&mut state, t)?;
            log.push(self.record(k + 1, t + self.config.dt, &state));
            if (k + 1) % self.config.record_every == 0 {
                data.extend_from_slice(&state);
            }
        }
        let mut field = Field::from_data(&out_grid, data)?;
        field.meta.insert("s".into(), self.config.kernel.s);
        field.meta.insert("kappa".into(), self.config.kernel.kappa);
        Ok(Trajectory { field, log })
    }

    /// Stiff symbol integrated exactly.
    pub fn stiff_symbol(&self) -> &[f64] {
        &self.lambda
    }
}

/// Runs a configuration with its analytic source and initial datum.
pub fn run(config: &RunConfig) -> Result<Trajectory> {
    let solver = Solver::new(config)?;
    solver.run_from(initial_slice(&config.initial, &config.grid))
}

/// Smooth compactly supported test function with analytic derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpTest {
    pub t_center: f64,
    pub t_radius: f64,
    pub x_radius: f64,
    pub v_radius: f64,
    /// Set to zero for the zero test function.
    pub amplitude: f64,
}

impl BumpTest {
    /// `(1 - q^2)^4` and its derivative in `y`, with `q = (y - c) / r`.
    fn factor(y: f64, c: f64, r: f64) -> (f64, f64) {
        let q = (y - c) / r;
        if q.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let b = 1.0 - q * q;
        (b.powi(4), -8.0 * q * b.powi(3) / r)
    }

    pub fn value(&self, t: f64, x: &[f64], v: &[f64]) -> f64 {
        self.amplitude * BumpTest::factor(t, self.t_center, self.t_radius).0 * self.xv(x, v).0
    }

    /// Value and `d_t + v . grad_x` of the test function.
    pub fn transport_derivative(&self, t: f64, x: &[f64], v: &[f64]) -> (f64, f64) {
        let (ft, dft) = BumpTest::factor(t, self.t_center, self.t_radius);
        let (fxv, vgrad) = self.xv(x, v);
        (self.amplitude * ft * fxv, self.amplitude * (dft * fxv + ft * vgrad))
    }

    /// `(phi_x phi_v, v . grad_x (phi_x phi_v))`.
    fn xv(&self, x: &[f64], v: &[f64]) -> (f64, f64) {
        let fv = BumpTest::factor(norm(v), 0.0, self.v_radius).0;
        let parts: Vec<(f64, f64)> = x.iter().map(|&c| BumpTest::factor(c, 0.0, self.x_radius)).collect();
        let prod: f64 = parts.iter().map(|p| p.0).product();
        let mut grad = 0.0;
        for a in 0..x.len() {
            let others: f64 = parts.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, p)| p.0).product();
            grad += v[a] * parts[a].1 * others;
        }
        (prod * fv, grad * fv)
    }
}

/// `| -iiint f (d_t + v . grad_x) phi + iint B(f, phi) - iiint a phi |` by
/// trapezoid in t and box sums in (x, v); `B` uses the velocity-periodic
/// operator of the solver (the continuum symbol for homogeneous kernels).
pub fn weak_residual(traj: &Field, kernel: &Kernel, source: &SourceFn, phi: &BumpTest) -> Result<f64> {
    let g = &traj.grid;
    let vg = g.vgrid();
    let xg = g.xgrid();
    let n = g.n;
    if phi.amplitude == 0.0 {
        return Ok(0.0);
    }
    if phi.t_center - phi.t_radius < g.t0 - 1e-12 || phi.t_center + phi.t_radius > g.t1 + 1e-12 {
        return param("test function leaves the time window");
    }
    if phi.x_radius > 0.5 * g.x_period || phi.v_radius > g.v_halfwidth - 1.0 {
        return param("test function leaves the space or velocity domain");
    }
    let plan = CubeFft::new(n, g.nv);
    let symbol: Vec<f64> = if kernel.family == Family::Homogeneous {
        let scale = kernel.c / fractional_laplacian_constant(n, kernel.s);
        (0..plan.len()).map(|i| -scale * plan.xi_sq(i, vg.period()).powf(kernel.s)).collect()
    } else {
        CollisionOp::new(kernel, &vg)?.periodic_symbols().0.iter().map(|x| kernel.c * x).collect()
    };
    let modsym = if kernel.family == Family::Modulated {
        CollisionOp::new(kernel, &vg)?.periodic_symbols().1.map(|m| m.iter().map(|x| kernel.c * x).collect::<Vec<f64>>())
    } else {
        None
    };
    let op = CollisionOp::new(kernel, &vg)?;
    let vol_xv = xg.cell_volume() * vg.cell_volume();
    let mut total = 0.0;
    for k in 0..g.nt {
        let t = g.time(k);
        let wt = if g.nt == 1 { 1.0 } else if k == 0 || k == g.nt - 1 { 0.5 * g.dt() } else { g.dt() };
        let mut slice_sum = 0.0;
        for ix in 0..xg.len() {
            let x = &xg.point(ix)[..n];
            let f = traj.vslice(k, ix);
            let mut phis = Vec::with_capacity(vg.len());
            for (iv, &fv) in f.iter().enumerate() {
                let v = &vg.point(iv)[..n];
                let (p, dp) = phi.transport_derivative(t, x, v);
                phis.push(p);
                slice_sum += -fv * dp - source(t, x, v) * p;
            }
            if phis.iter().all(|&p| p == 0.0) {
                continue;
            }
            // B(f, phi) = -<phi, L f>.
            let m = op.modulation_at(t, x);
            let lf = crate::fft::apply_real_multiplier(&plan, f, |i| symbol[i] + modsym.as_ref().map_or(0.0, |mm| m * mm[i]));
            slice_sum -= phis.iter().zip(&lf).map(|(p, l)| p * l).sum::<f64>();
        }
        total += wt * slice_sum * vol_xv;
    }
    Ok(total.abs())
}

/// `||a||_{L^r}` of the source over the output grid of a configuration.
pub fn source_lr_norm(config: &RunConfig, source: &SourceFn) -> Result<f64> {
    let g = config.output_grid()?;
    let r = config.source_r;
    let xg = g.xgrid();
    let vg = g.vgrid();
    let n = g.n;
    let mut acc = 0.0f64;
    let mut sup = 0.0f64;
    for k in 0..g.nt {
        let t = g.time(k);
        for ix in 0..xg.len() {
            let x = xg.point(ix);
            for iv in 0..vg.len() {
                let a = source(t, &x[..n], &vg.point(iv)[..n]).abs();
                sup = sup.max(a);
                if r.is_finite() {
                    acc += a.powf(r);
                }
            }
        }
    }
    Ok(if r.is_finite() { (acc * g.cell_volume()).powf(1.0 / r) } else { sup })
}
