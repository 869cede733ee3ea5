//! `verify --lemma ID`: each statement id maps to a configuration with
//! bundled defaults and a fixed list of checks.

use crate::config::{self, apply_seed, out_dir};
use crate::output::{print_summary, write_report};
use crate::{CliError, CliResult};
use kinlab::conegeom::{cone_measure_check, cross_section_profile, slab_instance, ConeProblem};
use kinlab::cutoffs::{build_cutoff_family, check_properties, epsilon0, epsilon0_radii, scaled_inequality_witness};
use kinlab::diagnostics::{averaging_check, degiorgi_levels, dg2_measures, energy_report, EnergyWindow, SourceTerm, UniversalConstants};
use kinlab::fracops::{critical_tail, mollifier_rate, operator_bounds};
use kinlab::kernel::{cross_term, validate_bounds, CollisionOp, Kernel};
use kinlab::kinetic_scaling::{oscillation_profile, scaled_kernel_check, source_norm_ratio, KineticShift, PhaseBox, ScalingParams};
use kinlab::phase::{make_grid, Field, PhaseGrid, Region, VGrid};
use kinlab::report::{Check, Overall, Report, Verdict};
use kinlab::solver::{run, source_fn, source_lr_norm, InitialSpec, RunConfig, SourceFn, SourceSpec, Stepper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map};
use std::f64::consts::PI;

/// Accepted statement ids.
pub const LEMMA_IDS: [&str; 10] = ["2.1", "2.2", "2.3", "3.1", "4.1", "5.1", "5.2", "A.1", "A.2", "A.3"];

/// Short role name of each id, used in report kinds.
pub fn role(id: &str) -> Option<&'static str> {
    Some(match id {
        "2.1" => "operator-bounds",
        "2.2" => "energy-inequality",
        "2.3" => "soft-cutoffs",
        "3.1" => "level-recursion",
        "4.1" => "intermediate-value",
        "5.1" => "kinetic-scaling",
        "5.2" => "oscillation-decay",
        "A.1" => "velocity-averaging",
        "A.2" => "cone-measure",
        "A.3" => "mollifier-rate",
        _ => return None,
    })
}

pub fn cmd_verify(id: &str, common: &crate::Common) -> CliResult<Overall> {
    if role(id).is_none() {
        return Err(CliError::Usage(format!("unknown lemma id \"{id}\"; valid ids: {}", LEMMA_IDS.join(", "))));
    }
    let path = common.config.as_deref();
    let seed = common.seed;
    let report = match id {
        "2.1" => verify_operator_bounds(&with_seed(config::load_or_default(path)?, seed))?,
        "2.2" => verify_energy(&with_seed(config::load_or_default(path)?, seed))?,
        "2.3" => verify_cutoffs(&config::load_or_default(path)?)?,
        "3.1" => verify_levels(&with_seed(config::load_or_default(path)?, seed))?,
        "4.1" => verify_intermediate(&with_seed(config::load_or_default(path)?, seed))?,
        "5.1" => verify_scaling(&with_seed(config::load_or_default(path)?, seed))?,
        "5.2" => verify_oscillation(&with_seed(config::load_or_default(path)?, seed))?,
        "A.1" => verify_averaging(&config::load_or_default(path)?)?,
        "A.2" => verify_cone(&with_seed(config::load_or_default(path)?, seed))?,
        _ => verify_mollifier(&with_seed(config::load_or_default(path)?, seed))?,
    };
    let dir = out_dir(common.out.as_deref(), "verify");
    let mut extra = Map::new();
    extra.insert("lemma".into(), json!(id));
    write_report(&dir, &format!("lemma-{id}"), &report, extra)?;
    print_summary(&report, &dir);
    Ok(report.overall)
}

/// Configurations whose randomness can be overridden by `--seed`.
pub trait Seeded {
    fn set_seed(&mut self, seed: u64);
}

fn with_seed<T: Seeded>(mut cfg: T, seed: Option<u64>) -> T {
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    cfg
}

fn report(id: &str, cfg: &impl Serialize, checks: Vec<Check>) -> CliResult<Report> {
    Ok(Report::new(format!("verify-{}", role(id).unwrap_or(id)), cfg, checks)?)
}

fn ratio(a: f64, b: f64) -> f64 {
    a.max(b) / a.min(b)
}

/// Default run grid shared by the energy and level checks.
fn energy_grid() -> PhaseGrid {
    make_grid(1, 2.0 * PI, 8.0, 16, 64, -2.0, 0.0, 2).expect("static grid")
}

/// Doubles the resolution in x, v and t.
pub fn refine(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.grid.nx *= 2;
    c.grid.nv *= 2;
    c.dt /= 2.0;
    c.record_every *= 2;
    c
}

// ---------------------------------------------------------------- 2.1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorBoundsConfig {
    pub schema_version: u32,
    pub kernel: Kernel,
    pub n: usize,
    /// Coarse velocity resolution; the refined grid doubles it.
    pub nv: usize,
    pub v_halfwidth: f64,
    /// L2 shift in the coercivity bound.
    pub shift: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for OperatorBoundsConfig {
    fn default() -> Self {
        OperatorBoundsConfig {
            schema_version: 1,
            kernel: Kernel::truncated(0.3, 2.0, 1.0),
            n: 1,
            nv: 128,
            v_halfwidth: 8.0,
            shift: 1.0,
            samples: 2000,
            seed: 0,
        }
    }
}

impl Seeded for OperatorBoundsConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

pub fn verify_operator_bounds(cfg: &OperatorBoundsConfig) -> CliResult<Report> {
    let cert = validate_bounds(&cfg.kernel, cfg.n, cfg.samples, cfg.seed)?;
    let coarse = operator_bounds(&cfg.kernel, &VGrid::new(cfg.n, cfg.nv, cfg.v_halfwidth)?, cfg.shift)?;
    let fine = operator_bounds(&cfg.kernel, &VGrid::new(cfg.n, 2 * cfg.nv, cfg.v_halfwidth)?, cfg.shift)?;
    let checks = vec![
        Check::new("kernel bounds and symmetries", Verdict::from_bool(cert.passed()), json!({ "samples": cert.samples_checked, "violations": cert.violations.len(), "ratio_range": cert.max_ratio })),
        Check::new("coercivity constant positive", Verdict::from_bool(coarse.coercivity > 0.0 && fine.coercivity > 0.0), [coarse, fine]),
        Check::new("coercivity constant stable under refinement", Verdict::from_bool(ratio(coarse.coercivity, fine.coercivity) < 2.0), json!({ "ratio": ratio(coarse.coercivity, fine.coercivity) })),
        Check::new("dual bound constant stable under refinement", Verdict::from_bool(ratio(coarse.dual, fine.dual) < 2.0), json!({ "coarse": coarse.dual, "fine": fine.dual, "ratio": ratio(coarse.dual, fine.dual) })),
    ];
    report("2.1", cfg, checks)
}

// ---------------------------------------------------------------- 2.2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub schema_version: u32,
    pub run: RunConfig,
    pub window: EnergyWindow,
    /// Largest tolerated change of the fitted constant under refinement.
    pub stability_factor: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            schema_version: 1,
            run: RunConfig {
                grid: energy_grid(),
                kernel: Kernel::homogeneous(0.3, 2.0, 1.0),
                source: SourceSpec::Wave { amplitude: 0.5, wavenumber: 1.0, omega: 1.0, v_radius: 3.0 },
                source_r: f64::INFINITY,
                initial: InitialSpec::Packet { amplitude: 3.0, x_center: 0.0, x_radius: 2.5, v_center: 0.0, v_radius: 3.0, offset: 0.0 },
                stepper: Stepper::SpectralExponential,
                dt: 0.05,
                record_every: 1,
                c_stab: 0.25,
            },
            window: EnergyWindow { outer: Region::centered(-2.0, 0.0, 2.0, None), inner: Region::centered(-1.0, 0.0, 1.0, None), radius: 5.0 },
            stability_factor: 4.0,
        }
    }
}

impl Seeded for EnergyConfig {
    fn set_seed(&mut self, seed: u64) {
        apply_seed(&mut self.run, seed);
    }
}

pub fn verify_energy(cfg: &EnergyConfig) -> CliResult<Report> {
    let fam = build_cutoff_family(cfg.run.kernel.s, cfg.run.grid.n)?;
    let mut reports = Vec::new();
    for rc in [cfg.run.clone(), refine(&cfg.run)] {
        rc.validate()?;
        let traj = run(&rc)?;
        let a: SourceFn = source_fn(&rc.source, &traj.field.grid);
        let src = (rc.source != SourceSpec::Zero).then_some(SourceTerm { a: &a, r: rc.source_r });
        match energy_report(&traj.field, &rc.kernel, &fam, &fam.psi_one(), &cfg.window, src) {
            Ok(r) => reports.push(r),
            Err(kinlab::Error::Precondition(m)) => {
                let checks = vec![Check::new("energy inequality", Verdict::Vacuous, m)];
                return report("2.2", cfg, checks);
            }
            Err(e) => return Err(e.into()),
        }
    }
    let cross = reports.iter().map(|r| r.lhs_cross).fold(f64::INFINITY, f64::min);
    let cs: Vec<Option<f64>> = reports.iter().map(|r| r.fitted_c).collect();
    let finite = cs.iter().all(|c| c.is_some_and(|c| c.is_finite() && c >= 0.0));
    let spread = match (cs[0], cs[1]) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => ratio(a, b),
        _ => f64::INFINITY,
    };
    let stable = if finite { Verdict::from_bool(spread < cfg.stability_factor) } else { Verdict::Vacuous };
    let checks = vec![
        Check::new("cross term non-negative", Verdict::from_bool(cross >= -1e-9), json!({ "min_lhs_cross": cross })),
        Check::new("fitted constant finite", Verdict::from_bool(finite), &reports),
        Check::new("fitted constant stable under refinement", stable, json!({ "fitted_c": cs, "ratio": spread })),
    ];
    report("2.2", cfg, checks)
}

// ---------------------------------------------------------------- 2.3

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffConfig {
    pub schema_version: u32,
    pub s: f64,
    pub n: usize,
    pub kappa: f64,
    pub c: f64,
    pub thetas: Vec<f64>,
    pub nv: usize,
    pub v_halfwidth: f64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        CutoffConfig { schema_version: 1, s: 0.3, n: 1, kappa: 2.0, c: 1.0, thetas: vec![0.125, 0.0625, 0.03125], nv: 256, v_halfwidth: 8.0 }
    }
}

pub fn verify_cutoffs(cfg: &CutoffConfig) -> CliResult<Report> {
    let fam = build_cutoff_family(cfg.s, cfg.n)?;
    let vg = VGrid::new(cfg.n, cfg.nv, cfg.v_halfwidth)?;
    let radii: Vec<f64> = (0..10_000).map(|i| i as f64 * 1e-2).chain([2.0]).collect();
    let rep = check_properties(&fam, &Kernel::homogeneous(cfg.s, cfg.kappa, cfg.c), &vg, &cfg.thetas, &radii)?;
    let count = |what: &str| rep.violations.iter().filter(|v| v.property == what).count();
    let need = 1.5 * cfg.s - 0.15;
    let growth = match rep.fitted_exponent {
        Some(e) => Verdict::from_bool(rep.c_psi.is_finite() && e >= need),
        None => Verdict::Vacuous,
    };
    let mut eps = Vec::new();
    for &th in &cfg.thetas {
        let e0 = epsilon0(&fam, th)?;
        let certified = e0.value > 0.0 && scaled_inequality_witness(&fam, th, e0.value, &epsilon0_radii(th)).is_none();
        eps.push((th, e0.value, certified));
    }
    let ordering = count("psi_theta <= psi^1") + count("psi_theta monotone in theta");
    let checks = vec![
        Check::new("operator growth bound", growth, json!({ "c_psi": rep.c_psi, "sup_near": rep.sup_near, "fitted_exponent": rep.fitted_exponent, "required": need })),
        Check::new("vanishing core", Verdict::from_bool(count("vanishing on the ball of radius 1/theta") == 0), json!({ "violations": count("vanishing on the ball of radius 1/theta") })),
        Check::new("ordering", Verdict::from_bool(ordering == 0), json!({ "violations": ordering })),
        Check::new("unit gap outside radius 2", Verdict::from_bool(count("1 + psi_theta <= psi^1 for |v| >= 2") == 0), json!({ "violations": count("1 + psi_theta <= psi^1 for |v| >= 2") })),
        Check::new("scaled inequality threshold certified", Verdict::from_bool(eps.iter().all(|e| e.2)), eps),
    ];
    report("2.3", cfg, checks)
}

// ---------------------------------------------------------------- 3.1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsConfig {
    pub schema_version: u32,
    pub run: RunConfig,
    pub k_max: u32,
}

impl Default for LevelsConfig {
    fn default() -> Self {
        LevelsConfig {
            schema_version: 1,
            run: RunConfig {
                grid: energy_grid(),
                kernel: Kernel::homogeneous(0.3, 2.0, 1.0),
                source: SourceSpec::Zero,
                source_r: f64::INFINITY,
                initial: InitialSpec::Rough { amplitude: 0.05, modes: 24, seed: 100 },
                stepper: Stepper::SpectralExponential,
                dt: 0.05,
                record_every: 1,
                c_stab: 0.25,
            },
            k_max: 25,
        }
    }
}

impl Seeded for LevelsConfig {
    fn set_seed(&mut self, seed: u64) {
        apply_seed(&mut self.run, seed);
    }
}

pub fn verify_levels(cfg: &LevelsConfig) -> CliResult<Report> {
    cfg.run.validate()?;
    let traj = run(&cfg.run)?;
    let fam = build_cutoff_family(cfg.run.kernel.s, cfg.run.grid.n)?;
    let rep = degiorgi_levels(&traj.field, &fam, cfg.k_max)?;
    let decay = match rep.first_below {
        Some(k) if k <= cfg.k_max as usize => Verdict::Pass,
        _ => Verdict::Vacuous,
    };
    let checks = vec![
        Check::new("level energies non-increasing", Verdict::from_bool(rep.monotone), &rep.energies),
        Check::new("indicator bound", Verdict::from_bool(rep.indicator_failures == 0), json!({ "failures": rep.indicator_failures, "checked": rep.indicator_checked })),
        Check::new("small-data decay", decay, json!({ "first_below": rep.first_below, "fit": rep.fit })),
    ];
    report("3.1", cfg, checks)
}

// ---------------------------------------------------------------- 4.1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntermediateConfig {
    pub schema_version: u32,
    /// Must cover `[-6, 0]` and the spatial ball of radius 3.
    pub run: RunConfig,
    pub constants: UniversalConstants,
    /// Level at which slices are split for the cross-term sign check.
    pub cross_level: f64,
    /// Number of sampled `(t, x)` slices for the cross term.
    pub cross_slices: usize,
    pub seed: u64,
}

impl Default for IntermediateConfig {
    fn default() -> Self {
        IntermediateConfig {
            schema_version: 1,
            run: RunConfig {
                grid: make_grid(1, 16.0, 8.0, 64, 128, -6.0, 0.0, 2).expect("static grid"),
                // Nearly collisionless, so the packet keeps its height while it drifts.
                kernel: Kernel::homogeneous(0.3, 500.0, 0.002),
                source: SourceSpec::Zero,
                source_r: f64::INFINITY,
                // A packet drifting into the unit window from the left; the offset
                // keeps the untouched region strictly negative.
                initial: InitialSpec::Packet { amplitude: 1.0, x_center: -7.0, x_radius: 2.5, v_center: 1.3, v_radius: 2.5, offset: -0.02 },
                stepper: Stepper::SpectralExponential,
                dt: 0.05,
                record_every: 1,
                c_stab: 0.25,
            },
            constants: UniversalConstants::default(),
            cross_level: 0.5,
            cross_slices: 24,
            seed: 0,
        }
    }
}

impl Seeded for IntermediateConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        apply_seed(&mut self.run, seed);
    }
}

pub fn verify_intermediate(cfg: &IntermediateConfig) -> CliResult<Report> {
    cfg.run.validate()?;
    let traj = run(&cfg.run)?;
    let f = &traj.field;
    let a = source_fn(&cfg.run.source, &f.grid);
    let norm = if cfg.run.source == SourceSpec::Zero { 0.0 } else { source_lr_norm(&cfg.run, &a)? };
    let fam = build_cutoff_family(cfg.run.kernel.s, cfg.run.grid.n)?;
    let dg2 = match dg2_measures(f, &cfg.constants, &fam, norm) {
        Ok(r) => Check::new("intermediate-value implication", r.verdict, r),
        Err(kinlab::Error::Precondition(m)) => Check::new("intermediate-value implication", Verdict::Vacuous, m),
        Err(e) => return Err(e.into()),
    };
    let op = CollisionOp::new(&cfg.run.kernel, &f.grid.vgrid())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut min_value, mut bound_bad, mut split) = (f64::INFINITY, 0usize, 0usize);
    let xg = f.grid.xgrid();
    let vg = f.grid.vgrid();
    let inner_radius = f.grid.v_halfwidth - 2.0;
    for _ in 0..cfg.cross_slices {
        let k = rng.gen_range(0..f.grid.nt);
        let ix = rng.gen_range(0..xg.len());
        let slice = f.vslice(k, ix);
        let plus: Vec<f64> = slice.iter().map(|v| (v - cfg.cross_level).max(0.0)).collect();
        // The lower part is cut off near the velocity faces; any non-negative
        // function with support disjoint from the upper part has the same sign property.
        let minus: Vec<f64> = slice
            .iter()
            .enumerate()
            .map(|(j, v)| if vg.norm(j) <= inner_radius { (cfg.cross_level - v).max(0.0) } else { 0.0 })
            .collect();
        if plus.iter().all(|&p| p == 0.0) {
            continue;
        }
        split += 1;
        let ct = cross_term(&op, &plus, &minus, f.grid.time(k), &xg.point(ix)[..f.grid.n])?;
        min_value = min_value.min(ct.value);
        if !ct.bound_holds {
            bound_bad += 1;
        }
    }
    let cross = if split == 0 {
        Check::new("cross term non-negative", Verdict::Vacuous, "no sampled slice crosses the level")
    } else {
        Check::new("cross term non-negative", Verdict::from_bool(min_value >= -1e-9 && bound_bad == 0), json!({ "slices": split, "min_value": min_value, "bound_violations": bound_bad }))
    };
    report("4.1", cfg, vec![dg2, cross])
}

// ---------------------------------------------------------------- 5.1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub schema_version: u32,
    pub kernel: Kernel,
    pub n: usize,
    #[serde(with = "kinlab::report::extended_f64")]
    pub r: f64,
    pub scalings: usize,
    pub kernel_samples: usize,
    pub norm_points: [usize; 2],
    pub shift_samples: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            schema_version: 1,
            kernel: Kernel::homogeneous(0.3, 2.0, 1.0),
            n: 1,
            r: 10.0,
            scalings: 10,
            kernel_samples: 10_000,
            norm_points: [40, 56],
            shift_samples: 1000,
            seed: 0,
        }
    }
}

impl Seeded for ScalingConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

fn smooth_bump(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (1.0 - u * u).powi(3)
    } else {
        0.0
    }
}

pub fn verify_scaling(cfg: &ScalingConfig) -> CliResult<Report> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let a: SourceFn = Box::new(|t, x, v| smooth_bump(t + 1.0) * smooth_bump(x[0]) * smooth_bump(v[0]).sqrt());
    let support = PhaseBox { t: [-2.0, 0.0], x: [-1.0, 1.0], v: [-1.0, 1.0] };
    let (mut worst_kernel, mut bound_bad, mut worst_norm) = (0.0f64, 0usize, 0.0f64);
    for i in 0..cfg.scalings {
        let p = ScalingParams { epsilon: rng.gen_range(0.02..1.0), s: cfg.kernel.s, r: cfg.r, n: cfg.n };
        let c = scaled_kernel_check(&cfg.kernel, &p, cfg.kernel_samples, cfg.seed.wrapping_add(i as u64))?;
        worst_kernel = worst_kernel.max(c.max_rel_diff);
        bound_bad += c.bound_violations;
        let (measured, predicted) = source_norm_ratio(&a, &support, &ScalingParams { n: 1, ..p }, cfg.norm_points)?;
        worst_norm = worst_norm.max((measured / predicted - 1.0).abs());
    }
    let mut worst_shift = 0.0f64;
    let draw = |rng: &mut ChaCha8Rng| KineticShift {
        t: rng.gen_range(-2.0..2.0),
        x: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
        v: [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)],
    };
    for _ in 0..cfg.shift_samples {
        let (z1, z2, p) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let (t2, x2, v2) = z2.apply(p.t, &p.x, &p.v);
        let seq = z1.apply(t2, &x2, &v2);
        let one = z1.compose(&z2).apply(p.t, &p.x, &p.v);
        let d = (seq.0 - one.0).abs().max((0..2).map(|a| (seq.1[a] - one.1[a]).abs().max((seq.2[a] - one.2[a]).abs())).fold(0.0, f64::max));
        worst_shift = worst_shift.max(d);
    }
    let checks = vec![
        Check::new("scaled kernel equals kernel", Verdict::from_bool(worst_kernel <= 1e-9 && bound_bad == 0), json!({ "max_rel_diff": worst_kernel, "bound_violations": bound_bad })),
        Check::new("source norm scaling", Verdict::from_bool(worst_norm <= 0.02), json!({ "worst_relative_deviation": worst_norm })),
        Check::new("shift composition", Verdict::from_bool(worst_shift <= 1e-12), json!({ "max_abs_diff": worst_shift })),
    ];
    report("5.1", cfg, checks)
}

// ---------------------------------------------------------------- 5.2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscillationConfig {
    pub schema_version: u32,
    pub run: RunConfig,
    /// Centre time of every cylinder.
    pub t: f64,
    /// `(x, v)` centres.
    pub points: Vec<[f64; 2]>,
    pub lambda: f64,
    pub levels: usize,
}

impl Default for OscillationConfig {
    fn default() -> Self {
        OscillationConfig {
            schema_version: 1,
            run: RunConfig {
                grid: make_grid(1, 6.0, 8.0, 64, 128, -3.0, 0.0, 2).expect("static grid"),
                kernel: Kernel::homogeneous(0.25, 10.0, 0.1),
                source: SourceSpec::Zero,
                source_r: f64::INFINITY,
                initial: InitialSpec::Rough { amplitude: 1.0, modes: 48, seed: 11 },
                stepper: Stepper::SpectralExponential,
                dt: 0.025,
                record_every: 1,
                c_stab: 0.25,
            },
            t: -1.5,
            points: vec![[-0.6, -1.0], [0.0, -0.5], [0.4, 0.0], [1.0, 0.5], [-1.2, 1.0]],
            lambda: 0.7,
            levels: 6,
        }
    }
}

impl Seeded for OscillationConfig {
    fn set_seed(&mut self, seed: u64) {
        apply_seed(&mut self.run, seed);
    }
}

pub fn verify_oscillation(cfg: &OscillationConfig) -> CliResult<Report> {
    cfg.run.validate()?;
    let traj = run(&cfg.run)?;
    let mut checks = Vec::new();
    for p in &cfg.points {
        let z = KineticShift { t: cfg.t, x: [p[0], 0.0], v: [p[1], 0.0] };
        let prof = oscillation_profile(&traj.field, &z, cfg.run.kernel.s, cfg.lambda, cfg.levels)?;
        let ok = prof.alpha > 0.0 && prof.decay_holds;
        checks.push(Check::new(format!("oscillation decay at x = {}, v = {}", p[0], p[1]), Verdict::from_bool(ok), prof));
    }
    report("5.2", cfg, checks)
}

// ---------------------------------------------------------------- A.1

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingConfig {
    pub schema_version: u32,
    pub s: f64,
    pub frequencies: Vec<f64>,
    pub nx: usize,
    pub nv: usize,
    pub nt: usize,
    /// Largest tolerated max/min ratio across frequencies.
    pub spread: f64,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        AveragingConfig { schema_version: 1, s: 0.3, frequencies: vec![4.0, 8.0, 16.0, 32.0], nx: 128, nv: 256, nt: 513, spread: 3.0 }
    }
}

pub fn verify_averaging(cfg: &AveragingConfig) -> CliResult<Report> {
    let grid = make_grid(1, 2.0 * PI, 8.0, cfg.nx, cfg.nv, -1.0, 1.0, cfg.nt)?;
    let eta = grid.vgrid().sample(|v| smooth_bump(v[0] / 2.0));
    let inner = Region::centered(-0.5, 0.5, 1.0, None);
    let outer = Region::centered(-1.0, 1.0, 2.0, None);
    let zero = Field::zeros(&grid);
    let mut ratios = Vec::new();
    let mut details = Vec::new();
    for &j in &cfg.frequencies {
        let f = Field::from_fn(&grid, |t, x, v| (j * (x[0] - v[0] * t)).sin() * smooth_bump(v[0] / 2.0));
        let rep = averaging_check(&f, &zero, &eta, cfg.s, &inner, &outer, 1e-3)?;
        ratios.push(rep.ratio.unwrap_or(f64::NAN));
        details.push(rep);
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let finite = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    let checks = vec![
        Check::new("averaging ratio finite", Verdict::from_bool(finite), &details),
        Check::new("averaging ratio bounded across frequencies", Verdict::from_bool(finite && hi / lo <= cfg.spread), json!({ "ratios": ratios, "spread": hi / lo })),
    ];
    report("A.1", cfg, checks)
}

// ---------------------------------------------------------------- A.2

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeConfig {
    pub schema_version: u32,
    pub problem: ConeProblem,
    pub samples: usize,
    pub section_points: usize,
    pub resolution: usize,
    pub seed: u64,
}

impl Default for ConeConfig {
    fn default() -> Self {
        ConeConfig { schema_version: 1, problem: slab_instance(1, 0.5), samples: 200_000, section_points: 8, resolution: 2000, seed: 0 }
    }
}

impl Seeded for ConeConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

pub fn verify_cone(cfg: &ConeConfig) -> CliResult<Report> {
    let c = cone_measure_check(&cfg.problem, cfg.samples, cfg.seed)?;
    let prof = cross_section_profile(&cfg.problem, cfg.section_points, cfg.resolution)?;
    let factor = crate::commands::section_factor(&cfg.problem);
    let checks = vec![
        Check::new("cone measure bound", c.verdict, &c),
        Check::new("cross-section growth fit", Verdict::from_bool(prof.r_squared >= 0.999), json!({ "r_squared": prof.r_squared, "times": prof.times, "areas": prof.areas })),
        Check::new("cross-section bound at t = -2", Verdict::from_bool(prof.at_minus_two * factor >= prof.base_measure), json!({ "a_minus_two": prof.at_minus_two, "base_measure": prof.base_measure, "factor": factor })),
    ];
    report("A.2", cfg, checks)
}

// ---------------------------------------------------------------- A.3

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MollifierConfig {
    pub schema_version: u32,
    pub s: f64,
    pub n: usize,
    pub nv: usize,
    pub v_halfwidth: f64,
    pub eps: Vec<f64>,
    pub seed: u64,
}

impl Default for MollifierConfig {
    fn default() -> Self {
        MollifierConfig {
            schema_version: 1,
            s: 0.3,
            n: 1,
            nv: 1024,
            v_halfwidth: 8.0,
            eps: (0..6).map(|i| 0.2 * 10f64.powf(i as f64 / 5.0)).collect(),
            seed: 11,
        }
    }
}

impl Seeded for MollifierConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

pub fn verify_mollifier(cfg: &MollifierConfig) -> CliResult<Report> {
    let vg = VGrid::new(cfg.n, cfg.nv, cfg.v_halfwidth)?;
    let tail = mollifier_rate(&vg, &critical_tail(&vg, cfg.s, cfg.seed), cfg.s, &cfg.eps)?;
    let bump = mollifier_rate(&vg, &vg.sample(|v| smooth_bump(v.iter().map(|c| c * c).sum::<f64>().sqrt() / 2.0)), cfg.s, &cfg.eps)?;
    let checks = vec![
        Check::new("critical tail rate", Verdict::from_bool(tail.rate >= cfg.s - 0.05), json!({ "rate": tail.rate, "max_ratio": tail.max_ratio, "required": cfg.s - 0.05 })),
        Check::new("smooth bump rate", Verdict::from_bool(bump.rate >= 1.0), json!({ "rate": bump.rate, "max_ratio": bump.max_ratio })),
    ];
    report("A.3", cfg, checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_id_has_a_role() {
        for id in LEMMA_IDS {
            assert!(role(id).is_some(), "{id}");
        }
        assert!(role("9.9").is_none());
    }

    #[test]
    fn unknown_id_lists_valid_ids() {
        let err = cmd_verify("9.9", &crate::Common::default()).unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_USAGE);
        let msg = err.to_string();
        for id in LEMMA_IDS {
            assert!(msg.contains(id), "{msg}");
        }
    }

    #[test]
    fn default_configs_round_trip() {
        let text = serde_json::to_string(&EnergyConfig::default()).unwrap();
        assert_eq!(config::parse::<EnergyConfig>(&text).unwrap(), EnergyConfig::default());
        let text = serde_json::to_string(&ConeConfig::default()).unwrap();
        assert_eq!(config::parse::<ConeConfig>(&text).unwrap(), ConeConfig::default());
    }

    #[test]
    fn refinement_doubles_resolution() {
        let c = EnergyConfig::default().run;
        let r = refine(&c);
        assert_eq!((r.grid.nx, r.grid.nv, r.record_every), (2 * c.grid.nx, 2 * c.grid.nv, 2));
        assert_eq!(r.output_grid().unwrap().nt, c.output_grid().unwrap().nt);
    }
}
