//! The `run`, `exponents`, `cone` and `sweep` commands.

use crate::config::{self, apply_seed, out_dir};
use crate::output::{print_summary, write_report, write_table};
use crate::{CliError, CliResult};
use kinlab::conegeom::{cone_measure_check, cross_section, random_instance, section_ratio_bound, ConeProblem};
use kinlab::diagnostics::exponents;
use kinlab::phase::write_dump;
use kinlab::report::{content_hash, Check, Overall, Report, Verdict};
use kinlab::solver::{run, RunConfig, SourceSpec, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::path::Path;

/// Relative mass drift tolerated on a source-free run.
pub const MASS_RTOL: f64 = 1e-8;

/// Stability, finiteness and (source-free) mass conservation of a trajectory.
pub fn trajectory_checks(cfg: &RunConfig, traj: &Trajectory) -> Vec<Check> {
    let finite = traj.field.check_finite();
    let min_margin = traj.log.iter().map(|r| r.cfl_margin).fold(f64::INFINITY, f64::min);
    let mut checks = vec![
        Check::new("finite values", Verdict::from_bool(finite.is_ok()), finite.err().map(|e| e.to_string())),
        Check::new("step stability", Verdict::from_bool(min_margin >= 0.0), json!({ "min_cfl_margin": min_margin })),
    ];
    let (first, last) = (traj.log.first(), traj.log.last());
    let mass = match (first, last) {
        (Some(a), Some(b)) if cfg.source == SourceSpec::Zero => {
            let scale = a.mass.abs().max(a.l2);
            let drift = (b.mass - a.mass).abs() / scale.max(f64::MIN_POSITIVE);
            Check::new("mass conservation", Verdict::from_bool(drift <= MASS_RTOL), json!({ "relative_drift": drift }))
        }
        _ => Check::new("mass conservation", Verdict::Vacuous, "source present"),
    };
    checks.push(mass);
    checks
}

pub fn cmd_run(common: &crate::Common) -> CliResult<Overall> {
    let path = common.config.as_deref().ok_or_else(|| CliError::Usage("run needs --config PATH".into()))?;
    let mut cfg: RunConfig = config::load(path)?;
    if let Some(seed) = common.seed {
        apply_seed(&mut cfg, seed);
    }
    cfg.validate()?;
    let traj = run(&cfg)?;
    let dir = out_dir(common.out.as_deref(), "run");
    std::fs::create_dir_all(&dir)?;
    let (bin, header) = write_dump(&traj.field, &dir.join("trajectory"))?;
    let log = dir.join("steps.csv");
    traj.write_log_csv(&log)?;
    let hash = content_hash(&std::fs::read(&bin)?);
    let report = Report::new("run", &cfg, trajectory_checks(&cfg, &traj))?;
    let mut extra = Map::new();
    extra.insert("content_hash".into(), Value::from(hash.clone()));
    extra.insert("steps".into(), Value::from(cfg.steps()));
    extra.insert("artifacts".into(), json!([file_name(&bin), file_name(&header), file_name(&log)]));
    write_report(&dir, "run", &report, extra)?;
    print_summary(&report, &dir);
    println!("content hash {hash}");
    Ok(report.overall)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Notes printed under the exponent table.
pub fn exponent_flags(n: usize, s: f64, r: f64) -> CliResult<Vec<String>> {
    let t = exponents(n, s, r)?;
    let mut flags = Vec::new();
    let tol = 1e-9 * t.r0;
    if (r - t.r0).abs() <= tol {
        flags.push(format!("boundary: r equals the critical exponent r0 = {}", t.r0));
    } else if r < t.r0 {
        flags.push(format!("r is below the critical exponent r0 = {}", t.r0));
    }
    if (t.recursion_gamma - 1.0).abs() <= 1e-9 {
        flags.push("boundary: recursion gamma equals 1".into());
    }
    if (t.gamma_crossing - t.r0).abs() > tol {
        flags.push(format!(
            "recursion gamma crosses 1 at r = {:.12}, not at r0 (gamma at r0 = {:.6})",
            t.gamma_crossing,
            kinlab::diagnostics::recursion_gamma(n, s, t.r0)?
        ));
    }
    Ok(flags)
}

pub fn cmd_exponents(n: usize, s: f64, r: f64, out: Option<&Path>) -> CliResult<Overall> {
    let t = exponents(n, s, r)?;
    let flags = exponent_flags(n, s, r)?;
    println!("n = {n}, s = {s}, r = {r}");
    for (name, v) in [
        ("r0", t.r0),
        ("p1", t.p1),
        ("p2", t.p2),
        ("theta_star", t.theta_star),
        ("theta_residual", t.theta_residual),
        ("q", t.q),
        ("beta", t.beta),
        ("alpha_dg2", t.alpha_dg2),
        ("recursion_gamma", t.recursion_gamma),
        ("gamma_crossing", t.gamma_crossing),
    ] {
        println!("{name:<16} {v:.12}");
    }
    for f in &flags {
        println!("flag: {f}");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let report = Report::new("exponents", &json!({ "n": n, "s": s, "r": r }), Vec::new())?;
        let mut extra = Map::new();
        extra.insert("table".into(), serde_json::to_value(t)?);
        extra.insert("flags".into(), serde_json::to_value(&flags)?);
        write_report(dir, "exponents", &report, extra)?;
    }
    Ok(Overall::Pass)
}

fn default_cone_n() -> usize {
    1
}

/// Configuration of the `cone` command. Explicit `problems` replace the
/// random instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConeCommandConfig {
    pub schema_version: u32,
    #[serde(default = "default_cone_n")]
    pub n: usize,
    pub instances: usize,
    pub samples: usize,
    /// Points per axis of the cross-section count at `t = -2`.
    pub resolution: usize,
    pub seed: u64,
    pub problems: Vec<ConeProblem>,
}

impl Default for ConeCommandConfig {
    fn default() -> Self {
        ConeCommandConfig { schema_version: 1, n: 1, instances: 20, samples: 100_000, resolution: 2000, seed: 0, problems: Vec::new() }
    }
}

/// Factor `c` with `A(-2) >= |B| / c`: the quarter bound in one dimension,
/// the growth-corrected one above.
pub fn section_factor(p: &ConeProblem) -> f64 {
    if p.n == 1 {
        4.0
    } else {
        section_ratio_bound(p.n, p.vertex_t)
    }
}

pub fn cmd_cone(common: &crate::Common) -> CliResult<Overall> {
    let mut cfg: ConeCommandConfig = config::load_or_default(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if !(1..=2).contains(&cfg.n) {
        return Err(CliError::Config(format!("n = {} must be 1 or 2", cfg.n)));
    }
    let problems: Vec<ConeProblem> = if cfg.problems.is_empty() {
        (0..cfg.instances as u64).map(|i| random_instance(cfg.n, cfg.seed.wrapping_add(i))).collect::<Result<_, _>>()?
    } else {
        cfg.problems.clone()
    };
    let results: Vec<_> = problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let check = cone_measure_check(p, cfg.samples, cfg.seed.wrapping_add(i as u64))?;
            let area = cross_section(p, -2.0, cfg.resolution);
            Ok((check, area))
        })
        .collect::<Result<Vec<_>, kinlab::Error>>()?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (i, (p, (c, area))) in problems.iter().zip(&results).enumerate() {
        let factor = section_factor(p);
        let section_ok = area * factor >= c.base_measure;
        checks.push(Check::new(format!("instance {i} cone measure"), c.verdict, c));
        checks.push(Check::new(
            format!("instance {i} section bound"),
            Verdict::from_bool(section_ok),
            json!({ "a_minus_two": area, "base_measure": c.base_measure, "factor": factor }),
        ));
        rows.push(vec![
            i.to_string(),
            p.n.to_string(),
            format!("{:e}", p.mu),
            format!("{:e}", c.base_measure),
            format!("{:e}", c.measure),
            format!("{:e}", c.std_error),
            format!("{:e}", c.bound),
            format!("{:e}", area),
            c.verdict.as_str().to_string(),
            section_ok.to_string(),
        ]);
    }
    let report = Report::new("cone", &cfg, checks)?;
    let dir = out_dir(common.out.as_deref(), "cone");
    write_report(&dir, "cone", &report, Map::new())?;
    write_table(
        &dir.join("instances.csv"),
        &report.config_hash,
        &["instance", "n", "mu", "base_measure", "measure", "std_error", "bound", "a_minus_two", "verdict", "section_bound"],
        &rows,
    )?;
    print_summary(&report, &dir);
    Ok(report.overall)
}

/// Configuration of the `sweep` command: the base run repeated over every
/// combination of `orders` and `seeds` (either list may be empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "config::schema_version")]
    pub schema_version: u32,
    pub base: RunConfig,
    #[serde(default)]
    pub orders: Vec<f64>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
struct JobRow {
    job: usize,
    s: f64,
    seed: Option<u64>,
    verdict: Verdict,
    final_mass: f64,
    final_l2: f64,
    min_cfl_margin: f64,
    max_tail_error: f64,
    content_hash: String,
    error: Option<String>,
}

fn run_job(job: usize, cfg: &RunConfig, seed: Option<u64>) -> JobRow {
    let mut row = JobRow {
        job,
        s: cfg.kernel.s,
        seed,
        verdict: Verdict::Fail,
        final_mass: f64::NAN,
        final_l2: f64::NAN,
        min_cfl_margin: f64::NAN,
        max_tail_error: f64::NAN,
        content_hash: String::new(),
        error: None,
    };
    match cfg.validate().and_then(|_| run(cfg)) {
        Ok(traj) => {
            let checks = trajectory_checks(cfg, &traj);
            row.verdict = if checks.iter().any(|c| c.verdict == Verdict::Fail) { Verdict::Fail } else { Verdict::Pass };
            if let Some(last) = traj.log.last() {
                row.final_mass = last.mass;
                row.final_l2 = last.l2;
            }
            row.min_cfl_margin = traj.log.iter().map(|r| r.cfl_margin).fold(f64::INFINITY, f64::min);
            row.max_tail_error = traj.log.iter().map(|r| r.tail_error).fold(0.0, f64::max);
            let bytes: Vec<u8> = traj.field.data.iter().flat_map(|x| x.to_le_bytes()).collect();
            row.content_hash = content_hash(&bytes);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

pub fn cmd_sweep(common: &crate::Common, workers: usize) -> CliResult<Overall> {
    let path = common.config.as_deref().ok_or_else(|| CliError::Usage("sweep needs --config PATH".into()))?;
    let mut cfg: SweepConfig = config::load(path)?;
    if cfg.seeds.is_empty() {
        if let Some(seed) = common.seed {
            cfg.seeds.push(seed);
        }
    }
    cfg.base.validate()?;
    let orders = if cfg.orders.is_empty() { vec![cfg.base.kernel.s] } else { cfg.orders.clone() };
    let seeds: Vec<Option<u64>> = if cfg.seeds.is_empty() { vec![None] } else { cfg.seeds.iter().copied().map(Some).collect() };
    let jobs: Vec<(RunConfig, Option<u64>)> = orders
        .iter()
        .flat_map(|&s| {
            let base = &cfg.base;
            seeds.iter().map(move |&seed| {
                let mut c = base.clone();
                c.kernel.s = s;
                if let Some(seed) = seed {
                    apply_seed(&mut c, seed);
                }
                (c, seed)
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    let rows: Vec<JobRow> = pool.install(|| jobs.par_iter().enumerate().map(|(i, (c, seed))| run_job(i, c, *seed)).collect());
    let checks = rows.iter().map(|r| Check::new(format!("job {} (s = {}, seed = {:?})", r.job, r.s, r.seed), r.verdict, r)).collect();
    let report = Report::new("sweep", &cfg, checks)?;
    let dir = out_dir(common.out.as_deref(), "sweep");
    let mut extra = Map::new();
    extra.insert("workers".into(), Value::from(workers));
    write_report(&dir, "sweep", &report, extra)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.job.to_string(),
                r.s.to_string(),
                r.seed.map(|s| s.to_string()).unwrap_or_default(),
                r.verdict.as_str().into(),
                format!("{:e}", r.final_mass),
                format!("{:e}", r.final_l2),
                format!("{:e}", r.min_cfl_margin),
                format!("{:e}", r.max_tail_error),
                r.content_hash.clone(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_table(
        &dir.join("jobs.csv"),
        &report.config_hash,
        &["job", "s", "seed", "verdict", "final_mass", "final_l2", "min_cfl_margin", "max_tail_error", "content_hash", "error"],
        &table,
    )?;
    print_summary(&report, &dir);
    Ok(report.overall)
}
