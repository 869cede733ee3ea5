//! Monte Carlo and exact geometry of cones from a past vertex to a union of
//! space-time boxes.

use crate::error::{param, Result};
use crate::quad::r_squared;
use crate::report::Verdict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Axis-aligned box `[t] x [x_0] (x [x_1])`; only the first `n` spatial axes are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeBox {
    pub t: [f64; 2],
    pub x: [[f64; 2]; 2],
}

impl SpaceTimeBox {
    pub fn volume(&self, n: usize) -> f64 {
        (0..n).fold(self.t[1] - self.t[0], |v, a| v * (self.x[a][1] - self.x[a][0]))
    }

    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        t >= self.t[0] && t <= self.t[1] && x.iter().enumerate().all(|(a, &c)| c >= self.x[a][0] && c <= self.x[a][1])
    }

    fn farthest_corner_norm(&self, n: usize) -> f64 {
        (0..n).map(|a| self.x[a][0].abs().max(self.x[a][1].abs()).powi(2)).sum::<f64>().sqrt()
    }
}

/// The set `S` whose intersection with the cone is measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndicatorSet {
    Empty,
    Everything,
    /// Union of full slabs `[a, b] x R^n`.
    TimeSlabs { slabs: Vec<[f64; 2]> },
    /// Cells of a uniform grid over `[t] x [x]^n`, row-major `[t][x_0][x_1]`.
    Grid { t: [f64; 2], x: [f64; 2], nt: usize, nx: usize, cells: Vec<bool> },
}

impl IndicatorSet {
    pub fn contains(&self, t: f64, x: &[f64]) -> bool {
        match self {
            IndicatorSet::Empty => false,
            IndicatorSet::Everything => true,
            IndicatorSet::TimeSlabs { slabs } => slabs.iter().any(|s| t >= s[0] && t <= s[1]),
            IndicatorSet::Grid { t: tr, x: xr, nt, nx, cells } => {
                let cell = |c: f64, r: &[f64; 2], m: usize| -> Option<usize> {
                    if c < r[0] || c > r[1] {
                        return None;
                    }
                    Some((((c - r[0]) / (r[1] - r[0]) * m as f64) as usize).min(m - 1))
                };
                let Some(mut idx) = cell(t, tr, *nt) else { return false };
                for &c in x {
                    match cell(c, xr, *nx) {
                        Some(i) => idx = idx * nx + i,
                        None => return false,
                    }
                }
                cells.get(idx).copied().unwrap_or(false)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeProblem {
    pub n: usize,
    pub vertex_t: f64,
    pub vertex_x: [f64; 2],
    pub base: Vec<SpaceTimeBox>,
    pub set: IndicatorSet,
    pub mu: f64,
}

/// Parameter samples per segment in [`segment_measure`].
pub const SEGMENT_SAMPLES: usize = 4096;
/// Base points at which the per-segment hypothesis is checked.
pub const HYPOTHESIS_SAMPLES: usize = 512;
pub const MIN_MC_SAMPLES: usize = 100_000;
const SHARD: usize = 1 << 14;

impl ConeProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.n == 1 || self.n == 2) {
            return param(format!("dimension {} not supported", self.n));
        }
        let xn = self.vertex_x[..self.n].iter().map(|c| c * c).sum::<f64>().sqrt();
        if !(self.vertex_t >= -5.0 && self.vertex_t <= -4.0 && xn <= 2.0) {
            return param("vertex must lie in [-5, -4] x B_2");
        }
        if self.base.is_empty() {
            return param("base must contain at least one box");
        }
        for b in &self.base {
            let ordered = b.t[0] < b.t[1] && (0..self.n).all(|a| b.x[a][0] < b.x[a][1]);
            if !ordered || b.t[0] < -2.0 || b.t[1] > 0.0 || b.farthest_corner_norm(self.n) > 2.0 + 1e-12 {
                return param(format!("box {b:?} is empty or leaves [-2, 0] x B_2"));
            }
        }
        if !(self.mu >= 0.0) {
            return param("mu must be non-negative");
        }
        if let IndicatorSet::Grid { nt, nx, cells, .. } = &self.set {
            if cells.len() != nt * nx.pow(self.n as u32) {
                return param("indicator grid has the wrong number of cells");
            }
        }
        Ok(())
    }

    /// Whether `(t, x)` lies on a segment from the vertex to a point of the base.
    pub fn in_cone(&self, t: f64, x: &[f64]) -> bool {
        let dt = t - self.vertex_t;
        if dt <= 0.0 {
            return false;
        }
        // p = vertex + (b - vertex) / lambda' with lambda' <= 1; solve for the
        // ray parameter lambda >= 1 at which vertex + lambda (p - vertex) enters a box.
        self.base.iter().any(|b| {
            let mut lo = 1.0f64;
            let mut hi = f64::INFINITY;
            lo = lo.max((b.t[0] - self.vertex_t) / dt);
            hi = hi.min((b.t[1] - self.vertex_t) / dt);
            for a in 0..self.n {
                let d = x[a] - self.vertex_x[a];
                let (p, q) = (b.x[a][0] - self.vertex_x[a], b.x[a][1] - self.vertex_x[a]);
                if d == 0.0 {
                    if p > 0.0 || q < 0.0 {
                        return false;
                    }
                } else {
                    let (u, w) = if d > 0.0 { (p / d, q / d) } else { (q / d, p / d) };
                    lo = lo.max(u);
                    hi = hi.min(w);
                }
            }
            lo <= hi
        })
    }

    /// Exact measure of the union of the base boxes.
    pub fn base_measure(&self) -> f64 {
        let axes = 1 + self.n;
        let coords: Vec<Vec<f64>> = (0..axes)
            .map(|a| {
                let mut c: Vec<f64> = self.base.iter().flat_map(|b| if a == 0 { b.t } else { b.x[a - 1] }).collect();
                c.sort_by(f64::total_cmp);
                c.dedup();
                c
            })
            .collect();
        let sizes: Vec<usize> = coords.iter().map(|c| c.len() - 1).collect();
        let total: usize = sizes.iter().product();
        let mut acc = 0.0;
        for flat in 0..total {
            let mut rest = flat;
            let mut mid = [0.0; 3];
            let mut vol = 1.0;
            for a in 0..axes {
                let i = rest % sizes[a];
                rest /= sizes[a];
                mid[a] = 0.5 * (coords[a][i] + coords[a][i + 1]);
                vol *= coords[a][i + 1] - coords[a][i];
            }
            if self.base.iter().any(|b| b.contains(mid[0], &mid[1..axes])) {
                acc += vol;
            }
        }
        acc
    }

    fn last_time(&self) -> f64 {
        self.base.iter().fold(f64::NEG_INFINITY, |m, b| m.max(b.t[1]))
    }

    fn sample_base(&self, rng: &mut ChaCha8Rng) -> (f64, [f64; 2]) {
        let vols: Vec<f64> = self.base.iter().map(|b| b.volume(self.n)).collect();
        let mut pick = rng.gen_range(0.0..vols.iter().sum::<f64>());
        let mut k = 0;
        while k + 1 < vols.len() && pick >= vols[k] {
            pick -= vols[k];
            k += 1;
        }
        let b = &self.base[k];
        let mut x = [0.0; 2];
        for a in 0..self.n {
            x[a] = rng.gen_range(b.x[a][0]..b.x[a][1]);
        }
        (rng.gen_range(b.t[0]..b.t[1]), x)
    }

    /// Base corners followed by random base points.
    fn hypothesis_points(&self, count: usize, seed: u64) -> Vec<(f64, [f64; 2])> {
        let mut pts = Vec::with_capacity(count + 8 * self.base.len());
        for b in &self.base {
            for corner in 0..(1usize << (1 + self.n)) {
                let mut x = [0.0; 2];
                for a in 0..self.n {
                    x[a] = b.x[a][(corner >> (a + 1)) & 1];
                }
                pts.push((b.t[corner & 1], x));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            pts.push(self.sample_base(&mut rng));
        }
        pts
    }
}

pub fn segment_length(problem: &ConeProblem, b_t: f64, b_x: &[f64]) -> f64 {
    let d2: f64 = (0..problem.n).map(|a| (b_x[a] - problem.vertex_x[a]).powi(2)).sum();
    ((b_t - problem.vertex_t).powi(2) + d2).sqrt()
}

/// `H^1` measure of the segment from the vertex to `b` inside `S`, by midpoint
/// sampling in the segment parameter.
pub fn segment_measure(problem: &ConeProblem, b_t: f64, b_x: &[f64]) -> Result<f64> {
    let n = problem.n;
    let dt = b_t - problem.vertex_t;
    if dt == 0.0 {
        return param("degenerate segment");
    }
    let mut slope = [0.0; 2];
    for a in 0..n {
        slope[a] = (b_x[a] - problem.vertex_x[a]) / dt;
    }
    let speed2: f64 = slope[..n].iter().map(|c| c * c).sum();
    assert!(speed2.sqrt() <= 2.0 + 1e-12, "segment slope {} exceeds 2", speed2.sqrt());
    let length = dt.abs() * (1.0 + speed2).sqrt();
    let mut hits = 0usize;
    let mut x = [0.0; 2];
    for i in 0..SEGMENT_SAMPLES {
        let tau = (i as f64 + 0.5) / SEGMENT_SAMPLES as f64;
        let t = problem.vertex_t + tau * dt;
        for a in 0..n {
            x[a] = problem.vertex_x[a] + tau * (b_x[a] - problem.vertex_x[a]);
        }
        if problem.set.contains(t, &x[..n]) {
            hits += 1;
        }
    }
    Ok(length * hits as f64 / SEGMENT_SAMPLES as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeCheck {
    pub measure: f64,
    pub std_error: f64,
    /// `|B| mu^2 / 80`.
    pub bound: f64,
    pub base_measure: f64,
    /// `measure / bound`, when the bound is positive.
    pub slack: Option<f64>,
    /// Smallest sampled per-segment measure.
    pub hypothesis_min: f64,
    pub samples: usize,
    pub verdict: Verdict,
}

/// Estimates `|C ∩ S|` and compares it with `|B| mu^2 / 80`.
pub fn cone_measure_check(problem: &ConeProblem, samples: usize, seed: u64) -> Result<ConeCheck> {
    problem.validate()?;
    if samples < MIN_MC_SAMPLES {
        return param(format!("sample budget {samples} is below {MIN_MC_SAMPLES}"));
    }
    let n = problem.n;
    let base_measure = problem.base_measure();
    let bound = base_measure * problem.mu * problem.mu / 80.0;
    let hyp = problem.hypothesis_points(HYPOTHESIS_SAMPLES, seed ^ 0x9e37_79b9_7f4a_7c15);
    // Each measure is credited one parameter sample of quantization slack.
    let measures: Vec<(f64, f64)> = hyp
        .par_iter()
        .map(|(t, x)| Ok((segment_measure(problem, *t, &x[..n])?, segment_length(problem, *t, &x[..n]) / SEGMENT_SAMPLES as f64)))
        .collect::<Result<_>>()?;
    let hypothesis_min = measures.iter().fold(f64::INFINITY, |m, p| m.min(p.0));
    let hypothesis_met = measures.iter().all(|&(m, q)| m + q >= problem.mu);

    let (t_lo, t_hi) = (problem.vertex_t, problem.last_time());
    let box_volume = (t_hi - t_lo) * 4f64.powi(n as i32);
    let shards = samples.div_ceil(SHARD);
    let hits: Vec<u64> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let count = SHARD.min(samples - k * SHARD);
            let mut h = 0u64;
            let mut x = [0.0; 2];
            for _ in 0..count {
                let t = rng.gen_range(t_lo..t_hi);
                for c in x.iter_mut().take(n) {
                    *c = rng.gen_range(-2.0..2.0);
                }
                if problem.set.contains(t, &x[..n]) && problem.in_cone(t, &x[..n]) {
                    h += 1;
                }
            }
            h
        })
        .collect();
    let p = hits.iter().sum::<u64>() as f64 / samples as f64;
    let measure = box_volume * p;
    let std_error = box_volume * (p * (1.0 - p) / samples as f64).sqrt();
    let verdict = if !hypothesis_met {
        Verdict::Vacuous
    } else {
        Verdict::from_bool(measure >= bound - 3.0 * std_error)
    };
    Ok(ConeCheck {
        measure,
        std_error,
        bound,
        base_measure,
        slack: (bound > 0.0).then(|| measure / bound),
        hypothesis_min,
        samples,
        verdict,
    })
}

/// Cross-sectional measure of the cone at time `t`, by midpoint counting on a
/// grid of `resolution` points per axis over `[-2, 2]^n`.
pub fn cross_section(problem: &ConeProblem, t: f64, resolution: usize) -> f64 {
    let n = problem.n;
    let h = 4.0 / resolution as f64;
    let total = resolution.pow(n as u32);
    let count = (0..total)
        .filter(|&flat| {
            let mut x = [0.0; 2];
            let mut rest = flat;
            for c in x.iter_mut().take(n) {
                *c = -2.0 + ((rest % resolution) as f64 + 0.5) * h;
                rest /= resolution;
            }
            problem.in_cone(t, &x[..n])
        })
        .count();
    count as f64 * h.powi(n as i32)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionProfile {
    pub times: Vec<f64>,
    pub areas: Vec<f64>,
    /// Fit of the area against `(t - t0)^n` on `(t0, -2)`.
    pub r_squared: f64,
    pub at_minus_two: f64,
    pub base_measure: f64,
}

impl CrossSectionProfile {
    pub fn quarter_bound_holds(&self) -> bool {
        self.at_minus_two >= self.base_measure / 4.0
    }
}

/// `int_{-2}^0 ((t - t0) / (-2 - t0))^n dt`. Cross-sections grow like
/// `(t - t0)^n`, so `|B| <= A(-2)` times this factor. It is at most 4 for `n = 1`
/// but reaches 14/3 for `n = 2`, `t0 = -4`.
pub fn section_ratio_bound(n: usize, t0: f64) -> f64 {
    let d = -2.0 - t0;
    let k = n as i32;
    ((-t0).powi(k + 1) - d.powi(k + 1)) / ((k + 1) as f64 * d.powi(k))
}

pub fn cross_section_profile(problem: &ConeProblem, points: usize, resolution: usize) -> Result<CrossSectionProfile> {
    problem.validate()?;
    if points < 3 {
        return param("need at least 3 time points");
    }
    let t0 = problem.vertex_t;
    let times: Vec<f64> = (1..=points).map(|i| t0 + (-2.0 - t0) * i as f64 / points as f64).collect();
    let areas: Vec<f64> = times.iter().map(|&t| cross_section(problem, t, resolution)).collect();
    let powers: Vec<f64> = times.iter().map(|t| (t - t0).powi(problem.n as i32)).collect();
    let r2 = r_squared(&powers, &areas);
    Ok(CrossSectionProfile {
        at_minus_two: *areas.last().unwrap_or(&0.0),
        times,
        areas,
        r_squared: r2,
        base_measure: problem.base_measure(),
    })
}

/// Random instance: a vertex, one to three base boxes and a random cell set,
/// with `mu` set to 0.8 of the smallest sampled per-segment measure.
pub fn random_instance(n: usize, seed: u64) -> Result<ConeProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = if n == 1 { 2.0 } else { std::f64::consts::FRAC_1_SQRT_2 * 2.0 };
    let mut vertex_x = [0.0; 2];
    loop {
        for c in vertex_x.iter_mut().take(n) {
            *c = rng.gen_range(-2.0..2.0);
        }
        if vertex_x[..n].iter().map(|c| c * c).sum::<f64>() <= 4.0 {
            break;
        }
    }
    let vertex_t = rng.gen_range(-5.0..-4.0);
    let boxes = rng.gen_range(1..=3);
    let mut base = Vec::with_capacity(boxes);
    for _ in 0..boxes {
        let span = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| {
            let a = rng.gen_range(lo..hi);
            let b = rng.gen_range(lo..hi);
            let (a, b) = (a.min(b), a.max(b));
            if b - a < 0.05 {
                let a = a.min(hi - 0.05);
                [a, a + 0.05]
            } else {
                [a, b]
            }
        };
        let t = span(-2.0, 0.0, &mut rng);
        let mut x = [[0.0, 0.0]; 2];
        for c in x.iter_mut().take(n) {
            *c = span(-half, half, &mut rng);
        }
        if t[1] > t[0] && (0..n).all(|a| x[a][1] > x[a][0]) {
            base.push(SpaceTimeBox { t, x });
        }
    }
    if base.is_empty() {
        base.push(SpaceTimeBox { t: [-1.0, 0.0], x: [[-0.5, 0.5]; 2] });
    }
    let (nt, nx) = (40, if n == 1 { 32 } else { 16 });
    let density = rng.gen_range(0.3..0.9);
    let cells = (0..nt * nx * if n == 2 { nx } else { 1 }).map(|_| rng.gen_bool(density)).collect();
    let set = IndicatorSet::Grid { t: [-5.0, 0.0], x: [-2.0, 2.0], nt, nx, cells };
    let mut problem = ConeProblem { n, vertex_t, vertex_x, base, set, mu: 0.0 };
    problem.validate()?;
    let pts = problem.hypothesis_points(HYPOTHESIS_SAMPLES, seed.wrapping_add(1));
    let mut least = f64::INFINITY;
    for (t, x) in pts {
        least = least.min(segment_measure(&problem, t, &x[..n])?);
    }
    problem.mu = 0.8 * least;
    Ok(problem)
}

/// Bundled instance: a single box crossed by a full slab of time-thickness `mu`
/// lying between the vertex and the base.
pub fn slab_instance(n: usize, mu: f64) -> ConeProblem {
    ConeProblem {
        n,
        vertex_t: -4.5,
        vertex_x: [0.0; 2],
        base: vec![SpaceTimeBox { t: [-1.0, 0.0], x: [[-0.5, 0.5]; 2] }],
        set: IndicatorSet::TimeSlabs { slabs: vec![[-3.0, -3.0 + mu]] },
        mu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn section_ratio_values() {
        assert!((section_ratio_bound(1, -4.0) - 3.0).abs() < 1e-14);
        assert!((section_ratio_bound(2, -4.0) - 14.0 / 3.0).abs() < 1e-14);
        assert!((section_ratio_bound(1, -5.0) - 8.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn segment_measure_trivial_sets() {
        let mut p = slab_instance(1, 0.5);
        p.set = IndicatorSet::Empty;
        assert_eq!(segment_measure(&p, -1.0, &[0.3]).unwrap(), 0.0);
        p.set = IndicatorSet::Everything;
        let len = (3.5f64 * 3.5 + 0.09).sqrt();
        assert!((segment_measure(&p, -1.0, &[0.3]).unwrap() - len).abs() < 1e-12);
    }

    #[test]
    fn slab_arc_length() {
        let p = slab_instance(2, 0.4);
        let b = (-0.5, [0.4, -0.3]);
        let vbar = (0.16f64 + 0.09).sqrt() / 4.0;
        let want = 0.4 * (1.0 + vbar * vbar).sqrt();
        let got = segment_measure(&p, b.0, &b.1).unwrap();
        assert!((got / want - 1.0).abs() < 0.01, "{got} {want}");
    }

    #[test]
    fn degenerate_segment_rejected() {
        let p = slab_instance(1, 0.5);
        assert!(segment_measure(&p, p.vertex_t, &[0.0]).is_err());
    }

    #[test]
    fn union_measure_counts_overlap_once() {
        let mut p = slab_instance(2, 0.5);
        p.base = vec![
            SpaceTimeBox { t: [-1.0, 0.0], x: [[0.0, 1.0], [0.0, 1.0]] },
            SpaceTimeBox { t: [-0.5, 0.0], x: [[0.5, 1.2], [0.0, 1.0]] },
        ];
        let want = 1.0 + 0.5 * 0.7 - 0.5 * 0.5;
        assert!((p.base_measure() - want).abs() < 1e-12);
    }

    #[test]
    fn cone_contains_segments_and_base() {
        let p = slab_instance(1, 0.5);
        assert!(p.in_cone(-0.5, &[0.2]));
        assert!(p.in_cone(-2.75, &[0.0]));
        assert!(!p.in_cone(-4.6, &[0.0]));
        assert!(!p.in_cone(-2.75, &[0.4]));
        assert!(!p.in_cone(0.1, &[0.0]));
    }

    #[test]
    fn zero_mu_always_passes() {
        let mut p = slab_instance(1, 0.5);
        p.mu = 0.0;
        let c = cone_measure_check(&p, MIN_MC_SAMPLES, 3).unwrap();
        assert_eq!(c.bound, 0.0);
        assert_eq!(c.verdict, Verdict::Pass);
    }

    #[test]
    fn small_budget_rejected() {
        assert!(cone_measure_check(&slab_instance(1, 0.5), 1000, 1).is_err());
    }

    #[test]
    fn slab_instance_passes_with_slack() {
        for n in [1, 2] {
            let p = slab_instance(n, 0.5);
            let c = cone_measure_check(&p, 200_000, 11).unwrap();
            assert_eq!(c.verdict, Verdict::Pass);
            assert!(c.slack.unwrap() >= 1.0);
            assert!(c.hypothesis_min >= 0.499);
        }
    }

    #[test]
    fn unmet_hypothesis_is_vacuous() {
        let mut p = slab_instance(1, 0.5);
        p.mu = 0.7;
        assert_eq!(cone_measure_check(&p, MIN_MC_SAMPLES, 2).unwrap().verdict, Verdict::Vacuous);
    }

    #[test]
    fn exact_slab_measure() {
        // 1-D cone at time t has width (t + 4.5) / 3.5 for the unit box up to t = -1.
        let p = slab_instance(1, 0.5);
        let exact = (((-2.5f64 + 4.5).powi(2) - (-3.0f64 + 4.5).powi(2)) / 2.0) / 3.5;
        let c = cone_measure_check(&p, 400_000, 5).unwrap();
        assert!((c.measure - exact).abs() < 4.0 * c.std_error, "{} {exact} {}", c.measure, c.std_error);
    }

    #[test]
    fn deterministic_given_seed() {
        let p = random_instance(2, 8).unwrap();
        let a = cone_measure_check(&p, 150_000, 4).unwrap();
        let b = cone_measure_check(&p, 150_000, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cross_section_scales_with_power_of_time() {
        for n in [1, 2] {
            let prof = cross_section_profile(&slab_instance(n, 0.5), 8, if n == 1 { 4000 } else { 800 }).unwrap();
            assert!(prof.r_squared >= 0.999, "n = {n}: {}", prof.r_squared);
            assert!(prof.quarter_bound_holds());
        }
    }

    #[test]
    fn standard_error_shrinks_with_samples() {
        let p = random_instance(1, 21).unwrap();
        let a = cone_measure_check(&p, 100_000, 1).unwrap();
        let b = cone_measure_check(&p, 400_000, 1).unwrap();
        let ratio = b.std_error / a.std_error;
        assert!((ratio / 0.5 - 1.0).abs() < 0.3, "{ratio}");
    }
}
