//! Randomized invariants.

use kinlab::conegeom::{random_instance, segment_measure, segment_length};
use kinlab::cutoffs::{build_cutoff_family, indicator_bound_failures};
use kinlab::diagnostics::{critical_exponent, degiorgi_levels, exponents, recursion_gamma};
use kinlab::fracops::MultiplierOp;
use kinlab::kernel::{bilinear_b, cross_term, validate_bounds, CollisionOp, Kernel, Modulation};
use kinlab::kinetic_scaling::{KineticCylinder, KineticShift, ScalingParams};
use kinlab::phase::{make_grid, Field, VGrid};
use kinlab::report::config_hash;
use kinlab::solver::{run, InitialSpec, RunConfig, SourceSpec, Stepper};
use proptest::prelude::*;
use std::f64::consts::PI;

fn bump(v: f64, c: f64, r: f64) -> f64 {
    let q = (v - c) / r;
    if q.abs() < 1.0 {
        (1.0 - q * q).powi(3)
    } else {
        0.0
    }
}

fn kernel_strategy() -> impl Strategy<Value = Kernel> {
    (0.05f64..0.49, 1.5f64..4.0, 0usize..3, -0.3f64..0.3, 0.0f64..6.0).prop_map(|(s, kappa, family, amp, phase)| match family {
        0 => Kernel::homogeneous(s, kappa, 1.0),
        1 => Kernel::truncated(s, kappa, 1.0 / kappa),
        _ => Kernel::modulated(s, kappa, 1.0, Modulation { amplitude: amp, radius: 3.0, omega: 1.0, phase }),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_symmetries(k in kernel_strategy(), t in -6.0f64..0.0, x in -3.0f64..3.0, v in -8.0f64..8.0, h in 0.01f64..8.0) {
        let a = k.eval(t, &[x], &[v], &[v + h]);
        let b = k.eval(t, &[x], &[v + h], &[v]);
        let c = k.eval(t, &[x], &[v], &[v - h]);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        prop_assert!((a - c).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn admissible_kernels_pass_certificate(k in kernel_strategy(), seed in any::<u64>()) {
        let cert = validate_bounds(&k, 1, 1000, seed).unwrap();
        prop_assert!(cert.passed());
    }

    #[test]
    fn bilinear_form_is_symmetric_and_coercive(k in kernel_strategy(), c1 in -1.5f64..1.5, c2 in -1.5f64..1.5, r1 in 0.5f64..2.5, r2 in 0.5f64..2.5) {
        let vg = VGrid::new(1, 64, 8.0).unwrap();
        let op = CollisionOp::new(&k, &vg).unwrap();
        let f = vg.sample(|v| bump(v[0], c1, r1));
        let g = vg.sample(|v| bump(v[0], c2, r2) - 0.5 * bump(v[0], -c2, r1));
        let (t, x) = (-0.5, [0.2]);
        let bfg = bilinear_b(&op, &f, &g, t, &x).unwrap();
        let bgf = bilinear_b(&op, &g, &f, t, &x).unwrap();
        let bff = bilinear_b(&op, &f, &f, t, &x).unwrap();
        prop_assert!((bfg - bgf).abs() <= 1e-10 * (1.0 + bfg.abs()));
        prop_assert!(bff >= 0.0);
        // Pairing identity: int g L f = -B(f, g).
        let lf = op.apply(&f, t, &x).unwrap().values;
        let pairing: f64 = g.iter().zip(&lf).map(|(a, b)| a * b).sum::<f64>() * vg.cell_volume();
        prop_assert!((pairing + bfg).abs() <= 1e-8 * (1.0 + bfg.abs()), "{} vs {}", pairing, -bfg);
    }

    #[test]
    fn cross_term_is_nonnegative(k in kernel_strategy(), cut in -1.5f64..1.5, gap in 0.05f64..0.5) {
        let vg = VGrid::new(1, 128, 8.0).unwrap();
        let op = CollisionOp::new(&k, &vg).unwrap();
        let lo = 0.5 * (-3.0 + cut - gap);
        let hi = 0.5 * (cut + gap + 3.0);
        let fp = vg.sample(|v| bump(v[0], lo, 0.5 * (cut - gap + 3.0)));
        let fm = vg.sample(|v| bump(v[0], hi, 0.5 * (3.0 - cut - gap)));
        let ct = cross_term(&op, &fp, &fm, -1.0, &[0.0]).unwrap();
        prop_assert!(ct.value >= -1e-9);
        prop_assert!(ct.bound_holds);
    }

    #[test]
    fn exponent_identities(n in 1usize..=2, frac in 0.02f64..0.98, stretch in 1.001f64..5.0) {
        let s = frac * (0.5 * n as f64).min(1.0);
        let r0 = critical_exponent(n, s);
        prop_assert!(r0 > n as f64 + 1.0 + n as f64 / s);
        let t = exponents(n, s, r0 * stretch).unwrap();
        prop_assert!(t.q > 2.0);
        prop_assert!(t.theta_residual < 1e-12);
        prop_assert!(t.theta_star > 0.0 && t.theta_star < 1.0);
        // gamma is increasing in r and equals 1 at the recorded crossing.
        let g = recursion_gamma(n, s, t.gamma_crossing).unwrap();
        prop_assert!((g - 1.0).abs() < 1e-12);
        prop_assert!(recursion_gamma(n, s, 2.0 * r0).unwrap() > recursion_gamma(n, s, r0).unwrap());
    }

    #[test]
    fn cutoffs_are_monotone_and_ordered(s in 0.05f64..0.49, theta in 0.01f64..0.99, r in 0.0f64..50.0, dr in 0.0f64..5.0) {
        let fam = build_cutoff_family(s, 1).unwrap();
        let psi = fam.psi_theta(theta);
        prop_assert!(fam.eval(&psi, r + dr) >= fam.eval(&psi, r));
        prop_assert!(fam.eval(&fam.psi_one(), r) >= 0.0);
        // Level cutoffs increase with k.
        for k in 0..10 {
            prop_assert!(fam.eval(&fam.level_cutoff(k + 1), r) >= fam.eval(&fam.level_cutoff(k), r));
        }
    }

    #[test]
    fn indicator_bound_holds_pointwise(amp in 0.1f64..5.0, freq in 0.2f64..4.0, shift in -2.0f64..3.0, k in 1u32..26) {
        let fam = build_cutoff_family(0.3, 1).unwrap();
        let vg = VGrid::new(1, 128, 8.0).unwrap();
        let f = vg.sample(|v| amp * (freq * v[0]).sin() + shift);
        prop_assert_eq!(indicator_bound_failures(&fam, &vg, &f, k), 0);
    }

    #[test]
    fn level_energies_are_monotone(amp in 0.1f64..4.0, width in 0.3f64..3.0, tilt in -0.5f64..0.5) {
        let grid = make_grid(1, 2.0 * PI, 8.0, 16, 64, -2.0, 0.0, 9).unwrap();
        let fam = build_cutoff_family(0.3, 1).unwrap();
        let f = Field::from_fn(&grid, |t, x, v| amp * (1.0 + tilt * t) * (-(v[0] * v[0]) / (width * width)).exp() * (1.0 + 0.2 * x[0].cos()));
        let rep = degiorgi_levels(&f, &fam, 20).unwrap();
        prop_assert!(rep.monotone);
        prop_assert_eq!(rep.indicator_failures, 0);
    }

    #[test]
    fn bessel_powers_compose_to_identity(sigma in 0.1f64..2.0, c in -2.0f64..2.0) {
        let vg = VGrid::new(1, 128, 8.0).unwrap();
        let f = vg.sample(|v| bump(v[0], c, 2.0));
        let up = MultiplierOp::bessel_pow(sigma).unwrap().apply(&vg, &f);
        let back = MultiplierOp::bessel_pow(-sigma).unwrap().apply(&vg, &up);
        let err = f.iter().zip(&back).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn galilean_shifts_compose_associatively(a in prop::array::uniform5(-1.0f64..1.0), b in prop::array::uniform5(-1.0f64..1.0), c in prop::array::uniform5(-1.0f64..1.0)) {
        let mk = |p: [f64; 5]| KineticShift { t: p[0], x: [p[1], p[2]], v: [p[3], p[4]] };
        let (za, zb, zc) = (mk(a), mk(b), mk(c));
        let left = za.compose(&zb).compose(&zc);
        let right = za.compose(&zb.compose(&zc));
        prop_assert!((left.t - right.t).abs() < 1e-12);
        for k in 0..2 {
            prop_assert!((left.x[k] - right.x[k]).abs() < 1e-12 && (left.v[k] - right.v[k]).abs() < 1e-12);
        }
        // Applying the composite equals applying one shift after the other.
        let (t1, x1, v1) = zb.apply(0.3, &[0.1, -0.2], &[0.5, 0.4]);
        let (t2, x2, v2) = za.apply(t1, &x1, &v1);
        let (t3, x3, v3) = za.compose(&zb).apply(0.3, &[0.1, -0.2], &[0.5, 0.4]);
        prop_assert!((t2 - t3).abs() < 1e-12 && (x2[0] - x3[0]).abs() < 1e-12 && (v2[1] - v3[1]).abs() < 1e-12);
    }

    #[test]
    fn cylinders_nest(r1 in 0.05f64..1.0, grow in 1.0f64..3.0, t in -2.0f64..0.0, x in -2.0f64..2.0, v in -2.0f64..2.0, s in 0.05f64..0.49) {
        let z = KineticShift { t: -1.0, x: [0.1, 0.0], v: [0.3, 0.0] };
        let small = KineticCylinder { center: z, radius: r1, s };
        let big = KineticCylinder { radius: r1 * grow, ..small };
        if small.contains(t, &[x], &[v], f64::INFINITY) {
            prop_assert!(big.contains(t, &[x], &[v], f64::INFINITY));
        }
    }

    #[test]
    fn scaling_factor_is_monotone_in_epsilon(e1 in 0.01f64..1.0, e2 in 0.01f64..1.0, s in 0.05f64..0.49, r in 1.0f64..200.0) {
        let p = |e| ScalingParams { epsilon: e, s, r, n: 1 };
        let (a, b) = (p(e1).source_factor(), p(e2).source_factor());
        let exponent = 2.0 * s * (1.0 - (2.0 + 1.0 / s) / r);
        if exponent > 0.0 && e1 < e2 {
            prop_assert!(a <= b);
        }
        prop_assert!(a > 0.0 && b > 0.0);
    }

    #[test]
    fn segment_measure_is_bounded_by_length(seed in 0u64..1000, u in 0.0f64..1.0, w in 0.0f64..1.0) {
        let p = random_instance(1, seed).unwrap();
        let b = &p.base[0];
        let (bt, bx) = (b.t[0] + u * (b.t[1] - b.t[0]), b.x[0][0] + w * (b.x[0][1] - b.x[0][0]));
        let m = segment_measure(&p, bt, &[bx]).unwrap();
        prop_assert!(m >= 0.0 && m <= segment_length(&p, bt, &[bx]) + 1e-12);
        prop_assert!(p.in_cone(bt, &[bx]));
        let vols: f64 = p.base.iter().map(|b| b.volume(1)).sum();
        let biggest = p.base.iter().map(|b| b.volume(1)).fold(0.0, f64::max);
        let u_meas = p.base_measure();
        prop_assert!(u_meas <= vols + 1e-12 && u_meas >= biggest - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solver_conserves_mass(seed in any::<u64>(), s in 0.1f64..0.45) {
        let grid = make_grid(1, 2.0 * PI, 8.0, 16, 64, 0.0, 0.2, 2).unwrap();
        let cfg = RunConfig {
            grid,
            kernel: Kernel::homogeneous(s, 2.0, 1.0),
            source: SourceSpec::Zero,
            source_r: f64::INFINITY,
            initial: InitialSpec::Rough { amplitude: 1.0, modes: 12, seed },
            stepper: Stepper::SpectralExponential,
            dt: 0.05,
            record_every: 1,
            c_stab: 0.25,
        };
        let traj = run(&cfg).unwrap();
        let mass = |k: usize| traj.field.time_slice(k).iter().sum::<f64>();
        let scale: f64 = traj.field.time_slice(0).iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        let last = traj.field.grid.nt - 1;
        prop_assert!((mass(last) - mass(0)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn config_hash_tracks_content(seed in any::<u64>(), other in any::<u64>()) {
        let spec = |seed| InitialSpec::Rough { amplitude: 1.0, modes: 4, seed };
        prop_assert_eq!(config_hash(&spec(seed)).unwrap(), config_hash(&spec(seed)).unwrap());
        if seed != other {
            prop_assert_ne!(config_hash(&spec(seed)).unwrap(), config_hash(&spec(other)).unwrap());
        }
    }
}
