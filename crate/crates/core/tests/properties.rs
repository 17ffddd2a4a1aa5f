use proptest::prelude::*;

use reflect_core::coeffs::{BoundaryBehavior, DiffusionCoefficients};
use reflect_core::cones::{check_point, decompose};
use reflect_core::controlled::{simulate_controlled, Stop};
use reflect_core::fixtures;
use reflect_core::geometry::{BoundingBox, DomainSpec, FaceKind, FaceSpec, Reflection};
use reflect_core::kernel::{Kernel, StepConfig};
use reflect_core::stats::ks_two_sample;
use reflect_core::testfn::TestFunction;
use reflect_core::timechange::time_change;

fn unit(a: f64) -> Vec<f64> {
    vec![a.cos(), a.sin()]
}

/// Wedge at the origin: faces `<n_i, x> > 0` with constant fields, all
/// expressed in coordinates rotated by `rot`.
fn wedge(normals: [f64; 2], tilts: [f64; 2], rot: f64, swap: bool) -> DomainSpec {
    let mut faces: Vec<FaceSpec> = (0..2)
        .map(|i| FaceSpec {
            kind: FaceKind::Halfspace {
                normal: unit(normals[i] + rot),
                offset: 0.0,
            },
            reflection: Reflection::Constant(unit(normals[i] + tilts[i] + rot)),
            label: None,
        })
        .collect();
    if swap {
        faces.swap(0, 1);
    }
    DomainSpec {
        dim: 2,
        faces,
        working_margin: 0.1,
        boundary_tol: None,
        probe_radius: None,
        bbox: BoundingBox {
            lo: vec![-1.0, -1.0],
            hi: vec![1.0, 1.0],
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cone_verdict_is_invariant_under_relabeling_and_rotation(
        opening in 0.3f64..2.8,
        t0 in -1.4f64..1.4,
        t1 in -1.4f64..1.4,
        rot in 0.0f64..std::f64::consts::TAU,
    ) {
        let normals = [0.0, std::f64::consts::PI - opening];
        let base = check_point(&wedge(normals, [t0, t1], 0.0, false), &[0.0, 0.0]).unwrap();
        prop_assume!(base.condition_b.margin.abs() > 1e-6 && base.condition_c.beta.abs() > 1e-6);
        prop_assume!(base.min_normal_component.abs() > 1e-6);
        for (r, swap) in [(0.0, true), (rot, false), (rot, true)] {
            let other = check_point(&wedge(normals, [t0, t1], r, swap), &[0.0, 0.0]).unwrap();
            prop_assert_eq!(other.holds(), base.holds());
            prop_assert!((other.condition_b.margin - base.condition_b.margin).abs() < 1e-7);
            prop_assert!((other.condition_c.beta - base.condition_c.beta).abs() < 1e-7);
        }
    }

    #[test]
    fn decomposition_reconstructs_with_least_norm(
        dim in 2usize..4,
        raw in prop::collection::vec(-1.0f64..1.0, 12),
        weights in prop::collection::vec(0.0f64..2.0, 4),
        p in 1usize..5,
    ) {
        let gens: Vec<Vec<f64>> = (0..p).map(|i| raw[i * 3..i * 3 + dim].to_vec()).collect();
        prop_assume!(gens.iter().all(|g| g.iter().map(|v| v * v).sum::<f64>() > 0.01));
        let u: Vec<f64> = (0..dim)
            .map(|c| (0..p).map(|i| weights[i] * gens[i][c]).sum())
            .collect();
        let w = decompose(&gens, &u).unwrap();
        prop_assert!(w.iter().all(|v| *v >= 0.0));
        let res: f64 = (0..dim)
            .map(|c| ((0..p).map(|i| w[i] * gens[i][c]).sum::<f64>() - u[c]).powi(2))
            .sum::<f64>()
            .sqrt();
        prop_assert!(res <= 1e-9, "residual {}", res);
        let nw: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let no: f64 = weights[..p].iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(nw <= no + 1e-8, "{} > {}", nw, no);
    }

    #[test]
    fn test_function_derivatives_match_finite_differences(
        x in prop::collection::vec(-0.8f64..0.8, 2),
        rate in prop::collection::vec(-1.5f64..1.5, 2),
        c in prop::collection::vec(-0.3f64..0.3, 2),
        height in 0.1f64..2.0,
    ) {
        let f = TestFunction::Sum {
            terms: vec![
                TestFunction::exponential(0.7, rate),
                TestFunction::Scaled {
                    factor: -1.3,
                    inner: Box::new(TestFunction::Bump { center: c, radius: 1.5, height }),
                },
            ],
        };
        let h = 1e-5;
        let g = f.gradient(&x);
        let hs = f.hessian(&x);
        for k in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (f.eval(&xp) - f.eval(&xm)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()));
            let gp = f.gradient(&xp);
            let gm = f.gradient(&xm);
            for j in 0..2 {
                let fd2 = (gp[j] - gm[j]) / (2.0 * h);
                prop_assert!((fd2 - hs[j * 2 + k]).abs() < 1e-5 * (1.0 + hs[j * 2 + k].abs()));
            }
        }
        let lap = hs[0] + hs[3];
        let co = DiffusionCoefficients::brownian(1.0);
        prop_assert!((f.generator(&co, &x) - 0.5 * lap).abs() < 1e-10 * (1.0 + lap.abs()));
    }

    #[test]
    fn clock_identity_and_tau_monotonicity(seed in 0u64..1000, target in 0.01f64..0.2) {
        let dom = fixtures::unit_box();
        let co = DiffusionCoefficients::brownian(1.0);
        let bh = BoundaryBehavior::ObliqueReflection;
        let k = Kernel::new(&dom, &co, &bh, StepConfig::new(1e-3, 1e-2));
        let p = simulate_controlled(&k, &[0.0, 1.0], Stop::Lambda0(target), seed, 0).unwrap();
        prop_assert!(p.clock_residual() <= 1e-9);
        prop_assert!((p.lambda0 - target).abs() <= 1e-12);
        for r in &p.records {
            prop_assert!((r.lambda0 + r.lambda1 - r.s).abs() <= 1e-9 * r.s.max(1.0));
        }
        let cp = time_change(&p, 0.01).unwrap();
        let mut last = f64::NEG_INFINITY;
        let mut t = 0.0;
        while t <= cp.horizon() {
            let v = cp.tau.eval(t).unwrap();
            prop_assert!(v >= last);
            last = v;
            t += 0.005;
        }
        for s in &cp.samples {
            prop_assert!(dom.exterior_depth(&s.x) <= 2.0 * 1e-2);
        }
    }

    #[test]
    fn ks_is_symmetric_and_zero_on_equal_samples(a in prop::collection::vec(-5.0f64..5.0, 5..60), b in prop::collection::vec(-5.0f64..5.0, 5..60)) {
        let same = ks_two_sample(&a, &a);
        prop_assert_eq!(same.statistic, 0.0);
        prop_assert!(same.p_value > 0.999);
        let ab = ks_two_sample(&a, &b);
        let ba = ks_two_sample(&b, &a);
        prop_assert!((ab.statistic - ba.statistic).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}
