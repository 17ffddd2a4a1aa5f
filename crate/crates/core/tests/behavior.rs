use std::f64::consts::FRAC_PI_4;

use reflect_core::coeffs::{BoundaryBehavior, DiffusionCoefficients, JumpKernel};
use reflect_core::controlled::{restart_path, simulate_controlled, Stop};
use reflect_core::fixtures;
use reflect_core::kernel::{Kernel, StepConfig};
use reflect_core::parallel::map_paths;
use reflect_core::resolvent::{estimate_vh, Estimator, ResolventRun};
use reflect_core::sder::{controlled_to_patchwork, simulate_sder, PatchworkMode};
use reflect_core::testfn::TestFunction;
use reflect_core::timechange::time_change;
use reflect_core::Error;

fn bm() -> DiffusionCoefficients {
    DiffusionCoefficients::brownian(1.0)
}

const REFLECT: BoundaryBehavior = BoundaryBehavior::ObliqueReflection;

#[test]
fn constrained_paths_stay_within_two_delta_of_the_lens() {
    let dom = fixtures::lens(FRAC_PI_4);
    let co = bm();
    let delta = 1e-2;
    let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-3, delta));
    let worst = map_paths(10_000, 4, |i| {
        let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Lambda0(0.05), 17, i)?;
        let cp = time_change(&p, 0.0)?;
        Ok(cp
            .knots
            .iter()
            .map(|kn| dom.exterior_depth(&kn.x))
            .fold(0.0, f64::max))
    })
    .unwrap()
    .into_iter()
    .fold(0.0, f64::max);
    assert!(worst <= 2.0 * delta, "{worst}");
}

#[test]
fn interior_clock_keeps_pace_with_total_time() {
    // lambda0 grows without bound: over a fixed total-time budget its share
    // stays away from zero, and more budget buys more lambda0.
    let dom = fixtures::lens(FRAC_PI_4);
    let co = bm();
    let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-3, 1e-2));
    let mean_l0 = |budget: f64| {
        let v = map_paths(50, 2, |i| {
            let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Budget(budget), 5, i)?;
            assert!(p.s >= budget);
            Ok((p.lambda0, p.lambda0 / p.s))
        })
        .unwrap();
        let n = v.len() as f64;
        (
            v.iter().map(|x| x.0).sum::<f64>() / n,
            v.iter().map(|x| x.1).sum::<f64>() / n,
        )
    };
    let short = mean_l0(0.5);
    let long = mean_l0(2.0);
    assert!(short.1 > 0.05 && long.1 > 0.05, "{short:?} {long:?}");
    assert!(long.0 > 2.0 * short.0, "{short:?} {long:?}");
}

#[test]
fn tau_jumps_shrink_with_delta() {
    let dom = fixtures::lens(FRAC_PI_4);
    let co = bm();
    let max_jump = |delta: f64| {
        let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-4, delta));
        map_paths(40, 2, |i| {
            let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Lambda0(0.05), 8, i)?;
            Ok(time_change(&p, 0.0)?.tau.max_jump())
        })
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max)
    };
    let coarse = max_jump(1e-2);
    let fine = max_jump(1e-3);
    assert!(fine < coarse, "{fine} !< {coarse}");
}

#[test]
fn restarted_paths_keep_the_clock_identity() {
    let dom = fixtures::unit_box();
    let co = bm();
    let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-3, 1e-2));
    for i in 0..20 {
        let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Lambda0(0.2), 12, i).unwrap();
        for frac in [0.0, 0.3, 0.77] {
            let at = frac * p.s;
            let r = restart_path(&p, at).unwrap();
            assert!(r.clock_residual() <= 1e-9);
            assert!((r.s - (p.s - at)).abs() <= 1e-9);
            let (l0, l1) = p.clocks_at(at).unwrap();
            assert!((r.lambda0 - (p.lambda0 - l0)).abs() <= 1e-9);
            assert!((r.lambda1 - (p.lambda1 - l1)).abs() <= 1e-9);
        }
    }
}

#[test]
fn patchwork_local_times_carry_all_boundary_mass() {
    let dom = fixtures::unit_box();
    let co = bm();
    let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-3, 1e-2));
    for i in 0..10 {
        let p = simulate_controlled(&k, &[0.0, 0.0], Stop::Lambda0(0.3), 21, i).unwrap();
        for mode in [PatchworkMode::FaceTagged, PatchworkMode::Decompose] {
            let lt = controlled_to_patchwork(&dom, &p, mode).unwrap();
            // Normal reflection on a box: every weight is 1 on its face.
            assert!(
                (lt.total() - p.lambda1).abs() <= 1e-9 * p.lambda1.max(1.0),
                "{mode:?}"
            );
            assert!(lt
                .values
                .windows(2)
                .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a <= b)));
        }
    }
}

#[test]
fn resolvent_is_linear_and_monotone_in_h() {
    let dom = fixtures::half_line();
    let co = bm();
    let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-2, 1e-2));
    let run = ResolventRun {
        x0: vec![0.2],
        n_paths: 100,
        t_trunc: 10.0,
        seed: 3,
        workers: 2,
        scenario_hash: None,
    };
    let h = TestFunction::exponential(1.0, vec![-1.0]);
    let h2 = TestFunction::Scaled {
        factor: 2.0,
        inner: Box::new(h.clone()),
    };
    let big = TestFunction::Sum {
        terms: vec![h.clone(), TestFunction::constant(0.5)],
    };
    for est in [Estimator::ControlledClock, Estimator::ConstrainedClock] {
        let v = estimate_vh(&k, &h, &run, est).unwrap();
        let v2 = estimate_vh(&k, &h2, &run, est).unwrap();
        let vb = estimate_vh(&k, &big, &run, est).unwrap();
        assert!((v2.mean - 2.0 * v.mean).abs() <= 1e-12);
        assert!(vb.mean >= v.mean);
        // int_0^T e^{-t} 0.5 dt, exactly.
        assert!((vb.mean - v.mean - 0.5 * (1.0 - (-10.0f64).exp())).abs() <= 1e-12);
    }
}

#[test]
fn reflected_paths_from_one_stay_above_minus_two_delta() {
    let dom = fixtures::half_line();
    let co = bm();
    let delta = 1e-2;
    let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-3, delta));
    for i in 0..20 {
        let p = simulate_sder(&k, &[1.0], 2.0, 4, i).unwrap();
        assert!(p.samples.iter().all(|s| s.x[0] >= -2.0 * delta));
    }
}

#[test]
fn sder_rejects_nonlocal_behavior_and_exterior_starts() {
    let dom = fixtures::half_line();
    let co = bm();
    let jump = BoundaryBehavior::NonlocalJump {
        kernel: JumpKernel::Fixed(vec![0.5]),
    };
    let k = Kernel::new(&dom, &co, &jump, StepConfig::new(1e-3, 1e-2));
    assert!(matches!(
        simulate_sder(&k, &[0.2], 1.0, 0, 0),
        Err(Error::InvalidInput(_))
    ));
    let k = Kernel::new(&dom, &co, &REFLECT, StepConfig::new(1e-3, 1e-2));
    assert!(matches!(
        simulate_sder(&k, &[-0.5], 1.0, 0, 0),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn nonlocal_jumps_land_on_the_kernel_target() {
    let dom = fixtures::half_line();
    let co = bm();
    let jump = BoundaryBehavior::NonlocalJump {
        kernel: JumpKernel::Fixed(vec![0.5]),
    };
    let k = Kernel::new(&dom, &co, &jump, StepConfig::new(1e-3, 1e-2));
    let p = simulate_controlled(&k, &[0.0], Stop::Lambda0(1.0), 9, 0).unwrap();
    assert!(!p.atoms.is_empty());
    assert!(p
        .atoms
        .iter()
        .all(|a| a.target.as_deref() == Some(&[0.5][..])));
    assert!(p.clock_residual() <= 1e-9);
}
