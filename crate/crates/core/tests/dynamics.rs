mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use cascopt_core::linalg::lyapunov_residual;
use cascopt_core::linearized::{build_drift_diffusion, evolve_covariance, steady_covariance, CovarianceState};
use cascopt_core::meanfield::{
    integrate_meanfield, multistability_branches, photon_cubic, residual_norm, residual_scale, steady_meanfield, CubicKappa, MeanFieldState, Stability,
};
use cascopt_core::ode::Tolerances;
use cascopt_core::params::Mirror;

use common::*;

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

#[test]
fn steady_covariance_is_long_time_limit() {
    let mut rng = rng(3);
    for _ in 0..4 {
        let (mp, s, dd) = random_stable_model(&mut rng);
        let c = steady_covariance(&dd).unwrap();
        assert!(lyapunov_residual(&dd.s, &c.c, &dd.n).norm() < 1e-10 * dd.n.norm());
        let horizon = 30.0 / -abscissa(&dd.s);
        let tol = Tolerances::new(1e-12, 1e-12).unwrap();
        let tr = evolve_covariance(&CovarianceState::thermal(mp.nbar), &MeanFieldState { t: 0.0, ..s }, &mp, &[horizon], tol).unwrap();
        let err = rel_frobenius(&tr.last().c, &c.c);
        assert!(err < 1e-8, "relative Frobenius gap {err:e}");
        assert!(tr.violations.is_empty());
    }
}

#[test]
fn reference_fixed_point_is_stable_and_consistent() {
    let mp = reference_model();
    let s = steady_meanfield(&mp).unwrap();
    assert!(residual_norm(&s, &mp) < 1e-10 * residual_scale(&mp));
    let dd = build_drift_diffusion(&s, &mp);
    assert!(abscissa(&dd.s) < 0.0);

    // Integrating from rest approaches the same point.
    let tol = Tolerances::new(1e-10, 1e-12).unwrap();
    let t = [20.0, 500.0, 3000.0];
    let tr = integrate_meanfield(&MeanFieldState::zero(), &mp, &t, tol).unwrap();
    let a_inf = s.a[0].norm();
    let gaps: Vec<f64> = tr.samples.iter().map(|x| (x.a[0] - s.a[0]).norm() / a_inf).collect();
    assert!(gaps[2] < gaps[0], "{gaps:?}");
    assert!(gaps[2] < 1e-3, "{gaps:?}");
}

#[test]
fn halving_tolerances_moves_terminal_state_little() {
    let mp = reference_model();
    let coarse = Tolerances::new(1e-8, 1e-10).unwrap();
    let fine = coarse.scaled(0.5);
    let run = |tol| *integrate_meanfield(&MeanFieldState::zero(), &mp, &[40.0], tol).unwrap().last();
    let (a, b) = (run(coarse), run(fine));
    for (x, y) in a.to_array().iter().zip(b.to_array()) {
        assert!((x - y).abs() <= coarse.rtol * y.abs().max(1.0) * 10.0, "{x} {y}");
    }
}

#[test]
fn cooling_trace_settles_on_steady_covariance() {
    let mp = model_with(|p| {
        p.gamma1 *= 1e3;
        p.gamma2 *= 1e3;
    });
    let s = steady_meanfield(&mp).unwrap();
    let dd = build_drift_diffusion(&s, &mp);
    let c = steady_covariance(&dd).unwrap();
    let horizon = 40.0 / -abscissa(&dd.s);
    let tol = Tolerances::new(1e-11, 1e-12).unwrap();
    let t: Vec<f64> = (1..=200).map(|k| horizon * k as f64 / 200.0).collect();
    let tr = evolve_covariance(&CovarianceState::thermal(mp.nbar), &MeanFieldState { t: 0.0, ..s }, &mp, &t, tol).unwrap();
    let n1: Vec<f64> = tr.states.iter().map(|st| cascopt_core::observables::effective_occupation(st, Mirror::First)).collect();
    assert!(n1[10] < n1[0], "mirror 1 cools");
    let last = cascopt_core::observables::effective_occupation(tr.last(), Mirror::First);
    let want = cascopt_core::observables::effective_occupation(&c, Mirror::First);
    assert!((last - want).abs() < 1e-6 * want, "{last} {want}");
}

#[test]
fn branch_counts_follow_discriminant() {
    let mp = reference_model();
    let deltas: Vec<f64> = (0..=600).map(|k| -3.0 + 6.0 * k as f64 / 600.0).collect();
    let mut counts = Vec::new();
    for &d in &deltas {
        let p = cascopt_core::params::ModelParams { delta: d, ..mp.clone() };
        let set = multistability_branches(&p, CubicKappa::Printed).unwrap();
        let co = photon_cubic(&p, Mirror::First, p.drive[0] * p.drive[0], CubicKappa::Printed);
        let (disc, scale) = discriminant(co);
        if disc.abs() > 1e-9 * scale {
            assert_eq!(set.cavity1.len(), nonnegative_root_count(co), "delta {d}");
        }
        for b in &set.cavity1 {
            assert!(b.residual.abs() < 1e-10 * co[3].abs(), "cubic residual {:e}", b.residual);
        }
        counts.push(set.cavity1.len());
    }
    // S-shaped response: one root, then three, then one again.
    let mut pattern = counts.clone();
    pattern.dedup();
    assert_eq!(pattern, vec![1, 3, 1], "{pattern:?}");
}

#[test]
fn middle_branch_is_linearly_unstable() {
    let mp = reference_model();
    let (mut three, mut unstable) = (0, 0);
    for k in 0..=400 {
        let p = cascopt_core::params::ModelParams { delta: -3.0 + 6.0 * k as f64 / 400.0, ..mp.clone() };
        let set = multistability_branches(&p, CubicKappa::Printed).unwrap();
        if set.cavity1.len() == 3 {
            three += 1;
            assert_eq!(set.cavity1[1].stability, Stability::Unstable);
            if set.cavity1[1].max_re_eigenvalue > 0.0 {
                unstable += 1;
            }
        }
    }
    assert!(three > 0);
    assert!(unstable as f64 >= 0.95 * three as f64, "{unstable}/{three}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn steady_covariance_is_physical_and_solves_lyapunov(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let (_, _, dd) = random_stable_model(&mut rng);
        let c = steady_covariance(&dd).unwrap();
        prop_assert!(lyapunov_residual(&dd.s, &c.c, &dd.n).norm() < 1e-10 * dd.n.norm());
        prop_assert!(c.min_symplectic_eigenvalue() >= 0.5 - 1e-6);
        prop_assert!((&c.c - c.c.transpose()).norm() == 0.0);
    }
}
