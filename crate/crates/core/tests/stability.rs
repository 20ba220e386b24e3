mod common;

use std::time::Instant;

use rand::Rng;

use cascopt_core::params::{Mirror, ModelParams, Topology};
use cascopt_core::stability::{bessel_amplitudes, contour_distance, marching_squares, power_balance, rational_ratio, stability_map};
use cascopt_core::Complex;

use common::*;

fn with_omega2(r: f64) -> ModelParams<f64> {
    model_with(|p| p.omega2 = r * p.omega1)
}

/// Largest gap between series and forced-ODE amplitudes over the first
/// period, relative to the largest amplitude seen.
fn forced_ode_gap(mp: &ModelParams<f64>, alpha: [f64; 2]) -> (f64, f64) {
    let amps = bessel_amplitudes(mp, alpha, None).unwrap();
    let sys = ForcedCavities { mp, qbar: amps.qbar, alpha };
    let period = std::f64::consts::TAU / mp.omega[0];
    let steps = 100_000;
    let path = sys.integrate(0.0, [amps.a1_at(0.0), amps.a2_at(0.0)], period / steps as f64, steps, 100);
    let (mut gap, mut scale) = ([0.0f64; 2], [0.0f64; 2]);
    for (t, a) in path {
        let series: [Complex<f64>; 2] = [amps.a1_at(t), amps.a2_at(t)];
        for j in 0..2 {
            gap[j] = gap[j].max((series[j] - a[j]).norm());
            scale[j] = scale[j].max(a[j].norm());
        }
    }
    (gap[0] / scale[0], gap[1] / scale[1])
}

#[test]
fn series_matches_forced_integration() {
    let mut rng = rng(17);
    for _ in 0..10 {
        let mut mp = with_omega2([1.0, 1.5, 0.5, std::f64::consts::SQRT_2][rng.gen_range(0..4)]);
        mp.delta = rng.gen_range(-1.0..3.0);
        let alpha = [0, 1].map(|j| rng.gen_range(0.0..4.0) * mp.omega[j] / mp.g[j]);
        let (g1, g2) = forced_ode_gap(&mp, alpha);
        assert!(g1 < 1e-6 && g2 < 1e-6, "Δ={} α={alpha:?}: {g1:e} {g2:e}", mp.delta);
    }
}

#[test]
fn forced_integration_sees_a_wrong_orbit() {
    // The comparison is sharp: a 1% error in the assumed amplitude shows.
    let mp = with_omega2(1.5);
    let alpha = [2.0 * mp.omega[0] / mp.g[0], mp.omega[1] / mp.g[1]];
    let amps = bessel_amplitudes(&mp, alpha, None).unwrap();
    let sys = ForcedCavities { mp: &mp, qbar: amps.qbar, alpha: [alpha[0] * 1.01, alpha[1]] };
    let path = sys.integrate(0.0, [amps.a1_at(0.0), amps.a2_at(0.0)], 1e-4, 62_832, 100);
    let gap = path.iter().map(|(t, a)| (amps.a1_at(*t) - a[0]).norm() / a[0].norm()).fold(0.0, f64::max);
    assert!(gap > 1e-4, "{gap:e}");
}

#[test]
fn force_balance_fixes_mean_positions() {
    let mp = with_omega2(1.5);
    let alpha = [3.0 * mp.omega[0] / mp.g[0], 0.5 * mp.omega[1] / mp.g[1]];
    let amps = bessel_amplitudes(&mp, alpha, None).unwrap();
    // Time averages of |A_j|² by quadrature over the common period 4π.
    let n = 20_000;
    let h = 2.0 * std::f64::consts::TAU / n as f64;
    let mean = |f: &dyn Fn(f64) -> f64| (0..n).map(|k| f(k as f64 * h)).sum::<f64>() / n as f64;
    let p1 = mean(&|t| amps.a1_at(t).norm_sqr());
    let p2 = mean(&|t| amps.a2_at(t).norm_sqr());
    assert!((amps.qbar[0] - mp.g[0] * p1 / mp.omega[0]).abs() < 1e-9 * amps.qbar[0]);
    assert!((amps.qbar[1] - mp.g[1] * p2 / mp.omega[1]).abs() < 1e-9 * amps.qbar[1]);
}

#[test]
fn small_amplitude_ratio_approaches_static_limit() {
    for delta in [-1.0, -0.5, 0.5, 1.0, 2.0] {
        let mut mp = with_omega2(1.5);
        mp.delta = delta;
        let (limit, _) = power_balance(&mp, [0.0, 0.0], Mirror::First).unwrap();
        let (small, _) = power_balance(&mp, [1e-3 * mp.omega[0] / mp.g[0], 0.0], Mirror::First).unwrap();
        assert!((small - limit).abs() < 0.05 * limit.abs(), "Δ={delta}: {small} vs {limit}");
    }
}

#[test]
fn blue_detuning_can_sustain_oscillation() {
    let mp = with_omega2(1.5);
    let amax = 10.0 * mp.omega[0] / mp.g[0];
    let alpha: Vec<f64> = (0..12).map(|k| amax * k as f64 / 11.0).collect();
    let delta: Vec<f64> = (0..12).map(|k| -2.0 + 4.0 * k as f64 / 11.0).collect();
    let map = stability_map(&mp, Mirror::First, &alpha, &delta, 0.0).unwrap();
    let blue = delta.iter().zip(&map.ratio).filter(|(d, _)| **d < 0.0).any(|(_, row)| row.iter().any(|&r| r > 1.0));
    assert!(blue);
    // Red-detuned small orbits are damped by the light.
    let red = delta.iter().position(|&d| d > 0.5).unwrap();
    assert!(map.ratio[red][0] < 0.0);
    assert!(!map.contour.is_empty());
}

#[test]
fn coarse_map_is_finite_and_quick() {
    let mp = with_omega2(1.5);
    let started = Instant::now();
    let amax = 25.0 * mp.omega[0] / mp.g[0];
    let alpha: Vec<f64> = (0..10).map(|k| amax * k as f64 / 9.0).collect();
    let delta: Vec<f64> = (0..10).map(|k| -1.0 + 4.0 * k as f64 / 9.0).collect();
    for m in Mirror::BOTH {
        let map = stability_map(&mp, m, &alpha, &delta, amax * 0.3).unwrap();
        assert!(map.ratio.iter().flatten().all(|r| r.is_finite()));
        assert_eq!(map.failed_cells, 0);
        assert_eq!(map.truncated_cells, 0);
    }
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn bidirectional_guide_is_rejected() {
    let mut mp = with_omega2(1.5);
    mp.topology = Topology::Bidirectional;
    assert!(matches!(bessel_amplitudes(&mp, [0.0, 0.0], None), Err(cascopt_core::Error::Topology(_))));
}

#[test]
fn rational_detection() {
    assert_eq!(rational_ratio(1.5), Some((3, 2)));
    assert_eq!(rational_ratio(1.0), Some((1, 1)));
    assert_eq!(rational_ratio(0.37), Some((37, 100)));
    assert_eq!(rational_ratio(std::f64::consts::SQRT_2), None);
    assert_eq!(rational_ratio(1.0 / 101.0), None);
}

#[test]
fn marching_squares_traces_a_circle() {
    let x: Vec<f64> = (0..81).map(|k| -2.0 + 4.0 * k as f64 / 80.0).collect();
    let z: Vec<Vec<f64>> = x.iter().map(|&y| x.iter().map(|&u| u * u + y * y).collect()).collect();
    let c = marching_squares(&x, &x, &z, 1.0);
    let pts: Vec<&(f64, f64)> = c.iter().flatten().collect();
    assert!(pts.len() > 100);
    for (u, y) in pts {
        assert!(((u * u + y * y).sqrt() - 1.0).abs() < 2e-3);
    }
    let coarse: Vec<f64> = (0..21).map(|k| -2.0 + 4.0 * k as f64 / 20.0).collect();
    let zc: Vec<Vec<f64>> = coarse.iter().map(|&y| coarse.iter().map(|&u| u * u + y * y).collect()).collect();
    let cc = marching_squares(&coarse, &coarse, &zc, 1.0);
    assert!(contour_distance(&cc, &c, (0.2, 0.2)) < 1.0);
}

#[test]
fn uncoupled_mirrors_give_a_flat_map() {
    let mut mp = with_omega2(1.5);
    mp.g = [0.0, 0.0];
    let alpha: Vec<f64> = (0..6).map(|k| k as f64).collect();
    let delta: Vec<f64> = (0..6).map(|k| -1.0 + 0.5 * k as f64).collect();
    for m in Mirror::BOTH {
        let map = stability_map(&mp, m, &alpha, &delta, 1.0).unwrap();
        assert!(map.ratio.iter().flatten().all(|&r| r == 0.0));
        assert!(map.contour.is_empty());
    }
}
