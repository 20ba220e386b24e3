//! Thermodynamic read-outs of covariance trajectories: occupations,
//! effective temperatures, energies, thermalization times and steady
//! temperature gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussinfo::{extract_mirror_pair, mutual_information};
use crate::linalg::ensure_hurwitz;
use crate::linearized::{build_drift_diffusion, steady_covariance, CovarianceState};
use crate::meanfield::steady_meanfield;
use crate::params::{Mirror, ModelParams, HBAR, K_B};
use crate::scalar::{lit, to_f64, Real};

/// `(⟨δq²⟩ + ⟨δp²⟩ − 1)/2` of mirror `m`.
pub fn effective_occupation<T: Real>(c: &CovarianceState<T>, m: Mirror) -> T {
    let (q, p) = c.mirror_variances(m);
    let n = (q + p - T::one()) * lit(0.5);
    if n < lit(-1e-9) {
        log::warn!("negative occupation {:e} for mirror {:?} at t = {:e}", to_f64(n), m, to_f64(c.t));
    }
    n
}

/// Inverse Bose law `ħΩ/(k_B ln(1 + 1/n))` in kelvin; `omega` in rad/s.
pub fn effective_temperature<T: Real>(n: T, omega: T) -> T {
    if !(n > T::zero()) {
        return T::zero();
    }
    lit::<T>(HBAR / K_B) * omega / (T::one() / n).ln_1p()
}

/// Constant added to `n` in the mean energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyOffset {
    /// `ħΩ(n + ½)`, the zero-point convention.
    #[default]
    Plus,
    /// `ħΩ(n − ½)`, as printed in some references.
    Minus,
}

/// Mean mechanical energy in joules.
pub fn mean_energy<T: Real>(n: T, omega: T, offset: EnergyOffset) -> T {
    let half = lit::<T>(0.5);
    let shift = match offset {
        EnergyOffset::Plus => half,
        EnergyOffset::Minus => -half,
    };
    lit::<T>(HBAR) * omega * (n + shift)
}

/// Effective temperatures of both mirrors along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureTrace<T> {
    /// Sample times in units of τ.
    pub times: Vec<T>,
    pub t_eff: [Vec<T>; 2],
    pub n_eff: [Vec<T>; 2],
    /// Thermalization time of mirror 2 in units of τ, when a steady state was reached.
    pub t_s: Option<T>,
}

impl<T: Real> TemperatureTrace<T> {
    /// Builds the trace from covariance samples whose times are in units of
    /// `1/Ω₁`.
    pub fn from_states(states: &[CovarianceState<T>], mp: &ModelParams<T>, rel_tol: T) -> Self {
        let times: Vec<T> = states.iter().map(|s| mp.to_tau_units(s.t)).collect();
        let occ = |m: Mirror| states.iter().map(|s| effective_occupation(s, m).max(T::zero())).collect::<Vec<_>>();
        let n_eff = [occ(Mirror::First), occ(Mirror::Second)];
        let temp = |m: Mirror| n_eff[m.index()].iter().map(|&n| effective_temperature(n, mp.omega_si(m))).collect::<Vec<_>>();
        let t_eff = [temp(Mirror::First), temp(Mirror::Second)];
        let t_s = match settling_time(&times, &t_eff[1], rel_tol) {
            Ok(t) => Some(t),
            Err(e) => {
                log::info!("mirror 2 did not thermalize: {e}");
                None
            }
        };
        TemperatureTrace { times, t_eff, n_eff, t_s }
    }

    pub fn gradient(&self) -> Vec<T> {
        self.t_eff[1].iter().zip(&self.t_eff[0]).map(|(&b, &a)| b - a).collect()
    }
}

/// Fraction of the trace used to estimate the asymptotic value.
pub const TERMINAL_WINDOW: f64 = 0.1;

/// Smallest sample time after which every sample stays within `rel_tol` of
/// the terminal-window mean.
pub fn settling_time<T: Real>(times: &[T], values: &[T], rel_tol: T) -> Result<T> {
    if times.len() != values.len() || times.is_empty() {
        return Err(Error::InvalidParameter { field: "trace", reason: "times and values must be non-empty and of equal length".into() });
    }
    if !(rel_tol > T::zero()) {
        return Err(Error::InvalidParameter { field: "rel_tol", reason: "must be positive".into() });
    }
    let n = values.len();
    let w = ((n as f64 * TERMINAL_WINDOW).ceil() as usize).clamp(1, n);
    let tail = &values[n - w..];
    let mean = tail.iter().fold(T::zero(), |a, &b| a + b) / lit(w as f64);
    let scale = mean.abs().max(T::TINY);
    let dev = |v: T| (v - mean).abs() / scale;
    let variation = tail.iter().fold(T::zero(), |a, &v| a.max(dev(v)));
    if variation >= rel_tol {
        return Err(Error::NotConverged { variation: to_f64(variation), rel_tol: to_f64(rel_tol) });
    }
    let first_outside = values.iter().rposition(|&v| dev(v) >= rel_tol);
    Ok(match first_outside {
        None => times[0],
        Some(k) => times[k + 1],
    })
}

/// `t_s` of mirror 2.
pub fn thermalization_time<T: Real>(trace: &TemperatureTrace<T>, rel_tol: T) -> Result<T> {
    settling_time(&trace.times, &trace.t_eff[1], rel_tol)
}

/// Steady state at one detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientRow<T> {
    pub n_eff: [T; 2],
    pub t_eff: [T; 2],
    /// `T_eff,2 − T_eff,1` in kelvin.
    pub gradient: T,
    pub mutual_info: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientPoint<T> {
    pub delta: T,
    /// `Err` marks a point excluded from the sweep (typically not Hurwitz).
    pub row: Result<GradientRow<T>>,
}

/// Steady occupations, temperatures and mutual information at the detuning
/// already set in `mp`.
pub fn steady_row<T: Real>(mp: &ModelParams<T>) -> Result<GradientRow<T>> {
    let s = steady_meanfield(mp)?;
    let dd = build_drift_diffusion(&s, mp);
    ensure_hurwitz(&dd.s)?;
    let c = steady_covariance(&dd)?;
    let n_eff = [effective_occupation(&c, Mirror::First), effective_occupation(&c, Mirror::Second)];
    let t_eff = [
        effective_temperature(n_eff[0], mp.omega_si(Mirror::First)),
        effective_temperature(n_eff[1], mp.omega_si(Mirror::Second)),
    ];
    let mutual_info = mutual_information(&extract_mirror_pair(&c)?)?;
    Ok(GradientRow { n_eff, t_eff, gradient: t_eff[1] - t_eff[0], mutual_info })
}

/// Sweeps the laser detuning; points are evaluated in parallel and returned
/// in grid order.
pub fn steady_gradient<T: Real>(mp: &ModelParams<T>, deltas: &[T]) -> Vec<GradientPoint<T>> {
    deltas
        .par_iter()
        .map(|&delta| {
            let mut p = mp.clone();
            p.delta = delta;
            let row = steady_row(&p);
            if let Err(e) = &row {
                log::debug!("detuning {:e} excluded: {e}", to_f64(delta));
            }
            GradientPoint { delta, row }
        })
        .collect()
}
