//! Adiabatically eliminated model: optical susceptibilities, optically
//! induced frequency shifts and damping, the cascaded coupling Λ, and the
//! reduced covariance dynamics of the two mirrors.
//!
//! The reduced state is kept in the co-rotating basis
//! `u = (b̄₁, b̄₁†, b̄₂, b̄₂†)` as `V_ij = ⟨{u_i, u_j†}⟩`, so a thermal mode has
//! `V = (2n̄+1)` on its diagonal.

use nalgebra::{Matrix4, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linearized::{CovarianceState, ModeOrdering};
use crate::meanfield::{photon_cubic, CubicKappa, MeanFieldState};
use crate::ode::{Dopri5, Tolerances};
use crate::params::{nondimensionalize, Mirror, ModelParams, PhysicalParams, C_LIGHT, HBAR};
use crate::scalar::{cis, cplx, lit, to_f64, Complex, Real};

pub type ModeMatrix<T> = SMatrix<Complex<T>, 4, 4>;

/// `χ_a(ω) = 1/(κ/2 − i(ω − Δ_j))`.
pub fn optical_susceptibility<T: Real>(omega: T, kappa: T, delta_j: T) -> Complex<T> {
    cplx(T::one(), T::zero()) / cplx(kappa * lit(0.5), delta_j - omega)
}

/// Quantities of the reduced model frozen at the mean-field point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams<T> {
    pub omega_eff: [T; 2],
    pub gamma_eff: [T; 2],
    /// `Λ(Ω₁)`.
    pub lambda: Complex<T>,
    /// `G_j = g_j A_j` at the mean-field point.
    pub coupling: [Complex<T>; 2],
    /// `Δ_j = Δ − g_j Q_j` at the mean-field point.
    pub detuning: [T; 2],
    /// Set when some `|G_j|` exceeds κ.
    pub weak_coupling_violated: bool,
}

impl<T: Real> EffectiveParams<T> {
    /// Optical part of the self-energy, `χ_a(ω) − χ_a*(−ω)`.
    pub fn self_energy(&self, mp: &ModelParams<T>, m: Mirror, omega: T) -> Complex<T> {
        let d = self.detuning[m.index()];
        optical_susceptibility(omega, mp.kappa, d) - optical_susceptibility(-omega, mp.kappa, d).conj()
    }

    /// Λ at an arbitrary frequency.
    pub fn lambda_at(&self, mp: &ModelParams<T>, omega: T) -> Complex<T> {
        cascaded_coupling(omega, mp.kappa, self.coupling, self.detuning)
    }
}

/// `Λ(ω) = G₂G₁* χ*_{a₁}(−ω) χ*_{a₂}(−ω) − G₂*G₁ χ_{a₁}(ω) χ_{a₂}(ω)`.
pub fn cascaded_coupling<T: Real>(omega: T, kappa: T, g: [Complex<T>; 2], detuning: [T; 2]) -> Complex<T> {
    let chi = |w: T, j: usize| optical_susceptibility(w, kappa, detuning[j]);
    g[1] * g[0].conj() * chi(-omega, 0).conj() * chi(-omega, 1).conj() - g[1].conj() * g[0] * chi(omega, 0) * chi(omega, 1)
}

pub fn effective_rates<T: Real>(mp: &ModelParams<T>, s: &MeanFieldState<T>) -> EffectiveParams<T> {
    let coupling = [s.coupling(mp, Mirror::First), s.coupling(mp, Mirror::Second)];
    let detuning = [s.detuning(mp, Mirror::First), s.detuning(mp, Mirror::Second)];
    let mut omega_eff = [T::zero(); 2];
    let mut gamma_eff = [T::zero(); 2];
    for m in Mirror::BOTH {
        let j = m.index();
        let w = mp.omega[j];
        let x = optical_susceptibility(w, mp.kappa, detuning[j]) - optical_susceptibility(-w, mp.kappa, detuning[j]).conj();
        let v = x * (coupling[j].norm_sqr() * lit(0.5));
        gamma_eff[j] = v.re;
        omega_eff[j] = v.im;
    }
    let weak_coupling_violated = coupling.iter().any(|g| g.norm_sqr().sqrt() > mp.kappa);
    if weak_coupling_violated {
        log::warn!(
            "weak-coupling assumption violated: |G| = ({:e}, {:e}) vs kappa = {:e}",
            to_f64(coupling[0].norm_sqr().sqrt()),
            to_f64(coupling[1].norm_sqr().sqrt()),
            to_f64(mp.kappa)
        );
    }
    EffectiveParams {
        omega_eff,
        gamma_eff,
        lambda: cascaded_coupling(mp.omega[0], mp.kappa, coupling, detuning),
        coupling,
        detuning,
        weak_coupling_violated,
    }
}

/// Options of the reduced model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ReducedOptions {
    /// Keep the optical vacuum noise that the reduced model normally drops.
    pub optical_noise: bool,
}

/// Reduced drift at time `t`.
pub fn reduced_drift<T: Real>(ep: &EffectiveParams<T>, mp: &ModelParams<T>, t: T) -> ModeMatrix<T> {
    let mut s = ModeMatrix::zeros();
    for j in 0..2 {
        let d = cplx(-(ep.gamma_eff[j] + mp.gamma[j] * lit(0.5)), -ep.omega_eff[j]);
        s[(2 * j, 2 * j)] = d;
        s[(2 * j + 1, 2 * j + 1)] = d.conj();
    }
    let c = -ep.lambda * cis((mp.omega[1] - mp.omega[0]) * t) * (mp.kappa * lit(0.5));
    s[(2, 0)] = c;
    s[(3, 1)] = c.conj();
    s
}

pub fn reduced_diffusion<T: Real>(ep: &EffectiveParams<T>, mp: &ModelParams<T>, opts: ReducedOptions) -> ModeMatrix<T> {
    let mut n = ModeMatrix::zeros();
    for j in 0..2 {
        let mut v = mp.gamma[j] * (lit::<T>(2.0) * mp.nbar[j] + T::one());
        if opts.optical_noise {
            let w = mp.omega[j];
            let d = ep.detuning[j];
            let s = optical_susceptibility(w, mp.kappa, d).norm_sqr() + optical_susceptibility(-w, mp.kappa, d).norm_sqr();
            v += mp.kappa * ep.coupling[j].norm_sqr() * lit::<T>(0.5) * s;
        }
        n[(2 * j, 2 * j)] = cplx(v, T::zero());
        n[(2 * j + 1, 2 * j + 1)] = cplx(v, T::zero());
    }
    n
}

fn frame<T: Real>(omega: [T; 2], t: T) -> ModeMatrix<T> {
    let r = T::one() / lit::<T>(2.0).sqrt();
    let mut m = ModeMatrix::zeros();
    for (j, &w) in omega.iter().enumerate() {
        let e = cis(-w * t) * r;
        let o = 2 * j;
        m[(o, o)] = e;
        m[(o, o + 1)] = e.conj();
        m[(o + 1, o)] = e * cplx(T::zero(), -T::one());
        m[(o + 1, o + 1)] = e.conj() * cplx(T::zero(), T::one());
    }
    m
}

fn swap_conjugates<T: Real>() -> ModeMatrix<T> {
    let (z, o) = (cplx(T::zero(), T::zero()), cplx(T::one(), T::zero()));
    ModeMatrix::from_row_slice(&[z, o, z, z, o, z, z, z, z, z, z, o, z, z, o, z])
}

/// Lab-frame quadrature covariance `(q₁, p₁, q₂, p₂)` of a mode-basis state.
pub fn to_quadratures<T: Real>(v: &ModeMatrix<T>, omega: [T; 2], t: T) -> Matrix4<T> {
    let tr = frame(omega, t);
    let c = tr * v * swap_conjugates::<T>().transpose() * tr.transpose() * cplx(lit::<T>(0.5), T::zero());
    let re = c.map(|z| z.re);
    (re + re.transpose()) * lit::<T>(0.5)
}

/// Inverse of [`to_quadratures`].
pub fn to_mode_basis<T: Real>(c: &Matrix4<T>, omega: [T; 2], t: T) -> Result<ModeMatrix<T>> {
    let tinv = frame(omega, t).try_inverse().ok_or(Error::Singular("rotating frame"))?;
    let cc = c.map(|x| cplx(x, T::zero()));
    let v = tinv * cc * tinv.transpose() * swap_conjugates::<T>() * cplx(lit::<T>(2.0), T::zero());
    Ok((v + v.adjoint()) * cplx(lit::<T>(0.5), T::zero()))
}

/// Thermal mode-basis state.
pub fn thermal_modes<T: Real>(nbar: [T; 2]) -> ModeMatrix<T> {
    let mut v = ModeMatrix::zeros();
    for j in 0..2 {
        let x = cplx(lit::<T>(2.0) * nbar[j] + T::one(), T::zero());
        v[(2 * j, 2 * j)] = x;
        v[(2 * j + 1, 2 * j + 1)] = x;
    }
    v
}

/// Reduced trajectory in the co-rotating basis.
#[derive(Debug, Clone)]
pub struct EffectiveTrajectory<T> {
    pub times: Vec<T>,
    pub v: Vec<ModeMatrix<T>>,
    omega: [T; 2],
}

impl<T: Real> EffectiveTrajectory<T> {
    /// Occupation `(V_jj − 1)/2` of mirror `m` at sample `k`.
    pub fn occupation(&self, k: usize, m: Mirror) -> T {
        let j = 2 * m.index();
        (self.v[k][(j, j)].re - T::one()) * lit(0.5)
    }

    /// Lab-frame quadrature covariance at sample `k`.
    pub fn quadrature_covariance(&self, k: usize) -> CovarianceState<T> {
        let c = to_quadratures(&self.v[k], self.omega, self.times[k]);
        CovarianceState { t: self.times[k], c: nalgebra::DMatrix::from_fn(4, 4, |r, s| c[(r, s)]), ordering: ModeOrdering::Mirrors }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integrates `V' = S V + V S† + N` from the quadrature covariance `c0`
/// (`(q₁, p₁, q₂, p₂)` at time `c0.t`).
pub fn evolve_effective_covariance<T: Real>(
    c0: &CovarianceState<T>,
    ep: &EffectiveParams<T>,
    mp: &ModelParams<T>,
    t_out: &[T],
    tol: Tolerances<T>,
    opts: ReducedOptions,
) -> Result<EffectiveTrajectory<T>> {
    let c = match c0.ordering {
        ModeOrdering::Mirrors => Matrix4::from_fn(|r, k| c0.c[(r, k)]),
        ModeOrdering::Full => {
            let idx = [0, 1, 4, 5];
            Matrix4::from_fn(|r, k| c0.c[(idx[r], idx[k])])
        }
        ModeOrdering::Single => {
            return Err(Error::InvalidParameter { field: "c0", reason: "two mirrors required".into() })
        }
    };
    let v0 = to_mode_basis(&c, mp.omega, c0.t)?;
    evolve_modes(&v0, c0.t, ep, mp, t_out, tol, opts)
}

/// As [`evolve_effective_covariance`], starting from a mode-basis state.
pub fn evolve_modes<T: Real>(
    v0: &ModeMatrix<T>,
    t0: T,
    ep: &EffectiveParams<T>,
    mp: &ModelParams<T>,
    t_out: &[T],
    tol: Tolerances<T>,
    opts: ReducedOptions,
) -> Result<EffectiveTrajectory<T>> {
    let n = reduced_diffusion(ep, mp, opts);
    let pack = |v: &ModeMatrix<T>| v.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<T>>();
    let unpack = |y: &[T]| ModeMatrix::from_iterator(y.chunks(2).map(|p| cplx(p[0], p[1])));
    let rhs = |t: T, y: &[T], dy: &mut [T]| {
        let v = unpack(y);
        let s = reduced_drift(ep, mp, t);
        let sv = s * v;
        let out = sv + sv.adjoint() + n;
        for (k, z) in out.iter().enumerate() {
            dy[2 * k] = z.re;
            dy[2 * k + 1] = z.im;
        }
    };
    let project = |y: &mut [T]| {
        let v = unpack(y);
        let h = (v + v.adjoint()) * cplx(lit::<T>(0.5), T::zero());
        for (k, z) in h.iter().enumerate() {
            y[2 * k] = z.re;
            y[2 * k + 1] = z.im;
        }
    };
    let sol = Dopri5::new(tol).solve_projected(rhs, project, t0, &pack(v0), t_out)?;
    Ok(EffectiveTrajectory { times: sol.t.clone(), v: sol.y.iter().map(|y| unpack(y)).collect(), omega: mp.omega })
}

/// Input power [W] on cavity 1 that puts `|G₁|/κ` at `ratio` in the
/// stationary state.
pub fn power_for_coupling_ratio<T: Real>(p: &PhysicalParams<T>, ratio: T) -> Result<T> {
    if !(ratio > T::zero()) {
        return Err(Error::InvalidParameter { field: "ratio", reason: "must be positive".into() });
    }
    let mp = nondimensionalize(p)?;
    let n = (ratio * mp.kappa / mp.g[0]).powi(2);
    let co = photon_cubic(&mp, Mirror::First, T::zero(), CubicKappa::Expanded);
    let e2 = ((co[0] * n + co[1]) * n + co[2]) * n;
    let e_si = e2.sqrt() * p.omega1;
    let omega_l = T::two_pi() * lit::<T>(C_LIGHT) / p.wavelength;
    Ok(e_si * e_si * lit::<T>(HBAR) * omega_l / (lit::<T>(2.0) * p.kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::steady_meanfield;
    use crate::params::{FrequencyConvention, Topology};

    fn toy() -> ModelParams<f64> {
        ModelParams {
            kappa: 0.5,
            delta: 1.0,
            omega: [1.0, 1.3],
            gamma: [0.01, 0.02],
            g: [0.01, 0.02],
            drive: [5.0, 0.0],
            nbar: [20.0, 30.0],
            topology: Topology::Unidirectional,
            tau: 1.0,
            omega1_si: 1.0,
            t_bath: 1.0,
        }
    }

    #[test]
    fn susceptibility_resonance_and_tails() {
        assert!((optical_susceptibility(1.0, 1.34, 1.0) - Complex::new(2.0 / 1.34, 0.0)).norm() < 1e-15);
        assert!((optical_susceptibility(1.0f64, 1.34, 1.0).re - 1.492_537_313_432_835_7).abs() < 1e-15);
        assert!(optical_susceptibility(1e9f64, 1.0, 0.0).norm() < 1e-8);
    }

    #[test]
    fn lambda_vanishes_without_either_coupling() {
        let z = Complex::new(0.0, 0.0);
        let g = Complex::new(0.3, 0.1);
        assert_eq!(cascaded_coupling(1.0, 0.5, [z, g], [1.0, 1.0]), z);
        assert_eq!(cascaded_coupling(1.0, 0.5, [g, z], [1.0, 1.0]), z);
    }

    #[test]
    fn resonant_symmetric_point_has_no_damping() {
        let mut mp = toy();
        mp.delta = 0.0;
        let s = MeanFieldState { a: [Complex::new(3.0, 0.0), Complex::new(2.0, 0.0)], ..MeanFieldState::zero() };
        let ep = effective_rates(&mp, &s);
        assert!(ep.gamma_eff[0].abs() < 1e-15 && ep.gamma_eff[1].abs() < 1e-15);
    }

    #[test]
    fn red_detuning_cools() {
        let mp: ModelParams<f64> = crate::params::nondimensionalize(&PhysicalParams::reference_setup(FrequencyConvention::Angular)).unwrap();
        let s = steady_meanfield(&mp).unwrap();
        let ep = effective_rates(&mp, &s);
        assert!(ep.gamma_eff[0] > 1e3 * mp.gamma[0]);
    }

    #[test]
    fn frame_round_trip() {
        let c = Matrix4::new(3.0, 0.2, 0.1, -0.3, 0.2, 2.0, 0.05, 0.4, 0.1, 0.05, 4.0, 0.0, -0.3, 0.4, 0.0, 5.0);
        let v = to_mode_basis(&c, [1.0, 1.3], 0.7).unwrap();
        let back = to_quadratures(&v, [1.0, 1.3], 0.7);
        assert!((back - c).norm() < 1e-13);
        let th = thermal_modes([2.0, 3.0]);
        let q = to_quadratures(&th, [1.0, 1.3], 5.0);
        assert!((q - Matrix4::from_diagonal(&nalgebra::Vector4::new(2.5, 2.5, 3.5, 3.5))).norm() < 1e-13);
    }

    #[test]
    fn decoupled_modes_relax_to_bath() {
        let mp = toy();
        let ep = EffectiveParams {
            omega_eff: [0.0; 2],
            gamma_eff: [0.0; 2],
            lambda: Complex::new(0.0, 0.0),
            coupling: [Complex::new(0.0, 0.0); 2],
            detuning: [1.0; 2],
            weak_coupling_violated: false,
        };
        let c0 = CovarianceState::vacuum(ModeOrdering::Mirrors);
        let tr = evolve_effective_covariance(&c0, &ep, &mp, &[3000.0], Tolerances::new(1e-10, 1e-12).unwrap(), ReducedOptions::default()).unwrap();
        let c = tr.quadrature_covariance(0);
        for (k, n) in [(0, 20.0), (1, 20.0), (2, 30.0), (3, 30.0)] {
            assert!((c.c[(k, k)] - (n + 0.5)).abs() < 1e-6 * n, "{k}");
        }
    }

    #[test]
    fn rate_equation_steady_occupation() {
        let mut mp = toy();
        mp.nbar[0] = 200.0;
        let ep = EffectiveParams {
            omega_eff: [0.01, 0.0],
            gamma_eff: [0.02, 0.0],
            lambda: Complex::new(0.0, 0.0),
            coupling: [Complex::new(0.1, 0.0); 2],
            detuning: [1.0; 2],
            weak_coupling_violated: false,
        };
        let c0 = CovarianceState::vacuum(ModeOrdering::Mirrors);
        let tr = evolve_effective_covariance(&c0, &ep, &mp, &[400.0], Tolerances::new(1e-10, 1e-12).unwrap(), ReducedOptions::default()).unwrap();
        let n = tr.occupation(0, Mirror::First);
        let g = mp.gamma[0];
        let expect = (g * (2.0 * mp.nbar[0] + 1.0) / (g + 0.04) - 1.0) / 2.0;
        assert!((n - expect).abs() < 1e-6 * expect, "{n} {expect}");
        // γn̄/(γ+2Γ) for large n̄.
        assert!((n - g * mp.nbar[0] / (g + 0.04)).abs() / n < 0.05);
    }

    #[test]
    fn coupling_ratio_power_hits_target() {
        let mut p: PhysicalParams<f64> = PhysicalParams::reference_setup(FrequencyConvention::Angular);
        p.p1 = power_for_coupling_ratio(&p, 0.1).unwrap();
        let mp = nondimensionalize(&p).unwrap();
        let s = steady_meanfield(&mp).unwrap();
        let r = s.coupling(&mp, Mirror::First).norm() / mp.kappa;
        assert!((r - 0.1).abs() < 1e-9, "{r}");
    }
}
