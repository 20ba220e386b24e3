//! Classical mean-field dynamics of the two cavities and mirrors.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::cubic::{eval_cubic, real_roots_cubic};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ode::{Dopri5, OdeSolution, Tolerances};
use crate::params::{Mirror, ModelParams, Topology};
use crate::scalar::{cplx, lit, max_abs, to_f64, Complex, Real};

pub type Vector8<T> = SVector<T, 8>;
pub type Matrix8<T> = SMatrix<T, 8, 8>;

/// Mean values `(Q_j, P_j, A_j)` at time `t` (units of `1/Ω₁`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState<T> {
    pub t: T,
    pub q: [T; 2],
    pub p: [T; 2],
    pub a: [Complex<T>; 2],
}

/// Time derivative of a [`MeanFieldState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldDerivative<T> {
    pub dq: [T; 2],
    pub dp: [T; 2],
    pub da: [Complex<T>; 2],
}

impl<T: Real> MeanFieldState<T> {
    pub fn zero() -> Self {
        let z = T::zero();
        Self { t: z, q: [z; 2], p: [z; 2], a: [cplx(z, z); 2] }
    }

    /// Packs as `(Q1, P1, ReA1, ImA1, Q2, P2, ReA2, ImA2)`.
    pub fn to_array(&self) -> [T; 8] {
        [self.q[0], self.p[0], self.a[0].re, self.a[0].im, self.q[1], self.p[1], self.a[1].re, self.a[1].im]
    }

    pub fn from_slice(t: T, y: &[T]) -> Self {
        Self { t, q: [y[0], y[4]], p: [y[1], y[5]], a: [cplx(y[2], y[3]), cplx(y[6], y[7])] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Shifted detuning `Δ_j = Δ − g_j Q_j`.
    pub fn detuning(&self, mp: &ModelParams<T>, m: Mirror) -> T {
        let j = m.index();
        mp.delta - mp.g[j] * self.q[j]
    }

    /// Enhanced coupling `G_j = g_j A_j`.
    pub fn coupling(&self, mp: &ModelParams<T>, m: Mirror) -> Complex<T> {
        let j = m.index();
        self.a[j] * mp.g[j]
    }

    /// Photon number `|A_j|²`.
    pub fn photons(&self, m: Mirror) -> T {
        self.a[m.index()].norm_sqr()
    }
}

/// Right-hand side of the mean-field equations.
pub fn meanfield_rhs<T: Real>(s: &MeanFieldState<T>, mp: &ModelParams<T>) -> MeanFieldDerivative<T> {
    let y = s.to_array();
    let mut dy = [T::zero(); 8];
    rhs_slice(mp, &y, &mut dy);
    MeanFieldDerivative {
        dq: [dy[0], dy[4]],
        dp: [dy[1], dy[5]],
        da: [cplx(dy[2], dy[3]), cplx(dy[6], dy[7])],
    }
}

pub(crate) fn rhs_slice<T: Real>(mp: &ModelParams<T>, y: &[T], dy: &mut [T]) {
    let half = lit::<T>(0.5);
    let (loss, cross_back) = match mp.topology {
        Topology::Unidirectional => (mp.kappa * half, T::zero()),
        Topology::Bidirectional => (mp.kappa, mp.kappa),
    };
    for j in 0..2 {
        let o = 4 * j;
        let (q, p, re, im) = (y[o], y[o + 1], y[o + 2], y[o + 3]);
        let dj = mp.delta - mp.g[j] * q;
        dy[o] = mp.omega[j] * p;
        dy[o + 1] = -mp.omega[j] * q - mp.gamma[j] * p + mp.g[j] * (re * re + im * im);
        dy[o + 2] = -loss * re + dj * im + mp.drive[j];
        dy[o + 3] = -loss * im - dj * re;
    }
    // Light leaving cavity 1 enters cavity 2; in the non-chiral guide also back.
    dy[6] -= mp.kappa * y[2];
    dy[7] -= mp.kappa * y[3];
    dy[2] -= cross_back * y[6];
    dy[3] -= cross_back * y[7];
}

/// Jacobian of [`meanfield_rhs`] in the packed ordering.
pub fn jacobian<T: Real>(s: &MeanFieldState<T>, mp: &ModelParams<T>) -> Matrix8<T> {
    let y = s.to_array();
    let two = lit::<T>(2.0);
    let loss = match mp.topology {
        Topology::Unidirectional => mp.kappa * lit(0.5),
        Topology::Bidirectional => mp.kappa,
    };
    let mut j = Matrix8::zeros();
    for m in 0..2 {
        let o = 4 * m;
        let (q, re, im) = (y[o], y[o + 2], y[o + 3]);
        let g = mp.g[m];
        let dj = mp.delta - g * q;
        j[(o, o + 1)] = mp.omega[m];
        j[(o + 1, o)] = -mp.omega[m];
        j[(o + 1, o + 1)] = -mp.gamma[m];
        j[(o + 1, o + 2)] = two * g * re;
        j[(o + 1, o + 3)] = two * g * im;
        j[(o + 2, o)] = -g * im;
        j[(o + 2, o + 2)] = -loss;
        j[(o + 2, o + 3)] = dj;
        j[(o + 3, o)] = g * re;
        j[(o + 3, o + 2)] = -dj;
        j[(o + 3, o + 3)] = -loss;
    }
    j[(6, 2)] = -mp.kappa;
    j[(7, 3)] = -mp.kappa;
    if mp.topology == Topology::Bidirectional {
        j[(2, 6)] = -mp.kappa;
        j[(3, 7)] = -mp.kappa;
    }
    j
}

/// Anything that can supply the mean field at a given time.
pub trait MeanFieldPath<T: Real>: Sync {
    fn state_at(&self, t: T) -> MeanFieldState<T>;

    /// True when the path does not depend on time.
    fn is_stationary(&self) -> bool {
        false
    }
}

impl<T: Real> MeanFieldPath<T> for MeanFieldState<T> {
    fn state_at(&self, t: T) -> MeanFieldState<T> {
        MeanFieldState { t, ..*self }
    }

    fn is_stationary(&self) -> bool {
        true
    }
}

/// Sampled mean-field trajectory with its continuous interpolant.
#[derive(Debug, Clone)]
pub struct MeanFieldTrajectory<T> {
    pub samples: Vec<MeanFieldState<T>>,
    solution: OdeSolution<T>,
}

impl<T: Real> MeanFieldTrajectory<T> {
    pub fn last(&self) -> &MeanFieldState<T> {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Covered time span.
    pub fn span(&self) -> (T, T) {
        self.solution.span().unwrap_or_else(|| {
            let t = self.samples.first().map(|s| s.t).unwrap_or(T::zero());
            (t, t)
        })
    }
}

impl<T: Real> MeanFieldPath<T> for MeanFieldTrajectory<T> {
    /// Interpolated state; clamps to the end points outside the span.
    fn state_at(&self, t: T) -> MeanFieldState<T> {
        let (a, b) = self.span();
        let tc = t.max(a).min(b);
        match self.solution.at(tc) {
            Some(y) => MeanFieldState::from_slice(t, &y),
            None => MeanFieldState { t, ..*self.last() },
        }
    }
}

/// Integrates the mean field from `s0`, sampling at `t_out` (absolute
/// times, sorted; the last one is the horizon).
pub fn integrate_meanfield<T: Real>(
    s0: &MeanFieldState<T>,
    mp: &ModelParams<T>,
    t_out: &[T],
    tol: Tolerances<T>,
) -> Result<MeanFieldTrajectory<T>> {
    match t_out.last() {
        Some(&t_end) if t_end > s0.t => {}
        _ => return Err(Error::InvalidParameter { field: "t_end", reason: "horizon must exceed the start time".into() }),
    }
    let sol = Dopri5::new(tol).with_dense(true).solve(|_, y, dy| rhs_slice(mp, y, dy), s0.t, &s0.to_array(), t_out)?;
    let samples = sol.t.iter().zip(&sol.y).map(|(&t, y)| MeanFieldState::from_slice(t, y)).collect();
    Ok(MeanFieldTrajectory { samples, solution: sol })
}

/// Controls for [`steady_meanfield`].
#[derive(Debug, Clone, Copy)]
pub struct SteadyOptions<T> {
    /// Residual bound relative to `max(1, |E₁|, |E₂|)`; by default 1e-12,
    /// or 64 ulp when the scalar cannot carry that.
    pub tol: T,
    pub max_iter: usize,
    /// Length of the seeding integration; defaults to `min(20/γ_min, cap)`.
    pub seed_horizon: Option<T>,
    pub seed_cap: T,
    pub seed_tol: Tolerances<T>,
}

impl<T: Real> Default for SteadyOptions<T> {
    fn default() -> Self {
        Self {
            tol: lit::<T>(1e-12).max(T::EPS * lit(64.0)),
            max_iter: 60,
            seed_horizon: None,
            seed_cap: lit(2000.0),
            seed_tol: Tolerances::new(lit(1e-8), lit(1e-10)).expect("valid"),
        }
    }
}

/// Residual scale used by the fixed-point tolerance.
pub fn residual_scale<T: Real>(mp: &ModelParams<T>) -> T {
    T::one().max(mp.drive[0].abs()).max(mp.drive[1].abs())
}

/// Infinity norm of the mean-field right-hand side.
pub fn residual_norm<T: Real>(s: &MeanFieldState<T>, mp: &ModelParams<T>) -> T {
    let mut dy = [T::zero(); 8];
    rhs_slice(mp, &s.to_array(), &mut dy);
    max_abs(&dy)
}

/// Stationary mean field by damped Newton iteration, seeded from a long
/// integration that starts with empty cavities and mirrors at rest.
pub fn steady_meanfield<T: Real>(mp: &ModelParams<T>) -> Result<MeanFieldState<T>> {
    steady_meanfield_with(mp, &SteadyOptions::default())
}

pub fn steady_meanfield_with<T: Real>(mp: &ModelParams<T>, opts: &SteadyOptions<T>) -> Result<MeanFieldState<T>> {
    mp.validate()?;
    let horizon = opts.seed_horizon.unwrap_or_else(|| {
        let gmin = mp.gamma[0].min(mp.gamma[1]);
        (lit::<T>(20.0) / gmin).min(opts.seed_cap)
    });
    let zero = MeanFieldState::zero();
    let seed = match integrate_meanfield(&zero, mp, &[horizon], opts.seed_tol) {
        Ok(tr) if tr.last().is_finite() => *tr.last(),
        Ok(_) | Err(_) => {
            log::warn!("seeding integration failed; starting Newton from rest");
            zero
        }
    };
    newton(mp, seed, opts)
}

/// Damped Newton iteration on `meanfield_rhs = 0` from `seed`.
pub fn newton<T: Real>(mp: &ModelParams<T>, seed: MeanFieldState<T>, opts: &SteadyOptions<T>) -> Result<MeanFieldState<T>> {
    let bound = opts.tol * residual_scale(mp);
    let mut y = Vector8::from_column_slice(&seed.to_array());
    let f_of = |y: &Vector8<T>| {
        let mut dy = [T::zero(); 8];
        rhs_slice(mp, y.as_slice(), &mut dy);
        Vector8::from_column_slice(&dy)
    };
    let mut f = f_of(&y);
    let mut res = f.amax();
    let mut polish = 0;
    for _ in 0..opts.max_iter {
        if res <= bound {
            // Two extra full steps squeeze out the last digits.
            if polish == 2 {
                break;
            }
            polish += 1;
        }
        let state = MeanFieldState::from_slice(T::zero(), y.as_slice());
        let j = jacobian(&state, mp);
        let dx = match j.lu().solve(&(-&f)) {
            Some(d) => d,
            None => return Err(Error::Singular("mean-field Jacobian")),
        };
        let mut lambda = T::one();
        loop {
            let trial = y + dx * lambda;
            let ft = f_of(&trial);
            let rt = ft.amax();
            if rt.is_finite() && (rt < res || polish > 0 || lambda < lit(1e-8)) {
                if polish > 0 && rt > res {
                    // Already at the rounding floor.
                    polish = 2;
                    break;
                }
                y = trial;
                f = ft;
                res = rt;
                break;
            }
            lambda *= lit(0.5);
        }
    }
    if res <= bound {
        Ok(MeanFieldState::from_slice(T::zero(), y.as_slice()))
    } else {
        Err(Error::NoConvergence { iterations: opts.max_iter, residual: to_f64(res / residual_scale(mp)) })
    }
}

/// Coefficient choice for the photon-number cubic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubicKappa {
    /// `Δ² + κ²/2`, the coefficient as commonly printed.
    #[default]
    Printed,
    /// `Δ² + κ²/4`, the exact expansion of `|κ/2 + iΔ|²`.
    Expanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
}

/// One stationary solution of a photon-number cubic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch<T> {
    /// Photon number `N_j`.
    pub photons: T,
    /// Static position `Q_j = g_j N_j / Ω_j`.
    pub position: T,
    /// Middle-root rule: the middle of three roots is unstable.
    pub stability: Stability,
    /// Largest real part of the local subsystem Jacobian at the branch.
    pub max_re_eigenvalue: T,
    /// Cubic residual at the root.
    pub residual: T,
}

impl<T: Real> Branch<T> {
    pub fn jacobian_stability(&self) -> Stability {
        if self.max_re_eigenvalue < T::zero() {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }
}

/// Cavity-2 branches grown from one cavity-1 branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondCavityBranches<T> {
    pub parent: usize,
    pub branches: Vec<Branch<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet<T> {
    pub delta: T,
    pub convention: CubicKappa,
    pub cavity1: Vec<Branch<T>>,
    pub cavity2: Vec<SecondCavityBranches<T>>,
}

/// Coefficients `[a, b, c, d]` of the photon-number cubic for mirror `m`
/// with squared drive `drive2`.
pub fn photon_cubic<T: Real>(mp: &ModelParams<T>, m: Mirror, drive2: T, conv: CubicKappa) -> [T; 4] {
    let j = m.index();
    let g2 = mp.g[j] * mp.g[j];
    let k2 = mp.kappa * mp.kappa
        * match conv {
            CubicKappa::Printed => lit::<T>(0.5),
            CubicKappa::Expanded => lit::<T>(0.25),
        };
    [
        g2 * g2 / (mp.omega[j] * mp.omega[j]),
        -lit::<T>(2.0) * mp.delta * g2 / mp.omega[j],
        mp.delta * mp.delta + k2,
        -drive2,
    ]
}

/// Enumerates the stationary photon-number branches of both cavities.
pub fn multistability_branches<T: Real>(mp: &ModelParams<T>, conv: CubicKappa) -> Result<BranchSet<T>> {
    mp.validate()?;
    let e1 = mp.drive[0];
    let c1 = photon_cubic(mp, Mirror::First, e1 * e1, conv);
    let roots1 = nonnegative_roots(c1);
    let mut cavity1 = Vec::with_capacity(roots1.len());
    let mut cavity2 = Vec::with_capacity(roots1.len());
    for (i, &n1) in roots1.iter().enumerate() {
        let q1 = mp.g[0] * n1 / mp.omega[0];
        let a1 = cplx(mp.drive[0], T::zero()) / cplx(mp.kappa * lit(0.5), mp.delta - mp.g[0] * q1);
        let base = MeanFieldState { t: T::zero(), q: [q1, T::zero()], p: [T::zero(); 2], a: [a1, cplx(T::zero(), T::zero())] };
        cavity1.push(Branch {
            photons: n1,
            position: q1,
            stability: middle_rule(i, roots1.len()),
            max_re_eigenvalue: subsystem_abscissa(&base, mp, Mirror::First),
            residual: eval_cubic(c1, n1),
        });

        let c2 = photon_cubic(mp, Mirror::Second, mp.kappa * mp.kappa * n1, conv);
        let roots2 = nonnegative_roots(c2);
        let branches = roots2
            .iter()
            .enumerate()
            .map(|(k, &n2)| {
                let q2 = mp.g[1] * n2 / mp.omega[1];
                let a2 = -a1 * mp.kappa / cplx(mp.kappa * lit(0.5), mp.delta - mp.g[1] * q2);
                let s = MeanFieldState { q: [q1, q2], a: [a1, a2], ..base };
                Branch {
                    photons: n2,
                    position: q2,
                    stability: middle_rule(k, roots2.len()),
                    max_re_eigenvalue: subsystem_abscissa(&s, mp, Mirror::Second),
                    residual: eval_cubic(c2, n2),
                }
            })
            .collect();
        cavity2.push(SecondCavityBranches { parent: i, branches });
    }
    Ok(BranchSet { delta: mp.delta, convention: conv, cavity1, cavity2 })
}

fn nonnegative_roots<T: Real>(co: [T; 4]) -> Vec<T> {
    if co[3] == T::zero() {
        // No drive: the empty cavity is the only physical solution.
        return vec![T::zero()];
    }
    real_roots_cubic(co).into_iter().filter(|&x| x >= T::zero()).collect()
}

fn middle_rule(i: usize, count: usize) -> Stability {
    if count == 3 && i == 1 {
        Stability::Unstable
    } else {
        Stability::Stable
    }
}

fn subsystem_abscissa<T: Real>(s: &MeanFieldState<T>, mp: &ModelParams<T>, m: Mirror) -> T {
    let o = 4 * m.index();
    let j = jacobian(s, mp);
    let block = nalgebra::DMatrix::from_fn(4, 4, |r, c| j[(o + r, o + c)]);
    linalg::spectral_abscissa(&block)
}
