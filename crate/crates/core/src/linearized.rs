//! Linearized fluctuations: drift/diffusion around the mean field and the
//! Lyapunov dynamics of the 8×8 covariance matrix.
//!
//! Quadrature ordering is `(q₁, p₁, x₁, y₁, q₂, p₂, x₂, y₂)` with
//! `x = (a + a†)/√2`, `y = −i(a − a†)/√2` and `C_ij = ½⟨{u_i, u_j}⟩`, so the
//! vacuum has diagonal ½.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::meanfield::{MeanFieldPath, MeanFieldState};
use crate::ode::{Dopri5, Tolerances};
use crate::params::{Mirror, ModelParams, Topology};
use crate::scalar::{lit, to_f64, Real};

/// Which quadratures the rows of a covariance matrix refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeOrdering {
    /// `(q₁, p₁, x₁, y₁, q₂, p₂, x₂, y₂)`.
    Full,
    /// `(q₁, p₁, q₂, p₂)`.
    Mirrors,
    /// A single `(q, p)` pair.
    Single,
}

impl ModeOrdering {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            ModeOrdering::Full => &["q1", "p1", "x1", "y1", "q2", "p2", "x2", "y2"],
            ModeOrdering::Mirrors => &["q1", "p1", "q2", "p2"],
            ModeOrdering::Single => &["q", "p"],
        }
    }

    pub fn dim(self) -> usize {
        self.labels().len()
    }

    /// Row of `q_j` for mirror `m`.
    pub fn mirror_offset(self, m: Mirror) -> usize {
        match self {
            ModeOrdering::Full => 4 * m.index(),
            ModeOrdering::Mirrors => 2 * m.index(),
            ModeOrdering::Single => 0,
        }
    }
}

/// Symmetric covariance matrix at time `t` (`t = ∞` for steady states).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState<T: Real> {
    pub t: T,
    pub c: DMatrix<T>,
    pub ordering: ModeOrdering,
}

impl<T: Real> CovarianceState<T> {
    /// Symmetrizes `c` on construction.
    pub fn new(t: T, c: DMatrix<T>, ordering: ModeOrdering) -> Result<Self> {
        let d = ordering.dim();
        if c.shape() != (d, d) {
            return Err(Error::InvalidParameter { field: "covariance", reason: format!("expected {d}×{d}") });
        }
        let c = (&c + c.transpose()) * lit::<T>(0.5);
        Ok(Self { t, c, ordering })
    }

    /// Thermal mirrors with occupations `nbar`, vacuum cavities.
    pub fn thermal(nbar: [T; 2]) -> Self {
        let h = lit::<T>(0.5);
        let d = [nbar[0] + h, nbar[0] + h, h, h, nbar[1] + h, nbar[1] + h, h, h];
        Self { t: T::zero(), c: DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d)), ordering: ModeOrdering::Full }
    }

    pub fn vacuum(ordering: ModeOrdering) -> Self {
        let d = ordering.dim();
        Self { t: T::zero(), c: DMatrix::identity(d, d) * lit::<T>(0.5), ordering }
    }

    /// Symplectic eigenvalues (ascending).
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<T>> {
        linalg::symplectic_eigenvalues(&self.c)
    }

    /// Smallest symplectic eigenvalue; `-∞`-like sentinel when not positive definite.
    pub fn min_symplectic_eigenvalue(&self) -> T {
        match self.symplectic_eigenvalues() {
            Ok(v) => v[0],
            Err(_) => -T::one(),
        }
    }

    pub fn is_physical(&self, tol: T) -> bool {
        self.min_symplectic_eigenvalue() >= lit::<T>(0.5) - tol
    }

    /// `⟨δq_j²⟩` and `⟨δp_j²⟩` of mirror `m`.
    pub fn mirror_variances(&self, m: Mirror) -> (T, T) {
        let o = self.ordering.mirror_offset(m);
        (self.c[(o, o)], self.c[(o + 1, o + 1)])
    }

    /// Upper triangle in row-major order, matching [`upper_labels`](Self::upper_labels).
    pub fn upper_triangle(&self) -> Vec<T> {
        let d = self.c.nrows();
        (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).map(|(i, j)| self.c[(i, j)]).collect()
    }

    pub fn upper_labels(ordering: ModeOrdering) -> Vec<String> {
        let l = ordering.labels();
        (0..l.len()).flat_map(|i| (i..l.len()).map(move |j| format!("{}{}", l[i], l[j]))).collect()
    }
}

/// Drift `S` and diffusion `N` of the linearized dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion<T: Real> {
    pub s: DMatrix<T>,
    pub n: DMatrix<T>,
}

/// Diffusion matrix; independent of the mean field.
pub fn diffusion<T: Real>(mp: &ModelParams<T>) -> DMatrix<T> {
    // Vacuum input with C = ½⟨{·,·}⟩: a port of amplitude rate κ/2 injects κ/2.
    let cav = match mp.topology {
        Topology::Unidirectional => mp.kappa * lit(0.5),
        Topology::Bidirectional => mp.kappa,
    };
    let mut n = DMatrix::zeros(8, 8);
    for j in 0..2 {
        let o = 4 * j;
        n[(o + 1, o + 1)] = mp.gamma[j] * (lit::<T>(2.0) * mp.nbar[j] + T::one());
        n[(o + 2, o + 2)] = cav;
        n[(o + 3, o + 3)] = cav;
    }
    for k in [2, 3] {
        n[(k, k + 4)] = cav;
        n[(k + 4, k)] = cav;
    }
    n
}

/// Drift matrix around mean-field state `s`.
pub fn drift<T: Real>(s: &MeanFieldState<T>, mp: &ModelParams<T>) -> DMatrix<T> {
    let r2 = lit::<T>(2.0).sqrt();
    let loss = match mp.topology {
        Topology::Unidirectional => mp.kappa * lit(0.5),
        Topology::Bidirectional => mp.kappa,
    };
    let mut m = DMatrix::zeros(8, 8);
    for mirror in Mirror::BOTH {
        let j = mirror.index();
        let o = 4 * j;
        let g = s.coupling(mp, mirror) * r2;
        let dj = s.detuning(mp, mirror);
        m[(o, o + 1)] = mp.omega[j];
        m[(o + 1, o)] = -mp.omega[j];
        m[(o + 1, o + 1)] = -mp.gamma[j];
        m[(o + 1, o + 2)] = g.re;
        m[(o + 1, o + 3)] = g.im;
        m[(o + 2, o)] = -g.im;
        m[(o + 2, o + 2)] = -loss;
        m[(o + 2, o + 3)] = dj;
        m[(o + 3, o)] = g.re;
        m[(o + 3, o + 2)] = -dj;
        m[(o + 3, o + 3)] = -loss;
    }
    m[(6, 2)] = -mp.kappa;
    m[(7, 3)] = -mp.kappa;
    if mp.topology == Topology::Bidirectional {
        m[(2, 6)] = -mp.kappa;
        m[(3, 7)] = -mp.kappa;
    }
    m
}

pub fn build_drift_diffusion<T: Real>(s: &MeanFieldState<T>, mp: &ModelParams<T>) -> DriftDiffusion<T> {
    DriftDiffusion { s: drift(s, mp), n: diffusion(mp) }
}

/// Sampled covariance trajectory.
#[derive(Debug, Clone)]
pub struct CovarianceTrajectory<T: Real> {
    pub states: Vec<CovarianceState<T>>,
    /// Smallest symplectic eigenvalue per sample.
    pub min_symplectic: Vec<T>,
    /// Sample indices where physicality was violated beyond 1e-6.
    pub violations: Vec<usize>,
}

impl<T: Real> CovarianceTrajectory<T> {
    pub fn last(&self) -> &CovarianceState<T> {
        self.states.last().expect("non-empty trajectory")
    }

    pub fn times(&self) -> Vec<T> {
        self.states.iter().map(|s| s.t).collect()
    }
}

/// Integrates `dC/dt = S(t) C + C S(t)ᵀ + N(t)` from `c0` (at `c0.t`),
/// symmetrizing after every accepted step.
pub fn evolve_lyapunov<T, F>(c0: &CovarianceState<T>, dd: F, t_out: &[T], tol: Tolerances<T>) -> Result<CovarianceTrajectory<T>>
where
    T: Real,
    F: Fn(T) -> DriftDiffusion<T>,
{
    let d = c0.c.nrows();
    let rhs = |t: T, y: &[T], dy: &mut [T]| {
        let c = DMatrix::from_column_slice(d, d, y);
        let DriftDiffusion { s, n } = dd(t);
        let sc = &s * &c;
        let out = &sc + sc.transpose() + n;
        dy.copy_from_slice(out.as_slice());
    };
    let project = |y: &mut [T]| {
        let h = lit::<T>(0.5);
        for i in 0..d {
            for j in (i + 1)..d {
                let v = (y[i + j * d] + y[j + i * d]) * h;
                y[i + j * d] = v;
                y[j + i * d] = v;
            }
        }
    };
    let sol = Dopri5::new(tol).solve_projected(rhs, project, c0.t, c0.c.as_slice(), t_out)?;
    let mut states = Vec::with_capacity(sol.t.len());
    let mut min_symplectic = Vec::with_capacity(sol.t.len());
    let mut violations = Vec::new();
    let floor = lit::<T>(0.5) - lit::<T>(1e-6);
    for (k, (&t, y)) in sol.t.iter().zip(&sol.y).enumerate() {
        let st = CovarianceState::new(t, DMatrix::from_column_slice(d, d, y), c0.ordering)?;
        let nu = st.min_symplectic_eigenvalue();
        if nu < floor {
            log::warn!("physicality violated at t = {}: symplectic eigenvalue {}", to_f64(t), to_f64(nu));
            violations.push(k);
        }
        min_symplectic.push(nu);
        states.push(st);
    }
    Ok(CovarianceTrajectory { states, min_symplectic, violations })
}

/// Evolves the full covariance along a mean-field path.
pub fn evolve_covariance<T: Real, P: MeanFieldPath<T>>(
    c0: &CovarianceState<T>,
    path: &P,
    mp: &ModelParams<T>,
    t_out: &[T],
    tol: Tolerances<T>,
) -> Result<CovarianceTrajectory<T>> {
    if c0.ordering != ModeOrdering::Full {
        return Err(Error::InvalidParameter { field: "c0", reason: "full 8×8 covariance required".into() });
    }
    let n = diffusion(mp);
    if path.is_stationary() {
        let s = drift(&path.state_at(c0.t), mp);
        evolve_lyapunov(c0, |_| DriftDiffusion { s: s.clone(), n: n.clone() }, t_out, tol)
    } else {
        evolve_lyapunov(c0, |t| DriftDiffusion { s: drift(&path.state_at(t), mp), n: n.clone() }, t_out, tol)
    }
}

/// Algebraic steady state `S C + C Sᵀ + N = 0`.
pub fn steady_covariance<T: Real>(dd: &DriftDiffusion<T>) -> Result<CovarianceState<T>> {
    let c = linalg::lyapunov_steady(&dd.s, &dd.n)?;
    let res = linalg::lyapunov_residual(&dd.s, &c, &dd.n).norm();
    let bound = lit::<T>(1e-10) * dd.n.norm();
    if res > bound {
        log::warn!("steady covariance residual {:e} exceeds {:e}", to_f64(res), to_f64(bound));
    }
    let ordering = match c.nrows() {
        8 => ModeOrdering::Full,
        4 => ModeOrdering::Mirrors,
        2 => ModeOrdering::Single,
        _ => return Err(Error::InvalidParameter { field: "drift", reason: "unsupported dimension".into() }),
    };
    CovarianceState::new(T::one() / T::zero(), c, ordering)
}
