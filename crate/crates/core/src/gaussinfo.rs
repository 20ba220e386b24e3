//! Correlations of two-mode Gaussian states: symplectic invariants, mutual
//! information and Gaussian discord (natural logarithms throughout).

use nalgebra::{Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::linearized::{CovarianceState, ModeOrdering};
use crate::params::Mirror;
use crate::scalar::{lit, to_f64, Real};

/// Covariance of modes A and B, ordered `(q_A, p_A, q_B, p_B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeGaussian<T: Real> {
    pub c: Matrix4<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymplecticInvariants<T> {
    /// `det A`
    pub i1: T,
    /// `det B`
    pub i2: T,
    /// `det D`
    pub i3: T,
    /// `det C`
    pub i4: T,
    pub d_plus: T,
    pub d_minus: T,
}

/// Which subsystem is measured: `AGivenB` is `D(A|B)`, measuring B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscordDirection {
    AGivenB,
    BGivenA,
}

impl<T: Real> TwoModeGaussian<T> {
    /// Symmetrizes and checks physicality (`d₋ ≥ ½ − 1e-9`).
    pub fn new(c: Matrix4<T>) -> Result<Self> {
        let g = Self { c: (c + c.transpose()) * lit::<T>(0.5) };
        let inv = symplectic_invariants(&g)?;
        if inv.d_minus < lit::<T>(0.5) - lit::<T>(1e-9) {
            return Err(Error::NonPhysical(format!("symplectic eigenvalue {:e} below 1/2", to_f64(inv.d_minus))));
        }
        Ok(g)
    }

    /// Builds the state without the physicality check.
    pub fn new_unchecked(c: Matrix4<T>) -> Self {
        Self { c: (c + c.transpose()) * lit::<T>(0.5) }
    }

    pub fn from_blocks(a: Matrix2<T>, b: Matrix2<T>, d: Matrix2<T>) -> Result<Self> {
        let mut c = Matrix4::zeros();
        c.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
        c.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
        c.fixed_view_mut::<2, 2>(0, 2).copy_from(&d);
        c.fixed_view_mut::<2, 2>(2, 0).copy_from(&d.transpose());
        Self::new(c)
    }

    pub fn a(&self) -> Matrix2<T> {
        self.c.fixed_view::<2, 2>(0, 0).into_owned()
    }

    pub fn b(&self) -> Matrix2<T> {
        self.c.fixed_view::<2, 2>(2, 2).into_owned()
    }

    pub fn d(&self) -> Matrix2<T> {
        self.c.fixed_view::<2, 2>(0, 2).into_owned()
    }

    /// Same state with the roles of A and B exchanged.
    pub fn swapped(&self) -> Self {
        let p = Matrix4::new(
            T::zero(), T::zero(), T::one(), T::zero(),
            T::zero(), T::zero(), T::zero(), T::one(),
            T::one(), T::zero(), T::zero(), T::zero(),
            T::zero(), T::one(), T::zero(), T::zero(),
        );
        Self { c: p * self.c * p.transpose() }
    }
}

/// Mirror–mirror marginal `(q₁, p₁, q₂, p₂)` of a covariance state.
pub fn extract_mirror_pair<T: Real>(c: &CovarianceState<T>) -> Result<TwoModeGaussian<T>> {
    let idx = match c.ordering {
        ModeOrdering::Full | ModeOrdering::Mirrors => {
            let o1 = c.ordering.mirror_offset(Mirror::First);
            let o2 = c.ordering.mirror_offset(Mirror::Second);
            [o1, o1 + 1, o2, o2 + 1]
        }
        ModeOrdering::Single => {
            return Err(Error::InvalidParameter { field: "covariance", reason: "single-mode state has no mirror pair".into() })
        }
    };
    Ok(TwoModeGaussian::new_unchecked(Matrix4::from_fn(|r, k| c.c[(idx[r], idx[k])])))
}

pub fn symplectic_invariants<T: Real>(g: &TwoModeGaussian<T>) -> Result<SymplecticInvariants<T>> {
    let i1 = g.a().determinant();
    let i2 = g.b().determinant();
    let i3 = g.d().determinant();
    let i4 = g.c.determinant();
    let sum = i1 + i2 + lit::<T>(2.0) * i3;
    let mut disc = sum * sum - lit::<T>(4.0) * i4;
    let slack = lit::<T>(1e-9) * sum * sum;
    if disc < -slack || !(i4 > T::zero()) {
        return Err(Error::NonPhysical(format!(
            "invariants inconsistent: I_Δ² − 4I₄ = {:e}, I₄ = {:e}",
            to_f64(disc),
            to_f64(i4)
        )));
    }
    disc = disc.max(T::zero());
    if disc < lit::<T>(1e-4) * sum * sum {
        // Nearly degenerate pair: √disc has lost half the digits, while the
        // symmetric eigen route is accurate exactly here.
        let m = nalgebra::DMatrix::from_fn(4, 4, |r, k| g.c[(r, k)]);
        if let Ok(nu) = linalg::symplectic_eigenvalues(&m) {
            return Ok(SymplecticInvariants { i1, i2, i3, i4, d_plus: nu[1], d_minus: nu[0] });
        }
    }
    let dp2 = (sum + disc.sqrt()) * lit(0.5);
    // d₊² d₋² = I₄ avoids cancellation in the small eigenvalue.
    let dm2 = i4 / dp2;
    Ok(SymplecticInvariants { i1, i2, i3, i4, d_plus: dp2.sqrt(), d_minus: dm2.sqrt() })
}

/// Entropy function `(x+½) ln(x+½) − (x−½) ln(x−½)`, zero at `x = ½`.
pub fn entropy_fn<T: Real>(x: T) -> T {
    let h = lit::<T>(0.5);
    let lo = x - h;
    if !(lo > T::zero()) {
        return T::zero();
    }
    if x < lit(2.0) {
        (x + h) * (x + h).ln() - lo * lo.ln()
    } else {
        // Rewritten so that large arguments do not cancel catastrophically.
        lo.ln() + (x + h) * (T::one() / lo).ln_1p()
    }
}

pub fn mutual_information<T: Real>(g: &TwoModeGaussian<T>) -> Result<T> {
    let inv = symplectic_invariants(g)?;
    let v = entropy_fn(inv.i1.sqrt()) + entropy_fn(inv.i2.sqrt()) - entropy_fn(inv.d_plus) - entropy_fn(inv.d_minus);
    Ok(v.max(T::zero()))
}

/// Determinant of A's covariance after the optimal Gaussian measurement on B.
fn conditional_det<T: Real>(inv: &SymplecticInvariants<T>) -> T {
    let SymplecticInvariants { i1, i2, i3, i4, .. } = *inv;
    let four = lit::<T>(4.0);
    let two = lit::<T>(2.0);
    let lhs = four * (i1 * i2 - i4) * (i1 * i2 - i4);
    let rhs = (i1 + four * i4) * (T::one() + four * i2) * i3 * i3;
    if i3.abs() >= lit(1e-12) && lhs <= rhs {
        let den = four * i2 - T::one();
        let x = den * (four * i4 - i1);
        let root = (four * i3 * i3 + x).max(T::zero()).sqrt();
        let w = (two * i3.abs() + root) / den;
        w * w
    } else {
        let p = i1 * i2 - i4;
        let disc = (p * p + i3 * i3 * i3 * i3 - two * i3 * i3 * (i1 * i2 + i4)).max(T::zero());
        (i1 * i2 + i4 - i3 * i3 - disc.sqrt()) / (two * i2)
    }
}

/// Gaussian discord in the requested direction, clamped at zero.
pub fn gaussian_discord<T: Real>(g: &TwoModeGaussian<T>, dir: DiscordDirection) -> Result<T> {
    let g = match dir {
        DiscordDirection::AGivenB => *g,
        DiscordDirection::BGivenA => g.swapped(),
    };
    let inv = symplectic_invariants(&g)?;
    let w = conditional_det(&inv);
    let d = entropy_fn(inv.i2.sqrt()) - entropy_fn(inv.d_plus) - entropy_fn(inv.d_minus) + entropy_fn(w.max(T::zero()).sqrt());
    if d < -lit::<T>(1e-9) {
        log::warn!("negative discord {:e} clamped to zero", to_f64(d));
    }
    Ok(d.max(T::zero()))
}

/// Mutual information and both discords in one pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations<T> {
    pub mutual_info: T,
    pub discord_a_given_b: T,
    pub discord_b_given_a: T,
}

pub fn correlations<T: Real>(g: &TwoModeGaussian<T>) -> Result<Correlations<T>> {
    Ok(Correlations {
        mutual_info: mutual_information(g)?,
        discord_a_given_b: gaussian_discord(g, DiscordDirection::AGivenB)?,
        discord_b_given_a: gaussian_discord(g, DiscordDirection::BGivenA)?,
    })
}
