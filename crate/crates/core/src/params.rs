//! Physical inputs and their dimensionless counterparts.
//!
//! Every rate is measured in units of the first mirror's angular frequency,
//! so `omega[0] == 1` and time runs in units of `1/Ω₁`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const C_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Chiral guide: cavity 1 feeds cavity 2, no way back.
    #[default]
    Unidirectional,
    /// Non-chiral guide: both cavities feed each other and both are pumped.
    Bidirectional,
}

/// Whether a frequency written without `/2π` is angular or ordinary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyConvention {
    #[default]
    Angular,
    Ordinary,
}

impl FrequencyConvention {
    /// Converts a value quoted under this convention to rad/s.
    pub fn to_angular<T: Real>(self, v: T) -> T {
        match self {
            FrequencyConvention::Angular => v,
            FrequencyConvention::Ordinary => v * T::two_pi(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mirror {
    First,
    Second,
}

impl Mirror {
    pub const BOTH: [Mirror; 2] = [Mirror::First, Mirror::Second];

    pub fn index(self) -> usize {
        match self {
            Mirror::First => 0,
            Mirror::Second => 1,
        }
    }

    pub fn other(self) -> Mirror {
        match self {
            Mirror::First => Mirror::Second,
            Mirror::Second => Mirror::First,
        }
    }
}

/// SI inputs. Frequencies and rates are angular (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams<T> {
    /// Effective mirror mass [kg].
    pub mass: T,
    pub omega1: T,
    pub omega2: T,
    pub gamma1: T,
    pub gamma2: T,
    /// Bath temperature [K].
    pub t_bath: T,
    /// Cavity length [m].
    pub length: T,
    pub kappa: T,
    /// Laser wavelength [m].
    pub wavelength: T,
    /// Input power into cavity 1 [W].
    pub p1: T,
    /// Laser–cavity detuning `ω_c − ω_L` [rad/s].
    pub delta: T,
    pub topology: Topology,
    /// Input power into cavity 2 [W]; zero for the chiral guide.
    pub p2: T,
}

impl<T: Real> PhysicalParams<T> {
    /// State-of-the-art benchmark: 150 ng mirrors at 1 MHz, 1 Hz damping,
    /// room temperature, 25 mm cavities, κ = 1.34e6 (read through `conv`),
    /// 1064 nm pump at 2 mW, detuned by Ω₁.
    pub fn reference_setup(conv: FrequencyConvention) -> Self {
        let omega = lit::<T>(2e6) * T::pi();
        let gamma = T::two_pi();
        Self {
            mass: lit(150e-12),
            omega1: omega,
            omega2: omega,
            gamma1: gamma,
            gamma2: gamma,
            t_bath: lit(300.0),
            length: lit(25e-3),
            kappa: conv.to_angular(lit(1.34e6)),
            wavelength: lit(1064e-9),
            p1: lit(2e-3),
            delta: omega,
            topology: Topology::Unidirectional,
            p2: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("omega1", self.omega1),
            ("omega2", self.omega2),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("t_bath", self.t_bath),
            ("length", self.length),
            ("kappa", self.kappa),
            ("wavelength", self.wavelength),
            ("p1", self.p1),
        ];
        for (field, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter { field, reason: "must be finite and strictly positive".into() });
            }
        }
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter { field: "delta", reason: "must be finite".into() });
        }
        if !(self.p2 >= T::zero()) || !self.p2.is_finite() {
            return Err(Error::InvalidParameter { field: "p2", reason: "must be finite and nonnegative".into() });
        }
        if self.topology == Topology::Unidirectional && self.p2 != T::zero() {
            return Err(Error::Topology("a unidirectional guide pumps cavity 1 only; p2 must be 0".into()));
        }
        Ok(())
    }
}

/// Dimensionless model parameters (rates in units of Ω₁).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub kappa: T,
    pub delta: T,
    pub omega: [T; 2],
    pub gamma: [T; 2],
    /// Single-photon couplings.
    pub g: [T; 2],
    /// Drive amplitudes.
    pub drive: [T; 2],
    pub nbar: [T; 2],
    pub topology: Topology,
    /// `2π/Ω₁` in seconds.
    pub tau: T,
    /// Ω₁ in rad/s, for converting back to SI.
    pub omega1_si: T,
    pub t_bath: T,
}

impl<T: Real> ModelParams<T> {
    /// Checks the dimensionless invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa", self.kappa),
            ("omega1", self.omega[0]),
            ("omega2", self.omega[1]),
            ("gamma1", self.gamma[0]),
            ("gamma2", self.gamma[1]),
            ("omega1_si", self.omega1_si),
        ];
        for (field, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter { field, reason: "must be finite and strictly positive".into() });
            }
        }
        for (field, v) in [("g1", self.g[0]), ("g2", self.g[1]), ("nbar1", self.nbar[0]), ("nbar2", self.nbar[1])] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter { field, reason: "must be finite and nonnegative".into() });
            }
        }
        if self.topology == Topology::Unidirectional && self.drive[1] != T::zero() {
            return Err(Error::Topology("a unidirectional guide pumps cavity 1 only".into()));
        }
        Ok(())
    }

    /// SI angular frequency of mirror `m`.
    pub fn omega_si(&self, m: Mirror) -> T {
        self.omega[m.index()] * self.omega1_si
    }

    /// Converts a time in units of `1/Ω₁` into units of τ.
    pub fn to_tau_units(&self, t: T) -> T {
        t / T::two_pi()
    }

    /// Converts a time in units of τ into units of `1/Ω₁`.
    pub fn from_tau_units(&self, t: T) -> T {
        t * T::two_pi()
    }
}

/// Bose–Einstein occupation `1/(exp(ħΩ/k_B T) − 1)`; zero at `T = 0`.
pub fn thermal_occupation<T: Real>(omega: T, t_bath: T) -> T {
    if !(t_bath > T::zero()) {
        return T::zero();
    }
    let x = lit::<T>(HBAR / K_B) * omega / t_bath;
    T::one() / x.exp_m1()
}

/// Maps SI inputs to the dimensionless model.
pub fn nondimensionalize<T: Real>(p: &PhysicalParams<T>) -> Result<ModelParams<T>> {
    p.validate()?;
    let hbar = lit::<T>(HBAR);
    let omega_l = T::two_pi() * lit::<T>(C_LIGHT) / p.wavelength;
    let omega_c = omega_l + p.delta;
    let scale = p.omega1;
    let g = |om: T| omega_c / p.length * (hbar / (p.mass * om)).sqrt() / scale;
    let e = |pw: T| (lit::<T>(2.0) * p.kappa * pw / (hbar * omega_l)).sqrt() / scale;
    let mp = ModelParams {
        kappa: p.kappa / scale,
        delta: p.delta / scale,
        omega: [T::one(), p.omega2 / scale],
        gamma: [p.gamma1 / scale, p.gamma2 / scale],
        g: [g(p.omega1), g(p.omega2)],
        drive: [e(p.p1), e(p.p2)],
        nbar: [thermal_occupation(p.omega1, p.t_bath), thermal_occupation(p.omega2, p.t_bath)],
        topology: p.topology,
        tau: T::two_pi() / scale,
        omega1_si: scale,
        t_bath: p.t_bath,
    };
    mp.validate()?;
    Ok(mp)
}
