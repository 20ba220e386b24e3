//! TOML run configuration with two sections, `[physical]` and `[run]`.
//! Physical quantities are given either as bare SI numbers or as strings with
//! a unit suffix (`"150 ng"`, `"1 MHz"`, `"2 mW"`, `"1 Omega1"`).
//!
//! Mechanical frequencies and damping rates given in Hz are ordinary
//! frequencies and are multiplied by 2π. The cavity rate κ and the detuning Δ
//! are ambiguous in the reference parameter list; Hz-valued inputs for those
//! follow `frequency_convention`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::CubicKappa;
use crate::observables::EnergyOffset;
use crate::params::{FrequencyConvention, PhysicalParams, Topology};
use crate::spectra::SpectrumSign;

/// A bare SI number or a string with a unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Number(v)
    }
}

impl From<&str> for Quantity {
    fn from(v: &str) -> Self {
        Quantity::Text(v.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dimension {
    Mass,
    Length,
    Temperature,
    Power,
    /// Mechanical frequencies and rates; Hz means ordinary frequency.
    Mechanical,
    /// κ and Δ; Hz follows the configured convention.
    Optical,
}

fn split_unit(s: &str) -> Result<(f64, String)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-' || ((c == 'e' || c == 'E') && i > 0 && !s[i + 1..].starts_with(|d: char| d.is_alphabetic()))))
        .map_or(s.len(), |(i, _)| i);
    let value: f64 = s[..end].trim().parse().map_err(|_| Error::Config(format!("cannot read a number from `{s}`")))?;
    Ok((value, s[end..].trim().to_owned()))
}

fn si_prefix(unit: &str, base: &str) -> Option<f64> {
    let p = unit.strip_suffix(base)?;
    Some(match p {
        "" => 1.0,
        "G" => 1e9,
        "M" => 1e6,
        "k" => 1e3,
        "c" => 1e-2,
        "m" => 1e-3,
        "u" | "µ" | "μ" => 1e-6,
        "n" => 1e-9,
        "p" => 1e-12,
        _ => return None,
    })
}

struct UnitContext {
    convention: FrequencyConvention,
    /// Ω₁ in rad/s, for `Omega1` multiples.
    omega1: Option<f64>,
}

fn resolve(q: &Quantity, dim: Dimension, field: &str, ctx: &UnitContext) -> Result<f64> {
    let (v, unit) = match q {
        Quantity::Number(v) => return Ok(*v),
        Quantity::Text(s) => split_unit(s)?,
    };
    let bad = || Error::Config(format!("unit `{unit}` not allowed for `{field}`"));
    let two_pi = std::f64::consts::TAU;
    let out = match dim {
        Dimension::Mass => {
            if unit == "kg" {
                v
            } else {
                v * 1e-3 * si_prefix(&unit, "g").ok_or_else(bad)?
            }
        }
        Dimension::Length => v * si_prefix(&unit, "m").ok_or_else(bad)?,
        Dimension::Temperature => v * si_prefix(&unit, "K").ok_or_else(bad)?,
        Dimension::Power => v * si_prefix(&unit, "W").ok_or_else(bad)?,
        Dimension::Mechanical | Dimension::Optical => {
            if unit.is_empty() || unit == "rad/s" {
                v
            } else if unit == "Omega1" {
                v * ctx.omega1.ok_or_else(|| Error::Config(format!("`{field}` cannot be given in units of Omega1")))?
            } else {
                let hz = v * si_prefix(&unit, "Hz").ok_or_else(bad)?;
                match dim {
                    Dimension::Mechanical => hz * two_pi,
                    _ => ctx.convention.to_angular(hz),
                }
            }
        }
    };
    if !out.is_finite() {
        return Err(Error::Config(format!("`{field}` is not finite")));
    }
    Ok(out)
}

/// `[physical]` as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSection {
    pub mass: Quantity,
    pub omega1: Quantity,
    #[serde(default)]
    pub omega2: Option<Quantity>,
    pub gamma1: Quantity,
    #[serde(default)]
    pub gamma2: Option<Quantity>,
    pub temperature: Quantity,
    pub length: Quantity,
    pub kappa: Quantity,
    pub wavelength: Quantity,
    pub power1: Quantity,
    #[serde(default)]
    pub power2: Option<Quantity>,
    pub delta: Quantity,
    #[serde(default)]
    pub topology: Topology,
    #[serde(default)]
    pub frequency_convention: FrequencyConvention,
}

impl Default for PhysicalSection {
    /// The reference setup.
    fn default() -> Self {
        PhysicalSection {
            mass: "150 ng".into(),
            omega1: "1 MHz".into(),
            omega2: None,
            gamma1: "1 Hz".into(),
            gamma2: None,
            temperature: "300 K".into(),
            length: "25 mm".into(),
            kappa: "1.34 MHz".into(),
            wavelength: "1064 nm".into(),
            power1: "2 mW".into(),
            power2: None,
            delta: "1 Omega1".into(),
            topology: Topology::Unidirectional,
            frequency_convention: FrequencyConvention::Angular,
        }
    }
}

impl PhysicalSection {
    pub fn resolve(&self) -> Result<PhysicalParams<f64>> {
        let mut ctx = UnitContext { convention: self.frequency_convention, omega1: None };
        let omega1 = resolve(&self.omega1, Dimension::Mechanical, "omega1", &ctx)?;
        ctx.omega1 = Some(omega1);
        let gamma1 = resolve(&self.gamma1, Dimension::Mechanical, "gamma1", &ctx)?;
        let opt = |q: &Option<Quantity>, dim, field, default: f64| q.as_ref().map_or(Ok(default), |q| resolve(q, dim, field, &ctx));
        let p = PhysicalParams {
            mass: resolve(&self.mass, Dimension::Mass, "mass", &ctx)?,
            omega1,
            omega2: opt(&self.omega2, Dimension::Mechanical, "omega2", omega1)?,
            gamma1,
            gamma2: opt(&self.gamma2, Dimension::Mechanical, "gamma2", gamma1)?,
            t_bath: resolve(&self.temperature, Dimension::Temperature, "temperature", &ctx)?,
            length: resolve(&self.length, Dimension::Length, "length", &ctx)?,
            kappa: resolve(&self.kappa, Dimension::Optical, "kappa", &ctx)?,
            wavelength: resolve(&self.wavelength, Dimension::Length, "wavelength", &ctx)?,
            p1: resolve(&self.power1, Dimension::Power, "power1", &ctx)?,
            delta: resolve(&self.delta, Dimension::Optical, "delta", &ctx)?,
            topology: self.topology,
            p2: opt(&self.power2, Dimension::Power, "power2", 0.0)?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Where the mean field starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanFieldStart {
    /// At the stationary point; the linearization is then time independent.
    #[default]
    Steady,
    /// Empty cavities, mirrors at rest.
    Zero,
}

/// `[run]`: numerics and sweep ranges. Times are in units of τ, frequencies
/// and detunings in units of Ω₁.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub t_end: f64,
    pub samples: usize,
    pub rtol: f64,
    pub atol: f64,
    pub meanfield_start: MeanFieldStart,
    pub seed: u64,
    /// Band used for the thermalization time.
    pub rel_tol: f64,
    /// `Ω₂/Ω₁` values for the temperature sweeps.
    pub omega2_list: Vec<f64>,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_points: usize,
    pub alpha_points: usize,
    /// Largest Bessel argument `gα/Ω` on the amplitude axis.
    pub alpha_max_arg: f64,
    pub stability_delta_points: usize,
    /// Amplitude of mirror 1 held fixed in the mirror-2 map.
    pub alpha1_for_mirror2: f64,
    pub spectrum_points: usize,
    /// Spectrum window as multiples of `max(Ω₁, Ω₂)`.
    pub spectrum_min: f64,
    pub spectrum_max: f64,
    /// `Ω₂/Ω₁` values for the spectra.
    pub spectrum_omega2_list: Vec<f64>,
    pub spectrum_sign: SpectrumSign,
    pub cubic_kappa: CubicKappa,
    pub energy_offset: EnergyOffset,
    pub reduced_optical_noise: bool,
    /// `|G₁|/κ` targets for the reduced-model comparison.
    pub effective_ratios: Vec<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 50.0,
            samples: 501,
            rtol: 1e-9,
            atol: 1e-12,
            meanfield_start: MeanFieldStart::Steady,
            seed: 42,
            rel_tol: 0.01,
            omega2_list: vec![0.75, 1.0, 1.25],
            delta_min: -1.0,
            delta_max: 3.0,
            delta_points: 201,
            alpha_points: 40,
            alpha_max_arg: 10.0,
            stability_delta_points: 40,
            alpha1_for_mirror2: 0.0,
            spectrum_points: 1 << 14,
            spectrum_min: 0.2,
            spectrum_max: 1.8,
            spectrum_omega2_list: vec![0.5, 1.0, 1.5],
            spectrum_sign: SpectrumSign::Derived,
            cubic_kappa: CubicKappa::Printed,
            energy_offset: EnergyOffset::Plus,
            reduced_optical_noise: false,
            effective_ratios: vec![0.2, 0.1, 0.05],
        }
    }
}

impl RunSection {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("t_end", self.t_end),
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("rel_tol", self.rel_tol),
            ("alpha_max_arg", self.alpha_max_arg),
            ("spectrum_max", self.spectrum_max),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter { field, reason: "must be finite and strictly positive".into() });
            }
        }
        let counts = [
            ("samples", self.samples),
            ("delta_points", self.delta_points),
            ("alpha_points", self.alpha_points),
            ("stability_delta_points", self.stability_delta_points),
            ("spectrum_points", self.spectrum_points),
        ];
        for (field, n) in counts {
            if n < 2 {
                return Err(Error::InvalidParameter { field, reason: "needs at least two points".into() });
            }
        }
        if !(self.delta_max > self.delta_min) {
            return Err(Error::Grid("delta_max must exceed delta_min".into()));
        }
        if !(self.spectrum_min >= 0.0 && self.spectrum_max > self.spectrum_min) {
            return Err(Error::Grid("need 0 <= spectrum_min < spectrum_max".into()));
        }
        if !(self.alpha1_for_mirror2 >= 0.0) {
            return Err(Error::InvalidParameter { field: "alpha1_for_mirror2", reason: "must be nonnegative".into() });
        }
        let lists = [("omega2_list", &self.omega2_list), ("spectrum_omega2_list", &self.spectrum_omega2_list), ("effective_ratios", &self.effective_ratios)];
        for (field, list) in lists {
            if list.is_empty() || list.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter { field, reason: "must be a nonempty list of positive numbers".into() });
            }
        }
        Ok(())
    }

    /// Uniform detuning grid `[delta_min, delta_max]` with `n` points.
    pub fn delta_grid(&self, n: usize) -> Vec<f64> {
        let h = (self.delta_max - self.delta_min) / (n - 1) as f64;
        (0..n).map(|k| self.delta_min + h * k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub physical: PhysicalSection,
    #[serde(default)]
    pub run: RunSection,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.run.validate()?;
        cfg.physical.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Resolved SI inputs.
    pub fn physical(&self) -> Result<PhysicalParams<f64>> {
        self.physical.resolve()
    }

    /// The configuration with every physical quantity written as a bare SI
    /// number; parsing it back reproduces the run exactly.
    pub fn canonical_toml(&self) -> Result<String> {
        let p = self.physical()?;
        let physical = PhysicalSection {
            mass: p.mass.into(),
            omega1: p.omega1.into(),
            omega2: Some(p.omega2.into()),
            gamma1: p.gamma1.into(),
            gamma2: Some(p.gamma2.into()),
            temperature: p.t_bath.into(),
            length: p.length.into(),
            kappa: p.kappa.into(),
            wavelength: p.wavelength.into(),
            power1: p.p1.into(),
            power2: Some(p.p2.into()),
            delta: p.delta.into(),
            topology: p.topology,
            frequency_convention: self.physical.frequency_convention,
        };
        let cfg = Config { physical, run: self.run.clone() };
        toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))
    }

    /// `key=value` lines describing the run, for file headers.
    pub fn header_lines(&self) -> Result<Vec<String>> {
        let text = self.canonical_toml()?;
        let mut section = String::new();
        let mut out = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.to_owned();
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let mut s = String::new();
                let _ = write!(s, "{section}.{}={}", k.trim(), v.trim().trim_matches('"'));
                out.push(s);
            }
        }
        Ok(out)
    }
}
