//! Mechanical position spectra, the output spectrum of the guide, and
//! Lorentzian descriptions of the individual mirror lines.
//!
//! Frequencies are in units of Ω₁. Spectra are symmetric in ω, so
//! variances are `∫₀^∞ S dω/π`.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{cascaded_coupling, optical_susceptibility};
use crate::error::{Error, Result};
use crate::meanfield::MeanFieldState;
use crate::params::{Mirror, ModelParams};
use crate::scalar::{cplx, from_usize, lit, to_f64, Complex, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Position1,
    Position2,
    Output,
}

impl SpectrumKind {
    pub fn position(m: Mirror) -> Self {
        match m {
            Mirror::First => SpectrumKind::Position1,
            Mirror::Second => SpectrumKind::Position2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::Position1 => "position_1",
            SpectrumKind::Position2 => "position_2",
            SpectrumKind::Output => "output",
        }
    }
}

/// Sign of the `κ²|Λ|²S₁` term in the mirror-2 spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSign {
    /// `+`: the two thermal baths add incoherently.
    #[default]
    Derived,
    /// `−`, as printed; can go negative.
    Printed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub omega: Vec<T>,
    pub values: Vec<T>,
    pub kind: SpectrumKind,
    pub sign: SpectrumSign,
    pub params: ModelParams<T>,
}

impl<T: Real> Spectrum<T> {
    /// Index of the global maximum.
    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .fold((0, T::zero()), |(k, v), (i, &x)| if x > v { (i, x) } else { (k, v) })
            .0
    }

    pub fn peaks(&self, min_prominence: T) -> Vec<usize> {
        find_peaks(&self.values, min_prominence)
    }

    pub fn step(&self) -> T {
        if self.omega.len() < 2 {
            T::zero()
        } else {
            self.omega[1] - self.omega[0]
        }
    }
}

/// Uniform grid of `n ≥ 2` points on `[lo, hi]`.
pub fn frequency_grid<T: Real>(lo: T, hi: T, n: usize) -> Result<Vec<T>> {
    if n < 2 || !(hi > lo) || !(lo >= T::zero()) {
        return Err(Error::Grid(format!("need 0 <= lo < hi and n >= 2, got [{}, {}] with {n}", to_f64(lo), to_f64(hi))));
    }
    let h = (hi - lo) / from_usize(n - 1);
    Ok((0..n).map(|k| lo + h * from_usize(k)).collect())
}

pub const DEFAULT_GRID_POINTS: usize = 1 << 14;

/// `[0.2, 1.8]·max(Ω₁, Ω₂)` with 2¹⁴ points.
pub fn default_grid<T: Real>(mp: &ModelParams<T>) -> Vec<T> {
    let w = mp.omega[0].max(mp.omega[1]);
    frequency_grid(w * lit(0.2), w * lit(1.8), DEFAULT_GRID_POINTS).expect("positive frequencies")
}

/// Linear response of the steady state, frozen at the mean-field point.
#[derive(Debug, Clone)]
pub struct SpectralModel<T> {
    pub mp: ModelParams<T>,
    pub coupling: [Complex<T>; 2],
    pub detuning: [T; 2],
}

impl<T: Real> SpectralModel<T> {
    pub fn new(mp: &ModelParams<T>, s: &MeanFieldState<T>) -> Self {
        SpectralModel {
            mp: mp.clone(),
            coupling: [s.coupling(mp, Mirror::First), s.coupling(mp, Mirror::Second)],
            detuning: [s.detuning(mp, Mirror::First), s.detuning(mp, Mirror::Second)],
        }
    }

    fn chi_a(&self, j: usize, w: T) -> Complex<T> {
        optical_susceptibility(w, self.mp.kappa, self.detuning[j])
    }

    /// Bare `χ_j(ω) = Ω_j/(Ω_j² − ω² − iωγ_j)`.
    pub fn mech_susceptibility(&self, m: Mirror, w: T) -> Complex<T> {
        let j = m.index();
        let o = self.mp.omega[j];
        cplx(o, T::zero()) / cplx(o * o - w * w, -w * self.mp.gamma[j])
    }

    pub fn effective_susceptibility(&self, m: Mirror, w: T) -> Complex<T> {
        let j = m.index();
        let chi = self.mech_susceptibility(m, w);
        let x = self.chi_a(j, w) - self.chi_a(j, -w).conj();
        let den = cplx(T::one(), T::zero()) - cplx(T::zero(), self.coupling[j].norm_sqr()) * chi * x;
        let floor = lit::<T>(1e-300);
        if den.norm_sqr() < floor * floor {
            return chi / cplx(floor, T::zero());
        }
        chi / den
    }

    pub fn lambda(&self, w: T) -> Complex<T> {
        cascaded_coupling(w, self.mp.kappa, self.coupling, self.detuning)
    }

    fn thermal_drive(&self, j: usize) -> T {
        self.mp.gamma[j] * (lit::<T>(2.0) * self.mp.nbar[j] + T::one())
    }

    pub fn position_density(&self, m: Mirror, w: T, sign: SpectrumSign) -> T {
        let s1 = self.thermal_drive(0) * self.effective_susceptibility(Mirror::First, w).norm_sqr();
        match m {
            Mirror::First => s1,
            Mirror::Second => {
                let k2 = self.mp.kappa * self.mp.kappa;
                let cross = k2 * self.lambda(w).norm_sqr() * s1;
                let cross = match sign {
                    SpectrumSign::Derived => cross,
                    SpectrumSign::Printed => -cross,
                };
                (self.thermal_drive(1) + cross) * self.effective_susceptibility(Mirror::Second, w).norm_sqr()
            }
        }
    }

    /// `K_j = κ|G_jχ_{a_j}(ω) − G_j*χ*_{a_j}(−ω)|²/2`.
    pub fn output_weight(&self, m: Mirror, w: T) -> T {
        let j = m.index();
        let g = self.coupling[j];
        let z = g * self.chi_a(j, w) - g.conj() * self.chi_a(j, -w).conj();
        self.mp.kappa * z.norm_sqr() * lit(0.5)
    }

    pub fn output_density(&self, w: T, sign: SpectrumSign) -> T {
        Mirror::BOTH.iter().map(|&m| self.output_weight(m, w) * self.position_density(m, w, sign)).fold(T::zero(), |a, b| a + b)
    }

    /// Frequency-dependent spring `Ω̃_j(ω)` and width `γ̃_j(ω)`.
    pub fn renormalized(&self, m: Mirror, w: T) -> (T, T) {
        let j = m.index();
        let (k, d, o) = (self.mp.kappa, self.detuning[j], self.mp.omega[j]);
        let q = k * k * lit(0.25);
        let den = (q + (w - d).powi(2)) * (q + (w + d).powi(2));
        let g2 = self.coupling[j].norm_sqr();
        let two = lit::<T>(2.0);
        let spring = o * o - g2 * two * d * o * (q + d * d - w * w) / den;
        let width = self.mp.gamma[j] + g2 * two * k * d * o / den;
        (spring.max(T::zero()).sqrt(), width)
    }

    fn spectrum(&self, kind: SpectrumKind, grid: &[T], sign: SpectrumSign, f: impl Fn(T) -> T + Sync) -> Result<Spectrum<T>> {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Grid("frequency grid must be strictly increasing with at least two points".into()));
        }
        let values: Vec<T> = grid.par_iter().map(|&w| f(w)).collect();
        if let Some((k, &v)) = values.iter().enumerate().find(|(_, &v)| v < lit(-1e-12) || !v.is_finite()) {
            return Err(Error::NegativeSpectrum { omega: to_f64(grid[k]), value: to_f64(v) });
        }
        Ok(Spectrum { omega: grid.to_vec(), values, kind, sign, params: self.mp.clone() })
    }
}

pub fn effective_mech_susceptibility<T: Real>(omega: T, mp: &ModelParams<T>, s: &MeanFieldState<T>, m: Mirror) -> Complex<T> {
    SpectralModel::new(mp, s).effective_susceptibility(m, omega)
}

pub fn position_spectrum<T: Real>(
    m: Mirror,
    mp: &ModelParams<T>,
    s: &MeanFieldState<T>,
    grid: &[T],
    sign: SpectrumSign,
) -> Result<Spectrum<T>> {
    let sm = SpectralModel::new(mp, s);
    sm.spectrum(SpectrumKind::position(m), grid, sign, |w| sm.position_density(m, w, sign))
}

/// `P_out = K₁S₁ + K₂S₂`, with the proportionality taken as equality.
pub fn output_spectrum<T: Real>(mp: &ModelParams<T>, s: &MeanFieldState<T>, grid: &[T], sign: SpectrumSign) -> Result<Spectrum<T>> {
    let sm = SpectralModel::new(mp, s);
    sm.spectrum(SpectrumKind::Output, grid, sign, |w| sm.output_density(w, sign))
}

/// `⟨δq_j²⟩ = ∫₀^∞ S_j dω/π` on a grid refined around every line, plus the
/// `ω⁻⁴` tail beyond `50·max Ω`.
pub fn spectral_variance<T: Real>(m: Mirror, mp: &ModelParams<T>, s: &MeanFieldState<T>, sign: SpectrumSign) -> Result<T> {
    let sm = SpectralModel::new(mp, s);
    let top = mp.omega[0].max(mp.omega[1]) * lit(50.0);
    let mut grid: Vec<T> = frequency_grid(T::zero(), top, 20_001)?;
    for p in Mirror::BOTH {
        let (c, w) = sm.renormalized(p, mp.omega[p.index()]);
        let h = (w.abs().max(mp.gamma[p.index()]) * lit(0.5)).max(T::EPS.sqrt());
        refine_around(&mut grid, c, h, top);
    }
    grid.retain(|&w| w >= T::zero() && w <= top);
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    let values: Vec<T> = grid.par_iter().map(|&w| sm.position_density(m, w, sign)).collect();
    if let Some((k, &v)) = values.iter().enumerate().find(|(_, &v)| v < lit(-1e-12)) {
        return Err(Error::NegativeSpectrum { omega: to_f64(grid[k]), value: to_f64(v) });
    }
    let body = trapezoid(&grid, &values);
    let j = m.index();
    let o = mp.omega[j];
    let tail = sm.thermal_drive(j) * o * o / (lit::<T>(3.0) * top.powi(3));
    Ok((body + tail) / T::pi())
}

/// Adds a tangent-mapped core and log-spaced shoulders around a Lorentzian
/// line at `c` with half width `h`.
fn refine_around<T: Real>(grid: &mut Vec<T>, c: T, h: T, top: T) {
    let n = 2000;
    let half_pi = T::frac_pi_2();
    for k in 1..n {
        let th = -half_pi + T::pi() * from_usize(k) / from_usize(n);
        grid.push(c + h * th.tan());
    }
    let decades = (top / h).log10().max(T::one());
    let per = 60usize;
    let m = (to_f64(decades) * per as f64).ceil() as usize;
    for k in 0..=m {
        let d = h * lit::<T>(10.0).powf(decades * from_usize(k) / from_usize(m));
        grid.push(c + d);
        grid.push(c - d);
    }
}

pub fn trapezoid<T: Real>(x: &[T], y: &[T]) -> T {
    x.windows(2).zip(y.windows(2)).fold(T::zero(), |acc, (xs, ys)| acc + (xs[1] - xs[0]) * (ys[0] + ys[1]) * lit(0.5))
}

/// Local maxima whose prominence exceeds `min_prominence`.
pub fn find_peaks<T: Real>(values: &[T], min_prominence: T) -> Vec<usize> {
    let n = values.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            // Flat tops count once, at their left edge.
            let mut r = i;
            while r + 1 < n && values[r + 1] == values[i] {
                r += 1;
            }
            if r + 1 < n && values[r + 1] < values[i] {
                let v = values[i];
                let mut left_min = v;
                let mut k = i;
                while k > 0 && values[k - 1] <= v {
                    k -= 1;
                    left_min = left_min.min(values[k]);
                }
                let mut right_min = v;
                let mut k = r;
                while k + 1 < n && values[k + 1] <= v {
                    k += 1;
                    right_min = right_min.min(values[k]);
                }
                if v - left_min.max(right_min) >= min_prominence {
                    out.push(i);
                }
            }
            i = r + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Full width at half maximum of the peak at `k`, by linear interpolation.
pub fn half_width<T: Real>(omega: &[T], values: &[T], k: usize) -> T {
    let half = values[k] * lit(0.5);
    let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> T {
        for i in range {
            let j = (i as isize + step) as usize;
            if values[j] <= half {
                let t = (values[i] - half) / (values[i] - values[j]);
                return omega[i] + (omega[j] - omega[i]) * t;
            }
        }
        if step < 0 {
            omega[0]
        } else {
            omega[omega.len() - 1]
        }
    };
    let right = cross(&mut (k..omega.len() - 1), 1);
    let left = cross(&mut (1..=k).rev(), -1);
    right - left
}

/// `a·(w/2)²/((ω − c)² + (w/2)²)`; `width` is the full width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit<T> {
    pub center: T,
    pub width: T,
    pub amplitude: T,
    pub residual: T,
}

impl<T: Real> LorentzianFit<T> {
    pub fn eval(&self, w: T) -> T {
        let h = self.width * lit(0.5);
        self.amplitude * h * h / ((w - self.center).powi(2) + h * h)
    }
}

/// Analytic line of one mirror together with the number of peaks the exact
/// spectrum shows around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianApprox<T> {
    pub fit: LorentzianFit<T>,
    pub peaks: usize,
}

/// Relative prominence below which a local maximum is not counted as a peak.
pub const PEAK_PROMINENCE: f64 = 0.05;

/// Lorentzian with `Ω̃_j`, `γ̃_j` frozen at `ω = Ω_j`.
pub fn lorentzian_approx<T: Real>(m: Mirror, mp: &ModelParams<T>, s: &MeanFieldState<T>) -> Result<LorentzianApprox<T>> {
    let sm = SpectralModel::new(mp, s);
    let j = m.index();
    let o = mp.omega[j];
    let (center, width) = sm.renormalized(m, o);
    if !(width > T::zero()) || !(center > T::zero()) {
        return Err(Error::NonPhysical(format!("renormalized line of mirror {} is not damped", j + 1)));
    }
    let amplitude = sm.thermal_drive(j) * o * o / (center * center * width * width);
    let mut fit = LorentzianFit { center, width, amplitude, residual: T::zero() };

    let probe: Vec<T> = (0..=200).map(|k| center + width * lit::<T>(3.0) * (from_usize::<T>(k) / lit(100.0) - T::one())).collect();
    let rms = probe
        .iter()
        .map(|&w| {
            let exact = sm.thermal_drive(j) * sm.effective_susceptibility(m, w).norm_sqr();
            ((fit.eval(w) - exact) / exact).powi(2)
        })
        .fold(T::zero(), |a, b| a + b);
    fit.residual = (rms / from_usize(probe.len())).sqrt();

    let grid = frequency_grid(o * lit(0.2), o * lit(1.8), DEFAULT_GRID_POINTS)?;
    let exact: Vec<T> = grid.par_iter().map(|&w| sm.thermal_drive(j) * sm.effective_susceptibility(m, w).norm_sqr()).collect();
    let top = exact.iter().fold(T::zero(), |a, &b| a.max(b));
    let peaks = find_peaks(&exact, top * lit(PEAK_PROMINENCE)).len();
    if peaks > 1 {
        log::warn!("mirror {} spectrum shows {peaks} peaks; the single-Lorentzian picture does not apply", j + 1);
    }
    Ok(LorentzianApprox { fit, peaks })
}

struct TwoLines<'a> {
    omega: &'a [f64],
    data: &'a [f64],
    weights: [&'a [f64]; 2],
    /// `(c, ln w, ln a)` per line.
    p: DVector<f64>,
}

impl TwoLines<'_> {
    fn line(&self, k: usize, w: f64) -> (f64, f64, f64, f64) {
        let (c, hw, a) = (self.p[3 * k], 0.5 * self.p[3 * k + 1].exp(), self.p[3 * k + 2].exp());
        let x = w - c;
        let d = x * x + hw * hw;
        let l = a * hw * hw / d;
        let dc = a * hw * hw * 2.0 * x / (d * d);
        let dw = 2.0 * a * hw * hw * x * x / (d * d);
        (l, dc, dw, l)
    }

    fn cost(&self) -> f64 {
        self.residuals().map_or(f64::INFINITY, |r| r.norm_squared())
    }
}

impl LeastSquaresProblem<f64, Dyn, Dyn> for TwoLines<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = DVector::from_iterator(
            self.omega.len(),
            self.omega.iter().zip(self.data).enumerate().map(|(i, (&w, &y))| {
                let model = self.line(0, w).0 * self.weights[0][i] + self.line(1, w).0 * self.weights[1][i];
                (model - y) / y
            }),
        );
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(self.omega.len(), 6);
        for (i, (&w, &y)) in self.omega.iter().zip(self.data).enumerate() {
            for k in 0..2 {
                let (_, dc, dw, da) = self.line(k, w);
                let s = self.weights[k][i] / y;
                jac[(i, 3 * k)] = dc * s;
                jac[(i, 3 * k + 1)] = dw * s;
                jac[(i, 3 * k + 2)] = da * s;
            }
        }
        jac.iter().all(|v| v.is_finite()).then_some(jac)
    }
}

/// Number of jittered restarts tried after the peak-based initial guess.
const RESTARTS: usize = 4;

/// Fits `Σ_k weights_k(ω)·L_k(ω)` to positive `data`, starting from
/// `init`, with relative residuals.
pub fn fit_two_lorentzians<T: Real>(
    omega: &[T],
    data: &[T],
    weights: [&[T]; 2],
    init: [LorentzianFit<T>; 2],
    seed: u64,
) -> Result<[LorentzianFit<T>; 2]> {
    let n = omega.len();
    if n < 6 || data.len() != n || weights.iter().any(|w| w.len() != n) {
        return Err(Error::Fit("need at least six samples and matching lengths".into()));
    }
    if data.iter().any(|&y| !(y > T::zero())) {
        return Err(Error::Fit("data must be strictly positive".into()));
    }
    let f = |v: &[T]| v.iter().map(|&x| to_f64(x)).collect::<Vec<f64>>();
    let (om, y, w0, w1) = (f(omega), f(data), f(weights[0]), f(weights[1]));
    let start = DVector::from_iterator(6, init.iter().flat_map(|l| [to_f64(l.center), to_f64(l.width).ln(), to_f64(l.amplitude).ln()]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for attempt in 0..=RESTARTS {
        let mut p = start.clone();
        if attempt > 0 {
            for k in 0..2 {
                p[3 * k] += rng.gen_range(-0.25..0.25) * p[3 * k + 1].exp();
                p[3 * k + 1] += rng.gen_range(-0.3..0.3);
                p[3 * k + 2] += rng.gen_range(-0.3..0.3);
            }
        }
        let problem = TwoLines { omega: &om, data: &y, weights: [&w0, &w1], p };
        let (solved, report) = LevenbergMarquardt::new().with_patience(400).minimize(problem);
        let cost = solved.cost();
        log::debug!("fit attempt {attempt}: {:?}, cost {cost:e}", report.termination);
        if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, solved.p));
        }
    }
    let (cost, p) = best.ok_or_else(|| Error::Fit("no finite fit".into()))?;
    let residual = lit::<T>((cost / n as f64).sqrt());
    let mut out = [0, 1].map(|k| LorentzianFit {
        center: lit(p[3 * k]),
        width: lit(p[3 * k + 1].exp()),
        amplitude: lit(p[3 * k + 2].exp()),
        residual,
    });
    out.sort_by(|a, b| a.center.partial_cmp(&b.center).expect("finite centers"));
    Ok(out)
}

/// Splits an output spectrum into the two mirror lines by fitting
/// `K₁L₁ + K₂L₂` around its two most prominent peaks. Lines are returned in
/// mirror order, assigned by proximity to `Ω̃_j`.
pub fn reconstruct_mirror_spectra<T: Real>(
    out: &Spectrum<T>,
    mp: &ModelParams<T>,
    s: &MeanFieldState<T>,
    seed: u64,
) -> Result<[LorentzianFit<T>; 2]> {
    let sm = SpectralModel::new(mp, s);
    let top = out.values.iter().fold(T::zero(), |a, &b| a.max(b));
    let mut peaks = out.peaks(top * lit(1e-3));
    let prominence = |k: usize| out.values[k];
    peaks.sort_by(|&a, &b| prominence(b).partial_cmp(&prominence(a)).expect("finite spectrum"));
    peaks.truncate(2);
    peaks.sort_unstable();
    if peaks.len() < 2 {
        return Err(Error::UnresolvablePeaks { separation: 0.0, half_widths: to_f64(half_width(&out.omega, &out.values, out.argmax())) });
    }
    let widths = [half_width(&out.omega, &out.values, peaks[0]), half_width(&out.omega, &out.values, peaks[1])];
    let separation = out.omega[peaks[1]] - out.omega[peaks[0]];
    let half_sum = (widths[0] + widths[1]) * lit(0.5);
    if separation < half_sum {
        return Err(Error::UnresolvablePeaks { separation: to_f64(separation), half_widths: to_f64(half_sum) });
    }

    // Assign peaks to mirrors by their renormalized frequencies.
    let centers = [sm.renormalized(Mirror::First, mp.omega[0]).0, sm.renormalized(Mirror::Second, mp.omega[1]).0];
    let near = |k: usize, j: usize| (out.omega[k] - centers[j]).abs();
    let order = if near(peaks[0], 0) + near(peaks[1], 1) <= near(peaks[0], 1) + near(peaks[1], 0) { [0, 1] } else { [1, 0] };

    let mut keep = vec![false; out.omega.len()];
    for (i, &k) in peaks.iter().enumerate() {
        let reach = widths[i] * lit(5.0);
        for (flag, &w) in keep.iter_mut().zip(&out.omega) {
            if (w - out.omega[k]).abs() <= reach {
                *flag = true;
            }
        }
    }
    let idx: Vec<usize> = (0..out.omega.len()).filter(|&i| keep[i] && out.values[i] > T::zero()).collect();
    let om: Vec<T> = idx.iter().map(|&i| out.omega[i]).collect();
    let y: Vec<T> = idx.iter().map(|&i| out.values[i]).collect();
    let kw = |m: Mirror| om.iter().map(|&w| sm.output_weight(m, w)).collect::<Vec<T>>();
    let weights = [kw(Mirror::First), kw(Mirror::Second)];

    // `slot[j]` is the peak (and, after sorting, the fitted line) of mirror j.
    let slot = order;
    let init = [Mirror::First, Mirror::Second].map(|m| {
        let i = slot[m.index()];
        let k = peaks[i];
        let kj = sm.output_weight(m, out.omega[k]).max(T::TINY);
        LorentzianFit { center: out.omega[k], width: widths[i], amplitude: out.values[k] / kj, residual: T::zero() }
    });
    let sorted = fit_two_lorentzians(&om, &y, [&weights[0], &weights[1]], init, seed)?;
    let fits = [sorted[slot[0]], sorted[slot[1]]];
    if fits.iter().any(|f| !(f.width > T::zero()) || !f.residual.is_finite()) {
        return Err(Error::Fit("degenerate line".into()));
    }
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::steady_meanfield;
    use crate::params::{nondimensionalize, FrequencyConvention, PhysicalParams};

    fn reference(p1: f64, omega2: f64) -> (ModelParams<f64>, MeanFieldState<f64>) {
        let mut p = PhysicalParams::reference_setup(FrequencyConvention::Angular);
        p.p1 = p1;
        p.omega2 = omega2 * p.omega1;
        let mp = nondimensionalize(&p).unwrap();
        let s = steady_meanfield(&mp).unwrap();
        (mp, s)
    }

    #[test]
    fn uncoupled_susceptibility_is_bare() {
        let (mp, _) = reference(1e-5, 1.0);
        let s = MeanFieldState::zero();
        let sm = SpectralModel::new(&mp, &s);
        for w in [0.0, 0.3, 1.0, 1.7] {
            assert_eq!(sm.effective_susceptibility(Mirror::First, w), sm.mech_susceptibility(Mirror::First, w));
        }
        assert!((sm.mech_susceptibility(Mirror::First, 0.0) - Complex::new(1.0, 0.0)).norm() < 1e-15);
        let (o, g) = sm.renormalized(Mirror::Second, 0.9);
        assert_eq!((o, g), (mp.omega[1], mp.gamma[1]));
    }

    #[test]
    fn renormalized_form_is_exact() {
        let (mp, s) = reference(1e-4, 1.3);
        let sm = SpectralModel::new(&mp, &s);
        for m in Mirror::BOTH {
            for w in [0.4, 0.95, 1.0, 1.31, 1.6] {
                let (o, g) = sm.renormalized(m, w);
                let frozen = Complex::new(mp.omega[m.index()], 0.0) / Complex::new(o * o - w * w, -g * w);
                let exact = sm.effective_susceptibility(m, w);
                assert!((frozen - exact).norm() < 1e-9 * exact.norm(), "{m:?} {w}");
            }
        }
    }

    #[test]
    fn printed_sign_reduces_mirror_two() {
        let (mp, s) = reference(1e-5, 1.0);
        let sm = SpectralModel::new(&mp, &s);
        let d = sm.position_density(Mirror::Second, 1.0, SpectrumSign::Derived);
        let p = sm.position_density(Mirror::Second, 1.0, SpectrumSign::Printed);
        assert!(p < d);
    }

    #[test]
    fn output_is_weighted_sum() {
        let (mp, s) = reference(1e-5, 0.5);
        let grid = frequency_grid(0.2, 1.8, 257).unwrap();
        let out = output_spectrum(&mp, &s, &grid, SpectrumSign::Derived).unwrap();
        let s1 = position_spectrum(Mirror::First, &mp, &s, &grid, SpectrumSign::Derived).unwrap();
        let s2 = position_spectrum(Mirror::Second, &mp, &s, &grid, SpectrumSign::Derived).unwrap();
        let sm = SpectralModel::new(&mp, &s);
        for (i, &w) in grid.iter().enumerate() {
            let sum = sm.output_weight(Mirror::First, w) * s1.values[i] + sm.output_weight(Mirror::Second, w) * s2.values[i];
            assert!((out.values[i] - sum).abs() <= 1e-14 * sum.abs());
        }
    }

    #[test]
    fn thermal_lorentzian_variance() {
        let (mp, _) = reference(1e-5, 1.0);
        let s = MeanFieldState::zero();
        let v = spectral_variance(Mirror::First, &mp, &s, SpectrumSign::Derived).unwrap();
        let expect = mp.nbar[0] + 0.5;
        assert!((v - expect).abs() < 1e-4 * expect, "{v} {expect}");
    }

    #[test]
    fn peaks_and_widths() {
        let x: Vec<f64> = (0..2001).map(|k| k as f64 * 0.001).collect();
        let a = LorentzianFit { center: 0.6, width: 0.02, amplitude: 2.0, residual: 0.0 };
        let b = LorentzianFit { center: 1.4, width: 0.05, amplitude: 1.0, residual: 0.0 };
        let y: Vec<f64> = x.iter().map(|&w| a.eval(w) + b.eval(w)).collect();
        let p = find_peaks(&y, 0.1);
        assert_eq!(p, vec![600, 1400]);
        assert!((half_width(&x, &y, 600) - 0.02).abs() < 1e-3);
        assert!(find_peaks(&[1.0, 2.0, 2.0, 1.0], 0.5) == vec![1]);
        assert!(find_peaks(&[1.0, 2.0, 3.0], 0.5).is_empty());
    }

    #[test]
    fn two_line_fit_recovers_its_own_model() {
        let x: Vec<f64> = (0..4001).map(|k| 0.2 + k as f64 * 0.0004).collect();
        let truth = [
            LorentzianFit { center: 0.7, width: 0.01, amplitude: 3.0, residual: 0.0 },
            LorentzianFit { center: 1.2, width: 0.03, amplitude: 0.5, residual: 0.0 },
        ];
        let k0: Vec<f64> = x.iter().map(|&w| 1.0 + 0.1 * w).collect();
        let k1: Vec<f64> = x.iter().map(|&w| 2.0 - 0.5 * w).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, &w)| k0[i] * truth[0].eval(w) + k1[i] * truth[1].eval(w)).collect();
        let init = [
            LorentzianFit { center: 0.705, width: 0.012, amplitude: 2.0, residual: 0.0 },
            LorentzianFit { center: 1.19, width: 0.02, amplitude: 0.7, residual: 0.0 },
        ];
        let fit = fit_two_lorentzians(&x, &y, [&k0, &k1], init, 7).unwrap();
        for (f, t) in fit.iter().zip(&truth) {
            assert!((f.center - t.center).abs() < 1e-6 * t.center);
            assert!((f.width - t.width).abs() < 1e-6 * t.width);
            assert!((f.amplitude - t.amplitude).abs() < 1e-6 * t.amplitude);
        }
    }

    #[test]
    fn bad_grids_are_rejected() {
        assert!(frequency_grid(1.0, 0.5, 10).is_err());
        assert!(frequency_grid(0.0, 1.0, 1).is_err());
        let (mp, s) = reference(1e-5, 1.0);
        assert!(position_spectrum(Mirror::First, &mp, &s, &[1.0, 0.5], SpectrumSign::Derived).is_err());
    }
}
