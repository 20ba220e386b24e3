//! Self-induced oscillations. For an assumed limit cycle
//! `Q_j(t) = Q̄_j + α_j cos(Ω_j t)` the cavity amplitudes are Bessel series;
//! time-averaging them gives the radiation-pressure power, whose ratio to the
//! friction loss maps where limit cycles can sustain themselves.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::{truncation_order, BesselTable};
use crate::effective::{effective_rates, optical_susceptibility};
use crate::error::{Error, Result};
use crate::meanfield::MeanFieldState;
use crate::params::{Mirror, ModelParams, Topology};
use crate::scalar::{cis, cplx, from_i64, from_usize, lit, to_f64, Complex, Real};

/// Bessel terms are kept until `(x/2)ⁿ/n!` drops below this.
pub const BESSEL_TOL: f64 = 1e-13;
/// Hard cap on the Bessel truncation order.
pub const BESSEL_CAP: usize = 400;

/// `Ω₂/Ω₁ ≈ p/q` with `q ≤ 100`, accepted when within `1e-6` relative.
pub fn rational_ratio(r: f64) -> Option<(i64, i64)> {
    if !(r > 0.0) || !r.is_finite() {
        return None;
    }
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut x = r;
    for _ in 0..40 {
        let a = x.floor();
        let ai = a as i64;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > 100 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if ((h1 as f64 / k1 as f64) - r).abs() <= 1e-6 * r {
            return Some((h1, k1));
        }
        let frac = x - a;
        if frac < 1e-15 {
            break;
        }
        x = 1.0 / frac;
    }
    None
}

/// Cavity amplitudes on an assumed pair of limit cycles.
#[derive(Debug, Clone)]
pub struct BesselAmplitudes<T: Real> {
    pub qbar: [T; 2],
    pub alpha: [T; 2],
    /// Bessel arguments `x_j = g_j α_j/Ω_j`.
    pub x: [T; 2],
    pub n_max: [usize; 2],
    /// `A₁ⁿ` for `n = −N₁..=N₁`.
    pub a1: Vec<Complex<T>>,
    /// Collapsed cavity-2 coefficients `C_{k,m}` (`k = n + l`), flattened as
    /// `(k + 2N₁)·(2N₂+1) + (m + N₂)`.
    pub c2: Vec<Complex<T>>,
    /// Set when some argument needed more terms than [`BESSEL_CAP`].
    pub truncated: bool,
    omega: [T; 2],
    j1: BesselTable<T>,
    j2: BesselTable<T>,
    chi1: Vec<Complex<T>>,
    /// `D_k = Σ_n J_n(−x₁) J_{k−n}(x₁) χ_{a₁}(−nΩ₁)`, independent of `Q̄₂`.
    d: Vec<Complex<T>>,
    kappa: T,
    drive: T,
    detuning: [T; 2],
}

fn orders<T: Real>(x: T) -> (usize, bool) {
    let n = truncation_order(x, lit(BESSEL_TOL), BESSEL_CAP);
    let capped = n >= BESSEL_CAP;
    if capped {
        log::warn!("Bessel series truncated at {BESSEL_CAP} for argument {:e}", to_f64(x));
    }
    (n, capped)
}

impl<T: Real> BesselAmplitudes<T> {
    fn tables(mp: &ModelParams<T>, alpha: [T; 2], n_max: Option<[usize; 2]>) -> ([T; 2], [usize; 2], bool, [BesselTable<T>; 2]) {
        let x = [mp.g[0] * alpha[0] / mp.omega[0], mp.g[1] * alpha[1] / mp.omega[1]];
        let (o1, t1) = orders(x[0]);
        let (o2, t2) = orders(x[1]);
        let n = n_max.unwrap_or([o1, o2]);
        (x, n, t1 || t2, [BesselTable::new(2 * n[0] + 1, x[0]), BesselTable::new(n[1] + 1, x[1])])
    }

    fn build(mp: &ModelParams<T>, qbar: [T; 2], alpha: [T; 2], n_max: Option<[usize; 2]>) -> Self {
        let (x, n, truncated, [j1, j2]) = Self::tables(mp, alpha, n_max);
        let detuning = [mp.delta - mp.g[0] * qbar[0], mp.delta - mp.g[1] * qbar[1]];
        let mut out = BesselAmplitudes {
            qbar,
            alpha,
            x,
            n_max: n,
            a1: Vec::new(),
            c2: Vec::new(),
            truncated,
            omega: mp.omega,
            j1,
            j2,
            chi1: Vec::new(),
            d: Vec::new(),
            kappa: mp.kappa,
            drive: mp.drive[0],
            detuning,
        };
        out.fill_first();
        out.fill_second();
        out
    }

    fn fill_first(&mut self) {
        let n1 = self.n_max[0] as i64;
        self.chi1 = (-n1..=n1)
            .map(|n| optical_susceptibility(-from_i64::<T>(n) * self.omega[0], self.kappa, self.detuning[0]))
            .collect();
        self.a1 = (-n1..=n1)
            .map(|n| self.chi1[(n + n1) as usize] * (self.j1.get(n) * parity::<T>(n) * self.drive))
            .collect();
        // J_n(−x) = (−1)ⁿ J_n(x).
        self.d = (-2 * n1..=2 * n1)
            .map(|k| {
                (-n1..=n1)
                    .filter(|n| (k - n).abs() <= n1)
                    .map(|n| self.chi1[(n + n1) as usize] * (self.j1.get(n) * parity(n) * self.j1.get(k - n)))
                    .fold(cplx(T::zero(), T::zero()), |a, b| a + b)
            })
            .collect();
    }

    fn fill_second(&mut self) {
        let n1 = self.n_max[0] as i64;
        let n2 = self.n_max[1] as i64;
        let w = (2 * n2 + 1) as usize;
        let mut c2 = vec![cplx(T::zero(), T::zero()); (4 * n1 + 1) as usize * w];
        for k in -2 * n1..=2 * n1 {
            let dk = self.d[(k + 2 * n1) as usize];
            for m in -n2..=n2 {
                let nu = from_i64::<T>(k) * self.omega[0] + from_i64::<T>(m) * self.omega[1];
                let chi2 = optical_susceptibility(-nu, self.kappa, self.detuning[1]);
                let jm = self.j2.get(m) * parity(m);
                c2[(k + 2 * n1) as usize * w + (m + n2) as usize] = dk * chi2 * (-self.kappa * self.drive * jm);
            }
        }
        self.c2 = c2;
    }

    fn with_qbar(&self, m: Mirror, q: T, mp: &ModelParams<T>) -> Self {
        let mut out = self.clone();
        out.qbar[m.index()] = q;
        out.detuning = [mp.delta - mp.g[0] * out.qbar[0], mp.delta - mp.g[1] * out.qbar[1]];
        if m == Mirror::First {
            out.fill_first();
        }
        out.fill_second();
        out
    }

    /// `⟨|A₁|²⟩` at a trial `Q̄₁`, without rebuilding the tables.
    fn first_power(&self, q: T, mp: &ModelParams<T>) -> T {
        let n1 = self.n_max[0] as i64;
        let det = mp.delta - mp.g[0] * q;
        (-n1..=n1).fold(T::zero(), |acc, n| {
            let chi = optical_susceptibility(-from_i64::<T>(n) * self.omega[0], self.kappa, det);
            acc + chi.norm_sqr() * (self.j1.get(n) * self.drive).powi(2)
        })
    }

    pub fn a1_coefficient(&self, n: i64) -> Complex<T> {
        let n1 = self.n_max[0] as i64;
        if n.abs() > n1 {
            return cplx(T::zero(), T::zero());
        }
        self.a1[(n + n1) as usize]
    }

    pub fn c2_coefficient(&self, k: i64, m: i64) -> Complex<T> {
        let (n1, n2) = (self.n_max[0] as i64, self.n_max[1] as i64);
        if k.abs() > 2 * n1 || m.abs() > n2 {
            return cplx(T::zero(), T::zero());
        }
        self.c2[(k + 2 * n1) as usize * (2 * n2 + 1) as usize + (m + n2) as usize]
    }

    /// Triple-index coefficient
    /// `−κE J_n(−x₁)J_m(−x₂)J_l(x₁) χ_{a₁}(−nΩ₁) χ_{a₂}(−(n+l)Ω₁ − mΩ₂)`.
    pub fn a2_coefficient(&self, n: i64, m: i64, l: i64) -> Complex<T> {
        let n1 = self.n_max[0] as i64;
        if n.abs() > n1 || l.abs() > n1 || m.abs() > self.n_max[1] as i64 {
            return cplx(T::zero(), T::zero());
        }
        let nu = from_i64::<T>(n + l) * self.omega[0] + from_i64::<T>(m) * self.omega[1];
        let chi2 = optical_susceptibility(-nu, self.kappa, self.detuning[1]);
        let j = self.j1.get(n) * parity(n) * self.j2.get(m) * parity(m) * self.j1.get(l);
        self.chi1[(n + n1) as usize] * chi2 * (-self.kappa * self.drive * j)
    }

    /// `A₁(t)` reconstructed from the series.
    pub fn a1_at(&self, t: T) -> Complex<T> {
        let n1 = self.n_max[0] as i64;
        let w = self.omega[0];
        let sum = (-n1..=n1).fold(cplx(T::zero(), T::zero()), |acc, n| acc + self.a1_coefficient(n) * cis(from_i64::<T>(n) * w * t));
        cis(self.x[0] * (w * t).sin()) * sum
    }

    /// `A₂(t)` reconstructed from the series.
    pub fn a2_at(&self, t: T) -> Complex<T> {
        let (n1, n2) = (self.n_max[0] as i64, self.n_max[1] as i64);
        let mut sum = cplx(T::zero(), T::zero());
        for k in -2 * n1..=2 * n1 {
            for m in -n2..=n2 {
                let nu = from_i64::<T>(k) * self.omega[0] + from_i64::<T>(m) * self.omega[1];
                sum += self.c2_coefficient(k, m) * cis(nu * t);
            }
        }
        cis(self.x[1] * (self.omega[1] * t).sin()) * sum
    }

    /// `(⟨|A_j|²⟩, ⟨|A_j|² sin Ω_j t⟩)` over the common period.
    pub fn averages(&self, m: Mirror) -> (T, T) {
        match m {
            Mirror::First => {
                let n1 = self.n_max[0] as i64;
                let mean = self.a1.iter().fold(T::zero(), |a, z| a + z.norm_sqr());
                let s = (-n1..n1).fold(cplx(T::zero(), T::zero()), |a, n| a + self.a1_coefficient(n) * self.a1_coefficient(n + 1).conj());
                (mean, s.im)
            }
            Mirror::Second => {
                let lines = self.second_lines();
                let mean = lines.values().fold(T::zero(), |a, z| a + z.norm_sqr());
                let s = lines.iter().fold(cplx(T::zero(), T::zero()), |a, (key, &c)| {
                    let up = self.shift_key(*key);
                    a + lines.get(&up).map_or(cplx(T::zero(), T::zero()), |&d| c * d.conj())
                });
                (mean, s.im)
            }
        }
    }

    /// Cavity-2 amplitudes merged by frequency. With `Ω₂/Ω₁ = p/q` the key
    /// of `kΩ₁ + mΩ₂` is `(kq + mp, 0)`; otherwise the lines are distinct and
    /// keyed `(k, m)`.
    fn second_lines(&self) -> BTreeMap<(i64, i64), Complex<T>> {
        let (n1, n2) = (self.n_max[0] as i64, self.n_max[1] as i64);
        let ratio = rational_ratio(to_f64(self.omega[1] / self.omega[0]));
        let mut lines = BTreeMap::new();
        for k in -2 * n1..=2 * n1 {
            for m in -n2..=n2 {
                let key = match ratio {
                    Some((p, q)) => (k * q + m * p, 0),
                    None => (k, m),
                };
                *lines.entry(key).or_insert(cplx(T::zero(), T::zero())) += self.c2_coefficient(k, m);
            }
        }
        lines
    }

    fn shift_key(&self, key: (i64, i64)) -> (i64, i64) {
        match rational_ratio(to_f64(self.omega[1] / self.omega[0])) {
            Some((p, _)) => (key.0 + p, 0),
            None => (key.0, key.1 + 1),
        }
    }
}

fn parity<T: Real>(n: i64) -> T {
    if n.rem_euclid(2) == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// Amplitudes with `Q̄₁`, `Q̄₂` fixed by the time-averaged force balance
/// `Q̄_j = g_j⟨|A_j|²⟩/Ω_j`, taking the lowest root on each mirror.
pub fn bessel_amplitudes<T: Real>(mp: &ModelParams<T>, alpha: [T; 2], n_max: Option<[usize; 2]>) -> Result<BesselAmplitudes<T>> {
    if mp.topology != Topology::Unidirectional {
        return Err(Error::Topology("limit-cycle series are derived for the unidirectional guide".into()));
    }
    if alpha.iter().any(|a| !(*a >= T::zero()) || !a.is_finite()) {
        return Err(Error::InvalidParameter { field: "alpha", reason: "must be finite and nonnegative".into() });
    }
    let mut amps = BesselAmplitudes::build(mp, [T::zero(); 2], alpha, n_max);
    for m in Mirror::BOTH {
        let q = solve_qbar(&amps, m, mp)?;
        amps = amps.with_qbar(m, q, mp);
    }
    Ok(amps)
}

fn solve_qbar<T: Real>(amps: &BesselAmplitudes<T>, m: Mirror, mp: &ModelParams<T>) -> Result<T> {
    let j = m.index();
    if mp.g[j] == T::zero() || mp.drive[0] == T::zero() {
        return Ok(T::zero());
    }
    let f = |q: T| {
        let power = match m {
            Mirror::First => amps.first_power(q, mp),
            Mirror::Second => amps.with_qbar(m, q, mp).averages(m).0,
        };
        q - mp.g[j] * power / mp.omega[j]
    };
    // |χ| ≤ 2/κ bounds ⟨|A₁|²⟩ by 4E²/κ² and ⟨|A₂|²⟩ by 16E²/κ².
    let bound = lit::<T>(if j == 0 { 4.0 } else { 16.0 }) * mp.drive[0] * mp.drive[0] / (mp.kappa * mp.kappa);
    let top = mp.g[j] * bound / mp.omega[j] * lit(1.01);
    let steps = 400usize;
    let mut lo = T::zero();
    let mut flo = f(lo);
    for k in 1..=steps {
        let hi = top * from_usize(k) / from_usize(steps);
        let fhi = f(hi);
        if (flo <= T::zero()) != (fhi <= T::zero()) {
            let (mut a, mut b, mut fa) = (lo, hi, flo);
            for _ in 0..200 {
                let mid = (a + b) * lit(0.5);
                let fm = f(mid);
                if (fm <= T::zero()) == (fa <= T::zero()) {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
                if (b - a) <= T::EPS * lit::<T>(4.0) * b.abs().max(T::TINY) {
                    break;
                }
            }
            return Ok((a + b) * lit(0.5));
        }
        lo = hi;
        flo = fhi;
    }
    Err(Error::NoConvergence { iterations: steps, residual: to_f64(flo) })
}

/// `P_rad/P_fric` of mirror `m`, with `P_rad = g⟨|A|²Q̇⟩` and
/// `P_fric = γ⟨Q̇²⟩`.
pub fn power_balance<T: Real>(mp: &ModelParams<T>, alpha: [T; 2], m: Mirror) -> Result<(T, BesselAmplitudes<T>)> {
    let j = m.index();
    let amps = bessel_amplitudes(mp, alpha, None)?;
    if alpha[j] == T::zero() {
        return Ok((small_amplitude_ratio(mp, &amps, m), amps));
    }
    let (_, s) = amps.averages(m);
    let ratio = -lit::<T>(2.0) * mp.g[j] * s / (mp.gamma[j] * alpha[j] * mp.omega[j]);
    Ok((ratio, amps))
}

/// `α → 0`: `−2Γ_eff/γ` when the cavity feeding mirror `m` is static,
/// otherwise the series evaluated at a vanishing Bessel argument.
fn small_amplitude_ratio<T: Real>(mp: &ModelParams<T>, amps: &BesselAmplitudes<T>, m: Mirror) -> T {
    let j = m.index();
    if m == Mirror::First || amps.alpha[0] == T::zero() {
        let s = MeanFieldState {
            t: T::zero(),
            q: amps.qbar,
            p: [T::zero(); 2],
            a: [amps.a1_coefficient(0), amps.c2_coefficient(0, 0)],
        };
        let ep = effective_rates(mp, &s);
        return -lit::<T>(2.0) * ep.gamma_eff[j] / mp.gamma[j];
    }
    if mp.g[j] == T::zero() {
        return T::zero();
    }
    let mut alpha = amps.alpha;
    alpha[j] = lit::<T>(1e-5) * mp.omega[j] / mp.g[j];
    power_balance(mp, alpha, m).map(|r| r.0).unwrap_or_else(|_| T::zero())
}

/// Level-1 crossing of the ratio, as polylines in `(α, Δ)`.
pub type Contour<T> = Vec<Vec<(T, T)>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap<T> {
    pub mirror: usize,
    pub alpha: Vec<T>,
    pub delta: Vec<T>,
    /// `ratio[i][k]` at `(delta[i], alpha[k])`.
    pub ratio: Vec<Vec<T>>,
    pub contour: Contour<T>,
    /// Cells whose Bessel series hit the truncation cap.
    pub truncated_cells: usize,
    /// Cells where no force-balance root was found.
    pub failed_cells: usize,
    /// Oscillation amplitude of the other mirror held fixed.
    pub alpha_other: T,
}

/// Ratio map of mirror `m` on `delta × alpha`; the other mirror's amplitude
/// is held at `alpha_other`.
pub fn stability_map<T: Real>(mp: &ModelParams<T>, m: Mirror, alpha: &[T], delta: &[T], alpha_other: T) -> Result<StabilityMap<T>> {
    if alpha.is_empty() || delta.is_empty() {
        return Err(Error::Grid("stability grids must be nonempty".into()));
    }
    if alpha.windows(2).any(|w| !(w[1] > w[0])) || delta.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("stability grids must be strictly increasing".into()));
    }
    let cells: Vec<(T, bool, bool)> = delta
        .par_iter()
        .flat_map_iter(|&d| alpha.iter().map(move |&a| (d, a)))
        .map(|(d, a)| {
            let mut p = mp.clone();
            p.delta = d;
            let mut al = [alpha_other; 2];
            al[m.index()] = a;
            match power_balance(&p, al, m) {
                Ok((r, amps)) => (r, amps.truncated, false),
                Err(e) => {
                    log::debug!("stability cell ({:e}, {:e}) failed: {e}", to_f64(a), to_f64(d));
                    (lit::<T>(f64::NAN), false, true)
                }
            }
        })
        .collect();
    let na = alpha.len();
    let ratio: Vec<Vec<T>> = cells.chunks(na).map(|row| row.iter().map(|c| c.0).collect()).collect();
    let truncated_cells = cells.iter().filter(|c| c.1).count();
    let failed_cells = cells.iter().filter(|c| c.2).count();
    if truncated_cells > 0 {
        log::warn!("{truncated_cells} stability cells hit the Bessel truncation cap");
    }
    let contour = marching_squares(alpha, delta, &ratio, T::one());
    Ok(StabilityMap { mirror: m.index() + 1, alpha: alpha.to_vec(), delta: delta.to_vec(), ratio, contour, truncated_cells, failed_cells, alpha_other })
}

/// Edge of the grid: `(i, k, vertical)` joins `(i, k)` to `(i+1, k)` when
/// vertical, else to `(i, k+1)`.
type Edge = (usize, usize, bool);

/// Polylines of `z = level` by marching squares; saddles are resolved by the
/// cell-centre average and cells touching NaN are skipped.
pub fn marching_squares<T: Real>(x: &[T], y: &[T], z: &[Vec<T>], level: T) -> Contour<T> {
    let (ny, nx) = (y.len(), x.len());
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let point = |e: Edge| -> (T, T) {
        let (i, k, vertical) = e;
        let (i2, k2) = if vertical { (i + 1, k) } else { (i, k + 1) };
        let (a, b) = (z[i][k] - level, z[i2][k2] - level);
        let t = a / (a - b);
        (x[k] + (x[k2] - x[k]) * t, y[i] + (y[i2] - y[i]) * t)
    };
    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for i in 0..ny - 1 {
        for k in 0..nx - 1 {
            let v = [z[i][k], z[i][k + 1], z[i + 1][k + 1], z[i + 1][k]];
            if v.iter().any(|c| !c.is_finite()) {
                continue;
            }
            let above: Vec<bool> = v.iter().map(|&c| c > level).collect();
            // Corners 0..3 counter-clockwise from (i, k); edges between them.
            let edges: [Edge; 4] = [(i, k, false), (i, k + 1, true), (i + 1, k, false), (i, k, true)];
            let crossing: Vec<usize> = (0..4).filter(|&e| above[e] != above[(e + 1) % 4]).collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    let centre = (v[0] + v[1] + v[2] + v[3]) * lit(0.25) > level;
                    if centre == above[0] {
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    chain(segments).into_iter().map(|line| line.into_iter().map(point).collect()).collect()
}

fn chain(segments: Vec<(Edge, Edge)>) -> Vec<Vec<Edge>> {
    let mut adj: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        adj.entry(*a).or_default().push(s);
        adj.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    // Open polylines start at edges with a single segment; closed loops follow.
    let mut starts: Vec<Edge> = adj.iter().filter(|(_, v)| v.len() == 1).map(|(e, _)| *e).collect();
    starts.extend(segments.iter().map(|s| s.0));
    for start in starts {
        let Some(&first) = adj[&start].iter().find(|&&s| !used[s]) else { continue };
        let mut line = vec![start];
        let mut cur = start;
        let mut seg = first;
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == cur { b } else { a };
            line.push(next);
            cur = next;
            match adj[&cur].iter().find(|&&s| !used[s]) {
                Some(&s) => seg = s,
                None => break,
            }
        }
        lines.push(line);
    }
    lines
}

/// Largest distance from a vertex of `a` to the polyline set `b`, in units
/// where one `cell` spans `(dx, dy)`.
pub fn contour_distance<T: Real>(a: &Contour<T>, b: &Contour<T>, cell: (T, T)) -> T {
    let seg_dist = |p: (T, T), u: (T, T), v: (T, T)| -> T {
        let (px, py) = (p.0 / cell.0, p.1 / cell.1);
        let (ux, uy) = (u.0 / cell.0, u.1 / cell.1);
        let (vx, vy) = (v.0 / cell.0, v.1 / cell.1);
        let (dx, dy) = (vx - ux, vy - uy);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > T::zero() { (((px - ux) * dx + (py - uy) * dy) / len2).max(T::zero()).min(T::one()) } else { T::zero() };
        ((px - ux - t * dx).powi(2) + (py - uy - t * dy).powi(2)).sqrt()
    };
    let mut worst = T::zero();
    for p in a.iter().flatten() {
        let mut best = T::max_value().unwrap_or_else(|| lit(1e300));
        for line in b {
            for w in line.windows(2) {
                best = best.min(seg_dist(*p, w[0], w[1]));
            }
            if line.len() == 1 {
                best = best.min(seg_dist(*p, line[0], line[0]));
            }
        }
        worst = worst.max(best);
    }
    worst
}
