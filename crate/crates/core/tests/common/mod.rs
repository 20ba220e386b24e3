//! Independent reference computations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the code path it checks.
#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix2, Matrix4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use cascopt_core::linearized::{build_drift_diffusion, DriftDiffusion};
use cascopt_core::meanfield::{steady_meanfield, MeanFieldState};
use cascopt_core::params::{nondimensionalize, FrequencyConvention, ModelParams, PhysicalParams, Topology};
use cascopt_core::Complex;

pub use rand::SeedableRng;
pub type Rng64 = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reference setup with the angular reading of κ.
pub fn reference_physical() -> PhysicalParams<f64> {
    PhysicalParams::reference_setup(FrequencyConvention::Angular)
}

pub fn reference_model() -> ModelParams<f64> {
    nondimensionalize(&reference_physical()).unwrap()
}

pub fn model_with(f: impl FnOnce(&mut PhysicalParams<f64>)) -> ModelParams<f64> {
    let mut p = reference_physical();
    f(&mut p);
    nondimensionalize(&p).unwrap()
}

/// Largest real part of the eigenvalues, from nalgebra's real Schur form.
pub fn abscissa(s: &DMatrix<f64>) -> f64 {
    s.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// A Hurwitz-stable dimensionless model with moderate rates so that
/// transients die out within a few thousand time units.
pub fn random_stable_model(rng: &mut Rng64) -> (ModelParams<f64>, MeanFieldState<f64>, DriftDiffusion<f64>) {
    loop {
        let kappa: f64 = rng.gen_range(0.3..1.0);
        let delta: f64 = rng.gen_range(0.6..1.4);
        let g = [rng.gen_range(1e-3..1e-2), rng.gen_range(1e-3..1e-2)];
        let target: f64 = rng.gen_range(0.05..0.3);
        let photons = (target * kappa / g[0]) * (target * kappa / g[0]);
        let drive = photons.sqrt() * (kappa * kappa / 4.0 + delta * delta).sqrt();
        let mp = ModelParams {
            kappa,
            delta,
            omega: [1.0, rng.gen_range(0.7..1.3)],
            gamma: [rng.gen_range(0.02..0.1), rng.gen_range(0.02..0.1)],
            g,
            drive: [drive, 0.0],
            nbar: [rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)],
            topology: Topology::Unidirectional,
            tau: std::f64::consts::TAU,
            omega1_si: 2e6 * std::f64::consts::PI,
            t_bath: 1.0,
        };
        let Ok(s) = steady_meanfield(&mp) else { continue };
        let dd = build_drift_diffusion(&s, &mp);
        if abscissa(&dd.s) < -0.01 {
            return (mp, s, dd);
        }
    }
}

// ---------------------------------------------------------------------------
// Two-mode Gaussian states, ordered (q_A, p_A, q_B, p_B), vacuum = I/2.

pub fn omega4() -> Matrix4<f64> {
    Matrix4::new(0., 1., 0., 0., -1., 0., 0., 0., 0., 0., 0., 1., 0., 0., -1., 0.)
}

fn local(theta: f64, r: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c) * Matrix2::new((-r).exp(), 0.0, 0.0, r.exp())
}

fn direct_sum(a: Matrix2<f64>, b: Matrix2<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
    m.fixed_view_mut::<2, 2>(2, 2).copy_from(&b);
    m
}

pub fn beam_splitter(t: f64) -> Matrix4<f64> {
    let (s, c) = t.sin_cos();
    Matrix4::new(c, 0., s, 0., 0., c, 0., s, -s, 0., c, 0., 0., -s, 0., c)
}

pub fn two_mode_squeezer(r: f64) -> Matrix4<f64> {
    let (ch, sh) = (r.cosh(), r.sinh());
    Matrix4::new(ch, 0., sh, 0., 0., ch, 0., -sh, sh, 0., ch, 0., 0., -sh, 0., ch)
}

/// Random symplectic matrix built from local operations, a beam splitter
/// and a two-mode squeezer.
pub fn random_symplectic(rng: &mut Rng64) -> Matrix4<f64> {
    let loc = |rng: &mut Rng64| {
        direct_sum(
            local(rng.gen_range(0.0..std::f64::consts::PI), rng.gen_range(-0.8..0.8)),
            local(rng.gen_range(0.0..std::f64::consts::PI), rng.gen_range(-0.8..0.8)),
        )
    };
    let l1 = loc(rng);
    let l2 = loc(rng);
    l2 * beam_splitter(rng.gen_range(0.0..std::f64::consts::PI)) * two_mode_squeezer(rng.gen_range(-1.0..1.0)) * l1
}

/// `S · diag(ν₁, ν₁, ν₂, ν₂) · Sᵀ` with random `ν ≥ ½` and random `S`.
pub fn random_two_mode(rng: &mut Rng64) -> Matrix4<f64> {
    let nu = [rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)];
    let d = Matrix4::from_diagonal(&nalgebra::Vector4::new(nu[0], nu[0], nu[1], nu[1]));
    let s = random_symplectic(rng);
    let c = s * d * s.transpose();
    (c + c.transpose()) * 0.5
}

/// Random local symplectic `L_A ⊕ L_B`.
pub fn random_local(rng: &mut Rng64) -> Matrix4<f64> {
    direct_sum(
        local(rng.gen_range(0.0..std::f64::consts::PI), rng.gen_range(-1.0..1.0)),
        local(rng.gen_range(0.0..std::f64::consts::PI), rng.gen_range(-1.0..1.0)),
    )
}

/// Symplectic eigenvalues from the spectrum of `ΩC` (eigenvalues `±iν`),
/// ascending, one per mode.
pub fn symplectic_spectrum(c: &DMatrix<f64>) -> Vec<f64> {
    let n = c.nrows() / 2;
    let mut om = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        om[(2 * k, 2 * k + 1)] = 1.0;
        om[(2 * k + 1, 2 * k)] = -1.0;
    }
    let mut nu: Vec<f64> = (om * c).complex_eigenvalues().iter().map(|z| z.im.abs()).collect();
    nu.sort_by(f64::total_cmp);
    nu.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Von Neumann entropy of a mode with symplectic eigenvalue `x`.
pub fn entropy(x: f64) -> f64 {
    let (a, b) = (x + 0.5, x - 0.5);
    let t = if b > 1e-300 { b * b.ln() } else { 0.0 };
    a * a.ln() - t
}

fn blocks(c: &Matrix4<f64>, measure_b: bool) -> (Matrix2<f64>, Matrix2<f64>, Matrix2<f64>) {
    let a = c.fixed_view::<2, 2>(0, 0).into_owned();
    let b = c.fixed_view::<2, 2>(2, 2).into_owned();
    let x = c.fixed_view::<2, 2>(0, 2).into_owned();
    if measure_b {
        (a, b, x)
    } else {
        (b, a, x.transpose())
    }
}

/// Entropy of the unmeasured mode after a pure Gaussian measurement with
/// squeezing `r` at angle `theta` on the other mode.
fn conditional_entropy(c: &Matrix4<f64>, measure_b: bool, r: f64, theta: f64) -> f64 {
    let (keep, meas, x) = blocks(c, measure_b);
    let (s, co) = theta.sin_cos();
    let rot = Matrix2::new(co, -s, s, co);
    let sigma = rot * Matrix2::new(0.5 * (2.0 * r).exp(), 0.0, 0.0, 0.5 * (-2.0 * r).exp()) * rot.transpose();
    let cond = keep - x * (meas + sigma).try_inverse().unwrap() * x.transpose();
    entropy(cond.determinant().max(0.25).sqrt())
}

/// Gaussian discord by direct minimisation over pure one-mode measurements:
/// a dense grid in (squeezing, angle) followed by seeded compass searches.
/// `measure_b = true` gives `D(A|B)`.
pub fn brute_force_discord(c: &Matrix4<f64>, measure_b: bool, rng: &mut Rng64) -> f64 {
    let f = |r: f64, t: f64| conditional_entropy(c, measure_b, r.clamp(0.0, 14.0), t);
    let mut starts = Vec::new();
    let (nr, nt) = (60, 72);
    let mut grid = Vec::with_capacity(nr * nt);
    for i in 0..nr {
        for k in 0..nt {
            let r = 14.0 * i as f64 / (nr - 1) as f64;
            let t = std::f64::consts::PI * k as f64 / nt as f64;
            grid.push((f(r, t), r, t));
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    starts.extend(grid.iter().take(4).map(|&(_, r, t)| (r, t)));
    for _ in 0..4 {
        starts.push((rng.gen_range(0.0..14.0), rng.gen_range(0.0..std::f64::consts::PI)));
    }
    let mut best = grid[0].0;
    for (mut r, mut t) in starts {
        let mut v = f(r, t);
        let mut step = 0.5;
        while step > 1e-10 {
            let mut moved = false;
            for (dr, dt) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let (r2, t2) = ((r + dr).clamp(0.0, 14.0), t + dt);
                let v2 = f(r2, t2);
                if v2 < v {
                    (r, t, v) = (r2, t2, v2);
                    moved = true;
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best = best.min(v);
    }
    let (_, meas, _) = blocks(c, measure_b);
    let nu = symplectic_spectrum(&DMatrix::from_column_slice(4, 4, c.as_slice()));
    entropy(meas.determinant().sqrt()) - entropy(nu[0]) - entropy(nu[1]) + best
}

/// Mutual information from local determinants and the spectral oracle.
pub fn mutual_information_oracle(c: &Matrix4<f64>) -> f64 {
    let a = c.fixed_view::<2, 2>(0, 0).determinant().sqrt();
    let b = c.fixed_view::<2, 2>(2, 2).determinant().sqrt();
    let nu = symplectic_spectrum(&DMatrix::from_column_slice(4, 4, c.as_slice()));
    entropy(a) + entropy(b) - entropy(nu[0]) - entropy(nu[1])
}

// ---------------------------------------------------------------------------
// Frequency-domain response of the full linearized model.

/// Inverse of `−iωI − S`.
pub fn resolvent(s: &DMatrix<f64>, w: f64) -> DMatrix<Complex<f64>> {
    let d = s.nrows();
    let m = DMatrix::from_fn(d, d, |i, k| Complex::new(-s[(i, k)], if i == k { -w } else { 0.0 }));
    m.try_inverse().expect("regular off the spectrum")
}

/// Spectra driven by the mechanical baths alone (momentum noise of
/// strength `γ_j(2n̄_j + 1)` on rows 1 and 5): the mirror positions and the
/// amplitude quadrature of the light leaving cavity 2, `−√κ(x₁ + x₂)`.
pub struct FullResponse {
    pub q: [f64; 2],
    pub out: f64,
}

pub fn full_response(mp: &ModelParams<f64>, s: &DMatrix<f64>, w: f64) -> FullResponse {
    let r = resolvent(s, w);
    let src = [(1, mp.gamma[0] * (2.0 * mp.nbar[0] + 1.0)), (5, mp.gamma[1] * (2.0 * mp.nbar[1] + 1.0))];
    let power = |row: &dyn Fn(usize) -> Complex<f64>| src.iter().map(|&(k, d)| row(k).norm_sqr() * d).sum::<f64>();
    let sk = mp.kappa.sqrt();
    FullResponse {
        q: [power(&|k| r[(0, k)]), power(&|k| r[(4, k)])],
        out: power(&|k| (r[(2, k)] + r[(6, k)]) * (-sk)),
    }
}

// ---------------------------------------------------------------------------
// Forced cavities: mirrors on prescribed orbits Q_j(t) = Q̄_j + α_j cos(Ω_j t).

pub struct ForcedCavities<'a> {
    pub mp: &'a ModelParams<f64>,
    pub qbar: [f64; 2],
    pub alpha: [f64; 2],
}

impl ForcedCavities<'_> {
    fn rhs(&self, t: f64, a: [Complex<f64>; 2]) -> [Complex<f64>; 2] {
        let mp = self.mp;
        let q = |j: usize| self.qbar[j] + self.alpha[j] * (mp.omega[j] * t).cos();
        let loss = |j: usize| Complex::new(mp.kappa / 2.0, mp.delta - mp.g[j] * q(j));
        [-loss(0) * a[0] + mp.drive[0], -loss(1) * a[1] - a[0] * mp.kappa]
    }

    /// Classic fixed-step RK4 from `(t0, a0)`, sampled every `every` steps.
    pub fn integrate(&self, t0: f64, a0: [Complex<f64>; 2], h: f64, steps: usize, every: usize) -> Vec<(f64, [Complex<f64>; 2])> {
        let add = |a: [Complex<f64>; 2], k: [Complex<f64>; 2], s: f64| [a[0] + k[0] * s, a[1] + k[1] * s];
        let mut out = vec![(t0, a0)];
        let (mut t, mut a) = (t0, a0);
        for i in 1..=steps {
            let k1 = self.rhs(t, a);
            let k2 = self.rhs(t + h / 2.0, add(a, k1, h / 2.0));
            let k3 = self.rhs(t + h / 2.0, add(a, k2, h / 2.0));
            let k4 = self.rhs(t + h, add(a, k3, h));
            for j in 0..2 {
                a[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
            }
            t = t0 + h * i as f64;
            if i % every == 0 {
                out.push((t, a));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Cubic discriminant.

/// `18abcd − 4b³d + b²c² − 4ac³ − 27a²d²` together with the magnitude of
/// its largest term, for judging how far the sign can be trusted.
pub fn discriminant(co: [f64; 4]) -> (f64, f64) {
    let [a, b, c, d] = co;
    let terms = [18.0 * a * b * c * d, -4.0 * b.powi(3) * d, b * b * c * c, -4.0 * a * c.powi(3), -27.0 * a * a * d * d];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).fold(0.0, f64::max))
}

/// Number of nonnegative real roots of a cubic with `a > 0, c > 0, d < 0`:
/// three exactly when the discriminant is positive and `b < 0` (all sign
/// changes present), otherwise one.
pub fn nonnegative_root_count(co: [f64; 4]) -> usize {
    let (disc, _) = discriminant(co);
    if disc > 0.0 && co[1] < 0.0 {
        3
    } else {
        1
    }
}
