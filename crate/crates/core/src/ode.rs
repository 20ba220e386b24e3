//! Adaptive Dormand–Prince 5(4) integrator with continuous output.
//!
//! Step control follows the stabilized PI controller of Hairer & Wanner's
//! DOPRI5; dense output is the classic 4th-order interpolant, so solutions
//! can be sampled at arbitrary times without shortening steps.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Relative/absolute tolerance pair for the embedded error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T> {
    pub rtol: T,
    pub atol: T,
}

impl<T: Real> Tolerances<T> {
    pub fn new(rtol: T, atol: T) -> Result<Self> {
        if !(rtol > T::zero()) || !(atol > T::zero()) {
            return Err(Error::InvalidParameter {
                field: "tolerances",
                reason: "rtol and atol must be positive".into(),
            });
        }
        Ok(Self { rtol, atol })
    }

    /// Both tolerances scaled by `f`.
    pub fn scaled(self, f: T) -> Self {
        Self { rtol: self.rtol * f, atol: self.atol * f }
    }
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self { rtol: lit(1e-9), atol: lit(1e-12) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
struct DenseSegment<T> {
    t0: T,
    h: T,
    // Five coefficient vectors of the continuous extension, concatenated.
    r: Vec<T>,
}

impl<T: Real> DenseSegment<T> {
    fn eval_into(&self, t: T, out: &mut [T]) {
        let n = out.len();
        let th = (t - self.t0) / self.h;
        let th1 = T::one() - th;
        for (i, o) in out.iter_mut().enumerate() {
            let r = |k: usize| self.r[k * n + i];
            *o = r(0) + th * (r(1) + th1 * (r(2) + th * (r(3) + th1 * r(4))));
        }
    }
}

/// Sampled solution, optionally retaining the piecewise interpolant.
#[derive(Debug, Clone)]
pub struct OdeSolution<T> {
    pub t: Vec<T>,
    pub y: Vec<Vec<T>>,
    pub stats: StepStats,
    dense: Vec<DenseSegment<T>>,
}

impl<T: Real> OdeSolution<T> {
    /// State at the final sample.
    pub fn last(&self) -> &[T] {
        self.y.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// True when the continuous extension was retained.
    pub fn has_dense(&self) -> bool {
        !self.dense.is_empty()
    }

    /// Evaluates the interpolant at `t`; `None` outside the covered span or
    /// when dense output was not kept.
    pub fn at(&self, t: T) -> Option<Vec<T>> {
        let first = self.dense.first()?;
        let last = self.dense.last()?;
        if t < first.t0 || t > last.t0 + last.h {
            return None;
        }
        let idx = self.dense.partition_point(|s| s.t0 + s.h < t).min(self.dense.len() - 1);
        let seg = &self.dense[idx];
        let n = seg.r.len() / 5;
        let mut out = vec![T::zero(); n];
        seg.eval_into(t, &mut out);
        Some(out)
    }

    /// Covered time span of the interpolant.
    pub fn span(&self) -> Option<(T, T)> {
        let a = self.dense.first()?;
        let b = self.dense.last()?;
        Some((a.t0, b.t0 + b.h))
    }
}

/// Dormand–Prince 5(4) driver.
#[derive(Debug, Clone)]
pub struct Dopri5<T> {
    pub tol: Tolerances<T>,
    pub h_init: Option<T>,
    pub h_max: Option<T>,
    pub max_steps: usize,
    /// Keep the full piecewise interpolant in the solution.
    pub keep_dense: bool,
}

impl<T: Real> Dopri5<T> {
    pub fn new(tol: Tolerances<T>) -> Self {
        Self { tol, h_init: None, h_max: None, max_steps: 5_000_000, keep_dense: false }
    }

    pub fn with_dense(mut self, keep: bool) -> Self {
        self.keep_dense = keep;
        self
    }

    pub fn with_max_step(mut self, h: T) -> Self {
        self.h_max = Some(h);
        self
    }

    /// Integrates `y' = f(t, y)` from `t0`, reporting the state at every
    /// time in `t_out` (sorted, all `>= t0`). The last entry sets the horizon.
    pub fn solve<F>(&self, rhs: F, t0: T, y0: &[T], t_out: &[T]) -> Result<OdeSolution<T>>
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        self.solve_projected(rhs, |_: &mut [T]| {}, t0, y0, t_out)
    }

    /// As [`solve`](Self::solve), applying `project` to every accepted state
    /// before the next step starts.
    pub fn solve_projected<F, P>(
        &self,
        mut rhs: F,
        mut project: P,
        t0: T,
        y0: &[T],
        t_out: &[T],
    ) -> Result<OdeSolution<T>>
    where
        F: FnMut(T, &[T], &mut [T]),
        P: FnMut(&mut [T]),
    {
        let n = y0.len();
        if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
            return Err(Error::Grid("output times must be sorted and not precede t0".into()));
        }
        let t_end = match t_out.last() {
            Some(&t) => t,
            None => return Err(Error::Grid("no output times requested".into())),
        };

        let c = Tableau::<T>::new();
        let mut sol = OdeSolution { t: Vec::with_capacity(t_out.len()), y: Vec::new(), stats: StepStats::default(), dense: Vec::new() };
        let mut t = t0;
        let mut y = y0.to_vec();
        let mut next = 0usize;
        while next < t_out.len() && t_out[next] <= t0 {
            sol.t.push(t_out[next]);
            sol.y.push(y.clone());
            next += 1;
        }
        if t_end <= t0 {
            return Ok(sol);
        }

        let mut k: [Vec<T>; 7] = std::array::from_fn(|_| vec![T::zero(); n]);
        let mut ys = vec![T::zero(); n];
        let mut ynew = vec![T::zero(); n];
        let mut r = vec![T::zero(); 5 * n];
        let mut buf = vec![T::zero(); n];

        rhs(t, &y, &mut k[0]);
        sol.stats.evaluations += 1;

        let span = t_end - t0;
        let h_max = self.h_max.unwrap_or(span).min(span);
        let mut h = match self.h_init {
            Some(h) => h.min(h_max),
            None => {
                let h = self.initial_step(&mut rhs, t, &y, &k[0], h_max, &mut ys, &mut buf);
                sol.stats.evaluations += 1;
                h
            }
        };

        let beta: T = lit(0.04);
        let expo1 = lit::<T>(0.2) - beta * lit(0.75);
        let safe: T = lit(0.9);
        let fac_lo: T = lit(0.2); // inverse of the max growth 5
        let fac_hi: T = lit(10.0); // inverse of the max shrink 0.1
        let mut err_old: T = lit(1e-4);
        let mut last_rejected = false;
        let mut steps = 0usize;

        loop {
            if steps >= self.max_steps {
                return Err(Error::MaxStepsExceeded { steps, t: to_f64(t) });
            }
            let floor = lit::<T>(10.0) * T::EPS * t.abs().max(T::one());
            if h < floor || !h.is_finite() {
                return Err(Error::StepSizeUnderflow { t: to_f64(t) });
            }
            let last_step = t + h * lit(1.01) >= t_end;
            if last_step {
                h = t_end - t;
            }
            steps += 1;

            // Stages 2..7.
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = T::zero();
                    for (j, &a) in c.a[s].iter().enumerate() {
                        acc += a * k[j][i];
                    }
                    ys[i] = y[i] + h * acc;
                }
                rhs(t + c.c[s] * h, &ys, &mut k[s]);
                if s == 6 {
                    ynew.copy_from_slice(&ys);
                }
            }
            sol.stats.evaluations += 6;
            // k[6] holds f(t+h, ynew) because the 7th stage row equals the weights.

            let mut err = T::zero();
            for i in 0..n {
                let mut e = T::zero();
                for (j, &ej) in c.e.iter().enumerate() {
                    e += ej * k[j][i];
                }
                let sk = self.tol.atol + self.tol.rtol * y[i].abs().max(ynew[i].abs());
                let q = h * e / sk;
                err += q * q;
            }
            err = (err / crate::scalar::from_usize::<T>(n.max(1))).sqrt();
            if !err.is_finite() {
                err = lit(1e10);
            }

            let fac11 = err.powf(expo1);
            if err <= T::one() {
                // Accepted.
                let mut fac = fac11 / err_old.powf(beta);
                fac = fac_lo.max(fac_hi.min(fac / safe));
                fac = T::one() / fac;
                let mut h_new = h * fac;
                err_old = err.max(lit(1e-4));

                project(&mut ynew);
                let t_new = if last_step { t_end } else { t + h };
                let need_dense = self.keep_dense || (next < t_out.len() && t_out[next] <= t_new);
                if need_dense {
                    for i in 0..n {
                        let ydiff = ynew[i] - y[i];
                        let bspl = h * k[0][i] - ydiff;
                        let mut d = T::zero();
                        for (j, &dj) in c.d.iter().enumerate() {
                            d += dj * k[j][i];
                        }
                        r[i] = y[i];
                        r[n + i] = ydiff;
                        r[2 * n + i] = bspl;
                        r[3 * n + i] = ydiff - h * k[6][i] - bspl;
                        r[4 * n + i] = h * d;
                    }
                    let seg = DenseSegment { t0: t, h, r: r.clone() };
                    while next < t_out.len() && t_out[next] <= t_new {
                        let ts = t_out[next];
                        if ts == t_new {
                            buf.copy_from_slice(&ynew);
                        } else {
                            seg.eval_into(ts, &mut buf);
                        }
                        sol.t.push(ts);
                        sol.y.push(buf.clone());
                        next += 1;
                    }
                    if self.keep_dense {
                        sol.dense.push(seg);
                    }
                }

                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                t = t_new;
                sol.stats.accepted += 1;

                if last_step || t >= t_end {
                    break;
                }
                h_new = h_new.min(h_max);
                if last_rejected {
                    h_new = h_new.min(h);
                }
                last_rejected = false;
                h = h_new;
            } else {
                let shrink = fac_hi.min(fac11 / safe);
                h /= shrink.max(T::one());
                last_rejected = true;
                sol.stats.rejected += 1;
            }
        }
        Ok(sol)
    }

    #[allow(clippy::too_many_arguments)]
    fn initial_step<F>(&self, rhs: &mut F, t: T, y: &[T], f0: &[T], h_max: T, y1: &mut [T], f1: &mut [T]) -> T
    where
        F: FnMut(T, &[T], &mut [T]),
    {
        let n = crate::scalar::from_usize::<T>(y.len().max(1));
        let sk = |i: usize| self.tol.atol + self.tol.rtol * y[i].abs();
        let rms = |v: &dyn Fn(usize) -> T| ((0..y.len()).map(|i| v(i) * v(i)).fold(T::zero(), |a, b| a + b) / n).sqrt();
        let d0 = rms(&|i| y[i] / sk(i));
        let d1 = rms(&|i| f0[i] / sk(i));
        let small: T = lit(1e-5);
        let mut h0 = if d0 < small || d1 < small { lit(1e-6) } else { lit::<T>(0.01) * d0 / d1 };
        h0 = h0.min(h_max);
        for i in 0..y.len() {
            y1[i] = y[i] + h0 * f0[i];
        }
        rhs(t + h0, y1, f1);
        let d2 = rms(&|i| (f1[i] - f0[i]) / sk(i)) / h0;
        let m = d1.max(d2);
        let h1 = if m <= lit(1e-15) {
            lit::<T>(1e-6).max(h0 * lit(1e-3))
        } else {
            (lit::<T>(0.01) / m).powf(lit(0.2))
        };
        (h0 * lit(100.0)).min(h1).min(h_max)
    }
}

struct Tableau<T> {
    c: [T; 7],
    a: [Vec<T>; 7],
    e: [T; 7],
    d: [T; 7],
}

impl<T: Real> Tableau<T> {
    fn new() -> Self {
        let f = |p: f64, q: f64| lit::<T>(p / q);
        let z = T::zero();
        Self {
            c: [z, f(1., 5.), f(3., 10.), f(4., 5.), f(8., 9.), T::one(), T::one()],
            a: [
                vec![],
                vec![f(1., 5.)],
                vec![f(3., 40.), f(9., 40.)],
                vec![f(44., 45.), f(-56., 15.), f(32., 9.)],
                vec![f(19372., 6561.), f(-25360., 2187.), f(64448., 6561.), f(-212., 729.)],
                vec![f(9017., 3168.), f(-355., 33.), f(46732., 5247.), f(49., 176.), f(-5103., 18656.)],
                vec![f(35., 384.), z, f(500., 1113.), f(125., 192.), f(-2187., 6784.), f(11., 84.)],
            ],
            e: [
                f(71., 57600.),
                z,
                f(-71., 16695.),
                f(71., 1920.),
                f(-17253., 339200.),
                f(22., 525.),
                f(-1., 40.),
            ],
            d: [
                f(-12715105075., 11282082432.),
                z,
                f(87487479700., 32700410799.),
                f(-10690763975., 1880347072.),
                f(701980252875., 199316789632.),
                f(-1453857185., 822651844.),
                f(69997945., 29380423.),
            ],
        }
    }
}

/// `n` equally spaced times on `[t0, t1]` (inclusive).
pub fn linspace<T: Real>(t0: T, t1: T, n: usize) -> Vec<T> {
    match n {
        0 => vec![],
        1 => vec![t1],
        _ => {
            let dt = (t1 - t0) / crate::scalar::from_usize::<T>(n - 1);
            (0..n)
                .map(|i| if i + 1 == n { t1 } else { t0 + dt * crate::scalar::from_usize::<T>(i) })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = y[1];
        dy[1] = -y[0];
    }

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let ts = linspace(0.0, 20.0, 201);
        let sol = Dopri5::new(Tolerances::new(1e-10, 1e-12).unwrap()).solve(oscillator, 0.0, &[1.0, 0.0], &ts).unwrap();
        for (t, y) in sol.t.iter().zip(&sol.y) {
            assert!((y[0] - t.cos()).abs() < 1e-8, "t={t}");
            assert!((y[1] + t.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        let sol = Dopri5::new(Tolerances::new(1e-9, 1e-12).unwrap())
            .with_dense(true)
            .solve(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], &[5.0])
            .unwrap();
        for i in 0..=500 {
            let t = 0.01 * i as f64;
            let y = sol.at(t).unwrap()[0];
            assert!((y - (-t).exp()).abs() < 1e-8, "t={t} y={y}");
        }
        assert!(sol.at(5.5).is_none());
    }

    #[test]
    fn order_five_convergence() {
        // Error should shrink by roughly 2^5 when the step halves.
        let run = |h: f64| {
            let mut d = Dopri5::new(Tolerances::new(1.0, 1.0).unwrap());
            d.h_init = Some(h);
            d.h_max = Some(h);
            let y = d.solve(oscillator, 0.0, &[1.0, 0.0], &[2.0]).unwrap();
            (y.last()[0] - 2.0f64.cos()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 20.0 && ratio < 45.0, "ratio {ratio}");
    }

    #[test]
    fn blow_up_reports_underflow_time() {
        // y' = y^2 from y(0)=1 diverges at t = 1.
        let err = Dopri5::new(Tolerances::default()).solve(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[1.0], &[2.0]).unwrap_err();
        match err {
            Error::StepSizeUnderflow { t } => assert!((t - 1.0).abs() < 1e-3, "t={t}"),
            Error::MaxStepsExceeded { t, .. } => assert!((t - 1.0).abs() < 1e-3),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn projection_is_applied() {
        let sol = Dopri5::new(Tolerances::default())
            .solve_projected(|_, _, dy| dy[0] = 1.0, |y: &mut [f64]| y[0] = y[0].min(0.5), 0.0, &[0.0], &[1.0])
            .unwrap();
        assert!(sol.last()[0] <= 0.5 + 1e-12);
    }

    #[test]
    fn samples_at_start_are_initial_state() {
        let sol = Dopri5::new(Tolerances::default()).solve(oscillator, 0.0, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(sol.y[0], vec![1.0, 0.0]);
        assert_eq!(sol.t.len(), 2);
    }

    #[test]
    fn works_in_single_precision() {
        let sol = Dopri5::new(Tolerances::new(1e-5f32, 1e-7).unwrap())
            .solve(|_, y: &[f32], dy: &mut [f32]| dy[0] = -y[0], 0.0, &[1.0], &[1.0])
            .unwrap();
        assert!((sol.last()[0] - (-1.0f32).exp()).abs() < 1e-4);
    }
}
