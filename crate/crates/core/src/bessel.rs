//! Integer-order Bessel functions of the first kind.

use crate::scalar::{from_usize, lit, Real};

/// `J_n(x)` for `n = 0..=n_max` by Miller's backward recurrence,
/// normalized with `J_0 + 2 Σ J_{2k} = 1`.
fn miller<T: Real>(n_max: usize, x: T) -> Vec<T> {
    let mut out = vec![T::zero(); n_max + 1];
    if x == T::zero() {
        out[0] = T::one();
        return out;
    }
    let ax = x.abs();
    let big = n_max.max(ax.to_usize().unwrap_or(usize::MAX / 4));
    let start = {
        let m = big + 20 + (40.0 * big as f64).sqrt() as usize;
        m + (m & 1)
    };
    let two_over_x = lit::<T>(2.0) / ax;
    let huge: T = lit(1e200);
    let mut jp1 = T::zero();
    let mut j = lit::<T>(1e-300);
    let mut norm = T::zero();
    for k in (1..=start).rev() {
        let jm1 = from_usize::<T>(k) * two_over_x * j - jp1;
        jp1 = j;
        j = jm1;
        let km1 = k - 1;
        if km1 <= n_max {
            out[km1] = j;
        }
        if km1 > 0 && km1 % 2 == 0 {
            norm += j;
        }
        if j.abs() > huge {
            let s = T::one() / huge;
            j *= s;
            jp1 *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    let norm = lit::<T>(2.0) * norm + j;
    out.iter_mut().for_each(|v| *v /= norm);
    if x < T::zero() {
        out.iter_mut().skip(1).step_by(2).for_each(|v| *v = -*v);
    }
    out
}

/// `J_n(x)` for any integer order.
pub fn bessel_j<T: Real>(n: i64, x: T) -> T {
    let m = n.unsigned_abs() as usize;
    let v = miller(m, x)[m];
    if n < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// `J_n(x)` for `-n_max ≤ n ≤ n_max`, indexed by signed order.
#[derive(Debug, Clone)]
pub struct BesselTable<T> {
    n_max: usize,
    values: Vec<T>,
}

impl<T: Real> BesselTable<T> {
    pub fn new(n_max: usize, x: T) -> Self {
        Self { n_max, values: miller(n_max, x) }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `J_n(x)`; zero outside the tabulated range.
    pub fn get(&self, n: i64) -> T {
        let m = n.unsigned_abs() as usize;
        if m > self.n_max {
            return T::zero();
        }
        let v = self.values[m];
        if n < 0 && m % 2 == 1 {
            -v
        } else {
            v
        }
    }
}

/// Upper bound `(|x|/2)^n / n!` on `|J_n(x)|`.
pub fn tail_bound<T: Real>(n: usize, x: T) -> T {
    let h = x.abs() * lit(0.5);
    (1..=n).fold(T::one(), |acc, k| acc * h / from_usize::<T>(k))
}

/// Smallest order whose tail bound drops below `tol`, capped at `cap`.
pub fn truncation_order<T: Real>(x: T, tol: T, cap: usize) -> usize {
    let h = x.abs() * lit(0.5);
    let mut b = T::one();
    for n in 0..=cap {
        if n > 0 {
            b = b * h / from_usize::<T>(n);
        }
        if b < tol {
            return n;
        }
    }
    cap
}

#[cfg(test)]
mod tests {
    use super::*;

    // Periodic trapezoid on the integral representation converges spectrally.
    fn oracle(n: i64, x: f64) -> f64 {
        let m = 4096;
        let h = 2.0 * std::f64::consts::PI / m as f64;
        (0..m).map(|k| (n as f64 * k as f64 * h - x * (k as f64 * h).sin()).cos()).sum::<f64>() / m as f64
    }

    #[test]
    fn matches_integral_representation() {
        for &x in &[0.0, 1e-3, 0.5, 1.0, 3.7, 10.0, 25.0, 60.0, -4.2] {
            for n in -40..=40 {
                let a = bessel_j(n, x);
                let b = oracle(n, x);
                assert!((a - b).abs() < 1e-13, "n={n} x={x}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn table_agrees_with_pointwise() {
        let t = BesselTable::new(30, 7.3f64);
        for n in -30..=30 {
            let (a, b): (f64, f64) = (t.get(n), bessel_j(n, 7.3));
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1e-300), "n={n}");
        }
        assert_eq!(t.get(31), 0.0);
    }

    #[test]
    fn zero_argument() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        assert_eq!(bessel_j(3, 0.0), 0.0);
    }

    #[test]
    fn truncation_meets_tail_bound() {
        for &x in &[0.1f64, 2.0, 15.0] {
            let n = truncation_order(x, 1e-12, 500);
            assert!(tail_bound(n, x) < 1e-12);
            assert!(bessel_j::<f64>(n as i64, x).abs() < 1e-12);
        }
    }

}
