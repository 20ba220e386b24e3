//! Real roots of low-degree polynomials without the discriminant formula.
//!
//! Roots are bracketed between the critical points and refined by
//! safeguarded Newton/bisection, which stays accurate when the coefficients
//! span many decades.

use crate::scalar::{lit, Real};

/// Evaluates `a x³ + b x² + c x + d` by Horner's rule.
pub fn eval_cubic<T: Real>(co: [T; 4], x: T) -> T {
    ((co[0] * x + co[1]) * x + co[2]) * x + co[3]
}

/// Sorted real roots of `a x³ + b x² + c x + d`; degrades gracefully to
/// lower degree when leading coefficients vanish.
pub fn real_roots_cubic<T: Real>(co: [T; 4]) -> Vec<T> {
    let [a, b, c, d] = co;
    if a == T::zero() {
        return real_roots_quadratic(b, c, d);
    }
    let p = move |x: T| eval_cubic(co, x);
    let dp = move |x: T| (lit::<T>(3.0) * a * x + lit::<T>(2.0) * b) * x + c;
    // Fujiwara bound on root magnitudes.
    let bound = lit::<T>(2.0)
        * (b / a).abs().max((c / a).abs().sqrt()).max((d / (lit::<T>(2.0) * a)).abs().cbrt())
        + T::TINY;
    let mut knots = vec![-bound];
    knots.extend(real_roots_quadratic(lit::<T>(3.0) * a, lit::<T>(2.0) * b, c).into_iter().filter(|x| x.abs() < bound));
    knots.push(bound);

    let mut roots = Vec::new();
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (plo, phi) = (p(lo), p(hi));
        if plo == T::zero() {
            push_unique(&mut roots, lo);
        }
        if (plo < T::zero()) != (phi < T::zero()) && phi != T::zero() && plo != T::zero() {
            push_unique(&mut roots, refine(p, dp, lo, hi));
        }
        if phi == T::zero() {
            push_unique(&mut roots, hi);
        }
    }
    roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    roots
}

fn push_unique<T: Real>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// Sorted real roots of `a x² + b x + c` (cancellation-free form).
pub fn real_roots_quadratic<T: Real>(a: T, b: T, c: T) -> Vec<T> {
    if a == T::zero() {
        return if b == T::zero() { vec![] } else { vec![-c / b] };
    }
    let disc = b * b - lit::<T>(4.0) * a * c;
    if disc < T::zero() {
        return vec![];
    }
    if disc == T::zero() {
        return vec![-b / (lit::<T>(2.0) * a)];
    }
    let sgn = if b < T::zero() { -T::one() } else { T::one() };
    let q = -lit::<T>(0.5) * (b + sgn * disc.sqrt());
    let mut r = vec![q / a, if q == T::zero() { T::zero() } else { c / q }];
    r.sort_by(|x, y| x.partial_cmp(y).unwrap());
    r
}

fn refine<T: Real>(p: impl Fn(T) -> T, dp: impl Fn(T) -> T, mut lo: T, mut hi: T) -> T {
    let neg_lo = p(lo) < T::zero();
    let mut x = (lo + hi) * lit(0.5);
    for _ in 0..400 {
        let fx = p(x);
        if fx == T::zero() {
            return x;
        }
        if (fx < T::zero()) == neg_lo {
            lo = x;
        } else {
            hi = x;
        }
        let d = dp(x);
        let newton = x - fx / d;
        x = if d != T::zero() && newton > lo && newton < hi { newton } else { (lo + hi) * lit(0.5) };
        if hi - lo <= lit::<T>(4.0) * T::EPS * x.abs().max(T::TINY) {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_known_roots() {
        // (x-1)(x-2)(x-3)
        let r = real_roots_cubic([1.0f64, -6.0, 11.0, -6.0]);
        assert_eq!(r.len(), 3);
        for (x, e) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_root() {
        let r = real_roots_cubic([1.0f64, 0.0, 1.0, -2.0]);
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wide_dynamic_range() {
        // Roots at 1e8, 3e8, 5e8 scaled by a tiny leading coefficient.
        let s = 2e-22;
        let (r1, r2, r3): (f64, f64, f64) = (1e8, 3e8, 5e8);
        let co = [s, -s * (r1 + r2 + r3), s * (r1 * r2 + r1 * r3 + r2 * r3), -s * r1 * r2 * r3];
        let r = real_roots_cubic(co);
        assert_eq!(r.len(), 3);
        for (x, e) in r.iter().zip([r1, r2, r3]) {
            assert!(((x - e) / e).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_degrees() {
        assert_eq!(real_roots_cubic([0.0, 0.0, 2.0, -4.0]), vec![2.0]);
        assert_eq!(real_roots_cubic([0.0, 1.0, 0.0, 1.0]), Vec::<f64>::new());
        let r = real_roots_quadratic(1.0f64, -1e9, 1.0);
        assert!((r[0] - 1e-9).abs() < 1e-22);
    }
}
