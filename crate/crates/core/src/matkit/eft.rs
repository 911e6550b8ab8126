//! Error-free transformations and a compensated dot product.
//!
//! `two_sum` and `two_prod` return the rounded result together with the
//! exact rounding error, so `a + b == s + e` and `a * b == p + e` hold in
//! exact arithmetic. `dot2` chains them so the result is as accurate as if
//! the dot product were evaluated in twice the working precision and then
//! rounded once.

/// Knuth's branch-free two-sum.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Product and its exact rounding error via fused multiply-add.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Compensated dot product `init + Σ x_k·y_k`, accumulated left to right.
pub fn dot2_with_init(
    init: f64,
    x: impl IntoIterator<Item = f64>,
    y: impl IntoIterator<Item = f64>,
) -> f64 {
    let mut s = init;
    let mut c = 0.0;
    for (a, b) in x.into_iter().zip(y) {
        let (p, ep) = two_prod(a, b);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    s + c
}

/// Like [`dot2_with_init`] but keeps the compensation as a second word:
/// returns `(hi, lo)` with `hi = fl(hi + lo)`.
pub fn dot2_pair(
    init: f64,
    x: impl IntoIterator<Item = f64>,
    y: impl IntoIterator<Item = f64>,
) -> (f64, f64) {
    let mut s = init;
    let mut c = 0.0;
    for (a, b) in x.into_iter().zip(y) {
        let (p, ep) = two_prod(a, b);
        let (t, es) = two_sum(s, p);
        s = t;
        c += ep + es;
    }
    fast_two_sum(s, c)
}

/// Two-sum for `|a| >= |b|` (or `a == 0`).
#[inline]
pub fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Compensated dot product of two equally long slices.
pub fn dot2(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    dot2_with_init(0.0, x.iter().copied(), y.iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot2_pair_keeps_tail() {
        // (1 + 2⁻⁶⁰)·1 + 1e-30·1: the tail survives in the second word
        let tiny = 2f64.powi(-60);
        let (hi, lo) = dot2_pair(1.0, [tiny, 1e-30], [1.0, 1.0]);
        assert_eq!(hi, 1.0);
        assert_eq!(lo, tiny + 1e-30);
    }

    #[test]
    fn two_sum_recovers_lost_bits() {
        let (s, e) = two_sum(1e16, 1.0);
        assert_eq!(s, 1e16);
        assert_eq!(e, 1.0);
    }

    #[test]
    fn two_prod_is_exact() {
        let a = 1.0 + f64::EPSILON;
        let (p, e) = two_prod(a, a);
        // (1+ε)² = 1 + 2ε + ε², the ε² term is the error
        assert_eq!(p, 1.0 + 2.0 * f64::EPSILON);
        assert_eq!(e, f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn dot2_cancellation() {
        assert_eq!(dot2(&[1e16, 1.0, -1e16], &[1.0, 1.0, 1.0]), 1.0);
        let naive: f64 = [1e16, 1.0, -1e16].iter().sum();
        assert_eq!(naive, 0.0);
    }
}
