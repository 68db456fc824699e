//! Tie tolerance for distance comparisons on atomic data.
//!
//! Membership tests distinguish `d < r` from `d <= r` with a tolerance of
//! `1e-9 * (1 + r)`. Distances that agree within the tolerance are treated
//! as equal, so open and closed balls behave deterministically under
//! floating point.

pub const TIE_REL: f64 = 1e-9;

#[inline]
pub fn tie_eps(r: f64) -> f64 {
    TIE_REL * (1.0 + r.abs())
}

/// `d <= r` up to the tie tolerance.
#[inline]
pub fn le(d: f64, r: f64) -> bool {
    d <= r + tie_eps(r)
}

/// `d < r` up to the tie tolerance.
#[inline]
pub fn lt(d: f64, r: f64) -> bool {
    d < r - tie_eps(r)
}

/// Distances `a` and `b` are indistinguishable.
#[inline]
pub fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= tie_eps(a.max(b))
}

/// Relative closeness used by cross-implementation checks.
pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_and_weak_comparisons() {
        assert!(le(1.0, 1.0));
        assert!(!lt(1.0, 1.0));
        assert!(le(1.0 + 1e-12, 1.0));
        assert!(!lt(1.0 - 1e-12, 1.0));
        assert!(lt(0.5, 1.0));
        assert!(tied(3.0, 3.0 + 1e-10));
        assert!(!tied(3.0, 3.0 + 1e-6));
    }
}
