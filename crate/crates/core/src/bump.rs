//! The standard C-infinity compactly supported bump profile and its first two
//! derivatives, used for initial data and manufactured solutions.
//!
//! `profile(s) = exp(1 - 1/(1 - s^2))` for `|s| < 1`, zero outside. The peak
//! value is 1 at `s = 0` and every derivative vanishes at `|s| = 1`.

/// Maximum of |profile'| over [0, 1], attained near s = 0.7598.
/// Used to normalize steepened initial data to a prescribed peak slope.
pub const PROFILE_MAX_SLOPE: f64 = 2.170_357_085_710_338_7;

pub fn profile(s: f64) -> f64 {
    let s2 = s * s;
    if s2 >= 1.0 {
        return 0.0;
    }
    (1.0 - 1.0 / (1.0 - s2)).exp()
}

/// d/ds of [`profile`].
pub fn profile_d1(s: f64) -> f64 {
    let s2 = s * s;
    if s2 >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - s2;
    profile(s) * (-2.0 * s / (q * q))
}

/// d^2/ds^2 of [`profile`].
pub fn profile_d2(s: f64) -> f64 {
    let s2 = s * s;
    if s2 >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - s2;
    let q2 = q * q;
    profile(s) * (4.0 * s2 / (q2 * q2) - 2.0 / q2 - 8.0 * s2 / (q2 * q))
}

/// `profile'(s) / s`, finite at the origin (limit `profile''(0) = -2`).
pub fn profile_d1_over_s(s: f64) -> f64 {
    if s.abs() < 1e-8 {
        return -2.0;
    }
    profile_d1(s) / s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_values() {
        assert_eq!(profile(0.0), 1.0);
        assert_eq!(profile(1.0), 0.0);
        assert_eq!(profile(2.0), 0.0);
        assert_eq!(profile_d1(0.0), 0.0);
        assert!((profile_d2(0.0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for s in [0.1, 0.3, 0.55, 0.7, 0.9] {
            let h = 1e-6;
            let fd1 = (profile(s + h) - profile(s - h)) / (2.0 * h);
            assert!((profile_d1(s) - fd1).abs() < 1e-7, "s={s}");
            // wider step: the second difference amplifies rounding by 1/h^2
            let h = 1e-4;
            let fd2 = (profile(s + h) - 2.0 * profile(s) + profile(s - h)) / (h * h);
            assert!((profile_d2(s) - fd2).abs() < 1e-4, "s={s}");
        }
    }

    #[test]
    fn max_slope_constant_matches_numerical_maximum() {
        let mut best = 0.0f64;
        let mut arg = 0.0;
        for k in 0..200_000 {
            let s = k as f64 / 200_000.0;
            let d = profile_d1(s).abs();
            if d > best {
                best = d;
                arg = s;
            }
        }
        assert!((best - PROFILE_MAX_SLOPE).abs() < 1e-9, "max {best} at {arg}");
    }

    #[test]
    fn smooth_across_support_edge() {
        for s in [0.999, 0.9999, 1.0, 1.0001] {
            assert!(profile(s).abs() < 1e-300 || s < 1.0);
            assert!(profile_d1(s).is_finite());
            assert!(profile_d2(s).is_finite());
        }
    }
}
