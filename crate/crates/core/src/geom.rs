//! Planar and toroidal geometry helpers.

use std::f64::consts::{PI, TAU};

pub type Vec2 = [f64; 2];

/// Signed minimal-image difference `b - a` on a circle of length `l`.
#[inline]
pub fn torus_delta(a: f64, b: f64, l: f64) -> f64 {
    let mut d = b - a;
    if d > 0.5 * l {
        d -= l;
    } else if d < -0.5 * l {
        d += l;
    }
    d
}

#[inline]
pub fn torus_dist2(a: Vec2, b: Vec2, l: f64) -> f64 {
    let dx = torus_delta(a[0], b[0], l);
    let dy = torus_delta(a[1], b[1], l);
    dx * dx + dy * dy
}

#[inline]
pub fn dist2(a: Vec2, b: Vec2) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Wrap a coordinate into `[0, l)`.
#[inline]
pub fn wrap(x: f64, l: f64) -> f64 {
    let r = x.rem_euclid(l);
    // rem_euclid can round up to exactly `l` for tiny negative inputs.
    if r >= l {
        0.0
    } else {
        r
    }
}

/// Angle in `[0, 2pi)`.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Angle difference wrapped to `[-pi, pi]`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(TAU);
    if d > PI {
        d -= TAU;
    }
    d
}

/// Reflect a coordinate back into `[0, side]`, flipping the velocity sign when
/// a wall is crossed. Returns the new coordinate and whether it reflected.
#[inline]
pub fn reflect(x: f64, side: f64) -> (f64, bool) {
    if x < 0.0 {
        ((-x).min(side), true)
    } else if x > side {
        ((2.0 * side - x).max(0.0), true)
    } else {
        (x, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_helpers() {
        assert_eq!(torus_delta(9.5, 0.5, 10.0), 1.0);
        assert_eq!(torus_delta(0.5, 9.5, 10.0), -1.0);
        assert_eq!(torus_dist2([0.0, 0.0], [9.0, 9.0], 10.0), 2.0);
        assert_eq!(wrap(10.5, 10.0), 0.5);
        assert_eq!(wrap(-1e-18, 10.0), 0.0);
        assert!(wrap(-1e-18, 10.0) < 10.0);
    }

    #[test]
    fn angle_helpers() {
        assert!((angle_diff(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_diff(TAU - 0.1, 0.1) + 0.2).abs() < 1e-12);
        assert!((wrap_angle(-0.5) - (TAU - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn reflection() {
        assert_eq!(reflect(-1.0, 10.0), (1.0, true));
        assert_eq!(reflect(11.0, 10.0), (9.0, true));
        assert_eq!(reflect(5.0, 10.0), (5.0, false));
    }
}
