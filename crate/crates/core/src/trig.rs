//! Small trigonometric helpers shared by the evaluation routines.
//!
//! Frequencies live on the unit circle `[0, 1)`. Phases are measured in
//! turns and reduced before the multiplication by `2π`. Quarter turns are
//! returned exactly.

use num_complex::Complex64;
use std::f64::consts::TAU;

/// `exp(i 2π x)`, reducing `x` modulo one first.
#[inline]
pub fn cis_turns(x: f64) -> Complex64 {
    let r = x - x.floor();
    // Exact values at quarter turns.
    if r == 0.0 {
        return Complex64::new(1.0, 0.0);
    } else if r == 0.25 {
        return Complex64::new(0.0, 1.0);
    } else if r == 0.5 {
        return Complex64::new(-1.0, 0.0);
    } else if r == 0.75 {
        return Complex64::new(0.0, -1.0);
    }
    let (s, c) = (TAU * r).sin_cos();
    Complex64::new(c, s)
}

/// `exp(i 2π f l)` with the product reduced modulo one.
#[inline]
pub fn cis_freq_index(f: f64, l: i64) -> Complex64 {
    let p = f * l as f64;
    cis_turns(p - p.floor())
}

/// Wrap-around distance between two points of the unit circle.
#[inline]
pub fn wrap_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    let d = d - d.floor();
    d.min(1.0 - d)
}

/// Reduce a frequency to `[0, 1)`.
#[inline]
pub fn wrap_unit(f: f64) -> f64 {
    let r = f - f.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}
