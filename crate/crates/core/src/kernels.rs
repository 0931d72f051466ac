//! Dirichlet kernels and the triple-Dirichlet interpolation kernel.
//!
//! The interpolation kernel `K̄(f) = sum_{l=-m}^{m} c_l exp(i 2π l f)` is the
//! product of three Dirichlet kernels of half-widths `m1 + m2 + m3 = m`, so
//! its coefficient vector is the convolution of three normalized rectangles.
//! Masked variants drop the coefficients on a set of centred indices.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DemixError, Result};
use crate::trig::cis_freq_index;

/// Half-length `m` of the kernel used with `n` samples.
///
/// Odd `n` gives `n = 2m + 1`; even `n` gives `m = n/2 - 1`, leaving the last
/// sample without a kernel coefficient.
pub fn half_length(n: usize) -> usize {
    if n % 2 == 1 {
        (n - 1) / 2
    } else {
        (n / 2).saturating_sub(1)
    }
}

/// Centred coefficient index of the 1-based sample index `l`.
#[inline]
pub fn centered_index(l: usize, m: usize) -> i64 {
    l as i64 - (m as i64 + 1)
}

/// `(i 2π l)^order` as a complex number.
fn deriv_factor(l: i64, order: u32) -> Complex64 {
    let w = TAU * l as f64;
    match order % 4 {
        0 => Complex64::new(w.powi(order as i32), 0.0),
        1 => Complex64::new(0.0, w.powi(order as i32)),
        2 => Complex64::new(-w.powi(order as i32), 0.0),
        _ => Complex64::new(0.0, -w.powi(order as i32)),
    }
}

/// Truncated Taylor expansion `a0 + a1 ε + a2 ε² + a3 ε³`.
#[derive(Clone, Copy)]
struct Jet([f64; 4]);

impl Jet {
    /// `sin(a + b ε)`.
    fn sin_affine(a: f64, b: f64) -> Self {
        let (s, c) = a.sin_cos();
        Jet([s, b * c, -b * b * s / 2.0, -b * b * b * c / 6.0])
    }

    fn mul(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        Jet([
            a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[0] * b[2] + a[1] * b[1] + a[2] * b[0],
            a[0] * b[3] + a[1] * b[2] + a[2] * b[1] + a[3] * b[0],
        ])
    }

    fn div(self, o: Jet) -> Jet {
        let (a, b) = (self.0, o.0);
        let q0 = a[0] / b[0];
        let q1 = (a[1] - q0 * b[1]) / b[0];
        let q2 = (a[2] - q0 * b[2] - q1 * b[1]) / b[0];
        let q3 = (a[3] - q0 * b[3] - q1 * b[2] - q2 * b[1]) / b[0];
        Jet([q0, q1, q2, q3])
    }

    fn derivative(&self, order: u32) -> f64 {
        const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];
        self.0[order as usize] * FACT[order as usize]
    }
}

/// Taylor jet of `D_m̃` at `f`.
///
/// The closed form loses accuracy for `|f| ≲ 1/(2m̃+1)`, where the
/// coefficient sum is used instead.
fn dirichlet_jet(m_tilde: usize, f: f64) -> Jet {
    let len = (2 * m_tilde + 1) as f64;
    let r = f - f.round();
    if r.abs() * len < 0.5 {
        let m = m_tilde as i64;
        let mut acc = [0.0; 4];
        for l in -m..=m {
            let e = cis_freq_index(f, l);
            for (order, a) in acc.iter_mut().enumerate() {
                *a += (deriv_factor(l, order as u32) * e).re;
            }
        }
        return Jet([acc[0] / len, acc[1] / len, acc[2] / (2.0 * len), acc[3] / (6.0 * len)]);
    }
    let num = Jet::sin_affine(len * PI * r, len * PI);
    let den = Jet::sin_affine(PI * r, PI);
    let den = Jet(den.0.map(|v| v * len));
    num.div(den)
}

/// Normalized Dirichlet kernel `D_m̃(f)` and its first three derivatives.
///
/// All derivatives of the symmetric kernel are real.
pub fn dirichlet_eval(m_tilde: usize, f: f64, order: u32) -> Result<f64> {
    if order > 3 {
        return Err(DemixError::InvalidParameter(format!(
            "derivative order {order} not supported"
        )));
    }
    let r = f - f.round();
    if r == 0.0 {
        let mt = m_tilde as f64;
        return Ok(match order {
            0 => 1.0,
            2 => -4.0 * PI * PI * mt * (mt + 1.0) / 3.0,
            _ => 0.0,
        });
    }
    Ok(dirichlet_jet(m_tilde, f).derivative(order))
}

/// Triple-Dirichlet kernel description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub m: usize,
    pub widths: (usize, usize, usize),
    /// Coefficients indexed `-m..=m`; `c[p]` belongs to index `p - m`.
    pub c: Vec<f64>,
    pub kappa: f64,
}

fn rect(w: usize) -> Vec<f64> {
    vec![1.0 / (2 * w + 1) as f64; 2 * w + 1]
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn build_kernel(m: usize) -> Result<KernelSpec> {
    let m1 = (0.247 * m as f64).round() as usize;
    let m2 = (0.339 * m as f64).round() as usize;
    if m1 == 0 || m2 == 0 || m1 + m2 >= m {
        return Err(DemixError::InvalidParameter(format!(
            "kernel half-length {m} too small for three positive widths"
        )));
    }
    let m3 = m - m1 - m2;
    let mut c = convolve(&convolve(&rect(m1), &rect(m2)), &rect(m3));
    debug_assert_eq!(c.len(), 2 * m + 1);
    // Exact symmetry despite rounding in the convolution.
    for p in 0..m {
        let avg = 0.5 * (c[p] + c[2 * m - p]);
        c[p] = avg;
        c[2 * m - p] = avg;
    }
    let curvature: f64 = c
        .iter()
        .enumerate()
        .map(|(p, &cl)| {
            let w = TAU * (p as f64 - m as f64);
            w * w * cl
        })
        .sum();
    Ok(KernelSpec {
        m,
        widths: (m1, m2, m3),
        c,
        kappa: 1.0 / curvature.sqrt(),
    })
}

impl KernelSpec {
    /// Coefficient `c_l` for a centred index; zero outside `-m..=m`.
    #[inline]
    pub fn coef(&self, l: i64) -> f64 {
        let p = l + self.m as i64;
        if p < 0 || p as usize >= self.c.len() {
            0.0
        } else {
            self.c[p as usize]
        }
    }

    pub fn max_coef(&self) -> f64 {
        self.c.iter().copied().fold(0.0, f64::max)
    }

    /// `K̄''(0) = -sum_l (2π l)^2 c_l`.
    pub fn second_derivative_at_zero(&self) -> f64 {
        -1.0 / (self.kappa * self.kappa)
    }
}

/// `sum_{l ∉ mask} (i 2π l)^order c_l exp(i 2π l f)`.
///
/// `mask` holds centred indices in `-m..=m`; `None` evaluates `K̄^{(order)}`.
pub fn kernel_eval(spec: &KernelSpec, f: f64, order: u32, mask: Option<&[i64]>) -> Complex64 {
    assert!(order <= 3, "derivative order {order} not supported");
    let m = spec.m as i64;
    let (m1, m2, m3) = spec.widths;
    let full = dirichlet_jet(m1, f)
        .mul(dirichlet_jet(m2, f))
        .mul(dirichlet_jet(m3, f))
        .derivative(order);
    let full = Complex64::new(full, 0.0);
    match mask {
        None => full,
        Some(ms) => {
            let mut ms = ms.to_vec();
            ms.sort_unstable();
            ms.dedup();
            let removed: Complex64 = ms
                .iter()
                .filter(|l| l.abs() <= m)
                .map(|&l| deriv_factor(l, order) * spec.coef(l) * cis_freq_index(f, l))
                .sum();
            full - removed
        }
    }
}

/// Same as [`kernel_eval`] by direct summation over all coefficients.
pub fn kernel_eval_direct(spec: &KernelSpec, f: f64, order: u32, mask: Option<&[i64]>) -> Complex64 {
    let m = spec.m as i64;
    (-m..=m)
        .filter(|l| mask.is_none_or(|ms| !ms.contains(l)))
        .map(|l| deriv_factor(l, order) * spec.coef(l) * cis_freq_index(f, l))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_values() {
        assert_eq!(dirichlet_eval(5, 0.0, 0).unwrap(), 1.0);
        assert!(dirichlet_eval(5, 1.0 / 11.0, 0).unwrap().abs() < 1e-15);
        let expected = (0.5 * PI).sin() / (5.0 * (0.1 * PI).sin());
        assert!((dirichlet_eval(2, 0.1, 0).unwrap() - expected).abs() < 1e-15);
        assert!((dirichlet_eval(2, 0.1, 0).unwrap() - 0.647213595499958).abs() < 1e-12);
        assert!(dirichlet_eval(2, 0.1, 4).is_err());
    }

    #[test]
    fn dirichlet_limits_at_zero_match_nearby_values() {
        let m = 7;
        for order in 0..4 {
            let at0 = dirichlet_eval(m, 0.0, order).unwrap();
            let near = dirichlet_eval(m, 1e-9, order).unwrap();
            let scale = (TAU * m as f64).powi(order as i32);
            assert!((at0 - near).abs() < 1e-6 * scale, "order {order}");
        }
        let d2 = dirichlet_eval(m, 0.0, 2).unwrap();
        assert!((d2 + 4.0 * PI * PI * 56.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn dirichlet_derivative_matches_summation() {
        // Brute force: (1/(2m+1)) sum_l (i 2π l)^r cos/sin expansions.
        let (m, f) = (4usize, 0.137);
        for order in 1..4u32 {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in -(m as i64)..=(m as i64) {
                let w = Complex64::new(0.0, TAU * l as f64);
                acc += w.powu(order) * Complex64::from_polar(1.0, TAU * l as f64 * f);
            }
            let expect = acc.re / 9.0;
            assert!((dirichlet_eval(m, f, order).unwrap() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_widths_and_normalization() {
        let k = build_kernel(100).unwrap();
        assert_eq!(k.widths, (25, 34, 41));
        assert_eq!(k.c.len(), 201);
        assert!((k.c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for p in 0..=100 {
            assert_eq!(k.c[p], k.c[200 - p]);
        }
        assert!(build_kernel(2).is_err());
    }

    #[test]
    fn kernel_is_product_of_dirichlets() {
        let k = build_kernel(30).unwrap();
        let (m1, m2, m3) = k.widths;
        for &f in &[0.013, 0.2, 0.49] {
            let prod = dirichlet_eval(m1, f, 0).unwrap()
                * dirichlet_eval(m2, f, 0).unwrap()
                * dirichlet_eval(m3, f, 0).unwrap();
            let val = kernel_eval(&k, f, 0, None);
            assert!((val.re - prod).abs() < 1e-13);
            assert!(val.im.abs() < 1e-13);
        }
    }

    #[test]
    fn kernel_basic_values() {
        let k = build_kernel(50).unwrap();
        assert!((kernel_eval(&k, 0.0, 0, None) - 1.0).norm() < 1e-12);
        assert!(kernel_eval(&k, 0.0, 1, None).norm() < 1e-12);
        let brute: Complex64 = (0..101)
            .map(|p| {
                let l = p as f64 - 50.0;
                k.c[p] * Complex64::from_polar(1.0, TAU * l * 0.3)
            })
            .sum();
        assert!((kernel_eval(&k, 0.3, 0, None) - brute).norm() < 1e-13);
        let kap = k.kappa * k.kappa * kernel_eval(&k, 0.0, 2, None).norm();
        assert!((kap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_kernel_removes_terms() {
        let k = build_kernel(20).unwrap();
        let mask = [-3i64, 0, 7];
        let f = 0.21;
        let direct: Complex64 = (-20i64..=20)
            .filter(|l| !mask.contains(l))
            .map(|l| k.coef(l) * Complex64::from_polar(1.0, TAU * l as f64 * f))
            .sum();
        assert!((kernel_eval(&k, f, 0, Some(&mask)) - direct).norm() < 1e-13);
        assert_eq!(kernel_eval(&k, f, 2, Some(&[])), kernel_eval(&k, f, 2, None));
    }

    #[test]
    fn half_length_convention() {
        assert_eq!(half_length(61), 30);
        assert_eq!(half_length(60), 29);
        assert_eq!(centered_index(1, 30), -30);
        assert_eq!(centered_index(61, 30), 30);
    }
}
