//! Dual-polynomial certificates for the demixing problem.
//!
//! A certificate is a trigonometric polynomial `Q(f) = sum_{l=1}^n q_l
//! exp(-i 2π l f)` that interpolates the sign pattern of the line amplitudes
//! on `T`, stays strictly below one in modulus elsewhere, carries coefficients
//! `λ r` on the outlier support `Ω` and coefficients of modulus below `λ`
//! off it.
//!
//! Construction works with centred indices `p = l - (m + 1)`. The interpolating
//! part is a combination of shifted copies of a masked triple-Dirichlet kernel
//! and its derivative whose coefficients vanish on `Ω`. Since the kernel is
//! written with `exp(+i 2π p f)` while `Q` uses `exp(-i 2π p f)`, the effective
//! kernel is `K(f) = sum_{p ∉ Ω} c_p exp(-i 2π p f)`, the complex conjugate of
//! [`kernel_eval`] masked by `Ω`.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DemixError, Result};
use crate::kernels::{build_kernel, centered_index, half_length, kernel_eval, KernelSpec};
use crate::model::Instance;
use crate::linalg::{adjoint_on_grid, sigma_min, solve, CMat};
use crate::trig::{cis_freq_index, cis_turns, wrap_dist};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Smallest singular value below which the interpolation system is rejected.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;
/// Relative margin required for the strict inequalities of a valid certificate.
pub const STRICT_MARGIN: f64 = 1e-6;
/// Interpolation tolerance of a valid certificate.
pub const INTERP_TOL: f64 = 1e-8;

/// `Q(f) = sum_{l=1}^n q_l exp(-i 2π l f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPolynomial {
    /// Coefficients in sample indexing: `q[l - 1]` multiplies `exp(-i 2π l f)`.
    pub q: Vec<Complex64>,
    /// Coefficient bound of the robust problem; `None` for clean certificates.
    pub lambda: Option<f64>,
}

impl DualPolynomial {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// `Q^{(order)}(f)`.
    pub fn eval(&self, f: f64, order: u32) -> Complex64 {
        self.q
            .iter()
            .enumerate()
            .map(|(i, &ql)| {
                let l = i as i64 + 1;
                let w = Complex64::new(0.0, -std::f64::consts::TAU * l as f64).powu(order);
                w * ql * cis_freq_index(f, -l)
            })
            .sum()
    }

    /// `Q(k / grid)` for `k = 0..grid`.
    pub fn eval_grid(&self, grid: usize) -> Vec<Complex64> {
        adjoint_on_grid(&self.q, grid)
    }

    /// Coefficients indexed by centred index `p = l - (m + 1)`.
    pub fn centered_coefficient(&self, p: i64) -> Complex64 {
        let m = half_length(self.n()) as i64;
        let l = p + m + 1;
        if l < 1 || l as usize > self.n() {
            ZERO
        } else {
            self.q[l as usize - 1]
        }
    }
}

/// Linear system fixing the interpolating part of the certificate.
///
/// `D = [[D0, D1], [-D1, D2]]` with `(D0)_{jl} = K(f_j - f_l)`,
/// `(D1)_{jl} = κ K'(f_j - f_l)` and `(D2)_{jl} = -κ² K''(f_j - f_l)`.
#[derive(Debug, Clone)]
pub struct InterpSystem {
    pub n: usize,
    pub m: usize,
    pub kappa: f64,
    pub freqs: Vec<f64>,
    /// Outlier support in sample indexing, sorted.
    pub omega: Vec<usize>,
    pub d0: CMat,
    pub d1: CMat,
    pub d2: CMat,
    pub d: CMat,
    /// Columns `b(p)` for the centred indices of `omega`.
    pub b_omega: CMat,
}

/// `b(p) = [exp(-i 2π p f_j); i 2π p κ exp(-i 2π p f_j)]`.
pub fn b_vector(p: i64, freqs: &[f64], kappa: f64) -> Vec<Complex64> {
    let k = freqs.len();
    let mut b = vec![ZERO; 2 * k];
    let w = Complex64::new(0.0, std::f64::consts::TAU * p as f64 * kappa);
    for (j, &f) in freqs.iter().enumerate() {
        let e = cis_freq_index(f, -p);
        b[j] = e;
        b[k + j] = w * e;
    }
    b
}

fn validate_support(freqs: &[f64], omega: &[usize], n: usize) -> Result<Vec<usize>> {
    if freqs.is_empty() {
        return Err(DemixError::InvalidParameter(
            "certificate needs a nonempty frequency support".into(),
        ));
    }
    if freqs.iter().any(|f| !f.is_finite()) {
        return Err(DemixError::NonFinite("support frequency"));
    }
    let mut om = omega.to_vec();
    om.sort_unstable();
    om.dedup();
    if om.len() != omega.len() {
        return Err(DemixError::InvalidParameter("repeated outlier index".into()));
    }
    if om.iter().any(|&l| l == 0 || l > n) {
        return Err(DemixError::InvalidParameter(format!(
            "outlier index outside 1..={n}"
        )));
    }
    if freqs.len() + om.len() > n {
        return Err(DemixError::InvalidParameter(format!(
            "k + s = {} exceeds n = {n}",
            freqs.len() + om.len()
        )));
    }
    Ok(om)
}

pub fn build_system(spec: &KernelSpec, freqs: &[f64], omega: &[usize], n: usize) -> Result<InterpSystem> {
    let m = half_length(n);
    if spec.m != m {
        return Err(DemixError::DimensionMismatch {
            expected: m,
            got: spec.m,
        });
    }
    let omega = validate_support(freqs, omega, n)?;
    let k = freqs.len();
    let kappa = spec.kappa;
    let mask: Vec<i64> = omega.iter().map(|&l| centered_index(l, m)).collect();

    // Kernel values only depend on f_j - f_l and the lag-(-x) value is the
    // conjugate of the lag-x value, so fill the lower triangle and reflect.
    let mut d0 = CMat::zeros(k, k);
    let mut d1 = CMat::zeros(k, k);
    let mut d2 = CMat::zeros(k, k);
    for j in 0..k {
        for l in 0..=j {
            let x = freqs[j] - freqs[l];
            let k0 = kernel_eval(spec, x, 0, Some(&mask)).conj();
            let k1 = kernel_eval(spec, x, 1, Some(&mask)).conj();
            let k2 = kernel_eval(spec, x, 2, Some(&mask)).conj();
            d0[(j, l)] = k0;
            d1[(j, l)] = k1 * kappa;
            d2[(j, l)] = -k2 * kappa * kappa;
            if l != j {
                // K(-x) = conj K(x); K'(-x) = -conj K'(x); K''(-x) = conj K''(x).
                d0[(l, j)] = k0.conj();
                d1[(l, j)] = -k1.conj() * kappa;
                d2[(l, j)] = -k2.conj() * kappa * kappa;
            }
        }
    }
    let d = Mat::from_fn(2 * k, 2 * k, |i, j| match (i < k, j < k) {
        (true, true) => d0[(i, j)],
        (true, false) => d1[(i, j - k)],
        (false, true) => -d1[(i - k, j)],
        (false, false) => d2[(i - k, j - k)],
    });
    let cols: Vec<Vec<Complex64>> = mask.iter().map(|&p| b_vector(p, freqs, kappa)).collect();
    let b_omega = Mat::from_fn(2 * k, cols.len(), |i, j| cols[j][i]);
    Ok(InterpSystem {
        n,
        m,
        kappa,
        freqs: freqs.to_vec(),
        omega,
        d0,
        d1,
        d2,
        d,
        b_omega,
    })
}

impl InterpSystem {
    pub fn k(&self) -> usize {
        self.freqs.len()
    }

    /// `[h'; 0] - λ B_Ω r`, with `h'` the sign pattern rotated into centred
    /// indexing.
    pub fn rhs(&self, h: &[Complex64], r: &[Complex64], lambda: f64) -> Result<Vec<Complex64>> {
        let k = self.k();
        if h.len() != k {
            return Err(DemixError::DimensionMismatch {
                expected: k,
                got: h.len(),
            });
        }
        if r.len() != self.omega.len() {
            return Err(DemixError::DimensionMismatch {
                expected: self.omega.len(),
                got: r.len(),
            });
        }
        let mut out = vec![ZERO; 2 * k];
        for j in 0..k {
            out[j] = h[j] * cis_turns((self.m as f64 + 1.0) * self.freqs[j]);
        }
        for (col, &rl) in r.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o -= self.b_omega[(i, col)] * rl * lambda;
            }
        }
        Ok(out)
    }
}

/// Robust certificate: coefficients fixed to `λ r` on `Ω`.
///
/// `h` is the target sign pattern on `T` and `r` the sign pattern of the
/// outliers, ordered like the sorted `Ω`.
pub fn construct_certificate(
    system: &InterpSystem,
    spec: &KernelSpec,
    h: &[Complex64],
    r: &[Complex64],
    lambda: f64,
) -> Result<DualPolynomial> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(DemixError::InvalidParameter("lambda must be positive".into()));
    }
    let q = interpolate(system, spec, h, r, lambda)?;
    Ok(DualPolynomial {
        q,
        lambda: Some(lambda),
    })
}

fn interpolate(
    system: &InterpSystem,
    spec: &KernelSpec,
    h: &[Complex64],
    r: &[Complex64],
    lambda: f64,
) -> Result<Vec<Complex64>> {
    let rhs = system.rhs(h, r, lambda)?;
    let smin = sigma_min(&system.d)?;
    if !(smin > SINGULAR_THRESHOLD) {
        return Err(DemixError::SingularSystem { sigma_min: smin });
    }
    let coef = solve(&system.d, &rhs);
    if coef.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(DemixError::NonFinite("certificate interpolation"));
    }
    let n = system.n;
    let mut q = vec![ZERO; n];
    let mut on_omega = system.omega.iter().zip(r).peekable();
    for (i, ql) in q.iter_mut().enumerate() {
        let l = i + 1;
        if let Some(&(&lo, &rl)) = on_omega.peek() {
            if lo == l {
                *ql = rl * lambda;
                on_omega.next();
                continue;
            }
        }
        let p = centered_index(l, system.m);
        let cp = spec.coef(p);
        if cp == 0.0 {
            continue;
        }
        let b = b_vector(p, &system.freqs, system.kappa);
        let inner: Complex64 = b.iter().zip(&coef).map(|(bi, ci)| bi.conj() * ci).sum();
        *ql = inner * cp;
    }
    Ok(q)
}

/// Certificate of the outlier-free problem, built with the unmasked kernel.
pub fn clean_certificate(spec: &KernelSpec, freqs: &[f64], h: &[Complex64], n: usize) -> Result<DualPolynomial> {
    let system = build_system(spec, freqs, &[], n)?;
    let q = interpolate(&system, spec, h, &[], 0.0)?;
    Ok(DualPolynomial { q, lambda: None })
}

/// Verification grid and exclusion radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub grid_size: usize,
    pub guard_radius: f64,
}

impl VerifyConfig {
    /// `10^4 n` grid points and a guard radius of `10^-2 / n`.
    pub fn for_n(n: usize) -> Self {
        Self {
            grid_size: 10_000 * n,
            guard_radius: 1e-2 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `max_j |Q(f_j) - h_j|`.
    pub interpolation_err: f64,
    /// `max_j κ |Q_c'(f_j)|` for the centred polynomial `Q_c`.
    pub derivative_err: f64,
    /// Grid maximum of `|Q|` outside the guard intervals.
    pub offsupport_max: f64,
    pub q_on_omega_err: f64,
    pub q_off_omega_max: f64,
    /// `d²|Q|²/df² < 0` at every support point.
    pub concave_at_support: bool,
    pub valid: bool,
}

/// Check the certificate conditions on a fine grid.
///
/// `r` is only used to compare coefficients on `omega`; pass an empty slice
/// together with an empty `omega` for clean certificates.
pub fn verify_certificate(
    poly: &DualPolynomial,
    spec: &KernelSpec,
    freqs: &[f64],
    h: &[Complex64],
    omega: &[usize],
    r: &[Complex64],
    cfg: &VerifyConfig,
) -> Result<CertificateReport> {
    let n = poly.n();
    if h.len() != freqs.len() {
        return Err(DemixError::DimensionMismatch {
            expected: freqs.len(),
            got: h.len(),
        });
    }
    if r.len() != omega.len() {
        return Err(DemixError::DimensionMismatch {
            expected: omega.len(),
            got: r.len(),
        });
    }
    if cfg.grid_size < 4 * n {
        return Err(DemixError::InvalidParameter(format!(
            "verification grid {} smaller than 4n",
            cfg.grid_size
        )));
    }
    let m1 = half_length(n) as f64 + 1.0;

    let mut interpolation_err: f64 = 0.0;
    let mut derivative_err: f64 = 0.0;
    let mut concave = true;
    let step = 1e-3 / n as f64;
    for (&f, &hj) in freqs.iter().zip(h) {
        let q0 = poly.eval(f, 0);
        let q1 = poly.eval(f, 1);
        interpolation_err = interpolation_err.max((q0 - hj).norm());
        // Q_c(f) = exp(i 2π (m+1) f) Q(f).
        let dc = cis_turns(m1 * f)
            * (q1 + Complex64::new(0.0, std::f64::consts::TAU * m1) * q0);
        derivative_err = derivative_err.max(spec.kappa * dc.norm());
        let curv = poly.eval(f + step, 0).norm_sqr() - 2.0 * q0.norm_sqr()
            + poly.eval(f - step, 0).norm_sqr();
        concave &= curv < 0.0;
    }

    let grid = cfg.grid_size;
    let values = poly.eval_grid(grid);
    let mut excluded = vec![false; grid];
    for &f in freqs {
        let lo = ((f - cfg.guard_radius) * grid as f64).ceil() as i64;
        let hi = ((f + cfg.guard_radius) * grid as f64).floor() as i64;
        for idx in lo..=hi {
            let i = idx.rem_euclid(grid as i64) as usize;
            if wrap_dist(i as f64 / grid as f64, f) <= cfg.guard_radius {
                excluded[i] = true;
            }
        }
    }
    let offsupport_max = values
        .par_chunks(1 << 14)
        .zip(excluded.par_chunks(1 << 14))
        .map(|(v, e)| {
            v.iter()
                .zip(e)
                .filter(|(_, &ex)| !ex)
                .map(|(z, _)| z.norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);

    let mut q_on_omega_err: f64 = 0.0;
    let lambda = poly.lambda.unwrap_or(f64::INFINITY);
    for (&l, &rl) in omega.iter().zip(r) {
        if l == 0 || l > n {
            return Err(DemixError::InvalidParameter(format!(
                "outlier index {l} outside 1..={n}"
            )));
        }
        q_on_omega_err = q_on_omega_err.max((poly.q[l - 1] - rl * lambda).norm());
    }
    let q_off_omega_max = (1..=n)
        .filter(|l| !omega.contains(l))
        .map(|l| poly.q[l - 1].norm())
        .fold(0.0, f64::max);

    let coef_ok = match poly.lambda {
        Some(lam) => q_on_omega_err == 0.0 && q_off_omega_max < lam * (1.0 - STRICT_MARGIN),
        None => omega.is_empty(),
    };
    let valid = interpolation_err < INTERP_TOL
        && offsupport_max < 1.0 - STRICT_MARGIN
        && concave
        && coef_ok;
    Ok(CertificateReport {
        interpolation_err,
        derivative_err,
        offsupport_max,
        q_on_omega_err,
        q_off_omega_max,
        concave_at_support: concave,
        valid,
    })
}

/// Build and verify the robust certificate for the sign patterns of an
/// instance's lines and outliers.
pub fn certify_instance(
    instance: &Instance,
    lambda: f64,
    cfg: &VerifyConfig,
) -> Result<(DualPolynomial, CertificateReport)> {
    let n = instance.n();
    let spec = build_kernel(half_length(n))?;
    let freqs = instance.spectrum.freqs();
    let h = sign_pattern(&instance.spectrum.amps());
    let omega = instance.spikes.support();
    let r = sign_pattern(&omega.iter().map(|&l| instance.spikes.get(l)).collect::<Vec<_>>());
    let system = build_system(&spec, &freqs, &omega, n)?;
    let poly = construct_certificate(&system, &spec, &h, &r, lambda)?;
    let report = verify_certificate(&poly, &spec, &freqs, &h, &omega, &r, cfg)?;
    Ok((poly, report))
}

/// Signs `x / |x|` of a list of nonzero amplitudes.
pub fn sign_pattern(values: &[Complex64]) -> Vec<Complex64> {
    values.iter().map(|v| v / v.norm()).collect()
}
