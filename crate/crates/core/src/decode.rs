//! Support decoding from a dual vector and amplitude estimation.
//!
//! Outliers sit where `|η_l|` reaches `λ`; spectral lines sit where the dual
//! polynomial `|(F^* η)(f)|` reaches one. Both equalities are tested with a
//! relative tolerance, after which amplitudes come from least squares and
//! near-zero atoms are pruned.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmConfig, SolveReport};
use crate::error::{DemixError, Result};
use crate::linalg::{adjoint_on_grid, lstsq, CMat};
use crate::model::{l2_norm, recovery_score, Instance, Line, LineSpectrum, Samples, SpikeVector};
use crate::trig::{cis_freq_index, wrap_dist, wrap_unit};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Least-squares systems with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub eta_tol: f64,
    pub poly_tol: f64,
    pub grid_oversample: usize,
    /// Peaks closer than this (in units of `1/n`) are merged.
    pub cluster_radius: f64,
    /// Atoms below this fraction of the largest amplitude are dropped.
    pub prune_rel: f64,
    /// Gauss-Newton polishing of the decoded frequencies before the final fit.
    pub polish: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            eta_tol: 1e-3,
            poly_tol: 1e-3,
            grid_oversample: 64,
            cluster_radius: 0.1,
            prune_rel: 1e-6,
            polish: true,
        }
    }
}

impl DecodeConfig {
    fn validate(&self) -> Result<()> {
        let in_range = |x: f64| x > 0.0 && x < 0.5;
        if !in_range(self.eta_tol) || !in_range(self.poly_tol) {
            return Err(DemixError::InvalidParameter(
                "decode tolerances must lie in (0, 0.5)".into(),
            ));
        }
        if self.grid_oversample < 16 {
            return Err(DemixError::InvalidParameter(
                "grid_oversample must be at least 16".into(),
            ));
        }
        if !(self.cluster_radius >= 0.0) || !(self.prune_rel >= 0.0) {
            return Err(DemixError::InvalidParameter(
                "cluster radius and prune threshold must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn poly_abs(eta: &[Complex64], f: f64) -> f64 {
    eta.iter()
        .enumerate()
        .map(|(i, &e)| e * cis_freq_index(f, -(i as i64 + 1)))
        .sum::<Complex64>()
        .norm()
}

/// Maximize a unimodal function on `[a, b]` by golden-section search.
pub(crate) fn golden_max(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Local maxima of `|values|` on a circular grid, above `threshold`.
pub(crate) fn circular_peaks(mags: &[f64], threshold: f64) -> Vec<usize> {
    let len = mags.len();
    (0..len)
        .filter(|&i| {
            let prev = mags[(i + len - 1) % len];
            let next = mags[(i + 1) % len];
            mags[i] >= threshold && mags[i] >= prev && mags[i] > next
        })
        .collect()
}

/// Merge points closer than `radius`, keeping the one with the larger score.
fn merge_clusters(mut pts: Vec<(f64, f64)>, radius: f64) -> Vec<f64> {
    pts.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut kept: Vec<f64> = Vec::new();
    for (f, _) in pts {
        if kept.iter().all(|&g| wrap_dist(f, g) > radius) {
            kept.push(f);
        }
    }
    kept.sort_by(f64::total_cmp);
    kept
}

/// Estimated line frequencies and outlier indices from a dual vector.
pub fn decode_supports(eta: &[Complex64], lambda: f64, cfg: &DecodeConfig) -> Result<(Vec<f64>, Vec<usize>)> {
    cfg.validate()?;
    let n = eta.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let omega: Vec<usize> = eta
        .iter()
        .enumerate()
        .filter(|(_, e)| e.norm() >= lambda * (1.0 - cfg.eta_tol))
        .map(|(i, _)| i + 1)
        .collect();

    let grid = cfg.grid_oversample * n;
    let mags: Vec<f64> = adjoint_on_grid(eta, grid).iter().map(|v| v.norm()).collect();
    let threshold = 1.0 - cfg.poly_tol;
    let spacing = 1.0 / grid as f64;
    let peaks: Vec<(f64, f64)> = circular_peaks(&mags, threshold)
        .into_iter()
        .map(|i| {
            let f0 = i as f64 * spacing;
            let f = golden_max(f0 - spacing, f0 + spacing, 1e-15, |f| poly_abs(eta, f));
            (wrap_unit(f), poly_abs(eta, f))
        })
        .filter(|&(_, v)| v >= threshold)
        .collect();
    let freqs = merge_clusters(peaks, cfg.cluster_radius / n as f64);
    Ok((freqs, omega))
}

/// Which data the amplitude fit uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LsMode {
    /// Least squares over the combined dictionary `[F_T | I_Ω]`.
    #[default]
    Joint,
    /// Fit the lines on samples outside `Ω`, then set spikes to the residual.
    Masked,
}

pub(crate) fn line_matrix(freqs: &[f64], rows: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), freqs.len(), |i, j| cis_freq_index(freqs[j], rows[i] as i64))
}

/// Least-squares amplitudes for given supports.
pub fn amplitude_ls(
    y: &Samples,
    freqs: &[f64],
    omega: &[usize],
    mode: LsMode,
) -> Result<(LineSpectrum, SpikeVector)> {
    let yv = y.as_slice();
    let n = yv.len();
    if omega.iter().any(|&l| l == 0 || l > n) {
        return Err(DemixError::InvalidParameter(format!(
            "outlier index outside 1..={n}"
        )));
    }
    let (k, s) = (freqs.len(), omega.len());
    if k + s > n {
        return Err(DemixError::RankDeficient {
            condition: f64::INFINITY,
        });
    }
    let freqs: Vec<f64> = freqs.iter().map(|&f| wrap_unit(f)).collect();
    match mode {
        LsMode::Joint => {
            let all_rows: Vec<usize> = (1..=n).collect();
            let lines = line_matrix(&freqs, &all_rows);
            let a = CMat::from_fn(n, k + s, |i, j| {
                if j < k {
                    lines[(i, j)]
                } else if omega[j - k] == i + 1 {
                    Complex64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            });
            let (x, _) = lstsq(&a, yv, MAX_CONDITION)?;
            let spectrum = LineSpectrum::from_parts(&freqs, &x[..k])?;
            let spikes = SpikeVector::new(n, omega.iter().copied().zip(x[k..].iter().copied()))?;
            Ok((spectrum, spikes))
        }
        LsMode::Masked => {
            let rows: Vec<usize> = (1..=n).filter(|l| !omega.contains(l)).collect();
            let a = line_matrix(&freqs, &rows);
            let b: Vec<Complex64> = rows.iter().map(|&l| yv[l - 1]).collect();
            let (x, _) = lstsq(&a, &b, MAX_CONDITION)?;
            let spectrum = LineSpectrum::from_parts(&freqs, &x)?;
            let g = crate::model::forward(&spectrum, n);
            let spikes = SpikeVector::new(n, omega.iter().map(|&l| (l, yv[l - 1] - g[l - 1])))?;
            Ok((spectrum, spikes))
        }
    }
}

/// Drop atoms whose amplitude is below `rel` times the largest amplitude.
pub fn prune(spectrum: &LineSpectrum, spikes: &SpikeVector, rel: f64) -> (Vec<f64>, Vec<usize>) {
    let amax = spectrum
        .amps()
        .into_iter()
        .chain(spikes.iter().map(|(_, v)| v))
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let cut = rel * amax;
    let freqs = spectrum
        .entries()
        .iter()
        .filter(|e| e.amp.norm() > cut)
        .map(|e| e.freq)
        .collect();
    let omega = spikes.iter().filter(|(_, v)| v.norm() > cut).map(|(l, _)| l).collect();
    (freqs, omega)
}

/// Gauss-Newton refinement of line frequencies on the samples outside `omega`.
///
/// Amplitudes are eliminated at every step (variable projection); a step is
/// accepted only if it lowers the residual.
pub fn polish_frequencies(y: &Samples, freqs: &[f64], omega: &[usize]) -> Result<Vec<f64>> {
    let yv = y.as_slice();
    let n = yv.len();
    let rows: Vec<usize> = (1..=n).filter(|l| !omega.contains(l)).collect();
    let b: Vec<Complex64> = rows.iter().map(|&l| yv[l - 1]).collect();
    let k = freqs.len();
    if k == 0 || rows.len() <= k {
        return Ok(freqs.to_vec());
    }
    let fit = |fs: &[f64]| -> Result<(Vec<Complex64>, Vec<Complex64>, f64)> {
        let a = line_matrix(fs, &rows);
        let (x, _) = lstsq(&a, &b, MAX_CONDITION)?;
        let r: Vec<Complex64> = (0..rows.len())
            .map(|i| b[i] - (0..k).map(|j| a[(i, j)] * x[j]).sum::<Complex64>())
            .collect();
        let norm = l2_norm(&r);
        Ok((x, r, norm))
    };
    let mut cur = freqs.to_vec();
    let (mut x, mut r, mut norm) = fit(&cur)?;
    let tiny = 1e-15 * l2_norm(&b);
    for _ in 0..50 {
        if norm <= tiny {
            break;
        }
        // Real unknowns: δf (k) and Re/Im δx (2k). Residual stacked as Re, Im.
        let m = rows.len();
        let jac = CMat::from_fn(2 * m, 3 * k, |i, j| {
            let (row, imag) = (i % m, i >= m);
            let l = rows[row] as f64;
            let e = cis_freq_index(cur[j % k], rows[row] as i64);
            let d = if j < k {
                x[j] * e * Complex64::new(0.0, std::f64::consts::TAU * l)
            } else if j < 2 * k {
                e
            } else {
                e * Complex64::new(0.0, 1.0)
            };
            Complex64::new(if imag { d.im } else { d.re }, 0.0)
        });
        let rhs: Vec<Complex64> = (0..2 * m)
            .map(|i| Complex64::new(if i >= m { r[i - m].im } else { r[i].re }, 0.0))
            .collect();
        let Ok((step, _)) = lstsq(&jac, &rhs, 1e14) else {
            break;
        };
        let trial: Vec<f64> = cur.iter().zip(&step).map(|(f, s)| wrap_unit(f + s.re)).collect();
        let (xt, rt, nt) = fit(&trial)?;
        if nt < norm {
            let moved = step[..k].iter().map(|s| s.re.abs()).fold(0.0, f64::max);
            cur = trial;
            x = xt;
            r = rt;
            norm = nt;
            if moved < 1e-15 {
                break;
            }
        } else {
            break;
        }
    }
    Ok(cur)
}

/// Result of the convex demixing pipeline.
#[derive(Debug, Clone)]
pub struct DemixOutcome {
    pub report: SolveReport,
    pub t_hat: Vec<f64>,
    pub omega_hat: Vec<usize>,
    pub spectrum: LineSpectrum,
    pub spikes: SpikeVector,
}

/// Fit amplitudes on decoded supports, prune spurious atoms and refit.
pub fn estimate_from_supports(
    y: &Samples,
    freqs: &[f64],
    omega: &[usize],
    cfg: &DecodeConfig,
    mode: LsMode,
) -> Result<(LineSpectrum, SpikeVector)> {
    let (spec0, spikes0) = amplitude_ls(y, freqs, omega, mode)?;
    let (mut freqs, mut omega) = prune(&spec0, &spikes0, cfg.prune_rel);
    if cfg.polish && !freqs.is_empty() {
        freqs = polish_frequencies(y, &freqs, &omega)?;
        // Prune again with the polished frequencies.
        let (spec1, spikes1) = amplitude_ls(y, &freqs, &omega, mode)?;
        (freqs, omega) = prune(&spec1, &spikes1, cfg.prune_rel);
    }
    amplitude_ls(y, &freqs, &omega, mode)
}

/// ADMM, support decoding and amplitude fitting.
pub fn demix(y: &Samples, admm: &AdmmConfig, cfg: &DecodeConfig) -> Result<DemixOutcome> {
    let report = admm_solve(y, admm)?;
    let decoded = decode_supports(&report.eta, admm.lambda, cfg).and_then(|(t_hat, omega_hat)| {
        let est = estimate_from_supports(y, &t_hat, &omega_hat, cfg, LsMode::Joint)?;
        Ok((t_hat, omega_hat, est))
    });
    let (t_hat, omega_hat, (spectrum, spikes)) = match decoded {
        Ok(v) => v,
        // Non-convergence takes precedence over decoding errors.
        Err(e) => {
            report.ensure_converged()?;
            return Err(e);
        }
    };
    Ok(DemixOutcome {
        report,
        t_hat,
        omega_hat,
        spectrum,
        spikes,
    })
}

/// Run `solver` on a trimmed copy of `instance` and report exact recovery.
///
/// `keep_lines` indexes the sorted spectrum; `keep_spikes` lists sample
/// indices of retained outliers.
pub fn trimming_check<F>(instance: &Instance, keep_lines: &[usize], keep_spikes: &[usize], solver: F) -> Result<bool>
where
    F: Fn(&Samples) -> Result<(LineSpectrum, SpikeVector)>,
{
    if keep_lines.iter().any(|&i| i >= instance.spectrum.len()) {
        return Err(DemixError::InvalidParameter("line subset out of range".into()));
    }
    let support = instance.spikes.support();
    if keep_spikes.iter().any(|l| !support.contains(l)) {
        return Err(DemixError::InvalidParameter(
            "spike subset not contained in the outlier support".into(),
        ));
    }
    let trimmed = instance.trimmed(keep_lines, keep_spikes)?;
    let (spectrum, spikes) = solver(&trimmed.y)?;
    Ok(recovery_score(&trimmed, &spectrum, &spikes)?.exact_demix)
}

/// Spectrum built from explicit `(frequency, amplitude)` pairs.
pub fn spectrum_from_pairs(pairs: &[(f64, Complex64)]) -> Result<LineSpectrum> {
    LineSpectrum::new(pairs.iter().map(|&(freq, amp)| Line { freq, amp }).collect())
}
