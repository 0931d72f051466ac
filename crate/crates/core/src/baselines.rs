//! Periodogram and spectral MUSIC line-spectrum estimators.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::decode::{circular_peaks, golden_max};
use crate::error::{DemixError, Result};
use crate::linalg::CMat;
use crate::model::Samples;
use crate::trig::{cis_freq_index, wrap_unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
    Hamming,
}

impl Window {
    /// Taper values for `n` samples.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let phase = |l: usize| if n > 1 { TAU * l as f64 / (n - 1) as f64 } else { 0.0 };
        (0..n)
            .map(|l| match self {
                Window::None => 1.0,
                Window::Hann => 0.5 - 0.5 * phase(l).cos(),
                Window::Hamming => 0.54 - 0.46 * phase(l).cos(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodogramConfig {
    pub window: Window,
    pub grid_size: usize,
    /// Peaks below this fraction of the maximum are ignored.
    pub peak_threshold: f64,
}

impl PeriodogramConfig {
    pub fn for_n(n: usize) -> Self {
        Self {
            window: Window::None,
            grid_size: 64 * n,
            peak_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Periodogram {
    /// Magnitude at `f = i / grid_size`, normalized so that a unit-amplitude
    /// on-grid line peaks at one.
    pub magnitude: Vec<f64>,
    /// `(frequency, magnitude)` of local maxima, strongest first.
    pub peaks: Vec<(f64, f64)>,
}

impl Periodogram {
    pub fn frequency(&self, i: usize) -> f64 {
        i as f64 / self.magnitude.len() as f64
    }

    /// CSV with columns `f,magnitude`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("f,magnitude\n");
        for (i, m) in self.magnitude.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.frequency(i), m));
        }
        out
    }
}

/// Windowed, zero-padded magnitude spectrum of `y`.
pub fn periodogram(y: &Samples, cfg: &PeriodogramConfig) -> Result<Periodogram> {
    let n = y.n();
    if cfg.grid_size < 4 * n {
        return Err(DemixError::InvalidParameter(format!(
            "grid_size must be at least 4n = {}",
            4 * n
        )));
    }
    if !(0.0..=1.0).contains(&cfg.peak_threshold) {
        return Err(DemixError::InvalidParameter(
            "peak_threshold must lie in [0, 1]".into(),
        ));
    }
    let w = cfg.window.coefficients(n);
    let w_sum: f64 = w.iter().sum();
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.grid_size];
    for (l, (&yl, &wl)) in y.as_slice().iter().zip(&w).enumerate() {
        buf[(l + 1) % cfg.grid_size] = yl * wl;
    }
    FftPlanner::new()
        .plan_fft_forward(cfg.grid_size)
        .process(&mut buf);
    let magnitude: Vec<f64> = buf.iter().map(|v| v.norm() / w_sum).collect();
    let top = magnitude.iter().copied().fold(0.0, f64::max);
    let mut peaks: Vec<(f64, f64)> = circular_peaks(&magnitude, cfg.peak_threshold * top)
        .into_iter()
        .map(|i| (i as f64 / cfg.grid_size as f64, magnitude[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(Periodogram { magnitude, peaks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicConfig {
    /// Rows of the Hankel data matrix; `None` uses `floor(n/2)`.
    pub subarray_len: Option<usize>,
    pub grid_oversample: usize,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            subarray_len: None,
            grid_oversample: 64,
        }
    }
}

/// `k` frequencies by spectral MUSIC with default settings.
pub fn music(y: &Samples, k: usize) -> Result<Vec<f64>> {
    music_with(y, k, &MusicConfig::default())
}

/// Spectral MUSIC on the Hankel matrix `H[i, j] = y[i + j]`.
///
/// The signal subspace is spanned by the `k` leading left singular vectors
/// `U_s`; line frequencies maximize `‖U_s^* a(f)‖²`, with
/// `a(f)_l = exp(i 2π l f)`, which is the same as minimizing the projection
/// onto the noise subspace. Returns fewer than `k` values only if the
/// pseudospectrum has fewer local maxima.
pub fn music_with(y: &Samples, k: usize, cfg: &MusicConfig) -> Result<Vec<f64>> {
    let n = y.n();
    let rows = cfg.subarray_len.unwrap_or(n / 2);
    if rows == 0 || rows >= n {
        return Err(DemixError::InvalidParameter(format!(
            "subarray length {rows} must lie in 1..{n}"
        )));
    }
    if k == 0 || k >= rows {
        return Err(DemixError::InvalidParameter(format!(
            "model order {k} must lie in 1..{rows}"
        )));
    }
    if cfg.grid_oversample < 4 {
        return Err(DemixError::InvalidParameter(
            "grid_oversample must be at least 4".into(),
        ));
    }
    let yv = y.as_slice();
    let cols = n - rows + 1;
    let h = CMat::from_fn(rows, cols, |i, j| yv[i + j]);
    let svd = h.thin_svd().map_err(|_| DemixError::Eigen)?;
    let u = svd.U();
    let signal: Vec<Vec<Complex64>> = (0..k).map(|j| (0..rows).map(|i| u[(i, j)]).collect()).collect();

    let grid = cfg.grid_oversample * n;
    let mut power = vec![0.0; grid];
    let fft = FftPlanner::new().plan_fft_forward(grid);
    for col in &signal {
        let mut buf = vec![Complex64::new(0.0, 0.0); grid];
        buf[..rows].copy_from_slice(col);
        fft.process(&mut buf);
        for (p, v) in power.iter_mut().zip(&buf) {
            *p += v.norm_sqr();
        }
    }
    let projected = |f: f64| -> f64 {
        signal
            .iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .map(|(l, &c)| c * cis_freq_index(f, -(l as i64)))
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum()
    };
    let mut peaks: Vec<usize> = circular_peaks(&power, 0.0);
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    let step = 1.0 / grid as f64;
    let mut freqs: Vec<f64> = peaks
        .into_iter()
        .take(k)
        .map(|i| {
            let c = i as f64 * step;
            wrap_unit(golden_max(c - step, c + step, 1e-14, projected))
        })
        .collect();
    freqs.sort_by(f64::total_cmp);
    Ok(freqs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, LineSpectrum};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn samples(freqs: &[f64], amps: &[Complex64], n: usize) -> Samples {
        Samples::new(forward(&LineSpectrum::from_parts(freqs, amps).unwrap(), n)).unwrap()
    }

    #[test]
    fn on_grid_line_gives_single_peak() {
        let n = 32;
        let y = samples(&[5.0 / 32.0], &[c(1.0, 0.0)], n);
        let cfg = PeriodogramConfig {
            window: Window::None,
            grid_size: 4 * n,
            peak_threshold: 0.5,
        };
        let p = periodogram(&y, &cfg).unwrap();
        assert_eq!(p.peaks.len(), 1);
        assert!((p.peaks[0].0 - 5.0 / 32.0).abs() < 1e-12);
        assert!((p.peaks[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_separated_lines_two_peaks() {
        let n = 64;
        let y = samples(&[0.1, 0.6], &[c(1.0, 0.0), c(0.0, 1.0)], n);
        let mut cfg = PeriodogramConfig::for_n(n);
        cfg.window = Window::Hann;
        let p = periodogram(&y, &cfg).unwrap();
        assert_eq!(p.peaks.len(), 2);
    }

    #[test]
    fn small_grid_rejected() {
        let y = samples(&[0.1], &[c(1.0, 0.0)], 8);
        let cfg = PeriodogramConfig {
            window: Window::None,
            grid_size: 16,
            peak_threshold: 0.1,
        };
        assert!(periodogram(&y, &cfg).is_err());
    }

    #[test]
    fn music_single_line() {
        let y = samples(&[0.237], &[c(0.3, -2.0)], 40);
        let f = music(&y, 1).unwrap();
        assert!((f[0] - 0.237).abs() < 1e-8);
    }

    #[test]
    fn music_three_lines() {
        let truth = [0.1, 0.35, 0.8];
        let y = samples(&truth, &[c(1.0, 0.0), c(0.0, 1.0), c(-0.5, 0.5)], 50);
        let f = music(&y, 3).unwrap();
        for (a, b) in f.iter().zip(&truth) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn music_order_too_large() {
        let y = samples(&[0.1], &[c(1.0, 0.0)], 10);
        assert!(music(&y, 5).is_err());
    }
}
