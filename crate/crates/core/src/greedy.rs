//! Greedy demixing over the dictionary of unit-norm sinusoids `a(f)` and
//! standard basis vectors `e(l)`.
//!
//! Each outer iteration adds the atom most correlated with the residual,
//! refits all amplitudes by least squares, prunes atoms below `tau`, jointly
//! moves the line frequencies with a Nelder-Mead search on the
//! least-squares cost and recomputes the residual.

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::decode::{amplitude_ls, golden_max, line_matrix, poly_abs, LsMode, MAX_CONDITION};
use crate::error::{DemixError, Result};
use crate::linalg::{adjoint_on_grid, lstsq};
use crate::model::{forward, l2_norm, LineSpectrum, Samples, SpikeVector};
use crate::trig::wrap_unit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Absolute amplitude below which atoms are pruned. `None` picks
    /// `1e-6 ‖y‖₂ / √n`.
    pub tau: Option<f64>,
    pub fft_oversample: usize,
    pub max_atoms: usize,
    pub max_outer_iters: usize,
    /// Stop the simplex once the spread of cost values falls below this
    /// fraction of `‖y‖₂`.
    pub simplex_tol: f64,
    /// Iteration cap for one simplex search.
    pub simplex_max_iters: u64,
    pub local_opt: bool,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            tau: None,
            fft_oversample: 32,
            max_atoms: usize::MAX,
            max_outer_iters: 200,
            simplex_tol: 1e-14,
            simplex_max_iters: 20_000,
            local_opt: true,
        }
    }
}

impl GreedyConfig {
    fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau {
            if !(t > 0.0 && t.is_finite()) {
                return Err(DemixError::InvalidParameter("tau must be positive".into()));
            }
        }
        if self.fft_oversample < 8 {
            return Err(DemixError::InvalidParameter(
                "fft_oversample must be at least 8".into(),
            ));
        }
        if self.max_atoms == 0 || self.max_outer_iters == 0 || self.simplex_max_iters == 0 {
            return Err(DemixError::InvalidParameter(
                "iteration and atom caps must be positive".into(),
            ));
        }
        if !(self.simplex_tol > 0.0) {
            return Err(DemixError::InvalidParameter(
                "simplex_tol must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn tau_for(&self, y: &Samples) -> f64 {
        self.tau
            .unwrap_or_else(|| 1e-6 * y.norm() / (y.n() as f64).sqrt())
    }
}

/// Dictionary atom selected by [`correlation_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Atom {
    Sine { freq: f64, corr: f64 },
    Spike { index: usize, corr: f64 },
}

/// Most correlated atom with `residual`.
///
/// Sine correlations `|<a(f), r>|` are scanned on a grid of
/// `fft_oversample * n` points and the best one is refined by golden-section
/// search within one grid cell.
pub fn correlation_scan(residual: &[Complex64], fft_oversample: usize) -> Result<Atom> {
    let n = residual.len();
    if n == 0 || residual.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Err(DemixError::InvalidParameter("residual is zero".into()));
    }
    let (spike_idx, spike_corr) = residual
        .iter()
        .enumerate()
        .map(|(i, v)| (i + 1, v.norm()))
        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });

    let grid = fft_oversample * n;
    let scan = adjoint_on_grid(residual, grid);
    let (best_bin, _) = scan
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.norm()))
        .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let h = 1.0 / grid as f64;
    let centre = best_bin as f64 * h;
    let f = golden_max(centre - h, centre + h, 1e-13, |f| poly_abs(residual, f));
    let freq = wrap_unit(f);
    let sine_corr = poly_abs(residual, freq) / (n as f64).sqrt();

    Ok(if sine_corr > spike_corr {
        Atom::Sine { freq, corr: sine_corr }
    } else {
        Atom::Spike {
            index: spike_idx,
            corr: spike_corr,
        }
    })
}

/// Least-squares residual norm with lines at `freqs` and free values on `omega`.
fn ls_cost(y: &[Complex64], rows: &[usize], freqs: &[f64]) -> f64 {
    let b: Vec<Complex64> = rows.iter().map(|&l| y[l - 1]).collect();
    if freqs.is_empty() {
        return l2_norm(&b);
    }
    let fs: Vec<f64> = freqs.iter().map(|&f| wrap_unit(f)).collect();
    let a = line_matrix(&fs, rows);
    match lstsq(&a, &b, MAX_CONDITION) {
        Ok((x, _)) => {
            let r: Vec<Complex64> = (0..rows.len())
                .map(|i| b[i] - (0..fs.len()).map(|j| a[(i, j)] * x[j]).sum::<Complex64>())
                .collect();
            l2_norm(&r)
        }
        Err(_) => f64::INFINITY,
    }
}

struct LsProblem<'a> {
    y: &'a [Complex64],
    rows: Vec<usize>,
}

impl CostFunction for LsProblem<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(ls_cost(self.y, &self.rows, p))
    }
}

/// Jointly move the frequencies in `freqs` to a local minimum of the
/// least-squares cost, with samples in `omega` fitted freely.
///
/// Never returns a point with a larger cost than the input.
pub fn local_optimize(y: &Samples, freqs: &[f64], omega: &[usize], cfg: &GreedyConfig) -> Result<Vec<f64>> {
    let yv = y.as_slice();
    let n = yv.len();
    if freqs.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<usize> = (1..=n).filter(|l| !omega.contains(l)).collect();
    let start_cost = ls_cost(yv, &rows, freqs);
    let radius = 0.5 / n as f64;
    let mut simplex = vec![freqs.to_vec()];
    for j in 0..freqs.len() {
        let mut v = freqs.to_vec();
        v[j] += radius;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(cfg.simplex_tol * y.norm())
        .map_err(|e| DemixError::InvalidParameter(e.to_string()))?;
    let problem = LsProblem { y: yv, rows };
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(cfg.simplex_max_iters))
        .run()
        .map_err(|e| DemixError::InvalidParameter(e.to_string()))?;
    let state = res.state();
    match state.get_best_param() {
        Some(best) if state.get_best_cost() <= start_cost => {
            Ok(best.iter().map(|&f| wrap_unit(f)).collect())
        }
        _ => Ok(freqs.to_vec()),
    }
}

/// One outer iteration of the greedy loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub residual: f64,
    pub freqs: Vec<f64>,
    pub omega: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub spectrum: LineSpectrum,
    pub spikes: SpikeVector,
    pub trace: Vec<TraceEntry>,
    pub residual_norm: f64,
    /// False when an iteration or atom cap stopped the loop first.
    pub converged: bool,
}

impl GreedyResult {
    /// Trace as CSV with columns `iter,residual,n_sines,n_spikes`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iter,residual,n_sines,n_spikes\n");
        for t in &self.trace {
            out.push_str(&format!("{},{},{},{}\n", t.iter, t.residual, t.freqs.len(), t.omega.len()));
        }
        out
    }
}

fn fit(y: &Samples, freqs: &[f64], omega: &[usize]) -> Result<(LineSpectrum, SpikeVector)> {
    amplitude_ls(y, freqs, omega, LsMode::Joint)
}

/// Greedy demixing: select, fit, prune, locally optimize, update the residual.
///
/// Pruning runs before the local optimization within an iteration.
pub fn greedy_demix(y: &Samples, cfg: &GreedyConfig) -> Result<GreedyResult> {
    cfg.validate()?;
    let n = y.n();
    let y_norm = y.norm();
    let tau = cfg.tau_for(y);
    let stop = 1e-9 * y_norm;

    let mut freqs: Vec<f64> = Vec::new();
    let mut omega: Vec<usize> = Vec::new();
    let mut spectrum = LineSpectrum::empty();
    let mut spikes = SpikeVector::zeros(n);
    let mut residual = y.as_slice().to_vec();
    let mut res_norm = y_norm;
    let mut trace = Vec::new();
    let mut converged = res_norm <= stop;

    for iter in 1..=cfg.max_outer_iters {
        if converged {
            break;
        }
        if freqs.len() + omega.len() >= cfg.max_atoms.min(n) {
            break;
        }
        match correlation_scan(&residual, cfg.fft_oversample)? {
            Atom::Sine { freq, .. } => freqs.push(freq),
            Atom::Spike { index, .. } => omega.push(index),
        }
        omega.sort_unstable();
        omega.dedup();

        let (s0, z0) = match fit(y, &freqs, &omega) {
            Ok(v) => v,
            // The new atom made the fit degenerate; keep the previous estimate.
            Err(DemixError::RankDeficient { .. }) => break,
            Err(e) => return Err(e),
        };
        freqs = s0.entries().iter().filter(|e| e.amp.norm() >= tau).map(|e| e.freq).collect();
        omega = z0.iter().filter(|(_, v)| v.norm() >= tau).map(|(l, _)| l).collect();

        if cfg.local_opt && !freqs.is_empty() {
            freqs = local_optimize(y, &freqs, &omega, cfg)?;
        }
        (spectrum, spikes) = match fit(y, &freqs, &omega) {
            Ok(v) => v,
            Err(DemixError::RankDeficient { .. }) => break,
            Err(e) => return Err(e),
        };
        freqs = spectrum.freqs();

        let model = forward(&spectrum, n);
        residual = y
            .as_slice()
            .iter()
            .zip(&model)
            .enumerate()
            .map(|(i, (yv, g))| yv - g - spikes.get(i + 1))
            .collect();
        res_norm = l2_norm(&residual);
        trace.push(TraceEntry {
            iter,
            residual: res_norm,
            freqs: freqs.clone(),
            omega: omega.clone(),
        });
        converged = res_norm <= stop;
    }

    Ok(GreedyResult {
        spectrum,
        spikes,
        trace,
        residual_norm: res_norm,
        converged,
    })
}
