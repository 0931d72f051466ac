//! ADMM for the SDP form of atomic-norm demixing.
//!
//! The solver targets
//!
//! ```text
//! minimize  (n u_1 + t) / (2 sqrt(n)) + λ ||z||_1 + (γ/2) ||y - g - z||^2
//! s.t.      [[T(u), g], [g^*, t]] ⪰ 0
//! ```
//!
//! in the rescaled form where the objective is divided by `γ`
//! (`ξ = 1/(γ sqrt(n))`, `λ' = λ/γ`). The consensus variable `Ψ` carries the
//! PSD constraint and `Υ` is its multiplier. One sweep updates
//! `t, u, (g, z), Ψ, Υ` in that order, each update using the freshest values;
//! `g` and `z` form one block minimized exactly.
//!
//! The equality-constrained problem `g + z = y` is reached by increasing `γ`
//! geometrically with warm starts. The penalty handed to the iteration is
//! `rho / (γ s)` with `s` the RMS of `y`, which keeps the iteration in the
//! original (unscaled) variables independent of both `γ` and the data scale.

use std::f64::consts::TAU;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{DemixError, Result};
use crate::linalg::{adjoint_on_grid, frobenius, hermitian_eig, recompose_positive, symmetrize, CMat};
use crate::model::{l2_norm, Samples};

pub use crate::linalg::psd_project;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hermitian Toeplitz matrix with first row `u`.
pub fn toeplitz_from_vector(u: &[Complex64]) -> Result<CMat> {
    let n = u.len();
    if n == 0 {
        return Err(DemixError::InvalidParameter("empty Toeplitz generator".into()));
    }
    if u[0].im != 0.0 {
        return Err(DemixError::InvalidParameter(
            "Toeplitz generator must have a real first entry".into(),
        ));
    }
    Ok(toeplitz_unchecked(u))
}

fn toeplitz_unchecked(u: &[Complex64]) -> CMat {
    let n = u.len();
    Mat::from_fn(n, n, |i, j| {
        if j >= i {
            u[j - i]
        } else {
            u[i - j].conj()
        }
    })
}

/// Sums of the superdiagonals: `T*(M)_j = sum_i M_{i, i+j-1}`.
pub fn toeplitz_adjoint(m: &CMat) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(DemixError::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    Ok(toeplitz_adjoint_block(m, n))
}

/// `T*` applied to the leading `n × n` block of `m`.
fn toeplitz_adjoint_block(m: &CMat, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|d| (0..n - d).map(|i| m[(i, i + d)]).sum())
        .collect()
}

/// Entrywise complex soft thresholding.
pub fn soft_threshold(v: &[Complex64], tau: f64) -> Vec<Complex64> {
    v.iter()
        .map(|&x| {
            let a = x.norm();
            if a <= tau {
                ZERO
            } else {
                x * ((a - tau) / a)
            }
        })
        .collect()
}

/// Penalty weight `γ`: finite for denoising, `Equality` for exact demixing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    Finite(f64),
    Equality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    /// Penalty of the iteration in unscaled variables, relative to the RMS
    /// of the data.
    pub rho: f64,
    pub lambda: f64,
    pub gamma: Gamma,
    pub max_iters: usize,
    pub primal_tol: f64,
    pub dual_tol: f64,
    /// First `γ` of the continuation, relative to `sqrt(n) / ||y||_2`.
    pub gamma0: f64,
    pub gamma_factor: f64,
    /// Equality mode stops once `||y - g - z||_2 < equality_tol ||y||_2`.
    pub equality_tol: f64,
    /// Tolerance of the intermediate continuation stages.
    pub stage_tol: f64,
}

impl AdmmConfig {
    pub fn equality(lambda: f64) -> Self {
        Self {
            rho: 0.2,
            lambda,
            gamma: Gamma::Equality,
            max_iters: 100_000,
            primal_tol: 1e-7,
            dual_tol: 1e-7,
            gamma0: 100.0,
            gamma_factor: 10.0,
            equality_tol: 1e-9,
            stage_tol: 1e-4,
        }
    }

    pub fn denoise(lambda: f64, gamma: f64) -> Self {
        Self {
            gamma: Gamma::Finite(gamma),
            ..Self::equality(lambda)
        }
    }

    /// `λ = 1/sqrt(n)`.
    pub fn default_lambda(n: usize) -> f64 {
        1.0 / (n as f64).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.rho) || !pos(self.lambda) || !pos(self.primal_tol) || !pos(self.dual_tol) {
            return Err(DemixError::InvalidParameter(
                "rho, lambda and tolerances must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(DemixError::InvalidParameter("max_iters must be positive".into()));
        }
        match self.gamma {
            Gamma::Finite(g) if !pos(g) => Err(DemixError::InvalidParameter(
                "gamma must be positive".into(),
            )),
            Gamma::Equality
                if !pos(self.gamma0)
                    || !(self.gamma_factor > 1.0)
                    || !pos(self.equality_tol)
                    || !pos(self.stage_tol) =>
            {
                Err(DemixError::InvalidParameter(
                    "invalid continuation parameters".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Iterate of the method. `psi` and `upsilon` are `(n+1) × (n+1)` Hermitian.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub t: f64,
    pub u: Vec<Complex64>,
    pub g: Vec<Complex64>,
    pub z: Vec<Complex64>,
    pub psi: CMat,
    pub upsilon: CMat,
}

impl AdmmState {
    pub fn zeros(n: usize) -> Self {
        Self {
            t: 0.0,
            u: vec![ZERO; n],
            g: vec![ZERO; n],
            z: vec![ZERO; n],
            psi: CMat::zeros(n + 1, n + 1),
            upsilon: CMat::zeros(n + 1, n + 1),
        }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// `[[T(u), g], [g^*, t]]`.
    pub fn consensus_target(&self) -> CMat {
        let n = self.n();
        let tu = toeplitz_unchecked(&self.u);
        Mat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
            (true, true) => tu[(i, j)],
            (true, false) => self.g[i],
            (false, true) => self.g[j].conj(),
            (false, false) => Complex64::new(self.t, 0.0),
        })
    }
}

/// Parameters of one sweep in the rescaled problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub rho: f64,
    pub xi: f64,
    pub lambda_prime: f64,
}

/// Residuals of one sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResiduals {
    /// `||Ψ - X||_F`.
    pub primal: f64,
    /// `ρ ||X_new - X_old||_F`.
    pub dual: f64,
    pub psi_norm: f64,
    pub x_norm: f64,
    pub upsilon_norm: f64,
}

/// One ADMM sweep `t, u, (g, z), Ψ, Υ`.
pub fn admm_step(state: &mut AdmmState, y: &[Complex64], p: StepParams) -> Result<StepResiduals> {
    let n = state.n();
    let StepParams {
        rho,
        xi,
        lambda_prime,
    } = p;
    let x_old = state.consensus_target();

    state.t = state.psi[(n, n)].re + (state.upsilon[(n, n)].re - xi / 2.0) / rho;

    let combo = Mat::from_fn(n, n, |i, j| state.psi[(i, j)] + state.upsilon[(i, j)] / rho);
    let diag_sums = toeplitz_adjoint_block(&combo, n);
    for (j, (uj, s)) in state.u.iter_mut().zip(diag_sums).enumerate() {
        *uj = s / (n - j) as f64;
    }
    state.u[0] = Complex64::new(state.u[0].re - xi / (2.0 * rho), 0.0);

    // g and z are minimized jointly. The pair below is the common fixed point
    // of the g-update and of z = prox_{λ'}(y - g).
    let denom = 2.0 * rho + 1.0;
    let v: Vec<Complex64> = (0..n)
        .map(|i| state.psi[(i, n)] + state.upsilon[(i, n)] / rho)
        .collect();
    let shifted_y: Vec<Complex64> = y.iter().zip(&v).map(|(a, b)| a - b).collect();
    state.z = soft_threshold(&shifted_y, lambda_prime * denom / (2.0 * rho));
    for i in 0..n {
        state.g[i] = (y[i] - state.z[i] + v[i] * (2.0 * rho)) / denom;
    }

    if !state.t.is_finite() || state.u.iter().chain(&state.g).any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(DemixError::NonFinite("ADMM iterate"));
    }

    let x = state.consensus_target();
    let shifted = Mat::from_fn(n + 1, n + 1, |i, j| x[(i, j)] - state.upsilon[(i, j)] / rho);
    let (vals, vecs) = hermitian_eig(&symmetrize(&shifted))?;
    state.psi = recompose_positive(&vals, &vecs);

    let diff = &state.psi - &x;
    let ups = &state.upsilon + &diff * faer::Scale(Complex64::new(rho, 0.0));
    state.upsilon = symmetrize(&ups);

    Ok(StepResiduals {
        primal: frobenius(&diff),
        dual: rho * frobenius(&(&x - &x_old)),
        psi_norm: frobenius(&state.psi),
        x_norm: frobenius(&x),
        upsilon_norm: frobenius(&state.upsilon),
    })
}

/// Outcome of [`admm_solve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub g_hat: Vec<Complex64>,
    pub z_hat: Vec<Complex64>,
    /// Dual vector `γ (y - ĝ - ẑ)`.
    pub eta: Vec<Complex64>,
    pub iterations: usize,
    pub primal_residual_trace: Vec<f64>,
    pub dual_residual_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
    /// Grid maximum of `|F^* η|` and `||η||_∞`.
    pub dual_feasibility: (f64, f64),
    pub converged: bool,
    pub gamma_final: f64,
    /// `||y - ĝ - ẑ||_2`.
    pub residual_norm: f64,
    /// Value of `(n u_1 + t) / (2 sqrt(n)) + λ ||ẑ||_1`.
    pub objective: f64,
    /// Relative gap `|P - Re<η, y> + σ ||η||_2| / P` with `σ = ||y - ĝ - ẑ||_2`.
    pub duality_gap: f64,
}

impl SolveReport {
    pub fn ensure_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(DemixError::NotConverged {
                iterations: self.iterations,
                primal: self.primal_residual_trace.last().copied().unwrap_or(f64::NAN),
                dual: self.dual_residual_trace.last().copied().unwrap_or(f64::NAN),
            })
        }
    }
}

/// Objective value of the atomic-norm problem (without the quadratic term).
fn sparse_atomic_objective(state: &AdmmState, lambda: f64) -> f64 {
    let n = state.n() as f64;
    (n * state.u[0].re + state.t) / (2.0 * n.sqrt()) + lambda * state.z.iter().map(|v| v.norm()).sum::<f64>()
}

struct StageOutcome {
    converged: bool,
}

#[allow(clippy::too_many_arguments)]
fn run_stage(
    state: &mut AdmmState,
    y: &[Complex64],
    lambda: f64,
    gamma: f64,
    rho_unscaled: f64,
    tol: (f64, f64),
    budget: usize,
    report: &mut SolveReport,
) -> Result<StageOutcome> {
    let n = y.len() as f64;
    let params = StepParams {
        rho: rho_unscaled / gamma,
        xi: 1.0 / (gamma * n.sqrt()),
        lambda_prime: lambda / gamma,
    };
    // Residuals are reported for the unscaled problem, where Υ is γ times
    // larger.
    let y_norm = l2_norm(y);
    for _ in 0..budget {
        let res = admm_step(state, y, params)?;
        report.iterations += 1;
        let scale_p = res.psi_norm.max(res.x_norm).max(y_norm);
        let scale_d = (res.upsilon_norm * gamma).max(f64::MIN_POSITIVE);
        let rp = res.primal / scale_p;
        let rd = res.dual * gamma / scale_d;
        report.primal_residual_trace.push(rp);
        report.dual_residual_trace.push(rd);
        let quad = residual_norm(y, state).powi(2);
        report
            .objective_trace
            .push(sparse_atomic_objective(state, lambda) + 0.5 * gamma * quad);
        if rp <= tol.0 && rd <= tol.1 {
            return Ok(StageOutcome { converged: true });
        }
    }
    Ok(StageOutcome { converged: false })
}

/// Grid maximum of `|F^* η|`, `||η||_∞` and whether both are within bounds.
pub fn dual_feasibility_check(eta: &[Complex64], lambda: f64, grid_size: usize) -> Result<(f64, f64, bool)> {
    let n = eta.len();
    if grid_size < 16 * n {
        return Err(DemixError::InvalidParameter(format!(
            "dual feasibility grid {grid_size} smaller than 16n"
        )));
    }
    let poly_max = adjoint_on_grid(eta, grid_size)
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let eta_max = eta.iter().map(|v| v.norm()).fold(0.0, f64::max);
    Ok((poly_max, eta_max, poly_max <= 1.0 && eta_max <= lambda))
}

/// Default grid for the dual feasibility check.
pub fn default_dual_grid(n: usize) -> usize {
    (64 * n).next_power_of_two()
}

/// Solve the demixing (equality) or denoising (finite `γ`) problem.
pub fn admm_solve(y: &Samples, cfg: &AdmmConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let yv = y.as_slice();
    let n = yv.len();
    let y_norm = l2_norm(yv);
    let mut report = SolveReport {
        g_hat: vec![ZERO; n],
        z_hat: vec![ZERO; n],
        eta: vec![ZERO; n],
        iterations: 0,
        primal_residual_trace: Vec::new(),
        dual_residual_trace: Vec::new(),
        objective_trace: Vec::new(),
        dual_feasibility: (0.0, 0.0),
        converged: true,
        gamma_final: match cfg.gamma {
            Gamma::Finite(g) => g,
            Gamma::Equality => f64::INFINITY,
        },
        residual_norm: 0.0,
        objective: 0.0,
        duality_gap: 0.0,
    };
    if y_norm == 0.0 {
        return Ok(report);
    }
    if !y_norm.is_finite() {
        return Err(DemixError::NonFinite("input samples"));
    }
    let rms = y_norm / (n as f64).sqrt();
    let rho_unscaled = cfg.rho / rms;
    let mut state = AdmmState::zeros(n);
    let final_tol = (cfg.primal_tol, cfg.dual_tol);

    let gamma = match cfg.gamma {
        Gamma::Finite(gamma) => {
            let out = run_stage(
                &mut state,
                yv,
                cfg.lambda,
                gamma,
                rho_unscaled,
                final_tol,
                cfg.max_iters,
                &mut report,
            )?;
            report.converged = out.converged;
            gamma
        }
        Gamma::Equality => {
            let mut gamma = cfg.gamma0 * (n as f64).sqrt() / y_norm;
            let target = cfg.equality_tol * y_norm;
            loop {
                let remaining = cfg.max_iters.saturating_sub(report.iterations);
                let stage_tol = (cfg.stage_tol.max(cfg.primal_tol), cfg.stage_tol.max(cfg.dual_tol));
                let out = run_stage(&mut state, yv, cfg.lambda, gamma, rho_unscaled, stage_tol, remaining, &mut report)?;
                if !out.converged {
                    report.converged = false;
                    break;
                }
                if residual_norm(yv, &state) < target {
                    // Last stage: tighten to the final tolerances at this γ.
                    let remaining = cfg.max_iters.saturating_sub(report.iterations);
                    let out = run_stage(&mut state, yv, cfg.lambda, gamma, rho_unscaled, final_tol, remaining, &mut report)?;
                    report.converged = out.converged && residual_norm(yv, &state) < target;
                    break;
                }
                let next = gamma * cfg.gamma_factor;
                rescale_multiplier(&mut state, gamma / next);
                gamma = next;
            }
            gamma
        }
    };

    report.gamma_final = gamma;
    report.residual_norm = residual_norm(yv, &state);
    report.eta = yv
        .iter()
        .zip(&state.g)
        .zip(&state.z)
        .map(|((a, b), c)| (a - b - c) * gamma)
        .collect();
    let (poly_max, eta_max, _) = dual_feasibility_check(&report.eta, cfg.lambda, default_dual_grid(n))?;
    report.dual_feasibility = (poly_max, eta_max);
    report.objective = sparse_atomic_objective(&state, cfg.lambda);
    let eta_y: f64 = report
        .eta
        .iter()
        .zip(yv)
        .map(|(e, v)| (e.conj() * v).re)
        .sum();
    let gap = report.objective - eta_y + report.residual_norm * l2_norm(&report.eta);
    report.duality_gap = if report.objective > 0.0 {
        gap.abs() / report.objective
    } else {
        gap.abs()
    };
    report.g_hat = state.g;
    report.z_hat = state.z;
    Ok(report)
}

/// Multipliers of the rescaled problem scale like `1/γ`.
fn rescale_multiplier(state: &mut AdmmState, factor: f64) {
    if factor != 1.0 {
        state.upsilon = &state.upsilon * faer::Scale(Complex64::new(factor, 0.0));
    }
}

fn residual_norm(y: &[Complex64], state: &AdmmState) -> f64 {
    y.iter()
        .zip(&state.g)
        .zip(&state.z)
        .map(|((a, b), c)| (a - b - c).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `(F^* η)(f)` at a single frequency.
pub fn dual_poly_eval(eta: &[Complex64], f: f64) -> Complex64 {
    eta.iter()
        .enumerate()
        .map(|(i, &e)| e * Complex64::from_polar(1.0, -TAU * f * (i + 1) as f64))
        .sum()
}
