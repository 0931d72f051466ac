//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spectral_demix::admm::{admm_step, psd_project, toeplitz_adjoint, toeplitz_from_vector, AdmmState, StepParams};
use spectral_demix::linalg::CMat;

pub type NMat = DMatrix<Complex64>;

pub fn rand_c(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| rand_c(rng)).collect()
}

pub fn rand_hermitian(rng: &mut ChaCha8Rng, n: usize) -> NMat {
    let a = NMat::from_fn(n, n, |_, _| rand_c(rng));
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn to_faer(m: &NMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn to_na(m: &CMat) -> NMat {
    NMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn max_diff(a: &NMat, b: &NMat) -> f64 {
    (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn psd_oracle(m: &NMat) -> NMat {
    let eig = m.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0), 0.0));
    &eig.eigenvectors * NMat::from_diagonal(&clipped) * eig.eigenvectors.adjoint()
}

pub fn soft(x: Complex64, tau: f64) -> Complex64 {
    let a = x.norm();
    if a > tau {
        x * ((a - tau) / a)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

pub struct Oracle {
    pub t: f64,
    pub u: Vec<Complex64>,
    pub g: Vec<Complex64>,
    pub z: Vec<Complex64>,
    pub psi: NMat,
    pub ups: NMat,
}

pub fn block(u: &[Complex64], g: &[Complex64], t: f64) -> NMat {
    let n = u.len();
    NMat::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) if j >= i => u[j - i],
        (true, true) => u[i - j].conj(),
        (true, false) => g[i],
        (false, true) => g[j].conj(),
        (false, false) => Complex64::new(t, 0.0),
    })
}

/// One sweep written directly from the closed-form updates, with the
/// `(g, z)` block minimized by alternating the g-formula and the prox until
/// they agree.
pub fn oracle_step(s: &mut Oracle, y: &[Complex64], rho: f64, xi: f64, lam: f64) {
    let n = y.len();
    s.t = s.psi[(n, n)].re + (s.ups[(n, n)].re - xi / 2.0) / rho;
    let c = s.psi.view((0, 0), (n, n)) + s.ups.view((0, 0), (n, n)) / Complex64::new(rho, 0.0);
    s.u = (0..n)
        .map(|j| {
            let tr: Complex64 = (0..n - j).map(|i| c[(i, i + j)]).sum();
            tr / (n - j) as f64
        })
        .collect();
    s.u[0] -= Complex64::new(xi / (2.0 * rho), 0.0);
    s.u[0].im = 0.0;

    let psi_col: Vec<Complex64> = (0..n).map(|i| s.psi[(i, n)]).collect();
    let ups_col: Vec<Complex64> = (0..n).map(|i| s.ups[(i, n)]).collect();
    for _ in 0..400 {
        s.g = (0..n)
            .map(|i| (y[i] - s.z[i] + psi_col[i] * (2.0 * rho) + ups_col[i] * 2.0) / (2.0 * rho + 1.0))
            .collect();
        s.z = (0..n).map(|i| soft(y[i] - s.g[i], lam)).collect();
    }

    let x = block(&s.u, &s.g, s.t);
    let target = &x - &s.ups / Complex64::new(rho, 0.0);
    let target = (&target + target.adjoint()) * Complex64::new(0.5, 0.0);
    s.psi = psd_oracle(&target);
    s.ups = &s.ups + (&s.psi - &x) * Complex64::new(rho, 0.0);
}


/// Largest `|M T*(T(u)) - u|` over `trials` random `u` of lengths 1 to 17,
/// with `M = diag(1/(n - j))`.
pub fn toeplitz_round_trip_error(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let n = 1 + trial % 17;
        let mut u = rand_vec(&mut rng, n);
        u[0].im = 0.0;
        let back = toeplitz_adjoint(&toeplitz_from_vector(&u).unwrap()).unwrap();
        for (j, (b, orig)) in back.iter().zip(&u).enumerate() {
            worst = worst.max((b / (n - j) as f64 - orig).norm());
        }
    }
    worst
}

/// `(distance to the eigendecomposition oracle, idempotence defect)` of
/// the PSD projection, maximized over random Hermitian inputs.
pub fn psd_projection_errors(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut oracle, mut idem) = (0.0f64, 0.0f64);
    for n in [1, 2, 5, 9, 16, 33] {
        let h = rand_hermitian(&mut rng, n);
        let p = psd_project(&to_faer(&h)).unwrap();
        oracle = oracle.max(max_diff(&to_na(&p), &psd_oracle(&h)));
        let pp = psd_project(&p).unwrap();
        idem = idem.max(max_diff(&to_na(&pp), &to_na(&p)));
    }
    (oracle, idem)
}

/// Largest entrywise disagreement between `admm_step` and [`oracle_step`]
/// over `sweeps` iterations from a random state.
pub fn sweep_mismatch(n: usize, sweeps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = rand_vec(&mut rng, n);
    let a = NMat::from_fn(n + 1, n + 1, |_, _| rand_c(&mut rng));
    let psi0 = &a * a.adjoint();
    let ups0 = rand_hermitian(&mut rng, n + 1);
    let z0 = rand_vec(&mut rng, n);
    let (rho, xi, lam) = (1.0, 0.2, 0.3);

    let mut mine = AdmmState::zeros(n);
    mine.psi = to_faer(&psi0);
    mine.upsilon = to_faer(&ups0);
    mine.z = z0.clone();
    let zero = Complex64::new(0.0, 0.0);
    let mut oracle = Oracle {
        t: 0.0,
        u: vec![zero; n],
        g: vec![zero; n],
        z: z0,
        psi: psi0,
        ups: ups0,
    };

    let vec_diff = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for _ in 0..sweeps {
        let p = StepParams {
            rho,
            xi,
            lambda_prime: lam,
        };
        admm_step(&mut mine, &y, p).unwrap();
        oracle_step(&mut oracle, &y, rho, xi, lam);
        worst = worst
            .max((mine.t - oracle.t).abs())
            .max(vec_diff(&mine.u, &oracle.u))
            .max(vec_diff(&mine.g, &oracle.g))
            .max(vec_diff(&mine.z, &oracle.z))
            .max(max_diff(&to_na(&mine.psi), &oracle.psi))
            .max(max_diff(&to_na(&mine.upsilon), &oracle.ups));
    }
    worst
}
