//! ADMM building blocks checked against independent implementations.

mod common;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use spectral_demix::admm::{psd_project, toeplitz_adjoint, toeplitz_from_vector};
use spectral_demix::linalg::CMat;

#[test]
fn toeplitz_adjoint_inverts_toeplitz_after_scaling() {
    assert!(toeplitz_round_trip_error(100, 1) < 1e-12);
}

#[test]
fn toeplitz_adjoint_is_the_adjoint() {
    // Frobenius pairing of Hermitian matrices against the Toeplitz
    // parametrization counts each off-diagonal coefficient twice.
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 6;
    let mut u = rand_vec(&mut rng, n);
    u[0].im = 0.0;
    let a = rand_hermitian(&mut rng, n);
    let t = to_na(&toeplitz_from_vector(&u).unwrap());
    let lhs: f64 = t.iter().zip(a.iter()).map(|(x, y)| (x.conj() * y).re).sum();
    let ta = toeplitz_adjoint(&to_faer(&a)).unwrap();
    let rhs = (u[0].conj() * ta[0]).re + 2.0 * (1..n).map(|j| (u[j].conj() * ta[j]).re).sum::<f64>();
    assert!((lhs - rhs).abs() < 1e-12);
}

#[test]
fn psd_projection_matches_oracle_and_is_idempotent() {
    let (oracle, idem) = psd_projection_errors(3);
    assert!(oracle < 1e-10, "oracle distance {oracle}");
    assert!(idem < 1e-10, "idempotence defect {idem}");
}

#[test]
fn psd_projection_clips_diagonal_example() {
    let mut h = CMat::zeros(2, 2);
    h[(0, 0)] = Complex64::new(1.0, 0.0);
    h[(1, 1)] = Complex64::new(-2.0, 0.0);
    let p = psd_project(&h).unwrap();
    assert!((p[(0, 0)].re - 1.0).abs() < 1e-15 && p[(1, 1)].norm() < 1e-15);
}

#[test]
fn sweeps_match_independent_implementation() {
    for seed in 4..8 {
        let err = sweep_mismatch(8, 3, seed);
        assert!(err < 1e-12, "seed {seed}: {err}");
    }
}

#[test]
fn sweeps_match_at_other_sizes() {
    for n in [1, 2, 5, 13] {
        let err = sweep_mismatch(n, 2, 100 + n as u64);
        assert!(err < 1e-11, "n {n}: {err}");
    }
}
