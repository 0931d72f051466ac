#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod baselines;
pub mod certificate;
pub mod decode;
pub mod error;
pub mod experiment;
pub mod greedy;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod trig;

pub use error::{DemixError, Result};
pub use num_complex::Complex64;
