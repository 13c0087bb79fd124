//! Matched subspace detection from incomplete observations.
//!
//! Given an orthonormal basis `U` of an `r`-dimensional subspace `S ⊂ ℝⁿ` and
//! the entries of a vector `v` at an index set `Ω`, the crate estimates the
//! energy of `v` outside `S` from `v_Ω` alone, evaluates the high-probability
//! bounds relating that estimate to `‖v − P_S v‖²`, and runs noiseless and
//! noisy hypothesis tests on it.
//!
//! ```
//! use msdetect::{estimator, sampling::{self, SeedSpec}, simlab};
//!
//! let basis = simlab::gen_gaussian_basis(500, 5, SeedSpec::new(1, 0)).unwrap();
//! let v = simlab::gen_perp_vector(&basis, SeedSpec::new(1, 1)).unwrap();
//! let omega = sampling::sample_without_replacement(500, 100, SeedSpec::new(1, 2)).unwrap();
//! let rep = estimator::residual_energy(&basis, &v, &omega).unwrap();
//! assert!(rep.t > 0.0 && rep.rescaled < 1.5);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod coherence;
pub mod detect;
pub mod error;
pub mod estimator;
pub mod io;
pub mod sampling;
pub mod simlab;
pub mod vecspace;

pub use error::{Error, Result};
pub use vecspace::{DenseVector, RestrictedBasis, SampleIndexSet, SamplingMode, SubspaceBasis};
