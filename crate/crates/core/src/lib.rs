//! Symmetric tensor decomposition through symmetric matrix eigenproblems.
//!
//! A symmetric tensor with orthonormal factors, `A = sum_k λ_k x_k^m`, is
//! decomposed exactly by one `n x n` eigendecomposition of a random
//! combination of its slices ([`decompose::ostd`]). Tensors whose factor
//! matrix only has full column rank can first be whitened into that form
//! ([`decompose::whitened_ostd`]).
//!
//! ```
//! use ostd::{ostd, relative_error, FactorDecomposition, OstdOptions, SymmetricTensor};
//! use nalgebra::DMatrix;
//! use rand::SeedableRng;
//!
//! let truth = FactorDecomposition::new(vec![5.0, 2.0], DMatrix::identity(3, 2)).unwrap();
//! let a = SymmetricTensor::from_factors(&truth, 3).unwrap();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let d = ostd(&a, &OstdOptions::default(), &mut rng).unwrap();
//! assert_eq!(d.rank(), 2);
//! assert!(relative_error(&a, &d).unwrap() < 1e-12);
//! ```

pub mod decompose;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod synth;
pub mod tensor;

pub use decompose::{ostd, ostd_with_coefficients, random_coefficients, whitened_ostd, OstdOptions, WhitenOptions, WhitenReport};
pub use error::{Error, Result};
pub use linalg::{random_orthogonal, sym_eig, EigenSystem, NotPsd, SkinnyEigen, DEFAULT_TOL};
pub use metrics::{normalize_columns, relative_error, solution_score, ScoreOptions};
pub use synth::{gen_instance, Family, GroundTruth, InstanceSpec};
pub use tensor::{CoefficientTensor, FactorDecomposition, SymmetricTensor};
