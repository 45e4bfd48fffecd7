//! Synthetic test problems with known factors, optionally contaminated by
//! Gaussian noise.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::tensor::{FactorDecomposition, SymmetricTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// First `p` columns of a Haar-random orthogonal matrix, unit weights.
    Orthogonal,
    /// Standard Gaussian columns scaled to unit norm, unit weights.
    Nonorthogonal,
    /// `X = I_n`.
    Identity,
    /// The fixed 4-way, 3-dimensional rank-2 example with weights 676 and 196.
    Nie,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Orthogonal => "orthogonal",
            Family::Nonorthogonal => "nonorthogonal",
            Family::Identity => "identity",
            Family::Nie => "nie",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(Family::Orthogonal),
            "nonorthogonal" => Ok(Family::Nonorthogonal),
            "identity" => Ok(Family::Identity),
            "nie" => Ok(Family::Nie),
            other => Err(Error::InvalidSpec(format!("unknown family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub order: usize,
    pub dim: usize,
    pub rank: usize,
    /// Noise level: the raw noise has norm `eta * ‖A*‖`.
    pub eta: f64,
    pub family: Family,
    pub seed: u64,
    /// Weights for the identity family; all ones when absent.
    pub weights: Option<Vec<f64>>,
}

impl InstanceSpec {
    pub fn new(family: Family, order: usize, dim: usize, rank: usize, eta: f64, seed: u64) -> Self {
        InstanceSpec { order, dim, rank, eta, family, seed, weights: None }
    }

    pub fn nie(eta: f64, seed: u64) -> Self {
        InstanceSpec::new(Family::Nie, 4, 3, 2, eta, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.order < 3 {
            return bad(format!("order must be at least 3, got {}", self.order));
        }
        if self.dim < 1 || self.rank < 1 {
            return bad("dimension and rank must be positive".into());
        }
        if self.rank > self.dim {
            return bad(format!("rank {} exceeds dimension {}", self.rank, self.dim));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("noise level must be finite and non-negative, got {}", self.eta));
        }
        match self.family {
            Family::Nie if (self.order, self.dim, self.rank) != (4, 3, 2) => {
                return bad("the nie family is fixed at order 4, dimension 3, rank 2".into());
            }
            Family::Identity if self.rank != self.dim => {
                return bad("the identity family needs rank = dimension".into());
            }
            _ => {}
        }
        match &self.weights {
            Some(_) if self.family != Family::Identity => {
                bad("explicit weights are only supported for the identity family".into())
            }
            Some(w) if w.len() != self.rank => bad(format!("{} weights for rank {}", w.len(), self.rank)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub truth: FactorDecomposition,
    pub clean: SymmetricTensor,
    pub observed: SymmetricTensor,
}

fn nie_factors() -> FactorDecomposition {
    let s14 = 14f64.sqrt();
    let s26 = 26f64.sqrt();
    #[rustfmt::skip]
    let x = DMatrix::from_row_slice(3, 2, &[
        0.0,        3.0 / s14,
        1.0 / s26,  2.0 / s14,
        -5.0 / s26, -1.0 / s14,
    ]);
    FactorDecomposition::new(vec![676.0, 196.0], x).expect("two weights for two columns")
}

fn gaussian_unit_columns<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let mut x = DMatrix::<f64>::from_fn(n, p, |_, _| rng.sample(StandardNormal));
        for mut col in x.column_iter_mut() {
            let norm = col.norm();
            col.unscale_mut(norm);
        }
        let smallest = x.clone().svd(false, false).singular_values.min();
        if smallest > 1e-8 {
            return x;
        }
    }
}

/// Raw (unsymmetrized) values of `A* + eta (‖A*‖ / ‖N‖) N` with `N` i.i.d.
/// standard normal.
pub fn add_noise<R: Rng + ?Sized>(clean: &SymmetricTensor, eta: f64, rng: &mut R) -> Vec<f64> {
    let noise: Vec<f64> = (0..clean.entries().len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if noise_norm > 0.0 { eta * clean.frobenius_norm() / noise_norm } else { 0.0 };
    clean.entries().iter().zip(&noise).map(|(a, n)| a + scale * n).collect()
}

/// Builds the true factors, the clean tensor and the observed tensor for a
/// spec. The same spec (including seed) always gives the same instance.
///
/// With `eta > 0` the noisy tensor is symmetrized (averaged over index
/// permutations), which can only shrink the noise below `eta * ‖A*‖`.
pub fn gen_instance(spec: &InstanceSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, p) = (spec.dim, spec.rank);
    let truth = match spec.family {
        Family::Orthogonal => {
            let q = random_orthogonal(n, &mut rng);
            FactorDecomposition::new(vec![1.0; p], q.columns(0, p).into_owned())?
        }
        Family::Nonorthogonal => FactorDecomposition::new(vec![1.0; p], gaussian_unit_columns(n, p, &mut rng))?,
        Family::Identity => {
            let weights = spec.weights.clone().unwrap_or_else(|| vec![1.0; n]);
            FactorDecomposition::new(weights, DMatrix::identity(n, n))?
        }
        Family::Nie => nie_factors(),
    };
    let clean = SymmetricTensor::from_factors(&truth, spec.order)?;
    let observed = if spec.eta > 0.0 {
        let raw = add_noise(&clean, spec.eta, &mut rng);
        SymmetricTensor::symmetrize(spec.order, n, &raw)?
    } else {
        clean.clone()
    };
    Ok(GroundTruth { truth, clean, observed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn nie_entry() {
        let g = gen_instance(&InstanceSpec::nie(0.0, 1)).unwrap();
        assert!((g.clean.get(&[0, 0, 0, 0]) - 81.0).abs() < 1e-12);
        assert_eq!(g.truth.weights, vec![676.0, 196.0]);
    }

    #[test]
    fn noise_free_observed_is_clean() {
        for family in [Family::Orthogonal, Family::Nonorthogonal] {
            let g = gen_instance(&InstanceSpec::new(family, 3, 4, 2, 0.0, 5)).unwrap();
            assert_eq!(g.observed, g.clean);
        }
    }

    #[test]
    fn noise_level_before_and_after_symmetrization() {
        let g = gen_instance(&InstanceSpec::new(Family::Orthogonal, 3, 4, 2, 0.0, 8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let raw = add_noise(&g.clean, 0.01, &mut rng);
        let norm = g.clean.frobenius_norm();
        assert!((dist(&raw, g.clean.entries()) / norm - 0.01).abs() < 1e-15);
        let sym = SymmetricTensor::symmetrize(3, 4, &raw).unwrap();
        assert!(dist(sym.entries(), g.clean.entries()) / norm <= 0.01);

        let noisy = gen_instance(&InstanceSpec::new(Family::Orthogonal, 3, 4, 2, 0.01, 8)).unwrap();
        let level = dist(noisy.observed.entries(), noisy.clean.entries()) / norm;
        assert!(level > 0.0 && level <= 0.01);
    }

    #[test]
    fn families_have_expected_structure() {
        let g = gen_instance(&InstanceSpec::new(Family::Orthogonal, 4, 6, 4, 0.0, 3)).unwrap();
        let gram = g.truth.factors.transpose() * &g.truth.factors;
        assert!((gram - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert_eq!(g.truth.weights, vec![1.0; 4]);

        let g = gen_instance(&InstanceSpec::new(Family::Nonorthogonal, 3, 5, 3, 0.0, 3)).unwrap();
        for col in g.truth.factors.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }

        let mut spec = InstanceSpec::new(Family::Identity, 3, 3, 3, 0.0, 3);
        spec.weights = Some(vec![2.0, -1.0, 0.5]);
        let g = gen_instance(&spec).unwrap();
        assert_eq!(g.clean.get(&[1, 1, 1]), -1.0);
        assert_eq!(g.clean.get(&[0, 1, 1]), 0.0);
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = InstanceSpec::new(Family::Nonorthogonal, 4, 5, 3, 0.01, 42);
        assert_eq!(gen_instance(&spec).unwrap(), gen_instance(&spec).unwrap());
        let other = InstanceSpec { seed: 43, ..spec.clone() };
        assert_ne!(gen_instance(&spec).unwrap(), gen_instance(&other).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let cases = [
            InstanceSpec::new(Family::Orthogonal, 2, 3, 2, 0.0, 0),
            InstanceSpec::new(Family::Orthogonal, 3, 3, 4, 0.0, 0),
            InstanceSpec::new(Family::Orthogonal, 3, 3, 2, -0.1, 0),
            InstanceSpec::new(Family::Nie, 3, 3, 2, 0.0, 0),
            InstanceSpec::new(Family::Identity, 3, 3, 2, 0.0, 0),
        ];
        for spec in cases {
            assert!(matches!(gen_instance(&spec), Err(Error::InvalidSpec(_))), "{spec:?}");
        }
        let mut spec = InstanceSpec::new(Family::Identity, 3, 3, 3, 0.0, 0);
        spec.weights = Some(vec![1.0]);
        assert!(gen_instance(&spec).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in [Family::Orthogonal, Family::Nonorthogonal, Family::Identity, Family::Nie] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert!("tucker".parse::<Family>().is_err());
    }
}
