//! Orthogonal symmetric tensor decomposition by a single symmetric matrix
//! eigenproblem, and its whitened extension to factor matrices that are
//! merely of full column rank.
//!
//! For `A = sum_k λ_k x_k^m` with orthonormal `x_k`, any combination of the
//! `n x n` slices of `A` is `B = X diag(σ) X'`, so the eigenvectors of `B`
//! with nonzero eigenvalue are the factors and their count is the rank.
//! Weights are then read off as `λ_k = A x_k^m`.
//!
//! When `X` is only of full column rank, a positive semi-definite slice
//! combination `C = U diag(d) U'` gives the whitening map
//! `W = diag(d)^{-1/2} U'`, under which `A(W, ..., W)` has orthonormal
//! factors and can be handled as above.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, sym_eig, EigenSystem, DEFAULT_TOL};
use crate::tensor::{CoefficientTensor, FactorDecomposition, SymmetricTensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OstdOptions {
    /// Rotate the problem by a random orthogonal matrix first.
    pub randomize: bool,
    /// Eigenvalues of the slice combination with `|σ| <= nonzero_tol` are
    /// treated as zero.
    pub nonzero_tol: f64,
}

impl Default for OstdOptions {
    fn default() -> Self {
        OstdOptions { randomize: false, nonzero_tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhitenOptions {
    pub base: OstdOptions,
    /// Number of random slice combinations to try before giving up on
    /// finding a positive semi-definite one.
    pub max_psd_attempts: usize,
    pub psd_tol: f64,
}

impl Default for WhitenOptions {
    fn default() -> Self {
        WhitenOptions { base: OstdOptions::default(), max_psd_attempts: 100, psd_tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WhitenReport {
    pub decomposition: FactorDecomposition,
    /// Slice combinations drawn until one was positive semi-definite.
    pub psd_attempts: usize,
    /// Dimension of the whitened problem (rank of the accepted `C`).
    pub whitened_dim: usize,
    /// The accepted combination `C` (of the rotated tensor).
    pub psd_combination: DMatrix<f64>,
    /// The `whitened_dim x n` whitening matrix `W` with `W C W' = I`.
    pub whitener: DMatrix<f64>,
}

/// Slice coefficients drawn i.i.d. from `U[0, 1]` and normalized to sum to
/// one.
pub fn random_coefficients<R: Rng + ?Sized>(order: usize, dim: usize, rng: &mut R) -> Result<CoefficientTensor> {
    if order < 1 {
        return Err(Error::ShapeMismatch("coefficient order must be at least 1".into()));
    }
    let len = dim.pow(order as u32);
    let mut entries: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    let sum: f64 = entries.iter().sum();
    if sum > 0.0 {
        entries.iter_mut().for_each(|v| *v /= sum);
    } else {
        // every draw was exactly zero; fall back to the uniform mix
        entries.iter_mut().for_each(|v| *v = 1.0 / len as f64);
    }
    CoefficientTensor::new(order, dim, entries)
}

fn check_order(a: &SymmetricTensor) -> Result<()> {
    if a.order() < 3 {
        return Err(Error::ShapeMismatch(format!(
            "decomposition needs a tensor of order at least 3, got {}",
            a.order()
        )));
    }
    Ok(())
}

/// Returns `(V, A(V, ..., V))`, with `V = I` when not randomizing.
fn project<R: Rng + ?Sized>(
    a: &SymmetricTensor,
    randomize: bool,
    rng: &mut R,
) -> Result<(DMatrix<f64>, SymmetricTensor)> {
    let n = a.dim();
    if randomize {
        let v = random_orthogonal(n, rng);
        let rotated = a.multilinear_transform(&v)?;
        Ok((v, rotated))
    } else {
        Ok((DMatrix::identity(n, n), a.clone()))
    }
}

/// Nonzero eigenpairs of a slice combination, ordered by descending `|σ|`.
fn factor_eigenpairs(b: &DMatrix<f64>, tol: f64) -> Result<EigenSystem> {
    let es = sym_eig(b)?.nonzero(tol);
    let mut order: Vec<usize> = (0..es.len()).collect();
    order.sort_by(|&i, &j| es.values[j].abs().total_cmp(&es.values[i].abs()));
    Ok(EigenSystem {
        values: order.iter().map(|&k| es.values[k]).collect(),
        vectors: es.vectors.select_columns(order.iter()),
    })
}

/// Decomposes a tensor assumed to have orthonormal factors.
///
/// The number of returned factors is the predicted rank. A tensor without an
/// orthogonal decomposition still produces output; check its relative error.
pub fn ostd<R: Rng + ?Sized>(a: &SymmetricTensor, opts: &OstdOptions, rng: &mut R) -> Result<FactorDecomposition> {
    ostd_with_coefficients(a, None, opts, rng)
}

/// [`ostd`] with an explicit slice combination instead of a random one.
/// The coefficients are applied to the rotated tensor when randomizing.
pub fn ostd_with_coefficients<R: Rng + ?Sized>(
    a: &SymmetricTensor,
    coefficients: Option<&CoefficientTensor>,
    opts: &OstdOptions,
    rng: &mut R,
) -> Result<FactorDecomposition> {
    check_order(a)?;
    let n = a.dim();
    let (v, rotated) = project(a, opts.randomize, rng)?;
    let drawn;
    let beta = match coefficients {
        Some(c) => c,
        None => {
            drawn = random_coefficients(a.order() - 2, n, rng)?;
            &drawn
        }
    };
    let b = rotated.slice_combination(beta)?;
    let pairs = factor_eigenpairs(&b, opts.nonzero_tol)?;

    let factors = v.transpose() * &pairs.vectors;
    let weights = factors
        .column_iter()
        .map(|x| a.reduce_to_scalar(x.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    FactorDecomposition::new(weights, factors)
}

/// Decomposes a tensor whose factor matrix has full column rank by
/// whitening it into an orthogonal problem first.
///
/// Fails with [`Error::WhiteningFailure`] when none of the
/// `max_psd_attempts` random slice combinations is positive semi-definite.
/// If the accepted combination has rank below the true rank, factors are
/// lost silently; only the residual reveals it.
pub fn whitened_ostd<R: Rng + ?Sized>(
    a: &SymmetricTensor,
    opts: &WhitenOptions,
    rng: &mut R,
) -> Result<WhitenReport> {
    check_order(a)?;
    let order = a.order();
    let n = a.dim();
    let (v, rotated) = project(a, opts.base.randomize, rng)?;

    let mut accepted = None;
    for attempt in 1..=opts.max_psd_attempts {
        let gamma = random_coefficients(order - 2, n, rng)?;
        let c = rotated.slice_combination(&gamma)?;
        if let Ok(skinny) = sym_eig(&c)?.psd_filtered(opts.psd_tol) {
            accepted = Some((attempt, c, skinny));
            break;
        }
    }
    let Some((psd_attempts, c, skinny)) = accepted else {
        return Err(Error::WhiteningFailure { attempts: opts.max_psd_attempts });
    };

    let p = skinny.values.len();
    if p == 0 {
        return Ok(WhitenReport {
            decomposition: FactorDecomposition::empty(n),
            psd_attempts,
            whitened_dim: 0,
            psd_combination: c,
            whitener: DMatrix::zeros(0, n),
        });
    }

    let mut whitener = skinny.basis.transpose();
    let mut unwhiten = skinny.basis.clone();
    for (k, &d) in skinny.values.iter().enumerate() {
        let root = d.sqrt();
        whitener.row_mut(k).unscale_mut(root);
        unwhiten.column_mut(k).scale_mut(root);
    }
    let whitened = rotated.multilinear_transform(&whitener)?;

    let beta = random_coefficients(order - 2, p, rng)?;
    let b = whitened.slice_combination(&beta)?;
    let pairs = factor_eigenpairs(&b, opts.base.nonzero_tol)?;

    let back = v.transpose() * unwhiten;
    let mut weights = Vec::with_capacity(pairs.len());
    let mut factors = DMatrix::zeros(n, pairs.len());
    for (k, xbar) in pairs.vectors.column_iter().enumerate() {
        let lambda = whitened.reduce_to_scalar(xbar.as_slice())?;
        let x = &back * xbar;
        let norm = x.norm();
        if norm == 0.0 {
            return Err(Error::ZeroColumn { index: k });
        }
        weights.push(lambda * norm.powi(order as i32));
        factors.set_column(k, &(x / norm));
    }

    Ok(WhitenReport {
        decomposition: FactorDecomposition::new(weights, factors)?,
        psd_attempts,
        whitened_dim: p,
        psd_combination: c,
        whitener,
    })
}
