//! Relative error and the permutation-maximized solution score.

use log::warn;

use crate::error::{Error, Result};
use crate::tensor::{FactorDecomposition, SymmetricTensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    /// Tensor order. For odd orders `(λ, x)` and `(-λ, -x)` give the same
    /// term and both are considered.
    pub order: usize,
    /// Largest true rank for which the assignment is found by exhaustive
    /// search; above it a greedy matching is used.
    pub max_exhaustive_p: usize,
}

impl ScoreOptions {
    pub fn new(order: usize) -> Self {
        ScoreOptions { order, max_exhaustive_p: 8 }
    }
}

/// Scales every factor column to unit norm and moves the scale into the
/// weight (`λ_k ← λ_k ‖x_k‖^m`), leaving the represented tensor unchanged.
pub fn normalize_columns(d: &FactorDecomposition, order: usize) -> Result<FactorDecomposition> {
    let mut out = d.clone();
    for k in 0..d.rank() {
        let norm = d.factors.column(k).norm();
        if norm == 0.0 {
            return Err(Error::ZeroColumn { index: k });
        }
        out.weights[k] *= norm.powi(order as i32);
        out.factors.column_mut(k).unscale_mut(norm);
    }
    Ok(out)
}

/// `‖A - sum_k λ_k x_k^m‖ / ‖A‖`.
pub fn relative_error(a: &SymmetricTensor, d: &FactorDecomposition) -> Result<f64> {
    if d.dim() != a.dim() {
        return Err(Error::ShapeMismatch(format!(
            "decomposition of dimension {} against tensor of dimension {}",
            d.dim(),
            a.dim()
        )));
    }
    let norm = a.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let model = SymmetricTensor::from_factors(d, a.order())?;
    let diff = a
        .entries()
        .iter()
        .zip(model.entries())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

fn weight_agreement(lambda: f64, truth: f64) -> f64 {
    let denom = lambda.abs().max(truth.abs());
    if denom == 0.0 {
        return 0.0;
    }
    1.0 - (lambda - truth).abs() / denom
}

/// Best term for pairing computed factor `j` with true factor `k`.
fn pair_term(computed: &FactorDecomposition, truth: &FactorDecomposition, j: usize, k: usize, odd: bool) -> f64 {
    let lambda = computed.weights[j];
    let lambda_true = truth.weights[k];
    let overlap = computed.factors.column(j).dot(&truth.factors.column(k)).abs();
    let mut agree = weight_agreement(lambda, lambda_true);
    if odd {
        agree = agree.max(weight_agreement(-lambda, lambda_true));
    }
    agree * overlap
}

fn best_assignment(terms: &[Vec<f64>], computed: usize) -> f64 {
    fn search(terms: &[Vec<f64>], row: usize, used: &mut [bool], skips: usize) -> f64 {
        if row == terms.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        if skips > 0 {
            best = search(terms, row + 1, used, skips - 1);
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(terms[row][j] + search(terms, row + 1, used, skips));
                used[j] = false;
            }
        }
        best
    }
    let skips = terms.len().saturating_sub(computed);
    search(terms, 0, &mut vec![false; computed], skips)
}

fn greedy_assignment(terms: &[Vec<f64>], computed: usize) -> f64 {
    let mut candidates: Vec<(f64, usize, usize)> = terms
        .iter()
        .enumerate()
        .flat_map(|(k, row)| row.iter().enumerate().map(move |(j, &t)| (t, k, j)))
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut row_used = vec![false; terms.len()];
    let mut col_used = vec![false; computed];
    let mut total = 0.0;
    for (t, k, j) in candidates {
        if !row_used[k] && !col_used[j] {
            row_used[k] = true;
            col_used[j] = true;
            total += t;
        }
    }
    total
}

/// Mean over true factors of
/// `(1 - |λ - λ*| / max(|λ|, |λ*|)) * |x' x*|`, maximized over assignments
/// of true factors to distinct computed factors.
///
/// Both decompositions should already have unit-norm columns. Surplus
/// computed factors are ignored; if there are fewer computed than true
/// factors the unmatched true factors contribute zero. The assignment is
/// exact up to `max_exhaustive_p` true factors and greedy (with a logged
/// warning) beyond that. Terms for weights of opposite sign can be negative
/// and are kept as they are.
pub fn solution_score(computed: &FactorDecomposition, truth: &FactorDecomposition, opts: &ScoreOptions) -> Result<f64> {
    if computed.dim() != truth.dim() {
        return Err(Error::ShapeMismatch(format!(
            "computed dimension {} differs from true dimension {}",
            computed.dim(),
            truth.dim()
        )));
    }
    let p_true = truth.rank();
    if p_true == 0 {
        return Ok(if computed.rank() == 0 { 1.0 } else { 0.0 });
    }
    let odd = opts.order % 2 == 1;
    let terms: Vec<Vec<f64>> = (0..p_true)
        .map(|k| (0..computed.rank()).map(|j| pair_term(computed, truth, j, k, odd)).collect())
        .collect();
    let total = if p_true <= opts.max_exhaustive_p {
        best_assignment(&terms, computed.rank())
    } else {
        warn!(
            "true rank {p_true} exceeds exhaustive limit {}; using greedy factor matching",
            opts.max_exhaustive_p
        );
        greedy_assignment(&terms, computed.rank())
    };
    Ok(total / p_true as f64)
}
