//! Dense symmetric tensors and the multilinear products used by the
//! decomposition algorithms.
//!
//! Entries are stored densely in row-major lexicographic order (last index
//! fastest). Every constructor in this module produces a tensor whose
//! permuted entries are bitwise identical: values are computed once at the
//! canonical (non-decreasing) multi-index of each orbit and copied to the
//! rest.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used by [`SymmetricTensor::from_dense`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Walks every multi-index of an `order`-way, `dim`-dimensional array in
/// storage order.
struct MultiIndex {
    idx: Vec<usize>,
    dim: usize,
    started: bool,
    done: bool,
}

impl MultiIndex {
    fn new(order: usize, dim: usize) -> Self {
        MultiIndex {
            idx: vec![0; order],
            dim,
            started: false,
            done: dim == 0,
        }
    }

    fn advance(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.idx);
        }
        for pos in (0..self.idx.len()).rev() {
            self.idx[pos] += 1;
            if self.idx[pos] < self.dim {
                return Some(&self.idx);
            }
            self.idx[pos] = 0;
        }
        self.done = true;
        None
    }
}

fn checked_len(order: usize, dim: usize) -> Result<usize> {
    u32::try_from(order)
        .ok()
        .and_then(|o| dim.checked_pow(o))
        .ok_or_else(|| Error::ShapeMismatch(format!("{dim}^{order} entries overflow")))
}

fn linear_index(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

/// For every storage position, the storage position of its canonical
/// (sorted) multi-index. Canonical positions are never larger than the
/// positions that map to them.
fn canonical_positions(order: usize, dim: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(dim.pow(order as u32));
    let mut it = MultiIndex::new(order, dim);
    let mut sorted = vec![0; order];
    while let Some(idx) = it.advance() {
        sorted.copy_from_slice(idx);
        sorted.sort_unstable();
        out.push(linear_index(&sorted, dim));
    }
    out
}

/// Evaluates `f` once per orbit of index permutations and copies the value
/// to every member.
fn fill_symmetric(order: usize, dim: usize, mut f: impl FnMut(&[usize]) -> f64) -> Vec<f64> {
    let len = dim.pow(order as u32);
    let mut entries = vec![0.0; len];
    let mut it = MultiIndex::new(order, dim);
    let mut sorted = vec![0; order];
    let mut pos = 0;
    while let Some(idx) = it.advance() {
        sorted.copy_from_slice(idx);
        sorted.sort_unstable();
        let canon = linear_index(&sorted, dim);
        entries[pos] = if canon == pos { f(&sorted) } else { entries[canon] };
        pos += 1;
    }
    entries
}

/// A dense `order`-way, `dim`-dimensional real tensor invariant under any
/// permutation of its indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricTensor {
    fn check_shape(order: usize, dim: usize, len: usize) -> Result<()> {
        if order < 2 {
            return Err(Error::ShapeMismatch(format!("order must be at least 2, got {order}")));
        }
        if dim < 1 {
            return Err(Error::ShapeMismatch("dimension must be at least 1".into()));
        }
        let expected = checked_len(order, dim)?;
        if len != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} values for order {order}, dim {dim}; got {len}"
            )));
        }
        Ok(())
    }

    /// Wraps dense values, rejecting them if any orbit of permuted entries
    /// spreads by more than `1e-12 * ‖values‖`.
    pub fn from_dense(order: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        Self::check_shape(order, dim, values.len())?;
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tolerance = SYMMETRY_TOL * norm;
        let canon = canonical_positions(order, dim);
        let mut lo = values.clone();
        let mut hi = values.clone();
        for (pos, &c) in canon.iter().enumerate() {
            lo[c] = lo[c].min(values[pos]);
            hi[c] = hi[c].max(values[pos]);
        }
        let asymmetry = canon
            .iter()
            .enumerate()
            .filter(|&(pos, &c)| pos == c)
            .map(|(_, &c)| hi[c] - lo[c])
            .fold(0.0, f64::max);
        if asymmetry > tolerance || asymmetry.is_nan() {
            return Err(Error::SymmetryViolation { asymmetry, tolerance });
        }
        Ok(SymmetricTensor { order, dim, entries: values })
    }

    /// Projects arbitrary dense values onto the symmetric tensors by
    /// averaging each entry over all index permutations.
    pub fn symmetrize(order: usize, dim: usize, values: &[f64]) -> Result<Self> {
        Self::check_shape(order, dim, values.len())?;
        let canon = canonical_positions(order, dim);
        let mut sum = vec![0.0; values.len()];
        let mut count = vec![0u32; values.len()];
        for (pos, &c) in canon.iter().enumerate() {
            sum[c] += values[pos];
            count[c] += 1;
        }
        let entries = canon.iter().map(|&c| sum[c] / f64::from(count[c])).collect();
        Ok(SymmetricTensor { order, dim, entries })
    }

    pub fn zeros(order: usize, dim: usize) -> Result<Self> {
        let len = checked_len(order, dim)?;
        Self::check_shape(order, dim, len)?;
        Ok(SymmetricTensor { order, dim, entries: vec![0.0; len] })
    }

    /// The symmetric outer power `x^m`, with entries `x[i1] * ... * x[im]`.
    pub fn outer_power(x: &[f64], order: usize) -> Result<Self> {
        let dim = x.len();
        Self::check_shape(order, dim, checked_len(order, dim)?)?;
        let entries = fill_symmetric(order, dim, |idx| idx.iter().map(|&i| x[i]).product());
        Ok(SymmetricTensor { order, dim, entries })
    }

    /// `sum_k weights[k] * (factors[:, k])^order`.
    pub fn from_factors(decomp: &FactorDecomposition, order: usize) -> Result<Self> {
        let dim = decomp.dim();
        Self::check_shape(order, dim, checked_len(order, dim)?)?;
        let x = &decomp.factors;
        let entries = fill_symmetric(order, dim, |idx| {
            decomp
                .weights
                .iter()
                .enumerate()
                .map(|(k, &w)| w * idx.iter().map(|&i| x[(i, k)]).product::<f64>())
                .sum()
        });
        Ok(SymmetricTensor { order, dim, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.order, "index arity must equal tensor order");
        self.entries[linear_index(idx, self.dim)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn check_vector(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} against tensor of dimension {}",
                x.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// `A x^{m-1}`: contracts every mode but the first with `x`.
    pub fn reduce_to_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_vector(x)?;
        let n = self.dim;
        let mut cur = self.entries.clone();
        for _ in 1..self.order {
            cur = cur
                .chunks_exact(n)
                .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
                .collect();
        }
        Ok(cur)
    }

    /// `A x^m = x' (A x^{m-1})`.
    pub fn reduce_to_scalar(&self, x: &[f64]) -> Result<f64> {
        let v = self.reduce_to_vector(x)?;
        Ok(v.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    /// `A(V, ..., V)` for a `p x n` matrix `V`, giving an `m`-way
    /// `p`-dimensional tensor.
    ///
    /// Each step contracts the leading mode with `V` and moves the new mode
    /// to the back, so after `m` steps every mode has been transformed and
    /// the original mode order is restored.
    pub fn multilinear_transform(&self, v: &DMatrix<f64>) -> Result<SymmetricTensor> {
        if v.ncols() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "transform has {} columns, tensor dimension is {}",
                v.ncols(),
                self.dim
            )));
        }
        let p = v.nrows();
        if p == 0 {
            return Err(Error::ShapeMismatch("transform has no rows".into()));
        }
        let n = self.dim;
        let mut cur = self.entries.clone();
        // The leading mode is always an untransformed one of size n.
        for _ in 0..self.order {
            let rest = cur.len() / n;
            let mut next = vec![0.0; rest * p];
            for j in 0..n {
                let slab = &cur[j * rest..(j + 1) * rest];
                for i in 0..p {
                    let vij = v[(i, j)];
                    if vij == 0.0 {
                        continue;
                    }
                    for (r, &a) in slab.iter().enumerate() {
                        next[r * p + i] += vij * a;
                    }
                }
            }
            cur = next;
        }
        // Copy canonical values across each orbit so the result is exactly
        // symmetric rather than symmetric up to summation order.
        let canon = canonical_positions(self.order, p);
        for (pos, &c) in canon.iter().enumerate() {
            if c != pos {
                cur[pos] = cur[c];
            }
        }
        Ok(SymmetricTensor { order: self.order, dim: p, entries: cur })
    }

    /// `sum_{i3..im} c[i3..im] A(:, :, i3, ..., im)`.
    pub fn slice_combination(&self, c: &CoefficientTensor) -> Result<DMatrix<f64>> {
        if c.order + 2 != self.order || c.dim != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "coefficients of order {} dim {} against tensor of order {} dim {}",
                c.order, c.dim, self.order, self.dim
            )));
        }
        let n = self.dim;
        let tail = c.entries.len();
        let b = DMatrix::from_fn(n, n, |i, j| {
            let slab = &self.entries[(i * n + j) * tail..(i * n + j + 1) * tail];
            slab.iter().zip(&c.entries).map(|(a, w)| a * w).sum()
        });
        Ok(b)
    }
}

/// Coefficients of a linear combination of the `n x n` slices of an
/// `m`-way tensor: an `(m - 2)`-way array of dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl CoefficientTensor {
    pub fn new(order: usize, dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim < 1 {
            return Err(Error::ShapeMismatch("dimension must be at least 1".into()));
        }
        let expected = checked_len(order, dim)?;
        if entries.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} coefficients, got {}",
                entries.len()
            )));
        }
        Ok(CoefficientTensor { order, dim, entries })
    }

    /// Selects the single slice `A(:, :, idx...)`.
    pub fn unit(order: usize, dim: usize, idx: &[usize]) -> Result<Self> {
        if idx.len() != order || idx.iter().any(|&i| i >= dim) {
            return Err(Error::ShapeMismatch(format!("bad slice index {idx:?}")));
        }
        let mut entries = vec![0.0; checked_len(order, dim)?];
        entries[linear_index(idx, dim)] = 1.0;
        CoefficientTensor::new(order, dim, entries)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// Weights `λ` and factor matrix `X` (one factor per column) of
/// `A = sum_k λ_k x_k^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDecomposition {
    pub weights: Vec<f64>,
    pub factors: DMatrix<f64>,
}

impl FactorDecomposition {
    pub fn new(weights: Vec<f64>, factors: DMatrix<f64>) -> Result<Self> {
        if weights.len() != factors.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {} factor columns",
                weights.len(),
                factors.ncols()
            )));
        }
        Ok(FactorDecomposition { weights, factors })
    }

    /// A rank-zero decomposition in dimension `dim`.
    pub fn empty(dim: usize) -> Self {
        FactorDecomposition { weights: Vec::new(), factors: DMatrix::zeros(dim, 0) }
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.factors.nrows()
    }

    pub fn column(&self, k: usize) -> DVector<f64> {
        self.factors.column(k).into_owned()
    }
}
