//! Symmetric eigendecomposition (cyclic Jacobi) and Haar-distributed random
//! orthogonal matrices.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Default threshold for treating an eigenvalue as nonzero or positive.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Sweep budget for the Jacobi iteration.
pub const MAX_SWEEPS: usize = 50;

/// Eigenpairs of a real symmetric matrix. Column `k` of `vectors` belongs to
/// `values[k]`; values are sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// The retained part of a "skinny" eigendecomposition `C = U diag(d) U'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinnyEigen {
    pub basis: DMatrix<f64>,
    pub values: Vec<f64>,
}

/// Returned when a matrix has an eigenvalue at or below `-tol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPsd {
    pub min_eigenvalue: f64,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn select(&self, keep: impl Fn(f64) -> bool) -> EigenSystem {
        let idx: Vec<usize> = (0..self.len()).filter(|&k| keep(self.values[k])).collect();
        EigenSystem {
            values: idx.iter().map(|&k| self.values[k]).collect(),
            vectors: self.vectors.select_columns(idx.iter()),
        }
    }

    /// Pairs with `|σ| > tol`, in their existing order. The number of
    /// survivors is the predicted rank.
    pub fn nonzero(&self, tol: f64) -> EigenSystem {
        self.select(|v| v.abs() > tol)
    }

    /// Skinny decomposition of a positive semi-definite matrix: fails if the
    /// smallest eigenvalue is `<= -tol`, otherwise keeps pairs with value
    /// `> tol`.
    pub fn psd_filtered(&self, tol: f64) -> std::result::Result<SkinnyEigen, NotPsd> {
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= -tol {
            return Err(NotPsd { min_eigenvalue: min });
        }
        let kept = self.select(|v| v > tol);
        Ok(SkinnyEigen { basis: kept.vectors, values: kept.values })
    }

    /// `V diag(values) V'`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            scaled.column_mut(k).scale_mut(v);
        }
        scaled * self.vectors.transpose()
    }
}

/// Full spectral decomposition of a symmetric matrix by cyclic Jacobi
/// rotations.
///
/// The input is symmetrized by averaging with its transpose. Eigenvalues
/// come back in descending order (ties keep their original column order)
/// and each eigenvector is signed so its largest-magnitude component is
/// positive.
pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigenSystem> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::ShapeMismatch(format!("eigenproblem on a {}x{} matrix", n, m.ncols())));
    }
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    // Off-diagonal mass this small no longer moves any eigenpair.
    let floor = (1e-3 * f64::EPSILON * a.norm()).powi(2);

    let mut converged = false;
    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off <= floor {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let g = 100.0 * apq.abs();
                // Negligible relative to both diagonal entries: drop it.
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    if k != p && k != q {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        let new_kp = c * akp - s * akq;
                        let new_kq = s * akp + c * akq;
                        a[(k, p)] = new_kp;
                        a[(p, k)] = new_kp;
                        a[(k, q)] = new_kq;
                        a[(q, k)] = new_kq;
                    }
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(Ordering::Equal));
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let mut vectors = v.select_columns(order.iter());
    for mut col in vectors.column_iter_mut() {
        let mut lead = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[lead].abs() {
                lead = i;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(EigenSystem { values, vectors })
}

/// A Haar-distributed `n x n` orthogonal matrix: the Q factor of a standard
/// Gaussian matrix, with columns signed so that R has a positive diagonal.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn assert_valid(m: &DMatrix<f64>, es: &EigenSystem) {
        let n = m.nrows();
        let scale = m.norm().max(1.0);
        for k in 0..n {
            let r = m * es.vectors.column(k) - es.vectors.column(k) * es.values[k];
            assert!(r.norm() <= 1e-10 * scale, "residual {} for pair {k}", r.norm());
        }
        let gram = es.vectors.transpose() * &es.vectors;
        assert!(max_abs(&(gram - DMatrix::identity(n, n))) <= 1e-10);
        assert!(max_abs(&(es.reconstruct() - m)) <= 1e-9 * scale);
        assert!(es.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn diagonal_matrix() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let es = sym_eig(&m).unwrap();
        assert_eq!(es.values, vec![3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(es.vectors, expected);
    }

    #[test]
    fn swap_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let es = sym_eig(&m).unwrap();
        assert!((es.values[0] - 1.0).abs() < 1e-15);
        assert!((es.values[1] + 1.0).abs() < 1e-15);
        let h = 0.5f64.sqrt();
        assert!((es.vectors[(0, 0)] - h).abs() < 1e-15 && (es.vectors[(1, 0)] - h).abs() < 1e-15);
        assert!((es.vectors[(0, 1)].abs() - h).abs() < 1e-15);
        assert!((es.vectors[(0, 1)] + es.vectors[(1, 1)]).abs() < 1e-15);
        assert_valid(&m, &es);
    }

    #[test]
    fn recovers_embedded_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random_orthogonal(4, &mut rng);
        let x = q.columns(0, 2).into_owned();
        let b = &x * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 2.0])) * x.transpose();
        let es = sym_eig(&b).unwrap();
        assert!((es.values[0] - 5.0).abs() < 1e-10);
        assert!((es.values[1] - 2.0).abs() < 1e-10);
        assert!(es.values[2].abs() < 1e-10 && es.values[3].abs() < 1e-10);
        for k in 0..2 {
            let overlap = es.vectors.column(k).dot(&x.column(k)).abs();
            assert!((overlap - 1.0).abs() < 1e-10);
        }
        assert_valid(&b, &es);
    }

    #[test]
    fn zero_matrix_and_non_square() {
        let es = sym_eig(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(es.values, vec![0.0; 3]);
        assert_eq!(es.vectors, DMatrix::identity(3, 3));
        assert!(matches!(sym_eig(&DMatrix::zeros(2, 3)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn nonzero_filter() {
        let es = EigenSystem {
            values: vec![5.0, 2.0, 1e-14, -1e-12],
            vectors: DMatrix::identity(4, 4),
        };
        let kept = es.nonzero(DEFAULT_TOL);
        assert_eq!(kept.values, vec![5.0, 2.0]);
        assert_eq!(kept.vectors.ncols(), 2);

        let tiny = EigenSystem { values: vec![1e-11, -1e-11], vectors: DMatrix::identity(2, 2) };
        assert!(tiny.nonzero(DEFAULT_TOL).is_empty());
    }

    #[test]
    fn psd_filter_examples() {
        let es = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        let sk = es.psd_filtered(DEFAULT_TOL).unwrap();
        assert_eq!(sk.values, vec![1.0; 3]);
        assert_eq!(sk.basis, DMatrix::identity(3, 3));

        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let err = sym_eig(&m).unwrap().psd_filtered(DEFAULT_TOL).unwrap_err();
        assert_eq!(err.min_eigenvalue, -1.0);

        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1e-13, 1.0]));
        let sk = sym_eig(&m).unwrap().psd_filtered(DEFAULT_TOL).unwrap();
        assert_eq!(sk.values, vec![4.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(sk.basis, expected);
    }

    #[test]
    fn psd_boundary_is_exact() {
        let at = |v: f64| EigenSystem { values: vec![1.0, v], vectors: DMatrix::identity(2, 2) };
        assert!(at(-1e-10).psd_filtered(1e-10).is_err());
        assert!(at(-0.99e-10).psd_filtered(1e-10).is_ok());
        assert_eq!(at(1e-10).psd_filtered(1e-10).unwrap().values, vec![1.0]);
    }

    #[test]
    fn random_orthogonal_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..12 {
            let q = random_orthogonal(n, &mut rng);
            let gram = q.transpose() * &q;
            assert!(max_abs(&(gram - DMatrix::identity(n, n))) <= 1e-12);
        }
        let q = random_orthogonal(1, &mut rng);
        assert_eq!(q[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn haar_first_column_angle_is_uniform() {
        const DRAWS: usize = 10_000;
        const BINS: usize = 20;
        // chi-square critical value, 19 degrees of freedom, alpha = 0.001
        const CRITICAL: f64 = 43.820;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut counts = [0usize; BINS];
        for _ in 0..DRAWS {
            let q = random_orthogonal(2, &mut rng);
            let angle = q[(1, 0)].atan2(q[(0, 0)]).rem_euclid(std::f64::consts::TAU);
            let bin = ((angle / std::f64::consts::TAU) * BINS as f64) as usize;
            counts[bin.min(BINS - 1)] += 1;
        }
        let expected = DRAWS as f64 / BINS as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < CRITICAL, "chi2 = {chi2}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn jacobi_agrees_with_reference(n in 1usize..9, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
            let m = &g + g.transpose();
            let es = sym_eig(&m).unwrap();
            assert_valid(&m, &es);
            let mut reference: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            reference.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (a, b) in es.values.iter().zip(&reference) {
                prop_assert!((a - b).abs() <= 1e-9 * m.norm().max(1.0));
            }
        }

        #[test]
        fn spectrum_is_similarity_invariant(n in 1usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
            let m = &g * g.transpose() - DMatrix::identity(n, n);
            let q = random_orthogonal(n, &mut rng);
            let rotated = q.transpose() * &m * &q;
            let a = sym_eig(&m).unwrap();
            let b = sym_eig(&rotated).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-9 * m.norm().max(1.0));
            }
        }
    }
}
