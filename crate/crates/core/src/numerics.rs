//! Dense-vector kernels shared by training and inference.
//!
//! Everything here works in `f64`, including embeddings that are persisted
//! as `f32`.

use crate::error::{Result, SafeError};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(SafeError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(SafeError::DimensionMismatch {
                    expected: cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so zero-width matrices yield empty rows by hand.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if self.rows == 0 && self.data.is_empty() && self.cols == 0 {
            self.cols = row.len();
        }
        if row.len() != self.cols {
            return Err(SafeError::DimensionMismatch {
                expected: self.cols,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        self.rows += 1;
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Returns `x / ‖x‖₂`. A zero vector is an error rather than being nudged by
/// an epsilon.
pub fn l2_normalize(x: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(x);
    if norm == 0.0 || !norm.is_finite() {
        return Err(SafeError::ZeroVector);
    }
    Ok(x.iter().map(|v| v / norm).collect())
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(SafeError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

fn nonzero_sq_norm(x: &[f64]) -> Result<f64> {
    let n = dot(x, x);
    if n == 0.0 {
        Err(SafeError::ZeroVector)
    } else {
        Ok(n)
    }
}

// Shared by the scalar and batched paths so both produce identical bits.
#[inline]
// Taking one square root of the product of squared norms makes a vector's
// similarity with itself exactly 1.
fn similarity_with_norms(a: &[f64], b: &[f64], sq_a: f64, sq_b: f64) -> f64 {
    (dot(a, b) / (sq_a * sq_b).sqrt()).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    let na = nonzero_sq_norm(a)?;
    let nb = nonzero_sq_norm(b)?;
    Ok(similarity_with_norms(a, b, na, nb))
}

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Cosine distance from `query` to every row of `bank`.
///
/// Element `k` is bit-identical to `cosine_distance(query, bank.row(k))`.
pub fn pairwise_distances(query: &[f64], bank: &Matrix) -> Result<Vec<f64>> {
    if bank.rows() > 0 && bank.cols() != query.len() {
        return Err(SafeError::DimensionMismatch {
            expected: query.len(),
            got: bank.cols(),
        });
    }
    let nq = nonzero_sq_norm(query)?;
    bank.iter_rows()
        .map(|row| {
            let nr = nonzero_sq_norm(row)?;
            Ok(1.0 - similarity_with_norms(query, row, nq, nr))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_three_four_five() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let u = l2_normalize(&v).unwrap();
        assert!((l2_norm(&u) - 1.0).abs() < 1e-9);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(SafeError::ZeroVector)));
    }

    #[test]
    fn cosine_basics() {
        let a = [1.0, 2.0, -1.0];
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&a, &[0.0; 3]).is_err());
        assert!(matches!(
            cosine_similarity(&a, &[1.0]),
            Err(SafeError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_distance_values() {
        assert_eq!(cosine_distance(&[2.0, 1.0], &[2.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        // 1 - 1/sqrt(2)
        let d = cosine_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((d - 0.292_893_218_813_452_4).abs() < 1e-12);
    }

    #[test]
    fn pairwise_small_cases() {
        let q = [0.3, -1.2, 2.0];
        let bank = Matrix::from_rows(&[q.to_vec()]).unwrap();
        assert_eq!(pairwise_distances(&q, &bank).unwrap(), vec![0.0]);

        let eye = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(
            pairwise_distances(&[0.0, 5.0, 0.0], &eye).unwrap(),
            vec![1.0, 0.0, 1.0]
        );
        assert!(pairwise_distances(&[1.0, 2.0], &eye).is_err());
    }

    fn nonzero_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, d).prop_filter("nonzero", |v| l2_norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn pairwise_matches_scalar_loop(
            q in nonzero_vec(8),
            rows in prop::collection::vec(nonzero_vec(8), 1..12),
        ) {
            let bank = Matrix::from_rows(&rows).unwrap();
            let batched = pairwise_distances(&q, &bank).unwrap();
            for (k, row) in rows.iter().enumerate() {
                prop_assert_eq!(batched[k].to_bits(), cosine_distance(&q, row).unwrap().to_bits());
            }
        }

        #[test]
        fn cosine_distance_symmetric_and_scale_free(
            a in nonzero_vec(6), b in nonzero_vec(6), c in 0.01f64..100.0,
        ) {
            let dab = cosine_distance(&a, &b).unwrap();
            prop_assert!((dab - cosine_distance(&b, &a).unwrap()).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * c).collect();
            prop_assert!(cosine_distance(&a, &scaled).unwrap().abs() < 1e-12);
            let an = l2_normalize(&a).unwrap();
            let bn = l2_normalize(&b).unwrap();
            prop_assert!((cosine_distance(&an, &bn).unwrap() - dab).abs() < 1e-12);
            prop_assert!((0.0..=2.0).contains(&dab));
        }
    }
}
