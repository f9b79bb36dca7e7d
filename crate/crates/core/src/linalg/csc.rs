use crate::error::{KkmError, Result};
use crate::linalg::{cluster_sizes, Assignments, DenseMatrix};
use crate::Scalar;

/// Compressed-sparse-column matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix<T> {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> CscMatrix<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<u32>,
        values: Vec<T>,
    ) -> Result<Self> {
        let bad = |detail: String| KkmError::DimensionMismatch {
            op: "CscMatrix::new",
            detail,
        };
        if col_ptr.len() != cols + 1 {
            return Err(bad(format!("col_ptr has {} entries for {cols} columns", col_ptr.len())));
        }
        if col_ptr[0] != 0 || col_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("col_ptr must start at 0 and be nondecreasing".into()));
        }
        let nnz = col_ptr[cols];
        if row_idx.len() != nnz || values.len() != nnz {
            return Err(bad(format!(
                "nnz = {nnz} but {} row indices and {} values",
                row_idx.len(),
                values.len()
            )));
        }
        if let Some(&r) = row_idx.iter().find(|&&r| r as usize >= rows) {
            return Err(bad(format!("row index {r} out of range for {rows} rows")));
        }
        Ok(Self {
            rows,
            cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Assignment matrix whose values come from externally supplied cluster
    /// sizes (the distributed path, where `labels` is only a slice of the
    /// global assignment).
    pub fn assignment_with_sizes(labels: &[u32], sizes: &[usize]) -> Result<Self> {
        let k = sizes.len();
        let inv: Vec<T> = sizes
            .iter()
            .map(|&s| {
                if s == 0 {
                    T::zero()
                } else {
                    T::one() / T::from_usize_lossy(s)
                }
            })
            .collect();
        let mut values = Vec::with_capacity(labels.len());
        for (position, &l) in labels.iter().enumerate() {
            let li = l as usize;
            if li >= k || sizes[li] == 0 {
                return Err(KkmError::LabelOutOfRange {
                    position,
                    label: li,
                    k,
                });
            }
            values.push(inv[li]);
        }
        Ok(Self {
            rows: k,
            cols: labels.len(),
            col_ptr: (0..=labels.len()).collect(),
            row_idx: labels.to_vec(),
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[u32] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Nonzeros of column `j` as `(row, value)` pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&r, &v)| (r as usize, v))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for j in 0..self.cols {
            for (i, v) in self.column(j) {
                d.set(i, j, d.get(i, j) + v);
            }
        }
        d
    }
}

/// Builds the k×n assignment matrix `V` with `V[cl(j)][j] = 1/|L_cl(j)|`.
///
/// Empty clusters are permitted; they simply own no nonzero.
pub fn build_assignment_matrix<T: Scalar>(cl: &Assignments, k: usize) -> Result<CscMatrix<T>> {
    cl.validate(k)?;
    let sizes = cluster_sizes(cl.as_slice(), k);
    CscMatrix::assignment_with_sizes(cl.as_slice(), &sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_balanced_clusters() {
        let v: CscMatrix<f64> =
            build_assignment_matrix(&Assignments::new(vec![0, 1, 0, 1]), 2).unwrap();
        assert_eq!(v.row_idx(), &[0, 1, 0, 1]);
        assert_eq!(v.col_ptr(), &[0, 1, 2, 3, 4]);
        assert!(v.values().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn single_and_singleton_clusters() {
        let v: CscMatrix<f64> = build_assignment_matrix(&Assignments::new(vec![0, 0, 0]), 1).unwrap();
        assert!(v.values().iter().all(|&x| x == 1.0 / 3.0));
        let v: CscMatrix<f64> = build_assignment_matrix(&Assignments::new(vec![2, 1, 0]), 3).unwrap();
        assert!(v.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn empty_cluster_is_permitted() {
        let v: CscMatrix<f64> = build_assignment_matrix(&Assignments::new(vec![0, 0, 2]), 3).unwrap();
        assert_eq!(v.nnz(), 3);
        assert_eq!(v.to_dense().row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_label_is_rejected() {
        let err = build_assignment_matrix::<f64>(&Assignments::new(vec![0, 2]), 2).unwrap_err();
        assert!(matches!(err, KkmError::LabelOutOfRange { position: 1, label: 2, k: 2 }));
    }

    #[test]
    fn malformed_csc_is_rejected() {
        assert!(CscMatrix::<f64>::new(2, 2, vec![0, 2, 1], vec![0], vec![1.0]).is_err());
        assert!(CscMatrix::<f64>::new(2, 1, vec![0, 1], vec![5], vec![1.0]).is_err());
    }
}
