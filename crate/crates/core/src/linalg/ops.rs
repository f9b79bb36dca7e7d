use crate::error::{KkmError, Result};
use crate::linalg::{Assignments, CscMatrix, DenseMatrix};
use crate::Scalar;

/// `A Bᵀ` for row-major `A` (n×d) and `B` (m×d).
pub fn gemm_nt<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let mut c = DenseMatrix::zeros(a.rows(), b.rows());
    gemm_nt_accumulate(a, b, &mut c)?;
    Ok(c)
}

/// `C += A Bᵀ`, adding the inner-dimension terms one at a time in ascending
/// order onto the existing value of `C`. Splitting the inner dimension into
/// consecutive chunks therefore reproduces the unsplit result bit for bit.
pub fn gemm_nt_accumulate<T: Scalar>(
    a: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
    c: &mut DenseMatrix<T>,
) -> Result<()> {
    if a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows() {
        return Err(KkmError::DimensionMismatch {
            op: "gemm_nt",
            detail: format!(
                "A {:?}, B {:?}, C {:?}",
                a.shape(),
                b.shape(),
                c.shape()
            ),
        });
    }
    for i in 0..a.rows() {
        let ar = a.row(i);
        for j in 0..b.rows() {
            let br = b.row(j);
            let mut acc = c.get(i, j);
            for (&x, &y) in ar.iter().zip(br) {
                acc += x * y;
            }
            c.set(i, j, acc);
        }
    }
    Ok(())
}

/// Partial `Eᵀ = V[:, row_offset..row_offset + n_loc] · K_blk`, where the
/// rows of `K_blk` are the points `row_offset..row_offset + n_loc`.
///
/// Each output entry accumulates its terms in ascending point order.
pub fn spmm<T: Scalar>(
    v: &CscMatrix<T>,
    kblk: &DenseMatrix<T>,
    row_offset: usize,
) -> Result<DenseMatrix<T>> {
    if row_offset + kblk.rows() > v.cols() {
        return Err(KkmError::DimensionMismatch {
            op: "spmm",
            detail: format!(
                "V has {} columns but K block covers points {}..{}",
                v.cols(),
                row_offset,
                row_offset + kblk.rows()
            ),
        });
    }
    let mut out = DenseMatrix::zeros(v.rows(), kblk.cols());
    for j in 0..kblk.rows() {
        let krow = kblk.row(j);
        for (i, val) in v.column(row_offset + j) {
            for (o, &kv) in out.row_mut(i).iter_mut().zip(krow) {
                *o += val * kv;
            }
        }
    }
    Ok(out)
}

/// `z[j] = Eᵀ[cl[j]][j]`.
pub fn mask_select<T: Scalar>(et: &DenseMatrix<T>, cl: &Assignments) -> Result<Vec<T>> {
    if cl.len() != et.cols() {
        return Err(KkmError::DimensionMismatch {
            op: "mask_select",
            detail: format!("{} labels for {} columns", cl.len(), et.cols()),
        });
    }
    cl.validate(et.rows())?;
    Ok((0..cl.len()).map(|j| et.get(cl.get(j), j)).collect())
}

/// `c[i] = Σ_j V[i][col_offset + j] · z[j]`.
pub fn spmv<T: Scalar>(v: &CscMatrix<T>, z: &[T], col_offset: usize) -> Result<Vec<T>> {
    if col_offset + z.len() > v.cols() {
        return Err(KkmError::DimensionMismatch {
            op: "spmv",
            detail: format!(
                "V has {} columns but z covers {}..{}",
                v.cols(),
                col_offset,
                col_offset + z.len()
            ),
        });
    }
    let mut c = vec![T::zero(); v.rows()];
    for (j, &zj) in z.iter().enumerate() {
        for (i, val) in v.column(col_offset + j) {
            c[i] += val * zj;
        }
    }
    Ok(c)
}

/// Number of points per cluster.
pub fn cluster_sizes(labels: &[u32], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &l in labels {
        sizes[l as usize] += 1;
    }
    sizes
}

/// Sets `c[i] = +inf` for every empty cluster so it can never win an argmin.
pub fn mark_empty_clusters<T: Scalar>(c: &mut [T], sizes: &[usize]) {
    for (ci, &s) in c.iter_mut().zip(sizes) {
        if s == 0 {
            *ci = T::infinity();
        }
    }
}

/// `Dᵀ[i][j] = -2 Eᵀ[i][j] + c[i]`.
///
/// Rows of empty clusters carry `c[i] = +inf` and therefore `+inf` distances.
pub fn compute_distances<T: Scalar>(et: &DenseMatrix<T>, c: &[T]) -> Result<DenseMatrix<T>> {
    if c.len() != et.rows() {
        return Err(KkmError::DimensionMismatch {
            op: "compute_distances",
            detail: format!("c has {} entries for {} clusters", c.len(), et.rows()),
        });
    }
    let two = T::one() + T::one();
    let mut d = DenseMatrix::zeros(et.rows(), et.cols());
    for (i, &ci) in c.iter().enumerate() {
        for (dv, &ev) in d.row_mut(i).iter_mut().zip(et.row(i)) {
            *dv = -two * ev + ci;
        }
    }
    Ok(d)
}

/// Per column, the lowest cluster index attaining the minimum distance.
pub fn argmin_rows<T: Scalar>(dt: &DenseMatrix<T>) -> Assignments {
    let mut best = vec![0u32; dt.cols()];
    let mut best_val: Vec<T> = if dt.rows() > 0 {
        dt.row(0).to_vec()
    } else {
        vec![T::infinity(); dt.cols()]
    };
    for i in 1..dt.rows() {
        for (j, &v) in dt.row(i).iter().enumerate() {
            if v < best_val[j] {
                best_val[j] = v;
                best[j] = i as u32;
            }
        }
    }
    Assignments::new(best)
}

/// `Σ_j Dᵀ[cl[j]][j]`, summed in ascending point order.
pub fn shifted_objective<T: Scalar>(dt: &DenseMatrix<T>, cl: &Assignments) -> T {
    (0..cl.len()).fold(T::zero(), |acc, j| acc + dt.get(cl.get(j), j))
}
