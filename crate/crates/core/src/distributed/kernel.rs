//! Distributed construction of the kernel matrix.

use crate::distributed::phase;
use crate::distributed::tiles::{ceil_chunk, even_block};
use crate::error::{KkmError, Result};
use crate::fabric::{Comm, Layout};
use crate::linalg::{apply_kernel_in_place, gemm_nt, gemm_nt_accumulate, DenseMatrix, KernelSpec};
use crate::Scalar;

/// 1D kernel block: replicates all points with an allgather, then computes
/// this rank's `n×(n/P)` column block `K[:, own points]`.
pub fn gemm_1d<T: Scalar>(
    comm: &mut Comm<'_>,
    local_points: &DenseMatrix<T>,
    kernel: &KernelSpec,
) -> Result<DenseMatrix<T>> {
    comm.set_phase(phase::K_COMPUTE);
    let d = local_points.cols();
    let world = comm.grid().world();
    let all = comm.allgatherv(&world, local_points.data().to_vec())?;
    let all = DenseMatrix::new(all.len() / d.max(1), d, all)?;
    let mut k = gemm_nt(&all, local_points)?;
    apply_kernel_in_place(&mut k, kernel)?;
    Ok(k)
}

/// SUMMA: `K_ij = κ(P[R_i] · P[C_j]ᵀ)` on a `q×q` grid.
///
/// The inner dimension `d` is cut into `q` chunks of width `⌈d/q⌉`. Rank
/// `(i, j)` starts with `a_tile = P[R_i, chunk j]` and
/// `b_tile = P[C_j, chunk i]`; in round `s` the owners `(i, s)` and `(s, j)`
/// broadcast their tiles along the grid row and column. Rounds with an empty
/// chunk are skipped. Terms are accumulated in ascending feature order, so
/// the result is bit-identical to a sequential `gemm_nt`.
pub fn summa_gemm<T: Scalar>(
    comm: &mut Comm<'_>,
    a_tile: &DenseMatrix<T>,
    b_tile: &DenseMatrix<T>,
    d: usize,
    kernel: &KernelSpec,
) -> Result<DenseMatrix<T>> {
    let grid = comm.grid().clone();
    if grid.layout() != Layout::TwoDColumnMajor {
        return Err(KkmError::InvalidConfig("SUMMA needs a square 2D grid".into()));
    }
    comm.set_phase(phase::K_COMPUTE);
    let q = grid.side();
    let (i, j) = grid.coords(comm.rank());
    let (rows, cols) = (a_tile.rows(), b_tile.rows());
    let mut c = DenseMatrix::zeros(rows, cols);
    for s in 0..q {
        let width = ceil_chunk(d, q, s).len();
        if width == 0 {
            continue;
        }
        let a_root = grid.rank_at(i, s);
        let a_payload = (comm.rank() == a_root).then(|| a_tile.data().to_vec());
        let a = comm.broadcast(&grid.row_group(i), a_root, a_payload)?;
        let b_root = grid.rank_at(s, j);
        let b_payload = (comm.rank() == b_root).then(|| b_tile.data().to_vec());
        let b = comm.broadcast(&grid.col_group(j), b_root, b_payload)?;
        gemm_nt_accumulate(
            &DenseMatrix::new(rows, width, a)?,
            &DenseMatrix::new(cols, width, b)?,
            &mut c,
        )?;
    }
    apply_kernel_in_place(&mut c, kernel)?;
    Ok(c)
}

/// Moves contiguous 2D tiles `K[block i, block j]` to 1D column blocks.
///
/// Under column-major numbering the 1D owners of grid column `j`'s points are
/// exactly the ranks of grid column `j`, so tile `(i, j)` sends its `l`-th
/// column sub-block to rank `(l, j)`.
pub fn redistribute_2d_to_1d<T: Scalar>(comm: &mut Comm<'_>, tile: &DenseMatrix<T>, n: usize) -> Result<DenseMatrix<T>> {
    let grid = comm.grid().clone();
    comm.set_phase(phase::K_REDISTRIBUTE);
    let (q, p) = (grid.side(), grid.ranks());
    let (nq, nb) = (n / q, n / p);
    let (_, j) = grid.coords(comm.rank());
    let mut per_dest = vec![Vec::new(); p];
    for l in 0..q {
        per_dest[grid.rank_at(l, j)] = tile.column_range(even_block(nq, q, l)).into_data();
    }
    let received = comm.alltoallv(&grid.world(), per_dest)?;
    let mut out = Vec::with_capacity(n * nb);
    for i in 0..q {
        let src = &received[grid.rank_at(i, j)];
        if src.len() != nq * nb {
            return Err(KkmError::DimensionMismatch {
                op: "redistribute_2d_to_1d",
                detail: format!("tile ({i},{j}) delivered {} values, expected {}", src.len(), nq * nb),
            });
        }
        out.extend_from_slice(src);
    }
    DenseMatrix::new(n, nb, out)
}
