//! Per-iteration rank programs of the four schedules.

use crate::distributed::tiles::{ceil_chunk, even_block, strided_rows};
use crate::distributed::{kernel, phase, Algorithm, Fault};
use crate::error::Result;
use crate::fabric::{Comm, MinLoc};
use crate::linalg::{
    argmin_rows, build_assignment_matrix, cluster_sizes, compute_distances, mark_empty_clusters,
    mask_select, spmm, spmv, Assignments, CscMatrix, DenseMatrix,
};
use crate::oracle::{round_robin_sizes, FitConfig};
use crate::Scalar;

/// What one rank reports for one iteration.
pub(crate) struct RankIteration<T> {
    /// New assignments of the rank's 1D point block `[p·n/P, (p+1)·n/P)`.
    pub block: Vec<u32>,
    pub objective: T,
    pub changed: T,
}

pub(crate) struct RankOutput<T> {
    pub iterations: Vec<RankIteration<T>>,
    /// Nonzeros of `V` consumed by this rank's local SpMM each iteration.
    pub spmm_nnz: usize,
}

/// Output of the 1.5D SpMM on one rank.
pub struct Spmm15d<T> {
    /// `Eᵀ` columns of this rank's 1D point block (`k×n/P`).
    pub et: DenseMatrix<T>,
    /// Global cluster sizes.
    pub sizes: Vec<usize>,
    pub nnz: usize,
}

fn round_robin_block(range: std::ops::Range<usize>, k: usize) -> Vec<u32> {
    range.map(|x| (x % k) as u32).collect()
}

fn local_counts(labels: &[u32], k: usize) -> Vec<u64> {
    cluster_sizes(labels, k).into_iter().map(|s| s as u64).collect()
}

/// 1.5D SpMM: replicates `V`'s point block `i` along grid row `i` (gather to
/// the diagonal, then broadcast), multiplies by the local tile
/// `K[block i, block j]` and reduce-scatters the partial `Eᵀ` along grid
/// column `j`, split by point columns.
pub fn spmm_15d<T: Scalar>(
    comm: &mut Comm<'_>,
    cl_local: &[u32],
    k_tile: &DenseMatrix<T>,
    k: usize,
    fault: Option<Fault>,
) -> Result<Spmm15d<T>> {
    let grid = comm.grid().clone();
    let q = grid.side();
    let (i, j) = grid.coords(comm.rank());
    let nb = cl_local.len();

    comm.set_phase(phase::V_EXCHANGE);
    let gathered = comm.gather(&grid.col_group(j), grid.rank_at(j, j), cl_local.to_vec())?;
    let row_root = grid.rank_at(i, i);
    let payload = if comm.rank() == row_root { gathered } else { None };
    let cl_rows = comm.broadcast(&grid.row_group(i), row_root, payload)?;
    let sizes: Vec<usize> = comm
        .allreduce_sum(&grid.world(), local_counts(cl_local, k))?
        .into_iter()
        .map(|s| s as usize)
        .collect();

    let v_rows = CscMatrix::<T>::assignment_with_sizes(&cl_rows, &sizes)?;
    let y = spmm(&v_rows, k_tile, 0)?;
    let mut send = Vec::with_capacity(k * y.cols());
    for l in 0..q {
        for c in 0..k {
            send.extend_from_slice(&y.row(c)[l * nb..(l + 1) * nb]);
        }
    }

    comm.set_phase(phase::E_REDUCE);
    let et = if fault == Some(Fault::SkipEReduce) {
        send[i * k * nb..(i + 1) * k * nb].to_vec()
    } else {
        comm.reduce_scatter_block(&grid.col_group(j), send)?
    };
    Ok(Spmm15d {
        et: DenseMatrix::new(k, nb, et)?,
        sizes,
        nnz: cl_rows.len(),
    })
}

/// B-stationary 2D SpMM: replicates the labels of row set `S_i` along grid
/// row `i` with one allgather, multiplies by the stationary tile
/// `K[S_i, block j]`, and reduce-scatters the `k×n/q` partial along grid
/// column `j` by cluster rows. Returns `Eᵀ[cluster block i, point block j]`
/// and the number of `V` nonzeros used.
pub fn spmm_2d_bstationary<T: Scalar>(
    comm: &mut Comm<'_>,
    cl_col: &[u32],
    sizes: &[usize],
    k_tile: &DenseMatrix<T>,
    fault: Option<Fault>,
) -> Result<(DenseMatrix<T>, usize)> {
    let grid = comm.grid().clone();
    let q = grid.side();
    let (i, j) = grid.coords(comm.rank());
    let k = sizes.len();
    let (kq, nq) = (k / q, cl_col.len());
    let nb = nq / q;

    comm.set_phase(phase::V_EXCHANGE);
    let cl_rows = comm.allgatherv(&grid.row_group(i), cl_col[i * nb..(i + 1) * nb].to_vec())?;
    let v_rows = CscMatrix::<T>::assignment_with_sizes(&cl_rows, sizes)?;
    let y = spmm(&v_rows, k_tile, 0)?;

    comm.set_phase(phase::E_REDUCE);
    let et = if fault == Some(Fault::SkipEReduce) {
        y.row_range(i * kq..(i + 1) * kq).into_data()
    } else {
        comm.reduce_scatter_block(&grid.col_group(j), y.into_data())?
    };
    Ok((DenseMatrix::new(kq, nq, et)?, cl_rows.len()))
}

/// Runs the clustering iterations, summing the objective and change count
/// over the world after each one.
fn drive<T: Scalar>(
    comm: &mut Comm<'_>,
    cfg: &FitConfig,
    spmm_nnz: usize,
    mut step: impl FnMut(&mut Comm<'_>) -> Result<RankIteration<T>>,
) -> Result<RankOutput<T>> {
    let world = comm.grid().world();
    let mut iterations = Vec::with_capacity(cfg.max_iterations);
    for _ in 0..cfg.max_iterations {
        let mut it = step(comm)?;
        comm.set_phase(phase::OBJECTIVE);
        let tot = comm.allreduce_sum(&world, vec![it.objective, it.changed])?;
        it.objective = tot[0];
        it.changed = tot[1];
        let done = cfg.stop_on_no_change && it.changed == T::zero();
        iterations.push(it);
        if done {
            break;
        }
    }
    Ok(RankOutput { iterations, spmm_nnz })
}

/// Shared tail of the 1D-partitioned schedules: `z`, the world-wide `c`,
/// distances and argmin for the rank's own point block.
fn update_1d<T: Scalar>(
    comm: &mut Comm<'_>,
    et: &DenseMatrix<T>,
    cl_local: &mut Vec<u32>,
    v: &CscMatrix<T>,
    col_offset: usize,
    sizes: &[usize],
    fault: Option<Fault>,
) -> Result<RankIteration<T>> {
    let current = Assignments::new(std::mem::take(cl_local));
    let z = mask_select(et, &current)?;
    let c_part = spmv(v, &z, col_offset)?;
    comm.set_phase(phase::C_ALLREDUCE);
    let mut c = if fault == Some(Fault::SkipEReduce) {
        c_part
    } else {
        comm.allreduce_sum(&comm.grid().world(), c_part)?
    };
    mark_empty_clusters(&mut c, sizes);
    let dt = compute_distances(et, &c)?;

    comm.set_phase(phase::ASSIGN_UPDATE);
    let next = argmin_rows(&dt);
    let objective = (0..next.len()).fold(T::zero(), |acc, x| acc + dt.get(next.get(x), x));
    let changed = T::from_usize_lossy(next.count_changed(&current));
    *cl_local = next.into_inner();
    Ok(RankIteration {
        block: cl_local.clone(),
        objective,
        changed,
    })
}

pub(crate) fn rank_program<T: Scalar>(
    algorithm: Algorithm,
    comm: &mut Comm<'_>,
    points: &DenseMatrix<T>,
    cfg: &FitConfig,
    fault: Option<Fault>,
) -> Result<RankOutput<T>> {
    match algorithm {
        Algorithm::OneD | Algorithm::Hybrid1D => one_d(algorithm, comm, points, cfg, fault),
        Algorithm::OnePointFiveD => one_point_five_d(comm, points, cfg, fault),
        Algorithm::TwoD => two_d(comm, points, cfg, fault),
    }
}

/// `K[block i, block j]` by SUMMA over contiguous blocks.
fn summa_contiguous<T: Scalar>(comm: &mut Comm<'_>, points: &DenseMatrix<T>, cfg: &FitConfig) -> Result<DenseMatrix<T>> {
    let grid = comm.grid().clone();
    let (n, d, q) = (points.rows(), points.cols(), grid.side());
    let (i, j) = grid.coords(comm.rank());
    let a = points.block(even_block(n, q, i), ceil_chunk(d, q, j));
    let b = points.block(even_block(n, q, j), ceil_chunk(d, q, i));
    kernel::summa_gemm(comm, &a, &b, d, &cfg.kernel)
}

fn one_d<T: Scalar>(
    algorithm: Algorithm,
    comm: &mut Comm<'_>,
    points: &DenseMatrix<T>,
    cfg: &FitConfig,
    fault: Option<Fault>,
) -> Result<RankOutput<T>> {
    let (n, p, rank) = (points.rows(), comm.grid().ranks(), comm.rank());
    let own = even_block(n, p, rank);
    let k_block = if algorithm == Algorithm::OneD {
        kernel::gemm_1d(comm, &points.row_range(own.clone()), &cfg.kernel)?
    } else {
        let tile = summa_contiguous(comm, points, cfg)?;
        kernel::redistribute_2d_to_1d(comm, &tile, n)?
    };
    let world = comm.grid().world();
    let mut cl_local = round_robin_block(own.clone(), cfg.k);
    drive(comm, cfg, n, |comm| {
        comm.set_phase(phase::V_EXCHANGE);
        let cl_all = Assignments::new(comm.allgatherv(&world, cl_local.clone())?);
        let v = build_assignment_matrix::<T>(&cl_all, cfg.k)?;
        let sizes = cluster_sizes(cl_all.as_slice(), cfg.k);
        let et = spmm(&v, &k_block, 0)?;
        update_1d(comm, &et, &mut cl_local, &v, own.start, &sizes, fault)
    })
}

fn one_point_five_d<T: Scalar>(
    comm: &mut Comm<'_>,
    points: &DenseMatrix<T>,
    cfg: &FitConfig,
    fault: Option<Fault>,
) -> Result<RankOutput<T>> {
    let (n, p, rank) = (points.rows(), comm.grid().ranks(), comm.rank());
    let k_tile = summa_contiguous(comm, points, cfg)?;
    let mut cl_local = round_robin_block(even_block(n, p, rank), cfg.k);
    let nnz = n / comm.grid().side();
    drive(comm, cfg, nnz, |comm| {
        let out = spmm_15d(comm, &cl_local, &k_tile, cfg.k, fault)?;
        let v = CscMatrix::<T>::assignment_with_sizes(&cl_local, &out.sizes)?;
        update_1d(comm, &out.et, &mut cl_local, &v, 0, &out.sizes, None)
    })
}

fn two_d<T: Scalar>(
    comm: &mut Comm<'_>,
    points: &DenseMatrix<T>,
    cfg: &FitConfig,
    fault: Option<Fault>,
) -> Result<RankOutput<T>> {
    let grid = comm.grid().clone();
    let (n, d, q, k) = (points.rows(), points.cols(), grid.side(), cfg.k);
    let (nq, kq) = (n / q, k / q);
    let nb = nq / q;
    let (i, j) = grid.coords(comm.rank());

    let a = points
        .select_rows(&strided_rows(n, q, i))
        .column_range(ceil_chunk(d, q, j));
    let b = points.block(even_block(n, q, j), ceil_chunk(d, q, i));
    let k_tile = kernel::summa_gemm(comm, &a, &b, d, &cfg.kernel)?;

    let clusters = i * kq..(i + 1) * kq;
    let mut cl_col = round_robin_block(even_block(n, q, j), k);
    let mut sizes = round_robin_sizes(n, k);
    drive(comm, cfg, nq, |comm| {
        let (et, _) = spmm_2d_bstationary(comm, &cl_col, &sizes, &k_tile, fault)?;

        // Partial c over this rank's cluster block and point block.
        let v_col = CscMatrix::<T>::assignment_with_sizes(&cl_col, &sizes)?;
        let mut c_part = vec![T::zero(); kq];
        for x in 0..nq {
            for (c, val) in v_col.column(x) {
                if clusters.contains(&c) {
                    c_part[c - clusters.start] += val * et.get(c - clusters.start, x);
                }
            }
        }
        comm.set_phase(phase::C_ALLREDUCE);
        let mut c = comm.allreduce_sum(&grid.row_group(i), c_part)?;
        mark_empty_clusters(&mut c, &sizes[clusters.clone()]);
        let dt = compute_distances(&et, &c)?;
        let local_arg = argmin_rows(&dt);
        let local: Vec<MinLoc<T>> = (0..nq)
            .map(|x| {
                let r = local_arg.get(x);
                MinLoc {
                    value: dt.get(r, x),
                    index: (clusters.start + r) as u32,
                }
            })
            .collect();

        comm.set_phase(phase::ASSIGN_UPDATE);
        let best = comm.allreduce_minloc(&grid.col_group(j), local)?;
        let next: Vec<u32> = best.iter().map(|m| m.index).collect();
        sizes = comm
            .allreduce_sum(&grid.row_group(i), local_counts(&next, k))?
            .into_iter()
            .map(|s| s as usize)
            .collect();
        let (objective, changed) = if i == 0 {
            (
                best.iter().fold(T::zero(), |acc, m| acc + m.value),
                T::from_usize_lossy(next.iter().zip(&cl_col).filter(|(a, b)| a != b).count()),
            )
        } else {
            (T::zero(), T::zero())
        };
        cl_col = next;
        Ok(RankIteration {
            block: cl_col[i * nb..(i + 1) * nb].to_vec(),
            objective,
            changed,
        })
    })
}
