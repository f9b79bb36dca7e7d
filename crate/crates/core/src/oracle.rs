//! Sequential Kernel K-means: the reference every distributed schedule is
//! compared against.
//!
//! [`fit_full`] materializes the whole kernel matrix; [`fit_sliding_window`]
//! only ever holds an `n×b` column block of it, recomputing blocks every
//! iteration. Both accumulate every sum in the same order, so their traces
//! agree bit for bit.

use crate::error::{KkmError, Result};
use crate::linalg::{
    apply_kernel_in_place, argmin_rows, build_assignment_matrix, cluster_sizes, compute_distances,
    gemm_nt, mark_empty_clusters, mask_select, shifted_objective, spmm, spmv, Assignments,
    DenseMatrix, KernelSpec,
};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub max_iterations: usize,
    pub kernel: KernelSpec,
    /// Stop as soon as an iteration changes no assignment.
    pub stop_on_no_change: bool,
    /// Block width `b` of the sliding window.
    pub window_block: Option<usize>,
}

impl FitConfig {
    pub fn new(k: usize, max_iterations: usize) -> Self {
        Self {
            k,
            max_iterations,
            kernel: KernelSpec::Linear,
            stop_on_no_change: false,
            window_block: None,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 {
            return Err(KkmError::InvalidConfig("k must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(KkmError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.window_block == Some(0) {
            return Err(KkmError::InvalidConfig("window block must be at least 1".into()));
        }
        if n < self.k {
            return Err(KkmError::InvalidConfig(format!(
                "{n} points cannot fill {} clusters",
                self.k
            )));
        }
        Ok(())
    }
}

/// State after one clustering iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<T> {
    /// Assignments chosen by this iteration.
    pub assignments: Assignments,
    /// `Σ_j min_i D(i, j)` against the previous iteration's centroids.
    pub shifted_objective: T,
    /// Points whose cluster changed in this iteration.
    pub changed: usize,
    /// Smallest gap between a point's best and second-best distance
    /// (sequential runs only; `None` when fewer than two clusters are live).
    pub min_margin: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterTrace<T> {
    pub iterations: Vec<IterationRecord<T>>,
    /// Some iteration reproduced its input assignments.
    pub converged: bool,
    /// Kernel blocks computed per iteration (1 when `K` is materialized).
    pub kernel_blocks_per_iteration: usize,
}

impl<T: Scalar> ClusterTrace<T> {
    pub fn iterations_run(&self) -> usize {
        self.iterations.len()
    }

    pub fn final_assignments(&self) -> Option<&Assignments> {
        self.iterations.last().map(|r| &r.assignments)
    }

    pub fn objectives(&self) -> Vec<T> {
        self.iterations.iter().map(|r| r.shifted_objective).collect()
    }

    /// Index of the first iteration whose assignments differ from `other`'s,
    /// or whose lengths differ.
    pub fn first_assignment_divergence(&self, other: &ClusterTrace<T>) -> Option<usize> {
        let common = self.iterations.len().min(other.iterations.len());
        (0..common)
            .find(|&t| self.iterations[t].assignments != other.iterations[t].assignments)
            .or((self.iterations.len() != other.iterations.len()).then_some(common))
    }
}

/// `cl[j] = j mod k`.
pub fn round_robin_init(n: usize, k: usize) -> Result<Assignments> {
    if k == 0 || n < k {
        return Err(KkmError::InvalidConfig(format!(
            "round-robin init needs n >= k >= 1 (n={n}, k={k})"
        )));
    }
    Ok(Assignments::new((0..n).map(|j| (j % k) as u32).collect()))
}

/// Cluster sizes of round-robin initial assignments, without building them.
pub fn round_robin_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

fn min_margin<T: Scalar>(dt: &DenseMatrix<T>) -> Option<T> {
    let mut margin: Option<T> = None;
    for j in 0..dt.cols() {
        let (mut best, mut second) = (T::infinity(), T::infinity());
        for i in 0..dt.rows() {
            let v = dt.get(i, j);
            if v < best {
                second = best;
                best = v;
            } else if v < second {
                second = v;
            }
        }
        if second.is_finite() {
            let gap = second - best;
            margin = Some(margin.map_or(gap, |m| if gap < m { gap } else { m }));
        }
    }
    margin
}

/// Runs the clustering loop given a routine that fills `Eᵀ = V K` for the
/// current assignment matrix.
fn cluster_loop<T: Scalar>(
    points: &DenseMatrix<T>,
    cfg: &FitConfig,
    kernel_blocks: usize,
    mut compute_et: impl FnMut(&crate::linalg::CscMatrix<T>) -> Result<DenseMatrix<T>>,
) -> Result<ClusterTrace<T>> {
    let n = points.rows();
    cfg.validate(n)?;
    if !points.is_finite() {
        return Err(KkmError::NonFinite { op: "fit" });
    }
    let mut cl = round_robin_init(n, cfg.k)?;
    let mut trace = ClusterTrace {
        iterations: Vec::with_capacity(cfg.max_iterations),
        converged: false,
        kernel_blocks_per_iteration: kernel_blocks,
    };
    for _ in 0..cfg.max_iterations {
        let v = build_assignment_matrix::<T>(&cl, cfg.k)?;
        let et = compute_et(&v)?;
        let z = mask_select(&et, &cl)?;
        let mut c = spmv(&v, &z, 0)?;
        mark_empty_clusters(&mut c, &cluster_sizes(cl.as_slice(), cfg.k));
        let dt = compute_distances(&et, &c)?;
        let next = argmin_rows(&dt);
        let changed = next.count_changed(&cl);
        trace.iterations.push(IterationRecord {
            shifted_objective: shifted_objective(&dt, &next),
            changed,
            min_margin: min_margin(&dt),
            assignments: next.clone(),
        });
        cl = next;
        if changed == 0 {
            trace.converged = true;
            if cfg.stop_on_no_change {
                break;
            }
        }
    }
    Ok(trace)
}

/// Full kernel matrix `K = κ(P Pᵀ)`.
pub fn kernel_matrix<T: Scalar>(points: &DenseMatrix<T>, kernel: &KernelSpec) -> Result<DenseMatrix<T>> {
    let mut k = gemm_nt(points, points)?;
    apply_kernel_in_place(&mut k, kernel)?;
    Ok(k)
}

/// Kernel K-means with the full `n×n` kernel matrix held in memory.
pub fn fit_full<T: Scalar>(points: &DenseMatrix<T>, cfg: &FitConfig) -> Result<ClusterTrace<T>> {
    cfg.validate(points.rows())?;
    let kmat = kernel_matrix(points, &cfg.kernel)?;
    cluster_loop(points, cfg, 1, |v| spmm(v, &kmat, 0))
}

/// Kernel K-means that recomputes `K[:, R]` for consecutive column blocks
/// `R` of width `b` each iteration instead of storing `K`.
pub fn fit_sliding_window<T: Scalar>(points: &DenseMatrix<T>, cfg: &FitConfig) -> Result<ClusterTrace<T>> {
    let n = points.rows();
    cfg.validate(n)?;
    let b = cfg
        .window_block
        .ok_or_else(|| KkmError::InvalidConfig("sliding window needs a block width".into()))?;
    if b > n {
        return Err(KkmError::InvalidConfig(format!(
            "window block {b} exceeds the number of points {n}"
        )));
    }
    let blocks = n.div_ceil(b);
    cluster_loop(points, cfg, blocks, |v| {
        let mut et = DenseMatrix::zeros(cfg.k, n);
        for blk in 0..blocks {
            let cols = blk * b..((blk + 1) * b).min(n);
            let mut kblk = gemm_nt(points, &points.row_range(cols.clone()))?;
            apply_kernel_in_place(&mut kblk, &cfg.kernel)?;
            let part = spmm(v, &kblk, 0)?;
            for i in 0..cfg.k {
                et.row_mut(i)[cols.clone()].copy_from_slice(part.row(i));
            }
        }
        Ok(et)
    })
}
