//! Distributed Kernel K-means schedules run as rank programs on the fabric.
//!
//! | algorithm | `K` construction          | per-iteration `Eᵀ`                                   |
//! |-----------|---------------------------|------------------------------------------------------|
//! | 1D        | allgather + local GEMM    | allgather `V`, local SpMM                            |
//! | Hybrid-1D | SUMMA + alltoallv to 1D   | as 1D                                                |
//! | 1.5D      | SUMMA                     | `V` along rows, SpMM, reduce-scatter down columns    |
//! | 2D        | SUMMA (strided rows)      | `V` along rows, SpMM, reduce-scatter by cluster rows |
//!
//! All four start from round-robin assignments and produce the same
//! iteration-by-iteration assignments as [`crate::oracle::fit_full`] on
//! instances whose distance margins exceed rounding noise.

mod kernel;
mod schedules;
mod tiles;

pub use kernel::{gemm_1d, redistribute_2d_to_1d, summa_gemm};
pub use schedules::{spmm_15d, spmm_2d_bstationary, Spmm15d};
pub use tiles::{ceil_chunk, even_block, strided_rows, TileMap, TileScheme};

use std::fmt;
use std::str::FromStr;

use crate::error::{KkmError, Result};
use crate::fabric::{run_ranks, CommLedger, Grid, Schedule};
use crate::linalg::{Assignments, DenseMatrix};
use crate::oracle::{ClusterTrace, FitConfig, IterationRecord};
use crate::Scalar;

/// Ledger phase labels.
pub mod phase {
    pub const K_COMPUTE: &str = "K-compute";
    pub const K_REDISTRIBUTE: &str = "K-redistribute";
    pub const V_EXCHANGE: &str = "V-exchange";
    pub const E_REDUCE: &str = "E-reduce";
    pub const C_ALLREDUCE: &str = "c-allreduce";
    pub const ASSIGN_UPDATE: &str = "assign-update";
    /// Bookkeeping: world sum of the objective and the change count.
    pub const OBJECTIVE: &str = "objective";

    /// The algorithm phases, in execution order.
    pub const STANDARD: [&str; 6] = [K_COMPUTE, K_REDISTRIBUTE, V_EXCHANGE, E_REDUCE, C_ALLREDUCE, ASSIGN_UPDATE];
    /// Phases that repeat every iteration.
    pub const PER_ITERATION: [&str; 5] = [V_EXCHANGE, E_REDUCE, C_ALLREDUCE, ASSIGN_UPDATE, OBJECTIVE];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    OneD,
    Hybrid1D,
    OnePointFiveD,
    TwoD,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::OneD, Algorithm::Hybrid1D, Algorithm::OnePointFiveD, Algorithm::TwoD];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::OneD => "1d",
            Algorithm::Hybrid1D => "h1d",
            Algorithm::OnePointFiveD => "1.5d",
            Algorithm::TwoD => "2d",
        }
    }

    /// Whether the algorithm runs on a square `q×q` grid.
    pub fn uses_square_grid(self) -> bool {
        self != Algorithm::OneD
    }

    pub fn grid(self, ranks: usize) -> Result<Grid> {
        let grid = if self.uses_square_grid() {
            Grid::two_d(ranks)
        } else {
            Grid::one_d(ranks)
        };
        grid.map_err(|e| KkmError::Divisibility(e.to_string()))
    }

    /// Checks the partitioning preconditions for `n` points, `k` clusters and
    /// `ranks` ranks.
    pub fn check(self, n: usize, k: usize, ranks: usize) -> Result<()> {
        if ranks == 0 {
            return Err(KkmError::Divisibility("at least one rank is required".into()));
        }
        if n < k {
            return Err(KkmError::InvalidConfig(format!("{n} points cannot fill {k} clusters")));
        }
        if !n.is_multiple_of(ranks) {
            return Err(KkmError::Divisibility(format!("P={ranks} does not divide n={n}")));
        }
        if self.uses_square_grid() {
            let q = self.grid(ranks)?.side();
            if !k.is_multiple_of(q) {
                return Err(KkmError::Divisibility(format!("grid side {q} does not divide k={k}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = KkmError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| KkmError::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

/// Deliberate schedule corruptions for negative-control testing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Keep the local partial instead of reducing it across ranks: `Eᵀ` on
    /// the grid schedules, `c` on the 1D ones (their `Eᵀ` is never reduced).
    SkipEReduce,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DistOptions {
    pub schedule: Schedule,
    pub fault: Option<Fault>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistRunResult<T> {
    pub trace: ClusterTrace<T>,
    pub ledger: CommLedger,
    /// Nonzeros of `V` each rank's local SpMM consumed per iteration.
    pub spmm_nnz: Vec<usize>,
}

/// Runs a distributed schedule on `ranks` virtual ranks. Each rank starts
/// holding only the points and kernel entries its partitioning assigns it.
pub fn run_clustering<T: Scalar>(
    algorithm: Algorithm,
    points: &DenseMatrix<T>,
    cfg: &FitConfig,
    ranks: usize,
    opts: &DistOptions,
) -> Result<DistRunResult<T>> {
    let n = points.rows();
    cfg.validate(n)?;
    algorithm.check(n, cfg.k, ranks)?;
    if !points.is_finite() {
        return Err(KkmError::NonFinite { op: "run_clustering" });
    }
    let grid = algorithm.grid(ranks)?;
    let out = run_ranks(&grid, opts.schedule, |comm| {
        schedules::rank_program(algorithm, comm, points, cfg, opts.fault)
    })?;

    let iterations = out.results[0].iterations.len();
    let mut trace = ClusterTrace {
        iterations: Vec::with_capacity(iterations),
        converged: false,
        kernel_blocks_per_iteration: 1,
    };
    for t in 0..iterations {
        let labels: Vec<u32> = out
            .results
            .iter()
            .flat_map(|r| r.iterations[t].block.iter().copied())
            .collect();
        let head = &out.results[0].iterations[t];
        let changed = head.changed.to_usize().unwrap_or(usize::MAX);
        trace.converged |= changed == 0;
        trace.iterations.push(IterationRecord {
            assignments: Assignments::new(labels),
            shifted_objective: head.objective,
            changed,
            min_margin: None,
        });
    }
    Ok(DistRunResult {
        trace,
        ledger: out.ledger,
        spmm_nnz: out.results.iter().map(|r| r.spmm_nnz).collect(),
    })
}
