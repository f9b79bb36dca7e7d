//! Local (single-rank) kernels for the linear-algebraic formulation of
//! Kernel K-means:
//!
//! ```text
//! B  = P Pᵀ                 gemm_nt
//! K  = κ(B) elementwise     apply_kernel
//! Eᵀ = V K                  spmm
//! z  = mask(Eᵀ, cl)         mask_select
//! c  = V z                  spmv
//! Dᵀ = -2 Eᵀ + c 1ᵀ         compute_distances
//! cl = argmin over clusters argmin_rows
//! ```
//!
//! Dense matrices are row-major, the assignment matrix `V` is stored in
//! compressed-sparse-column form with exactly one nonzero per column.

mod csc;
mod dense;
mod kernel;
mod ops;

pub use csc::{build_assignment_matrix, CscMatrix};
pub use dense::DenseMatrix;
pub use kernel::{apply_kernel, apply_kernel_in_place, KernelSpec};
pub use ops::{
    argmin_rows, cluster_sizes, compute_distances, gemm_nt, gemm_nt_accumulate, mask_select,
    mark_empty_clusters, shifted_objective, spmm, spmv,
};

use crate::error::{KkmError, Result};

/// Cluster label per point; `cl[j] = i` means point `j` belongs to cluster `i`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Assignments(Vec<u32>);

impl Assignments {
    pub fn new(labels: Vec<u32>) -> Self {
        Self(labels)
    }

    /// Builds assignments and checks every label is below `k`.
    pub fn with_k(labels: Vec<u32>, k: usize) -> Result<Self> {
        let a = Self(labels);
        a.validate(k)?;
        Ok(a)
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match self.0.iter().position(|&l| l as usize >= k) {
            Some(position) => Err(KkmError::LabelOutOfRange {
                position,
                label: self.0[position] as usize,
                k,
            }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u32> {
        self.0
    }

    pub fn get(&self, j: usize) -> usize {
        self.0[j] as usize
    }

    /// Number of positions where `self` and `other` disagree.
    pub fn count_changed(&self, other: &Assignments) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl From<Vec<u32>> for Assignments {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}
