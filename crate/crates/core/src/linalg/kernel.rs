use crate::error::{KkmError, Result};
use crate::linalg::DenseMatrix;
use crate::Scalar;

/// Elementwise kernel applied to the Gram matrix `B = P Pᵀ`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[derive(Default)]
pub enum KernelSpec {
    /// `K = B`.
    #[default]
    Linear,
    /// `K(i,j) = (gamma * B(i,j) + c)^degree`.
    Polynomial { gamma: f64, c: f64, degree: u32 },
}

impl KernelSpec {
    pub fn polynomial(gamma: f64, c: f64, degree: u32) -> Self {
        KernelSpec::Polynomial { gamma, c, degree }
    }

    #[inline]
    pub fn eval<T: Scalar>(&self, b: T) -> T {
        match *self {
            KernelSpec::Linear => b,
            KernelSpec::Polynomial { gamma, c, degree } => {
                let g = T::from_f64(gamma).unwrap_or_else(T::nan);
                let c = T::from_f64(c).unwrap_or_else(T::nan);
                (g * b + c).powi(degree as i32)
            }
        }
    }
}


/// Applies `spec` in place; fails if any entry becomes non-finite.
pub fn apply_kernel_in_place<T: Scalar>(b: &mut DenseMatrix<T>, spec: &KernelSpec) -> Result<()> {
    if let KernelSpec::Polynomial { .. } = spec {
        for v in b.data_mut() {
            *v = spec.eval(*v);
        }
    }
    if !b.is_finite() {
        return Err(KkmError::NonFinite { op: "apply_kernel" });
    }
    Ok(())
}

pub fn apply_kernel<T: Scalar>(b: &DenseMatrix<T>, spec: &KernelSpec) -> Result<DenseMatrix<T>> {
    let mut k = b.clone();
    apply_kernel_in_place(&mut k, spec)?;
    Ok(k)
}
