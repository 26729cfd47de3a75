//! Structure tensor, its derived tensors and every integrability residual.
//!
//! Index conventions follow [`crate::geometry`]: the derivative slot of
//! `∇T` is the last one (`dT[i][j][k][l] = T_ijk,l`), and raised indices are
//! produced with `g^{ij}` explicitly.

mod codazzi;
mod residuals;
mod structure;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::ExprError;
use crate::geometry::{GeometryData, GeometryError, JetTensor};
use crate::tensor::{DenseTensor, TensorError};

pub use codazzi::{
    codazzi_derivative, codazzi_from_scalars, gauge_normalize, structure_connection, structure_from_bc, CodazziData,
    StructureConnection, StructureFunctions,
};
pub use residuals::{
    killing_residuals, potential_residuals, sic_k_generic_residual, sic_k_residuals, sic_v_cubic_residual,
    sic_v_residuals, structure_derivative_rhs, PotentialCovs,
};
pub use structure::{
    decompose_t, derived_tensors, irreducibility_check, reassemble_t, solve_structure_tensor,
    solve_structure_tensor_from_potentials, Irreducibility, TDecomposition,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SiError {
    #[error("no Wilczynski structure tensor at this point (relative residual {0:e})")]
    Inconsistent(f64),
    #[error("covariant derivative of the structure tensor not available")]
    MissingGradient,
    #[error("no Killing tensors supplied")]
    NoKillingTensors,
    #[error("tensor lacks the required symmetries (defect {0:e})")]
    SymmetryViolation(f64),
    #[error("metric does not have constant curvature")]
    NonConstantCurvature,
    #[error("gauge normalization needs a flat metric")]
    UnsupportedGauge,
    #[error("jet of order {have} too small, need {need}")]
    InsufficientOrder { have: usize, need: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

pub type Result<T> = std::result::Result<T, SiError>;

/// Named max-abs residuals.
pub type ResidualMap = BTreeMap<String, f64>;

/// Killing tensors `K_ij` with their covariant derivatives at one point.
#[derive(Debug, Clone)]
pub struct KillingData {
    pub values: Vec<DenseTensor>,
    /// `K_ij,k`.
    pub derivs: Vec<DenseTensor>,
    /// `K_ij,kl`, when available.
    pub second: Option<Vec<DenseTensor>>,
}

impl KillingData {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Evaluate covariant fields (lowered Killing tensors as jets) at the point of `gd`.
    pub fn from_fields(fields: &[JetTensor], gd: &GeometryData) -> Result<Self> {
        let mut values = Vec::with_capacity(fields.len());
        let mut derivs = Vec::with_capacity(fields.len());
        let mut second = Vec::with_capacity(fields.len());
        let with_second = fields.iter().all(|f| f.order() >= 2);
        for f in fields {
            values.push(f.value());
            let d = gd.field_derivatives(f, if with_second { 2 } else { 1 })?;
            let mut it = d.into_iter();
            derivs.push(it.next().expect("first derivative"));
            if let Some(s) = it.next() {
                second.push(s);
            }
        }
        Ok(Self { values, derivs, second: with_second.then_some(second) })
    }
}

/// Structure tensor with its decomposition and derived tensors.
#[derive(Debug, Clone)]
pub struct StructureData {
    /// `T_ijk`, symmetric and trace-free in the first two slots.
    pub t: DenseTensor,
    /// Totally symmetric trace-free part `T̊_ijk`.
    pub t0: DenseTensor,
    /// Rescaled trace `t̄_i`.
    pub tbar: DenseTensor,
    /// Trace `t_i = T_ij^i`.
    pub t_trace: DenseTensor,
    /// `Z_ij`.
    pub z: DenseTensor,
    /// `Q_ijk^m` (last slot raised), once `∇T` is known.
    pub q_full: Option<DenseTensor>,
    /// `q_j^m`, once `∇T` is known.
    pub q: Option<DenseTensor>,
    /// `∇T`, when it was obtained analytically.
    pub grad: Option<DenseTensor>,
    pub unique: bool,
    pub kernel_dim: usize,
    /// Relative residual of the linear solve that produced `t`.
    pub solve_residual: f64,
}

/// Terse tensor plumbing shared by the submodules. Index specs are static, so
/// failures here are programming errors rather than input errors.
pub(crate) mod ops {
    use crate::geometry::GeometryData;
    use crate::tensor::{einsum, einsum_wide, DenseTensor, Tableau, Variance};

    pub fn co(t: DenseTensor) -> DenseTensor {
        let r = t.rank();
        t.with_variance(&vec![Variance::Co; r]).expect("variance length")
    }

    pub fn ein(spec: &str, ts: &[&DenseTensor]) -> DenseTensor {
        co(einsum(spec, ts).unwrap_or_else(|e| panic!("einsum '{spec}': {e}")))
    }

    pub fn ein6(spec: &str, ts: &[&DenseTensor]) -> DenseTensor {
        einsum_wide(spec, ts)
    }

    pub fn sym(t: &DenseTensor, slots: &[usize]) -> DenseTensor {
        co(t.clone()).symmetrize(slots).expect("valid slots")
    }

    pub fn alt(t: &DenseTensor, slots: &[usize]) -> DenseTensor {
        co(t.clone()).antisymmetrize(slots).expect("valid slots")
    }

    /// Trace-free part over the listed slots (all slots when `None`).
    pub fn tf(t: &DenseTensor, slots: Option<&[usize]>, gd: &GeometryData) -> DenseTensor {
        let t = co(t.clone());
        let all: Vec<usize> = (0..t.rank()).collect();
        t.trace_free_slots(slots.unwrap_or(&all), &gd.g, &gd.ginv).expect("non-singular metric")
    }

    /// Hook projector with rows `(j i)` and column `(j k)` on a rank-3 tensor.
    pub fn hook(t: &DenseTensor) -> DenseTensor {
        co(t.clone()).young_project(&Tableau::new(vec![vec![1, 0], vec![2]]), false).expect("rank 3")
    }

    pub fn add(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
        a.add(b).expect("same shape")
    }

    pub fn sub(a: &DenseTensor, b: &DenseTensor) -> DenseTensor {
        a.sub(b).expect("same shape")
    }

    pub fn axpy(a: &DenseTensor, c: f64, b: &DenseTensor) -> DenseTensor {
        a.axpy(c, b).expect("same shape")
    }

    /// Full metric contraction `g^{ab}…g^{cd} a_{a…c} b_{b…d}` of two covariant tensors of equal rank.
    pub fn gdot(a: &DenseTensor, b: &DenseTensor, gd: &GeometryData) -> f64 {
        let mut up = co(a.clone());
        for s in 0..up.rank() {
            up = up.raise(s, &gd.ginv).expect("covariant slot");
        }
        up.dot(b)
    }

    /// Weyl part of an algebraic curvature tensor.
    pub fn weyl_part(t: &DenseTensor, gd: &GeometryData) -> DenseTensor {
        crate::tensor::ricci_decompose(&co(t.clone()), &gd.g).expect("curvature symmetries").weyl
    }
}
