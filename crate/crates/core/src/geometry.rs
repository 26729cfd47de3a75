//! Conformally flat metric models and pointwise curvature.
//!
//! Curvature convention: `R^i_jkl = ∂_k Γ^i_lj − ∂_l Γ^i_kj + Γ^i_km Γ^m_lj − Γ^i_lm Γ^m_kj`,
//! `R_ijkl = g_im R^m_jkl`, Ricci `R_jl = R^i_jil`. With it a round sphere has
//! `R_ijkl = κ (g_ik g_jl − g_il g_jk)` with `κ > 0`.
//!
//! Covariant derivatives append their index on the right: `V_,ijk = ∇_k ∇_j ∇_i V`.

use thiserror::Error;

use crate::expr::{Expr, ExprError, Jet, Params};
use crate::tensor::{
    constant_curvature_tensor, inverse_metric, ricci_decompose, DenseTensor, TensorError, Variance,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("metric is singular at the point")]
    SingularMetric,
    #[error("dimension {0} unsupported (need n ≥ 3)")]
    Dimension(usize),
    #[error("point has {got} coordinates, model has dimension {dim}")]
    PointDimension { got: usize, dim: usize },
    #[error("jet of order {have} cannot supply {need} covariant derivatives")]
    InsufficientOrder { have: usize, need: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Order of the metric jet; Christoffel jets carry one order less.
const METRIC_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind {
    Euclidean,
    /// `g = −n(n−1) Σ dx_i² / x_n²`, constant curvature with scalar curvature 1.
    HalfSpaceSphere,
    /// `g = φ Σ dx_i²` for the given factor `φ`.
    Conformal(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricModel {
    pub kind: MetricKind,
    pub dim: usize,
    /// Parameter values used by a conformal factor.
    pub params: Params,
}

impl MetricModel {
    pub fn new(kind: MetricKind, dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(GeometryError::Dimension(dim));
        }
        Ok(Self { kind, dim, params: Params::new() })
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(MetricKind::Euclidean, dim)
    }

    pub fn half_space_sphere(dim: usize) -> Result<Self> {
        Self::new(MetricKind::HalfSpaceSphere, dim)
    }

    pub fn conformal(factor: Expr, dim: usize, params: Params) -> Result<Self> {
        Ok(Self { params, ..Self::new(MetricKind::Conformal(factor), dim)? })
    }

    /// The conformal factor φ with `g = φ δ`.
    pub fn conformal_factor(&self) -> Expr {
        let n = self.dim as f64;
        match &self.kind {
            MetricKind::Euclidean => Expr::Num(1.0),
            MetricKind::HalfSpaceSphere => Expr::num(-n * (n - 1.0)) / Expr::coord(self.dim - 1).powi(2),
            MetricKind::Conformal(e) => e.clone(),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, MetricKind::Euclidean)
    }
}

/// Rank-`r` covariant tensor field given by jets of its components.
#[derive(Debug, Clone)]
pub struct JetTensor {
    dim: usize,
    rank: usize,
    comps: Vec<Jet>,
}

impl JetTensor {
    pub fn new(dim: usize, rank: usize, comps: Vec<Jet>) -> Self {
        assert_eq!(comps.len(), dim.pow(rank as u32));
        Self { dim, rank, comps }
    }

    pub fn scalar(j: Jet) -> Self {
        Self { dim: j.dim(), rank: 0, comps: vec![j] }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.comps.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn comps(&self) -> &[Jet] {
        &self.comps
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.comps[idx.iter().fold(0, |a, &i| a * self.dim + i)]
    }

    /// Values at the base point.
    pub fn value(&self) -> DenseTensor {
        DenseTensor::from_data(self.dim, &vec![Variance::Co; self.rank], self.comps.iter().map(Jet::value).collect())
            .expect("rank within bounds")
    }

    /// `∇` of a covariant field, derivative index appended last.
    pub fn covariant_derivative(&self, gamma: &JetTensor) -> JetTensor {
        let n = self.dim;
        let r = self.rank;
        assert!(self.order() >= 1, "field jet exhausted");
        let mut comps = Vec::with_capacity(self.comps.len() * n);
        let nonzero: Vec<bool> = gamma.comps.iter().map(|g| g.coeffs().iter().any(|&c| c != 0.0)).collect();
        let mut idx = vec![0; r];
        let mut j = vec![0; r];
        for k in 0..self.comps.len() {
            let mut t = k;
            for s in (0..r).rev() {
                idx[s] = t % n;
                t /= n;
            }
            for l in 0..n {
                let mut acc = self.comps[k].derivative(l);
                for s in 0..r {
                    j.copy_from_slice(&idx);
                    for p in 0..n {
                        let gi = (p * n + l) * n + idx[s];
                        if !nonzero[gi] {
                            continue;
                        }
                        j[s] = p;
                        acc = acc.axpy(-1.0, &(&gamma.comps[gi] * self.get(&j)));
                    }
                }
                comps.push(acc);
            }
        }
        JetTensor { dim: n, rank: r + 1, comps }
    }
}

/// Everything pointwise about a metric at one point.
#[derive(Debug, Clone)]
pub struct GeometryData {
    pub point: Vec<f64>,
    pub g: DenseTensor,
    pub ginv: DenseTensor,
    /// `Γ^i_jk`.
    pub christoffel: DenseTensor,
    /// `R^i_jkl`.
    pub riemann_up: DenseTensor,
    /// `R_ijkl`.
    pub riemann: DenseTensor,
    pub ricci: DenseTensor,
    pub ricci0: DenseTensor,
    pub scalar: f64,
    pub weyl: DenseTensor,
    /// Sectional curvature `R/(n(n−1))`.
    pub kappa: f64,
    /// Gradient `R_,i` of the scalar curvature.
    pub scalar_gradient: DenseTensor,
    metric_jets: JetTensor,
    gamma_jets: Vec<Jet>,
    euclidean: bool,
}

impl GeometryData {
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// Jets of `g_ij` (order 3) at the point.
    pub fn metric_jets(&self) -> &JetTensor {
        &self.metric_jets
    }

    /// `Γ^i_jk` jets (order 2) arranged as a rank-3 jet tensor.
    pub fn christoffel_jets(&self) -> JetTensor {
        JetTensor::new(self.dim(), 3, self.gamma_jets.clone())
    }

    pub fn is_euclidean(&self) -> bool {
        self.euclidean
    }

    /// Deviation of `R_ijkl` from the constant-curvature form, relative to its size.
    pub fn constant_curvature_defect(&self) -> f64 {
        let cc = constant_curvature_tensor(&self.g, self.kappa);
        let scale = self.riemann.max_abs().max(1e-300);
        if self.riemann.max_abs() == 0.0 {
            return 0.0;
        }
        self.riemann.max_diff(&cc) / scale
    }

    pub fn is_constant_curvature(&self) -> bool {
        self.constant_curvature_defect() < 1e-9 && self.scalar_gradient.max_abs() < 1e-9 * self.scalar.abs().max(1.0)
    }

    /// Covariant derivatives `V_,i`, `V_,ij`, … up to `up_to` (at most the jet order, at most 4).
    pub fn covariant_derivatives(&self, f: &Jet, up_to: usize) -> Result<Vec<DenseTensor>> {
        if f.order() < up_to || up_to > 4 {
            return Err(GeometryError::InsufficientOrder { have: f.order(), need: up_to });
        }
        self.field_derivatives(&JetTensor::scalar(f.clone()), up_to)
    }

    /// Successive covariant derivatives of a covariant field.
    pub fn field_derivatives(&self, field: &JetTensor, up_to: usize) -> Result<Vec<DenseTensor>> {
        if field.order() < up_to {
            return Err(GeometryError::InsufficientOrder { have: field.order(), need: up_to });
        }
        let gamma = self.christoffel_jets();
        let mut cur = field.clone();
        let mut out = Vec::with_capacity(up_to);
        for _ in 0..up_to {
            cur = cur.covariant_derivative(&gamma);
            out.push(cur.value());
        }
        Ok(out)
    }

    /// Lower both indices of a contravariant symmetric field `K^{ab}` given by jets.
    pub fn lower_pair(&self, upper: &[Jet]) -> JetTensor {
        let n = self.dim();
        let g = &self.metric_jets;
        let mut comps = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = Jet::zero(n, upper[0].order().min(METRIC_ORDER));
                for a in 0..n {
                    let gia = g.get(&[i, a]);
                    if gia.coeffs().iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    for b in 0..n {
                        let gjb = g.get(&[j, b]);
                        if gjb.coeffs().iter().all(|&c| c == 0.0) {
                            continue;
                        }
                        acc = &acc + &(&(gia * gjb) * &upper[a * n + b]);
                    }
                }
                comps.push(acc);
            }
        }
        JetTensor::new(n, 2, comps)
    }
}

fn at2(v: &[Jet], n: usize, i: usize, j: usize) -> &Jet {
    &v[i * n + j]
}

/// Evaluate the metric model and all derived curvature quantities at `point`.
pub fn geometry_at(m: &MetricModel, point: &[f64]) -> Result<GeometryData> {
    let n = m.dim;
    if point.len() != n {
        return Err(GeometryError::PointDimension { got: point.len(), dim: n });
    }
    let phi = m.conformal_factor().eval_jet(point, &m.params, METRIC_ORDER)?;
    if phi.value() == 0.0 || !phi.value().is_finite() {
        return Err(GeometryError::SingularMetric);
    }
    let phi_inv = phi.recip();
    let zero = Jet::zero(n, METRIC_ORDER);
    let diag = |j: &Jet| -> Vec<Jet> {
        (0..n * n).map(|k| if k / n == k % n { j.clone() } else { zero.clone() }).collect()
    };
    let g_jets = diag(&phi);
    let gi_jets = diag(&phi_inv);

    // Γ^i_jk = ½ g^{im}(∂_j g_mk + ∂_k g_mj − ∂_m g_jk)
    let mut gamma = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = Jet::zero(n, METRIC_ORDER - 1);
                for mm in 0..n {
                    let gim = at2(&gi_jets, n, i, mm);
                    if gim.value() == 0.0 && gim.coeffs().iter().all(|&c| c == 0.0) {
                        continue;
                    }
                    let s = at2(&g_jets, n, mm, k)
                        .derivative(j)
                        .axpy(1.0, &at2(&g_jets, n, mm, j).derivative(k))
                        .axpy(-1.0, &at2(&g_jets, n, j, k).derivative(mm));
                    acc = acc.axpy(0.5, &(gim * &s));
                }
                gamma.push(acc);
            }
        }
    }
    let gam = |i: usize, j: usize, k: usize| -> &Jet { &gamma[(i * n + j) * n + k] };

    // R^i_jkl as jets of order 1
    let mut riem_up = Vec::with_capacity(n.pow(4));
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = gam(i, l, j).derivative(k).axpy(-1.0, &gam(i, k, j).derivative(l));
                    for mm in 0..n {
                        acc = acc.axpy(1.0, &(gam(i, k, mm) * gam(mm, l, j)));
                        acc = acc.axpy(-1.0, &(gam(i, l, mm) * gam(mm, k, j)));
                    }
                    riem_up.push(acc);
                }
            }
        }
    }
    let ru = |i: usize, j: usize, k: usize, l: usize| -> &Jet { &riem_up[((i * n + j) * n + k) * n + l] };
    // scalar curvature jet: g^{jl} R^i_jil
    let mut scalar_jet = Jet::zero(n, 1);
    for j in 0..n {
        for l in 0..n {
            let gjl = at2(&gi_jets, n, j, l);
            if gjl.coeffs().iter().all(|&c| c == 0.0) {
                continue;
            }
            for i in 0..n {
                scalar_jet = scalar_jet.axpy(1.0, &(gjl * ru(i, j, i, l)));
            }
        }
    }

    let value = |v: &[Jet]| -> Vec<f64> { v.iter().map(Jet::value).collect() };
    let co2 = [Variance::Co; 2];
    let g = DenseTensor::from_data(n, &co2, value(&g_jets))?;
    let ginv = inverse_metric(&g).map_err(|_| GeometryError::SingularMetric)?;
    let christoffel = DenseTensor::from_data(n, &[Variance::Contra, Variance::Co, Variance::Co], value(&gamma))?;
    let riemann_up =
        DenseTensor::from_data(n, &[Variance::Contra, Variance::Co, Variance::Co, Variance::Co], value(&riem_up))?;
    let riemann = riemann_up.lower(0, &g)?;
    let ricci = riemann_up.trace(0, 2, &ginv)?;
    let parts = ricci_decompose(&riemann, &g)?;
    let scalar = parts.scalar;
    let nf = n as f64;
    let scalar_gradient = DenseTensor::vector(&(0..n).map(|l| scalar_jet.partial(&[l])).collect::<Vec<_>>());
    Ok(GeometryData {
        point: point.to_vec(),
        g,
        ginv,
        christoffel,
        riemann_up,
        riemann,
        ricci,
        ricci0: parts.ricci0,
        scalar,
        weyl: parts.weyl,
        kappa: scalar / (nf * (nf - 1.0)),
        scalar_gradient,
        metric_jets: JetTensor::new(n, 2, g_jets),
        gamma_jets: gamma,
        euclidean: m.is_euclidean(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;

    #[test]
    fn euclidean_is_flat() {
        let m = MetricModel::euclidean(4).unwrap();
        let gd = geometry_at(&m, &[0.3, 1.0, -2.0, 5.0]).unwrap();
        assert_eq!(gd.christoffel.max_abs(), 0.0);
        assert_eq!(gd.riemann.max_abs(), 0.0);
        assert_eq!(gd.kappa, 0.0);
    }

    #[test]
    fn sphere_model_at_unit_point() {
        let m = MetricModel::half_space_sphere(3).unwrap();
        let gd = geometry_at(&m, &[1.0, 1.0, 1.0]).unwrap();
        assert!((gd.kappa - 1.0 / 6.0).abs() < 1e-12);
        assert!((gd.scalar - 1.0).abs() < 1e-12);
        assert!(gd.constant_curvature_defect() < 1e-12);
        assert!(gd.is_constant_curvature());
    }

    #[test]
    fn unit_conformal_factor_is_euclidean() {
        let m = MetricModel::conformal(parse("1").unwrap(), 3, Params::new()).unwrap();
        let gd = geometry_at(&m, &[0.5, 0.7, 0.9]).unwrap();
        assert_eq!(gd.christoffel.max_abs(), 0.0);
        assert_eq!(gd.riemann.max_abs(), 0.0);
    }

    #[test]
    fn dimension_two_rejected() {
        assert_eq!(MetricModel::euclidean(2), Err(GeometryError::Dimension(2)));
    }

    #[test]
    fn insufficient_order_reported() {
        let m = MetricModel::euclidean(3).unwrap();
        let gd = geometry_at(&m, &[1.0, 1.0, 1.0]).unwrap();
        let f = parse("x1^2").unwrap().eval_jet(&[1.0, 1.0, 1.0], &Params::new(), 1).unwrap();
        assert!(matches!(gd.covariant_derivatives(&f, 2), Err(GeometryError::InsufficientOrder { .. })));
    }
}
