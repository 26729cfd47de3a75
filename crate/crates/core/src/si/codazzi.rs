//! Codazzi tensors, structure functions `B`, `C`, their gauge and the structure connection.

use super::ops::{add, alt, axpy, co, ein, sub, sym, tf};
use super::structure::reassemble_t;
use super::{derived_tensors, Result, SiError, StructureData};
use crate::expr::{Expr, Jet, Params};
use crate::geometry::{GeometryData, MetricModel};
use crate::tensor::DenseTensor;

/// Codazzi tensors built from the scalars `B` and `C` at one point.
#[derive(Debug, Clone)]
pub struct CodazziData {
    /// `C_ij = C_,ij + κ C g_ij`.
    pub c2: DenseTensor,
    /// `B_ijk = ⅙ sym[B_,ijk + 4κ g_ij B_,k]`.
    pub b3: DenseTensor,
    /// `B_,i`, `B_,ij`, … as far as the jet allows (at most four).
    pub b_covs: Vec<DenseTensor>,
    /// `C_,i`, `C_,ij`, … as far as the jet allows (at most four).
    pub c_covs: Vec<DenseTensor>,
    /// `C` at the point.
    pub c_value: f64,
}

impl CodazziData {
    /// `Φ = (tr C_ij − tr Z)/n`.
    pub fn trace_potential(&self, z: &DenseTensor, gd: &GeometryData) -> f64 {
        let d = sub(&self.c2, z);
        ein("ij,ij->", &[&d, &gd.ginv]).value() / gd.dim() as f64
    }

    /// Deviation of `C_ij` from `Z_ij + Φ g_ij`.
    pub fn trace_modification_defect(&self, z: &DenseTensor, gd: &GeometryData) -> f64 {
        tf(&sub(&self.c2, z), None, gd).max_abs()
    }
}

pub fn codazzi_from_scalars(b: &Jet, c: &Jet, gd: &GeometryData) -> Result<CodazziData> {
    if b.order() < 3 {
        return Err(SiError::InsufficientOrder { have: b.order(), need: 3 });
    }
    if c.order() < 2 {
        return Err(SiError::InsufficientOrder { have: c.order(), need: 2 });
    }
    let kappa = gd.kappa;
    let b_covs: Vec<DenseTensor> = gd.covariant_derivatives(b, b.order().min(4))?.into_iter().map(co).collect();
    let c_covs: Vec<DenseTensor> = gd.covariant_derivatives(c, c.order().min(4))?.into_iter().map(co).collect();
    let c2 = axpy(&c_covs[1], kappa * c.value(), &gd.g);
    let b3 = sym(&axpy(&b_covs[2], 4.0 * kappa, &ein("ij,k->ijk", &[&gd.g, &b_covs[0]])), &[0, 1, 2]).scale(1.0 / 6.0);
    Ok(CodazziData { c2, b3, b_covs, c_covs, c_value: c.value() })
}

/// `B_ijk,l = ⅙ sym_(ijk)[B_,ijkl + 4κ g_ij B_,kl]`.
pub fn codazzi_derivative(cd: &CodazziData, gd: &GeometryData) -> Result<DenseTensor> {
    let b4 = cd.b_covs.get(3).ok_or(SiError::InsufficientOrder { have: cd.b_covs.len(), need: 4 })?;
    let e = axpy(b4, 4.0 * gd.kappa, &ein("ij,kl->ijkl", &[&gd.g, &cd.b_covs[1]]));
    Ok(sym(&e, &[0, 1, 2]).scale(1.0 / 6.0))
}

/// Structure tensor from the structure functions on a constant-curvature space.
///
/// `T̊ = ⅙ (sym B_,ijk)∘` and
/// `t̄_k = (ΔB_,k + 2(n+1)R/(n(n−1)) B_,k − (n+2)/(n−2) C_,k)/(n+2)`.
/// With order-4 `B` and order-2 `C` jets, `∇T` and the tensors depending on it are filled too.
pub fn structure_from_bc(b: &Jet, c: &Jet, gd: &GeometryData) -> Result<StructureData> {
    if !gd.is_constant_curvature() {
        return Err(SiError::NonConstantCurvature);
    }
    if b.order() < 3 {
        return Err(SiError::InsufficientOrder { have: b.order(), need: 3 });
    }
    if c.order() < 1 {
        return Err(SiError::InsufficientOrder { have: c.order(), need: 1 });
    }
    let n = gd.dim() as f64;
    let r = gd.scalar;
    let bc: Vec<DenseTensor> = gd.covariant_derivatives(b, b.order().min(4))?.into_iter().map(co).collect();
    let cc: Vec<DenseTensor> = gd.covariant_derivatives(c, c.order().min(2))?.into_iter().map(co).collect();
    let rb = 2.0 * (n + 1.0) * r / (n * (n - 1.0));
    let cf = -(n + 2.0) / (n - 2.0);

    let t0 = tf(&sym(&bc[2], &[0, 1, 2]), None, gd).scale(1.0 / 6.0);
    let tbar = axpy(&axpy(&ein("ab,abk->k", &[&gd.ginv, &bc[2]]), rb, &bc[0]), cf, &cc[0]).scale(1.0 / (n + 2.0));
    let sd = StructureData::from_t(reassemble_t(&t0, &tbar, gd), gd)?;

    if bc.len() < 4 || cc.len() < 2 {
        return Ok(sd);
    }
    let dt0 = tf(&sym(&bc[3], &[0, 1, 2]), Some(&[0, 1, 2]), gd).scale(1.0 / 6.0);
    let dtb = axpy(&axpy(&ein("ab,abkl->kl", &[&gd.ginv, &bc[3]]), rb, &bc[1]), cf, &cc[1]).scale(1.0 / (n + 2.0));
    let e = axpy(&ein("il,jk->ijkl", &[&dtb, &gd.g]), -1.0 / n, &ein("ij,kl->ijkl", &[&gd.g, &dtb]));
    let dt = add(&dt0, &sym(&e, &[0, 1]));
    Ok(derived_tensors(&sd, &dt, gd))
}

/// The structure functions of a system as expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureFunctions {
    pub b: Expr,
    pub c: Expr,
    pub params: Params,
}

impl StructureFunctions {
    pub fn jets(&self, point: &[f64], b_order: usize, c_order: usize) -> Result<(Jet, Jet)> {
        Ok((self.b.eval_jet(point, &self.params, b_order)?, self.c.eval_jet(point, &self.params, c_order)?))
    }
}

/// Subtract the gauge polynomials that make `C`, `∇C`, `ΔC`, `B`, `∇B` and `∇∇B`
/// vanish at `x0` (flat metric only).
///
/// With `r = x − x0`: `δC = 2(n−2)(½c₂r² + c₁·r + c₀)` and
/// `δB = ¼c₂r⁴ + r²(c₁·r) + rᵀAr + b₁·r + b₀`.
pub fn gauge_normalize(sf: &StructureFunctions, metric: &MetricModel, x0: &[f64]) -> Result<StructureFunctions> {
    if !metric.is_euclidean() {
        return Err(SiError::UnsupportedGauge);
    }
    let n = metric.dim;
    let nf = n as f64;
    let bj = sf.b.eval_jet(x0, &sf.params, 2)?;
    let cj = sf.c.eval_jet(x0, &sf.params, 2)?;
    let k = 2.0 * (nf - 2.0);
    let c0 = cj.value() / k;
    let c1: Vec<f64> = (0..n).map(|i| cj.partial(&[i]) / k).collect();
    let c2 = (0..n).map(|i| cj.partial(&[i, i])).sum::<f64>() / (nf * k);

    let r: Vec<Expr> = (0..n).map(|i| Expr::coord(i) - Expr::num(x0[i])).collect();
    let r2 = Expr::sum(r.iter().map(|ri| ri.clone().powi(2)));
    let dot = |v: &[f64]| Expr::sum(v.iter().zip(&r).map(|(&c, ri)| Expr::num(c) * ri.clone()));

    let dc = Expr::num(k) * (Expr::num(0.5 * c2) * r2.clone() + dot(&c1) + Expr::num(c0));
    let b1: Vec<f64> = (0..n).map(|i| bj.partial(&[i])).collect();
    let mut quad = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let a = 0.5 * bj.partial(&[i, j]);
            if a != 0.0 {
                quad.push(Expr::num(a) * r[i].clone() * r[j].clone());
            }
        }
    }
    let db = Expr::num(0.25 * c2) * r2.clone().powi(2)
        + r2 * dot(&c1)
        + Expr::sum(quad)
        + dot(&b1)
        + Expr::num(bj.value());
    Ok(StructureFunctions { b: sf.b.clone() - db, c: sf.c.clone() - dc, params: sf.params.clone() })
}

/// Deformation `A_ijk` and curvature `R̂^i_jkl` of the structure connection.
#[derive(Debug, Clone)]
pub struct StructureConnection {
    pub a: DenseTensor,
    /// Curvature from `∇A`.
    pub rhat: DenseTensor,
    /// Curvature from the closed form in `B_ijk` and `C` derivatives.
    pub rhat_closed: DenseTensor,
}

impl StructureConnection {
    /// `R̂_ijkl = g_im R̂^m_jkl`.
    pub fn lowered(&self, gd: &GeometryData) -> DenseTensor {
        ein("im,mjkl->ijkl", &[&gd.g, &self.rhat])
    }
}

/// `A = −⅓B_ijk + sym(g_ij C_,k)/(6(n−2))` and `R̂ = R + alt_(k,l)[∇_k A^i_jl + A^i_mk A^m_jl]`.
pub fn structure_connection(cd: &CodazziData, gd: &GeometryData) -> Result<StructureConnection> {
    if !gd.is_constant_curvature() {
        return Err(SiError::NonConstantCurvature);
    }
    if cd.c_covs.len() < 2 {
        return Err(SiError::InsufficientOrder { have: cd.c_covs.len(), need: 2 });
    }
    let n = gd.dim() as f64;
    let g = &gd.g;
    let gi = &gd.ginv;
    let (c1, c2) = (&cd.c_covs[0], &cd.c_covs[1]);
    let cf = 1.0 / (6.0 * (n - 2.0));
    let a = axpy(&cd.b3.scale(-1.0 / 3.0), cf, &sym(&ein("ij,k->ijk", &[g, c1]), &[0, 1, 2]));
    let db = codazzi_derivative(cd, gd)?;
    let da = axpy(&db.scale(-1.0 / 3.0), cf, &sym(&ein("ij,kl->ijkl", &[g, c2]), &[0, 1, 2]));
    let rup = co(gd.riemann_up.clone());

    let au = ein("ia,ajl->ijl", &[gi, &a]);
    let dau = ein("ia,ajlk->ijkl", &[gi, &da]);
    let x = add(&dau, &ein("imk,mjl->ijkl", &[&au, &au]));
    let rhat = add(&rup, &alt(&x, &[2, 3]));

    let d = DenseTensor::kronecker(gd.dim());
    let b = &cd.b3;
    let bu = ein("ia,akl->ikl", &[gi, b]);
    let cu = ein("ab,b->a", &[gi, c1]);
    let c2u = ein("ia,ak->ik", &[gi, c2]);
    let cc = ein("a,a->", &[&cu, c1]).value();
    let n2 = n - 2.0;
    let mut y = ein("ika,ajl->ijkl", &[&bu, &bu]);
    y = add(&y, &sub(&ein("a,il,jak->ijkl", &[&cu, &d, b]), &ein("a,jl,iak->ijkl", &[&cu, g, &bu])).scale(1.0 / n2));
    y = add(&y, &add(&ein("il,jk->ijkl", &[&d, c2]), &ein("jl,ik->ijkl", &[g, &c2u])).scale(3.0 / n2));
    let quad = add(
        &sub(&ein("ik,j,l->ijkl", &[&d, c1, c1]), &ein("jk,i,l->ijkl", &[g, &cu, c1])),
        &ein("ik,jl->ijkl", &[&d, g]).scale(cc),
    );
    y = add(&y, &quad.scale(1.0 / (n2 * n2)));
    let rhat_closed = add(&rup, &alt(&y, &[2, 3]).scale(1.0 / 9.0));
    Ok(StructureConnection { a, rhat, rhat_closed })
}
