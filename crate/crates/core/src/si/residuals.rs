//! Integrability residuals, prolongations and the predicted derivative of `T`.

use super::ops::{add, alt, axpy, co, ein, ein6, hook, sub, sym, tf, weyl_part};
use super::{KillingData, ResidualMap, Result, SiError, StructureData};
use crate::geometry::GeometryData;
use crate::tensor::{riemann_project, DenseTensor};

/// Covariant derivatives `V_,i`, `V_,ij` and optionally `V_,ijk` of one potential.
#[derive(Debug, Clone)]
pub struct PotentialCovs {
    pub v1: DenseTensor,
    pub v2: DenseTensor,
    pub v3: Option<DenseTensor>,
}

impl PotentialCovs {
    pub fn laplacian(&self, gd: &GeometryData) -> f64 {
        ein("ij,ij->", &[&self.v2, &gd.ginv]).value()
    }
}

fn need_q(sd: &StructureData) -> Result<(&DenseTensor, &DenseTensor, &DenseTensor)> {
    match (&sd.q_full, &sd.q, &sd.grad) {
        (Some(qf), Some(q), Some(g)) => Ok((qf, q, g)),
        _ => Err(SiError::MissingGradient),
    }
}

/// Weyl part of `⅛ P(T^a_ik T_ajl)` with `P` the Riemann projector.
fn projected_tt_weyl(t: &DenseTensor, gd: &GeometryData) -> DenseTensor {
    let e = ein("aik,ab,bjl->ijkl", &[t, &gd.ginv, t]);
    let p = riemann_project(&e).expect("rank 4").scale(0.125);
    weyl_part(&p, gd)
}

/// Residuals of the potential integrability conditions (needs `∇T`).
///
/// Keys: `linear`, `quadratic`, `symmetries`, `weyl`, `differential`, `q_symmetry`.
pub fn sic_v_residuals(sd: &StructureData, gd: &GeometryData) -> Result<ResidualMap> {
    let (qf, q, dt) = need_q(sd)?;
    let n = gd.dim() as f64;
    let g = &gd.g;
    let mut out = ResidualMap::new();

    let lin = axpy(&sd.t, 1.0 / (n - 1.0), &ein("ij,k->ijk", &[g, &sd.t_trace]));
    out.insert("linear".into(), alt(&lin, &[1, 2]).max_abs());

    let ql = ein("km,ml->kl", &[q, g]);
    let quad = axpy(&ein("ijkm,ml->ijkl", &[qf, g]), 1.0 / (n - 1.0), &ein("ij,kl->ijkl", &[g, &ql]));
    out.insert("quadratic".into(), alt(&quad, &[1, 2]).max_abs());

    let hooked = alt(&sym(&sd.t, &[1, 0]), &[1, 2]);
    out.insert("symmetries".into(), tf(&hooked, None, gd).max_abs());

    let w = co(gd.weyl.clone());
    out.insert("weyl".into(), sub(&projected_tt_weyl(&sd.t, gd), &w).max_abs());

    let f = axpy(dt, 2.0 / (n - 2.0), &ein("ik,jl->ijkl", &[g, &sd.z]));
    out.insert("differential".into(), sym(&alt(&f, &[2, 3]), &[0, 1, 2]).max_abs());

    out.insert("q_symmetry".into(), sub(&ql, &ql.permute(&[1, 0])?).max_abs());
    Ok(out)
}

/// Cubic condition `alt_(k,l)[q_k^n_,l + T_ml^n q_k^m + t_k q_l^n/(n−1)]`, with `∇q`
/// taken by the fourth-order central difference of `q_at` (returning `q_j^m`) with step `h`.
pub fn sic_v_cubic_residual(
    sd: &StructureData,
    gd: &GeometryData,
    q_at: impl Fn(&[f64]) -> Result<DenseTensor>,
    h: f64,
) -> Result<f64> {
    let (_, q, _) = need_q(sd)?;
    let n = gd.dim();
    let mut dq = DenseTensor::covariant(n, 3)?;
    for l in 0..n {
        let at = |s: f64| {
            let mut p = gd.point.clone();
            p[l] += s * h;
            q_at(&p)
        };
        let (p1, m1, p2, m2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
        for k in 0..n {
            for m in 0..n {
                let d1 = p1.get(&[k, m]) - m1.get(&[k, m]);
                let d2 = p2.get(&[k, m]) - m2.get(&[k, m]);
                dq.set(&[k, m, l], (8.0 * d1 - d2) / (12.0 * h));
            }
        }
    }
    let gam = &gd.christoffel;
    let cq = add(&sub(&dq, &ein("mlk,mn->knl", &[gam, q])), &ein("nlm,km->knl", &[gam, q]));
    let tu = ein("mlb,nb->mln", &[&sd.t, &gd.ginv]);
    let f = add(&cq, &ein("mln,km->knl", &[&tu, q]));
    let f = axpy(&f, 1.0 / (n as f64 - 1.0), &ein("k,ln->knl", &[&sd.t_trace, q]));
    Ok(sub(&f, &ein("knl->lnk", &[&f])).max_abs())
}

/// Residuals of the Killing-tensor integrability conditions.
///
/// Keys: `weyl`, `ricci`, `one_index`, and on constant curvature
/// `cc_weyl`, `cc_ricci`, `cc_scalar`.
pub fn sic_k_residuals(sd: &StructureData, gd: &GeometryData) -> ResidualMap {
    let n = gd.dim() as f64;
    let gi = &gd.ginv;
    let w = co(gd.weyl.clone());
    let r0 = co(gd.ricci0.clone());
    let mut out = ResidualMap::new();

    let wres = sub(&projected_tt_weyl(&sd.t, gd), &w).max_abs().max(w.max_abs());
    out.insert("weyl".into(), wres);

    let z0 = tf(&sd.z, None, gd);
    out.insert("ricci".into(), axpy(&z0.scale(-0.25), -1.0, &r0).max_abs());

    let t0t0 = sd.t0_norm2(gd);
    let tb2 = sd.tbar_norm2(gd);
    let lhs = sd.tbar.scale((n + 2.0) / (9.0 * n) * (t0t0 - (n + 2.0) * (n - 1.0) * tb2 - 9.0 * gd.scalar));
    let rhs = axpy(
        &axpy(
            &co(gd.scalar_gradient.clone()).scale(-1.0),
            2.0 * (5.0 * n + 2.0) / (3.0 * (n - 2.0)),
            &ein("iab,ac,bd,cd->i", &[&sd.t0, gi, gi, &r0]),
        ),
        -2.0 * (n * n - 2.0 * n + 8.0) / (3.0 * (n - 2.0)),
        &ein("ia,ab,b->i", &[&r0, gi, &sd.tbar]),
    );
    out.insert("one_index".into(), sub(&lhs, &rhs).max_abs());

    if gd.is_constant_curvature() {
        let e0 = ein("ika,ab,jlb->ijkl", &[&sd.t0, gi, &sd.t0]);
        let cc_w = weyl_part(&riemann_project(&e0).expect("rank 4"), gd);
        out.insert("cc_weyl".into(), cc_w.max_abs());
        let zr = add(&sd.z, &co(gd.ricci.clone()));
        out.insert("cc_ricci".into(), tf(&zr, None, gd).max_abs());
        let scalar = t0t0 - (n - 1.0) * (n + 2.0) * tb2 - 9.0 * gd.scalar;
        out.insert("cc_scalar".into(), scalar.abs());
    }
    out
}

/// Polynomial prediction of `∇T` (derivative slot last) from `T̊`, `t̄` and `R`
/// on a constant-curvature space.
pub fn structure_derivative_rhs(sd: &StructureData, gd: &GeometryData) -> DenseTensor {
    let n = gd.dim() as f64;
    let g = &gd.g;
    let gi = &gd.ginv;
    let (t0, tb) = (&sd.t0, &sd.tbar);
    let t0sq = ein("kab,ac,bd,lcd->kl", &[t0, gi, gi, t0]);
    let t0tb = ein("kla,ab,b->kl", &[t0, gi, tb]);
    let tbtb = ein("k,l->kl", &[tb, tb]);

    let dtb = add(&add(&t0sq.scale(-2.0 / (n - 2.0)), &t0tb.scale(3.0)), &tbtb.scale(4.0)).scale(1.0 / 3.0);
    let trace_part = (3.0 * n + 2.0) / (6.0 * (n + 2.0) * (n - 1.0)) * sd.t0_norm2(gd) - (n - 2.0) / 6.0 * sd.tbar_norm2(gd)
        + 3.0 * gd.scalar / (2.0 * (n - 1.0));
    let dtb = axpy(&tf(&dtb, None, gd), trace_part / n, g);

    let t0u = ein("ija,ab->ijb", &[t0, gi]);
    let inner = add(
        &add(&ein("ija,kla->ijkl", &[&t0u, t0]), &ein("ijk,l->ijkl", &[t0, tb])),
        &ein("ijl,k->ijkl", &[t0, tb]).scale(3.0),
    );
    let mixed = axpy(&t0sq.scale(4.0 / (n - 2.0)), -3.0, &t0tb);
    let inner = add(&inner, &ein("ij,kl->ijkl", &[&mixed, g]));
    let s = sym(&inner, &[0, 1, 2]).scale(1.0 / 18.0);
    let dt0 = tf(&s, Some(&[0, 1, 2]), gd);

    let e = axpy(&ein("il,jk->ijkl", &[&dtb, g]), -1.0 / n, &ein("ij,kl->ijkl", &[g, &dtb]));
    add(&dt0, &sym(&e, &[0, 1]))
}

/// `P_ijk^ab = ⅙ sym_(ab) hook[δ^a_k T^b_ji]`; a rank-4 input is read as `∇T`
/// and its derivative slot is carried along as slot 3 of the result.
fn generic_p(t: &DenseTensor, gd: &GeometryData) -> DenseTensor {
    let d = DenseTensor::kronecker(gd.dim());
    if t.rank() == 3 {
        let tu = ein("bc,cji->bji", &[&gd.ginv, t]);
        let e = ein6("ak,bji->ijkab", &[&d, &tu]);
        let e = e.sub(&ein6("ijkab->ikjab", &[&e])).expect("shape");
        let e = e.add(&ein6("ijkab->jikab", &[&e])).expect("shape");
        e.add(&ein6("ijkab->ijkba", &[&e])).expect("shape").scale(1.0 / 6.0)
    } else {
        let tu = ein("bc,cjil->bjil", &[&gd.ginv, t]);
        let e = ein6("ak,bjil->ijklab", &[&d, &tu]);
        let e = e.sub(&ein6("ijklab->ikjlab", &[&e])).expect("shape");
        let e = e.add(&ein6("ijklab->jiklab", &[&e])).expect("shape");
        e.add(&ein6("ijklab->ijklba", &[&e])).expect("shape").scale(1.0 / 6.0)
    }
}

/// Integrability of the Killing prolongation for the full Killing space:
/// `sym_(mn) alt_(kl)[∇_l P_ijk^mn + P_ijk^pq P_pql^mn − ½ sym_(ij) δ^m_i R^n_jkl]`.
pub fn sic_k_generic_residual(sd: &StructureData, gd: &GeometryData) -> Result<f64> {
    let (_, _, dt) = need_q(sd)?;
    let d = DenseTensor::kronecker(gd.dim());
    let p = generic_p(&sd.t, gd);
    let dp = generic_p(dt, gd);
    let pp = ein6("ijkpq,pqlab->ijklab", &[&p, &p]);
    let rt = ein6("mi,njkl->ijklmn", &[&d, &gd.riemann_up]).scale(0.5);
    let rt = rt.add(&ein6("ijklmn->jiklmn", &[&rt])).expect("shape");
    let f = dp.add(&pp).and_then(|x| x.sub(&rt)).expect("shape");
    let f = f.sub(&ein6("ijklmn->ijlkmn", &[&f])).expect("shape");
    let f = f.add(&ein6("ijklmn->ijklnm", &[&f])).expect("shape");
    Ok(f.max_abs())
}

/// Per-Killing-tensor residuals, maximized over the set.
///
/// Keys: `killing`, `prolongation_k`, `bertrand_darboux` (when potentials are
/// given) and `noname` (when second derivatives are available).
pub fn killing_residuals(kd: &KillingData, sd: &StructureData, gd: &GeometryData, pots: &[PotentialCovs]) -> ResidualMap {
    let gi = &gd.ginv;
    let mut out = ResidualMap::new();
    let mut bump = |key: &str, v: f64| {
        let e = out.entry(key.to_string()).or_insert(0.0);
        *e = e.max(v);
    };
    for (a, (k, dk)) in kd.values.iter().zip(&kd.derivs).enumerate() {
        bump("killing", sym(dk, &[0, 1, 2]).max_abs());
        let e = ein("ab,bji,ak->ijk", &[gi, &sd.t, k]);
        bump("prolongation_k", axpy(dk, -1.0 / 3.0, &hook(&e)).max_abs());
        for p in pots {
            let bd = add(&ein("ma,ai,jm->ij", &[gi, k, &p.v2]), &ein("ma,aij,m->ij", &[gi, dk, &p.v1]));
            bump("bertrand_darboux", alt(&bd, &[0, 1]).max_abs());
        }
        if let Some(second) = &kd.second {
            let e = ein("aijk,al->ijkl", &[&gd.riemann_up, k]);
            let inner = add(&second[a], &sym(&e, &[1, 3]));
            bump("noname", sym(&alt(&inner, &[1, 2]), &[0, 3]).max_abs());
        }
    }
    out
}

/// Wilczynski equation and (with `∇T` and third derivatives) the potential prolongation.
///
/// Keys: `wilczynski`, `prolongation_v`.
pub fn potential_residuals(sd: &StructureData, gd: &GeometryData, pots: &[PotentialCovs]) -> ResidualMap {
    let n = gd.dim() as f64;
    let gi = &gd.ginv;
    let mut out = ResidualMap::new();
    for p in pots {
        let lap = p.laplacian(gd);
        let w = axpy(&sub(&p.v2, &ein("ijm,ma,a->ij", &[&sd.t, gi, &p.v1])), -lap / n, &gd.g);
        let e = out.entry("wilczynski".to_string()).or_insert(0.0);
        *e = e.max(w.max_abs());
        if let (Some(v3), Some(q)) = (&p.v3, &sd.q) {
            let dlap = ein("ab,abk->k", &[gi, v3]).scale((n - 1.0) / n);
            let r = axpy(&sub(&dlap, &ein("km,m->k", &[q, &p.v1])), -lap / n, &sd.t_trace);
            let e = out.entry("prolongation_v".to_string()).or_insert(0.0);
            *e = e.max(r.max_abs());
        }
    }
    out
}
