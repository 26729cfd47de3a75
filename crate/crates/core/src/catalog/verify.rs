//! Pointwise analysis of a system and the aggregated residual report.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mechanics::{independence_rank, poisson_bracket, PhaseFunction, PhasePoint};
use super::{CatalogError, Result, StructurePath, SystemSpec};
use crate::geometry::{geometry_at, GeometryData};
use crate::si::ops::{add, axpy, ein, sub, sym};
use crate::si::{
    codazzi_from_scalars, derived_tensors, killing_residuals, potential_residuals, sic_k_generic_residual,
    sic_k_residuals, sic_v_cubic_residual, sic_v_residuals, solve_structure_tensor,
    solve_structure_tensor_from_potentials, structure_connection, structure_derivative_rhs, structure_from_bc,
    KillingData, PotentialCovs, StructureData,
};
use crate::tensor::DenseTensor;
use crate::variety::{psi_residual, CubicForm};

/// Step of the finite differences taken of the extracted structure tensor.
pub const FD_STEP: f64 = 1e-3;
const MAX_SAMPLING_FAILURES: usize = 1000;

/// Every check name with the equation it tests, in report order.
pub const CHECKS: &[(&str, &str)] = &[
    ("killing", "sym_(ijk) K_ij,k = 0"),
    ("bertrand_darboux", "alt_(ij)[K_i^m V_,mj + K_i^m_,j V_,m] = 0"),
    ("structure_unique", "dim ker(T -> alt_(jk) T^a_ji K_ak) = 0"),
    ("wilczynski", "V_,ij - T_ij^m V_,m - g_ij ΔV/n = 0"),
    ("prolongation_k", "K_ij,k - (1/3) hook(T^a_ji K_ak) = 0"),
    ("noname", "sym_(il) alt_(jk)[K_ij,kl + sym_(jl) R^a_ijk K_al] = 0"),
    ("prolongation_v", "(n-1)/n ΔV_,k - q_k^m V_,m - t_k ΔV/n = 0"),
    ("sic_v_linear", "alt_(jk)[T_ijk + g_ij t_k/(n-1)] = 0"),
    ("sic_v_quadratic", "alt_(jk)[Q_ijkl + g_ij q_kl/(n-1)] = 0"),
    ("sic_v_symmetries", "(alt_(jk) sym_(ij) T_ijk)° = 0"),
    ("sic_v_weyl", "W[(1/8) P(T^a_ik T_ajl)] - W_ijkl = 0"),
    ("sic_v_differential", "sym_(ijk) alt_(kl)[T_ijk,l + 2/(n-2) g_ik Z_jl] = 0"),
    ("sic_v_q_symmetry", "q_kl - q_lk = 0"),
    ("sic_v_cubic", "alt_(kl)[q_k^m_,l + T_al^m q_k^a + t_k q_l^m/(n-1)] = 0"),
    ("sic_k_weyl", "W[(1/8) P(T^a_ik T_ajl)] - W_ijkl = 0, W_ijkl = 0"),
    ("sic_k_ricci", "-(1/4) Z°_ij - R°_ij = 0"),
    ("sic_k_one_index", "scalar-curvature gradient equation for t̄_i"),
    ("sic_k_generic", "sym_(mn) alt_(kl)[P_ijk^mn_,l + P_ijk^pq P_pql^mn - (1/2) sym_(ij) δ^m_i R^n_jkl] = 0"),
    ("cc_weyl", "W[P(T°^a_ik T°_ajl)] = 0"),
    ("cc_ricci", "(Z_ij + R_ij)° = 0"),
    ("cc_scalar", "T°·T° - (n-1)(n+2)|t̄|² - 9R = 0"),
    ("derivative_formula", "T_ijk,l - D_ijkl(T°, t̄, R) = 0"),
    ("bc_agreement", "T_ijk - T_ijk(B, C) = 0"),
    ("gradient_agreement", "T_ijk,l - T_ijk,l(B, C) = 0"),
    ("codazzi", "B_ijk - T_ijk - g_ij t_k/(n-1) - (g_ij C_,k + g_ik C_,j + g_jk C_,i)/(n-2) = 0"),
    ("trace_modification", "(C_ij - Z_ij)° = 0"),
    ("connection_flat", "R̂_ijkl = 0"),
    ("connection_closed_form", "R̂_ijkl[∇A] - R̂_ijkl[B, C] = 0"),
    ("psi_variety", "alt_(jk)[Ψ_aij Ψ_akl + 9R/(n(n-1)) δ_ij δ_kl] = 0"),
    ("poisson", "{F, H} = 0"),
    ("independence", "2n - 1 - rank(dH, dF) = 0"),
];

/// Checks counted in whole numbers rather than residuals.
const COUNT_CHECKS: [&str; 2] = ["structure_unique", "independence"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub points: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { points: 20, seed: 0, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckRecord {
    pub name: String,
    pub equation: String,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub version: String,
    pub seed: u64,
    pub system: String,
    pub params: BTreeMap<String, f64>,
    pub checks: Vec<CheckRecord>,
    pub points: Vec<Vec<f64>>,
}

impl ResidualReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Relative residuals at one point, keyed by check name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointAnalysis {
    pub residuals: BTreeMap<String, f64>,
}

impl PointAnalysis {
    fn put(&mut self, name: &str, v: f64) {
        let e = self.residuals.entry(name.to_string()).or_insert(0.0);
        *e = e.max(v);
    }
}

/// Draw `count` admissible phase points; positions uniform in `[0.5, 2]^n`, momenta in `[−1, 1]^n`.
pub fn sample_points(spec: &SystemSpec, count: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    let n = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut failures = 0;
    while out.len() < count {
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if spec.admissible(&q) {
            out.push(PhasePoint { q, p });
        } else {
            failures += 1;
            if failures >= MAX_SAMPLING_FAILURES {
                return Err(CatalogError::Sampling(failures));
            }
        }
    }
    Ok(out)
}

fn solve_at(spec: &SystemSpec, gd: &GeometryData) -> Result<StructureData> {
    match spec.path {
        StructurePath::Killing => {
            let kd = spec.killing.killing_data(gd, &spec.params, 1)?;
            Ok(solve_structure_tensor(&kd, gd)?)
        }
        StructurePath::Potentials => {
            let (_, basis) = spec.potential_covs(gd)?;
            Ok(solve_structure_tensor_from_potentials(&basis, gd)?)
        }
    }
}

/// Structure tensor extracted along the system's path (no derivative information).
pub fn structure_at(spec: &SystemSpec, point: &[f64]) -> Result<StructureData> {
    solve_at(spec, &geometry_at(&spec.metric, point)?)
}

/// Covariant derivative of the extracted structure tensor by central differences:
/// two-point stencil when `fourth_order` is false, four-point otherwise.
pub fn structure_gradient_fd(spec: &SystemSpec, point: &[f64], h: f64, fourth_order: bool) -> Result<DenseTensor> {
    let gd = geometry_at(&spec.metric, point)?;
    let n = spec.dim;
    let t = structure_at(spec, point)?.t;
    let mut partial = DenseTensor::covariant(n, 4).map_err(crate::si::SiError::from)?;
    for l in 0..n {
        let at = |s: f64| {
            let mut y = point.to_vec();
            y[l] += s * h;
            structure_at(spec, &y).map(|sd| sd.t)
        };
        let d1 = sub(&at(1.0)?, &at(-1.0)?);
        let d = if fourth_order {
            let d2 = sub(&at(2.0)?, &at(-2.0)?);
            axpy(&d1.scale(8.0), -1.0, &d2).scale(1.0 / (12.0 * h))
        } else {
            d1.scale(1.0 / (2.0 * h))
        };
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    partial.set(&[i, j, k, l], d.get(&[i, j, k]));
                }
            }
        }
    }
    let gam = &gd.christoffel;
    let conn = add(
        &add(&ein("ali,ajk->ijkl", &[gam, &t]), &ein("alj,iak->ijkl", &[gam, &t])),
        &ein("alk,ija->ijkl", &[gam, &t]),
    );
    Ok(sub(&partial, &conn))
}

fn normalized_killing(kd: KillingData) -> KillingData {
    let mut out = kd.clone();
    for a in 0..kd.count() {
        let mut m = kd.values[a].max_abs().max(kd.derivs[a].max_abs());
        if let Some(s) = &kd.second {
            m = m.max(s[a].max_abs());
        }
        if m > 0.0 {
            out.values[a] = kd.values[a].scale(1.0 / m);
            out.derivs[a] = kd.derivs[a].scale(1.0 / m);
            if let (Some(o), Some(s)) = (&mut out.second, &kd.second) {
                o[a] = s[a].scale(1.0 / m);
            }
        }
    }
    out
}

fn normalized_potential(p: PotentialCovs) -> PotentialCovs {
    let m = p.v1.max_abs().max(p.v2.max_abs()).max(p.v3.as_ref().map_or(0.0, DenseTensor::max_abs));
    if m == 0.0 {
        return p;
    }
    PotentialCovs { v1: p.v1.scale(1.0 / m), v2: p.v2.scale(1.0 / m), v3: p.v3.map(|v| v.scale(1.0 / m)) }
}

/// All pointwise residuals of a system at `pt`, each divided by a scale built from
/// the magnitudes of the tensors entering it.
pub fn analyze_point(spec: &SystemSpec, pt: &PhasePoint) -> Result<PointAnalysis> {
    let x = &pt.q;
    let n = spec.dim;
    let nf = n as f64;
    let gd = geometry_at(&spec.metric, x)?;
    let mut out = PointAnalysis::default();

    let kd = normalized_killing(spec.killing.killing_data(&gd, &spec.params, 2)?);
    let (own, basis) = spec.potential_covs(&gd)?;
    let pots: Vec<PotentialCovs> = std::iter::once(own).chain(basis).map(normalized_potential).collect();

    let sd0 = solve_at(spec, &gd)?;
    let dt = structure_gradient_fd(spec, x, FD_STEP, true)?;
    let sd = derived_tensors(&sd0, &dt, &gd);
    let tmax = sd.t.max_abs();
    let rmax = gd.riemann.max_abs();
    let s = 1.0 + (tmax * tmax).max(dt.max_abs()).max(rmax);

    let kr = killing_residuals(&kd, &sd, &gd, &pots);
    let kscale = [("killing", 1.0), ("prolongation_k", 1.0 + tmax), ("bertrand_darboux", 1.0), ("noname", 1.0 + rmax)];
    for (name, sc) in kscale {
        if let Some(v) = kr.get(name) {
            out.put(name, v / sc);
        }
    }
    out.put("structure_unique", sd.kernel_dim as f64);

    let pr = potential_residuals(&sd, &gd, &pots);
    out.put("wilczynski", pr["wilczynski"] / (1.0 + tmax));
    if let Some(v) = pr.get("prolongation_v") {
        out.put("prolongation_v", v / s);
    }

    for (k, v) in sic_v_residuals(&sd, &gd)? {
        out.put(&format!("sic_v_{k}"), v / s);
    }
    for (k, v) in sic_k_residuals(&sd, &gd) {
        let name = if k.starts_with("cc_") { k } else { format!("sic_k_{k}") };
        out.put(&name, v / s);
    }
    out.put("sic_k_generic", sic_k_generic_residual(&sd, &gd)? / s);

    if gd.is_constant_curvature() {
        out.put("derivative_formula", sub(&dt, &structure_derivative_rhs(&sd, &gd)).max_abs() / s);
    }

    if let (Some(sf), true) = (&spec.structure, gd.is_constant_curvature()) {
        let (b, c) = sf.jets(x, 4, 3)?;
        let sbc = structure_from_bc(&b, &c, &gd)?;
        out.put("bc_agreement", sub(&sd.t, &sbc.t).max_abs() / (1.0 + tmax));
        if let Some(g) = &sbc.grad {
            out.put("gradient_agreement", sub(&dt, g).max_abs() / s);
        }

        let q_at = |y: &[f64]| -> crate::si::Result<DenseTensor> {
            let gy = geometry_at(&spec.metric, y)?;
            let (by, cy) = sf.jets(y, 4, 2)?;
            let sy = structure_from_bc(&by, &cy, &gy)?;
            sy.q.ok_or(crate::si::SiError::MissingGradient)
        };
        out.put("sic_v_cubic", sic_v_cubic_residual(&sd, &gd, q_at, FD_STEP)? / (s * (1.0 + tmax)));

        let cd = codazzi_from_scalars(&b, &c, &gd)?;
        let c1 = &cd.c_covs[0];
        let gc = sym(&ein("ij,k->ijk", &[&gd.g, c1]), &[0, 1, 2]).scale(0.5);
        let pred = axpy(
            &axpy(&sd.t, 1.0 / (nf - 1.0), &ein("ij,k->ijk", &[&gd.g, &sd.t_trace])),
            1.0 / (nf - 2.0),
            &gc,
        );
        out.put("codazzi", sub(&cd.b3, &pred).max_abs() / (1.0 + tmax + c1.max_abs()));
        out.put("trace_modification", cd.trace_modification_defect(&sd.z, &gd) / s);

        let conn = structure_connection(&cd, &gd)?;
        out.put("connection_flat", conn.lowered(&gd).max_abs() / s);
        out.put("connection_closed_form", sub(&conn.rhat, &conn.rhat_closed).max_abs() / s);

        let phi = gd.g.get(&[0, 0]);
        let psi = CubicForm::from_tensor(&cd.b3.scale(phi.abs().powf(-1.5)))?;
        let r_eff = phi.signum() * gd.scalar;
        let (_, res) = psi_residual(&psi, r_eff);
        let pmax = psi.packed().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        out.put("psi_variety", res / (1.0 + pmax * pmax + r_eff.abs()));
    }

    let h = PhaseFunction::Hamiltonian;
    let dh = h.gradient(spec, pt)?;
    let hmax = dh.dq.iter().chain(&dh.dp).fold(0.0f64, |a, v| a.max(v.abs()));
    for k in 0..spec.killing.len() {
        let f = PhaseFunction::Integral(k);
        let df = f.gradient(spec, pt)?;
        let fmax = df.dq.iter().chain(&df.dp).fold(0.0f64, |a, v| a.max(v.abs()));
        out.put("poisson", poisson_bracket(&f, &h, spec, pt)?.abs() / (1.0 + fmax * hmax));
    }
    let rank = independence_rank(spec, pt)?;
    out.put("independence", (2 * n - 1).saturating_sub(rank) as f64);
    Ok(out)
}

/// Sample points, analyze each in parallel and keep the largest residual per check.
pub fn verify_system(spec: &SystemSpec, opts: VerifyOptions) -> Result<ResidualReport> {
    let pts = sample_points(spec, opts.points, opts.seed)?;
    let analyses: Vec<PointAnalysis> = pts.par_iter().map(|p| analyze_point(spec, p)).collect::<Result<_>>()?;
    let mut merged: BTreeMap<String, f64> = BTreeMap::new();
    for a in &analyses {
        for (k, v) in &a.residuals {
            let e = merged.entry(k.clone()).or_insert(0.0);
            *e = e.max(*v);
        }
    }
    let checks = CHECKS
        .iter()
        .filter_map(|&(name, eq)| {
            merged.get(name).map(|&v| {
                let tolerance = if COUNT_CHECKS.contains(&name) { 0.0 } else { opts.tol };
                CheckRecord { name: name.into(), equation: eq.into(), max_residual: v, tolerance, pass: v <= tolerance }
            })
        })
        .collect();
    Ok(ResidualReport {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: opts.seed,
        system: spec.name.clone(),
        params: spec.params.clone(),
        checks,
        points: pts.into_iter().map(|p| p.q).collect(),
    })
}
