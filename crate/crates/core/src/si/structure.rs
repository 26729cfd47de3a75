//! Pointwise extraction and decomposition of the structure tensor.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use super::ops::{add, alt, axpy, co, ein, gdot, sym, tf};
use super::{KillingData, PotentialCovs, Result, SiError, StructureData};
use crate::geometry::GeometryData;
use crate::linalg::{least_squares, nullspace};
use crate::tensor::{DenseTensor, Variance};

/// Relative singular-value cutoff for ranks and kernels of the linear solves.
const RANK_TOL: f64 = 1e-9;
/// Relative residual above which a linear solve is declared inconsistent.
const CONSISTENCY_TOL: f64 = 1e-10;

/// `T̊`, `t̄` and `t` of a structure tensor.
#[derive(Debug, Clone)]
pub struct TDecomposition {
    pub t0: DenseTensor,
    pub tbar: DenseTensor,
    pub t_trace: DenseTensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Irreducibility {
    pub irreducible: bool,
    pub commutant_dim: usize,
}

fn check_t_symmetries(t: &DenseTensor, gd: &GeometryData) -> Result<()> {
    let scale = t.max_abs().max(1.0);
    let trace = t.trace(0, 1, &gd.ginv)?.max_abs();
    let defect = t.symmetry_defect(0, 1).max(trace);
    if t.rank() != 3 || defect > 1e-10 * scale {
        return Err(SiError::SymmetryViolation(defect));
    }
    Ok(())
}

pub fn decompose_t(t: &DenseTensor, gd: &GeometryData) -> Result<TDecomposition> {
    check_t_symmetries(t, gd)?;
    let n = gd.dim() as f64;
    let t0 = tf(&sym(t, &[0, 1, 2]), None, gd).scale(1.0 / 6.0);
    let t_trace = ein("ijk,ik->j", &[t, &gd.ginv]);
    let tbar = ein("ijk,jk->i", &[t, &gd.ginv]).scale(n / ((n + 2.0) * (n - 1.0)));
    Ok(TDecomposition { t0, tbar, t_trace })
}

/// `T̊_ijk + sym_(ij)[t̄_i g_jk − g_ij t̄_k / n]`.
pub fn reassemble_t(t0: &DenseTensor, tbar: &DenseTensor, gd: &GeometryData) -> DenseTensor {
    let n = gd.dim() as f64;
    let e = axpy(&ein("i,jk->ijk", &[tbar, &gd.g]), -1.0 / n, &ein("ij,k->ijk", &[&gd.g, tbar]));
    add(t0, &sym(&e, &[0, 1]))
}

/// `Z_ij = T̊_i^ab T̊_jab − (n−2)(T̊_ij^a t̄_a + t̄_i t̄_j) − R_ij`.
pub(crate) fn z_tensor(t0: &DenseTensor, tbar: &DenseTensor, gd: &GeometryData) -> DenseTensor {
    let n = gd.dim() as f64;
    let gi = &gd.ginv;
    let quad = ein("iab,ac,bd,jcd->ij", &[t0, gi, gi, t0]);
    let lin = add(&ein("ija,ab,b->ij", &[t0, gi, tbar]), &ein("i,j->ij", &[tbar, tbar]));
    let z = axpy(&quad, -(n - 2.0), &lin);
    axpy(&z, -1.0, &co(gd.ricci.clone()))
}

impl StructureData {
    /// Decompose `t` and fill the quantities that need no derivative of `t`.
    pub fn from_t(t: DenseTensor, gd: &GeometryData) -> Result<Self> {
        let d = decompose_t(&t, gd)?;
        let z = z_tensor(&d.t0, &d.tbar, gd);
        Ok(Self {
            t: co(t),
            t0: d.t0,
            tbar: d.tbar,
            t_trace: d.t_trace,
            z,
            q_full: None,
            q: None,
            grad: None,
            unique: true,
            kernel_dim: 0,
            solve_residual: 0.0,
        })
    }

    /// `T̊·T̊` with all indices contracted through the metric.
    pub fn t0_norm2(&self, gd: &GeometryData) -> f64 {
        gdot(&self.t0, &self.t0, gd)
    }

    pub fn tbar_norm2(&self, gd: &GeometryData) -> f64 {
        gdot(&self.tbar, &self.tbar, gd)
    }
}

/// Fill `Q_ijk^m = T_ij^m_,k + T_ij^l T_lk^m − R_ijk^m` and `q_j^m = g^{ik} Q_ijk^m` from `∇T`.
pub fn derived_tensors(sd: &StructureData, dt: &DenseTensor, gd: &GeometryData) -> StructureData {
    let gi = &gd.ginv;
    let dtu = ein("ijbk,mb->ijkm", &[dt, gi]);
    let tu = ein("ijb,mb->ijm", &[&sd.t, gi]);
    let tt = ein("ijl,lkm->ijkm", &[&tu, &tu]);
    let r = ein("ijkp,mp->ijkm", &[&gd.riemann, gi]);
    let q_full = axpy(&add(&dtu, &tt), -1.0, &r);
    let q = ein("ijkm,ik->jm", &[&q_full, gi]);
    StructureData { q_full: Some(q_full), q: Some(q), grad: Some(co(dt.clone())), ..sd.clone() }
}

/// Orthonormal basis (columns, length n³) of tensors symmetric and trace-free in their first two slots.
/// For a metric proportional to the identity the basis depends on `n` only and is cached.
fn t_space_basis(gd: &GeometryData) -> DMatrix<f64> {
    static CACHE: OnceLock<Mutex<HashMap<usize, DMatrix<f64>>>> = OnceLock::new();
    let n = gd.dim();
    let c = gd.ginv.get(&[0, 0]);
    let isotropic = (0..n).all(|i| (0..n).all(|j| gd.ginv.get(&[i, j]) == if i == j { c } else { 0.0 }));
    if !isotropic {
        return t_space_basis_for(&gd.ginv);
    }
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().expect("cache lock").get(&n) {
        return b.clone();
    }
    let b = t_space_basis_for(&DenseTensor::identity_metric(n));
    cache.lock().expect("cache lock").insert(n, b.clone());
    b
}

fn t_space_basis_for(ginv: &DenseTensor) -> DMatrix<f64> {
    let n = ginv.dim();
    let at = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in 0..n {
                let mut r = vec![0.0; n * n * n];
                r[at(i, j, k)] = 1.0;
                r[at(j, i, k)] = -1.0;
                rows.push(r);
            }
        }
    }
    for k in 0..n {
        let mut r = vec![0.0; n * n * n];
        for i in 0..n {
            for j in 0..n {
                r[at(i, j, k)] = ginv.get(&[i, j]);
            }
        }
        rows.push(r);
    }
    let m = DMatrix::from_fn(rows.len(), n * n * n, |r, c| rows[r][c]);
    nullspace(&m, 1e-12)
}

/// Least-norm solve of `L(T) = b` over the structure-tensor space.
fn solve_in_t_space(gd: &GeometryData, map: impl Fn(&DenseTensor) -> Vec<f64>, rhs: Vec<f64>) -> Result<StructureData> {
    let n = gd.dim();
    let basis = t_space_basis(gd);
    let tensor_of = |v: &[f64]| DenseTensor::from_data(n, &[Variance::Co; 3], v.to_vec()).expect("rank 3");
    let cols: Vec<Vec<f64>> = (0..basis.ncols())
        .map(|c| map(&tensor_of(basis.column(c).as_slice())))
        .collect();
    let a = DMatrix::from_fn(rhs.len(), cols.len(), |r, c| cols[c][r]);
    let b = DVector::from_vec(rhs);
    let ls = least_squares(&a, &b, RANK_TOL);
    let scale = b.amax().max(a.amax() * ls.x.amax());
    let rel = if scale > 0.0 { ls.residual / scale } else { 0.0 };
    if rel > CONSISTENCY_TOL {
        return Err(SiError::Inconsistent(rel));
    }
    let t = &basis * &ls.x;
    let kernel_dim = basis.ncols() - ls.rank;
    let mut sd = StructureData::from_t(tensor_of(t.as_slice()), gd)?;
    sd.unique = kernel_dim == 0;
    sd.kernel_dim = kernel_dim;
    sd.solve_residual = rel;
    Ok(sd)
}

/// Entries `(i, j<k)` of a tensor antisymmetric in its last two slots.
fn upper_entries(t: &DenseTensor, out: &mut Vec<f64>) {
    let n = t.dim();
    for i in 0..n {
        for j in 0..n {
            for k in (j + 1)..n {
                out.push(t.get(&[i, j, k]));
            }
        }
    }
}

/// Solve `alt_(j,k)[K_ij,k − T^a_ji K_ak] = 0` for every supplied Killing tensor,
/// each tensor's equations scaled by its largest entry.
pub fn solve_structure_tensor(kd: &KillingData, gd: &GeometryData) -> Result<StructureData> {
    if kd.count() == 0 {
        return Err(SiError::NoKillingTensors);
    }
    let weights: Vec<f64> = kd
        .values
        .iter()
        .zip(&kd.derivs)
        .map(|(k, dk)| {
            let m = k.max_abs().max(dk.max_abs());
            if m > 0.0 {
                1.0 / m
            } else {
                1.0
            }
        })
        .collect();
    let mut rhs = Vec::new();
    for (dk, w) in kd.derivs.iter().zip(&weights) {
        upper_entries(&alt(dk, &[1, 2]).scale(*w), &mut rhs);
    }
    let n = gd.dim();
    let mixed: Vec<DenseTensor> = kd.values.iter().map(|k| ein("ab,ak->bk", &[&gd.ginv, k])).collect();
    let map = |t: &DenseTensor| {
        let mut out = Vec::new();
        for (m, w) in mixed.iter().zip(&weights) {
            for i in 0..n {
                for j in 0..n {
                    for k in (j + 1)..n {
                        let e: f64 = (0..n).map(|b| t.get(&[b, j, i]) * m.get(&[b, k]) - t.get(&[b, k, i]) * m.get(&[b, j])).sum();
                        out.push(w * e);
                    }
                }
            }
        }
        out
    };
    solve_in_t_space(gd, map, rhs)
}

/// Solve the Wilczynski equation `V_,ij − g_ij ΔV/n = T_ij^m V_,m` for every supplied potential.
pub fn solve_structure_tensor_from_potentials(pots: &[PotentialCovs], gd: &GeometryData) -> Result<StructureData> {
    let n = gd.dim();
    let mut rhs = Vec::new();
    for p in pots {
        let lap = ein("ij,ij->", &[&p.v2, &gd.ginv]).value();
        let r = axpy(&p.v2, -lap / n as f64, &gd.g);
        for i in 0..n {
            for j in i..n {
                rhs.push(r.get(&[i, j]));
            }
        }
    }
    let map = |t: &DenseTensor| {
        let mut out = Vec::new();
        for p in pots {
            let e = ein("ijm,ma,a->ij", &[t, &gd.ginv, &p.v1]);
            for i in 0..n {
                for j in i..n {
                    out.push(e.get(&[i, j]));
                }
            }
        }
        out
    };
    solve_in_t_space(gd, map, rhs)
}

/// Dimension of the space of symmetric `X_ij` commuting (as endomorphisms) with every Killing tensor.
pub fn irreducibility_check(kd: &KillingData, gd: &GeometryData) -> Irreducibility {
    let n = gd.dim();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(pairs.len());
    for &(a, b) in &pairs {
        let x = DenseTensor::from_fn(n, &[Variance::Co; 2], |ix| {
            if (ix[0], ix[1]) == (a, b) || (ix[0], ix[1]) == (b, a) {
                1.0
            } else {
                0.0
            }
        })
        .expect("rank 2");
        let mut col = Vec::new();
        for k in &kd.values {
            let c = ein("ia,ab,bj->ij", &[k, &gd.ginv, &x]);
            let c = alt(&c, &[0, 1]);
            for i in 0..n {
                for j in (i + 1)..n {
                    col.push(c.get(&[i, j]));
                }
            }
        }
        cols.push(col);
    }
    let rows = cols.first().map_or(0, Vec::len);
    let m = DMatrix::from_fn(rows, pairs.len(), |r, c| cols[c][r]);
    let commutant_dim = nullspace(&m, RANK_TOL).ncols();
    Irreducibility { irreducible: commutant_dim == 1, commutant_dim }
}
