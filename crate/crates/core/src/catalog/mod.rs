//! Built-in example systems in any dimension `n ≥ 3`, phase-space checks and
//! whole-system verification.
//!
//! Killing tensors are stored as linear combinations of symmetrized products of
//! Killing vectors, so their jets follow from the vector jets by products alone.

mod mechanics;
mod verify;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{parse, Expr, ExprError, Jet, Params};
use crate::geometry::{geometry_at, GeometryData, GeometryError, MetricModel};
use crate::linalg::nullspace;
use crate::si::{KillingData, PotentialCovs, SiError, StructureFunctions};
use crate::tensor::DenseTensor;
use crate::variety::VarietyError;

pub use mechanics::{hamiltonian_gradient, independence_rank, integral_gradient, poisson_bracket, PhaseFunction, PhaseGradient, PhasePoint};
pub use verify::{
    analyze_point, sample_points, structure_at, structure_gradient_fd, verify_system, CheckRecord, PointAnalysis, ResidualReport,
    VerifyOptions, CHECKS,
};

pub const SYSTEM_NAMES: [&str; 6] = ["oscillator", "generic_flat", "sw2_flat", "generic_sphere", "aniso_sphere", "nonwilczynski"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown system '{0}'")]
    UnknownSystem(String),
    #[error("unknown parameter '{param}' for system '{system}'")]
    UnknownParameter { system: String, param: String },
    #[error("parameter m must be an integer in 1..={dim}, got {value}")]
    SpecialIndex { value: f64, dim: usize },
    #[error("no admissible sample point after {0} attempts")]
    Sampling(usize),
    #[error("{have} integrals supplied, the independence test needs {need}")]
    TooFewIntegrals { have: usize, need: usize },
    #[error("Killing tensor index {0} out of range")]
    KillingIndex(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Si(#[from] SiError),
    #[error(transparent)]
    Variety(#[from] VarietyError),
}

pub type Result<T> = std::result::Result<T, CatalogError>;

/// How the structure tensor of a system is extracted at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructurePath {
    /// From the Killing tensors.
    Killing,
    /// From the Wilczynski equation on the potential basis.
    Potentials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SystemFlags {
    pub wilczynski: bool,
    pub nondegenerate_claimed: bool,
    pub abundant_claimed: bool,
}

/// Killing tensors `K^{ab} = Σ_p c_p X_p^(a Y_p^b)` over symmetrized products of Killing vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KillingSet {
    /// Contravariant components `X^a` of each Killing vector.
    pub vectors: Vec<Vec<Expr>>,
    /// Index pairs of the symmetrized products.
    pub pairs: Vec<(usize, usize)>,
    /// Coefficients over `pairs`, one row per Killing tensor.
    pub tensors: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

fn vector_jets(vectors: &[Vec<Expr>], point: &[f64], params: &Params, order: usize) -> Result<Vec<Vec<Jet>>> {
    vectors
        .iter()
        .map(|v| v.iter().map(|c| c.eval_jet(point, params, order).map_err(Into::into)).collect())
        .collect()
}

/// `½(X^a Y^b + X^b Y^a)` as `n²` jets.
fn product_jets(x: &[Jet], y: &[Jet]) -> Vec<Jet> {
    let n = x.len();
    let mut out = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            out.push((&x[a] * &y[b]).axpy(1.0, &(&x[b] * &y[a])).scale(0.5));
        }
    }
    out
}

impl KillingSet {
    /// Tensors `e_p` for the listed pairs, in order.
    pub fn from_pairs(vectors: Vec<Vec<Expr>>, pairs: Vec<(usize, usize)>, labels: Vec<String>) -> Self {
        let m = pairs.len();
        let tensors = (0..m).map(|p| (0..m).map(|q| if p == q { 1.0 } else { 0.0 }).collect()).collect();
        Self { vectors, pairs, tensors, labels }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    fn combine(&self, rows: &[&Vec<f64>], point: &[f64], params: &Params, order: usize) -> Result<Vec<Vec<Jet>>> {
        let n = point.len();
        let vj = vector_jets(&self.vectors, point, params, order)?;
        let used: Vec<bool> = (0..self.pairs.len()).map(|p| rows.iter().any(|r| r[p] != 0.0)).collect();
        let prods: Vec<Option<Vec<Jet>>> = self
            .pairs
            .iter()
            .zip(&used)
            .map(|(&(a, b), &u)| u.then(|| product_jets(&vj[a], &vj[b])))
            .collect();
        Ok(rows
            .iter()
            .map(|row| {
                let mut acc = vec![Jet::zero(n, order); n * n];
                for (c, p) in row.iter().zip(&prods) {
                    if let (true, Some(p)) = (*c != 0.0, p) {
                        for (s, pj) in acc.iter_mut().zip(p) {
                            *s = s.axpy(*c, pj);
                        }
                    }
                }
                acc
            })
            .collect())
    }

    /// Jets of `K^{ab}` (row-major `n²` components) for every tensor.
    pub fn upper_jets(&self, point: &[f64], params: &Params, order: usize) -> Result<Vec<Vec<Jet>>> {
        let rows: Vec<&Vec<f64>> = self.tensors.iter().collect();
        self.combine(&rows, point, params, order)
    }

    pub fn upper_jets_of(&self, idx: usize, point: &[f64], params: &Params, order: usize) -> Result<Vec<Jet>> {
        let row = self.tensors.get(idx).ok_or(CatalogError::KillingIndex(idx))?;
        Ok(self.combine(&[row], point, params, order)?.remove(0))
    }

    /// Lowered tensors with `derivs` (1 or 2) covariant derivatives at the point of `gd`.
    pub fn killing_data(&self, gd: &GeometryData, params: &Params, derivs: usize) -> Result<KillingData> {
        let upper = self.upper_jets(&gd.point, params, derivs.clamp(1, 2))?;
        let fields: Vec<_> = upper.iter().map(|u| gd.lower_pair(u)).collect();
        Ok(KillingData::from_fields(&fields, gd)?)
    }
}

/// One built-in system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub name: String,
    pub dim: usize,
    pub metric: MetricModel,
    pub potential: Expr,
    pub params: Params,
    /// Linearly independent potentials compatible with the Killing tensors.
    pub potential_basis: Vec<Expr>,
    pub killing: KillingSet,
    pub structure: Option<StructureFunctions>,
    /// Structure function `B` in the literal tabulated form, where it differs from `structure`.
    pub printed_b: Option<Expr>,
    pub path: StructurePath,
    pub flags: SystemFlags,
}

impl SystemSpec {
    /// Jets of the system potential.
    pub fn potential_jet(&self, point: &[f64], order: usize) -> Result<Jet> {
        Ok(self.potential.eval_jet(point, &self.params, order)?)
    }

    /// Covariant derivatives (up to third) of the system potential and every basis potential.
    pub fn potential_covs(&self, gd: &GeometryData) -> Result<(PotentialCovs, Vec<PotentialCovs>)> {
        let covs = |e: &Expr| -> Result<PotentialCovs> {
            let j = e.eval_jet(&gd.point, &self.params, 3)?;
            let mut d = gd.covariant_derivatives(&j, 3)?.into_iter();
            Ok(PotentialCovs {
                v1: d.next().expect("first"),
                v2: d.next().expect("second"),
                v3: d.next(),
            })
        };
        let own = covs(&self.potential)?;
        let basis = self.potential_basis.iter().map(covs).collect::<Result<Vec<_>>>()?;
        Ok((own, basis))
    }

    /// Whether the point lies in the domain of the metric, potentials and Killing tensors.
    pub fn admissible(&self, point: &[f64]) -> bool {
        let finite = |e: &Expr| e.eval(point, &self.params).is_ok_and(f64::is_finite);
        point.iter().all(|&x| x != 0.0)
            && geometry_at(&self.metric, point).is_ok()
            && finite(&self.potential)
            && self.potential_basis.iter().all(finite)
    }
}

fn x(i: usize) -> String {
    format!("x{}", i + 1)
}

fn sum_str(terms: impl IntoIterator<Item = String>) -> String {
    let v: Vec<String> = terms.into_iter().collect();
    if v.is_empty() {
        "0".into()
    } else {
        v.join(" + ")
    }
}

fn p(src: &str) -> Expr {
    parse(src).unwrap_or_else(|e| panic!("built-in expression '{src}': {e}"))
}

fn r2(n: usize) -> String {
    sum_str((0..n).map(|i| format!("{}^2", x(i))))
}

fn flat_killing_vectors(n: usize) -> (Vec<Vec<Expr>>, Vec<String>) {
    let mut vs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        vs.push((0..n).map(|a| Expr::num(if a == i { 1.0 } else { 0.0 })).collect());
        labels.push(format!("p{}", i + 1));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            vs.push(
                (0..n)
                    .map(|a| {
                        if a == j {
                            Expr::coord(i)
                        } else if a == i {
                            -Expr::coord(j)
                        } else {
                            Expr::num(0.0)
                        }
                    })
                    .collect(),
            );
            labels.push(format!("J{}{}", i + 1, j + 1));
        }
    }
    (vs, labels)
}

/// Isometries of `φ δ` with `φ ∝ 1/x_n²`: translations and rotations in the first
/// `n−1` coordinates, the dilation and the special conformal maps.
fn sphere_killing_vectors(n: usize) -> (Vec<Vec<Expr>>, Vec<String>) {
    let (flat, flat_labels) = flat_killing_vectors(n - 1);
    let pad = |v: &Vec<Expr>| -> Vec<Expr> {
        let mut w = v.clone();
        w.push(Expr::num(0.0));
        w
    };
    let mut vs: Vec<Vec<Expr>> = flat.iter().map(pad).collect();
    let mut labels = flat_labels;
    vs.push((0..n).map(Expr::coord).collect());
    labels.push("D".into());
    let rr = p(&r2(n));
    for b in 0..n - 1 {
        vs.push(
            (0..n)
                .map(|a| {
                    let e = Expr::num(2.0) * Expr::coord(b) * Expr::coord(a);
                    if a == b {
                        e - rr.clone()
                    } else {
                        e
                    }
                })
                .collect(),
        );
        labels.push(format!("S{}", b + 1));
    }
    (vs, labels)
}

fn all_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|a| (a..m).map(move |b| (a, b))).collect()
}

const KERNEL_POINTS: usize = 12;
const KERNEL_SEED: u64 = 0x6b65726e;
const KERNEL_TOL: f64 = 1e-9;

/// Killing tensors among all symmetrized products of `vectors` that satisfy the
/// Bertrand–Darboux condition for every potential in `basis`.
fn bertrand_darboux_kernel(
    metric: &MetricModel,
    vectors: Vec<Vec<Expr>>,
    basis: &[Expr],
    params: &Params,
) -> Result<KillingSet> {
    let n = metric.dim;
    let pairs = all_pairs(vectors.len());
    let full = KillingSet::from_pairs(vectors, pairs.clone(), Vec::new());
    let mut rng = ChaCha8Rng::seed_from_u64(KERNEL_SEED);
    let mut bd_rows: Vec<Vec<f64>> = Vec::new();
    let mut value_rows: Vec<Vec<f64>> = Vec::new();
    let mut found = 0;
    while found < KERNEL_POINTS {
        let pt: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let Ok(gd) = geometry_at(metric, &pt) else { continue };
        found += 1;
        let upper = full.upper_jets(&pt, params, 1)?;
        let lowered: Vec<(DenseTensor, DenseTensor)> = upper
            .iter()
            .map(|u| {
                let f = gd.lower_pair(u);
                let d = gd.field_derivatives(&f, 1).map(|mut v| v.remove(0));
                d.map(|d| (f.value(), d))
            })
            .collect::<std::result::Result<_, _>>()?;
        let pots: Vec<(DenseTensor, DenseTensor)> = basis
            .iter()
            .map(|e| {
                let j = e.eval_jet(&pt, params, 2)?;
                let mut d = gd.covariant_derivatives(&j, 2)?.into_iter();
                Ok((d.next().expect("first"), d.next().expect("second")))
            })
            .collect::<Result<_>>()?;
        let gi = &gd.ginv;
        for (v1, v2) in &pots {
            let cols: Vec<DenseTensor> = lowered
                .iter()
                .map(|(k, dk)| {
                    let a = crate::tensor::einsum("ma,ai,jm->ij", &[gi, k, v2]).expect("shape");
                    let b = crate::tensor::einsum("ma,aij,m->ij", &[gi, dk, v1]).expect("shape");
                    a.add(&b).expect("shape")
                })
                .collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    bd_rows.push(cols.iter().map(|c| c.get(&[i, j]) - c.get(&[j, i])).collect());
                }
            }
        }
        for a in 0..n {
            for b in a..n {
                value_rows.push(upper.iter().map(|u| u[a * n + b].value()).collect());
            }
        }
    }
    let m = pairs.len();
    let bd = DMatrix::from_fn(bd_rows.len(), m, |r, c| bd_rows[r][c]);
    let kernel = nullspace(&bd, KERNEL_TOL);
    let values = DMatrix::from_fn(value_rows.len(), m, |r, c| value_rows[r][c]);
    let restricted = &values * &kernel;
    let svd = restricted.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().fold(0.0f64, |a, &s| a.max(s));
    let mut tensors = Vec::new();
    for (r, &s) in svd.singular_values.iter().enumerate() {
        if s > KERNEL_TOL * smax {
            let coeffs = &kernel * v_t.row(r).transpose();
            let big = coeffs.amax();
            tensors.push(coeffs.iter().map(|c| c / big).collect());
        }
    }
    let labels = (0..tensors.len()).map(|i| format!("K{}", i + 1)).collect();
    Ok(KillingSet { tensors, labels, ..full })
}

/// Parameter defaults `w = 1`, `a1..an = 1`, `beta = 0`.
fn default_params(n: usize) -> Params {
    let mut p = Params::new();
    p.insert("w".into(), 1.0);
    p.insert("beta".into(), 0.0);
    for i in 0..n {
        p.insert(format!("a{}", i + 1), 1.0);
    }
    p
}

fn merge_params(system: &str, mut base: Params, overrides: &Params) -> Result<Params> {
    for (k, v) in overrides {
        match base.get_mut(k) {
            Some(slot) => *slot = *v,
            None => return Err(CatalogError::UnknownParameter { system: system.into(), param: k.clone() }),
        }
    }
    Ok(base)
}

fn structure(b: &str, c: &str, params: &Params) -> Option<StructureFunctions> {
    Some(StructureFunctions { b: p(b), c: p(c), params: params.clone() })
}

/// Build a named system in dimension `n`.
///
/// Parameters: `w`, `a1..an`, `beta` (flat systems) and `m` (`sw2_flat`, the
/// 1-based special index). Unspecified parameters default to 1, `beta` to 0.
pub fn get_system(name: &str, n: usize, overrides: &Params) -> Result<SystemSpec> {
    if n < 3 {
        return Err(GeometryError::Dimension(n).into());
    }
    let nf = n as f64;
    let flags = |w, nd, ab| SystemFlags { wilczynski: w, nondegenerate_claimed: nd, abundant_claimed: ab };
    let a = |i: usize| format!("a{}", i + 1);
    let xn = x(n - 1);
    let cn = nf * (nf - 1.0);
    match name {
        "oscillator" => {
            let params = merge_params(name, default_params(n), overrides)?;
            let v = format!("w^2*({}) + {} + beta", r2(n), sum_str((0..n).map(|i| format!("{}*{}", a(i), x(i)))));
            let mut basis = vec![p(&r2(n))];
            basis.extend((0..n).map(|i| p(&x(i))));
            basis.push(p("1"));
            let (vs, vl) = flat_killing_vectors(n);
            let vs: Vec<Vec<Expr>> = vs.into_iter().take(n).collect();
            let pairs = all_pairs(n);
            let labels = pairs.iter().map(|&(i, j)| format!("{}{}", vl[i], vl[j])).collect();
            Ok(SystemSpec {
                name: name.into(),
                dim: n,
                metric: MetricModel::euclidean(n)?,
                potential: p(&v),
                structure: structure("0", "0", &params),
                params,
                potential_basis: basis,
                killing: KillingSet::from_pairs(vs, pairs, labels),
                printed_b: None,
                path: StructurePath::Killing,
                flags: flags(true, true, true),
            })
        }
        "generic_flat" | "nonwilczynski" => {
            let generic = name == "generic_flat";
            let params = merge_params(name, default_params(n), overrides)?;
            let (v, basis) = if generic {
                let v = format!(
                    "{} + beta",
                    sum_str((0..n).map(|i| format!("{}/{}^2 + w*{}^2", a(i), x(i), x(i))))
                );
                let mut b: Vec<Expr> = (0..n).map(|i| p(&format!("1/{}^2", x(i)))).collect();
                b.push(p(&r2(n)));
                b.push(p("1"));
                (v, b)
            } else {
                (format!("w*({}) + beta", r2(n)), vec![p(&r2(n)), p("1")])
            };
            let (vs, vl) = flat_killing_vectors(n);
            let pairs: Vec<(usize, usize)> = (0..vs.len()).map(|i| (i, i)).collect();
            let labels = vl.iter().map(|l| format!("{l}^2")).collect();
            let b_sum = sum_str((0..n).map(|i| format!("{}^2*ln({})", x(i), x(i))));
            Ok(SystemSpec {
                name: name.into(),
                dim: n,
                metric: MetricModel::euclidean(n)?,
                potential: p(&v),
                structure: if generic { structure(&format!("-1.5*({b_sum})"), "0", &params) } else { None },
                printed_b: generic.then(|| p(&format!("-{}*({b_sum})", 3.0 / (nf - 1.0)))),
                params,
                potential_basis: basis,
                killing: KillingSet::from_pairs(vs, pairs, labels),
                path: if generic { StructurePath::Killing } else { StructurePath::Potentials },
                flags: if generic { flags(true, true, true) } else { flags(true, false, false) },
            })
        }
        "sw2_flat" => {
            let mut base = default_params(n);
            base.insert("m".into(), 1.0);
            let params = merge_params(name, base, overrides)?;
            let mv = params["m"];
            if mv.fract() != 0.0 || mv < 1.0 || mv > nf {
                return Err(CatalogError::SpecialIndex { value: mv, dim: n });
            }
            let m = mv as usize - 1;
            let others: Vec<usize> = (0..n).filter(|&i| i != m).collect();
            let quad = format!("4*{}^2 + {}", x(m), sum_str(others.iter().map(|&i| format!("{}^2", x(i)))));
            let v = format!(
                "w*({quad}) + {}*{} + {} + beta",
                a(m),
                x(m),
                sum_str(others.iter().map(|&i| format!("{}/{}^2", a(i), x(i))))
            );
            let mut basis = vec![p(&quad), p(&x(m))];
            basis.extend(others.iter().map(|&i| p(&format!("1/{}^2", x(i)))));
            basis.push(p("1"));
            let metric = MetricModel::euclidean(n)?;
            let killing = bertrand_darboux_kernel(&metric, flat_killing_vectors(n).0, &basis, &params)?;
            let b = format!("-1.5*({})", sum_str(others.iter().map(|&i| format!("{}^2*ln({})", x(i), x(i)))));
            Ok(SystemSpec {
                name: name.into(),
                dim: n,
                metric,
                potential: p(&v),
                structure: structure(&b, "0", &params),
                printed_b: Some(p(&format!(
                    "-{}*({})",
                    3.0 / (nf - 1.0),
                    sum_str(others.iter().map(|&i| format!("{}^2*ln({})", x(i), x(i))))
                ))),
                params,
                potential_basis: basis,
                killing,
                path: StructurePath::Killing,
                flags: flags(true, true, true),
            })
        }
        "generic_sphere" => {
            let params = merge_params(name, default_params(n), overrides)?;
            let inner = sum_str((0..n).map(|i| format!("{}/{}^2 + w*{}^2", a(i), x(i), x(i))));
            let v = format!("-{xn}^2*({inner})/{cn}");
            let mut basis: Vec<Expr> = (0..n - 1).map(|i| p(&format!("{xn}^2/{}^2", x(i)))).collect();
            basis.push(p(&format!("{xn}^2*({})", r2(n))));
            basis.push(p(&format!("{xn}^2")));
            basis.push(p("1"));
            let metric = MetricModel::half_space_sphere(n)?;
            let killing = bertrand_darboux_kernel(&metric, sphere_killing_vectors(n).0, &basis, &params)?;
            let b = format!(
                "{}*({})/{xn}^2",
                1.5 * cn,
                sum_str((0..n).map(|i| format!("{}^2*ln({})", x(i), x(i))))
            );
            Ok(SystemSpec {
                name: name.into(),
                dim: n,
                metric,
                potential: p(&v),
                structure: structure(&b, "0", &params),
                printed_b: None,
                params,
                potential_basis: basis,
                killing,
                path: StructurePath::Killing,
                flags: flags(true, true, true),
            })
        }
        "aniso_sphere" => {
            let params = merge_params(name, default_params(n), overrides)?;
            let rest = sum_str((0..n - 1).map(|i| format!("{}^2", x(i))));
            let v = format!(
                "-{xn}^2*(w*({xn}^2 + 4*({rest})) + {} + {})/{cn}",
                sum_str((0..n - 1).map(|i| format!("{}*{}", a(i), x(i)))),
                a(n - 1)
            );
            let mut basis = vec![p(&format!("{xn}^2*({xn}^2 + 4*({rest}))"))];
            basis.extend((0..n - 1).map(|i| p(&format!("{xn}^2*{}", x(i)))));
            basis.push(p(&format!("{xn}^2")));
            basis.push(p("1"));
            let metric = MetricModel::half_space_sphere(n)?;
            let killing = bertrand_darboux_kernel(&metric, sphere_killing_vectors(n).0, &basis, &params)?;
            Ok(SystemSpec {
                name: name.into(),
                dim: n,
                metric,
                potential: p(&v),
                structure: structure(&format!("{}*ln({xn})", 1.5 * cn), "0", &params),
                printed_b: None,
                params,
                potential_basis: basis,
                killing,
                path: StructurePath::Killing,
                flags: flags(true, true, true),
            })
        }
        _ => Err(CatalogError::UnknownSystem(name.into())),
    }
}
