//! Cubic forms `Ψ_ijk` and the quadratic variety
//! `alt_(j,k)[Ψ^a_ij Ψ_kla + 9R/(n(n−1)) g_ij g_kl] = 0` with `g = δ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::tensor::{DenseTensor, Variance};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarietyError {
    #[error("dimension {0} unsupported (need n ≥ 3)")]
    Dimension(usize),
    #[error("expected {expected} packed components, got {got}")]
    PackedLength { expected: usize, got: usize },
    #[error("cubic form is not fully symmetric (defect {0:e})")]
    Asymmetric(f64),
    #[error("tolerance must be positive")]
    Tolerance,
}

pub type Result<T> = std::result::Result<T, VarietyError>;

/// A fully symmetric cubic form stored by its components `Ψ_ijk`, `i ≤ j ≤ k`,
/// in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicForm {
    dim: usize,
    packed: Vec<f64>,
}

/// `C(n+2, 3)`.
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) * (n + 2) / 6
}

/// Sorted multi-indices `(i ≤ j ≤ k)` in packed order.
pub fn packed_indices(n: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::with_capacity(packed_len(n));
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                out.push([i, j, k]);
            }
        }
    }
    out
}

impl CubicForm {
    pub fn new(dim: usize, packed: Vec<f64>) -> Result<Self> {
        if dim < 3 {
            return Err(VarietyError::Dimension(dim));
        }
        if packed.len() != packed_len(dim) {
            return Err(VarietyError::PackedLength { expected: packed_len(dim), got: packed.len() });
        }
        Ok(Self { dim, packed })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(dim, vec![0.0; packed_len(dim)])
    }

    pub fn from_tensor(t: &DenseTensor) -> Result<Self> {
        let defect = t.full_symmetry_defect();
        if t.rank() != 3 || defect > 1e-12 * t.max_abs().max(1.0) {
            return Err(VarietyError::Asymmetric(defect));
        }
        let n = t.dim();
        Self::new(n, packed_indices(n).iter().map(|ix| t.get(ix)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn to_tensor(&self) -> DenseTensor {
        let n = self.dim;
        let mut t = DenseTensor::covariant(n, 3).expect("rank 3");
        for (ix, &v) in packed_indices(n).iter().zip(&self.packed) {
            for p in permutations3(*ix) {
                t.set(&p, v);
            }
        }
        t
    }

    /// Apply `O` to every slot: `Ψ'_ijk = O_ia O_jb O_kc Ψ_abc`.
    pub fn rotate(&self, o: &DMatrix<f64>) -> Self {
        let n = self.dim;
        let t = self.to_tensor();
        let packed = packed_indices(n)
            .iter()
            .map(|&[i, j, k]| {
                let mut acc = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            acc += o[(i, a)] * o[(j, b)] * o[(k, c)] * t.get(&[a, b, c]);
                        }
                    }
                }
                acc
            })
            .collect();
        Self { dim: n, packed }
    }
}

fn permutations3([i, j, k]: [usize; 3]) -> [[usize; 3]; 6] {
    [[i, j, k], [i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]]
}

/// Residual tensor `E_ijkl − E_ikjl` with `E_ijkl = Σ_a Ψ_aij Ψ_akl + 9R/(n(n−1)) δ_ij δ_kl`,
/// and its max-abs norm.
pub fn psi_residual(f: &CubicForm, scalar_r: f64) -> (DenseTensor, f64) {
    let n = f.dim;
    let psi = f.to_tensor();
    let c = 9.0 * scalar_r / (n * (n - 1)) as f64;
    let e = |i: usize, j: usize, k: usize, l: usize| {
        let mut acc: f64 = (0..n).map(|a| psi.get(&[a, i, j]) * psi.get(&[a, k, l])).sum();
        if i == j && k == l {
            acc += c;
        }
        acc
    };
    let r = DenseTensor::from_fn(n, &[Variance::Co; 4], |x| e(x[0], x[1], x[2], x[3]) - e(x[0], x[2], x[1], x[3]))
        .expect("rank 4");
    let norm = r.max_abs();
    (r, norm)
}

/// Independent residual rows `(i, j<k, l)`.
fn residual_rows(n: usize) -> Vec<[usize; 4]> {
    let mut rows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in (j + 1)..n {
                for l in 0..n {
                    rows.push([i, j, k, l]);
                }
            }
        }
    }
    rows
}

fn packed_residual(f: &CubicForm, scalar_r: f64) -> DVector<f64> {
    let (r, _) = psi_residual(f, scalar_r);
    DVector::from_iterator(residual_rows(f.dim).len(), residual_rows(f.dim).iter().map(|ix| r.get(ix)))
}

/// Jacobian of the packed residual with respect to the packed components.
pub fn psi_jacobian(f: &CubicForm) -> DMatrix<f64> {
    let n = f.dim;
    let psi = f.to_tensor();
    let rows = residual_rows(n);
    let cols = packed_indices(n);
    let mut jac = DMatrix::zeros(rows.len(), cols.len());
    for (c, ix) in cols.iter().enumerate() {
        let mut u = DenseTensor::covariant(n, 3).expect("rank 3");
        for p in permutations3(*ix) {
            u.set(&p, 1.0);
        }
        // dE_ijkl = Σ_a (U_aij Ψ_akl + Ψ_aij U_akl)
        let de = |i: usize, j: usize, k: usize, l: usize| -> f64 {
            (0..n)
                .map(|a| u.get(&[a, i, j]) * psi.get(&[a, k, l]) + psi.get(&[a, i, j]) * u.get(&[a, k, l]))
                .sum()
        };
        for (r, &[i, j, k, l]) in rows.iter().enumerate() {
            jac[(r, c)] = de(i, j, k, l) - de(i, k, j, l);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Initial Levenberg damping.
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-10, damping: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarietyPoint {
    pub form: CubicForm,
    pub scalar_r: f64,
    /// Max-abs residual.
    pub residual_norm: f64,
    pub fingerprint: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarietySolve {
    /// Best iterate (on the variety only when `converged`).
    pub point: VarietyPoint,
    pub converged: bool,
    pub iterations: usize,
}

/// Damped Gauss–Newton (Levenberg–Marquardt) on the packed residual.
pub fn solve_variety(seed: &CubicForm, scalar_r: f64, opts: SolveOptions) -> Result<VarietySolve> {
    if !(opts.tol > 0.0) {
        return Err(VarietyError::Tolerance);
    }
    let n = seed.dim;
    let mut x = DVector::from_column_slice(&seed.packed);
    let form = |x: &DVector<f64>| CubicForm { dim: n, packed: x.as_slice().to_vec() };
    let mut r = packed_residual(seed, scalar_r);
    let mut cost = r.norm_squared();
    let mut lambda = opts.damping;
    let mut iterations = 0;
    while r.amax() >= opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let j = psi_jacobian(&form(&x));
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for d in 0..a.nrows() {
                a[(d, d)] += lambda;
            }
            let step = a.cholesky().map(|c| c.solve(&(-&g)));
            if let Some(step) = step {
                let trial = &x + &step;
                let rt = packed_residual(&form(&trial), scalar_r);
                let ct = rt.norm_squared();
                if ct < cost {
                    x = trial;
                    r = rt;
                    cost = ct;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    let f = form(&x);
    let residual_norm = r.amax();
    let fingerprint = orbit_fingerprint(&f);
    Ok(VarietySolve {
        converged: residual_norm < opts.tol,
        point: VarietyPoint { form: f, scalar_r, residual_norm, fingerprint },
        iterations,
    })
}

/// Orthogonally invariant scalars: `‖Ψ‖²`, `|t̄|²` with `t̄_i = n/((n+2)(n−1)) Ψ_ijj`,
/// and the ascending eigenvalues of `Ψ_iab Ψ_jab`.
pub fn orbit_fingerprint(f: &CubicForm) -> Vec<f64> {
    let n = f.dim;
    let t = f.to_tensor();
    let norm2 = t.dot(&t);
    let c = n as f64 / ((n + 2) as f64 * (n - 1) as f64);
    let tbar2: f64 = (0..n)
        .map(|i| {
            let s: f64 = (0..n).map(|j| t.get(&[i, j, j])).sum();
            (c * s).powi(2)
        })
        .sum();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                acc += t.get(&[i, a, b]) * t.get(&[j, a, b]);
            }
        }
        acc
    });
    let mut eig: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let mut out = vec![norm2, tbar2];
    out.extend(eig);
    out
}

/// Whether `f` is an orthogonal rotation of a diagonal form (`Ψ_ijk = 0` unless `i = j = k`
/// in the eigenbasis of `Ψ_iab Ψ_jab`). Requires distinct eigenvalues to be meaningful.
pub fn is_diagonal_orbit(f: &CubicForm, tol: f64) -> bool {
    let n = f.dim;
    let t = f.to_tensor();
    let m = DMatrix::from_fn(n, n, |i, j| {
        (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| t.get(&[i, a, b]) * t.get(&[j, a, b])).sum()
    });
    let eig = SymmetricEigen::new(m);
    let rotated = f.rotate(&eig.eigenvectors.transpose());
    let scale = f.packed.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    packed_indices(n)
        .iter()
        .zip(&rotated.packed)
        .all(|(&[i, j, k], v)| (i == j && j == k) || v.abs() <= tol * scale)
}

/// Codazzi tensor value at a base point read as a cubic form.
pub fn psi_from_system(b3: &DenseTensor) -> Result<CubicForm> {
    CubicForm::from_tensor(b3)
}

/// Multi-start solve: start 0 is the zero form, the rest are drawn uniformly from
/// `[−2, 2]` per packed component. Converged points are deduplicated by fingerprint
/// and sorted lexicographically by fingerprint.
pub fn solve_variety_multistart(
    dim: usize,
    scalar_r: f64,
    starts: usize,
    seed: u64,
    opts: SolveOptions,
) -> Result<Vec<VarietyPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = packed_len(dim);
    let mut seeds = Vec::with_capacity(starts);
    for s in 0..starts {
        let packed = if s == 0 { vec![0.0; len] } else { (0..len).map(|_| rng.gen_range(-2.0..=2.0)).collect() };
        seeds.push(CubicForm::new(dim, packed)?);
    }
    let solved: Vec<VarietySolve> = seeds
        .par_iter()
        .map(|f| solve_variety(f, scalar_r, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut points: Vec<VarietyPoint> = solved.into_iter().filter(|s| s.converged).map(|s| s.point).collect();
    points.sort_by(|a, b| cmp_fingerprints(&a.fingerprint, &b.fingerprint));
    let mut out: Vec<VarietyPoint> = Vec::new();
    for p in points {
        let dup = out.last().is_some_and(|q| {
            q.fingerprint.iter().zip(&p.fingerprint).all(|(a, b)| (a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1.0))
        });
        if !dup {
            out.push(p);
        }
    }
    Ok(out)
}

fn cmp_fingerprints(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(a.len().cmp(&b.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_form_is_on_flat_variety() {
        let mut f = CubicForm::zeros(3).unwrap();
        for (p, ix) in packed_indices(3).iter().enumerate() {
            if ix[0] == ix[1] && ix[1] == ix[2] {
                f.packed[p] = -3.0 + p as f64;
            }
        }
        assert!(psi_residual(&f, 0.0).1 < 1e-14);
        assert!(is_diagonal_orbit(&f, 1e-12));
    }

    #[test]
    fn jacobian_vanishes_at_origin() {
        let f = CubicForm::zeros(4).unwrap();
        assert_eq!(psi_jacobian(&f).amax(), 0.0);
    }

    #[test]
    fn packed_roundtrip() {
        let f = CubicForm::new(3, (0..10).map(|v| v as f64).collect()).unwrap();
        assert_eq!(CubicForm::from_tensor(&f.to_tensor()).unwrap(), f);
        assert!(matches!(CubicForm::new(3, vec![0.0; 9]), Err(VarietyError::PackedLength { .. })));
    }
}
