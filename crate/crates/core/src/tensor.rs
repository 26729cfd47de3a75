//! Dense small-rank tensors with unnormalized Young symmetrizers.
//!
//! Entries are stored row-major with slot 0 most significant. All projectors
//! are plain permutation sums; nothing is divided by the group order unless a
//! function name says `normalized`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest rank accepted by the public constructors.
pub const MAX_RANK: usize = 4;
/// Rank allowed for crate-internal composite tensors (rank-5 `P_ijk^ab`, rank-6 conditions).
pub(crate) const MAX_WIDE_RANK: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("slot {0} listed twice")]
    DuplicateSlot(usize),
    #[error("slots mix covariant and contravariant indices")]
    MixedVariance,
    #[error("rank {0} exceeds the supported maximum")]
    RankOverflow(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid tableau: {0}")]
    InvalidTableau(String),
    #[error("singular metric")]
    SingularMetric,
    #[error("input lacks curvature symmetries (defect {0:e})")]
    NotCurvature(f64),
    #[error("tensor is not symmetric as required (defect {0:e})")]
    Asymmetric(f64),
    #[error("einsum: {0}")]
    Einsum(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variance {
    Co,
    Contra,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dim: usize,
    variance: Vec<Variance>,
    data: Vec<f64>,
}

fn pow(dim: usize, rank: usize) -> usize {
    dim.pow(rank as u32)
}

fn unravel(mut flat: usize, dim: usize, out: &mut [usize]) {
    for s in (0..out.len()).rev() {
        out[s] = flat % dim;
        flat /= dim;
    }
}

fn ravel(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

/// All permutations of `0..k` together with their signs.
pub fn permutations_with_sign(k: usize) -> Vec<(Vec<usize>, f64)> {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, sign: f64, out: &mut Vec<(Vec<usize>, f64)>) {
        if rest.is_empty() {
            out.push((prefix.clone(), sign));
            return;
        }
        for pos in 0..rest.len() {
            let v = rest.remove(pos);
            prefix.push(v);
            // moving the element at `pos` to the front costs `pos` transpositions
            let s = if pos % 2 == 0 { sign } else { -sign };
            rec(prefix, rest, s, out);
            prefix.pop();
            rest.insert(pos, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut (0..k).collect(), 1.0, &mut out);
    out
}

impl DenseTensor {
    fn build(dim: usize, variance: Vec<Variance>, data: Vec<f64>, max: usize) -> Result<Self> {
        if variance.len() > max {
            return Err(TensorError::RankOverflow(variance.len()));
        }
        if data.len() != pow(dim, variance.len()) {
            return Err(TensorError::Shape(format!(
                "expected {} entries, got {}",
                pow(dim, variance.len()),
                data.len()
            )));
        }
        Ok(Self { dim, variance, data })
    }

    pub fn zeros(dim: usize, variance: &[Variance]) -> Result<Self> {
        Self::build(dim, variance.to_vec(), vec![0.0; pow(dim, variance.len())], MAX_RANK)
    }

    /// Zero tensor with all slots covariant.
    pub fn covariant(dim: usize, rank: usize) -> Result<Self> {
        Self::zeros(dim, &vec![Variance::Co; rank])
    }

    pub fn from_data(dim: usize, variance: &[Variance], data: Vec<f64>) -> Result<Self> {
        Self::build(dim, variance.to_vec(), data, MAX_RANK)
    }

    pub fn from_fn(dim: usize, variance: &[Variance], f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dim, variance)?;
        t.fill_with(f);
        Ok(t)
    }

    pub fn scalar(dim: usize, v: f64) -> Self {
        Self { dim, variance: vec![], data: vec![v] }
    }

    pub fn vector(v: &[f64]) -> Self {
        Self { dim: v.len(), variance: vec![Variance::Co], data: v.to_vec() }
    }

    /// Covariant rank-2 tensor from a row-major square matrix.
    pub fn matrix(dim: usize, rows: &[f64]) -> Result<Self> {
        Self::from_data(dim, &[Variance::Co, Variance::Co], rows.to_vec())
    }

    pub fn identity_metric(dim: usize) -> Self {
        let mut t = Self::covariant(dim, 2).expect("rank 2");
        for i in 0..dim {
            t.data[i * dim + i] = 1.0;
        }
        t
    }

    /// Kronecker delta with one upper and one lower slot.
    pub fn kronecker(dim: usize) -> Self {
        let mut t = Self::identity_metric(dim);
        t.variance = vec![Variance::Contra, Variance::Co];
        t
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn rank(&self) -> usize {
        self.variance.len()
    }
    pub fn variance(&self) -> &[Variance] {
        &self.variance
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn with_variance(mut self, variance: &[Variance]) -> Result<Self> {
        if variance.len() != self.rank() {
            return Err(TensorError::Shape("variance length differs from rank".into()));
        }
        self.variance = variance.to_vec();
        Ok(self)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[ravel(idx, self.dim)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let k = ravel(idx, self.dim);
        self.data[k] = v;
    }

    /// Scalar value of a rank-0 tensor.
    pub fn value(&self) -> f64 {
        self.data[0]
    }

    pub fn fill_with(&mut self, f: impl Fn(&[usize]) -> f64) {
        let mut idx = vec![0; self.rank()];
        for k in 0..self.data.len() {
            unravel(k, self.dim, &mut idx);
            self.data[k] = f(&idx);
        }
    }

    /// Visit every multi-index with its entry.
    pub fn for_each(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut idx = vec![0; self.rank()];
        for (k, &v) in self.data.iter().enumerate() {
            unravel(k, self.dim, &mut idx);
            f(&idx, v);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean norm of the component array.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Component-wise inner product (no metric).
    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(TensorError::DimMismatch(self.dim, other.dim));
        }
        if self.rank() != other.rank() {
            return Err(TensorError::Shape(format!("rank {} vs {}", self.rank(), other.rank())));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a -= b);
        Ok(out)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += c * b);
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|a| *a *= c);
        out
    }

    pub fn max_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    fn check_slots(&self, slots: &[usize]) -> Result<()> {
        let r = self.rank();
        for (k, &s) in slots.iter().enumerate() {
            if s >= r {
                return Err(TensorError::SlotOutOfRange { slot: s, rank: r });
            }
            if slots[..k].contains(&s) {
                return Err(TensorError::DuplicateSlot(s));
            }
        }
        if let Some(&first) = slots.first() {
            if slots.iter().any(|&s| self.variance[s] != self.variance[first]) {
                return Err(TensorError::MixedVariance);
            }
        }
        Ok(())
    }

    fn permutation_sum(&self, slots: &[usize], signed: bool) -> Result<Self> {
        self.check_slots(slots)?;
        let perms = permutations_with_sign(slots.len());
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = 0.0);
        let mut idx = vec![0; self.rank()];
        let mut src = vec![0; self.rank()];
        for k in 0..self.data.len() {
            unravel(k, self.dim, &mut idx);
            let mut acc = 0.0;
            for (p, sign) in &perms {
                src.copy_from_slice(&idx);
                for (a, &s) in slots.iter().enumerate() {
                    src[s] = idx[slots[p[a]]];
                }
                let v = self.data[ravel(&src, self.dim)];
                acc += if signed { sign * v } else { v };
            }
            out.data[k] = acc;
        }
        Ok(out)
    }

    /// Unnormalized sum over all permutations of the listed slots.
    pub fn symmetrize(&self, slots: &[usize]) -> Result<Self> {
        self.permutation_sum(slots, false)
    }

    /// Unnormalized alternating sum over all permutations of the listed slots.
    pub fn antisymmetrize(&self, slots: &[usize]) -> Result<Self> {
        self.permutation_sum(slots, true)
    }

    /// Symmetrization divided by the number of permutations.
    pub fn symmetrize_normalized(&self, slots: &[usize]) -> Result<Self> {
        let f: usize = (1..=slots.len()).product();
        Ok(self.symmetrize(slots)?.scale(1.0 / f as f64))
    }

    pub fn antisymmetrize_normalized(&self, slots: &[usize]) -> Result<Self> {
        let f: usize = (1..=slots.len()).product();
        Ok(self.antisymmetrize(slots)?.scale(1.0 / f as f64))
    }

    /// Reorder slots: slot `s` of the result is slot `perm[s]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        if perm.len() != r {
            return Err(TensorError::Shape("permutation length differs from rank".into()));
        }
        let mut seen = vec![false; r];
        for &p in perm {
            if p >= r || seen[p] {
                return Err(TensorError::Shape("not a permutation".into()));
            }
            seen[p] = true;
        }
        let mut out = self.clone();
        out.variance = perm.iter().map(|&p| self.variance[p]).collect();
        let mut idx = vec![0; r];
        let mut src = vec![0; r];
        for k in 0..self.data.len() {
            unravel(k, self.dim, &mut idx);
            for s in 0..r {
                src[perm[s]] = idx[s];
            }
            out.data[k] = self.data[ravel(&src, self.dim)];
        }
        Ok(out)
    }

    /// Largest deviation from symmetry under swapping slots `a` and `b`.
    pub fn symmetry_defect(&self, a: usize, b: usize) -> f64 {
        let mut perm: Vec<usize> = (0..self.rank()).collect();
        perm.swap(a, b);
        self.permute(&perm).map(|p| p.max_diff(self)).unwrap_or(f64::INFINITY)
    }

    /// Largest deviation from full symmetry in all slots.
    pub fn full_symmetry_defect(&self) -> f64 {
        (1..self.rank()).map(|s| self.symmetry_defect(0, s)).fold(0.0, f64::max)
    }

    pub fn young_project(&self, tab: &Tableau, adjoint: bool) -> Result<Self> {
        tab.validate(self.rank())?;
        let rows = tab.rows.iter().filter(|r| r.len() > 1);
        let cols = tab.columns();
        let cols = cols.iter().filter(|c| c.len() > 1);
        let mut t = self.clone();
        if adjoint {
            for r in rows {
                t = t.symmetrize(r)?;
            }
            for c in cols {
                t = t.antisymmetrize(c)?;
            }
        } else {
            for c in cols {
                t = t.antisymmetrize(c)?;
            }
            for r in rows {
                t = t.symmetrize(r)?;
            }
        }
        Ok(t)
    }

    /// Raise slot `slot` with the inverse metric.
    pub fn raise(&self, slot: usize, ginv: &Self) -> Result<Self> {
        self.index_op(slot, ginv, Variance::Contra)
    }

    /// Lower slot `slot` with the metric.
    pub fn lower(&self, slot: usize, g: &Self) -> Result<Self> {
        self.index_op(slot, g, Variance::Co)
    }

    fn index_op(&self, slot: usize, m: &Self, to: Variance) -> Result<Self> {
        let r = self.rank();
        if slot >= r {
            return Err(TensorError::SlotOutOfRange { slot, rank: r });
        }
        if m.dim != self.dim {
            return Err(TensorError::DimMismatch(m.dim, self.dim));
        }
        let n = self.dim;
        let mut out = self.clone();
        out.variance[slot] = to;
        let mut idx = vec![0; r];
        for k in 0..self.data.len() {
            unravel(k, n, &mut idx);
            let i = idx[slot];
            let mut acc = 0.0;
            for a in 0..n {
                idx[slot] = a;
                acc += m.data[i * n + a] * self.data[ravel(&idx, n)];
            }
            out.data[k] = acc;
        }
        Ok(out)
    }

    /// Contract slots `a` and `b` of a single tensor using `ginv`
    /// (the identity is used when the two slots have opposite variance).
    pub fn trace(&self, a: usize, b: usize, ginv: &Self) -> Result<Self> {
        let r = self.rank();
        for s in [a, b] {
            if s >= r {
                return Err(TensorError::SlotOutOfRange { slot: s, rank: r });
            }
        }
        if a == b {
            return Err(TensorError::DuplicateSlot(a));
        }
        let n = self.dim;
        let mixed = self.variance[a] != self.variance[b];
        let rest: Vec<usize> = (0..r).filter(|&s| s != a && s != b).collect();
        let mut out = Self {
            dim: n,
            variance: rest.iter().map(|&s| self.variance[s]).collect(),
            data: vec![0.0; pow(n, rest.len())],
        };
        let mut ridx = vec![0; rest.len()];
        let mut full = vec![0; r];
        for k in 0..out.data.len() {
            unravel(k, n, &mut ridx);
            for (p, &s) in rest.iter().enumerate() {
                full[s] = ridx[p];
            }
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let w = if mixed { if i == j { 1.0 } else { 0.0 } } else { ginv.data[i * n + j] };
                    if w == 0.0 {
                        continue;
                    }
                    full[a] = i;
                    full[b] = j;
                    acc += w * self.data[ravel(&full, n)];
                }
            }
            out.data[k] = acc;
        }
        Ok(out)
    }

    /// Outer product (result rank limited to [`MAX_RANK`]).
    pub fn outer(&self, other: &Self) -> Result<Self> {
        let r = self.rank() + other.rank();
        if r > MAX_RANK {
            return Err(TensorError::RankOverflow(r));
        }
        Ok(self.outer_unchecked(other))
    }

    pub(crate) fn outer_unchecked(&self, other: &Self) -> Self {
        let mut data = Vec::with_capacity(self.data.len() * other.data.len());
        for a in &self.data {
            for b in &other.data {
                data.push(a * b);
            }
        }
        let mut variance = self.variance.clone();
        variance.extend_from_slice(&other.variance);
        Self { dim: self.dim, variance, data }
    }

    /// Trace-free part with respect to `g` over all slot pairs.
    pub fn trace_free(&self, g: &Self, ginv: &Self) -> Result<Self> {
        let slots: Vec<usize> = (0..self.rank()).collect();
        self.trace_free_slots(&slots, g, ginv)
    }

    /// Remove every `g`-trace among the listed slots by subtracting a
    /// combination of `g_ab ⊗ u` terms; the remaining slots are spectators.
    pub fn trace_free_slots(&self, slots: &[usize], g: &Self, ginv: &Self) -> Result<Self> {
        self.check_slots(slots)?;
        let n = self.dim;
        if g.dim != n || ginv.dim != n {
            return Err(TensorError::DimMismatch(g.dim, n));
        }
        if slots.len() < 2 {
            return Ok(self.clone());
        }
        let r = self.rank();
        let pairs: Vec<(usize, usize)> = (0..slots.len())
            .flat_map(|a| ((a + 1)..slots.len()).map(move |b| (a, b)))
            .map(|(a, b)| (slots[a], slots[b]))
            .collect();
        let sub = pow(n, r - 2);
        let ncols = pairs.len() * sub;
        // columns: g_{ab} ⊗ e_u placed in the slots complementary to (a,b)
        let mut basis: Vec<Self> = Vec::with_capacity(ncols);
        let mut uidx = vec![0; r - 2];
        for &(a, b) in &pairs {
            let rest: Vec<usize> = (0..r).filter(|&s| s != a && s != b).collect();
            for u in 0..sub {
                unravel(u, n, &mut uidx);
                let mut e = self.clone();
                e.fill_with(|idx| {
                    if rest.iter().enumerate().all(|(p, &s)| idx[s] == uidx[p]) {
                        g.data[idx[a] * n + idx[b]]
                    } else {
                        0.0
                    }
                });
                basis.push(e);
            }
        }
        let traces = |t: &Self| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(ncols);
            for &(a, b) in &pairs {
                v.extend_from_slice(&t.trace(a, b, ginv)?.data);
            }
            Ok(v)
        };
        let mut m = DMatrix::<f64>::zeros(ncols, ncols);
        for (c, e) in basis.iter().enumerate() {
            for (row, v) in traces(e)?.into_iter().enumerate() {
                m[(row, c)] = v;
            }
        }
        let rhs = DVector::from_vec(traces(self)?);
        let svd = m.svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) {
            return Err(TensorError::SingularMetric);
        }
        let u = svd.solve(&rhs, smax * 1e-12).map_err(|_| TensorError::SingularMetric)?;
        let mut out = self.clone();
        for (c, e) in basis.iter().enumerate() {
            let w = u[c];
            if w != 0.0 {
                out.data.iter_mut().zip(&e.data).for_each(|(o, x)| *o -= w * x);
            }
        }
        Ok(out)
    }
}

/// A filled Young tableau over tensor slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tableau {
    pub rows: Vec<Vec<usize>>,
}

impl Tableau {
    pub fn new(rows: Vec<Vec<usize>>) -> Self {
        Self { rows }
    }

    /// Slots of each column, read top to bottom.
    pub fn columns(&self) -> Vec<Vec<usize>> {
        let width = self.rows.first().map_or(0, |r| r.len());
        (0..width)
            .map(|c| self.rows.iter().filter(|r| r.len() > c).map(|r| r[c]).collect())
            .collect()
    }

    pub fn validate(&self, rank: usize) -> Result<()> {
        let mut seen = Vec::new();
        for w in self.rows.windows(2) {
            if w[1].len() > w[0].len() {
                return Err(TensorError::InvalidTableau("row lengths must weakly decrease".into()));
            }
        }
        for r in &self.rows {
            if r.is_empty() {
                return Err(TensorError::InvalidTableau("empty row".into()));
            }
            for &s in r {
                if s >= rank {
                    return Err(TensorError::InvalidTableau(format!("slot {s} exceeds rank {rank}")));
                }
                if seen.contains(&s) {
                    return Err(TensorError::InvalidTableau(format!("slot {s} repeated")));
                }
                seen.push(s);
            }
        }
        Ok(())
    }

    /// Shape as row lengths.
    pub fn shape(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.len()).collect()
    }
}

/// Riemann-type projector: symmetrize (0,2),(1,3), then antisymmetrize (0,1),(2,3).
pub fn riemann_project(t: &DenseTensor) -> Result<DenseTensor> {
    t.young_project(&Tableau::new(vec![vec![0, 2], vec![1, 3]]), true)
}

/// Largest violation among antisymmetry in both pairs, pair symmetry and the first Bianchi identity.
pub fn curvature_symmetry_defect(r: &DenseTensor) -> f64 {
    if r.rank() != 4 {
        return f64::INFINITY;
    }
    let n = r.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = r.get(&[i, j, k, l]);
                    worst = worst
                        .max((v + r.get(&[j, i, k, l])).abs())
                        .max((v + r.get(&[i, j, l, k])).abs())
                        .max((v - r.get(&[k, l, i, j])).abs())
                        .max((v + r.get(&[i, k, l, j]) + r.get(&[i, l, j, k])).abs());
                }
            }
        }
    }
    worst
}

/// Inverse of a rank-2 tensor, returned with contravariant slots.
pub fn inverse_metric(g: &DenseTensor) -> Result<DenseTensor> {
    if g.rank() != 2 {
        return Err(TensorError::Shape("metric must have rank 2".into()));
    }
    let n = g.dim();
    let m = DMatrix::from_row_slice(n, n, g.data());
    let inv = m.try_inverse().ok_or(TensorError::SingularMetric)?;
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            data.push(inv[(i, j)]);
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(TensorError::SingularMetric);
    }
    DenseTensor::from_data(n, &[Variance::Contra, Variance::Contra], data)
}

/// `κ (g_ik g_jl − g_il g_jk)`.
pub fn constant_curvature_tensor(g: &DenseTensor, kappa: f64) -> DenseTensor {
    let n = g.dim();
    DenseTensor::from_fn(n, &[Variance::Co; 4], |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        kappa * (g.get(&[i, k]) * g.get(&[j, l]) - g.get(&[i, l]) * g.get(&[j, k]))
    })
    .expect("rank 4")
}

/// Weyl tensor, trace-free Ricci tensor and scalar curvature of an algebraic curvature tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RicciParts {
    pub weyl: DenseTensor,
    pub ricci0: DenseTensor,
    pub scalar: f64,
}

/// `R_ik g_jl + R_jl g_ik − R_il g_jk − R_jk g_il` for a symmetric `a`.
fn kulkarni_nomizu(a: &DenseTensor, g: &DenseTensor) -> DenseTensor {
    let n = g.dim();
    DenseTensor::from_fn(n, &[Variance::Co; 4], |x| {
        let (i, j, k, l) = (x[0], x[1], x[2], x[3]);
        a.get(&[i, k]) * g.get(&[j, l]) + a.get(&[j, l]) * g.get(&[i, k])
            - a.get(&[i, l]) * g.get(&[j, k])
            - a.get(&[j, k]) * g.get(&[i, l])
    })
    .expect("rank 4")
}

pub fn ricci_decompose(riem: &DenseTensor, g: &DenseTensor) -> Result<RicciParts> {
    if riem.rank() != 4 || g.rank() != 2 {
        return Err(TensorError::Shape("expected rank-4 curvature and rank-2 metric".into()));
    }
    let n = riem.dim();
    if n < 3 {
        return Err(TensorError::Shape("Ricci decomposition needs dimension ≥ 3".into()));
    }
    let defect = curvature_symmetry_defect(riem);
    if defect > 1e-10 * riem.max_abs().max(1.0) {
        return Err(TensorError::NotCurvature(defect));
    }
    let ginv = inverse_metric(g)?;
    let ricci = riem.trace(0, 2, &ginv)?;
    let scalar = ricci.trace(0, 1, &ginv)?.value();
    let ricci0 = ricci.axpy(-scalar / n as f64, g)?;
    let nf = n as f64;
    let weyl = riem
        .axpy(-1.0 / (nf - 2.0), &kulkarni_nomizu(&ricci0, g))?
        .axpy(-scalar / (nf * (nf - 1.0)), &constant_curvature_tensor(g, 1.0))?;
    Ok(RicciParts { weyl, ricci0, scalar })
}

impl RicciParts {
    /// Rebuild the curvature tensor from its three irreducible parts.
    pub fn reassemble(&self, g: &DenseTensor) -> Result<DenseTensor> {
        let nf = g.dim() as f64;
        self.weyl
            .axpy(1.0 / (nf - 2.0), &kulkarni_nomizu(&self.ricci0, g))?
            .axpy(self.scalar / (nf * (nf - 1.0)), &constant_curvature_tensor(g, 1.0))
    }
}

/// Pick the variance of each output letter from its first appearance.
struct EinsumPlan {
    letters: Vec<char>,
    inputs: Vec<Vec<usize>>,
    output: Vec<usize>,
    out_variance: Vec<Variance>,
}

fn plan_einsum(spec: &str, tensors: &[&DenseTensor]) -> Result<EinsumPlan> {
    let (lhs, rhs) = spec.split_once("->").ok_or_else(|| TensorError::Einsum("missing '->'".into()))?;
    let terms: Vec<&str> = lhs.split(',').map(str::trim).collect();
    if terms.len() != tensors.len() {
        return Err(TensorError::Einsum(format!("{} terms for {} tensors", terms.len(), tensors.len())));
    }
    let mut letters: Vec<char> = Vec::new();
    let mut variance_of: Vec<Variance> = Vec::new();
    let mut inputs = Vec::new();
    for (term, t) in terms.iter().zip(tensors) {
        if term.chars().count() != t.rank() {
            return Err(TensorError::Einsum(format!("term '{term}' does not match rank {}", t.rank())));
        }
        let mut pos = Vec::new();
        for (s, c) in term.chars().enumerate() {
            let p = match letters.iter().position(|&l| l == c) {
                Some(p) => p,
                None => {
                    letters.push(c);
                    variance_of.push(t.variance[s]);
                    letters.len() - 1
                }
            };
            pos.push(p);
        }
        inputs.push(pos);
    }
    let mut output = Vec::new();
    for c in rhs.trim().chars() {
        let p = letters
            .iter()
            .position(|&l| l == c)
            .ok_or_else(|| TensorError::Einsum(format!("output letter '{c}' not in inputs")))?;
        output.push(p);
    }
    let out_variance = output.iter().map(|&p| variance_of[p]).collect();
    Ok(EinsumPlan { letters, inputs, output, out_variance })
}

fn run_einsum(spec: &str, tensors: &[&DenseTensor], max_rank: usize) -> Result<DenseTensor> {
    let n = tensors.first().map_or(0, |t| t.dim);
    if let Some(t) = tensors.iter().find(|t| t.dim != n) {
        return Err(TensorError::DimMismatch(t.dim, n));
    }
    let plan = plan_einsum(spec, tensors)?;
    if plan.output.len() > max_rank {
        return Err(TensorError::RankOverflow(plan.output.len()));
    }
    let nl = plan.letters.len();
    let summed: Vec<usize> = (0..nl).filter(|l| !plan.output.contains(l)).collect();
    // strides of every letter in every input
    let strides: Vec<Vec<usize>> = plan
        .inputs
        .iter()
        .map(|pos| {
            let mut st = vec![0; nl];
            let r = pos.len();
            for (s, &l) in pos.iter().enumerate() {
                st[l] += pow(n, r - 1 - s);
            }
            st
        })
        .collect();
    let out_len = pow(n, plan.output.len());
    let sum_len = pow(n, summed.len());
    let mut data = vec![0.0; out_len];
    let mut assign = vec![0usize; nl];
    let mut oidx = vec![0; plan.output.len()];
    let mut sidx = vec![0; summed.len()];
    let mut base = vec![0usize; tensors.len()];
    // offsets contributed by summed letters, precomputed per input
    let mut sum_offsets = vec![vec![0usize; sum_len]; tensors.len()];
    for s in 0..sum_len {
        unravel(s, n, &mut sidx);
        for (t, st) in strides.iter().enumerate() {
            sum_offsets[t][s] = summed.iter().zip(&sidx).map(|(&l, &v)| st[l] * v).sum();
        }
    }
    for (o, slot) in data.iter_mut().enumerate() {
        unravel(o, n, &mut oidx);
        for (p, &l) in plan.output.iter().enumerate() {
            assign[l] = oidx[p];
        }
        for (t, st) in strides.iter().enumerate() {
            base[t] = plan.output.iter().map(|&l| st[l] * assign[l]).sum();
        }
        let mut acc = 0.0;
        for s in 0..sum_len {
            let mut prod = 1.0;
            for (t, ten) in tensors.iter().enumerate() {
                prod *= ten.data[base[t] + sum_offsets[t][s]];
                if prod == 0.0 {
                    break;
                }
            }
            acc += prod;
        }
        *slot = acc;
    }
    Ok(DenseTensor { dim: n, variance: plan.out_variance, data })
}

/// Index-notation contraction, e.g. `einsum("ab,bjk->ajk", &[&ginv, &t])`.
///
/// Repeated letters are summed; the output variance of each letter is taken
/// from its first occurrence among the inputs. No metric is inserted.
pub fn einsum(spec: &str, tensors: &[&DenseTensor]) -> Result<DenseTensor> {
    run_einsum(spec, tensors, MAX_RANK)
}

pub(crate) fn einsum_wide(spec: &str, tensors: &[&DenseTensor]) -> DenseTensor {
    run_einsum(spec, tensors, MAX_WIDE_RANK).unwrap_or_else(|e| panic!("einsum '{spec}': {e}"))
}

/// Metric contraction of `a` and `b` over the listed `(slot_in_a, slot_in_b)` pairs.
///
/// Pairs of equal variance are joined through `ginv` (covariant) or its
/// inverse (contravariant); opposite variance contracts directly.
pub fn contract(a: &DenseTensor, b: &DenseTensor, pairs: &[(usize, usize)], ginv: &DenseTensor) -> Result<DenseTensor> {
    if a.dim != b.dim {
        return Err(TensorError::DimMismatch(a.dim, b.dim));
    }
    for &(sa, sb) in pairs {
        if sa >= a.rank() {
            return Err(TensorError::SlotOutOfRange { slot: sa, rank: a.rank() });
        }
        if sb >= b.rank() {
            return Err(TensorError::SlotOutOfRange { slot: sb, rank: b.rank() });
        }
    }
    let out_rank = a.rank() + b.rank() - 2 * pairs.len();
    if out_rank > MAX_RANK {
        return Err(TensorError::RankOverflow(out_rank));
    }
    let g = if pairs.iter().any(|&(sa, sb)| a.variance[sa] == Variance::Contra && b.variance[sb] == Variance::Contra) {
        Some(inverse_metric(ginv)?.with_variance(&[Variance::Co, Variance::Co])?)
    } else {
        None
    };
    let letters: Vec<char> = "abcdefghijklmnopqrstuvwxyz".chars().collect();
    let mut next = 0;
    let mut fresh = || {
        let c = letters[next];
        next += 1;
        c
    };
    let la: Vec<char> = (0..a.rank()).map(|_| fresh()).collect();
    let mut lb: Vec<char> = (0..b.rank()).map(|_| fresh()).collect();
    let mut terms = vec![la.iter().collect::<String>()];
    let mut ops: Vec<&DenseTensor> = vec![a];
    let mut metric_terms = Vec::new();
    for &(sa, sb) in pairs {
        match (a.variance[sa], b.variance[sb]) {
            (Variance::Co, Variance::Co) => {
                let c = fresh();
                metric_terms.push((format!("{}{}", la[sa], c), 0));
                lb[sb] = c;
            }
            (Variance::Contra, Variance::Contra) => {
                let c = fresh();
                metric_terms.push((format!("{}{}", la[sa], c), 1));
                lb[sb] = c;
            }
            _ => lb[sb] = la[sa],
        }
    }
    let contracted_b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let contracted_a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    terms.push(lb.iter().collect());
    ops.push(b);
    for (t, which) in &metric_terms {
        terms.push(t.clone());
        ops.push(if *which == 0 { ginv } else { g.as_ref().expect("metric computed") });
    }
    let out: String = (0..a.rank())
        .filter(|s| !contracted_a.contains(s))
        .map(|s| la[s])
        .chain((0..b.rank()).filter(|s| !contracted_b.contains(s)).map(|s| lb[s]))
        .collect();
    let spec = format!("{}->{}", terms.join(","), out);
    einsum(&spec, &ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t3_single(i: usize, j: usize, k: usize) -> DenseTensor {
        let mut t = DenseTensor::covariant(3, 3).unwrap();
        t.set(&[i, j, k], 1.0);
        t
    }

    #[test]
    fn permutation_signs() {
        let p = permutations_with_sign(3);
        assert_eq!(p.len(), 6);
        let odd = p.iter().filter(|(_, s)| *s < 0.0).count();
        assert_eq!(odd, 3);
        for (perm, s) in &p {
            let inversions = (0..3)
                .flat_map(|a| ((a + 1)..3).map(move |b| (a, b)))
                .filter(|&(a, b)| perm[a] > perm[b])
                .count();
            assert_eq!(*s, if inversions % 2 == 0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn symmetrize_pair() {
        let mut t = DenseTensor::covariant(3, 2).unwrap();
        t.set(&[0, 1], 1.0);
        let s = t.symmetrize(&[0, 1]).unwrap();
        assert_eq!(s.get(&[0, 1]), 1.0);
        assert_eq!(s.get(&[1, 0]), 1.0);
        assert_eq!(s.data().iter().sum::<f64>(), 2.0);
        let a = t.antisymmetrize(&[0, 1]).unwrap();
        assert_eq!(a.get(&[0, 1]), 1.0);
        assert_eq!(a.get(&[1, 0]), -1.0);
    }

    #[test]
    fn symmetrize_all_of_single_entry() {
        let s = t3_single(0, 1, 2).symmetrize(&[0, 1, 2]).unwrap();
        for (p, _) in permutations_with_sign(3) {
            assert_eq!(s.get(&p), 1.0);
        }
        assert_eq!(s.data().iter().sum::<f64>(), 6.0);
        let sym = s.symmetrize(&[0, 1, 2]).unwrap();
        assert_eq!(sym.max_diff(&s.scale(6.0)), 0.0);
    }

    #[test]
    fn antisymmetrize_partial_slots() {
        let a = t3_single(0, 1, 2).antisymmetrize(&[1, 2]).unwrap();
        assert_eq!(a.get(&[0, 1, 2]), 1.0);
        assert_eq!(a.get(&[0, 2, 1]), -1.0);
        assert_eq!(a.data().iter().map(|v| v.abs()).sum::<f64>(), 2.0);
    }

    #[test]
    fn hook_projection_matches_four_term_formula() {
        let hook = Tableau::new(vec![vec![1, 0], vec![2]]);
        assert_eq!(hook.columns(), vec![vec![1, 2], vec![0]]);
        let t = t3_single(0, 1, 2);
        let p = t.young_project(&hook, false).unwrap();
        let expect = |i, j, k| t.get(&[i, j, k]) - t.get(&[i, k, j]) + t.get(&[j, i, k]) - t.get(&[j, k, i]);
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert_eq!(p.get(&[i, j, k]), expect(i, j, k));
                }
            }
        }
        assert_eq!(p.get(&[0, 1, 2]), 1.0);
        let sym = t.symmetrize(&[0, 1, 2]).unwrap();
        assert_eq!(sym.young_project(&hook, false).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn errors_are_reported() {
        let t = DenseTensor::covariant(3, 2).unwrap();
        assert!(matches!(t.symmetrize(&[0, 2]), Err(TensorError::SlotOutOfRange { .. })));
        let m = t.clone().with_variance(&[Variance::Co, Variance::Contra]).unwrap();
        assert_eq!(m.symmetrize(&[0, 1]), Err(TensorError::MixedVariance));
        let bad = Tableau::new(vec![vec![0], vec![1, 2]]);
        assert!(matches!(
            DenseTensor::covariant(3, 3).unwrap().young_project(&bad, false),
            Err(TensorError::InvalidTableau(_))
        ));
        assert!(matches!(DenseTensor::covariant(3, 5), Err(TensorError::RankOverflow(5))));
    }

    #[test]
    fn trace_free_examples() {
        let g = DenseTensor::identity_metric(3);
        let gi = inverse_metric(&g).unwrap();
        assert!(g.trace_free(&g, &gi).unwrap().max_abs() < 1e-15);
        let d = DenseTensor::matrix(3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(d.trace_free(&g, &gi).unwrap().max_diff(&d) < 1e-15);
        let mut c = DenseTensor::covariant(3, 3).unwrap();
        for i in 0..3 {
            c.set(&[i, i, i], -3.0);
        }
        let tf = c.trace_free(&g, &gi).unwrap();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!(tf.trace(a, b, &gi).unwrap().max_abs() < 1e-13);
        }
        // D_iii − (3/5)(δ_ij u_k + …) with u_k = −3: brute-force oracle
        let u = -3.0;
        let expect = |i: usize, j: usize, k: usize| {
            let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            c.get(&[i, j, k]) - 0.2 * u * (d(i, j) + d(i, k) + d(j, k))
        };
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    assert!((tf.get(&[i, j, k]) - expect(i, j, k)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn contraction_examples() {
        let g = DenseTensor::identity_metric(3);
        let gi = inverse_metric(&g).unwrap();
        let id = contract(&g, &gi, &[(1, 0)], &gi).unwrap();
        assert_eq!(id.variance(), &[Variance::Co, Variance::Contra]);
        assert!(id.max_diff(&g) < 1e-15);
        let v = DenseTensor::vector(&[1.0, 2.0, 3.0]);
        let vv = v.outer(&v).unwrap();
        assert_eq!(vv.trace(0, 1, &gi).unwrap().value(), 14.0);
        let e = einsum("ij,ij->", &[&vv, &g]).unwrap();
        assert_eq!(e.value(), 14.0);
    }

    #[test]
    fn diagonal_cubic_product_structure() {
        let n = 3;
        let mut psi = DenseTensor::covariant(n, 3).unwrap();
        for (i, v) in [2.0, -1.0, 0.5].into_iter().enumerate() {
            psi.set(&[i, i, i], v);
        }
        let gi = inverse_metric(&DenseTensor::identity_metric(n)).unwrap();
        let prod = contract(&psi, &psi, &[(0, 2)], &gi).unwrap();
        prod.for_each(|x, v| {
            let on = x[0] == x[1] && x[2] == x[3] && x[0] == x[2];
            if !on {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0);
            }
        });
    }

    #[test]
    fn constant_curvature_decomposition() {
        let g = DenseTensor::matrix(3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]).unwrap();
        let r = constant_curvature_tensor(&g, 0.7);
        let parts = ricci_decompose(&r, &g).unwrap();
        assert!(parts.weyl.max_abs() < 1e-12);
        assert!(parts.ricci0.max_abs() < 1e-12);
        assert!((parts.scalar - 0.7 * 6.0).abs() < 1e-12);
        let z = ricci_decompose(&DenseTensor::covariant(3, 4).unwrap(), &g).unwrap();
        assert_eq!(z.scalar, 0.0);
        assert_eq!(z.weyl.max_abs(), 0.0);
    }

    #[test]
    fn ricci_decompose_rejects_non_curvature() {
        let mut t = DenseTensor::covariant(3, 4).unwrap();
        t.set(&[0, 1, 0, 1], 1.0);
        let g = DenseTensor::identity_metric(3);
        assert!(matches!(ricci_decompose(&t, &g), Err(TensorError::NotCurvature(_))));
    }

    #[test]
    fn raise_then_lower_roundtrip() {
        let g = DenseTensor::matrix(3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 1.5]).unwrap();
        let gi = inverse_metric(&g).unwrap();
        let mut t = DenseTensor::covariant(3, 3).unwrap();
        t.fill_with(|x| (x[0] + 2 * x[1]) as f64 - 0.5 * x[2] as f64);
        let back = t.raise(1, &gi).unwrap().lower(1, &g).unwrap();
        assert!(back.max_diff(&t) < 1e-14);
        assert_eq!(t.raise(1, &gi).unwrap().variance()[1], Variance::Contra);
    }

    #[test]
    fn permute_moves_slots() {
        let t = t3_single(0, 1, 2);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.get(&[2, 0, 1]), 1.0);
    }
}
