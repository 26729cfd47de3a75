//! Truncated multivariate Taylor jets storing raw partial derivatives.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::tensor::{DenseTensor, Variance};

/// Highest derivative order a jet may carry.
pub const MAX_ORDER: usize = 4;

/// Multi-indices of total degree ≤ `MAX_ORDER` in graded order, so the
/// indices of an order-`k` jet are a prefix of the full list.
#[derive(Debug)]
pub(crate) struct IndexTable {
    pub dim: usize,
    pub alphas: Vec<Vec<u8>>,
    lookup: HashMap<Vec<u8>, usize>,
    /// Prefix length per order.
    pub len_by_order: Vec<usize>,
    /// Leibniz terms `(target, a, b, C(α, β))`, sorted by target.
    mul_terms: Vec<(usize, usize, usize, f64)>,
    /// Number of Leibniz terms whose target lies in each prefix.
    mul_len_by_order: Vec<usize>,
    /// `shift[l][k]` = position of `alphas[k] + e_l` when its degree stays ≤ MAX_ORDER.
    shift: Vec<Vec<Option<usize>>>,
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl IndexTable {
    fn build(dim: usize) -> Self {
        let mut alphas: Vec<Vec<u8>> = vec![vec![0; dim]];
        let mut len_by_order = vec![1];
        let mut frontier = vec![vec![0u8; dim]];
        for _deg in 1..=MAX_ORDER {
            let mut next: Vec<Vec<u8>> = Vec::new();
            for a in &frontier {
                // only raise variables at or after the last nonzero one: each multi-index once
                let last = a.iter().rposition(|&v| v > 0).unwrap_or(0);
                for l in last..dim {
                    let mut b = a.clone();
                    b[l] += 1;
                    next.push(b);
                }
            }
            alphas.extend(next.iter().cloned());
            len_by_order.push(alphas.len());
            frontier = next;
        }
        let lookup: HashMap<Vec<u8>, usize> = alphas.iter().cloned().enumerate().map(|(i, a)| (a, i)).collect();
        let mut mul_terms = Vec::new();
        let mut mul_len_by_order = vec![0; MAX_ORDER + 1];
        for (t, alpha) in alphas.iter().enumerate() {
            // enumerate β ≤ α
            let mut beta = vec![0u8; dim];
            loop {
                let gamma: Vec<u8> = alpha.iter().zip(&beta).map(|(a, b)| a - b).collect();
                let c: f64 = alpha.iter().zip(&beta).map(|(&a, &b)| binom(a as usize, b as usize)).product();
                mul_terms.push((t, lookup[&beta], lookup[&gamma], c));
                let mut p = 0;
                loop {
                    if p == dim {
                        break;
                    }
                    if beta[p] < alpha[p] {
                        beta[p] += 1;
                        break;
                    }
                    beta[p] = 0;
                    p += 1;
                }
                if p == dim {
                    break;
                }
            }
            let deg: usize = alpha.iter().map(|&v| v as usize).sum();
            for m in mul_len_by_order.iter_mut().skip(deg) {
                *m = mul_terms.len();
            }
        }
        let shift = (0..dim)
            .map(|l| {
                alphas
                    .iter()
                    .map(|a| {
                        let mut b = a.clone();
                        b[l] += 1;
                        lookup.get(&b).copied()
                    })
                    .collect()
            })
            .collect();
        Self { dim, alphas, lookup, len_by_order, mul_terms, mul_len_by_order, shift }
    }

    pub fn position(&self, alpha: &[u8]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }
}

pub(crate) fn table(dim: usize) -> Arc<IndexTable> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<IndexTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("jet table cache poisoned");
    map.entry(dim).or_insert_with(|| Arc::new(IndexTable::build(dim))).clone()
}

/// Value and all raw partial derivatives up to `order` of a scalar field at a point.
#[derive(Clone)]
pub struct Jet {
    order: usize,
    coeffs: Vec<f64>,
    table: Arc<IndexTable>,
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet").field("dim", &self.dim()).field("order", &self.order).field("coeffs", &self.coeffs).finish()
    }
}

impl PartialEq for Jet {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.order == other.order && self.coeffs == other.coeffs
    }
}

impl Jet {
    pub fn zero(dim: usize, order: usize) -> Self {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        let table = table(dim);
        let len = table.len_by_order[order];
        Self { order, coeffs: vec![0.0; len], table }
    }

    pub fn constant(dim: usize, order: usize, c: f64) -> Self {
        let mut j = Self::zero(dim, order);
        j.coeffs[0] = c;
        j
    }

    /// The coordinate function `x_{var+1}` with value `value`.
    pub fn variable(dim: usize, order: usize, var: usize, value: f64) -> Self {
        let mut j = Self::constant(dim, order, value);
        if order > 0 {
            j.coeffs[1 + var] = 1.0;
        }
        j
    }

    /// Build from raw coefficients in graded multi-index order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Self {
        let j = Self::zero(dim, order);
        assert_eq!(coeffs.len(), j.coeffs.len(), "coefficient count");
        Self { coeffs, ..j }
    }

    pub fn dim(&self) -> usize {
        self.table.dim
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// Multi-indices matching [`Jet::coeffs`].
    pub fn multi_indices(&self) -> Vec<Vec<u8>> {
        self.table.alphas[..self.coeffs.len()].to_vec()
    }

    /// Raw partial derivative `∂^α f`.
    pub fn coeff(&self, alpha: &[u8]) -> Option<f64> {
        self.table.position(alpha).filter(|&p| p < self.coeffs.len()).map(|p| self.coeffs[p])
    }

    /// Partial derivative along the listed variables, e.g. `&[0, 0, 2]` = ∂₁∂₁∂₃.
    pub fn partial(&self, vars: &[usize]) -> f64 {
        let mut alpha = vec![0u8; self.dim()];
        for &v in vars {
            alpha[v] += 1;
        }
        self.coeff(&alpha).expect("partial derivative beyond jet order")
    }

    /// All partials of total order `k` as a symmetric covariant tensor.
    pub fn derivative_tensor(&self, k: usize) -> DenseTensor {
        assert!(k <= self.order);
        DenseTensor::from_fn(self.dim(), &vec![Variance::Co; k], |idx| self.partial(idx)).expect("rank ≤ MAX_ORDER")
    }

    /// Drop derivatives above `order`.
    pub fn truncate(&self, order: usize) -> Self {
        assert!(order <= self.order);
        Self { order, coeffs: self.coeffs[..self.table.len_by_order[order]].to_vec(), table: self.table.clone() }
    }

    /// `∂_l` of the field, one order lower.
    pub fn derivative(&self, l: usize) -> Self {
        assert!(self.order > 0, "cannot differentiate an order-0 jet");
        let order = self.order - 1;
        let len = self.table.len_by_order[order];
        let shift = &self.table.shift[l];
        let coeffs = (0..len).map(|k| self.coeffs[shift[k].expect("within table")]).collect();
        Self { order, coeffs, table: self.table.clone() }
    }

    fn check(&self, other: &Self) {
        assert_eq!(self.dim(), other.dim(), "jet dimension mismatch");
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        let mut j = self.clone();
        j.coeffs[0] += c;
        j
    }

    /// `self + c·other`, truncated to the lower order.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        self.check(other);
        let order = self.order.min(other.order);
        let len = self.table.len_by_order[order];
        let coeffs = (0..len).map(|k| self.coeffs[k] + c * other.coeffs[k]).collect();
        Self { order, coeffs, table: self.table.clone() }
    }

    pub fn mul_jet(&self, other: &Self) -> Self {
        self.check(other);
        let order = self.order.min(other.order);
        let mut out = Self::zero(self.dim(), order);
        let nterms = self.table.mul_len_by_order[order];
        for &(t, a, b, c) in &self.table.mul_terms[..nterms] {
            out.coeffs[t] += c * self.coeffs[a] * other.coeffs[b];
        }
        out
    }

    /// `h(self)` given `derivs[k] = h^{(k)}(value)` for `k = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Self {
        let mut delta = self.clone();
        delta.coeffs[0] = 0.0;
        let mut out = Self::constant(self.dim(), self.order, derivs[0]);
        let mut power = Self::constant(self.dim(), self.order, 1.0);
        let mut fact = 1.0;
        for (k, &d) in derivs.iter().enumerate().take(self.order + 1).skip(1) {
            power = power.mul_jet(&delta);
            fact *= k as f64;
            if d != 0.0 {
                out = out.axpy(d / fact, &power);
            }
        }
        out
    }

    pub fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose(&vec![e; self.order + 1])
    }

    /// Natural logarithm; caller guarantees a positive value.
    pub fn ln(&self) -> Self {
        let u = self.value();
        let mut d = vec![u.ln()];
        let mut c = 1.0;
        for k in 1..=self.order {
            d.push(c / u.powi(k as i32));
            c *= -(k as f64);
        }
        self.compose(&d)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cyc = [s, c, -s, -c];
        self.compose(&(0..=self.order).map(|k| cyc[k % 4]).collect::<Vec<_>>())
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cyc = [c, -s, -c, s];
        self.compose(&(0..=self.order).map(|k| cyc[k % 4]).collect::<Vec<_>>())
    }

    /// `self^r` for real `r` via the generalized power rule; value must be nonzero.
    pub fn powf(&self, r: f64) -> Self {
        let u = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut c = 1.0;
        for k in 0..=self.order {
            d.push(c * u.powf(r - k as f64));
            c *= r - k as f64;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Self {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Self {
        let u = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut c = 1.0;
        for k in 0..=self.order {
            d.push(c / u.powi(k as i32 + 1));
            c *= -((k + 1) as f64);
        }
        self.compose(&d)
    }

    /// Non-negative integer power by repeated squaring.
    pub fn powi(&self, k: u32) -> Self {
        let mut result = Self::constant(self.dim(), self.order, 1.0);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul_jet(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul_jet(&base);
            }
        }
        result
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.axpy(-1.0, rhs)
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_jet(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}
