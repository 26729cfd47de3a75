//! Phase-space functions, canonical Poisson brackets and the functional-independence rank.
//!
//! Integrals are `F = K^{ab} p_a p_b + V^(α)`; only `dV^(α)_j = g_jb K^{bi} V_,i` is
//! ever needed, so companion potentials are never integrated.

use nalgebra::DMatrix;

use super::{CatalogError, Result, SystemSpec};
use crate::expr::Jet;
use crate::linalg::numeric_rank;

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGradient {
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseFunction {
    Position(usize),
    Momentum(usize),
    Hamiltonian,
    /// Integral built on the Killing tensor with this index.
    Integral(usize),
}

impl PhaseFunction {
    pub fn gradient(&self, spec: &SystemSpec, pt: &PhasePoint) -> Result<PhaseGradient> {
        let n = pt.q.len();
        let unit = |i: usize| (0..n).map(|a| if a == i { 1.0 } else { 0.0 }).collect();
        match *self {
            PhaseFunction::Position(i) => Ok(PhaseGradient { dq: unit(i), dp: vec![0.0; n] }),
            PhaseFunction::Momentum(i) => Ok(PhaseGradient { dq: vec![0.0; n], dp: unit(i) }),
            PhaseFunction::Hamiltonian => hamiltonian_gradient(spec, pt),
            PhaseFunction::Integral(k) => integral_gradient(spec, k, pt),
        }
    }
}

fn quadratic_gradient(upper: &[Jet], dw: &[f64], p: &[f64]) -> PhaseGradient {
    let n = p.len();
    let mut dq = dw.to_vec();
    let mut dp = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            let k = &upper[a * n + b];
            dp[a] += 2.0 * k.value() * p[b];
            for (j, d) in dq.iter_mut().enumerate() {
                *d += k.partial(&[j]) * p[a] * p[b];
            }
        }
    }
    PhaseGradient { dq, dp }
}

fn potential_gradient(spec: &SystemSpec, q: &[f64]) -> Result<Vec<f64>> {
    let v = spec.potential_jet(q, 1)?;
    Ok((0..q.len()).map(|i| v.partial(&[i])).collect())
}

/// Gradient of `H = g^{ab} p_a p_b + V`.
pub fn hamiltonian_gradient(spec: &SystemSpec, pt: &PhasePoint) -> Result<PhaseGradient> {
    let n = pt.q.len();
    let inv = spec.metric.conformal_factor().eval_jet(&pt.q, &spec.metric.params, 1)?.recip();
    let zero = Jet::zero(n, 1);
    let upper: Vec<Jet> = (0..n * n).map(|k| if k / n == k % n { inv.clone() } else { zero.clone() }).collect();
    Ok(quadratic_gradient(&upper, &potential_gradient(spec, &pt.q)?, &pt.p))
}

/// Gradient of `F = K^{ab} p_a p_b + V^(α)` for Killing tensor `idx`.
pub fn integral_gradient(spec: &SystemSpec, idx: usize, pt: &PhasePoint) -> Result<PhaseGradient> {
    let n = pt.q.len();
    let upper = spec.killing.upper_jets_of(idx, &pt.q, &spec.params, 1)?;
    let phi = spec.metric.conformal_factor().eval(&pt.q, &spec.metric.params)?;
    let dv = potential_gradient(spec, &pt.q)?;
    let dw: Vec<f64> = (0..n).map(|j| phi * (0..n).map(|i| upper[j * n + i].value() * dv[i]).sum::<f64>()).collect();
    Ok(quadratic_gradient(&upper, &dw, &pt.p))
}

/// `{F, G} = Σ_i (∂F/∂q_i ∂G/∂p_i − ∂G/∂q_i ∂F/∂p_i)`.
pub fn poisson_bracket(f: &PhaseFunction, g: &PhaseFunction, spec: &SystemSpec, pt: &PhasePoint) -> Result<f64> {
    let (a, b) = (f.gradient(spec, pt)?, g.gradient(spec, pt)?);
    Ok((0..pt.q.len()).map(|i| a.dq[i] * b.dp[i] - b.dq[i] * a.dp[i]).sum())
}

/// Numeric rank of the differentials of `H` and all Killing integrals at `pt`.
pub fn independence_rank(spec: &SystemSpec, pt: &PhasePoint) -> Result<usize> {
    let n = spec.dim;
    let need = 2 * n - 1;
    let have = spec.killing.len() + 1;
    if have < need {
        return Err(CatalogError::TooFewIntegrals { have, need });
    }
    let funcs = std::iter::once(PhaseFunction::Hamiltonian).chain((0..spec.killing.len()).map(PhaseFunction::Integral));
    let rows: Vec<Vec<f64>> = funcs
        .map(|f| f.gradient(spec, pt).map(|g| g.dq.into_iter().chain(g.dp).collect()))
        .collect::<Result<_>>()?;
    let m = DMatrix::from_fn(rows.len(), 2 * n, |r, c| rows[r][c]);
    Ok(numeric_rank(&m, 1e-9))
}
