//! Truncated monomial bases for Aᵖ(Ω): graded-lexicographic multi-index
//! enumeration, evaluation with complex gradients, and quadrature-weighted
//! least-squares projection of holomorphic data onto a basis.
//!
//! Monomials are the canonical representation; nothing here is
//! orthonormalized. Gram factorizations live with the extremal solvers.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::domains::QuadratureRule;
use crate::linalg::{self, DesignRows, HermitianSolver};
use crate::{C64, Error, Result};

/// Default truncation degrees keeping Gram matrices at a workable size.
pub fn default_degree(dim: usize) -> usize {
    match dim {
        1 => 30,
        2 => 12,
        _ => 8,
    }
}

/// Monomial basis `{ z^α : |α| ≤ degree }` in graded-lexicographic order:
/// index 0 is the constant, indices `1..=dim` are the coordinates
/// `z₁, …, z_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruncatedBasis {
    dim: usize,
    degree: usize,
    /// Flat multi-index storage, `dim` entries per index.
    indices: Vec<u32>,
    /// For k > 0: (index of α − e_j, j) where j is the first nonzero slot.
    parent: Vec<(usize, usize)>,
    /// For each index and coordinate j: position of α − e_j, if α_j > 0.
    decrement: Vec<Option<usize>>,
}

impl TruncatedBasis {
    pub fn new(dim: usize, degree: usize) -> Self {
        assert!((1..=3).contains(&dim), "complex dimension must be 1..=3");
        let mut indices: Vec<Vec<u32>> = Vec::new();
        for total in 0..=degree as u32 {
            let mut block = Vec::new();
            enumerate_degree(dim, total, &mut vec![0; dim], 0, &mut block);
            indices.extend(block);
        }
        let position: HashMap<Vec<u32>, usize> = indices
            .iter()
            .enumerate()
            .map(|(i, alpha)| (alpha.clone(), i))
            .collect();
        let mut parent = vec![(usize::MAX, usize::MAX); indices.len()];
        let mut decrement = vec![None; indices.len() * dim];
        for (k, alpha) in indices.iter().enumerate() {
            let mut first = None;
            for j in 0..dim {
                if alpha[j] > 0 {
                    let mut lower = alpha.clone();
                    lower[j] -= 1;
                    let pos = position[&lower];
                    decrement[k * dim + j] = Some(pos);
                    if first.is_none() {
                        first = Some((pos, j));
                    }
                }
            }
            if let Some(p) = first {
                parent[k] = p;
            }
        }
        let flat = indices.into_iter().flatten().collect();
        Self {
            dim,
            degree,
            indices: flat,
            parent,
            decrement,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis elements `K = C(degree + dim, dim)`.
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Multi-index of the k-th basis element.
    pub fn index(&self, k: usize) -> &[u32] {
        &self.indices[k * self.dim..(k + 1) * self.dim]
    }

    /// Evaluate all monomials at `point`, writing into `out` (length `len()`).
    pub fn eval_into(&self, point: &[C64], out: &mut [C64]) {
        debug_assert_eq!(point.len(), self.dim);
        debug_assert_eq!(out.len(), self.len());
        out[0] = C64::new(1.0, 0.0);
        for k in 1..self.len() {
            let (p, j) = self.parent[k];
            out[k] = out[p] * point[j];
        }
    }

    /// Monomial values at `point`.
    pub fn eval(&self, point: &[C64]) -> Result<Vec<C64>> {
        if point.len() != self.dim {
            return Err(Error::Validation(format!(
                "point dimension {} does not match basis dimension {}",
                point.len(),
                self.dim
            )));
        }
        let mut out = vec![C64::new(0.0, 0.0); self.len()];
        self.eval_into(point, &mut out);
        Ok(out)
    }

    /// Monomial values and complex partial derivatives
    /// `∂(z^α)/∂z_j` at `point`. Gradients are stored row-major, one row of
    /// `dim` entries per basis element.
    pub fn eval_with_gradient(&self, point: &[C64]) -> Result<(Vec<C64>, Vec<C64>)> {
        let values = self.eval(point)?;
        let mut grads = vec![C64::new(0.0, 0.0); self.len() * self.dim];
        for k in 0..self.len() {
            let alpha = self.index(k);
            for j in 0..self.dim {
                if alpha[j] > 0 {
                    let lower = self.decrement[k * self.dim + j].expect("α_j > 0 has a parent");
                    grads[k * self.dim + j] = C64::new(alpha[j] as f64, 0.0) * values[lower];
                }
            }
        }
        Ok((values, grads))
    }
}

fn enumerate_degree(dim: usize, total: u32, scratch: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == dim {
        scratch[pos] = total;
        out.push(scratch.clone());
        return;
    }
    // Lexicographically descending within a degree block, so that the
    // coordinates come out in the order z₁, …, z_n.
    for head in (0..=total).rev() {
        scratch[pos] = head;
        enumerate_degree(dim, total - head, scratch, pos + 1, out);
    }
}

/// A holomorphic function as a complex coefficient vector over a truncated
/// basis, `f(z) = Σ_k c_k z^{α_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HoloFunction {
    basis: TruncatedBasis,
    coeffs: DVector<C64>,
}

impl HoloFunction {
    pub fn new(basis: TruncatedBasis, coeffs: DVector<C64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::Validation(format!(
                "coefficient vector length {} does not match basis size {}",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    /// The constant function 1.
    pub fn one(basis: TruncatedBasis) -> Self {
        Self::monomial(basis, 0)
    }

    /// The k-th basis monomial.
    pub fn monomial(basis: TruncatedBasis, k: usize) -> Self {
        let mut coeffs = DVector::zeros(basis.len());
        coeffs[k] = C64::new(1.0, 0.0);
        Self { basis, coeffs }
    }

    /// The coordinate function `z_{j+1}` (j zero-based).
    pub fn coordinate(basis: TruncatedBasis, j: usize) -> Self {
        assert!(j < basis.dim());
        Self::monomial(basis, 1 + j)
    }

    pub fn basis(&self) -> &TruncatedBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &DVector<C64> {
        &self.coeffs
    }

    pub fn eval(&self, point: &[C64]) -> Result<C64> {
        let vals = self.basis.eval(point)?;
        let mut acc = C64::new(0.0, 0.0);
        for (v, c) in vals.iter().zip(self.coeffs.iter()) {
            acc += v * c;
        }
        Ok(acc)
    }

    /// Value and complex gradient `(∂f/∂z_1, …, ∂f/∂z_n)` at `point`.
    pub fn eval_with_gradient(&self, point: &[C64]) -> Result<(C64, Vec<C64>)> {
        let (vals, grads) = self.basis.eval_with_gradient(point)?;
        let mut value = C64::new(0.0, 0.0);
        let mut grad = vec![C64::new(0.0, 0.0); self.basis.dim()];
        for (k, c) in self.coeffs.iter().enumerate() {
            value += vals[k] * c;
            for j in 0..self.basis.dim() {
                grad[j] += grads[k * self.basis.dim() + j] * c;
            }
        }
        Ok((value, grad))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            basis: self.basis.clone(),
            coeffs: &self.coeffs * factor,
        }
    }
}

pub(crate) struct BasisDesign<'a> {
    pub basis: &'a TruncatedBasis,
    pub rule: &'a QuadratureRule,
}

impl DesignRows for BasisDesign<'_> {
    fn len(&self) -> usize {
        self.rule.len()
    }

    fn k(&self) -> usize {
        self.basis.len()
    }

    fn fill_row(&self, i: usize, out: &mut [C64]) {
        self.basis.eval_into(self.rule.node(i), out);
    }
}

/// Least-squares projection of point samples onto `basis` in the
/// quadrature-weighted L² sense. Returns the projection and the relative L²
/// misfit on the rule's nodes.
pub fn project<F>(
    samples: F,
    basis: &TruncatedBasis,
    rule: &QuadratureRule,
) -> Result<(HoloFunction, f64)>
where
    F: Fn(&[C64]) -> C64 + Sync,
{
    let values: Vec<C64> = (0..rule.len()).map(|i| samples(rule.node(i))).collect();
    project_values(&values, basis, rule)
}

/// As [`project`], with the samples already tabulated on the rule's nodes.
pub fn project_values(
    values: &[C64],
    basis: &TruncatedBasis,
    rule: &QuadratureRule,
) -> Result<(HoloFunction, f64)> {
    if basis.dim() != rule.dim() {
        return Err(Error::Validation(format!(
            "basis dimension {} does not match rule dimension {}",
            basis.dim(),
            rule.dim()
        )));
    }
    if values.len() != rule.len() {
        return Err(Error::Validation(format!(
            "sample count {} does not match rule size {}",
            values.len(),
            rule.len()
        )));
    }
    let design = BasisDesign { basis, rule };
    let (m, rhs) = linalg::weighted_normal(&design, rule.weights(), Some(values));
    let rhs = rhs.expect("rhs requested");
    let solver = HermitianSolver::factor(m);
    if solver.rank_deficient() {
        return Err(Error::Singular {
            cond: solver.cond(),
            context: "projection normal system is rank-deficient on this node set".into(),
        });
    }
    let coeffs = solver.solve(&rhs);
    let f = HoloFunction::new(basis.clone(), coeffs)?;
    let residual = projection_residual(&f, values, rule);
    Ok((f, residual))
}

/// Relative weighted L² misfit, computed pointwise to avoid the catastrophic
/// cancellation of the normal-equation identity.
fn projection_residual(f: &HoloFunction, values: &[C64], rule: &QuadratureRule) -> f64 {
    let design = BasisDesign {
        basis: f.basis(),
        rule,
    };
    let fitted = linalg::apply_design(&design, f.coeffs());
    let misfit = linalg::par_sum(rule.len(), |i| {
        rule.weights()[i] * (fitted[i] - values[i]).norm_sqr()
    });
    let scale = linalg::par_sum(rule.len(), |i| rule.weights()[i] * values[i].norm_sqr());
    if scale <= 0.0 {
        return misfit.max(0.0).sqrt();
    }
    (misfit.max(0.0) / scale).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_quadrature, Domain};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn graded_lex_ordering_n2() {
        let basis = TruncatedBasis::new(2, 2);
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(basis.len(), 6);
        for (k, e) in expected.iter().enumerate() {
            assert_eq!(basis.index(k), e.as_slice());
        }
    }

    #[test]
    fn index_count_matches_binomial() {
        // K = C(d + n, n)
        assert_eq!(TruncatedBasis::new(1, 30).len(), 31);
        assert_eq!(TruncatedBasis::new(2, 12).len(), 91);
        assert_eq!(TruncatedBasis::new(3, 8).len(), 165);
    }

    #[test]
    fn evaluation_at_origin_and_half() {
        let basis = TruncatedBasis::new(1, 2);
        assert_eq!(basis.eval(&[c(0.0, 0.0)]).unwrap(), vec![
            c(1.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0)
        ]);
        let vals = basis.eval(&[c(0.5, 0.0)]).unwrap();
        assert_eq!(vals, vec![c(1.0, 0.0), c(0.5, 0.0), c(0.25, 0.0)]);
    }

    #[test]
    fn gradient_of_low_monomials() {
        let basis = TruncatedBasis::new(1, 2);
        let (_, grads) = basis.eval_with_gradient(&[c(0.5, 0.0)]).unwrap();
        // d/dz of 1, z, z² at z = 0.5.
        assert_eq!(grads, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let basis = TruncatedBasis::new(2, 3);
        assert!(basis.eval(&[c(0.1, 0.0)]).is_err());
    }

    #[test]
    fn eval_matches_naive_powers() {
        let basis = TruncatedBasis::new(3, 5);
        let p = [c(0.3, -0.2), c(-0.1, 0.4), c(0.2, 0.1)];
        let vals = basis.eval(&p).unwrap();
        for k in 0..basis.len() {
            let alpha = basis.index(k);
            let mut expected = c(1.0, 0.0);
            for j in 0..3 {
                expected *= p[j].powu(alpha[j]);
            }
            assert!((vals[k] - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn project_exact_polynomial() {
        let basis = TruncatedBasis::new(1, 3);
        let rule = build_quadrature(&Domain::unit_disk(), 16).unwrap();
        let (f, residual) = project(|p: &[C64]| p[0] * p[0], &basis, &rule).unwrap();
        assert!(residual <= 1e-12, "residual {residual}");
        let expected = [0.0, 0.0, 1.0, 0.0];
        for (k, &e) in expected.iter().enumerate() {
            assert!((f.coeffs()[k] - c(e, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn project_mobius_pullback_density() {
        // (ψ∘f)·(f′)² with ψ ≡ 1 and f the Möbius map with a = 0.3 equals
        // 0.91²/(1−0.3z)⁴. Oracle: direct series summation of the truncation
        // tail beyond degree 25, which must dominate the projection residual.
        let a = 0.3;
        let basis = TruncatedBasis::new(1, 25);
        let rule = build_quadrature(&Domain::unit_disk(), 32).unwrap();
        let (_, residual) = project(
            |p: &[C64]| {
                let z = p[0];
                let d = c(1.0, 0.0) - a * z;
                let fp = c(1.0 - a * a, 0.0) / (d * d);
                fp * fp
            },
            &basis,
            &rule,
        )
        .unwrap();
        assert!(residual <= 1e-6, "residual {residual}");

        // Series oracle: coefficients of 1/(1−az)⁴ are C(k+3,3) a^k; the
        // relative L²(𝔻) tail past degree 25 bounds the best possible misfit.
        let norm2 = |k: u32| PI / (k as f64 + 1.0);
        let coeff = |k: u32| {
            let kf = k as f64;
            (kf + 1.0) * (kf + 2.0) * (kf + 3.0) / 6.0 * a.powi(k as i32)
        };
        let mut tail = 0.0;
        let mut total = 0.0;
        for k in 0..200u32 {
            let t = coeff(k).powi(2) * norm2(k);
            total += t;
            if k > 25 {
                tail += t;
            }
        }
        let oracle = (tail / total).sqrt();
        assert!(oracle < 1e-6, "oracle tail {oracle}");
        assert!(residual <= 10.0 * oracle.max(1e-12) + 1e-10);
    }

    #[test]
    fn project_slow_geometric_series_leaves_residual() {
        // 1/(1−0.9z) has Taylor coefficients 0.9^k; the tail past degree 10
        // is large. Oracle: direct series truncation error.
        let basis = TruncatedBasis::new(1, 10);
        let rule = build_quadrature(&Domain::unit_disk(), 32).unwrap();
        let (_, residual) = project(
            |p: &[C64]| c(1.0, 0.0) / (c(1.0, 0.0) - 0.9 * p[0]),
            &basis,
            &rule,
        )
        .unwrap();
        assert!(residual > 1e-2, "residual {residual}");

        let norm2 = |k: u32| PI / (k as f64 + 1.0);
        let mut tail = 0.0;
        let mut total = 0.0;
        for k in 0..2000u32 {
            let t = 0.9f64.powi(2 * k as i32) * norm2(k);
            total += t;
            if k > 10 {
                tail += t;
            }
        }
        let oracle = (tail / total).sqrt();
        assert!(oracle > 1e-2);
        // The computed residual should be in the oracle's ballpark.
        assert!(residual >= 0.5 * oracle && residual <= 2.0 * oracle);
    }

    #[test]
    fn projection_is_idempotent_and_linear() {
        let basis = TruncatedBasis::new(1, 8);
        let rule = build_quadrature(&Domain::unit_disk(), 16).unwrap();
        let mut coeffs_f = DVector::zeros(basis.len());
        let mut coeffs_g = DVector::zeros(basis.len());
        for k in 0..basis.len() {
            coeffs_f[k] = c(0.3 - 0.05 * k as f64, 0.1 * (k as f64).sin());
            coeffs_g[k] = c((k as f64 * 0.7).cos() * 0.2, -0.03 * k as f64);
        }
        let f = HoloFunction::new(basis.clone(), coeffs_f).unwrap();
        let g = HoloFunction::new(basis.clone(), coeffs_g).unwrap();

        let (pf, rf) = project(|p: &[C64]| f.eval(p).unwrap(), &basis, &rule).unwrap();
        assert!(rf <= 1e-12);
        assert!((pf.coeffs() - f.coeffs()).norm() <= 1e-12);

        let (a, b) = (c(2.0, -1.0), c(-0.5, 0.25));
        let (pg, _) = project(|p: &[C64]| g.eval(p).unwrap(), &basis, &rule).unwrap();
        let (pc, _) = project(
            |p: &[C64]| a * f.eval(p).unwrap() + b * g.eval(p).unwrap(),
            &basis,
            &rule,
        )
        .unwrap();
        let combo = pf.coeffs() * a + pg.coeffs() * b;
        assert!((pc.coeffs() - combo).norm() <= 1e-12);
    }
}
