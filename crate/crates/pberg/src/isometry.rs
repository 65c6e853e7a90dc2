//! Pullback isometries induced by biholomorphisms, reconstruction of the map
//! from an abstract operator, and verification of the Jacobian relation.
//!
//! A biholomorphism `f: Ω₁ → Ω₂` induces the pullback
//! `ψ ↦ (ψ∘f)·J_f^{2/p}` from Aᵖ(Ω₂) to Aᵖ(Ω₁), a linear isometry. On
//! truncated spaces the operator becomes a matrix whose column `j` is the
//! least-squares projection of `(e_j∘f)·J_f^{2/p}` onto the target basis.
//! Conversely, the map is recovered from the operator alone through
//! `φ₀ = pullback(1)`, `φ_j = pullback(w_j)`, `F = (φ₁/φ₀, …, φ_n/φ₀)`,
//! and the relation `|Tφ(F(z))|·|J_F(z)|^{2/p} = |φ(z)|` ties the two
//! together.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis::{BasisDesign, HoloFunction, TruncatedBasis};
use crate::domains::{Domain, QuadratureRule};
use crate::extremal::{pnorm, Weight};
use crate::linalg::{self, HermitianSolver};
use crate::{C64, Error, Result};

/// A holomorphic map given as a callable together with its holomorphic
/// Jacobian determinant.
#[derive(Clone)]
pub struct Holomap {
    dim: usize,
    map: Arc<dyn Fn(&[C64]) -> Vec<C64> + Send + Sync>,
    jacobian: Arc<dyn Fn(&[C64]) -> C64 + Send + Sync>,
}

impl std::fmt::Debug for Holomap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Holomap")
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl Holomap {
    pub fn new<M, J>(dim: usize, map: M, jacobian: J) -> Self
    where
        M: Fn(&[C64]) -> Vec<C64> + Send + Sync + 'static,
        J: Fn(&[C64]) -> C64 + Send + Sync + 'static,
    {
        Self {
            dim,
            map: Arc::new(map),
            jacobian: Arc::new(jacobian),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(dim, |z: &[C64]| z.to_vec(), |_| C64::new(1.0, 0.0))
    }

    /// `z ↦ r z` with Jacobian `rⁿ`.
    pub fn scaling(dim: usize, r: f64) -> Self {
        let j = C64::new(r.powi(dim as i32), 0.0);
        Self::new(
            dim,
            move |z: &[C64]| z.iter().map(|w| w * r).collect(),
            move |_| j,
        )
    }

    /// Disk automorphism `z ↦ (z-a)/(1-āz)` with Jacobian `(1-|a|²)/(1-āz)²`.
    pub fn mobius(a: C64) -> Self {
        let one = C64::new(1.0, 0.0);
        let norm_factor = 1.0 - a.norm_sqr();
        Self::new(
            1,
            move |z: &[C64]| vec![(z[0] - a) / (one - a.conj() * z[0])],
            move |z: &[C64]| {
                let d = one - a.conj() * z[0];
                C64::new(norm_factor, 0.0) / (d * d)
            },
        )
    }

    /// Linear map `z ↦ M z` (constant Jacobian `det M`).
    pub fn linear(matrix: DMatrix<C64>) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        let dim = matrix.nrows();
        let det = matrix.clone().determinant();
        Self::new(
            dim,
            move |z: &[C64]| {
                let v = DVector::from_column_slice(z);
                (&matrix * v).iter().cloned().collect()
            },
            move |_| det,
        )
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Holomap) -> Self {
        assert_eq!(self.dim, inner.dim);
        let outer_map = self.map.clone();
        let outer_jac = self.jacobian.clone();
        let inner_map = inner.map.clone();
        let inner_jac = inner.jacobian.clone();
        let inner_map2 = inner.map.clone();
        Self::new(
            self.dim,
            move |z: &[C64]| outer_map(&inner_map(z)),
            move |z: &[C64]| outer_jac(&inner_map2(z)) * inner_jac(z),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, z: &[C64]) -> Vec<C64> {
        (self.map)(z)
    }

    pub fn jacobian(&self, z: &[C64]) -> C64 {
        (self.jacobian)(z)
    }
}

/// Which action the stored matrix implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `ψ ↦ (ψ∘f)·J_f^{2/p}`: source basis on Ω₂, target basis on Ω₁.
    Pullback,
    /// The isometry `T: Aᵖ(Ω₁) → Aᵖ(Ω₂)` itself.
    Forward,
}

/// A linear map between truncated Aᵖ coefficient spaces.
#[derive(Debug, Clone)]
pub struct IsometryOperator {
    /// Maps source-basis coefficient vectors to target-basis ones
    /// (`target_len × source_len`).
    pub matrix: DMatrix<C64>,
    pub p: f64,
    pub source_basis: TruncatedBasis,
    pub target_basis: TruncatedBasis,
    pub direction: Direction,
    /// Worst relative residual incurred while projecting columns; abstract
    /// operators supplied as raw matrices carry the caller's figure.
    pub projection_residual: f64,
}

impl IsometryOperator {
    /// Wrap a raw matrix as an operator; no isometry property is assumed and
    /// every downstream guarantee degrades to the reported diagnostics.
    pub fn from_matrix(
        matrix: DMatrix<C64>,
        p: f64,
        source_basis: TruncatedBasis,
        target_basis: TruncatedBasis,
        direction: Direction,
        projection_residual: f64,
    ) -> Result<Self> {
        if matrix.nrows() != target_basis.len() || matrix.ncols() != source_basis.len() {
            return Err(Error::Validation(format!(
                "operator shape {}×{} does not match bases {}×{}",
                matrix.nrows(),
                matrix.ncols(),
                target_basis.len(),
                source_basis.len()
            )));
        }
        Ok(Self {
            matrix,
            p,
            source_basis,
            target_basis,
            direction,
            projection_residual,
        })
    }

    /// Apply the stored action to a function expanded on the source basis.
    pub fn apply(&self, f: &HoloFunction) -> Result<HoloFunction> {
        if f.basis() != &self.source_basis {
            return Err(Error::Validation(
                "function is not expanded on the operator's source basis".into(),
            ));
        }
        HoloFunction::new(self.target_basis.clone(), &self.matrix * f.coeffs())
    }
}

/// Tunables for operator construction and inversion.
#[derive(Debug, Clone)]
pub struct IsometryOptions {
    /// Reject pullback operators whose worst column residual exceeds this.
    pub residual_cap: f64,
    /// Reject inversions/reconstructions beyond this condition estimate.
    pub condition_cap: f64,
    /// Denominator exclusion threshold, relative to `max|φ₀|` on the grid.
    pub tau_factor: f64,
}

impl Default for IsometryOptions {
    fn default() -> Self {
        Self {
            residual_cap: 1e-2,
            condition_cap: 1e12,
            tau_factor: 1e-8,
        }
    }
}

/// Build the pullback operator of a biholomorphism `f: Ω₁ → Ω₂` on truncated
/// bases: column `j` is the projection of `(e_j∘f)·J_f^{2/p}` onto the
/// target basis over `rule1`.
///
/// The principal branch of `J_f^{2/p}` is anchored at the node closest to the
/// domain's center and extended by continuity across a proximity graph of the
/// nodes. Non-simply-connected domains are refused unless `2/p` is an
/// integer, and detected winding is refused outright.
pub fn pullback_operator(
    f: &Holomap,
    p: f64,
    source_basis: &TruncatedBasis,
    target_basis: &TruncatedBasis,
    domain1: &Domain,
    rule1: &QuadratureRule,
    opts: &IsometryOptions,
) -> Result<IsometryOperator> {
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::Validation(format!("p must be positive, got {p}")));
    }
    let dim = domain1.dim();
    if f.dim() != dim
        || source_basis.dim() != dim
        || target_basis.dim() != dim
        || rule1.dim() != dim
    {
        return Err(Error::Validation(
            "map, bases, domain and rule must share one complex dimension".into(),
        ));
    }

    let n = rule1.len();
    let mapped: Vec<C64> = {
        let mut out = Vec::with_capacity(n * dim);
        for i in 0..n {
            out.extend(f.apply(rule1.node(i)));
        }
        out
    };
    let jvals: Vec<C64> = (0..n).map(|i| f.jacobian(rule1.node(i))).collect();
    let jscale = jvals.iter().map(|j| j.norm()).fold(0.0f64, f64::max);
    if jvals.iter().any(|j| j.norm() <= 1e-14 * jscale) {
        return Err(Error::Refused(
            "J_f vanishes (numerically) on a quadrature node".into(),
        ));
    }
    let q = 2.0 / p;
    let jpow: Vec<C64> = if (q - q.round()).abs() < 1e-9 && q.round() >= 1.0 {
        let m = q.round() as u32;
        jvals.iter().map(|j| j.powu(m)).collect()
    } else {
        if !domain1.simply_connected() {
            return Err(Error::Refused(format!(
                "non-simply-connected domain with p = {p}: J^{{2/p}} needs a branch choice; only p = 2/m is defined intrinsically"
            )));
        }
        let logs = continued_log(&jvals, rule1, &domain1.center())?;
        logs.iter().map(|l| (l * q).exp()).collect()
    };

    // One weighted normal factorization serves every column.
    let design = BasisDesign {
        basis: target_basis,
        rule: rule1,
    };
    let (m, _) = linalg::weighted_normal(&design, rule1.weights(), None);
    let solver = HermitianSolver::factor(m);
    if solver.rank_deficient() {
        return Err(Error::Singular {
            cond: solver.cond(),
            context: "target Gram matrix is rank-deficient on this rule".into(),
        });
    }

    let kt = target_basis.len();
    let ks = source_basis.len();
    // RHS_{t,s} = Σ_i w_i conj(e_t(x_i)) e_s(f(x_i)) jpow_i, deterministic
    // chunked accumulation.
    let chunk = |lo: usize, hi: usize| {
        let mut acc = vec![C64::new(0.0, 0.0); kt * ks];
        let mut trow = vec![C64::new(0.0, 0.0); kt];
        let mut srow = vec![C64::new(0.0, 0.0); ks];
        for i in lo..hi {
            let w = rule1.weights()[i];
            target_basis.eval_into(rule1.node(i), &mut trow);
            source_basis.eval_into(&mapped[i * dim..(i + 1) * dim], &mut srow);
            let jp = jpow[i];
            for (t, tv) in trow.iter().enumerate() {
                let wt = tv.conj() * w;
                let row = &mut acc[t * ks..(t + 1) * ks];
                for (slot, sv) in row.iter_mut().zip(&srow) {
                    *slot += wt * (sv * jp);
                }
            }
        }
        acc
    };
    let rhs_flat: Vec<C64> = if n < 2048 {
        chunk(0, n)
    } else {
        let step = n.div_ceil(32);
        let bounds: Vec<(usize, usize)> = (0..n.div_ceil(step))
            .map(|c| (c * step, ((c + 1) * step).min(n)))
            .collect();
        let parts: Vec<Vec<C64>> = bounds
            .into_par_iter()
            .map(|(lo, hi)| chunk(lo, hi))
            .collect();
        let mut acc = vec![C64::new(0.0, 0.0); kt * ks];
        for part in parts {
            for (dst, src) in acc.iter_mut().zip(&part) {
                *dst += src;
            }
        }
        acc
    };

    let mut matrix = DMatrix::zeros(kt, ks);
    for s in 0..ks {
        let rhs = DVector::from_iterator(kt, (0..kt).map(|t| rhs_flat[t * ks + s]));
        matrix.set_column(s, &solver.solve(&rhs));
    }

    // Column residuals: relative weighted misfit of each projected density.
    let mut misfit = vec![0.0f64; ks];
    let mut norms = vec![0.0f64; ks];
    {
        let mut trow = vec![C64::new(0.0, 0.0); kt];
        let mut srow = vec![C64::new(0.0, 0.0); ks];
        for i in 0..n {
            let w = rule1.weights()[i];
            target_basis.eval_into(rule1.node(i), &mut trow);
            source_basis.eval_into(&mapped[i * dim..(i + 1) * dim], &mut srow);
            let jp = jpow[i];
            for s in 0..ks {
                let mut fitted = C64::new(0.0, 0.0);
                for (t, tv) in trow.iter().enumerate() {
                    fitted += tv * matrix[(t, s)];
                }
                let y = srow[s] * jp;
                misfit[s] += w * (fitted - y).norm_sqr();
                norms[s] += w * y.norm_sqr();
            }
        }
    }
    let projection_residual = (0..ks)
        .map(|s| (misfit[s].max(0.0) / norms[s].max(f64::MIN_POSITIVE)).sqrt())
        .fold(0.0f64, f64::max);
    if projection_residual > opts.residual_cap {
        return Err(Error::Refused(format!(
            "projection residual {projection_residual:.3e} exceeds cap {:.3e}; raise the target degree or resolution",
            opts.residual_cap
        )));
    }

    Ok(IsometryOperator {
        matrix,
        p,
        source_basis: source_basis.clone(),
        target_basis: target_basis.clone(),
        direction: Direction::Pullback,
        projection_residual,
    })
}

/// Branch-continued logarithm of nonvanishing node values: principal branch
/// at the node nearest `anchor`, extended along a BFS tree of a proximity
/// graph; inconsistent circulation (winding) is refused.
fn continued_log(values: &[C64], rule: &QuadratureRule, anchor: &[C64]) -> Result<Vec<C64>> {
    let n = values.len();
    let dim = rule.dim();
    let nd = 2 * dim;
    let coords = |i: usize| -> Vec<f64> {
        rule.node(i)
            .iter()
            .flat_map(|z| [z.re, z.im])
            .collect::<Vec<f64>>()
    };
    let mut lo = vec![f64::INFINITY; nd];
    let mut hi = vec![f64::NEG_INFINITY; nd];
    for i in 0..n {
        for (a, x) in coords(i).into_iter().enumerate() {
            lo[a] = lo[a].min(x);
            hi[a] = hi[a].max(x);
        }
    }
    let volume: f64 = (0..nd).map(|a| (hi[a] - lo[a]).max(1e-12)).product();
    let mut cell = (volume / n as f64).powf(1.0 / nd as f64) * 2.0;

    let anchor_idx = (0..n)
        .min_by(|&a, &b| {
            let dist = |i: usize| -> f64 {
                rule.node(i)
                    .iter()
                    .zip(anchor)
                    .map(|(z, c)| (z - c).norm_sqr())
                    .sum()
            };
            dist(a).partial_cmp(&dist(b)).expect("finite distances")
        })
        .expect("rule is nonempty");

    for _ in 0..5 {
        let key = |i: usize| -> Vec<i64> {
            coords(i)
                .into_iter()
                .map(|x| (x / cell).floor() as i64)
                .collect()
        };
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for i in 0..n {
            buckets.entry(key(i)).or_default().push(i);
        }
        let neighbors = |i: usize| -> Vec<usize> {
            let k0 = key(i);
            let mut out = Vec::new();
            let mut offs = vec![-1i64; nd];
            loop {
                let kk: Vec<i64> = k0.iter().zip(&offs).map(|(a, o)| a + o).collect();
                if let Some(list) = buckets.get(&kk) {
                    for &j in list {
                        if j != i {
                            out.push(j);
                        }
                    }
                }
                let mut a = 0;
                loop {
                    offs[a] += 1;
                    if offs[a] <= 1 {
                        break;
                    }
                    offs[a] = -1;
                    a += 1;
                    if a == nd {
                        break;
                    }
                }
                if a == nd {
                    break;
                }
            }
            out
        };

        let mut logs = vec![C64::new(0.0, 0.0); n];
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        logs[anchor_idx] = values[anchor_idx].ln();
        seen[anchor_idx] = true;
        queue.push_back(anchor_idx);
        let mut visited = 1usize;
        while let Some(u) = queue.pop_front() {
            for v in neighbors(u) {
                if !seen[v] {
                    logs[v] = logs[u] + (values[v] / values[u]).ln();
                    seen[v] = true;
                    visited += 1;
                    queue.push_back(v);
                }
            }
        }
        if visited < n {
            cell *= 2.0;
            continue;
        }
        // Circulation check across every short edge, not just the BFS tree.
        for u in 0..n {
            for v in neighbors(u) {
                let principal = (values[v] / values[u]).ln();
                if (logs[v] - logs[u] - principal).im.abs() > 1e-6 {
                    return Err(Error::Refused(
                        "branch ambiguity: J_f winding detected along the node graph".into(),
                    ));
                }
            }
        }
        return Ok(logs);
    }
    Err(Error::Refused(
        "branch continuation failed: node proximity graph stayed disconnected".into(),
    ))
}

/// A map with rational components `φ_j/φ₀` over a shared basis.
#[derive(Debug, Clone)]
pub struct RationalMap {
    pub numerators: Vec<HoloFunction>,
    pub denominator: HoloFunction,
    /// Points with `|φ₀|` at or below this are unusable.
    pub exclusion_threshold: f64,
}

impl RationalMap {
    pub fn dim(&self) -> usize {
        self.numerators.len()
    }

    pub fn usable(&self, z: &[C64]) -> Result<bool> {
        Ok(self.denominator.eval(z)?.norm() > self.exclusion_threshold)
    }

    /// `F(z)`, or `None` below the denominator threshold.
    pub fn eval(&self, z: &[C64]) -> Result<Option<Vec<C64>>> {
        let den = self.denominator.eval(z)?;
        if den.norm() <= self.exclusion_threshold {
            return Ok(None);
        }
        let mut out = Vec::with_capacity(self.numerators.len());
        for num in &self.numerators {
            out.push(num.eval(z)? / den);
        }
        Ok(Some(out))
    }

    /// Holomorphic Jacobian determinant of `F` at `z`, by the quotient rule
    /// on basis gradients.
    pub fn jacobian(&self, z: &[C64]) -> Result<Option<C64>> {
        let (den, dgrad) = self.denominator.eval_with_gradient(z)?;
        if den.norm() <= self.exclusion_threshold {
            return Ok(None);
        }
        let nn = self.numerators.len();
        let mut jac = DMatrix::zeros(nn, nn);
        for (j, num) in self.numerators.iter().enumerate() {
            let (nv, ngrad) = num.eval_with_gradient(z)?;
            for k in 0..nn {
                jac[(j, k)] = (ngrad[k] * den - nv * dgrad[k]) / (den * den);
            }
        }
        Ok(Some(jac.determinant()))
    }
}

/// Outcome of a reconstruction, with inversion diagnostics attached.
#[derive(Debug, Clone)]
pub struct MapReconstruction {
    pub map: RationalMap,
    /// Condition estimate of the operator inversion (1 when the operator was
    /// already stored in the pullback direction).
    pub condition_estimate: f64,
}

/// Recover the map from an operator through `φ₀ = pullback(1)`,
/// `φ_j = pullback(w_j)`, `F = (φ_j/φ₀)`.
///
/// Forward-tagged operators are inverted by a regularized least-squares
/// solve; rank-deficient truncations are refused with a condition estimate,
/// as are operators whose bases have different complex dimensions.
pub fn reconstruct_map(
    op: &IsometryOperator,
    rule1: &QuadratureRule,
    opts: &IsometryOptions,
) -> Result<MapReconstruction> {
    if op.source_basis.dim() != op.target_basis.dim() {
        return Err(Error::Refused(format!(
            "equidimension violated: source dimension {} vs target dimension {}; the truncated operator cannot have full rank",
            op.source_basis.dim(),
            op.target_basis.dim()
        )));
    }
    let dim = op.source_basis.dim();
    let (map_basis, pulled, condition): (TruncatedBasis, Vec<DVector<C64>>, f64) =
        match op.direction {
            Direction::Pullback => {
                // Columns 0..=n of the matrix are exactly pullback(1) and
                // pullback(w_j): the source basis leads with 1, z₁, …, z_n.
                let cols = (0..=dim)
                    .map(|j| op.matrix.column(j).into_owned())
                    .collect();
                (op.target_basis.clone(), cols, 1.0)
            }
            Direction::Forward => {
                let mut cols = Vec::with_capacity(dim + 1);
                let mut condition = 1.0f64;
                for j in 0..=dim {
                    let mut rhs = DVector::zeros(op.target_basis.len());
                    rhs[j] = C64::new(1.0, 0.0);
                    let (x, cond) = linalg::svd_lstsq(
                        &op.matrix,
                        &rhs,
                        "inverting forward isometry for reconstruction",
                        opts.condition_cap,
                    )?;
                    condition = condition.max(cond);
                    cols.push(x);
                }
                (op.source_basis.clone(), cols, condition)
            }
        };

    let denominator = HoloFunction::new(map_basis.clone(), pulled[0].clone())?;
    let numerators: Vec<HoloFunction> = (1..=dim)
        .map(|j| HoloFunction::new(map_basis.clone(), pulled[j].clone()))
        .collect::<Result<_>>()?;

    // τ from the operator's own grid.
    let mut max_den = 0.0f64;
    for i in 0..rule1.len() {
        max_den = max_den.max(denominator.eval(rule1.node(i))?.norm());
    }
    if max_den <= 0.0 {
        return Err(Error::Refused(
            "pullback of the constant vanishes identically; operator is degenerate".into(),
        ));
    }
    Ok(MapReconstruction {
        map: RationalMap {
            numerators,
            denominator,
            exclusion_threshold: opts.tau_factor * max_den,
        },
        condition_estimate: condition,
    })
}

/// Residual report of the Jacobian relation over a battery of points and
/// test functions.
#[derive(Debug, Clone)]
pub struct JacobianReport {
    pub max_residual: f64,
    pub mean_residual: f64,
    /// Point-function pairs actually evaluated.
    pub used: usize,
    /// Points excluded by the denominator threshold.
    pub excluded: usize,
}

/// Check `| |Tφ(F(z))|·|J_F(z)|^{2/p} − |φ(z)| | / (|φ(z)| + δ)` over the
/// battery. Points below the exclusion threshold are skipped and counted.
pub fn verify_jacobian_relation(
    op: &IsometryOperator,
    map: &RationalMap,
    sample_points: &[Vec<C64>],
    test_functions: &[HoloFunction],
    opts: &IsometryOptions,
) -> Result<JacobianReport> {
    let delta = 1e-9;
    // Forward action: the matrix itself for Forward-tagged operators, a
    // least-squares inversion of the pullback otherwise.
    let images: Vec<HoloFunction> = match op.direction {
        Direction::Forward => test_functions
            .iter()
            .map(|phi| op.apply(phi))
            .collect::<Result<_>>()?,
        Direction::Pullback => test_functions
            .iter()
            .map(|phi| {
                let (x, _) = linalg::svd_lstsq(
                    &op.matrix,
                    phi.coeffs(),
                    "inverting pullback for the forward action",
                    opts.condition_cap,
                )?;
                HoloFunction::new(op.source_basis.clone(), x)
            })
            .collect::<Result<_>>()?,
    };

    let mut max_res = 0.0f64;
    let mut sum = 0.0f64;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for z in sample_points {
        let (fz, jf) = match (map.eval(z)?, map.jacobian(z)?) {
            (Some(fz), Some(jf)) => (fz, jf),
            _ => {
                excluded += 1;
                continue;
            }
        };
        let jfac = jf.norm().powf(2.0 / op.p);
        for (phi, tphi) in test_functions.iter().zip(&images) {
            let lhs = tphi.eval(&fz)?.norm() * jfac;
            let rhs = phi.eval(z)?.norm();
            let res = (lhs - rhs).abs() / (rhs + delta);
            max_res = max_res.max(res);
            sum += res;
            used += 1;
        }
    }
    Ok(JacobianReport {
        max_residual: max_res,
        mean_residual: if used > 0 { sum / used as f64 } else { 0.0 },
        used,
        excluded,
    })
}

/// Norm-preservation battery: worst relative deviation of `‖apply(e_j)‖_p`
/// from `‖e_j‖_p` over the source basis elements, with `rule2` on the source
/// domain and `rule1` on the target domain.
pub fn isometry_battery(
    op: &IsometryOperator,
    rule1: &QuadratureRule,
    rule2: &QuadratureRule,
) -> Result<f64> {
    let weight = Weight::zero();
    let mut worst = 0.0f64;
    for j in 0..op.source_basis.len() {
        let e = HoloFunction::monomial(op.source_basis.clone(), j);
        let source_norm = pnorm(&e, op.p, rule2, &weight)?;
        let target_norm = pnorm(&op.apply(&e)?, op.p, rule1, &weight)?;
        let dev = (target_norm - source_norm).abs() / source_norm.max(f64::MIN_POSITIVE);
        worst = worst.max(dev);
    }
    Ok(worst)
}
