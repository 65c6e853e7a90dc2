//! p-norms, the p=2 Bergman kernel in closed form via the Gram matrix, and
//! the p-Bergman kernel `B_{Ω,p}(z)` for general `p > 0` by constrained Lᵖ
//! minimization.
//!
//! The kernel is computed through the dual formulation: minimize `‖f‖_p`
//! over the truncated space subject to the single affine constraint
//! `f(z) = 1`; then `B = ‖f*‖_p^{-2}`. For `p ≥ 1` the problem is convex and
//! solved by damped iteratively-reweighted least squares with weights
//! `(|f|² + ε)^{(p-2)/2}` on a decreasing ε-ladder `1e-2 → 1e-10`, each inner
//! step a weighted Gram solve, with a quasi-Newton (L-BFGS) fallback on
//! stagnation. For `0 < p < 1` the same ladder runs from several
//! deterministic starts (the p=2 solution plus perturbed copies) and the best
//! local minimizer is returned, flagged unconverged when starts disagree.
//! Reported kernel values are always recomputed from the unsmoothed p-norm of
//! the final iterate.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{BasisDesign, HoloFunction, TruncatedBasis};
use crate::domains::{Domain, QuadratureRule};
use crate::linalg::{self, DesignRows, HermitianSolver};
use crate::{C64, Error, Result};

/// Plurisubharmonic weight φ; integrands carry the factor `e^{-φ}`.
#[derive(Clone)]
pub struct Weight {
    kind: WeightKind,
}

#[derive(Clone)]
enum WeightKind {
    Zero,
    Fn(Arc<dyn Fn(&[C64]) -> f64 + Send + Sync>),
}

impl Weight {
    /// The unweighted case φ ≡ 0.
    pub fn zero() -> Self {
        Self {
            kind: WeightKind::Zero,
        }
    }

    pub fn from_fn<F>(phi: F) -> Self
    where
        F: Fn(&[C64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: WeightKind::Fn(Arc::new(phi)),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, WeightKind::Zero)
    }

    pub fn eval(&self, point: &[C64]) -> f64 {
        match &self.kind {
            WeightKind::Zero => 0.0,
            WeightKind::Fn(f) => f(point),
        }
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            WeightKind::Zero => f.write_str("Weight::zero"),
            WeightKind::Fn(_) => f.write_str("Weight::fn"),
        }
    }
}

/// Effective node weights `w_i e^{-φ(x_i)}`. Nodes where φ = -∞ are dropped
/// (zero weight); a NaN weight is a validation error.
pub(crate) fn bind_weights(rule: &QuadratureRule, weight: &Weight) -> Result<Vec<f64>> {
    if weight.is_zero() {
        return Ok(rule.weights().to_vec());
    }
    let mut out = Vec::with_capacity(rule.len());
    for i in 0..rule.len() {
        let phi = weight.eval(rule.node(i));
        if phi.is_nan() {
            return Err(Error::Validation(
                "weight φ evaluates to NaN on a quadrature node".into(),
            ));
        }
        if phi == f64::NEG_INFINITY {
            out.push(0.0);
        } else {
            out.push(rule.weights()[i] * (-phi).exp());
        }
    }
    Ok(out)
}

/// Weighted p-pseudonorm `(Σ_k w_k |f(x_k)|^p e^{-φ(x_k)})^{1/p}`.
pub fn pnorm(f: &HoloFunction, p: f64, rule: &QuadratureRule, weight: &Weight) -> Result<f64> {
    check_p(p)?;
    if f.basis().dim() != rule.dim() {
        return Err(Error::Validation(
            "function and rule dimensions differ".into(),
        ));
    }
    let eff = bind_weights(rule, weight)?;
    let design = BasisDesign {
        basis: f.basis(),
        rule,
    };
    let values = linalg::apply_design(&design, f.coeffs());
    Ok(pnorm_of_values(&values, &eff, p))
}

fn pnorm_of_values(values: &[C64], eff: &[f64], p: f64) -> f64 {
    let total = linalg::par_sum(values.len(), |i| {
        if eff[i] == 0.0 {
            0.0
        } else {
            eff[i] * values[i].norm().powf(p)
        }
    });
    total.max(0.0).powf(1.0 / p)
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("p must be positive, got {p}")))
    }
}

/// Solver options for the extremal problems.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// First-order tolerance; `None` resolves to `max(1e-8, 10·est_error)`.
    pub tol: Option<f64>,
    /// Inner iteration cap per ladder rung.
    pub max_iter: usize,
    /// Seed for the deterministic multi-start perturbations (p < 1).
    pub seed: u64,
    /// Number of starts for p < 1 (the p=2 solution plus perturbed copies).
    pub starts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 150,
            seed: 0,
            starts: 8,
        }
    }
}

impl SolverOptions {
    pub fn resolved_tol(&self, rule: &QuadratureRule) -> f64 {
        self.tol.unwrap_or_else(|| (10.0 * rule.est_error()).max(1e-8))
    }
}

/// Result of a constrained Lᵖ extremal solve.
#[derive(Debug, Clone)]
pub struct ExtremalResult {
    /// `B_{Ω,p}(z)` estimate: the squared reciprocal of the minimizer's norm.
    pub kernel_value: f64,
    /// Minimizer of `‖f‖_p` subject to `f(z) = 1`.
    pub extremal: HoloFunction,
    pub iterations: usize,
    pub converged: bool,
    /// Final first-order residual (projected-gradient measure, relative).
    pub stationarity: f64,
    pub degree: usize,
    /// Tolerance actually used for the convergence certificate.
    pub tolerance: f64,
}

/// Reproducing-kernel diagonal of the truncated space at p = 2:
/// `k(z)* G^{-1} k(z)` for the weighted Gram matrix `G`.
pub fn gram_kernel(
    basis: &TruncatedBasis,
    rule: &QuadratureRule,
    weight: &Weight,
    z: &[C64],
) -> Result<f64> {
    if basis.dim() != rule.dim() {
        return Err(Error::Validation(
            "basis and rule dimensions differ".into(),
        ));
    }
    let eff = bind_weights(rule, weight)?;
    let m = match RingBasisDesign::build(basis, rule) {
        Some(ring) => ring.normal_matrix(&eff),
        None => {
            let design = BasisDesign { basis, rule };
            linalg::weighted_normal(&design, &eff, None).0
        }
    };
    let solver = HermitianSolver::factor(m);
    if solver.rank_deficient() {
        return Err(Error::Singular {
            cond: solver.cond(),
            context: "Gram matrix is numerically singular".into(),
        });
    }
    let a = DVector::from_vec(basis.eval(z)?);
    let b = a.map(|x| x.conj());
    Ok(solver.solve(&b).dotc(&b).re.max(0.0))
}

/// One-dimensional monomial design over a polar ring rule. The weighted
/// normal matrix has entries `Σ_i v_i r_i^{j+k} e^{i(k-j)θ_i}`, which ring
/// structure reduces to per-ring trigonometric moments: O(n·d + n_r·d²)
/// instead of O(n·d²).
pub(crate) struct RingBasisDesign<'a> {
    rule: &'a QuadratureRule,
    degree: usize,
    n_theta: usize,
    radii: Vec<f64>,
    /// Materialized rows when they fit the memory budget.
    cache: Option<Vec<C64>>,
}

impl<'a> RingBasisDesign<'a> {
    pub fn build(basis: &TruncatedBasis, rule: &'a QuadratureRule) -> Option<Self> {
        if basis.dim() != 1 || rule.dim() != 1 {
            return None;
        }
        let rings = rule.rings.as_ref()?;
        if rings.center.norm() != 0.0 {
            return None;
        }
        let k = basis.len();
        let mut design = Self {
            rule,
            degree: basis.degree(),
            n_theta: rings.n_theta,
            radii: rings.radii.clone(),
            cache: None,
        };
        if rule.len() * k <= linalg::MATERIALIZE_LIMIT {
            let mut data = vec![C64::new(0.0, 0.0); rule.len() * k];
            for i in 0..rule.len() {
                let z = rule.node(i)[0];
                let mut pw = C64::new(1.0, 0.0);
                for slot in &mut data[i * k..(i + 1) * k] {
                    *slot = pw;
                    pw *= z;
                }
            }
            design.cache = Some(data);
        }
        Some(design)
    }
}

impl DesignRows for RingBasisDesign<'_> {
    fn len(&self) -> usize {
        self.rule.len()
    }

    fn k(&self) -> usize {
        self.degree + 1
    }

    fn fill_row(&self, i: usize, out: &mut [C64]) {
        if let Some(cache) = &self.cache {
            let k = self.k();
            out.copy_from_slice(&cache[i * k..(i + 1) * k]);
            return;
        }
        let z = self.rule.node(i)[0];
        let mut pw = C64::new(1.0, 0.0);
        for slot in out.iter_mut() {
            *slot = pw;
            pw *= z;
        }
    }

    fn normal_matrix(&self, v: &[f64]) -> nalgebra::DMatrix<C64> {
        let d = self.degree;
        let k = d + 1;
        let nt = self.n_theta;
        let nr = self.radii.len();
        debug_assert_eq!(v.len(), nr * nt);

        // Per-ring trigonometric moments T_a(m) = Σ_t v e^{imθ_t}, m ≤ d.
        let mut moments = vec![C64::new(0.0, 0.0); nr * k];
        for a in 0..nr {
            let t_row = &mut moments[a * k..(a + 1) * k];
            for t in 0..nt {
                let w = v[a * nt + t];
                if w == 0.0 {
                    continue;
                }
                let phase = C64::from_polar(1.0, std::f64::consts::TAU * t as f64 / nt as f64);
                let mut pw = C64::new(w, 0.0);
                for slot in t_row.iter_mut() {
                    *slot += pw;
                    pw *= phase;
                }
            }
        }

        // M[j, j+m] = Σ_a r_a^{2j+m} T_a(m).
        let mut m_out: nalgebra::DMatrix<C64> = nalgebra::DMatrix::zeros(k, k);
        for a in 0..nr {
            let r2 = self.radii[a] * self.radii[a];
            for m in 0..=d {
                let t_am = moments[a * k + m];
                if t_am.norm_sqr() == 0.0 {
                    continue;
                }
                let mut rp = self.radii[a].powi(m as i32);
                for j in 0..=(d - m) {
                    m_out[(j, j + m)] += t_am * rp;
                    if rp < 1e-290 {
                        break;
                    }
                    rp *= r2;
                }
            }
        }
        for j in 0..k {
            m_out[(j, j)] = C64::new(m_out[(j, j)].re, 0.0);
            for kk in (j + 1)..k {
                m_out[(kk, j)] = m_out[(j, kk)].conj();
            }
        }
        m_out
    }

    fn symmetric_moment(&self, u: &[C64]) -> nalgebra::DMatrix<C64> {
        // B[j,k] = Σ_i u_i conj(z_i)^{j+k} depends only on s = j+k: a Hankel
        // matrix of ring moments.
        let d = self.degree;
        let k = d + 1;
        let nt = self.n_theta;
        let nr = self.radii.len();
        let smax = 2 * d;
        let mut h = vec![C64::new(0.0, 0.0); smax + 1];
        for a in 0..nr {
            let mut ring = vec![C64::new(0.0, 0.0); smax + 1];
            for t in 0..nt {
                let w = u[a * nt + t];
                if w.re == 0.0 && w.im == 0.0 {
                    continue;
                }
                let phase =
                    C64::from_polar(1.0, -std::f64::consts::TAU * t as f64 / nt as f64);
                let mut pw = w;
                for slot in ring.iter_mut() {
                    *slot += pw;
                    pw *= phase;
                }
            }
            let r = self.radii[a];
            let mut rp = 1.0;
            for (s, slot) in ring.iter().enumerate() {
                h[s] += slot * rp;
                if rp < 1e-290 {
                    break;
                }
                rp *= r;
            }
        }
        let mut m: nalgebra::DMatrix<C64> = nalgebra::DMatrix::zeros(k, k);
        for j in 0..k {
            for kk in 0..k {
                m[(j, kk)] = h[j + kk];
            }
        }
        m
    }

    fn fast_normal(&self) -> bool {
        true
    }
}

/// Constraint of the inner weighted least-squares steps.
pub(crate) enum ConstraintSpec<'a> {
    /// Single affine row `aᵀ c = 1`.
    Row(&'a DVector<C64>),
    /// A block of pinned coefficients; the rest are free.
    Pinned {
        pinned: &'a [usize],
        values: &'a [C64],
        free: &'a [usize],
    },
}

impl ConstraintSpec<'_> {
    fn satisfy_from(&self, c: &mut DVector<C64>) {
        match self {
            ConstraintSpec::Row(a) => {
                // Re-pin via the largest constraint entry.
                let piv = pivot_index(a);
                let mut partial = C64::new(0.0, 0.0);
                for (k, ak) in a.iter().enumerate() {
                    if k != piv {
                        partial += ak * c[k];
                    }
                }
                c[piv] = (C64::new(1.0, 0.0) - partial) / a[piv];
            }
            ConstraintSpec::Pinned { pinned, values, .. } => {
                for (idx, v) in pinned.iter().zip(values.iter()) {
                    c[*idx] = *v;
                }
            }
        }
    }

    /// Norm of the gradient projected onto the constraint's tangent space.
    fn projected_grad_norm(&self, g: &DVector<C64>) -> f64 {
        match self {
            ConstraintSpec::Row(a) => {
                let b = a.map(|x| x.conj());
                let bb = b.norm_squared();
                if bb == 0.0 {
                    return g.norm();
                }
                let coeff = b.dotc(g) / C64::new(bb, 0.0);
                let mut sq = 0.0;
                for (gk, bk) in g.iter().zip(b.iter()) {
                    sq += (gk - bk * coeff).norm_sqr();
                }
                sq.sqrt()
            }
            ConstraintSpec::Pinned { free, .. } => {
                free.iter().map(|&k| g[k].norm_sqr()).sum::<f64>().sqrt()
            }
        }
    }
}

fn pivot_index(a: &DVector<C64>) -> usize {
    let mut best = 0;
    let mut best_norm = 0.0;
    for (k, ak) in a.iter().enumerate() {
        let n = ak.norm_sqr();
        if n > best_norm {
            best_norm = n;
            best = k;
        }
    }
    best
}

pub(crate) struct MinimizeOutcome {
    pub coeffs: DVector<C64>,
    /// Unsmoothed weighted p-norm of the final iterate.
    pub pnorm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stationarity: f64,
}

/// Constraint with storage, as used in the diagonally rescaled solver space.
enum OwnedConstraint {
    Row(DVector<C64>),
    Pinned {
        pinned: Vec<usize>,
        values: Vec<C64>,
        free: Vec<usize>,
    },
}

impl OwnedConstraint {
    fn as_spec(&self) -> ConstraintSpec<'_> {
        match self {
            OwnedConstraint::Row(a) => ConstraintSpec::Row(a),
            OwnedConstraint::Pinned {
                pinned,
                values,
                free,
            } => ConstraintSpec::Pinned {
                pinned,
                values,
                free,
            },
        }
    }
}

/// Design whose columns are rescaled by a positive diagonal; used to
/// precondition the solves by normalizing each basis element to unit
/// weighted L²-norm.
struct ScaledDesign<'a, D: DesignRows> {
    inner: &'a D,
    scale: &'a [f64],
}

impl<D: DesignRows> DesignRows for ScaledDesign<'_, D> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn k(&self) -> usize {
        self.inner.k()
    }

    fn fill_row(&self, i: usize, out: &mut [C64]) {
        self.inner.fill_row(i, out);
        for (o, s) in out.iter_mut().zip(self.scale) {
            *o *= *s;
        }
    }

    fn normal_matrix(&self, v: &[f64]) -> nalgebra::DMatrix<C64> {
        let mut m = self.inner.normal_matrix(v);
        for j in 0..m.nrows() {
            for k in 0..m.ncols() {
                m[(j, k)] *= self.scale[j] * self.scale[k];
            }
        }
        m
    }

    fn symmetric_moment(&self, u: &[C64]) -> nalgebra::DMatrix<C64> {
        let mut m = self.inner.symmetric_moment(u);
        for j in 0..m.nrows() {
            for k in 0..m.ncols() {
                m[(j, k)] *= self.scale[j] * self.scale[k];
            }
        }
        m
    }

    fn fast_normal(&self) -> bool {
        self.inner.fast_normal()
    }
}

/// Minimize `(Σ w̃_i |f_i|^p)^{1/p}` over coefficient vectors subject to the
/// given constraint. Shared by the kernel solves, the dual-norm solves, and
/// the minimal-extension solves.
pub(crate) fn minimize_lp<D: DesignRows>(
    design: &D,
    eff: &[f64],
    p: f64,
    constraint: &ConstraintSpec<'_>,
    opts: &SolverOptions,
    tol: f64,
) -> Result<MinimizeOutcome> {
    check_p(p)?;
    let n = design.len();
    let k = design.k();
    // Materialize the rows when they fit; solvers re-read them many times.
    // Structured designs cache internally and keep their fast normal path.
    if !design.fast_normal() && n * k <= linalg::MATERIALIZE_LIMIT {
        let materialized = linalg::MaterializedDesign::build(design);
        return minimize_preconditioned(&materialized, eff, p, constraint, opts, tol);
    }
    minimize_preconditioned(design, eff, p, constraint, opts, tol)
}

fn minimize_preconditioned<D: DesignRows>(
    base: &D,
    eff: &[f64],
    p: f64,
    constraint: &ConstraintSpec<'_>,
    opts: &SolverOptions,
    tol: f64,
) -> Result<MinimizeOutcome> {
    let n = base.len();
    let k = base.k();
    let total_weight = linalg::par_sum(eff.len(), |i| eff[i]);
    if !(total_weight > 0.0) {
        return Err(Error::Validation(
            "all quadrature weights vanished after weight binding".into(),
        ));
    }

    // Diagonal preconditioner from the weighted Gram diagonal.
    let mut diag = vec![0.0f64; k];
    {
        let mut row = vec![C64::new(0.0, 0.0); k];
        // Deterministic sequential pass; cheap relative to the solves.
        for i in 0..n {
            if eff[i] == 0.0 {
                continue;
            }
            base.fill_row(i, &mut row);
            for (d, r) in diag.iter_mut().zip(&row) {
                *d += eff[i] * r.norm_sqr();
            }
        }
    }
    let dmax = diag.iter().cloned().fold(0.0f64, f64::max);
    let scale: Vec<f64> = diag
        .iter()
        .map(|&d| if d > dmax * 1e-300 { d.sqrt().recip() } else { 1.0 })
        .collect();
    let sdesign = ScaledDesign {
        inner: base,
        scale: &scale,
    };

    // Constraint transported to the rescaled variables c' = S^{-1} c.
    let owned = match constraint {
        ConstraintSpec::Row(a) => {
            let mut a2 = (*a).clone();
            for (entry, s) in a2.iter_mut().zip(&scale) {
                *entry *= *s;
            }
            OwnedConstraint::Row(a2)
        }
        ConstraintSpec::Pinned {
            pinned,
            values,
            free,
        } => OwnedConstraint::Pinned {
            pinned: pinned.to_vec(),
            values: pinned
                .iter()
                .zip(values.iter())
                .map(|(&idx, v)| v / scale[idx])
                .collect(),
            free: free.to_vec(),
        },
    };
    let scon = owned.as_spec();

    // Warm start: the p=2 minimizer (a single weighted Gram solve).
    let m2 = sdesign.normal_matrix(eff);
    let start = solve_constrained_quadratic(&m2, &scon, k)?;

    let finish = |outcome: MinimizeOutcome| -> MinimizeOutcome {
        let mut coeffs = outcome.coeffs;
        for (c, s) in coeffs.iter_mut().zip(&scale) {
            *c *= *s;
        }
        MinimizeOutcome { coeffs, ..outcome }
    };

    if (p - 2.0).abs() < 1e-14 {
        let values = linalg::apply_design(&sdesign, &start);
        let norm = pnorm_of_values(&values, eff, 2.0);
        let stat = stationarity_at(&sdesign, eff, 2.0, &start, &values, 0.0, &scon);
        return Ok(finish(MinimizeOutcome {
            coeffs: start,
            pnorm: norm,
            iterations: 1,
            converged: stat <= tol,
            stationarity: stat,
        }));
    }

    let runs = if p < 1.0 { opts.starts.max(1) } else { 1 };
    let mut best: Option<MinimizeOutcome> = None;
    let mut converged_kernels: Vec<f64> = Vec::new();
    for s in 0..runs {
        let c0 = if s == 0 {
            start.clone()
        } else {
            perturbed_start(&start, &scon, opts.seed, s as u64)
        };
        let outcome = run_ladder(&sdesign, eff, p, &scon, c0, opts, tol)?;
        if outcome.converged {
            converged_kernels.push(outcome.pnorm.powi(-2));
        }
        let better = match &best {
            None => true,
            Some(b) => outcome.pnorm < b.pnorm,
        };
        if better {
            best = Some(outcome);
        }
    }
    let mut best = best.expect("at least one start");
    if converged_kernels.len() > 1 {
        let max = converged_kernels.iter().cloned().fold(f64::MIN, f64::max);
        let min = converged_kernels.iter().cloned().fold(f64::MAX, f64::min);
        let spread = (max - min) / max.abs().max(f64::MIN_POSITIVE);
        if spread > tol {
            best.converged = false;
        }
    }
    Ok(finish(best))
}

fn solve_constrained_quadratic(
    m: &nalgebra::DMatrix<C64>,
    constraint: &ConstraintSpec<'_>,
    k: usize,
) -> Result<DVector<C64>> {
    match constraint {
        ConstraintSpec::Row(a) => {
            let b = a.map(|x| x.conj());
            if b.norm() < 1e-300 {
                return Err(Error::Validation(
                    "constraint row is numerically zero (point outside numeric support)".into(),
                ));
            }
            let solver = HermitianSolver::factor(m.clone());
            let mb = solver.solve(&b);
            let denom = mb.dotc(&b);
            if denom.norm() < 1e-300 {
                return Err(Error::Singular {
                    cond: solver.cond(),
                    context: "constrained quadratic step degenerated".into(),
                });
            }
            Ok(mb / denom)
        }
        ConstraintSpec::Pinned {
            pinned,
            values,
            free,
        } => {
            let nf = free.len();
            let mut c = DVector::zeros(k);
            for (idx, v) in pinned.iter().zip(values.iter()) {
                c[*idx] = *v;
            }
            if nf == 0 {
                return Ok(c);
            }
            let mut mff = nalgebra::DMatrix::zeros(nf, nf);
            for (i, &fi) in free.iter().enumerate() {
                for (j, &fj) in free.iter().enumerate() {
                    mff[(i, j)] = m[(fi, fj)];
                }
            }
            let mut rhs = DVector::zeros(nf);
            for (i, &fi) in free.iter().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (idx, v) in pinned.iter().zip(values.iter()) {
                    acc += m[(fi, *idx)] * v;
                }
                rhs[i] = -acc;
            }
            let solver = HermitianSolver::factor(mff);
            let cf = solver.solve(&rhs);
            for (i, &fi) in free.iter().enumerate() {
                c[fi] = cf[i];
            }
            Ok(c)
        }
    }
}

/// Smoothed objective `Φ_ε(c) = Σ w̃_i (|f_i|² + ε)^{p/2}`.
fn smoothed_objective(values: &[C64], eff: &[f64], p: f64, eps: f64) -> f64 {
    linalg::par_sum(values.len(), |i| {
        if eff[i] == 0.0 {
            0.0
        } else {
            eff[i] * (values[i].norm_sqr() + eps).powf(0.5 * p)
        }
    })
}

/// Wirtinger gradient `∂Φ_ε/∂c̄ = (p/2) Σ w̃ (|f|²+ε)^{(p-2)/2} f conj(e)`,
/// assembled in one pass over the design rows.
fn gradient(
    design: &(impl DesignRows),
    eff: &[f64],
    p: f64,
    values: &[C64],
    eps: f64,
) -> DVector<C64> {
    let factors: Vec<C64> = (0..values.len())
        .map(|i| {
            if eff[i] == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                values[i] * (eff[i] * (values[i].norm_sqr() + eps).powf(0.5 * p - 1.0))
            }
        })
        .collect();
    linalg::weighted_conj_row_sum(design, &factors) * C64::new(0.5 * p, 0.0)
}

fn stationarity_at(
    design: &(impl DesignRows),
    eff: &[f64],
    p: f64,
    c: &DVector<C64>,
    values: &[C64],
    eps: f64,
    constraint: &ConstraintSpec<'_>,
) -> f64 {
    let g = gradient(design, eff, p, values, eps);
    let obj = smoothed_objective(values, eff, p, eps);
    constraint.projected_grad_norm(&g) * c.norm() / obj.max(f64::MIN_POSITIVE)
}

/// Damped Newton direction for the smoothed objective: solve
/// `W d + V conj(d) = -g` in realified form, with the affine constraint
/// appended as KKT rows (single row) or eliminated (pinned block).
/// `lambda` adds Levenberg damping. Returns `None` when the system is
/// singular.
fn newton_direction<D: DesignRows>(
    design: &D,
    eff: &[f64],
    p: f64,
    eps: f64,
    values: &[C64],
    g: &DVector<C64>,
    constraint: &ConstraintSpec<'_>,
    lambda: f64,
) -> Option<DVector<C64>> {
    let k = design.k();
    let hp = 0.5 * p;
    let n = values.len();
    let mut wr = vec![0.0f64; n];
    let mut vc = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        if eff[i] == 0.0 {
            continue;
        }
        let f = values[i];
        let u = f.norm_sqr();
        let base = (u + eps).powf(hp - 2.0);
        let phi1 = hp * base * (u + eps);
        let phi2 = hp * (hp - 1.0) * base;
        wr[i] = eff[i] * (phi1 + phi2 * u);
        vc[i] = f * f * (eff[i] * phi2);
    }
    let w = design.normal_matrix(&wr);
    let v = design.symmetric_moment(&vc);

    // Realified Hessian blocks (the global factor 2 cancels against the
    // gradient).
    let (free, kkt_rows): (Vec<usize>, usize) = match constraint {
        ConstraintSpec::Row(_) => ((0..k).collect(), 2),
        ConstraintSpec::Pinned { free, .. } => (free.to_vec(), 0),
    };
    let nf = free.len();
    let dim = 2 * nf + kkt_rows;
    let mut h = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    let mut diag_scale = 0.0f64;
    for (i, &fi) in free.iter().enumerate() {
        for (j, &fj) in free.iter().enumerate() {
            let wij = w[(fi, fj)];
            let vij = v[(fi, fj)];
            h[(i, j)] = wij.re + vij.re;
            h[(i, nf + j)] = -wij.im + vij.im;
            h[(nf + i, j)] = wij.im + vij.im;
            h[(nf + i, nf + j)] = wij.re - vij.re;
        }
        diag_scale += w[(fi, fi)].re.abs();
    }
    diag_scale = (diag_scale / nf.max(1) as f64).max(f64::MIN_POSITIVE);
    if lambda > 0.0 {
        for i in 0..2 * nf {
            h[(i, i)] += lambda * diag_scale;
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
    for (i, &fi) in free.iter().enumerate() {
        rhs[i] = -g[fi].re;
        rhs[nf + i] = -g[fi].im;
    }
    if let ConstraintSpec::Row(a) = constraint {
        // Re(aᵀd) = 0 and Im(aᵀd) = 0 keep the iterate on the constraint.
        let row0 = 2 * nf;
        for (i, &fi) in free.iter().enumerate() {
            let ak = a[fi];
            h[(row0, i)] = ak.re;
            h[(row0, nf + i)] = -ak.im;
            h[(row0 + 1, i)] = ak.im;
            h[(row0 + 1, nf + i)] = ak.re;
            h[(i, row0)] = ak.re;
            h[(nf + i, row0)] = -ak.im;
            h[(i, row0 + 1)] = ak.im;
            h[(nf + i, row0 + 1)] = ak.re;
        }
    }
    let lu = nalgebra::LU::new(h);
    let sol = lu.solve(&rhs)?;
    let mut d = DVector::zeros(k);
    for (i, &fi) in free.iter().enumerate() {
        d[fi] = C64::new(sol[i], sol[nf + i]);
    }
    Some(d)
}

/// IRLS warmup steps per rung before switching to Newton directions.
const IRLS_WARMUP: usize = 2;

fn run_ladder<D: DesignRows>(
    design: &D,
    eff: &[f64],
    p: f64,
    constraint: &ConstraintSpec<'_>,
    mut c: DVector<C64>,
    opts: &SolverOptions,
    tol: f64,
) -> Result<MinimizeOutcome> {
    let total_weight = linalg::par_sum(eff.len(), |i| eff[i]);
    let values = linalg::apply_design(design, &c);
    let mean_sq = linalg::par_sum(values.len(), |i| eff[i] * values[i].norm_sqr()) / total_weight;
    let scale = mean_sq.max(f64::MIN_POSITIVE);

    let ladder: [f64; 5] = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];
    let mut iterations = 0usize;
    for (ri, &eps_rel) in ladder.iter().enumerate() {
        let eps = eps_rel * scale;
        let rung_tol = if ri + 1 == ladder.len() {
            tol
        } else {
            (eps_rel.sqrt() * 1e-2).max(tol)
        };
        let mut stagnant = 0usize;
        let mut need_polish = true;
        for it in 0..opts.max_iter {
            let values = linalg::apply_design(design, &c);
            let obj = smoothed_objective(&values, eff, p, eps);
            let g = gradient(design, eff, p, &values, eps);
            let stat = constraint.projected_grad_norm(&g) * c.norm() / obj.max(f64::MIN_POSITIVE);
            if stat <= rung_tol {
                need_polish = false;
                break;
            }

            // A couple of IRLS warmup steps per rung, then damped Newton
            // (both are weighted Gram solves in the same moment data).
            let mut step: Option<DVector<C64>> = None;
            if it >= IRLS_WARMUP {
                let mut lambda = 0.0;
                for _ in 0..6 {
                    if let Some(d) =
                        newton_direction(design, eff, p, eps, &values, &g, constraint, lambda)
                    {
                        if 2.0 * g.dotc(&d).re < 0.0 {
                            step = Some(d);
                            break;
                        }
                    }
                    lambda = if lambda == 0.0 { 1e-6 } else { lambda * 100.0 };
                }
            }
            let d = match step {
                Some(d) => d,
                None => {
                    let v: Vec<f64> = (0..values.len())
                        .map(|i| {
                            if eff[i] == 0.0 {
                                0.0
                            } else {
                                eff[i] * (values[i].norm_sqr() + eps).powf(0.5 * p - 1.0)
                            }
                        })
                        .collect();
                    let mv = design.normal_matrix(&v);
                    let cand = solve_constrained_quadratic(&mv, constraint, design.k())?;
                    &cand - &c
                }
            };
            if d.norm() <= 1e-16 * c.norm().max(1.0) {
                stagnant += 1;
            }
            let dd = 2.0 * g.dotc(&d).re;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial = &c + &d * C64::new(t, 0.0);
                let tv = linalg::apply_design(design, &trial);
                let tobj = smoothed_objective(&tv, eff, p, eps);
                if tobj <= obj + 1e-4 * t * dd.min(0.0) && tobj.is_finite() {
                    let rel_drop = (obj - tobj) / obj.max(f64::MIN_POSITIVE);
                    c = trial;
                    iterations += 1;
                    accepted = true;
                    if rel_drop < 1e-14 {
                        stagnant += 1;
                    } else {
                        stagnant = 0;
                    }
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                stagnant += 2;
            }
            if stagnant >= 3 {
                break;
            }
        }
        if need_polish {
            let (polished, its) =
                lbfgs_polish(design, eff, p, constraint, c.clone(), eps, opts, rung_tol);
            c = polished;
            iterations += its;
        }
        constraint.satisfy_from(&mut c);
    }

    // Final certificate at the last rung's smoothing level (the adopted
    // regularization of the p < 2 zero-set blowup); the reported norm below
    // is the unsmoothed one.
    let eps_final = ladder[ladder.len() - 1] * scale;
    let values = linalg::apply_design(design, &c);
    let stat = stationarity_at(design, eff, p, &c, &values, eps_final, constraint);
    let norm = pnorm_of_values(&values, eff, p);
    Ok(MinimizeOutcome {
        coeffs: c,
        pnorm: norm,
        iterations,
        converged: stat <= tol,
        stationarity: stat,
    })
}

/// Quasi-Newton fallback: eliminate the constraint (pivot coefficient for a
/// row, the pinned block otherwise), realify, and run L-BFGS on Φ_ε.
fn lbfgs_polish<D: DesignRows>(
    design: &D,
    eff: &[f64],
    p: f64,
    constraint: &ConstraintSpec<'_>,
    c: DVector<C64>,
    eps: f64,
    opts: &SolverOptions,
    rung_tol: f64,
) -> (DVector<C64>, usize) {
    let k = design.k();
    let (free, pivot): (Vec<usize>, Option<usize>) = match constraint {
        ConstraintSpec::Row(a) => {
            let piv = pivot_index(a);
            ((0..k).filter(|&i| i != piv).collect(), Some(piv))
        }
        ConstraintSpec::Pinned { free, .. } => (free.to_vec(), None),
    };
    if free.is_empty() {
        return (c, 0);
    }
    let row = match constraint {
        ConstraintSpec::Row(a) => Some((*a).clone()),
        _ => None,
    };
    let rebuild = |x: &DVector<f64>| -> DVector<C64> {
        let mut full = c.clone();
        for (i, &idx) in free.iter().enumerate() {
            full[idx] = C64::new(x[2 * i], x[2 * i + 1]);
        }
        if let (Some(a), Some(piv)) = (&row, pivot) {
            let mut partial = C64::new(0.0, 0.0);
            for (idx, ak) in a.iter().enumerate() {
                if idx != piv {
                    partial += ak * full[idx];
                }
            }
            full[piv] = (C64::new(1.0, 0.0) - partial) / a[piv];
        }
        full
    };
    let mut x0 = DVector::zeros(2 * free.len());
    for (i, &idx) in free.iter().enumerate() {
        x0[2 * i] = c[idx].re;
        x0[2 * i + 1] = c[idx].im;
    }
    let objective_scale;
    {
        let values = linalg::apply_design(design, &c);
        objective_scale = smoothed_objective(&values, eff, p, eps).max(f64::MIN_POSITIVE);
    }
    // Gradient target matching the relative stationarity certificate.
    let gtol = 2.0 * rung_tol / c.norm().max(1e-9);
    let (x, _, iters) = linalg::lbfgs(
        x0,
        |x: &DVector<f64>| {
            let full = rebuild(x);
            let values = linalg::apply_design(design, &full);
            let obj = smoothed_objective(&values, eff, p, eps) / objective_scale;
            let g = gradient(design, eff, p, &values, eps) / C64::new(objective_scale, 0.0);
            // Chain rule through the pivot elimination.
            let mut gx = DVector::zeros(2 * free.len());
            match (&row, pivot) {
                (Some(a), Some(piv)) => {
                    let gpiv = g[piv];
                    for (i, &idx) in free.iter().enumerate() {
                        let total = g[idx] - (a[idx] / a[piv]).conj() * gpiv;
                        gx[2 * i] = 2.0 * total.re;
                        gx[2 * i + 1] = 2.0 * total.im;
                    }
                }
                _ => {
                    for (i, &idx) in free.iter().enumerate() {
                        gx[2 * i] = 2.0 * g[idx].re;
                        gx[2 * i + 1] = 2.0 * g[idx].im;
                    }
                }
            }
            (obj, gx)
        },
        8 * opts.max_iter,
        gtol,
    );
    let mut full = rebuild(&x);
    constraint.satisfy_from(&mut full);
    (full, iters)
}

fn perturbed_start(
    base: &DVector<C64>,
    constraint: &ConstraintSpec<'_>,
    seed: u64,
    index: u64,
) -> DVector<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15) ^ index);
    let k = base.len();
    let sigma = 0.25 * base.norm().max(1.0) / (k as f64).sqrt();
    let mut c = base.clone();
    for entry in c.iter_mut() {
        // Box-Muller from uniforms keeps the dependency surface small.
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, cs) = (std::f64::consts::TAU * u2).sin_cos();
        *entry += C64::new(sigma * r * cs, sigma * r * s);
    }
    let mut c = c;
    constraint.satisfy_from(&mut c);
    c
}

/// Minimize the weighted p-norm subject to a single affine row `aᵀc = 1`,
/// dispatching to the ring-structured fast path when the rule supports it.
/// Shared by the kernel solves and the dual-norm solves.
pub(crate) fn row_constrained_min(
    basis: &TruncatedBasis,
    rule: &QuadratureRule,
    weight: &Weight,
    p: f64,
    row: &DVector<C64>,
    opts: &SolverOptions,
) -> Result<(MinimizeOutcome, f64)> {
    check_p(p)?;
    if basis.dim() != rule.dim() {
        return Err(Error::Validation(
            "basis and rule dimensions differ".into(),
        ));
    }
    if row.norm() < 1e-300 {
        return Err(Error::Validation(
            "constraint row is numerically zero (point outside numeric support)".into(),
        ));
    }
    let eff = bind_weights(rule, weight)?;
    let tol = opts.resolved_tol(rule);
    let constraint = ConstraintSpec::Row(row);
    let outcome = match RingBasisDesign::build(basis, rule) {
        Some(ring) => minimize_lp(&ring, &eff, p, &constraint, opts, tol)?,
        None => {
            let design = BasisDesign { basis, rule };
            minimize_lp(&design, &eff, p, &constraint, opts, tol)?
        }
    };
    Ok((outcome, tol))
}

/// Compute `B_{Ω,p}(z)` on the truncated space by constrained Lᵖ
/// minimization.
pub fn p_extremal(
    basis: &TruncatedBasis,
    rule: &QuadratureRule,
    weight: &Weight,
    p: f64,
    z: &[C64],
    opts: &SolverOptions,
) -> Result<ExtremalResult> {
    let a = DVector::from_vec(basis.eval(z)?);
    let (outcome, tol) = row_constrained_min(basis, rule, weight, p, &a, opts)?;
    let extremal = HoloFunction::new(basis.clone(), outcome.coeffs)?;
    Ok(ExtremalResult {
        kernel_value: outcome.pnorm.powi(-2),
        extremal,
        iterations: outcome.iterations,
        converged: outcome.converged,
        stationarity: outcome.stationarity,
        degree: basis.degree(),
        tolerance: tol,
    })
}

/// One entry of a kernel profile along a path of interior points.
#[derive(Debug, Clone)]
pub struct ProfilePoint {
    pub point: Vec<C64>,
    pub kernel_value: f64,
    pub converged: bool,
    /// Whether this value strictly exceeds the previous one (None for the
    /// first path point).
    pub increased: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct KernelProfile {
    pub points: Vec<ProfilePoint>,
    pub tolerance: f64,
}

impl KernelProfile {
    pub fn strictly_increasing(&self) -> bool {
        self.points.iter().all(|p| p.increased.unwrap_or(true))
    }
}

/// Evaluate `B_{Ω,p}` along a path of interior points (typically approaching
/// the boundary), flagging monotonicity between consecutive values.
pub fn kernel_profile(
    domain: &Domain,
    p: f64,
    path: &[Vec<C64>],
    basis: &TruncatedBasis,
    rule: &QuadratureRule,
    opts: &SolverOptions,
) -> Result<KernelProfile> {
    for point in path {
        if !domain.contains(point) {
            return Err(Error::Validation(format!(
                "profile point {point:?} is not interior to the domain"
            )));
        }
    }
    let weight = Weight::zero();
    let mut points: Vec<ProfilePoint> = Vec::with_capacity(path.len());
    for point in path {
        let res = p_extremal(basis, rule, &weight, p, point, opts)?;
        let increased = points
            .last()
            .map(|prev: &ProfilePoint| res.kernel_value > prev.kernel_value);
        points.push(ProfilePoint {
            point: point.clone(),
            kernel_value: res.kernel_value,
            converged: res.converged,
            increased,
        });
    }
    Ok(KernelProfile {
        points,
        tolerance: opts.resolved_tol(rule),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::build_quadrature;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn disk_rule(res: usize) -> QuadratureRule {
        build_quadrature(&Domain::unit_disk(), res).unwrap()
    }

    #[test]
    fn pnorm_of_constant_p1_is_pi() {
        let basis = TruncatedBasis::new(1, 4);
        let f = HoloFunction::one(basis);
        let rule = disk_rule(16);
        let n = pnorm(&f, 1.0, &rule, &Weight::zero()).unwrap();
        assert_relative_eq!(n, PI, max_relative = 1e-12);
    }

    #[test]
    fn pnorm_of_z_p2() {
        let basis = TruncatedBasis::new(1, 4);
        let f = HoloFunction::coordinate(basis, 0);
        let rule = disk_rule(16);
        let n = pnorm(&f, 2.0, &rule, &Weight::zero()).unwrap();
        assert_relative_eq!(n, (PI / 2.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn weighted_pnorm_gaussian_weight() {
        // 2π ∫₀¹ e^{-r²} r dr = π (1 - e^{-1}).
        let basis = TruncatedBasis::new(1, 4);
        let f = HoloFunction::one(basis);
        let rule = disk_rule(32);
        let w = Weight::from_fn(|p: &[C64]| p[0].norm_sqr());
        let n = pnorm(&f, 2.0, &rule, &w).unwrap();
        let oracle = (PI * (1.0 - (-1.0f64).exp())).sqrt();
        assert_relative_eq!(n, oracle, max_relative = 1e-10);
    }

    #[test]
    fn pnorm_homogeneity() {
        let basis = TruncatedBasis::new(1, 6);
        let mut coeffs = DVector::zeros(basis.len());
        for k in 0..basis.len() {
            coeffs[k] = c(0.2 * (k as f64 + 1.0).recip(), -0.1 * k as f64 / 7.0);
        }
        let f = HoloFunction::new(basis, coeffs).unwrap();
        let rule = disk_rule(16);
        for p in [0.5, 1.0, 2.0, 3.5] {
            let base = pnorm(&f, p, &rule, &Weight::zero()).unwrap();
            let scaled = pnorm(&f.scaled(c(-1.5, 2.0)), p, &rule, &Weight::zero()).unwrap();
            assert_relative_eq!(scaled, c(-1.5, 2.0).norm() * base, max_relative = 1e-12);
        }
    }

    #[test]
    fn gram_kernel_disk_closed_form() {
        // Oracle: truncated orthonormal series Σ (k+1)|z|^{2k}/π, and the
        // classical closed form 1/(π (1-|z|²)²).
        let basis = TruncatedBasis::new(1, 30);
        let rule = disk_rule(32);
        for z in [0.0, 0.5] {
            let got = gram_kernel(&basis, &rule, &Weight::zero(), &[c(z, 0.0)]).unwrap();
            let series: f64 = (0..=30)
                .map(|k| (k as f64 + 1.0) * z.powi(2 * k as i32) / PI)
                .sum();
            let closed = 1.0 / (PI * (1.0 - z * z).powi(2));
            assert_relative_eq!(got, series, max_relative = 1e-9);
            assert_relative_eq!(got, closed, max_relative = 1e-6);
        }
        let at_half = gram_kernel(&basis, &rule, &Weight::zero(), &[c(0.5, 0.0)]).unwrap();
        assert_relative_eq!(at_half, 1.0 / (PI * 0.5625), max_relative = 1e-6);
    }

    #[test]
    fn gram_kernel_ball_center() {
        let basis = TruncatedBasis::new(2, 12);
        let rule = build_quadrature(&Domain::ball(2, 1.0).unwrap(), 24).unwrap();
        let got = gram_kernel(
            &basis,
            &rule,
            &Weight::zero(),
            &[c(0.0, 0.0), c(0.0, 0.0)],
        )
        .unwrap();
        assert_relative_eq!(got, 2.0 / (PI * PI), max_relative = 1e-6);
    }

    #[test]
    fn p_extremal_center_values() {
        let rule = disk_rule(32);
        let basis = TruncatedBasis::new(1, 20);
        let opts = SolverOptions::default();
        for p in [1.0, 3.0] {
            let res = p_extremal(&basis, &rule, &Weight::zero(), p, &[c(0.0, 0.0)], &opts)
                .unwrap();
            let expected = PI.powf(-2.0 / p);
            assert_relative_eq!(res.kernel_value, expected, max_relative = 1e-3);
            assert!(res.converged, "p={p} stationarity {}", res.stationarity);
            // Result invariants.
            assert!((res.extremal.eval(&[c(0.0, 0.0)]).unwrap() - c(1.0, 0.0)).norm() <= 1e-10);
            let recomputed = pnorm(&res.extremal, p, &rule, &Weight::zero()).unwrap();
            assert_relative_eq!(res.kernel_value, recomputed.powi(-2), max_relative = 1e-10);
        }
    }

    #[test]
    fn p_extremal_mobius_covariance_point() {
        let rule = disk_rule(32);
        let basis = TruncatedBasis::new(1, 30);
        let opts = SolverOptions::default();
        let res = p_extremal(&basis, &rule, &Weight::zero(), 1.0, &[c(0.5, 0.0)], &opts)
            .unwrap();
        let oracle = PI.powi(-2) * (1.0 - 0.25f64).powi(-4);
        assert_relative_eq!(res.kernel_value, oracle, max_relative = 5e-3);
        assert_relative_eq!(res.kernel_value, 0.32022, max_relative = 5e-3);
    }

    #[test]
    fn p2_extremal_matches_gram() {
        let rule = disk_rule(32);
        let basis = TruncatedBasis::new(1, 20);
        let opts = SolverOptions::default();
        for z in [0.0, 0.3, 0.6] {
            let via_gram = gram_kernel(&basis, &rule, &Weight::zero(), &[c(z, 0.0)]).unwrap();
            let via_extremal =
                p_extremal(&basis, &rule, &Weight::zero(), 2.0, &[c(z, 0.0)], &opts)
                    .unwrap()
                    .kernel_value;
            assert_relative_eq!(via_gram, via_extremal, max_relative = 1e-6);
        }
    }

    #[test]
    fn truncation_monotonicity_in_degree() {
        let rule = disk_rule(32);
        let opts = SolverOptions::default();
        let mut last = 0.0;
        for d in [5, 10, 15, 20] {
            let basis = TruncatedBasis::new(1, d);
            let res = p_extremal(&basis, &rule, &Weight::zero(), 1.0, &[c(0.5, 0.0)], &opts)
                .unwrap();
            assert!(
                res.kernel_value >= last - 1e-9 * res.kernel_value.max(1.0),
                "kernel decreased with degree: {last} -> {}",
                res.kernel_value
            );
            last = res.kernel_value;
        }
    }

    #[test]
    fn kernel_profile_disk_p2_closed_form() {
        // The deepest path point sits at boundary distance 2^{-5}; the
        // orthonormal-series tail bound needs degree ≈ 150 there for 1e-3
        // relative accuracy, which the rule at resolution 76 integrates
        // exactly.
        let domain = Domain::unit_disk();
        let rule = disk_rule(76);
        let basis = TruncatedBasis::new(1, 150);
        let path: Vec<Vec<C64>> = (1..=5).map(|k| vec![c(1.0 - 0.5f64.powi(k), 0.0)]).collect();
        let profile = kernel_profile(
            &domain,
            2.0,
            &path,
            &basis,
            &rule,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(profile.strictly_increasing());
        for pp in &profile.points {
            let a = pp.point[0].re;
            let oracle = 1.0 / (PI * (1.0 - a * a).powi(2));
            assert_relative_eq!(pp.kernel_value, oracle, max_relative = 1e-3);
        }
    }

    #[test]
    fn profile_rejects_exterior_points() {
        let domain = Domain::unit_disk();
        let rule = disk_rule(8);
        let basis = TruncatedBasis::new(1, 5);
        let err = kernel_profile(
            &domain,
            2.0,
            &[vec![c(1.5, 0.0)]],
            &basis,
            &rule,
            &SolverOptions::default(),
        );
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn invalid_p_rejected() {
        let basis = TruncatedBasis::new(1, 4);
        let rule = disk_rule(8);
        let f = HoloFunction::one(basis.clone());
        assert!(pnorm(&f, 0.0, &rule, &Weight::zero()).is_err());
        assert!(pnorm(&f, -1.0, &rule, &Weight::zero()).is_err());
        assert!(p_extremal(
            &basis,
            &rule,
            &Weight::zero(),
            f64::NAN,
            &[c(0.0, 0.0)],
            &SolverOptions::default()
        )
        .is_err());
    }

    #[test]
    fn weight_minus_infinity_drops_nodes() {
        // φ = -∞ on a thin wedge: those nodes are dropped, the rest keep
        // their weights.
        let rule = disk_rule(8);
        let w = Weight::from_fn(|p: &[C64]| {
            if p[0].re > 0.99 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        });
        let eff = bind_weights(&rule, &w).unwrap();
        assert!(eff.iter().all(|&x| x.is_finite()));
        assert!(eff.iter().sum::<f64>() > 0.0);
    }
}
